use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::CateEstimates;
use crate::scores::AteEstimate;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Histogram layout: a fixed bin count over the data range, or a fixed bin
/// width anchored at multiples of the width. Setting both is an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    /// Defaults to 30 when neither key is set.
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default)]
    pub bin_width: Option<f64>,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bins: Some(30),
            bin_width: None,
        }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.bins, self.bin_width) {
            (Some(_), Some(_)) => Err(Error::Config("histogram: set bins or bin_width, not both".into())),
            (Some(0), None) => Err(Error::Config("histogram: bins must be at least 1".into())),
            (None, Some(w)) if !(w > 0.0 && w.is_finite()) => {
                Err(Error::Config("histogram: bin_width must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `bin_lo,bin_hi,count` rows over the finite CATE estimates, followed by
/// `# name,value` footer lines for the ATE, its standard error, the 95%
/// interval and the zero reference line. Bins are half-open except the
/// last, which includes its upper edge.
pub fn emit_histogram(cate: &CateEstimates, ate: &AteEstimate, spec: &HistogramSpec) -> Result<String> {
    spec.validate()?;
    let values = cate.finite();
    if values.is_empty() {
        return Err(Error::Data("histogram: no finite CATE estimates".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (start, width, n_bins) = match (spec.bins, spec.bin_width) {
        (_, Some(w)) => {
            let start = (lo / w).floor() * w;
            let n = (((hi - start) / w).floor() as usize + 1).max(1);
            (start, w, n)
        }
        (bins, None) => {
            let n = bins.unwrap_or(30);
            if hi > lo {
                (lo, (hi - lo) / n as f64, n)
            } else {
                (lo, 0.0, 1)
            }
        }
    };
    let mut counts = vec![0usize; n_bins];
    for &v in &values {
        let b = if width > 0.0 {
            (((v - start) / width).floor().max(0.0) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (b, c) in counts.iter().enumerate() {
        let bin_lo = start + b as f64 * width;
        let bin_hi = if b + 1 == n_bins && spec.bin_width.is_none() {
            hi
        } else {
            start + (b + 1) as f64 * width
        };
        let _ = writeln!(out, "{bin_lo},{bin_hi},{c}");
    }
    let (ci_lo, ci_hi) = ate.interval(Z95);
    let _ = writeln!(out, "# ate,{}", ate.estimate);
    let _ = writeln!(out, "# se,{}", ate.se);
    let _ = writeln!(out, "# ci_lo,{ci_lo}");
    let _ = writeln!(out, "# ci_hi,{ci_hi}");
    let _ = writeln!(out, "# zero,0");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::Contrast;

    fn ate() -> AteEstimate {
        AteEstimate {
            contrast: Contrast::new(1, 0),
            estimate: 0.1,
            se: 0.05,
            n: 10,
        }
    }

    fn cate(v: Vec<f64>) -> CateEstimates {
        CateEstimates {
            n_oob_trees: vec![1; v.len()],
            tau_hat: v,
        }
    }

    fn rows(table: &str) -> Vec<(f64, f64, usize)> {
        table
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn constant_values_fill_one_bin() {
        let t = emit_histogram(&cate(vec![0.2; 7]), &ate(), &HistogramSpec::default()).unwrap();
        let r = rows(&t);
        assert_eq!(r.iter().filter(|b| b.2 > 0).count(), 1);
        assert_eq!(r.iter().map(|b| b.2).sum::<usize>(), 7);
        assert!(t.contains("# ate,0.1\n# se,0.05\n"));
        assert!(t.ends_with("# zero,0\n"));
    }

    #[test]
    fn counts_conserve_and_edges_tile() {
        let v: Vec<f64> = (0..101).map(|i| (i as f64 * 0.37).sin()).collect();
        for spec in [
            HistogramSpec::default(),
            HistogramSpec {
                bins: None,
                bin_width: Some(0.25),
            },
        ] {
            let r = rows(&emit_histogram(&cate(v.clone()), &ate(), &spec).unwrap());
            assert_eq!(r.iter().map(|b| b.2).sum::<usize>(), 101);
            for w in r.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
        }
    }

    #[test]
    fn nan_estimates_are_skipped() {
        let r = rows(&emit_histogram(&cate(vec![0.0, f64::NAN, 1.0]), &ate(), &HistogramSpec::default()).unwrap());
        assert_eq!(r.iter().map(|b| b.2).sum::<usize>(), 2);
        assert!(emit_histogram(&cate(vec![f64::NAN]), &ate(), &HistogramSpec::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(HistogramSpec { bins: Some(0), bin_width: None }.validate().is_err());
        assert!(HistogramSpec { bins: Some(3), bin_width: Some(0.1) }.validate().is_err());
        assert!(HistogramSpec { bins: None, bin_width: None }.validate().is_ok());
    }
}
