//! Data-generating processes with known effects.
//!
//! Covariates are iid uniform(-1, 1). Optionally some columns are replaced
//! by noisy copies of a source column. The outcome is
//! `baseline(x) + cate_k(x) for the unit's arm k >= 1 + noise`. Missingness
//! is masked onto covariates after the outcome is drawn, so it never touches
//! the outcome or the treatment.
//!
//! Every per-unit draw uses its own stream keyed by (seed, component, unit),
//! so adding units never changes the draws of earlier units.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Clusters, CovariateTable, Dataset};
use crate::error::{Error, Result};
use crate::rng;

const COMPONENT_COVARIATES: u64 = 0;
const COMPONENT_TREATMENT: u64 = 1;
const COMPONENT_NOISE: u64 = 2;
const COMPONENT_MISSING: u64 = 3;
const COMPONENT_CLUSTER: u64 = 4;

/// Assignment mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PropensityRule {
    /// Fixed arm probabilities, summing to one.
    Fixed { probs: Vec<f64> },
    /// Two arms; `P(W = 1) = 1 / (1 + exp(-slope * x_column))`.
    Logistic { column: usize, slope: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineFn {
    Zero,
    Linear { column: usize, slope: f64 },
    Step { column: usize, threshold: f64, height: f64 },
    Sine { column: usize, amplitude: f64 },
}

impl BaselineFn {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BaselineFn::Zero => 0.0,
            BaselineFn::Linear { column, slope } => slope * x[column],
            BaselineFn::Step {
                column,
                threshold,
                height,
            } => {
                if x[column] > threshold {
                    height
                } else {
                    0.0
                }
            }
            BaselineFn::Sine { column, amplitude } => amplitude * (std::f64::consts::PI * x[column]).sin(),
        }
    }

    fn column(&self) -> Option<usize> {
        match *self {
            BaselineFn::Zero => None,
            BaselineFn::Linear { column, .. } | BaselineFn::Step { column, .. } | BaselineFn::Sine { column, .. } => {
                Some(column)
            }
        }
    }
}

/// Effect of one non-reference arm relative to arm 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CateFn {
    Constant { value: f64 },
    /// `height * 1[x_column > threshold]`.
    Step { column: usize, threshold: f64, height: f64 },
    /// `intercept + slope * x_column`.
    Linear { column: usize, intercept: f64, slope: f64 },
}

impl CateFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            CateFn::Constant { value } => value,
            CateFn::Step {
                column,
                threshold,
                height,
            } => {
                if x[column] > threshold {
                    height
                } else {
                    0.0
                }
            }
            CateFn::Linear {
                column,
                intercept,
                slope,
            } => intercept + slope * x[column],
        }
    }

    fn column(&self) -> Option<usize> {
        match *self {
            CateFn::Constant { .. } => None,
            CateFn::Step { column, .. } | CateFn::Linear { column, .. } => Some(column),
        }
    }
}

/// Replace `targets` with `x_source + N(0, noise_sd)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyCopies {
    pub source: usize,
    pub targets: Vec<usize>,
    pub noise_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub p: usize,
    pub arms: usize,
    pub propensity: PropensityRule,
    pub baseline: BaselineFn,
    /// One effect per arm `1..arms`.
    pub cate: Vec<CateFn>,
    pub noise_sd: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub cluster_count: Option<usize>,
    #[serde(default)]
    pub noisy_copies: Option<NoisyCopies>,
    #[serde(default)]
    pub seed: u64,
}

impl DgpSpec {
    /// Two randomised arms at 0.5, uniform covariates, zero baseline.
    pub fn binary(n: usize, p: usize, cate: CateFn, noise_sd: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            arms: 2,
            propensity: PropensityRule::Fixed { probs: vec![0.5, 0.5] },
            baseline: BaselineFn::Zero,
            cate: vec![cate],
            noise_sd,
            missing_rate: 0.0,
            cluster_count: None,
            noisy_copies: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("dgp: {m}")));
        if self.arms < 2 || self.cate.len() != self.arms - 1 {
            return bad(format!("{} arms need {} effect functions", self.arms, self.arms.saturating_sub(1)));
        }
        if self.p == 0 || self.n < 2 * self.arms {
            return bad("need p >= 1 and at least two units per arm".into());
        }
        let cols = self
            .cate
            .iter()
            .filter_map(CateFn::column)
            .chain(self.baseline.column())
            .chain(self.noisy_copies.iter().flat_map(|c| c.targets.iter().copied().chain([c.source])));
        for c in cols {
            if c >= self.p {
                return bad(format!("column {c} out of range for p = {}", self.p));
            }
        }
        match &self.propensity {
            PropensityRule::Fixed { probs } => {
                if probs.len() != self.arms
                    || probs.iter().any(|&q| !(q >= 0.0))
                    || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return bad("propensity probabilities must be one per arm and sum to 1".into());
                }
            }
            PropensityRule::Logistic { column, .. } => {
                if self.arms != 2 || *column >= self.p {
                    return bad("logistic propensity needs 2 arms and a valid column".into());
                }
            }
        }
        if !(self.noise_sd >= 0.0) || !(0.0..1.0).contains(&self.missing_rate) {
            return bad("noise_sd must be >= 0 and missing_rate in [0, 1)".into());
        }
        if self.cluster_count == Some(0) {
            return bad("cluster_count must be positive".into());
        }
        if let Some(c) = &self.noisy_copies {
            if c.targets.contains(&c.source) || !(c.noise_sd >= 0.0) {
                return bad("noisy copies must not overwrite their source".into());
            }
        }
        Ok(())
    }

    fn arm_probs(&self, x: &[f64]) -> Vec<f64> {
        match &self.propensity {
            PropensityRule::Fixed { probs } => probs.clone(),
            PropensityRule::Logistic { column, slope } => {
                let p1 = 1.0 / (1.0 + (-slope * x[*column]).exp());
                vec![1.0 - p1, p1]
            }
        }
    }

    /// `baseline(x) + cate_arm(x) + noise`.
    pub fn structural_outcome(&self, x: &[f64], arm: usize, noise: f64) -> f64 {
        let effect = if arm == 0 { 0.0 } else { self.cate[arm - 1].eval(x) };
        self.baseline.eval(x) + effect + noise
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub dataset: Dataset,
    /// `true_cate[k][i]`: effect of arm `k + 1` vs arm 0 for unit i.
    pub true_cate: Vec<Vec<f64>>,
    pub true_ate: Vec<f64>,
    /// Covariates before missingness masking.
    pub complete_covariates: CovariateTable,
    pub noise: Vec<f64>,
}

fn unit_rng(seed: u64, component: u64, unit: usize) -> rand_chacha::ChaCha8Rng {
    rng::stream(seed, &[rng::STREAM_SYNTHETIC, component, unit as u64])
}

pub fn generate(spec: &DgpSpec) -> Result<SyntheticTruth> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = unit_rng(spec.seed, COMPONENT_COVARIATES, i);
            let mut x: Vec<f64> = (0..p).map(|_| r.gen_range(-1.0..1.0)).collect();
            if let Some(c) = &spec.noisy_copies {
                for &t in &c.targets {
                    let e: f64 = StandardNormal.sample(&mut r);
                    x[t] = x[c.source] + c.noise_sd * e;
                }
            }
            x
        })
        .collect();

    let treatment: Vec<usize> = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let u: f64 = unit_rng(spec.seed, COMPONENT_TREATMENT, i).gen();
            let probs = spec.arm_probs(x);
            let mut acc = 0.0;
            for (k, q) in probs.iter().enumerate() {
                acc += q;
                if u < acc {
                    return k;
                }
            }
            probs.len() - 1
        })
        .collect();

    let noise: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut unit_rng(spec.seed, COMPONENT_NOISE, i));
            spec.noise_sd * e
        })
        .collect();
    let outcome: Vec<f64> = (0..n)
        .map(|i| spec.structural_outcome(&rows[i], treatment[i], noise[i]))
        .collect();
    let true_cate: Vec<Vec<f64>> = spec
        .cate
        .iter()
        .map(|f| rows.iter().map(|x| f.eval(x)).collect())
        .collect();
    let true_ate = true_cate
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();

    let complete_covariates = CovariateTable::from_rows(&rows)?;
    if spec.missing_rate > 0.0 {
        for (i, x) in rows.iter_mut().enumerate() {
            let mut r = unit_rng(spec.seed, COMPONENT_MISSING, i);
            for v in x.iter_mut() {
                if r.gen::<f64>() < spec.missing_rate {
                    *v = f64::NAN;
                }
            }
        }
    }
    let clusters = spec.cluster_count.map(|g| {
        let labels: Vec<String> = (0..n)
            .map(|i| format!("c{}", unit_rng(spec.seed, COMPONENT_CLUSTER, i).gen_range(0..g)))
            .collect();
        Clusters::from_labels(&labels)
    });
    let dataset = Dataset::new(outcome, treatment, clusters, CovariateTable::from_rows(&rows)?)?;
    Ok(SyntheticTruth {
        dataset,
        true_cate,
        true_ate,
        complete_covariates,
        noise,
    })
}

impl SyntheticTruth {
    /// The table in the delimited format `data::load_table` reads, with
    /// columns `y,w[,cluster],x1..xp`. Floats are written in shortest
    /// round-trip form, missing as empty cells.
    pub fn to_csv(&self) -> String {
        let d = &self.dataset;
        let x = d.covariates();
        let mut out = String::from("y,w");
        if d.clusters().is_some() {
            out.push_str(",cluster");
        }
        for name in x.names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..d.n_rows() {
            let _ = write!(out, "{},{}", d.outcome()[i], d.treatment()[i]);
            if let Some(c) = d.clusters() {
                let _ = write!(out, ",{}", c.labels[c.id_of[i]]);
            }
            for j in 0..x.n_cols() {
                let v = x.value(i, j);
                if v.is_nan() {
                    out.push(',');
                } else {
                    let _ = write!(out, ",{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Sidecar with the per-unit effects and their means.
    pub fn truth_json(&self, spec: &DgpSpec) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            spec: &'a DgpSpec,
            true_ate: &'a [f64],
            true_cate: &'a [Vec<f64>],
        }
        serde_json::to_string_pretty(&Sidecar {
            spec,
            true_ate: &self.true_ate,
            true_cate: &self.true_cate,
        })
        .expect("serialisable")
    }
}

/// Comparison of per-unit effect estimates with the truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleMetrics {
    pub mse: f64,
    /// Pearson correlation; `None` when either side is constant.
    pub correlation: Option<f64>,
    /// Share of units whose estimate has the sign of the true effect, over
    /// units with a nonzero true effect. `None` if there are none.
    pub sign_agreement: Option<f64>,
    /// Share of units on the same side of the true ATE as their true
    /// effect, over units whose true effect differs from the ATE.
    pub centered_sign_agreement: Option<f64>,
    /// Mean estimate minus true ATE.
    pub ate_bias: f64,
    /// Whether `interval` (if given) contains the true ATE.
    pub ci_covers: Option<bool>,
}

pub fn oracle_metrics(estimates: &[f64], true_cate: &[f64], interval: Option<(f64, f64)>) -> Result<OracleMetrics> {
    let n = estimates.len();
    if n != true_cate.len() || n == 0 {
        return Err(Error::Data(format!(
            "{n} estimates for {} true effects",
            true_cate.len()
        )));
    }
    if estimates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite estimate".into()));
    }
    let nf = n as f64;
    let mean_est = estimates.iter().sum::<f64>() / nf;
    let mean_true = true_cate.iter().sum::<f64>() / nf;
    let mse = estimates
        .iter()
        .zip(true_cate)
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (e, t) in estimates.iter().zip(true_cate) {
        let (a, b) = (e - mean_est, t - mean_true);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    let correlation = (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt());
    let agreement = |center: f64| {
        let (hits, total) = estimates
            .iter()
            .zip(true_cate)
            .filter(|(_, &t)| t != center)
            .fold((0usize, 0usize), |(h, c), (&e, &t)| {
                (h + usize::from((e - center).signum() == (t - center).signum()), c + 1)
            });
        (total > 0).then(|| hits as f64 / total as f64)
    };
    Ok(OracleMetrics {
        mse,
        correlation,
        sign_agreement: agreement(0.0),
        centered_sign_agreement: agreement(mean_true),
        ate_bias: mean_est - mean_true,
        ci_covers: interval.map(|(lo, hi)| lo <= mean_true && mean_true <= hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_spec(seed: u64) -> DgpSpec {
        DgpSpec::binary(
            500,
            4,
            CateFn::Step {
                column: 0,
                threshold: 0.0,
                height: 0.5,
            },
            1.0,
            seed,
        )
    }

    #[test]
    fn deterministic() {
        let a = generate(&step_spec(3)).unwrap();
        let b = generate(&step_spec(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.dataset, generate(&step_spec(4)).unwrap().dataset);
    }

    #[test]
    fn treated_fraction() {
        let mut spec = step_spec(11);
        spec.n = 10_000;
        let t = generate(&spec).unwrap();
        let frac = t.dataset.treatment().iter().filter(|&&w| w == 1).count() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn zero_effect_truth() {
        let spec = DgpSpec::binary(200, 3, CateFn::Constant { value: 0.0 }, 1.0, 1);
        let t = generate(&spec).unwrap();
        assert_eq!(t.true_ate, vec![0.0]);
        assert!(t.true_cate[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn structural_consistency_and_masking() {
        let mut spec = step_spec(5);
        spec.baseline = BaselineFn::Sine {
            column: 1,
            amplitude: 0.7,
        };
        spec.missing_rate = 0.3;
        let t = generate(&spec).unwrap();
        let d = &t.dataset;
        let x = &t.complete_covariates;
        let mut masked = 0;
        for i in 0..d.n_rows() {
            let row: Vec<f64> = (0..spec.p).map(|j| x.value(i, j)).collect();
            assert_eq!(d.outcome()[i], spec.structural_outcome(&row, d.treatment()[i], t.noise[i]));
            for j in 0..spec.p {
                let v = d.covariates().value(i, j);
                if v.is_nan() {
                    masked += 1;
                } else {
                    assert_eq!(v, row[j]);
                }
            }
        }
        let rate = masked as f64 / (500.0 * 4.0);
        assert!((rate - 0.3).abs() < 0.05);
        assert!(d.outcome().iter().all(|y| y.is_finite()));
    }

    #[test]
    fn noisy_copies_track_source() {
        let mut spec = step_spec(2);
        spec.noisy_copies = Some(NoisyCopies {
            source: 1,
            targets: vec![2, 3],
            noise_sd: 0.01,
        });
        let t = generate(&spec).unwrap();
        let x = t.dataset.covariates();
        for i in 0..50 {
            assert!((x.value(i, 2) - x.value(i, 1)).abs() < 0.1);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = step_spec(0);
        spec.cate.clear();
        assert!(generate(&spec).is_err());
        let mut spec = step_spec(0);
        spec.propensity = PropensityRule::Fixed { probs: vec![0.5, 0.6] };
        assert!(generate(&spec).is_err());
        let mut spec = step_spec(0);
        spec.baseline = BaselineFn::Linear { column: 9, slope: 1.0 };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn metrics_oracles() {
        let truth = [0.0, 0.5, 0.5, 0.0];
        let m = oracle_metrics(&truth, &truth, Some((0.2, 0.3))).unwrap();
        assert_eq!(m.mse, 0.0);
        assert!((m.correlation.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.ci_covers, Some(true));

        let shifted: Vec<f64> = truth.iter().map(|t| t + 1.0).collect();
        let m = oracle_metrics(&shifted, &truth, None).unwrap();
        assert!((m.ate_bias - 1.0).abs() < 1e-12);
        assert!((m.mse - 1.0).abs() < 1e-12);

        // best constant for a fair {0, 0.5} step
        let m = oracle_metrics(&[0.25; 4], &truth, None).unwrap();
        assert!((m.mse - 0.0625).abs() < 1e-12);
        assert_eq!(m.correlation, None);
        assert!(oracle_metrics(&[0.0; 3], &truth, None).is_err());
    }
}
