//! Exhaustive split search shared by regression, causal and distilled trees.
//!
//! Candidate thresholds are midpoints between consecutive distinct observed
//! values; a unit goes left when `value < threshold`. Each threshold is tried
//! with missing values sent left and then right. Ties keep the first
//! candidate in (column, threshold, missing direction) order.

use serde::{Deserialize, Serialize};

use crate::data::CovariateTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    pub threshold: f64,
    pub missing_goes: Side,
}

impl Split {
    #[inline]
    pub fn goes_left(&self, value: f64) -> bool {
        if value.is_nan() {
            self.missing_goes == Side::Left
        } else {
            value < self.threshold
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub split: Split,
    /// `n_L * n_R / n * (mean_L - mean_R)^2` of the responses, i.e. the drop
    /// in sum of squares.
    pub gain: f64,
    pub n_left: usize,
    pub n_right: usize,
}

#[derive(Default)]
struct Acc {
    n: usize,
    sum: f64,
    weight: f64,
}

impl Acc {
    fn add(&mut self, r: f64, w: f64) {
        self.n += 1;
        self.sum += r;
        self.weight += w;
    }
}

/// Scratch space reused across nodes of one tree.
#[derive(Default)]
pub(crate) struct SplitScratch {
    sorted: Vec<(f64, f64, f64)>,
}

/// Relative gain difference within which candidates count as tied, so
/// rounding in the running sums cannot override the tie-break order.
const TIE_TOLERANCE: f64 = 1e-10;

/// Finds the best split of `units` over `features` (searched in the given
/// order, which callers keep ascending).
///
/// `responses[k]` belongs to `units[k]`. When `weights` is given, a child is
/// admissible only if its summed weight is positive. Returns `None` when no
/// admissible split with positive gain exists.
pub(crate) fn best_split(
    x: &CovariateTable,
    units: &[u32],
    responses: &[f64],
    weights: Option<&[f64]>,
    features: &[usize],
    min_leaf: usize,
    scratch: &mut SplitScratch,
) -> Option<SplitCandidate> {
    let n = units.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mut best: Option<SplitCandidate> = None;
    for &col in features {
        let column = x.column(col);
        let sorted = &mut scratch.sorted;
        sorted.clear();
        let mut missing = Acc::default();
        for (k, &u) in units.iter().enumerate() {
            let v = column[u as usize];
            let w = weights.map_or(1.0, |w| w[k]);
            if v.is_nan() {
                missing.add(responses[k], w);
            } else {
                sorted.push((v, responses[k], w));
            }
        }
        if sorted.len() < 2 {
            continue;
        }
        sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let total_sum: f64 = sorted.iter().map(|s| s.1).sum();
        let total_weight: f64 = sorted.iter().map(|s| s.2).sum();
        let n_present = sorted.len();
        let directions: &[Side] = if missing.n > 0 {
            &[Side::Left, Side::Right]
        } else {
            &[Side::Left]
        };

        let mut prefix = Acc::default();
        for i in 0..n_present - 1 {
            let (v, r, w) = sorted[i];
            prefix.add(r, w);
            let next = sorted[i + 1].0;
            if !(v < next) {
                continue;
            }
            for &dir in directions {
                let (nl, sl, wl, nr, sr, wr) = match dir {
                    Side::Left => (
                        prefix.n + missing.n,
                        prefix.sum + missing.sum,
                        prefix.weight + missing.weight,
                        n_present - prefix.n,
                        total_sum - prefix.sum,
                        total_weight - prefix.weight,
                    ),
                    Side::Right => (
                        prefix.n,
                        prefix.sum,
                        prefix.weight,
                        n_present - prefix.n + missing.n,
                        total_sum - prefix.sum + missing.sum,
                        total_weight - prefix.weight + missing.weight,
                    ),
                };
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                if weights.is_some() && !(wl > 0.0 && wr > 0.0) {
                    continue;
                }
                let diff = sl / nl as f64 - sr / nr as f64;
                let gain = (nl as f64) * (nr as f64) / n as f64 * diff * diff;
                if gain > 0.0 && best.is_none_or(|b| gain > b.gain * (1.0 + TIE_TOLERANCE)) {
                    best = Some(SplitCandidate {
                        split: Split {
                            column: col,
                            threshold: midpoint(v, next),
                            missing_goes: dir,
                        },
                        gain,
                        n_left: nl,
                        n_right: nr,
                    });
                }
            }
        }
    }
    best
}

/// Midpoint strictly above `lo` and at most `hi`.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}
