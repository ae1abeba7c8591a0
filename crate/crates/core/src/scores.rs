//! Cross-fitted nuisances and AIPW doubly robust scores.
//!
//! For a contrast (t, c) each unit's score is
//!
//! ```text
//! G_i = mu_t(x_i) - mu_c(x_i)
//!     + 1{W_i = t} (Y_i - mu_t(x_i)) / e_t(x_i)
//!     - 1{W_i = c} (Y_i - mu_c(x_i)) / e_c(x_i)
//! ```
//!
//! and the AIPW average treatment effect is the mean of the scores. Units in
//! other arms contribute only the regression term.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::forest::{fit_regression_forest_on, ForestParams};
use crate::rng;

/// Default propensity floor.
pub const DEFAULT_CLIP: f64 = 0.01;

/// Target arm versus baseline arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Contrast {
    pub treated: usize,
    pub control: usize,
}

impl Contrast {
    pub fn new(treated: usize, control: usize) -> Self {
        Self { treated, control }
    }

    pub fn reversed(self) -> Self {
        Self::new(self.control, self.treated)
    }

    pub(crate) fn check(&self, n_arms: usize) -> Result<()> {
        if self.treated == self.control {
            return Err(Error::InvalidParameter(format!(
                "contrast compares arm {} with itself",
                self.treated
            )));
        }
        if self.treated >= n_arms || self.control >= n_arms {
            return Err(Error::Data(format!(
                "contrast {self} references an arm outside 0..{n_arms}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "arm{}-arm{}", self.treated, self.control)
    }
}

/// Per-unit cross-fitted propensities and arm-wise outcome means, stored
/// row-major (`n_rows x n_arms`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimates {
    propensity: Vec<f64>,
    mu: Vec<f64>,
    n_arms: usize,
    pub clip: f64,
}

impl NuisanceEstimates {
    /// Builds estimates from known values, clipping and renormalising the
    /// propensity rows.
    pub fn from_parts(mut propensity: Vec<Vec<f64>>, mu: Vec<Vec<f64>>, clip: f64) -> Result<Self> {
        let n_arms = propensity.first().map_or(0, Vec::len);
        if propensity.len() != mu.len()
            || propensity.iter().chain(mu.iter()).any(|r| r.len() != n_arms)
        {
            return Err(Error::Data("propensity and outcome tables must be n x K".into()));
        }
        for row in &mut propensity {
            clip_and_renormalize(row, clip)?;
        }
        Ok(Self {
            propensity: propensity.concat(),
            mu: mu.concat(),
            n_arms,
            clip,
        })
    }

    #[inline]
    pub fn propensity(&self, i: usize, arm: usize) -> f64 {
        self.propensity[i * self.n_arms + arm]
    }

    #[inline]
    pub fn mu(&self, i: usize, arm: usize) -> f64 {
        self.mu[i * self.n_arms + arm]
    }

    pub fn propensity_row(&self, i: usize) -> &[f64] {
        &self.propensity[i * self.n_arms..(i + 1) * self.n_arms]
    }

    pub fn n_rows(&self) -> usize {
        if self.n_arms == 0 {
            0
        } else {
            self.mu.len() / self.n_arms
        }
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub(crate) fn check(&self, dataset: &Dataset) -> Result<()> {
        if self.n_rows() != dataset.n_rows() || self.n_arms != dataset.n_arms() {
            return Err(Error::Data(format!(
                "nuisance estimates are {}x{}, dataset is {}x{}",
                self.n_rows(),
                self.n_arms,
                dataset.n_rows(),
                dataset.n_arms()
            )));
        }
        Ok(())
    }
}

/// Clamps each entry of a propensity row to `[clip, 1 - clip]`.
pub fn clip_row(row: &mut [f64], clip: f64) {
    for e in row.iter_mut() {
        *e = e.clamp(clip, 1.0 - clip);
    }
}

/// Clips, then rescales the row to sum to one while keeping every entry at
/// or above the floor: entries that would drop below `clip` are pinned
/// there and the remaining mass is shared among the others.
pub fn clip_and_renormalize(row: &mut [f64], clip: f64) -> Result<()> {
    let k = row.len();
    if !(clip > 0.0 && clip < 0.5) || k as f64 * clip > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "clip {clip} must lie in (0, 0.5) with {k} * clip <= 1"
        )));
    }
    if row.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical("non-finite propensity".into()));
    }
    clip_row(row, clip);
    let mut pinned = vec![false; k];
    loop {
        let free_mass: f64 = (0..k).filter(|&j| !pinned[j]).map(|j| row[j]).sum();
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let target = 1.0 - n_pinned as f64 * clip;
        let scale = target / free_mass;
        let mut newly = false;
        for j in 0..k {
            if !pinned[j] && row[j] * scale < clip {
                pinned[j] = true;
                row[j] = clip;
                newly = true;
            }
        }
        if !newly {
            for j in 0..k {
                if !pinned[j] {
                    row[j] *= scale;
                }
            }
            return Ok(());
        }
    }
}

/// Cross-fits K one-vs-rest propensity forests and K arm-wise outcome
/// forests per fold: models trained on the units outside fold f predict the
/// units in fold f.
///
/// Each (fold, arm, model) task uses its own seed derived from
/// `forest_params.seed`, so the result does not depend on scheduling.
pub fn crossfit_nuisances(
    dataset: &Dataset,
    plan: &SplitPlan,
    forest_params: &ForestParams,
    clip: f64,
) -> Result<NuisanceEstimates> {
    let n = dataset.n_rows();
    let k_arms = dataset.n_arms();
    if plan.fold_of.len() != n {
        return Err(Error::Data(format!(
            "split plan covers {} units, dataset has {n}",
            plan.fold_of.len()
        )));
    }
    if !(clip > 0.0 && clip < 0.5) || k_arms as f64 * clip > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "clip {clip} must lie in (0, 0.5) with {k_arms} * clip <= 1"
        )));
    }
    let x = dataset.covariates();
    let w = dataset.treatment();
    let y = dataset.outcome();
    let indicators: Vec<Vec<f64>> = (0..k_arms)
        .map(|k| w.iter().map(|&a| if a == k { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut folds = Vec::with_capacity(plan.k_folds);
    for f in 0..plan.k_folds {
        let train = plan.fold_complement(f);
        let by_arm: Vec<Vec<usize>> = (0..k_arms)
            .map(|k| train.iter().copied().filter(|&i| w[i] == k).collect())
            .collect();
        if let Some(k) = by_arm.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!(
                "arm {k} has no units outside fold {f}; cannot cross-fit"
            )));
        }
        folds.push((plan.fold_units(f), train, by_arm));
    }

    // (fold, arm, 0 = propensity | 1 = outcome)
    let tasks: Vec<(usize, usize, usize)> = (0..plan.k_folds)
        .flat_map(|f| (0..k_arms).flat_map(move |k| [(f, k, 0), (f, k, 1)]))
        .collect();
    let predictions: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(f, k, kind)| {
            let params = ForestParams {
                seed: rng::derive_seed(
                    forest_params.seed,
                    &[rng::STREAM_NUISANCE, f as u64, k as u64, kind as u64],
                ),
                ..forest_params.clone()
            };
            let (test, train, by_arm) = &folds[f];
            let forest = if kind == 0 {
                fit_regression_forest_on(x, &indicators[k], train, &params)
            } else {
                fit_regression_forest_on(x, y, &by_arm[k], &params)
            }
            .map_err(|e| match e {
                Error::Data(m) => Error::Data(format!("fold {f}, arm {k}: {m}")),
                other => other,
            })?;
            forest.predict(x, test)
        })
        .collect::<Result<_>>()?;

    let mut propensity = vec![vec![0.0; k_arms]; n];
    let mut mu = vec![vec![0.0; k_arms]; n];
    for (&(f, k, kind), pred) in tasks.iter().zip(&predictions) {
        for (&i, &v) in folds[f].0.iter().zip(pred) {
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "nuisance prediction undefined for unit {i} (fold {f}, arm {k})"
                )));
            }
            if kind == 0 {
                propensity[i][k] = v;
            } else {
                mu[i][k] = v;
            }
        }
    }
    NuisanceEstimates::from_parts(propensity, mu, clip)
}

/// Doubly robust scores for one contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrScoreSet {
    pub contrast: Contrast,
    pub gamma: Vec<f64>,
}

impl DrScoreSet {
    pub fn mean(&self) -> f64 {
        self.gamma.iter().sum::<f64>() / self.gamma.len() as f64
    }
}

pub fn dr_scores(dataset: &Dataset, nuisance: &NuisanceEstimates, contrast: Contrast) -> Result<DrScoreSet> {
    contrast.check(dataset.n_arms())?;
    nuisance.check(dataset)?;
    let (t, c) = (contrast.treated, contrast.control);
    let gamma = (0..dataset.n_rows())
        .into_par_iter()
        .map(|i| {
            let y = dataset.outcome()[i];
            let arm = dataset.treatment()[i];
            let (mt, mc) = (nuisance.mu(i, t), nuisance.mu(i, c));
            let mut g = mt - mc;
            if arm == t {
                g += (y - mt) / nuisance.propensity(i, t);
            } else if arm == c {
                g -= (y - mc) / nuisance.propensity(i, c);
            }
            g
        })
        .collect();
    Ok(DrScoreSet { contrast, gamma })
}

/// One score set per non-baseline arm, all sharing `nuisance`.
pub fn multi_arm_scores(dataset: &Dataset, nuisance: &NuisanceEstimates, baseline: usize) -> Result<Vec<DrScoreSet>> {
    let k = dataset.n_arms();
    if k < 3 {
        return Err(Error::InvalidParameter(format!(
            "multi-arm scores need at least 3 arms, dataset has {k}; use dr_scores"
        )));
    }
    if baseline >= k {
        return Err(Error::Data(format!("baseline arm {baseline} absent (arms 0..{k})")));
    }
    (0..k)
        .filter(|&a| a != baseline)
        .map(|a| dr_scores(dataset, nuisance, Contrast::new(a, baseline)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub contrast: Contrast,
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
}

impl AteEstimate {
    /// `estimate +- z * se`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.estimate - z * self.se, self.estimate + z * self.se)
    }
}

/// Mean of the scores with its standard error: `sd / sqrt(n)` without
/// clusters, or the cluster-robust form
/// `sqrt(G / (G - 1) * sum_g (sum_{i in g} (G_i - mean))^2) / n`
/// when cluster ids are given.
pub fn dr_ate(scores: &DrScoreSet, cluster_id: Option<&[usize]>) -> Result<AteEstimate> {
    let g = &scores.gamma;
    let n = g.len();
    if n < 2 {
        return Err(Error::Data(format!("{n} scores; standard error needs at least 2")));
    }
    let mean = scores.mean();
    let se = match cluster_id {
        None => {
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        }
        Some(ids) => {
            if ids.len() != n {
                return Err(Error::Data(format!("{} cluster ids for {n} scores", ids.len())));
            }
            let n_clusters = ids.iter().max().map_or(0, |m| m + 1);
            let mut sums = vec![0.0; n_clusters];
            let mut present = vec![false; n_clusters];
            for (&c, v) in ids.iter().zip(g) {
                sums[c] += v - mean;
                present[c] = true;
            }
            let groups = present.iter().filter(|&&p| p).count();
            if groups < 2 {
                return Err(Error::Data("cluster-robust standard error needs at least 2 clusters".into()));
            }
            let ss: f64 = sums.iter().map(|s| s * s).sum();
            (groups as f64 / (groups - 1) as f64 * ss).sqrt() / n as f64
        }
    };
    if !mean.is_finite() || !se.is_finite() {
        return Err(Error::Numerical("non-finite ATE estimate".into()));
    }
    Ok(AteEstimate {
        contrast: scores.contrast,
        estimate: mean,
        se,
        n,
    })
}

/// `contrast,estimate,se,n` table.
pub fn ate_table_csv<S: AsRef<str>>(rows: &[(S, AteEstimate)]) -> String {
    let mut out = String::from("contrast,estimate,se,n\n");
    for (label, ate) in rows {
        let _ = writeln!(out, "{},{},{},{}", label.as_ref(), ate.estimate, ate.se, ate.n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateTable;

    fn dataset(y: Vec<f64>, w: Vec<usize>) -> Dataset {
        let n = y.len();
        let cov = CovariateTable::new(vec!["x".into()], vec![(0..n).map(|i| i as f64).collect()]).unwrap();
        Dataset::new(y, w, None, cov).unwrap()
    }

    #[test]
    fn clipping_rule() {
        let mut row = [0.001, 0.999];
        clip_row(&mut row, 0.01);
        assert_eq!(row, [0.01, 0.99]);
        let mut row = [0.001, 0.999];
        clip_and_renormalize(&mut row, 0.01).unwrap();
        assert_eq!(row[0], 0.01);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalization_keeps_floor() {
        // one-vs-rest rows can sum well above one
        let mut row = [0.005, 0.6, 0.6];
        clip_and_renormalize(&mut row, 0.05).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&e| e >= 0.05 - 1e-15 && e <= 0.95));
        assert_eq!(row[0], 0.05);
        assert!((row[1] - row[2]).abs() < 1e-15);

        let mut row = [0.1, 0.1, 0.1];
        clip_and_renormalize(&mut row, 0.01).unwrap();
        assert!(row.iter().all(|&e| (e - 1.0 / 3.0).abs() < 1e-12));

        assert!(clip_and_renormalize(&mut [0.5, 0.5], 0.5).is_err());
        assert!(clip_and_renormalize(&mut [0.2; 5], 0.3).is_err());
    }

    #[test]
    fn score_formula() {
        let d = dataset(vec![1.0, 0.0, 0.0, 0.0], vec![1, 1, 0, 0]);
        let nu = NuisanceEstimates::from_parts(vec![vec![0.5, 0.5]; 4], vec![vec![0.0, 0.0]; 4], 0.01).unwrap();
        let s = dr_scores(&d, &nu, Contrast::new(1, 0)).unwrap();
        assert_eq!(s.gamma[0], 2.0);
    }

    #[test]
    fn antisymmetry_and_identity() {
        let d = dataset(vec![1.0, 0.3, -0.2, 2.0, 0.7, 0.1], vec![0, 1, 2, 0, 1, 2]);
        let prop = vec![vec![0.2, 0.5, 0.3]; 6];
        let mu = (0..6).map(|i| vec![i as f64 * 0.1, 0.5, -0.3]).collect();
        let nu = NuisanceEstimates::from_parts(prop, mu, 0.01).unwrap();
        let a = dr_scores(&d, &nu, Contrast::new(1, 0)).unwrap();
        let b = dr_scores(&d, &nu, Contrast::new(0, 1)).unwrap();
        for (x, y) in a.gamma.iter().zip(&b.gamma) {
            assert!((x + y).abs() < 1e-12);
        }
        // arm-2 units only carry the regression term
        assert!((a.gamma[2] - (0.5 - 0.2)).abs() < 1e-12);
        let ate = dr_ate(&a, None).unwrap();
        assert!((ate.estimate - a.mean()).abs() < 1e-10);
        assert!(dr_scores(&d, &nu, Contrast::new(1, 1)).is_err());
        assert!(dr_scores(&d, &nu, Contrast::new(3, 1)).is_err());
    }

    #[test]
    fn ate_standard_errors() {
        let s = DrScoreSet {
            contrast: Contrast::new(1, 0),
            gamma: vec![1.0, 2.0, 3.0],
        };
        let ate = dr_ate(&s, None).unwrap();
        assert_eq!(ate.estimate, 2.0);
        assert!((ate.se - 1.0 / 3f64.sqrt()).abs() < 1e-12);

        let flat = DrScoreSet {
            contrast: Contrast::new(1, 0),
            gamma: vec![0.7; 10],
        };
        let ate = dr_ate(&flat, None).unwrap();
        assert!((ate.estimate - 0.7).abs() < 1e-12 && ate.se < 1e-12);

        let one = DrScoreSet {
            contrast: Contrast::new(1, 0),
            gamma: vec![1.0],
        };
        assert!(dr_ate(&one, None).is_err());

        // clusters {0,1}, {2,3}: deviations -1.5,-0.5 | 0.5,1.5 -> sums -2, 2
        let s = DrScoreSet {
            contrast: Contrast::new(1, 0),
            gamma: vec![1.0, 2.0, 3.0, 4.0],
        };
        let ate = dr_ate(&s, Some(&[0, 0, 1, 1])).unwrap();
        assert!((ate.se - (2.0f64 * 8.0).sqrt() / 4.0).abs() < 1e-12);
        assert!(dr_ate(&s, Some(&[0, 0, 0, 0])).is_err());
    }

    #[test]
    fn multi_arm_preconditions() {
        let d = dataset(vec![0.0; 4], vec![0, 1, 0, 1]);
        let nu = NuisanceEstimates::from_parts(vec![vec![0.5, 0.5]; 4], vec![vec![0.0, 0.0]; 4], 0.01).unwrap();
        assert!(multi_arm_scores(&d, &nu, 0).is_err());

        let d = dataset(vec![0.0; 10], vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
        let nu = NuisanceEstimates::from_parts(vec![vec![0.2; 5]; 10], vec![vec![0.0; 5]; 10], 0.01).unwrap();
        let sets = multi_arm_scores(&d, &nu, 1).unwrap();
        let contrasts: Vec<_> = sets.iter().map(|s| s.contrast).collect();
        assert_eq!(
            contrasts,
            vec![Contrast::new(0, 1), Contrast::new(2, 1), Contrast::new(3, 1), Contrast::new(4, 1)]
        );
        assert!(multi_arm_scores(&d, &nu, 5).is_err());
    }

    #[test]
    fn ate_table_format() {
        let ate = AteEstimate {
            contrast: Contrast::new(1, 0),
            estimate: 0.086,
            se: 0.03,
            n: 10,
        };
        assert_eq!(ate_table_csv(&[("any-vs-control", ate)]), "contrast,estimate,se,n\nany-vs-control,0.086,0.03,10\n");
    }
}
