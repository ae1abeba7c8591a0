//! Honest causal forest on residualised data.
//!
//! For a contrast (t, c) restricted to units in arms t and c, with
//! `p = e_t / (e_t + e_c)` and `m = (e_t mu_t + e_c mu_c) / (e_t + e_c)`:
//!
//! ```text
//! W~ = 1{W = t} - p          Y~ = Y - m
//! beta = sum W~ Y~ / sum W~^2
//! rho_i = W~_i (Y~_i - W~_i beta) / (sum W~^2 / n)
//! ```
//!
//! Splits maximise `n_L n_R / n^2 (mean rho_L - mean rho_R)^2`; a child
//! without treatment variation (`sum W~^2 = 0`) is inadmissible. Leaf effect
//! is `beta` over the leaf's estimation units. With two arms `p = e_t` and
//! `m = sum_k e_k mu_k`.

use serde::{Deserialize, Serialize};

use super::split::{best_split, SplitCandidate, SplitScratch};
use super::tree::Objective;
use super::{fit_forest, Forest, ForestParams};
use crate::data::{CovariateTable, Dataset};
use crate::error::{Error, Result};
use crate::scores::{Contrast, NuisanceEstimates};

struct Causal<'a> {
    w: &'a [f64],
    y: &'a [f64],
    w2: Vec<f64>,
}

fn moments(units: &[u32], w: &[f64], y: &[f64]) -> (f64, f64) {
    units.iter().fold((0.0, 0.0), |(ww, wy), &u| {
        let (wi, yi) = (w[u as usize], y[u as usize]);
        (ww + wi * wi, wy + wi * yi)
    })
}

impl Objective for Causal<'_> {
    fn responses(&self, units: &[u32], out: &mut Vec<f64>) {
        out.clear();
        let (sww, swy) = moments(units, self.w, self.y);
        if sww <= 0.0 {
            out.resize(units.len(), 0.0);
            return;
        }
        let beta = swy / sww;
        let scale = sww / units.len() as f64;
        out.extend(units.iter().map(|&u| {
            let (wi, yi) = (self.w[u as usize], self.y[u as usize]);
            wi * (yi - wi * beta) / scale
        }));
    }

    fn admissibility(&self) -> Option<&[f64]> {
        Some(&self.w2)
    }

    fn estimate(&self, units: &[u32]) -> Option<f64> {
        let (sww, swy) = moments(units, self.w, self.y);
        (sww > 0.0).then(|| swy / sww)
    }
}

/// Node effect and per-unit pseudo-outcomes for aligned residuals.
pub fn causal_pseudo_outcomes(w_res: &[f64], y_res: &[f64]) -> (f64, Vec<f64>) {
    let units: Vec<u32> = (0..w_res.len() as u32).collect();
    let obj = Causal {
        w: w_res,
        y: y_res,
        w2: Vec::new(),
    };
    let mut rho = Vec::new();
    obj.responses(&units, &mut rho);
    (obj.estimate(&units).unwrap_or(f64::NAN), rho)
}

/// Best single causal split of `units` over all covariates. `w_res` and
/// `y_res` are indexed by row. The returned gain is the causal criterion
/// `n_L n_R / n^2 (mean rho_L - mean rho_R)^2`.
pub fn best_causal_split(
    x: &CovariateTable,
    units: &[usize],
    w_res: &[f64],
    y_res: &[f64],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let units: Vec<u32> = units.iter().map(|&u| u as u32).collect();
    let obj = Causal {
        w: w_res,
        y: y_res,
        w2: Vec::new(),
    };
    let mut rho = Vec::new();
    obj.responses(&units, &mut rho);
    let weights: Vec<f64> = units.iter().map(|&u| w_res[u as usize].powi(2)).collect();
    let features: Vec<usize> = (0..x.n_cols()).collect();
    best_split(
        x,
        &units,
        &rho,
        Some(&weights),
        &features,
        min_leaf,
        &mut SplitScratch::default(),
    )
    .map(|mut c| {
        c.gain /= units.len() as f64;
        c
    })
}

/// Treatment and outcome residuals for the units of a contrast.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Residuals {
    pub units: Vec<usize>,
    /// Indexed by row; zero outside `units`.
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

pub(crate) fn residualize(dataset: &Dataset, nuisance: &NuisanceEstimates, contrast: Contrast) -> Result<Residuals> {
    contrast.check(dataset.n_arms())?;
    nuisance.check(dataset)?;
    let (t, c) = (contrast.treated, contrast.control);
    let n = dataset.n_rows();
    let mut w = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut units = Vec::new();
    for i in 0..n {
        let arm = dataset.treatment()[i];
        if arm != t && arm != c {
            continue;
        }
        let (et, ec) = (nuisance.propensity(i, t), nuisance.propensity(i, c));
        let p = et / (et + ec);
        let m = (et * nuisance.mu(i, t) + ec * nuisance.mu(i, c)) / (et + ec);
        w[i] = if arm == t { 1.0 } else { 0.0 } - p;
        y[i] = dataset.outcome()[i] - m;
        units.push(i);
    }
    Ok(Residuals { units, w, y })
}

/// Causal forest for one binary contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalForest {
    pub forest: Forest,
    pub contrast: Contrast,
    /// Training units (those in the two contrast arms).
    pub units: Vec<usize>,
}

/// Out-of-bag CATE per dataset row. `tau_hat` is `NaN` where
/// `n_oob_trees` is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CateEstimates {
    pub tau_hat: Vec<f64>,
    pub n_oob_trees: Vec<usize>,
}

impl CateEstimates {
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.n_oob_trees.len())
            .filter(|&i| self.n_oob_trees[i] == 0)
            .collect()
    }

    /// Finite estimates only.
    pub fn finite(&self) -> Vec<f64> {
        self.tau_hat.iter().copied().filter(|v| v.is_finite()).collect()
    }
}

pub fn fit_causal_forest(
    dataset: &Dataset,
    nuisance: &NuisanceEstimates,
    contrast: Contrast,
    params: &ForestParams,
) -> Result<CausalForest> {
    let res = residualize(dataset, nuisance, contrast)?;
    let w2 = res.w.iter().map(|w| w * w).collect();
    let objective = Causal {
        w: &res.w,
        y: &res.y,
        w2,
    };
    let forest = fit_forest(dataset.covariates(), &res.units, &objective, params)?;
    Ok(CausalForest {
        forest,
        contrast,
        units: res.units,
    })
}

/// Out-of-bag CATE for every row of `dataset`. Rows outside the contrast
/// arms were never sampled, so every tree counts for them.
pub fn predict_cate(forest: &CausalForest, dataset: &Dataset) -> Result<CateEstimates> {
    let rows: Vec<usize> = (0..dataset.n_rows()).collect();
    let oob = forest.forest.predict_oob(dataset.covariates(), &rows)?;
    if let Some(&max) = forest.units.last() {
        if max >= dataset.n_rows() {
            return Err(Error::Data("dataset is smaller than the forest's training set".into()));
        }
    }
    Ok(CateEstimates {
        tau_hat: oob.value,
        n_oob_trees: oob.n_oob_trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_outcomes_match_formula() {
        let w = [0.5, -0.5, 0.5, -0.5];
        let y = [1.0, 0.0, 2.0, -1.0];
        let (beta, rho) = causal_pseudo_outcomes(&w, &y);
        // sum w y = 0.5 + 0 + 1 + 0.5 = 2, sum w^2 = 1
        assert!((beta - 2.0).abs() < 1e-12);
        let scale = 0.25;
        for i in 0..4 {
            let expect = w[i] * (y[i] - w[i] * beta) / scale;
            assert!((rho[i] - expect).abs() < 1e-12);
        }
        assert!(rho.iter().sum::<f64>().abs() < 1e-12);
    }
}
