//! Honest tree ensembles.
//!
//! Every tree draws a subsample without replacement, splits it into a
//! split-selection part and an estimation part, chooses splits on the first
//! and computes node values from the second. Predictions for a unit that
//! fell in an empty leaf fall back to the closest ancestor with an estimate.

mod causal;
pub mod split;
pub mod tree;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use causal::{
    best_causal_split, causal_pseudo_outcomes, fit_causal_forest, predict_cate, CateEstimates,
    CausalForest,
};
pub use split::{Side, Split, SplitCandidate};
pub use tree::{NodeKind, Tree, TreeNode};

use crate::data::CovariateTable;
use crate::error::{Error, Result};
use crate::rng;
use tree::{grow, GrowSettings, Objective, Regression};

/// Ensemble settings. `mtry = None` resolves to `min(ceil(sqrt(p) + 20), p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    pub honesty_fraction: f64,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10_000,
            subsample_fraction: 0.5,
            honesty_fraction: 0.5,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_trees(n_trees: usize) -> Self {
        Self {
            n_trees,
            ..Self::default()
        }
    }

    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((p as f64).sqrt() + 20.0).ceil() as usize)
            .min(p)
            .max(1)
    }

    fn subsample_sizes(&self, n: usize) -> (usize, usize) {
        let n_sub = ((n as f64 * self.subsample_fraction).round() as usize).clamp(1, n);
        let n_split = (n_sub as f64 * self.honesty_fraction).round() as usize;
        (n_split, n_sub - n_split)
    }

    /// Checks the parameters for a training set of `n` units.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!("subsample_fraction {} not in (0, 1]", self.subsample_fraction));
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return bad(format!("honesty_fraction {} not in (0, 1)", self.honesty_fraction));
        }
        if self.min_leaf == 0 || self.mtry == Some(0) || self.max_depth == Some(0) {
            return bad("min_leaf, mtry and max_depth must be positive".into());
        }
        if n < 2 * self.min_leaf {
            return Err(Error::Data(format!(
                "{n} training units is fewer than 2 * min_leaf = {}",
                2 * self.min_leaf
            )));
        }
        let (n_split, n_est) = self.subsample_sizes(n);
        if n_split < self.min_leaf || n_est < self.min_leaf {
            return Err(Error::Data(format!(
                "{n} units give {n_split} split / {n_est} estimation units per tree, below min_leaf = {}",
                self.min_leaf
            )));
        }
        Ok(())
    }
}

/// A fitted ensemble of honest trees over a fixed covariate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    params: ForestParams,
    trees: Vec<Tree>,
    n_cols: usize,
}

/// Out-of-bag predictions; `value` is `NaN` where `n_oob_trees` is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct OobPredictions {
    pub value: Vec<f64>,
    pub n_oob_trees: Vec<usize>,
}

impl OobPredictions {
    /// Positions with no out-of-bag tree.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.n_oob_trees.len())
            .filter(|&i| self.n_oob_trees[i] == 0)
            .collect()
    }
}

pub(crate) fn fit_forest<O: Objective>(
    x: &CovariateTable,
    rows: &[usize],
    objective: &O,
    params: &ForestParams,
) -> Result<Forest> {
    params.validate(rows.len())?;
    let (n_split, n_est) = params.subsample_sizes(rows.len());
    let settings = GrowSettings {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry: params.resolved_mtry(x.n_cols()),
    };
    let pool: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, &[rng::STREAM_TREES, t as u64]);
            let mut units = pool.clone();
            let (drawn, _) = units.partial_shuffle(&mut rng, n_split + n_est);
            let split_units = drawn[..n_split].to_vec();
            let estimation_units = drawn[n_split..].to_vec();
            grow(x, split_units, estimation_units, objective, settings, &mut rng)
        })
        .collect();
    Ok(Forest {
        params: params.clone(),
        trees,
        n_cols: x.n_cols(),
    })
}

/// Honest regression forest of `y` on every row of `x`.
pub fn fit_regression_forest(x: &CovariateTable, y: &[f64], params: &ForestParams) -> Result<Forest> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_regression_forest_on(x, y, &rows, params)
}

/// Honest regression forest trained on `rows` only. `y` is indexed by row.
pub fn fit_regression_forest_on(
    x: &CovariateTable,
    y: &[f64],
    rows: &[usize],
    params: &ForestParams,
) -> Result<Forest> {
    if y.len() != x.n_rows() {
        return Err(Error::Data(format!(
            "response has {} values for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some(&r) = rows.iter().find(|&&r| !y[r].is_finite()) {
        return Err(Error::Data(format!("non-finite response at row {r}")));
    }
    fit_forest(x, rows, &Regression { y }, params)
}

/// Best single variance-reduction split of `units` over all covariates.
/// `y` is indexed by row; the gain is the drop in sum of squares.
pub fn best_variance_split(
    x: &CovariateTable,
    units: &[usize],
    y: &[f64],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let units: Vec<u32> = units.iter().map(|&u| u as u32).collect();
    let responses: Vec<f64> = units.iter().map(|&u| y[u as usize]).collect();
    let features: Vec<usize> = (0..x.n_cols()).collect();
    split::best_split(
        x,
        &units,
        &responses,
        None,
        &features,
        min_leaf,
        &mut split::SplitScratch::default(),
    )
}

/// Settings for a single (non-honest) CART regression tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Covariates tried per node; `None` tries all.
    pub mtry: Option<usize>,
}

/// CART regression tree on `rows`: the same units choose splits and give
/// node means. `y` is indexed by row.
pub fn fit_regression_tree(
    x: &CovariateTable,
    y: &[f64],
    rows: &[usize],
    params: TreeParams,
    seed: u64,
) -> Result<Tree> {
    if params.min_leaf == 0 {
        return Err(Error::InvalidParameter("min_leaf must be positive".into()));
    }
    if rows.len() < 2 * params.min_leaf {
        return Err(Error::Data(format!(
            "{} units is fewer than 2 * min_leaf = {}",
            rows.len(),
            2 * params.min_leaf
        )));
    }
    if let Some(&r) = rows.iter().find(|&&r| !y[r].is_finite()) {
        return Err(Error::Data(format!("non-finite response at row {r}")));
    }
    let units: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    let settings = GrowSettings {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry: params.mtry.unwrap_or(x.n_cols()),
    };
    let mut rng = rng::stream(seed, &[rng::STREAM_TREES]);
    Ok(grow(x, units.clone(), units, &Regression { y }, settings, &mut rng))
}

impl Forest {
    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn check_table(&self, x: &CovariateTable) -> Result<()> {
        if x.n_cols() != self.n_cols {
            return Err(Error::Data(format!(
                "forest was fit on {} covariates, table has {}",
                self.n_cols,
                x.n_cols()
            )));
        }
        Ok(())
    }

    /// Mean prediction over all trees for each of `rows`.
    pub fn predict(&self, x: &CovariateTable, rows: &[usize]) -> Result<Vec<f64>> {
        self.check_table(x)?;
        Ok(rows
            .par_iter()
            .map(|&r| {
                let (sum, count) = self
                    .trees
                    .iter()
                    .filter_map(|t| t.predict(x, r))
                    .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                if count == 0 {
                    f64::NAN
                } else {
                    sum / count as f64
                }
            })
            .collect())
    }

    /// Mean over the trees whose subsample excluded each unit.
    pub fn predict_oob(&self, x: &CovariateTable, units: &[usize]) -> Result<OobPredictions> {
        self.check_table(x)?;
        let (value, n_oob_trees) = units
            .par_iter()
            .map(|&u| {
                let mut sum = 0.0;
                let mut count = 0;
                for t in &self.trees {
                    if t.contains(u) {
                        continue;
                    }
                    if let Some(v) = t.predict(x, u) {
                        sum += v;
                        count += 1;
                    }
                }
                (if count == 0 { f64::NAN } else { sum / count as f64 }, count)
            })
            .unzip();
        Ok(OobPredictions { value, n_oob_trees })
    }

    /// Depth-weighted split counts: a split at depth `d` adds `0.5^d` to its
    /// column; weights are normalised to sum to one. Sorted by descending
    /// weight, ties by column index. All zeros when no tree splits.
    ///
    /// Like any split-count measure this favours continuous covariates with
    /// many candidate thresholds.
    pub fn variable_importance(&self) -> Vec<(usize, f64)> {
        let mut weight = vec![0.0; self.n_cols];
        for t in &self.trees {
            for node in t.nodes() {
                if let NodeKind::Internal { split, .. } = &node.kind {
                    weight[split.column] += 0.5f64.powi(node.depth as i32);
                }
            }
        }
        let total: f64 = weight.iter().sum();
        if total > 0.0 {
            weight.iter_mut().for_each(|w| *w /= total);
        }
        let mut ranked: Vec<(usize, f64)> = weight.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }

    pub fn summary(&self) -> ForestSummary {
        let per_tree = self
            .trees
            .iter()
            .map(|t| TreeShape {
                nodes: t.nodes().len(),
                leaves: t.n_leaves(),
                depth: t.max_depth(),
            })
            .collect::<Vec<_>>();
        let max_depth = per_tree.iter().map(|s| s.depth).max().unwrap_or(0);
        let mut leaf_depths = vec![0; max_depth + 1];
        for t in &self.trees {
            for n in t.nodes().iter().filter(|n| n.is_leaf()) {
                leaf_depths[n.depth] += 1;
            }
        }
        ForestSummary {
            per_tree,
            leaf_depths,
            importance: self.variable_importance(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeShape {
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
}

/// Shape statistics for export.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestSummary {
    pub per_tree: Vec<TreeShape>,
    /// Leaf count at each depth.
    pub leaf_depths: Vec<usize>,
    pub importance: Vec<(usize, f64)>,
}

impl ForestSummary {
    pub fn trees_csv(&self) -> String {
        let mut out = String::from("tree,nodes,leaves,depth\n");
        for (i, s) in self.per_tree.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", s.nodes, s.leaves, s.depth);
        }
        out
    }

    pub fn depth_histogram_csv(&self) -> String {
        let mut out = String::from("depth,leaves\n");
        for (d, c) in self.leaf_depths.iter().enumerate() {
            let _ = writeln!(out, "{d},{c}");
        }
        out
    }

    pub fn importance_csv(&self, names: &[String]) -> String {
        let mut out = String::from("rank,column,weight\n");
        for (rank, (j, w)) in self.importance.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", rank + 1, names[*j], w);
        }
        out
    }
}
