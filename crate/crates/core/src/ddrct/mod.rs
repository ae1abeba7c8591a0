//! Distilled doubly robust causal trees.
//!
//! A causal forest's out-of-bag effect predictions are distilled into a
//! shallow CART regression tree grown on one half of a sample. The tree's
//! nodes, internal ones included, are then estimated as means of the doubly
//! robust scores of the other half, so structure and estimates never share
//! units. Confidence intervals come from a percentile bootstrap of the
//! estimation half with the tree held fixed.
//!
//! Distilled trees are unstable, so [`stability_select`] grows many of them
//! on random half-samples and keeps the one that predicts the forest best on
//! the units its sample left out.

mod export;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{nodes_csv, to_dot, tree_from_json, tree_to_json};

use crate::data::{Dataset, Half, SplitPlan};
use crate::error::{Error, Result};
use crate::forest::{
    fit_causal_forest, fit_regression_tree, predict_cate, CateEstimates, CausalForest, ForestParams, NodeKind,
    Side, Tree, TreeParams,
};
use crate::rng;
use crate::scores::{
    crossfit_nuisances, dr_ate, dr_scores, AteEstimate, Contrast, DrScoreSet, NuisanceEstimates, DEFAULT_CLIP,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdrctParams {
    pub max_depth: usize,
    pub n_candidates: usize,
    /// Share of the eligible units drawn for each candidate.
    pub candidate_subsample: f64,
    pub n_bootstrap: usize,
    /// Minimum fit-half units per node of a distilled tree.
    pub min_leaf: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Draw candidate halves and bootstrap replicates by cluster when the
    /// dataset has cluster ids.
    pub cluster_mode: bool,
}

impl Default for DdrctParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            n_candidates: 1000,
            candidate_subsample: 0.5,
            n_bootstrap: 2000,
            min_leaf: 10,
            seed: 0,
            alpha: 0.05,
            cluster_mode: true,
        }
    }
}

impl DdrctParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.max_depth == 0 || self.min_leaf == 0 {
            return bad("max_depth and min_leaf must be positive");
        }
        if self.n_candidates < 1 {
            return bad("n_candidates must be at least 1");
        }
        if !(self.candidate_subsample > 0.0 && self.candidate_subsample < 1.0) {
            return bad("candidate_subsample must lie in (0, 1)");
        }
        if self.n_bootstrap < 2 {
            return bad("n_bootstrap must be at least 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Distils teacher predictions into a depth-limited CART tree grown on
/// `fit_units`. `teacher_tau` is indexed by row.
pub fn distill_tree(
    x: &crate::data::CovariateTable,
    fit_units: &[usize],
    teacher_tau: &[f64],
    params: &DdrctParams,
) -> Result<Tree> {
    if let Some(&u) = fit_units.iter().find(|&&u| !teacher_tau[u].is_finite()) {
        return Err(Error::Numerical(format!("no teacher prediction for unit {u}")));
    }
    fit_regression_tree(
        x,
        teacher_tau,
        fit_units,
        TreeParams {
            max_depth: Some(params.max_depth),
            min_leaf: params.min_leaf,
            mtry: None,
        },
        params.seed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub column: usize,
    pub column_name: String,
    pub threshold: f64,
    pub missing_goes: Side,
}

impl NodeSplit {
    #[inline]
    pub fn goes_left(&self, value: f64) -> bool {
        if value.is_nan() {
            self.missing_goes == Side::Left
        } else {
            value < self.threshold
        }
    }
}

/// One node of a DDRCT. Nodes are numbered 1.. in breadth-first order,
/// left child first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdrctNode {
    pub id: usize,
    pub depth: usize,
    /// Conditions on the path from the root, outermost first.
    pub rules: Vec<String>,
    pub split: Option<NodeSplit>,
    /// Mean estimation-half score; `None` when no estimation unit reaches
    /// the node.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub n: usize,
    pub significant: bool,
    /// Bootstrap replicates in which the node was empty.
    pub bootstrap_skipped: usize,
    /// Empty for leaves, `[left, right]` otherwise.
    pub children: Vec<DdrctNode>,
}

impl DdrctNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    /// Out-of-subsample MSE against the teacher, per candidate.
    pub losses: Vec<f64>,
    pub selected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdrctTree {
    pub contrast: Contrast,
    pub params: DdrctParams,
    pub root: DdrctNode,
    pub fit_units: Vec<usize>,
    pub estimate_units: Vec<usize>,
    pub selection: Option<SelectionDiagnostics>,
    /// Full-sample AIPW estimate for the same contrast. It generally differs
    /// from the root, which uses the estimation half only.
    pub ate: Option<AteEstimate>,
    /// Replicates drawn by [`bootstrap_nodes`]; 0 before bootstrapping.
    pub bootstrap_replicates: usize,
}

impl DdrctTree {
    /// Nodes in breadth-first order; `nodes()[k].id == k + 1`.
    pub fn nodes(&self) -> Vec<&DdrctNode> {
        let mut out = vec![&self.root];
        let mut i = 0;
        while i < out.len() {
            let node = out[i];
            out.extend(node.children.iter());
            i += 1;
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }

    pub fn leaves(&self) -> Vec<&DdrctNode> {
        self.nodes().into_iter().filter(|n| n.is_leaf()).collect()
    }

    /// Ids of the nodes `row` passes through, root first.
    pub fn route(&self, x: &crate::data::CovariateTable, row: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.params.max_depth + 1);
        let mut node = &self.root;
        loop {
            out.push(node.id);
            match &node.split {
                Some(s) if node.children.len() == 2 => {
                    node = if s.goes_left(x.value(row, s.column)) {
                        &node.children[0]
                    } else {
                        &node.children[1]
                    };
                }
                _ => return out,
            }
        }
    }

    /// Estimate of the deepest node on each row's path that has one.
    pub fn predict(&self, x: &crate::data::CovariateTable, rows: &[usize]) -> Vec<f64> {
        let nodes = self.nodes();
        rows.iter()
            .map(|&r| {
                self.route(x, r)
                    .iter()
                    .rev()
                    .find_map(|&id| nodes[id - 1].estimate)
                    .unwrap_or(f64::NAN)
            })
            .collect()
    }
}

/// `reference + mean(values - reference)`: exact for constant input.
fn shifted_mean(values: impl Iterator<Item = f64>, reference: f64) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v - reference), n + 1));
    (n > 0).then(|| reference + sum / n as f64)
}

fn format_threshold(t: f64) -> String {
    if t == 0.0 || (t.abs() >= 1e-3 && t.abs() < 1e7) {
        let s = format!("{t:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    } else {
        format!("{t:.4e}")
    }
}

fn rule_text(split: &NodeSplit, side: Side) -> String {
    let (op, missing) = match side {
        Side::Left => ("<", split.missing_goes == Side::Left),
        Side::Right => (">=", split.missing_goes == Side::Right),
    };
    let mut s = format!("{} {op} {}", split.column_name, format_threshold(split.threshold));
    if missing {
        s.push_str(" or missing");
    }
    s
}

/// Converts the arena tree to nested nodes with breadth-first ids and rule
/// paths. Estimates are filled in from `stats[arena_index] = (sum, n)`.
fn build_nodes(structure: &Tree, names: &[String], estimates: &[(Option<f64>, usize)]) -> DdrctNode {
    let arena = structure.nodes();
    let mut id_of = vec![0; arena.len()];
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut next = 1;
    while let Some(i) = queue.pop_front() {
        id_of[i] = next;
        next += 1;
        if let NodeKind::Internal { left, right, .. } = arena[i].kind {
            queue.push_back(left);
            queue.push_back(right);
        }
    }

    fn build(
        i: usize,
        rules: Vec<String>,
        arena: &[crate::forest::TreeNode],
        names: &[String],
        id_of: &[usize],
        estimates: &[(Option<f64>, usize)],
    ) -> DdrctNode {
        let (split, children) = match &arena[i].kind {
            NodeKind::Leaf => (None, Vec::new()),
            NodeKind::Internal { split, left, right } => {
                let ns = NodeSplit {
                    column: split.column,
                    column_name: names[split.column].clone(),
                    threshold: split.threshold,
                    missing_goes: split.missing_goes,
                };
                let child = |c: usize, side: Side| {
                    let mut r = rules.clone();
                    r.push(rule_text(&ns, side));
                    build(c, r, arena, names, id_of, estimates)
                };
                let kids = vec![child(*left, Side::Left), child(*right, Side::Right)];
                (Some(ns), kids)
            }
        };
        DdrctNode {
            id: id_of[i],
            depth: arena[i].depth,
            rules,
            split,
            estimate: estimates[i].0,
            se: None,
            ci: None,
            n: estimates[i].1,
            significant: false,
            bootstrap_skipped: 0,
            children,
        }
    }
    build(0, Vec::new(), arena, names, &id_of, estimates)
}

/// Estimates every node of `structure` as the mean score of the
/// estimation units routed through it.
pub fn estimate_nodes(
    structure: &Tree,
    dataset: &Dataset,
    fit_units: &[usize],
    estimate_units: &[usize],
    scores: &DrScoreSet,
    params: &DdrctParams,
) -> Result<DdrctTree> {
    let n = dataset.n_rows();
    if scores.gamma.len() != n {
        return Err(Error::Data(format!("{} scores for {n} rows", scores.gamma.len())));
    }
    let mut in_fit = vec![false; n];
    for &u in fit_units {
        in_fit[u] = true;
    }
    if let Some(&u) = estimate_units.iter().find(|&&u| in_fit[u]) {
        return Err(Error::InvalidParameter(format!(
            "unit {u} is in both the fit and the estimation half"
        )));
    }
    let x = dataset.covariates();
    let reference = estimate_units.first().map_or(0.0, |&u| scores.gamma[u]);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); structure.nodes().len()];
    for &u in estimate_units {
        for a in structure.path(x, u) {
            members[a].push(u);
        }
    }
    let stats: Vec<(Option<f64>, usize)> = members
        .iter()
        .map(|m| (shifted_mean(m.iter().map(|&u| scores.gamma[u]), reference), m.len()))
        .collect();
    let root = build_nodes(structure, dataset.column_names(), &stats);
    Ok(DdrctTree {
        contrast: scores.contrast,
        params: params.clone(),
        root,
        fit_units: fit_units.to_vec(),
        estimate_units: estimate_units.to_vec(),
        selection: None,
        ate: None,
        bootstrap_replicates: 0,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sample_sd(values: &[f64]) -> f64 {
    let mean = shifted_mean(values.iter().copied(), values[0]).unwrap();
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Percentile bootstrap of every node with the tree structure fixed.
///
/// Each replicate resamples the estimation units (or, in cluster mode, whole
/// clusters) with replacement and re-averages the scores per node. A node
/// that is empty in a replicate skips that replicate; the skip count is
/// recorded. `se` is the standard deviation of the replicate estimates and
/// `ci` the `alpha/2`, `1 - alpha/2` percentile interval; a node is
/// significant when the interval excludes zero.
pub fn bootstrap_nodes(
    mut tree: DdrctTree,
    dataset: &Dataset,
    scores: &DrScoreSet,
    n_bootstrap: usize,
    seed: u64,
    cluster_mode: bool,
) -> Result<DdrctTree> {
    if n_bootstrap < 2 {
        return Err(Error::InvalidParameter("n_bootstrap must be at least 2".into()));
    }
    if scores.gamma.len() != dataset.n_rows() {
        return Err(Error::Data("scores do not match dataset".into()));
    }
    let x = dataset.covariates();
    let units = &tree.estimate_units;
    let m = tree.node_count();
    let paths: Vec<Vec<usize>> = units.iter().map(|&u| tree.route(x, u)).collect();
    // resampling blocks: one per unit, or one per cluster
    let blocks: Vec<Vec<usize>> = match dataset.cluster_ids() {
        Some(ids) if cluster_mode => {
            let mut index = std::collections::HashMap::new();
            let mut blocks: Vec<Vec<usize>> = Vec::new();
            for (k, &u) in units.iter().enumerate() {
                let b = *index.entry(ids[u]).or_insert_with(|| {
                    blocks.push(Vec::new());
                    blocks.len() - 1
                });
                blocks[b].push(k);
            }
            blocks
        }
        _ => (0..units.len()).map(|k| vec![k]).collect(),
    };
    let reference = units.first().map_or(0.0, |&u| scores.gamma[u]);
    let replicates: Vec<Vec<Option<f64>>> = (0..n_bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, &[rng::STREAM_BOOTSTRAP, b as u64]);
            let mut sum = vec![0.0; m];
            let mut count = vec![0usize; m];
            for _ in 0..blocks.len() {
                let block = &blocks[rng.gen_range(0..blocks.len())];
                for &k in block {
                    let g = scores.gamma[units[k]] - reference;
                    for &id in &paths[k] {
                        sum[id - 1] += g;
                        count[id - 1] += 1;
                    }
                }
            }
            (0..m)
                .map(|j| (count[j] > 0).then(|| reference + sum[j] / count[j] as f64))
                .collect()
        })
        .collect();

    let alpha = tree.params.alpha;
    let mut stack = vec![&mut tree.root];
    while let Some(node) = stack.pop() {
        let j = node.id - 1;
        let mut values: Vec<f64> = replicates.iter().filter_map(|r| r[j]).collect();
        node.bootstrap_skipped = n_bootstrap - values.len();
        if values.len() >= 2 {
            values.sort_by(f64::total_cmp);
            let se = if values[0] == values[values.len() - 1] {
                0.0
            } else {
                sample_sd(&values)
            };
            let ci = (quantile(&values, alpha / 2.0), quantile(&values, 1.0 - alpha / 2.0));
            node.se = Some(se);
            node.ci = Some(ci);
            node.significant = ci.0 > 0.0 || ci.1 < 0.0;
        } else {
            node.se = None;
            node.ci = None;
            node.significant = false;
        }
        stack.extend(node.children.iter_mut());
    }
    tree.bootstrap_replicates = n_bootstrap;
    Ok(tree)
}

/// Mean squared difference between the tree's predictions and the
/// teacher's on `holdout`.
pub fn candidate_loss(tree: &Tree, x: &crate::data::CovariateTable, teacher_tau: &[f64], holdout: &[usize]) -> f64 {
    let sse: f64 = holdout
        .iter()
        .map(|&u| (tree.predict(x, u).unwrap_or(f64::NAN) - teacher_tau[u]).powi(2))
        .sum();
    sse / holdout.len() as f64
}

/// Index of the smallest loss, lowest index on ties.
pub fn argmin_loss(losses: &[f64]) -> Option<usize> {
    losses
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &l)| match best {
            Some((_, b)) if !(l < b) => best,
            _ if l.is_nan() => best,
            _ => Some((i, l)),
        })
        .map(|(i, _)| i)
}

struct Candidate {
    tree: Tree,
    fit: Vec<usize>,
    estimate: Vec<usize>,
    loss: f64,
}

/// Draws one candidate's subsample: returns (fit half, estimate half,
/// held-out units). In cluster mode whole clusters are drawn and halved.
fn draw_candidate_units(
    eligible: &[usize],
    clusters: Option<&[usize]>,
    fraction: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let blocks: Vec<Vec<usize>> = match clusters {
        Some(ids) => {
            let mut index = std::collections::BTreeMap::new();
            for &u in eligible {
                index.entry(ids[u]).or_insert_with(Vec::new).push(u);
            }
            index.into_values().collect()
        }
        None => eligible.iter().map(|&u| vec![u]).collect(),
    };
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let take = ((blocks.len() as f64 * fraction).round() as usize).clamp(2, blocks.len().max(2));
    let take = take.min(blocks.len());
    let (chosen, rest) = order.partial_shuffle(rng, take);
    let half = chosen.len().div_ceil(2);
    let collect = |ix: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = ix.iter().flat_map(|&b| blocks[b].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    (collect(&chosen[..half]), collect(&chosen[half..]), collect(rest))
}

/// Fits `n_candidates` distilled trees on random subsamples and keeps the
/// one whose predictions best match the teacher on the units outside its
/// subsample. The winner is estimated on its own estimation half and
/// bootstrapped.
pub fn stability_select(
    dataset: &Dataset,
    teacher: &CateEstimates,
    scores: &DrScoreSet,
    params: &DdrctParams,
) -> Result<DdrctTree> {
    params.validate()?;
    let contrast = scores.contrast;
    contrast.check(dataset.n_arms())?;
    let n = dataset.n_rows();
    if teacher.tau_hat.len() != n || scores.gamma.len() != n {
        return Err(Error::Data("teacher predictions and scores must cover every row".into()));
    }
    let eligible: Vec<usize> = (0..n).collect();
    let missing = eligible.iter().filter(|&&u| !teacher.tau_hat[u].is_finite()).count();
    if missing > 0 {
        return Err(Error::Numerical(format!(
            "{missing} units have no out-of-bag forest prediction; grow more trees"
        )));
    }
    let clusters = dataset.cluster_ids().filter(|_| params.cluster_mode);
    let x = dataset.covariates();

    let candidates: Vec<Candidate> = (0..params.n_candidates)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(params.seed, &[rng::STREAM_CANDIDATES, c as u64]);
            let (fit, estimate, holdout) =
                draw_candidate_units(&eligible, clusters, params.candidate_subsample, &mut rng);
            if holdout.is_empty() {
                return Err(Error::Data("candidate subsample leaves no held-out units".into()));
            }
            let tree_params = DdrctParams {
                seed: rng::derive_seed(params.seed, &[rng::STREAM_CANDIDATES, c as u64, 1]),
                ..params.clone()
            };
            let tree = distill_tree(x, &fit, &teacher.tau_hat, &tree_params)?;
            let loss = candidate_loss(&tree, x, &teacher.tau_hat, &holdout);
            Ok(Candidate {
                tree,
                fit,
                estimate,
                loss,
            })
        })
        .collect::<Result<_>>()?;

    let losses: Vec<f64> = candidates.iter().map(|c| c.loss).collect();
    let selected = argmin_loss(&losses)
        .ok_or_else(|| Error::Numerical("every candidate loss is undefined".into()))?;
    let chosen = &candidates[selected];
    let tree = estimate_nodes(&chosen.tree, dataset, &chosen.fit, &chosen.estimate, scores, params)?;
    let mut tree = bootstrap_nodes(
        tree,
        dataset,
        scores,
        params.n_bootstrap,
        rng::derive_seed(params.seed, &[rng::STREAM_BOOTSTRAP]),
        params.cluster_mode,
    )?;
    tree.selection = Some(SelectionDiagnostics { losses, selected });
    Ok(tree)
}

/// A single DDRCT on the plan's halves, without candidate selection.
pub fn fit_honest_ddrct(
    dataset: &Dataset,
    plan: &SplitPlan,
    teacher: &CateEstimates,
    scores: &DrScoreSet,
    params: &DdrctParams,
) -> Result<DdrctTree> {
    params.validate()?;
    let fit = plan.half_units(Half::Fit);
    let est = plan.half_units(Half::Estimate);
    let structure = distill_tree(dataset.covariates(), &fit, &teacher.tau_hat, params)?;
    let tree = estimate_nodes(&structure, dataset, &fit, &est, scores, params)?;
    bootstrap_nodes(
        tree,
        dataset,
        scores,
        params.n_bootstrap,
        rng::derive_seed(params.seed, &[rng::STREAM_BOOTSTRAP]),
        params.cluster_mode,
    )
}

/// Settings for the end-to-end pipeline. The sub-seeds of the nuisance
/// forests, the causal forest, the split plan and the DDRCT are all derived
/// from `seed`; the `seed` fields of the nested parameter blocks are
/// ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub seed: u64,
    pub k_folds: usize,
    pub clip: f64,
    /// Respect clusters in folds, halves, standard errors and resampling.
    pub cluster_mode: bool,
    pub nuisance_forest: ForestParams,
    pub causal_forest: ForestParams,
    pub ddrct: DdrctParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            seed: 0,
            k_folds: 5,
            clip: DEFAULT_CLIP,
            cluster_mode: true,
            nuisance_forest: ForestParams {
                min_leaf: 10,
                ..ForestParams::with_trees(2000)
            },
            causal_forest: ForestParams::with_trees(10_000),
            ddrct: DdrctParams::default(),
        }
    }
}

impl PipelineParams {
    pub fn nuisance_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[rng::STREAM_NUISANCE])
    }

    pub fn plan_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[rng::STREAM_SPLIT_PLAN])
    }

    pub fn causal_seed(&self, contrast: Contrast) -> u64 {
        rng::derive_seed(
            self.seed,
            &[rng::STREAM_CAUSAL_FOREST, contrast.treated as u64, contrast.control as u64],
        )
    }

    pub fn ddrct_seed(&self, contrast: Contrast) -> u64 {
        rng::derive_seed(
            self.seed,
            &[rng::STREAM_DDRCT, contrast.treated as u64, contrast.control as u64],
        )
    }
}

pub struct PipelineOutput {
    pub plan: SplitPlan,
    pub nuisance: NuisanceEstimates,
    pub scores: DrScoreSet,
    pub ate: AteEstimate,
    pub forest: CausalForest,
    pub cate: CateEstimates,
    pub tree: DdrctTree,
}

/// Split plan and cross-fitted nuisances for `dataset`.
pub fn fit_nuisance_stage(dataset: &Dataset, params: &PipelineParams) -> Result<(SplitPlan, NuisanceEstimates)> {
    let plan = crate::data::make_split_plan(dataset, params.k_folds, params.plan_seed(), params.cluster_mode)?;
    let forest = ForestParams {
        seed: params.nuisance_seed(),
        ..params.nuisance_forest.clone()
    };
    let nuisance = crossfit_nuisances(dataset, &plan, &forest, params.clip)?;
    Ok((plan, nuisance))
}

/// Scores, ATE, causal forest, CATEs and the selected DDRCT for one contrast,
/// given nuisances.
pub fn ddrct_for_contrast(
    dataset: &Dataset,
    nuisance: &NuisanceEstimates,
    contrast: Contrast,
    params: &PipelineParams,
) -> Result<(DrScoreSet, AteEstimate, CausalForest, CateEstimates, DdrctTree)> {
    let scores = dr_scores(dataset, nuisance, contrast)?;
    let clusters = dataset.cluster_ids().filter(|_| params.cluster_mode);
    let ate = dr_ate(&scores, clusters)?;
    let forest_params = ForestParams {
        seed: params.causal_seed(contrast),
        ..params.causal_forest.clone()
    };
    let forest = fit_causal_forest(dataset, nuisance, contrast, &forest_params)?;
    let cate = predict_cate(&forest, dataset)?;
    let ddrct_params = DdrctParams {
        seed: params.ddrct_seed(contrast),
        cluster_mode: params.cluster_mode && params.ddrct.cluster_mode,
        ..params.ddrct.clone()
    };
    let mut tree = stability_select(dataset, &cate, &scores, &ddrct_params)?;
    tree.ate = Some(ate);
    Ok((scores, ate, forest, cate, tree))
}

/// Cross-fit, score, grow the causal forest, select and bootstrap a DDRCT.
pub fn run_ddrct_pipeline(dataset: &Dataset, contrast: Contrast, params: &PipelineParams) -> Result<PipelineOutput> {
    contrast.check(dataset.n_arms())?;
    params.ddrct.validate()?;
    let (plan, nuisance) = fit_nuisance_stage(dataset, params)?;
    let (scores, ate, forest, cate, tree) = ddrct_for_contrast(dataset, &nuisance, contrast, params)?;
    Ok(PipelineOutput {
        plan,
        nuisance,
        scores,
        ate,
        forest,
        cate,
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateTable;
    use crate::forest::Split;

    fn grid_dataset(n: usize) -> Dataset {
        let x1: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
        let cov = CovariateTable::new(vec!["x1".into(), "x2".into()], vec![x1, x2]).unwrap();
        Dataset::new(vec![0.0; n], (0..n).map(|i| i % 2).collect(), None, cov).unwrap()
    }

    fn scores(gamma: Vec<f64>) -> DrScoreSet {
        DrScoreSet {
            contrast: Contrast::new(1, 0),
            gamma,
        }
    }

    #[test]
    fn constant_teacher_gives_root_only() {
        let d = grid_dataset(100);
        let fit: Vec<usize> = (0..50).collect();
        let tree = distill_tree(d.covariates(), &fit, &vec![0.3; 100], &DdrctParams::default()).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert!(distill_tree(d.covariates(), &fit[..15], &vec![0.3; 100], &DdrctParams::default()).is_err());
    }

    #[test]
    fn step_teacher_splits_on_sign() {
        let d = grid_dataset(200);
        let x = d.covariates();
        let tau: Vec<f64> = (0..200).map(|i| if x.value(i, 0) > 0.0 { 1.0 } else { 0.0 }).collect();
        let fit: Vec<usize> = (0..200).step_by(2).collect();
        let tree = distill_tree(x, &fit, &tau, &DdrctParams::default()).unwrap();
        match &tree.nodes()[0].kind {
            NodeKind::Internal { split, .. } => {
                assert_eq!(split.column, 0);
                let below = fit.iter().map(|&u| x.value(u, 0)).filter(|&v| v < 0.0).fold(f64::MIN, f64::max);
                let above = fit.iter().map(|&u| x.value(u, 0)).filter(|&v| v > 0.0).fold(f64::MAX, f64::min);
                assert_eq!(split.threshold, (below + above) / 2.0);
            }
            NodeKind::Leaf => panic!("no split"),
        }
        assert_eq!(tree.max_depth(), 1, "pure children stop splitting");
    }

    fn stump() -> Tree {
        Tree::from_nodes(vec![
            (
                0,
                NodeKind::Internal {
                    split: Split {
                        column: 0,
                        threshold: 0.0,
                        missing_goes: Side::Left,
                    },
                    left: 1,
                    right: 2,
                },
                Some(0.0),
            ),
            (1, NodeKind::Leaf, Some(0.0)),
            (1, NodeKind::Leaf, Some(0.0)),
        ])
    }

    #[test]
    fn node_estimates_and_accounting() {
        let d = grid_dataset(40);
        let gamma: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let est: Vec<usize> = (0..40).step_by(2).collect();
        let fit: Vec<usize> = (1..40).step_by(2).collect();
        let t = estimate_nodes(&stump(), &d, &fit, &est, &scores(gamma.clone()), &DdrctParams::default()).unwrap();
        let nodes = t.nodes();
        assert_eq!(nodes.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 2, 3]);
        let (root, l, r) = (nodes[0], nodes[1], nodes[2]);
        assert_eq!(root.n, 20);
        assert_eq!(l.n + r.n, 20);
        let weighted = (l.n as f64 * l.estimate.unwrap() + r.n as f64 * r.estimate.unwrap()) / 20.0;
        assert!((root.estimate.unwrap() - weighted).abs() < 1e-10);
        let expect_root: f64 = est.iter().map(|&u| gamma[u]).sum::<f64>() / 20.0;
        assert!((root.estimate.unwrap() - expect_root).abs() < 1e-12);
        assert_eq!(l.rules, vec!["x1 < 0 or missing".to_string()]);
        assert_eq!(r.rules, vec!["x1 >= 0".to_string()]);

        // overlapping halves are rejected
        assert!(estimate_nodes(&stump(), &d, &[0, 1], &[1, 2], &scores(gamma), &DdrctParams::default()).is_err());
    }

    #[test]
    fn constant_scores_give_constant_nodes_and_zero_width() {
        let d = grid_dataset(40);
        let est: Vec<usize> = (0..40).collect();
        let s = scores(vec![0.7; 40]);
        let t = estimate_nodes(&stump(), &d, &[], &est, &s, &DdrctParams::default()).unwrap();
        let t = bootstrap_nodes(t, &d, &s, 200, 1, false).unwrap();
        for node in t.nodes() {
            assert_eq!(node.estimate, Some(0.7));
            assert_eq!(node.se, Some(0.0));
            let (lo, hi) = node.ci.unwrap();
            assert_eq!(lo, hi);
        }
    }

    #[test]
    fn empty_node_is_flagged_and_skipped() {
        let d = grid_dataset(40);
        // estimation units only on the left of x1 = 0
        let est: Vec<usize> = (0..20).collect();
        let s = scores((0..40).map(|i| i as f64).collect());
        let t = estimate_nodes(&stump(), &d, &[], &est, &s, &DdrctParams::default()).unwrap();
        assert_eq!(t.nodes()[2].estimate, None);
        assert_eq!(t.nodes()[2].n, 0);
        let t = bootstrap_nodes(t, &d, &s, 50, 1, false).unwrap();
        assert_eq!(t.nodes()[2].bootstrap_skipped, 50);
        assert_eq!(t.nodes()[2].se, None);
        assert!(bootstrap_nodes(t, &d, &s, 1, 1, false).is_err());
    }

    #[test]
    fn argmin_ties_and_nans() {
        assert_eq!(argmin_loss(&[0.3, 0.1, 0.1]), Some(1));
        assert_eq!(argmin_loss(&[f64::NAN, 0.5]), Some(1));
        assert_eq!(argmin_loss(&[]), None);
    }

    #[test]
    fn thresholds_print_compactly() {
        assert_eq!(format_threshold(21.0), "21");
        assert_eq!(format_threshold(15.5), "15.5");
        assert_eq!(format_threshold(-0.00001), "-1.0000e-5");
        assert_eq!(format_threshold(0.123456), "0.1235");
    }

    #[test]
    fn params_validation() {
        let ok = DdrctParams::default();
        assert_eq!((ok.max_depth, ok.n_candidates, ok.n_bootstrap), (3, 1000, 2000));
        assert_eq!((ok.candidate_subsample, ok.alpha), (0.5, 0.05));
        assert!(ok.validate().is_ok());
        assert!(DdrctParams { n_candidates: 0, ..ok.clone() }.validate().is_err());
        assert!(DdrctParams { n_bootstrap: 1, ..ok.clone() }.validate().is_err());
        assert!(DdrctParams { candidate_subsample: 1.0, ..ok }.validate().is_err());
    }
}
