use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{best_split, Split, SplitScratch};
use crate::data::CovariateTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf,
    Internal { split: Split, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub depth: usize,
    pub kind: NodeKind,
    /// Estimation units routed through this node.
    pub n_estimation: usize,
    /// Estimate from this node's own estimation units, when defined.
    pub estimate: Option<f64>,
    /// `estimate`, falling back to the nearest ancestor that has one.
    pub prediction: Option<f64>,
    /// Estimation units held by a leaf; empty for internal nodes.
    pub estimation_units: Vec<u32>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }
}

/// A single tree stored as an arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    /// Units used to choose splits, sorted.
    split_units: Vec<u32>,
    /// Units used for node estimates, sorted. Equal to `split_units` for
    /// non-honest trees.
    estimation_units: Vec<u32>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn split_units(&self) -> &[u32] {
        &self.split_units
    }

    pub fn estimation_units(&self) -> &[u32] {
        &self.estimation_units
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Whether `unit` took part in growing this tree in either role.
    pub fn contains(&self, unit: usize) -> bool {
        let u = unit as u32;
        self.split_units.binary_search(&u).is_ok() || self.estimation_units.binary_search(&u).is_ok()
    }

    pub fn leaf_of(&self, x: &CovariateTable, row: usize) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i].kind {
                NodeKind::Leaf => return i,
                NodeKind::Internal { split, left, right } => {
                    i = if split.goes_left(x.value(row, split.column)) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Node indices from the root to the leaf reached by `row`.
    pub fn path(&self, x: &CovariateTable, row: usize) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while let NodeKind::Internal { split, left, right } = &self.nodes[i].kind {
            i = if split.goes_left(x.value(row, split.column)) {
                *left
            } else {
                *right
            };
            out.push(i);
        }
        out
    }

    #[inline]
    pub fn predict(&self, x: &CovariateTable, row: usize) -> Option<f64> {
        self.nodes[self.leaf_of(x, row)].prediction
    }

    /// Builds a tree by hand: `nodes` in arena order with node 0 the root.
    /// Estimates are taken as given and used as predictions.
    pub fn from_nodes(nodes: Vec<(usize, NodeKind, Option<f64>)>) -> Self {
        let mut arena: Vec<TreeNode> = nodes
            .into_iter()
            .map(|(depth, kind, estimate)| TreeNode {
                depth,
                kind,
                n_estimation: 0,
                estimate,
                prediction: estimate,
                estimation_units: Vec::new(),
            })
            .collect();
        fill_predictions(&mut arena);
        Self {
            nodes: arena,
            split_units: Vec::new(),
            estimation_units: Vec::new(),
        }
    }
}

fn fill_predictions(nodes: &mut [TreeNode]) {
    // parents precede children in the arena
    let mut inherited = vec![None; nodes.len()];
    for i in 0..nodes.len() {
        let p = nodes[i].estimate.or(inherited[i]);
        nodes[i].prediction = p;
        if let NodeKind::Internal { left, right, .. } = nodes[i].kind {
            inherited[left] = p;
            inherited[right] = p;
        }
    }
}

/// What a tree fits: per-unit split responses and the node estimate.
pub(crate) trait Objective: Sync {
    /// Responses of `units` used by the split search at one node.
    fn responses(&self, units: &[u32], out: &mut Vec<f64>);

    /// Optional per-unit weights (indexed by row) whose child sums must be
    /// positive for a split to be admissible.
    fn admissibility(&self) -> Option<&[f64]> {
        None
    }

    fn estimate(&self, units: &[u32]) -> Option<f64>;
}

/// Mean-of-response objective (variance-reduction splitting).
pub(crate) struct Regression<'a> {
    pub y: &'a [f64],
}

impl Objective for Regression<'_> {
    fn responses(&self, units: &[u32], out: &mut Vec<f64>) {
        out.clear();
        out.extend(units.iter().map(|&u| self.y[u as usize]));
    }

    fn estimate(&self, units: &[u32]) -> Option<f64> {
        if units.is_empty() {
            None
        } else {
            Some(units.iter().map(|&u| self.y[u as usize]).sum::<f64>() / units.len() as f64)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GrowSettings {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub mtry: usize,
}

/// Grows one tree. `split_units` choose splits; `estimation_units` are
/// routed down the finished structure and produce node estimates.
pub(crate) fn grow<O: Objective, R: Rng>(
    x: &CovariateTable,
    mut split_units: Vec<u32>,
    mut estimation_units: Vec<u32>,
    objective: &O,
    settings: GrowSettings,
    rng: &mut R,
) -> Tree {
    split_units.sort_unstable();
    estimation_units.sort_unstable();
    let p = x.n_cols();
    let mtry = settings.mtry.clamp(1, p.max(1));
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut scratch = SplitScratch::default();
    let mut responses = Vec::new();
    let mut weights = Vec::new();

    nodes.push(TreeNode {
        depth: 0,
        kind: NodeKind::Leaf,
        n_estimation: 0,
        estimate: None,
        prediction: None,
        estimation_units: Vec::new(),
    });
    let mut stack = vec![(0usize, split_units.clone(), estimation_units.clone())];
    while let Some((id, s_units, e_units)) = stack.pop() {
        let depth = nodes[id].depth;
        nodes[id].n_estimation = e_units.len();
        nodes[id].estimate = objective.estimate(&e_units);

        let depth_ok = settings.max_depth.is_none_or(|d| depth < d);
        let mut chosen = None;
        if depth_ok && s_units.len() >= 2 * settings.min_leaf.max(1) && p > 0 {
            objective.responses(&s_units, &mut responses);
            let constant = responses.iter().all(|&r| r == responses[0]);
            if !constant {
                let mut features = index::sample(rng, p, mtry).into_vec();
                features.sort_unstable();
                let w = objective.admissibility().map(|w| {
                    weights.clear();
                    weights.extend(s_units.iter().map(|&u| w[u as usize]));
                    weights.as_slice()
                });
                chosen = best_split(
                    x,
                    &s_units,
                    &responses,
                    w,
                    &features,
                    settings.min_leaf,
                    &mut scratch,
                );
            }
        }

        match chosen {
            None => nodes[id].estimation_units = e_units,
            Some(c) => {
                let split = c.split;
                let col = x.column(split.column);
                let (sl, sr): (Vec<u32>, Vec<u32>) =
                    s_units.iter().partition(|&&u| split.goes_left(col[u as usize]));
                let (el, er): (Vec<u32>, Vec<u32>) =
                    e_units.iter().partition(|&&u| split.goes_left(col[u as usize]));
                let left = nodes.len();
                let right = left + 1;
                for _ in 0..2 {
                    nodes.push(TreeNode {
                        depth: depth + 1,
                        kind: NodeKind::Leaf,
                        n_estimation: 0,
                        estimate: None,
                        prediction: None,
                        estimation_units: Vec::new(),
                    });
                }
                nodes[id].kind = NodeKind::Internal { split, left, right };
                stack.push((right, sr, er));
                stack.push((left, sl, el));
            }
        }
    }
    fill_predictions(&mut nodes);
    Tree {
        nodes,
        split_units,
        estimation_units,
    }
}
