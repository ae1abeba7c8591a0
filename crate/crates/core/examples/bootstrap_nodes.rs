//! Node estimates and fixed-structure bootstrap intervals for a hand-built
//! tree.
//!
//! Run with `cargo run --release --example bootstrap_nodes`.

use ddrct::data::{CovariateTable, Dataset};
use ddrct::ddrct::{bootstrap_nodes, estimate_nodes, nodes_csv, to_dot, DdrctParams};
use ddrct::forest::{NodeKind, Side, Split, Tree};
use ddrct::scores::{Contrast, DrScoreSet};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> ddrct::Result<()> {
    let n = 600;
    let x1: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let table = CovariateTable::new(vec!["age".into()], vec![x1.clone()])?;
    let data = Dataset::new(vec![0.0; n], (0..n).map(|i| i % 2).collect(), None, table)?;

    // scores centred at 0.5 above age 0.5 and 0 below
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let gamma = x1
        .iter()
        .map(|&a| if a >= 0.5 { 0.5 } else { 0.0 } + noise.sample(&mut rng))
        .collect();
    let scores = DrScoreSet {
        contrast: Contrast::new(1, 0),
        gamma,
    };

    let split = Split {
        column: 0,
        threshold: 0.5,
        missing_goes: Side::Left,
    };
    let structure = Tree::from_nodes(vec![
        (0, NodeKind::Internal { split, left: 1, right: 2 }, None),
        (1, NodeKind::Leaf, None),
        (1, NodeKind::Leaf, None),
    ]);
    let fit: Vec<usize> = (0..n).step_by(2).collect();
    let estimate: Vec<usize> = (1..n).step_by(2).collect();
    let params = DdrctParams::default();
    let tree = estimate_nodes(&structure, &data, &fit, &estimate, &scores, &params)?;
    let tree = bootstrap_nodes(tree, &data, &scores, params.n_bootstrap, 1, false)?;

    print!("{}", nodes_csv(&tree));
    print!("{}", to_dot(&tree));
    Ok(())
}
