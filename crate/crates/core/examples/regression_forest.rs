//! Honest regression forest: out-of-bag fit, variable importance and the
//! forest summary tables.
//!
//! Run with `cargo run --release --example regression_forest`.

use ddrct::data::CovariateTable;
use ddrct::forest::{fit_regression_forest, ForestParams};
use rand::{Rng, SeedableRng};

fn main() -> ddrct::Result<()> {
    let n = 2000;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| if r[0] > 0.0 { 1.0 } else { 0.0 } + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    let x = CovariateTable::from_rows(&rows)?;

    let forest = fit_regression_forest(&x, &y, &ForestParams::with_trees(500))?;
    let units: Vec<usize> = (0..n).collect();
    let oob = forest.predict_oob(&x, &units)?;
    let mse = units
        .iter()
        .filter(|&&i| oob.n_oob_trees[i] > 0)
        .map(|&i| (oob.value[i] - y[i]).powi(2))
        .sum::<f64>()
        / n as f64;
    println!("OOB MSE {mse:.4}, {} units without an OOB tree", oob.flagged().len());

    let summary = forest.summary();
    print!("{}", summary.importance_csv(x.names()));
    print!("{}", summary.depth_histogram_csv());
    Ok(())
}
