//! Out-of-bag CATEs from an honest causal forest, scored against the truth.
//!
//! Run with `cargo run --release --example causal_forest_cate`.

use ddrct::data::make_split_plan;
use ddrct::forest::{fit_causal_forest, predict_cate, ForestParams};
use ddrct::scores::{crossfit_nuisances, Contrast, DEFAULT_CLIP};
use ddrct::synthetic::{generate, oracle_metrics, CateFn, DgpSpec};

fn main() -> ddrct::Result<()> {
    let step = CateFn::Step {
        column: 0,
        threshold: 0.0,
        height: 0.5,
    };
    let truth = generate(&DgpSpec::binary(2000, 6, step, 0.5, 5))?;
    let data = &truth.dataset;

    let plan = make_split_plan(data, 5, 5, false)?;
    let nuisance = crossfit_nuisances(data, &plan, &ForestParams::with_trees(100), DEFAULT_CLIP)?;
    let forest = fit_causal_forest(data, &nuisance, Contrast::new(1, 0), &ForestParams::with_trees(1000))?;
    let cate = predict_cate(&forest, data)?;

    let m = oracle_metrics(&cate.tau_hat, &truth.true_cate[0], None)?;
    println!("CATE MSE {:.4} (best constant 0.0625)", m.mse);
    println!("correlation with truth {:.3}", m.correlation.unwrap_or(f64::NAN));
    println!("sign agreement around the ATE {:.3}", m.centered_sign_agreement.unwrap_or(f64::NAN));

    let summary = forest.forest.summary();
    print!("{}", summary.importance_csv(data.column_names()));
    Ok(())
}
