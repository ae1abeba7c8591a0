//! Cross-fitted AIPW estimate of a constant treatment effect.
//!
//! Run with `cargo run --release --example aipw_ate`.

use ddrct::data::make_split_plan;
use ddrct::forest::ForestParams;
use ddrct::scores::{crossfit_nuisances, dr_ate, dr_scores, Contrast, DEFAULT_CLIP};
use ddrct::synthetic::{generate, BaselineFn, CateFn, DgpSpec};

fn main() -> ddrct::Result<()> {
    let mut spec = DgpSpec::binary(2000, 5, CateFn::Constant { value: 0.5 }, 1.0, 3);
    spec.baseline = BaselineFn::Sine {
        column: 1,
        amplitude: 1.0,
    };
    let truth = generate(&spec)?;
    let data = &truth.dataset;

    let plan = make_split_plan(data, 5, 3, false)?;
    let forest = ForestParams {
        seed: 3,
        ..ForestParams::with_trees(200)
    };
    let nuisance = crossfit_nuisances(data, &plan, &forest, DEFAULT_CLIP)?;
    let scores = dr_scores(data, &nuisance, Contrast::new(1, 0))?;
    let ate = dr_ate(&scores, None)?;
    let (lo, hi) = ate.interval(1.96);
    println!("AIPW ATE {:.4} (se {:.4}), 95% CI [{lo:.4}, {hi:.4}], truth 0.5", ate.estimate, ate.se);
    Ok(())
}
