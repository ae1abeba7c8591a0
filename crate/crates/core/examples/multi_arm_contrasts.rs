//! One set of cross-fitted nuisances, AIPW estimates for every arm against
//! a baseline.
//!
//! Run with `cargo run --release --example multi_arm_contrasts`.

use ddrct::data::make_split_plan;
use ddrct::forest::ForestParams;
use ddrct::scores::{ate_table_csv, crossfit_nuisances, dr_ate, multi_arm_scores, DEFAULT_CLIP};
use ddrct::synthetic::{generate, BaselineFn, CateFn, DgpSpec, PropensityRule};

fn main() -> ddrct::Result<()> {
    let spec = DgpSpec {
        arms: 3,
        propensity: PropensityRule::Fixed {
            probs: vec![0.4, 0.3, 0.3],
        },
        baseline: BaselineFn::Zero,
        cate: vec![CateFn::Constant { value: 1.0 }, CateFn::Constant { value: -1.0 }],
        ..DgpSpec::binary(3000, 4, CateFn::Constant { value: 0.0 }, 1.0, 9)
    };
    let truth = generate(&spec)?;
    let data = &truth.dataset;

    let plan = make_split_plan(data, 5, 9, false)?;
    let nuisance = crossfit_nuisances(data, &plan, &ForestParams::with_trees(100), DEFAULT_CLIP)?;
    let rows: Vec<(String, _)> = multi_arm_scores(data, &nuisance, 0)?
        .iter()
        .map(|s| Ok((s.contrast.to_string(), dr_ate(s, None)?)))
        .collect::<ddrct::Result<_>>()?;
    print!("{}", ate_table_csv(&rows));
    println!("# truth: arm1-arm0 = 1, arm2-arm0 = -1");
    Ok(())
}
