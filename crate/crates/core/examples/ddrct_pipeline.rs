//! End-to-end DDRCT on a synthetic step effect `tau = 0.5 * 1[x1 > 0]`.
//!
//! Run with `cargo run --release --example ddrct_pipeline`.

use ddrct::ddrct::{nodes_csv, run_ddrct_pipeline, PipelineParams};
use ddrct::forest::ForestParams;
use ddrct::scores::Contrast;
use ddrct::synthetic::{generate, CateFn, DgpSpec};

fn main() -> ddrct::Result<()> {
    let step = CateFn::Step {
        column: 0,
        threshold: 0.0,
        height: 0.5,
    };
    let truth = generate(&DgpSpec::binary(4000, 10, step, 0.5, 7))?;

    let mut params = PipelineParams {
        seed: 7,
        nuisance_forest: ForestParams::with_trees(100),
        causal_forest: ForestParams::with_trees(500),
        ..PipelineParams::default()
    };
    params.ddrct.n_candidates = 200;
    params.ddrct.n_bootstrap = 500;

    let started = std::time::Instant::now();
    let out = run_ddrct_pipeline(&truth.dataset, Contrast::new(1, 0), &params)?;
    eprintln!("fitted in {:.1?}", started.elapsed());

    println!(
        "ATE {:.3} (se {:.3}), true {:.3}",
        out.ate.estimate, out.ate.se, truth.true_ate[0]
    );
    let root = &out.tree.root;
    if let Some(split) = &root.split {
        println!("root split: {} at {:.3}", split.column_name, split.threshold);
    }
    print!("{}", nodes_csv(&out.tree));
    Ok(())
}
