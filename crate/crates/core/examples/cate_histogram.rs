//! Histogram table of CATE estimates with the ATE, its interval and the
//! zero line as footer rows.
//!
//! Run with `cargo run --example cate_histogram`.

use ddrct::cli::{emit_histogram, HistogramSpec};
use ddrct::forest::CateEstimates;
use ddrct::scores::{AteEstimate, Contrast};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> ddrct::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let dist = Normal::new(0.086, 0.05).unwrap();
    let tau_hat: Vec<f64> = (0..3000).map(|_| dist.sample(&mut rng)).collect();
    let cate = CateEstimates {
        n_oob_trees: vec![1; tau_hat.len()],
        tau_hat,
    };
    let ate = AteEstimate {
        contrast: Contrast::new(1, 0),
        estimate: 0.086,
        se: 0.030,
        n: 3000,
    };
    let spec = HistogramSpec {
        bins: None,
        bin_width: Some(0.02),
    };
    print!("{}", emit_histogram(&cate, &ate, &spec)?);
    Ok(())
}
