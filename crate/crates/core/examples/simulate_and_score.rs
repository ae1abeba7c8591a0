//! Generate a synthetic dataset with missing values, clusters and noisy
//! copies, then score a naive estimate against the truth.
//!
//! Run with `cargo run --example simulate_and_score`.

use ddrct::synthetic::{generate, oracle_metrics, CateFn, DgpSpec, NoisyCopies};

fn main() -> ddrct::Result<()> {
    let spec = DgpSpec {
        missing_rate: 0.05,
        cluster_count: Some(20),
        noisy_copies: Some(NoisyCopies {
            source: 1,
            targets: vec![2, 3, 4],
            noise_sd: 0.1,
        }),
        ..DgpSpec::binary(
            1000,
            5,
            CateFn::Linear {
                column: 0,
                intercept: 0.2,
                slope: 0.3,
            },
            1.0,
            8,
        )
    };
    let truth = generate(&spec)?;
    println!("true ATE {:.4}", truth.true_ate[0]);
    let csv = truth.to_csv();
    println!("{}", csv.lines().next().unwrap_or_default());

    // difference in means, used as a constant CATE guess
    let d = &truth.dataset;
    let mean_in = |arm: usize| {
        let units = d.units_in_arm(arm);
        units.iter().map(|&i| d.outcome()[i]).sum::<f64>() / units.len() as f64
    };
    let guess = vec![mean_in(1) - mean_in(0); d.n_rows()];
    let m = oracle_metrics(&guess, &truth.true_cate[0], None)?;
    println!("constant guess: MSE {:.4}, ATE bias {:.4}", m.mse, m.ate_bias);
    Ok(())
}
