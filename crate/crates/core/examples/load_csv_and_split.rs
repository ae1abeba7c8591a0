//! Load a delimited table with a schema, report screened columns and build
//! a cluster-respecting split plan.
//!
//! Run with `cargo run --example load_csv_and_split`.

use ddrct::data::{load_table, make_split_plan, CovariateRule, Half, Schema};

fn main() -> ddrct::Result<()> {
    let dir = std::env::temp_dir().join("ddrct-load-example");
    std::fs::create_dir_all(&dir).map_err(|e| ddrct::Error::Data(e.to_string()))?;
    let path = dir.join("households.csv");
    let mut text = String::from("score,arm,school,h_spend,h_size,region\n");
    for i in 0..40 {
        let spend = if i % 7 == 0 { String::new() } else { format!("{}", 10 + i % 13) };
        text.push_str(&format!("{},{},s{},{spend},{},north\n", 0.1 * i as f64, i % 2, i / 5, 2 + i % 4));
    }
    std::fs::write(&path, text).map_err(|e| ddrct::Error::Data(e.to_string()))?;

    let schema = Schema {
        cluster: Some("school".into()),
        covariates: CovariateRule::AllNumeric,
        ..Schema::new("score", "arm")
    };
    let loaded = load_table(&path, &schema)?;
    for line in loaded.screening.log_lines() {
        println!("{line}");
    }
    let data = &loaded.dataset;
    println!("{} rows, covariates {:?}, arm counts {:?}", data.n_rows(), data.column_names(), data.arm_counts());

    let plan = make_split_plan(data, 4, 1, true)?;
    for f in 0..plan.k_folds {
        println!("fold {f}: {} units", plan.fold_units(f).len());
    }
    println!(
        "fit half {} units, estimation half {} units",
        plan.half_units(Half::Fit).len(),
        plan.half_units(Half::Estimate).len()
    );
    Ok(())
}
