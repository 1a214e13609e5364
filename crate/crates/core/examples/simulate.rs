//! Draw the representative and class-balanced Gaussian samples and check the
//! exact posterior oracle against the labels it was generated from.
//!
//! cargo run --release --example simulate

use debias::classify::stochastic_classify;
use debias::metrics::{overshoot, Metric, VarianceForm};
use debias::prior_from_labels;
use debias::simgen::{default_spec, oracle_matrix, sample_dataset, SimKind};

fn main() -> debias::Result<()> {
    for kind in [SimKind::Representative, SimKind::Biased] {
        let cfg = default_spec(kind).with_points(20_000).with_seed(1);
        let ds = sample_dataset(&cfg)?;
        let fractions = prior_from_labels(&ds)?;
        println!(
            "{kind:?}: {} points in {} dimensions, target fractions {:?}, drawn {:.4?}",
            ds.len(),
            ds.dim(),
            cfg.fractions.as_slice(),
            fractions.as_slice()
        );

        // Sampling labels from the oracle reproduces the predicted metrics
        // up to counting noise.
        let oracle = oracle_matrix(&cfg, &ds)?;
        let assigned = stochastic_classify(&oracle, 2);
        let report = overshoot(&oracle, &assigned, ds.labels().unwrap(), VarianceForm::Derived)?;
        for class in 0..ds.class_count() {
            let c = report.row(class, Metric::Completeness);
            let r = report.row(class, Metric::Reliability);
            println!(
                "  class {class}: completeness {:.4} vs {:.4}, reliability {:.4} vs {:.4}",
                c.predicted.unwrap_or(f64::NAN),
                c.observed.unwrap_or(f64::NAN),
                r.predicted.unwrap_or(f64::NAN),
                r.observed.unwrap_or(f64::NAN),
            );
        }
        println!("  largest |z| {:.2}", report.max_abs_z().unwrap_or(0.0));
    }
    Ok(())
}
