//! Compare the completeness and reliability a model promises with what it
//! delivers, before and after deweighting a class-balanced model.
//!
//! cargo run --release --example overshoot

use debias::classify::bayes_classify;
use debias::data::per_example_weights;
use debias::metrics::{overshoot, Metric, VarianceForm};
use debias::mlp::{train, TrainConfig};
use debias::priors::{deweight, weighted_prior};
use debias::simgen::{default_spec, sample_dataset, SimKind};
use debias::{balancing_weights, prior_from_labels, ProbMatrix};

fn show(name: &str, probs: &ProbMatrix, truth: &[usize]) -> debias::Result<()> {
    let report = overshoot(probs, &bayes_classify(probs), truth, VarianceForm::Derived)?;
    println!("{name}");
    for row in report.rows.iter().filter(|r| r.metric != Metric::F1) {
        println!(
            "  class {} {:<2} predicted {:.4} observed {:.4} overshoot {:+.4} z {:+.1}{}",
            row.class,
            row.metric.label(),
            row.predicted.unwrap_or(f64::NAN),
            row.observed.unwrap_or(f64::NAN),
            row.overshoot.unwrap_or(f64::NAN),
            row.z.unwrap_or(f64::NAN),
            if row.flagged { "  <-" } else { "" }
        );
    }
    Ok(())
}

fn main() -> debias::Result<()> {
    let spec = default_spec(SimKind::Representative);
    let train_set = sample_dataset(&spec.clone().with_points(5_000).with_seed(40))?;
    let test_set = sample_dataset(&spec.with_points(20_000).with_seed(41))?;
    let truth = test_set.labels().unwrap();

    let label_prior = prior_from_labels(&train_set)?;
    let weights = per_example_weights(&train_set, &balancing_weights(&label_prior)?)?;
    let weighted = train_set.with_weights(Some(weights))?;
    let cfg = TrainConfig {
        hidden_sizes: vec![16],
        max_iters: 3_000,
        restarts: 1,
        ..TrainConfig::default()
    };
    let model = train(&weighted, &cfg, weighted.weights())?;
    let probs = model.predict(&test_set)?;
    show("class-balanced model", &probs, truth)?;
    let fixed = deweight(&probs, &weighted_prior(&weighted)?, &label_prior)?;
    show("deweighted", &fixed, truth)?;
    Ok(())
}
