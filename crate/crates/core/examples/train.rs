//! Train the feed-forward classifier on simulated data, save and reload it,
//! and measure how far its probabilities are from the exact posteriors.
//!
//! cargo run --release --example train

use debias::metrics::mean_kl_by_class;
use debias::mlp::{train, MlpModel, TrainConfig};
use debias::simgen::{default_spec, oracle_matrix, sample_dataset, SimKind};

fn main() -> debias::Result<()> {
    let spec = default_spec(SimKind::Representative);
    let train_set = sample_dataset(&spec.clone().with_points(5_000).with_seed(10))?;
    let test_cfg = spec.with_points(5_000).with_seed(11);
    let test_set = sample_dataset(&test_cfg)?;

    let cfg = TrainConfig {
        hidden_sizes: vec![16],
        max_iters: 3_000,
        restarts: 2,
        ..TrainConfig::default()
    };
    let model = train(&train_set, &cfg, None)?;
    let report = model.training.as_ref().expect("trained models carry a report");
    for r in &report.restarts {
        println!(
            "restart {}: loss {:?} after {} iterations (converged {})",
            r.restart, r.final_loss, r.iterations, r.converged
        );
    }
    println!("kept restart {} with {} parameters", report.best_restart, model.param_count());

    let path = std::env::temp_dir().join("debias-example-model.json");
    model.save(&path)?;
    let reloaded = MlpModel::load(&path)?;
    let probs = reloaded.predict(&test_set)?;
    assert_eq!(probs, model.predict(&test_set)?);

    let kl = mean_kl_by_class(&oracle_matrix(&test_cfg, &test_set)?, &probs, test_set.labels().unwrap())?;
    for (class, v) in kl.per_class.iter().enumerate() {
        println!("class {class}: mean KL {:.4} nats over {} rows", v.unwrap_or(f64::NAN), kl.class_rows[class]);
    }
    println!("model written to {}", path.display());
    Ok(())
}
