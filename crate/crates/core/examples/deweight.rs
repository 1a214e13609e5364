//! Train on class-balanced weights, then swap the balanced prior back out of
//! the predictions. The column means move from roughly equal back towards
//! the true class mix.
//!
//! cargo run --release --example deweight

use debias::data::per_example_weights;
use debias::mlp::{train, TrainConfig};
use debias::priors::{deweight, estimate_prior_from_predictions, weighted_prior};
use debias::simgen::{default_spec, sample_dataset, SimKind};
use debias::{balancing_weights, prior_from_labels};

fn main() -> debias::Result<()> {
    let spec = default_spec(SimKind::Representative);
    let train_set = sample_dataset(&spec.clone().with_points(5_000).with_seed(20))?;
    let test_set = sample_dataset(&spec.with_points(5_000).with_seed(21))?;

    let label_prior = prior_from_labels(&train_set)?;
    let weights = per_example_weights(&train_set, &balancing_weights(&label_prior)?)?;
    let weighted = train_set.with_weights(Some(weights))?;
    let model_prior = weighted_prior(&weighted)?;
    println!("label prior    {:.4?}", label_prior.as_slice());
    println!("weighted prior {:.4?}", model_prior.as_slice());

    let cfg = TrainConfig {
        hidden_sizes: vec![16],
        max_iters: 3_000,
        restarts: 1,
        ..TrainConfig::default()
    };
    let model = train(&weighted, &cfg, weighted.weights())?;
    let probs = model.predict(&test_set)?;
    let fixed = deweight(&probs, &model_prior, &label_prior)?;

    println!("test labels          {:.4?}", prior_from_labels(&test_set)?.as_slice());
    println!("weighted model mean  {:.4?}", estimate_prior_from_predictions(&probs)?.as_slice());
    println!("deweighted mean      {:.4?}", estimate_prior_from_predictions(&fixed)?.as_slice());

    // Deweighting is invertible.
    let back = deweight(&fixed, &label_prior, &model_prior)?;
    let err = back
        .as_slice()
        .iter()
        .zip(probs.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round trip max error {err:.1e}");
    Ok(())
}
