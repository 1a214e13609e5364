use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::augment::Convention;
use super::network::{loss_and_grad, Architecture, Batch, MlpModel, RestartSummary, TrainReport, Workspace};
use super::scaler::Scaler;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Optimiser settings. Defaults: one hidden layer of 32, Adam at 2e-3,
/// weight decay 1e-4, at most 25,000 full-batch steps, stop when a step
/// improves the loss by less than 1e-8, best of 5 restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_iters: usize,
    pub loss_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub convention: Convention,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![32],
            learning_rate: 2e-3,
            weight_decay: 1e-4,
            max_iters: 25_000,
            loss_tol: 1e-8,
            restarts: 5,
            seed: 0,
            convention: Convention::Interpolation,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.loss_tol > 0.0) {
            return bad("loss_tol must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

/// Fan-in uniform initialisation: every weight and bias of a layer with
/// `fan_in` inputs is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_params(arch: &Architecture, seed: u64, restart: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, restart as u64);
    let mut params = Vec::with_capacity(arch.param_count());
    for w in arch.layer_dims.windows(2) {
        let bound = 1.0 / (w[0].max(1) as f64).sqrt();
        for _ in 0..w[0] * w[1] + w[1] {
            params.push(rng.random_range(-bound..bound));
        }
    }
    params
}

struct RestartOutcome {
    params: Vec<f64>,
    loss: f64,
    iterations: usize,
    converged: bool,
}

fn run_restart(
    template: &MlpModel,
    batch: &Batch,
    cfg: &TrainConfig,
    restart: usize,
) -> Result<RestartOutcome> {
    let arch = &template.architecture;
    let view = batch.as_view();
    let mut params = init_params(arch, cfg.seed, restart);
    let mut grad = vec![0.0; params.len()];
    let mut ws = Workspace::default();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);

    let eval = |params: &[f64], grad: &mut [f64], ws: &mut Workspace| {
        loss_and_grad(arch, params, &template.head_offsets, &view, cfg.weight_decay, Some(grad), ws)
    };
    let mut loss = eval(&params, &mut grad, &mut ws);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { restart, iteration: 0 });
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        adam.step(&mut params, &grad);
        iterations += 1;
        let next = eval(&params, &mut grad, &mut ws);
        if !next.is_finite() {
            return Err(Error::NonFiniteLoss {
                restart,
                iteration: iterations,
            });
        }
        let improvement = loss - next;
        loss = next;
        if improvement < cfg.loss_tol {
            converged = true;
            break;
        }
    }
    Ok(RestartOutcome {
        params,
        loss,
        iterations,
        converged,
    })
}

/// Fits a model by full-batch Adam from `cfg.restarts` seeded
/// initialisations and keeps the one with the lowest final loss.
///
/// `weights = None` trains unweighted. A restart whose loss turns non-finite
/// is dropped; the call fails only if every restart does.
pub fn train(ds: &Dataset, cfg: &TrainConfig, weights: Option<&[f64]>) -> Result<MlpModel> {
    cfg.validate()?;
    ds.require_labels()?;
    if ds.len() < ds.class_count() {
        return Err(Error::InvalidDataset(format!(
            "{} examples cannot train {} classes",
            ds.len(),
            ds.class_count()
        )));
    }
    let scaler = Scaler::fit(ds)?;
    let mut model = MlpModel::zeros(scaler, cfg.convention, &cfg.hidden_sizes, ds.class_count())?;
    let batch = Batch::from_dataset(&model, ds, weights)?;

    let mut summaries = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut last_err = None;
    for restart in 0..cfg.restarts {
        match run_restart(&model, &batch, cfg, restart) {
            Ok(outcome) => {
                summaries.push(RestartSummary {
                    restart,
                    final_loss: Some(outcome.loss),
                    iterations: outcome.iterations,
                    converged: outcome.converged,
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, b)| outcome.loss < b.loss) {
                    best = Some((restart, outcome));
                }
            }
            Err(e) => {
                let iterations = match &e {
                    Error::NonFiniteLoss { iteration, .. } => *iteration,
                    _ => 0,
                };
                summaries.push(RestartSummary {
                    restart,
                    final_loss: None,
                    iterations,
                    converged: false,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    let Some((best_restart, outcome)) = best else {
        return Err(Error::AllRestartsFailed(Box::new(
            last_err.expect("at least one restart ran"),
        )));
    };
    model.params = outcome.params;
    model.training = Some(TrainReport {
        config: cfg.clone(),
        best_restart,
        best_loss: outcome.loss,
        restarts: summaries,
    });
    Ok(model)
}
