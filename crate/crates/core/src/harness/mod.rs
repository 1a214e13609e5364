//! Training-size sweeps over the five model variants.
//!
//! For every training size and repeat:
//!
//! * `base` trains on a representative subset without weights;
//! * `weighted` trains on the same subset with balancing weights `1/P(i)`;
//! * `deweighted` moves the weighted model's predictions from its uniform
//!   weighted prior back to the subset's class fractions;
//! * `biased` trains on an equal-composition subset;
//! * `debiased` moves the biased model's predictions from the equal-mix
//!   prior to the representative subset's fractions.
//!
//! All variants are scored on one shared test set with stochastic
//! classification. Training subsets of increasing size are nested prefixes
//! of one pool per repeat, so curves differ by size rather than by resampling.

mod report;
mod svg;

pub use report::{emit_report, read_kl_csv, read_overshoot_csv, Format};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::stochastic_classify;
use crate::data::{per_example_weights, prior_from_labels, Dataset, Prior, ProbMatrix};
use crate::error::{Error, Result};
use crate::io::{load_dataset, CsvSchema};
use crate::metrics::{mean_kl_by_class, overshoot, Metric, VarianceForm};
use crate::mlp::{train, MlpModel, TrainConfig};
use crate::priors::{deweight, weighted_prior};
use crate::rng;
use crate::simgen::{default_spec, oracle_matrix, sample_dataset, SimConfig, SimKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Weighted,
    Deweighted,
    Biased,
    Debiased,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Base,
        Variant::Weighted,
        Variant::Deweighted,
        Variant::Biased,
        Variant::Debiased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Weighted => "weighted",
            Variant::Deweighted => "deweighted",
            Variant::Biased => "biased",
            Variant::Debiased => "debiased",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// The trained model whose predictions this variant uses.
    fn model(self) -> ModelKind {
        match self {
            Variant::Base => ModelKind::Base,
            Variant::Weighted | Variant::Deweighted => ModelKind::Weighted,
            Variant::Biased | Variant::Debiased => ModelKind::Biased,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ModelKind {
    Base,
    Weighted,
    Biased,
}

impl ModelKind {
    fn variant(self) -> Variant {
        match self {
            ModelKind::Base => Variant::Base,
            ModelKind::Weighted => Variant::Weighted,
            ModelKind::Biased => Variant::Biased,
        }
    }
}

/// Where training and test rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DataSource {
    /// Gaussian simulator. `n_points` and `seed` inside the two configs are
    /// ignored; sizes and seeds come from the sweep.
    Sim {
        representative: SimConfig,
        biased: SimConfig,
    },
    /// Labelled CSV files in the dataset format. Each repeat shuffles the
    /// training file with its own seed; equal-composition subsets keep the
    /// first `min_i n_i` rows of every class present in the subset.
    External {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        class_count: Option<usize>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Sim {
            representative: default_spec(SimKind::Representative),
            biased: default_spec(SimKind::Biased),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub variants: Vec<Variant>,
    pub test_size: usize,
    /// Master seed for data, training and classification.
    pub seed: u64,
    pub train: TrainConfig,
    pub source: DataSource,
    pub variance_form: VarianceForm,
    /// Default output directory for the CLI.
    pub out_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100, 1_000, 10_000, 100_000],
            repeats: 3,
            variants: Variant::ALL.to_vec(),
            test_size: 20_000,
            seed: 0,
            train: TrainConfig::default(),
            source: DataSource::default(),
            variance_form: VarianceForm::Derived,
            out_dir: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("sizes must be a non-empty list of positive sizes");
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sizes must be strictly ascending");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty");
        }
        if self.test_size == 0 {
            return bad("test_size must be positive");
        }
        self.train.validate()?;
        if let DataSource::Sim { representative, biased } = &self.source {
            representative.validate()?;
            biased.validate()?;
            if representative.dim() != biased.dim() || representative.class_count() != biased.class_count() {
                return bad("representative and biased simulations differ in shape");
            }
        }
        Ok(())
    }

    fn wanted(&self) -> Vec<Variant> {
        let mut v = self.variants.clone();
        v.sort();
        v.dedup();
        v
    }
}

/// One metric of one class for one trained variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootRow {
    pub variant: Variant,
    pub class: usize,
    pub size: usize,
    pub repeat: usize,
    pub metric: Metric,
    pub predicted: Option<f64>,
    pub observed: Option<f64>,
    /// Observed minus predicted.
    pub value: Option<f64>,
    /// Predicted variance of the metric.
    pub variance: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub variant: Variant,
    pub class: usize,
    pub size: usize,
    pub repeat: usize,
    /// Mean `D(true || model)` over test rows of this class, in nats.
    pub value: Option<f64>,
    pub clamped: usize,
}

/// Per-model training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub variant: Variant,
    pub size: usize,
    pub repeat: usize,
    pub best_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Rows dropped to equalise class counts (external data only).
    pub discarded: usize,
}

/// Mean over repeats of one `(variant, class, size, metric)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub class: usize,
    pub size: usize,
    pub metric: String,
    pub value: Option<f64>,
    pub variance: Option<f64>,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub class_count: usize,
    pub overshoot: Vec<OvershootRow>,
    /// Empty without an oracle.
    pub kl: Vec<KlRow>,
    pub training: Vec<TrainingRow>,
    /// Test-set probabilities of every scored variant, in table order.
    #[serde(skip)]
    pub predictions: Vec<VariantPredictions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantPredictions {
    pub variant: Variant,
    pub size: usize,
    pub repeat: usize,
    pub probs: ProbMatrix,
    /// Prior the probabilities are conditioned on.
    pub prior: Prior,
}

impl SweepResult {
    pub fn predictions_for(&self, variant: Variant, size: usize, repeat: usize) -> Option<&VariantPredictions> {
        self.predictions
            .iter()
            .find(|p| p.variant == variant && p.size == size && p.repeat == repeat)
    }

    /// Overshoot averaged over repeats. `variance` is the mean predicted
    /// variance of one run, so `sqrt(variance)` is the single-run band.
    pub fn overshoot_summary(&self) -> Vec<SummaryRow> {
        summarize(self.overshoot.iter().map(|r| {
            ((r.variant, r.class, r.size, r.metric.label().to_string()), r.value, r.variance)
        }))
    }

    /// KL averaged over repeats; `variance` is the spread across repeats.
    pub fn kl_summary(&self) -> Vec<SummaryRow> {
        let mut rows = summarize(self.kl.iter().map(|r| ((r.variant, r.class, r.size, "KL".to_string()), r.value, None)));
        for row in &mut rows {
            let vals: Vec<f64> = self
                .kl
                .iter()
                .filter(|r| (r.variant, r.class, r.size) == (row.variant, row.class, row.size))
                .filter_map(|r| r.value)
                .collect();
            row.variance = (vals.len() > 1).then(|| {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
            });
        }
        rows
    }

    pub fn overshoot_row(&self, variant: Variant, class: usize, size: usize, repeat: usize, metric: Metric) -> Option<&OvershootRow> {
        self.overshoot.iter().find(|r| {
            r.variant == variant && r.class == class && r.size == size && r.repeat == repeat && r.metric == metric
        })
    }

    pub fn kl_row(&self, variant: Variant, class: usize, size: usize, repeat: usize) -> Option<&KlRow> {
        self.kl
            .iter()
            .find(|r| r.variant == variant && r.class == class && r.size == size && r.repeat == repeat)
    }
}

type Key = (Variant, usize, usize, String);

fn summarize(rows: impl Iterator<Item = (Key, Option<f64>, Option<f64>)>) -> Vec<SummaryRow> {
    let mut groups: Vec<(Key, Vec<f64>, Vec<f64>)> = Vec::new();
    for (key, value, variance) in rows {
        let idx = match groups.iter().position(|g| g.0 == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        if let Some(v) = value {
            groups[idx].1.push(v);
            if let Some(var) = variance {
                groups[idx].2.push(var);
            }
        }
    }
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    groups
        .into_iter()
        .map(|((variant, class, size, metric), values, variances)| SummaryRow {
            variant,
            class,
            size,
            metric,
            value: mean(&values),
            variance: mean(&variances),
            repeats: values.len(),
        })
        .collect()
}

/// Training subsets for one repeat.
struct Pools {
    representative: Dataset,
    biased: Dataset,
}

struct Prepared {
    test: Dataset,
    oracle: Option<ProbMatrix>,
    pools: Vec<Pools>,
    external: bool,
}

fn prepare(cfg: &SweepConfig) -> Result<Prepared> {
    let max_size = *cfg.sizes.last().expect("validated");
    match &cfg.source {
        DataSource::Sim { representative, biased } => {
            let test_cfg = representative
                .clone()
                .with_points(cfg.test_size)
                .with_seed(rng::derive_seed(cfg.seed, 1));
            let test = sample_dataset(&test_cfg)?;
            let oracle = oracle_matrix(&test_cfg, &test)?;
            let pools = (0..cfg.repeats)
                .map(|r| {
                    let r = r as u64;
                    Ok(Pools {
                        representative: sample_dataset(
                            &representative
                                .clone()
                                .with_points(max_size)
                                .with_seed(rng::derive_seed(cfg.seed, 1000 + r)),
                        )?,
                        biased: sample_dataset(
                            &biased.clone().with_points(max_size).with_seed(rng::derive_seed(cfg.seed, 2000 + r)),
                        )?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Prepared {
                test,
                oracle: Some(oracle),
                pools,
                external: false,
            })
        }
        DataSource::External {
            train,
            test,
            class_count,
        } => {
            let mut schema = CsvSchema::features_only().with_label("label");
            if let Some(k) = class_count {
                schema = schema.with_class_count(*k);
            }
            let train_ds = load_dataset(train, &schema)?;
            let k = train_ds.class_count();
            let test_ds = load_dataset(test, &CsvSchema::features_only().with_label("label").with_class_count(k))?;
            if test_ds.dim() != train_ds.dim() {
                return Err(Error::DimensionMismatch {
                    expected: train_ds.dim(),
                    got: test_ds.dim(),
                });
            }
            if max_size > train_ds.len() {
                return Err(Error::InvalidConfig(format!(
                    "largest size {max_size} exceeds the {} training rows",
                    train_ds.len()
                )));
            }
            let test_ds = test_ds.prefix(cfg.test_size.min(test_ds.len()));
            let pools = (0..cfg.repeats)
                .map(|r| {
                    let mut idx: Vec<usize> = (0..train_ds.len()).collect();
                    idx.shuffle(&mut rng::seeded(rng::derive_seed(cfg.seed, 1000 + r as u64)));
                    let shuffled = train_ds.select(&idx);
                    Pools {
                        biased: shuffled.clone(),
                        representative: shuffled,
                    }
                })
                .collect();
            Ok(Prepared {
                test: test_ds,
                oracle: None,
                pools,
                external: true,
            })
        }
    }
}

/// Keeps the first `min_i n_i` rows of every class present in `ds`.
fn equalize(ds: &Dataset) -> Result<(Dataset, usize)> {
    let labels = ds.require_labels()?;
    let counts = ds.class_counts()?;
    let keep = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let mut taken = vec![0; counts.len()];
    let idx: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| {
            taken[l] += 1;
            taken[l] <= keep
        })
        .map(|(n, _)| n)
        .collect();
    let discarded = ds.len() - idx.len();
    Ok((ds.select(&idx), discarded))
}

/// Balancing weights for the classes present in `ds`.
fn present_class_weights(prior: &Prior) -> Vec<f64> {
    prior.as_slice().iter().map(|&p| if p > 0.0 { 1.0 / p } else { 0.0 }).collect()
}

struct Job {
    model: ModelKind,
    size_idx: usize,
    repeat: usize,
}

struct JobOutput {
    probs: ProbMatrix,
    /// Prior the model was trained under.
    trained_prior: Prior,
    /// Class fractions of the representative subset of the same size.
    representative_prior: Prior,
    training: TrainingRow,
}

fn train_seed(base: u64, model: ModelKind, size: usize, repeat: usize) -> u64 {
    let s = rng::derive_seed(base, model as u64 + 1);
    rng::derive_seed(rng::derive_seed(s, size as u64), repeat as u64)
}

fn run_job(cfg: &SweepConfig, prep: &Prepared, job: &Job) -> Result<JobOutput> {
    let size = cfg.sizes[job.size_idx];
    let pools = &prep.pools[job.repeat];
    let rep = pools.representative.prefix(size);
    let representative_prior = prior_from_labels(&rep)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = train_seed(cfg.train.seed, job.model, size, job.repeat);

    let (model, trained_prior, discarded): (MlpModel, Prior, usize) = match job.model {
        ModelKind::Base => (train(&rep, &train_cfg, None)?, representative_prior.clone(), 0),
        ModelKind::Weighted => {
            let w = per_example_weights(&rep, &present_class_weights(&representative_prior))?;
            let weighted = rep.clone().with_weights(Some(w))?;
            let prior = weighted_prior(&weighted)?;
            (train(&weighted, &train_cfg, weighted.weights())?, prior, 0)
        }
        ModelKind::Biased => {
            let (subset, discarded) = if prep.external {
                equalize(&rep)?
            } else {
                (pools.biased.prefix(size), 0)
            };
            let prior = prior_from_labels(&subset)?;
            (train(&subset, &train_cfg, None)?, prior, discarded)
        }
    };
    let report = model.training.as_ref().expect("trained model carries its report");
    let best = &report.restarts[report.best_restart];
    Ok(JobOutput {
        probs: model.predict(&prep.test)?,
        trained_prior,
        representative_prior,
        training: TrainingRow {
            variant: job.model.variant(),
            size,
            repeat: job.repeat,
            best_loss: report.best_loss,
            iterations: best.iterations,
            converged: best.converged,
            discarded,
        },
    })
}

/// Runs every training job, then scores all requested variants.
///
/// `jobs` worker threads share the training queue; results are aggregated
/// in `(variant, size, repeat)` order regardless of completion order, so
/// the output does not depend on `jobs`.
pub fn run_sweep(cfg: &SweepConfig, jobs: usize) -> Result<SweepResult> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let wanted = cfg.wanted();
    let mut models: Vec<ModelKind> = wanted.iter().map(|v| v.model()).collect();
    models.sort();
    models.dedup();

    let job_list: Vec<Job> = models
        .iter()
        .flat_map(|&model| {
            (0..cfg.sizes.len()).flat_map(move |size_idx| (0..cfg.repeats).map(move |repeat| Job { model, size_idx, repeat }))
        })
        .collect();
    let outputs = run_pool(&job_list, jobs.max(1), |job| {
        run_job(cfg, &prep, job).map_err(|e| Error::Sweep {
            variant: job.model.variant().name().to_string(),
            size: cfg.sizes[job.size_idx],
            repeat: job.repeat,
            source: Box::new(e),
        })
    })?;

    let truth = prep.test.require_labels()?;
    let k = prep.test.class_count();
    let mut result = SweepResult {
        config: cfg.clone(),
        class_count: k,
        overshoot: Vec::new(),
        kl: Vec::new(),
        training: outputs.iter().map(|o| o.training.clone()).collect(),
        predictions: Vec::new(),
    };
    for &variant in &wanted {
        for (size_idx, &size) in cfg.sizes.iter().enumerate() {
            for repeat in 0..cfg.repeats {
                let job_idx = job_list
                    .iter()
                    .position(|j| j.model == variant.model() && j.size_idx == size_idx && j.repeat == repeat)
                    .expect("job scheduled for every variant");
                let out = &outputs[job_idx];
                let tag = |e: Error| Error::Sweep {
                    variant: variant.name().to_string(),
                    size,
                    repeat,
                    source: Box::new(e),
                };
                let (probs, prior) = match variant {
                    Variant::Deweighted | Variant::Debiased => (
                        deweight(&out.probs, &out.trained_prior, &out.representative_prior).map_err(tag)?,
                        out.representative_prior.clone(),
                    ),
                    _ => (out.probs.clone(), out.trained_prior.clone()),
                };
                let cls_seed = rng::derive_seed(
                    rng::derive_seed(cfg.seed, 3000 + variant as u64),
                    (size as u64) << 16 | repeat as u64,
                );
                let assigned = stochastic_classify(&probs, cls_seed);
                let report = overshoot(&probs, &assigned, truth, cfg.variance_form).map_err(tag)?;
                for r in &report.rows {
                    result.overshoot.push(OvershootRow {
                        variant,
                        class: r.class,
                        size,
                        repeat,
                        metric: r.metric,
                        predicted: r.predicted,
                        observed: r.observed,
                        value: r.overshoot,
                        variance: r.variance,
                        z: r.z,
                    });
                }
                if let Some(oracle) = &prep.oracle {
                    let kl = mean_kl_by_class(oracle, &probs, truth).map_err(tag)?;
                    for (class, value) in kl.per_class.iter().enumerate() {
                        result.kl.push(KlRow {
                            variant,
                            class,
                            size,
                            repeat,
                            value: *value,
                            clamped: kl.clamped,
                        });
                    }
                }
                result.predictions.push(VariantPredictions {
                    variant,
                    size,
                    repeat,
                    probs,
                    prior,
                });
            }
        }
    }
    Ok(result)
}

/// Runs `f` over `items` on `threads` workers; results keep item order. On
/// failure the error of the lowest failing index is returned.
fn run_pool<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let slots: Vec<Mutex<Option<Result<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot poisoned").expect("every job ran"))
        .collect()
}
