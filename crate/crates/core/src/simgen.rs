//! Axis-aligned Gaussian class simulator and its exact posterior.
//!
//! The default configuration is the 4-dimensional, 3-class problem: heavy
//! overlap along every axis, a rare class 2 that is wider along axis 2, and
//! an irrelevant axis 3 on which every class is `N(0, 1)`.
//!
//! Labels are drawn i.i.d. from the class fractions, so realised counts
//! scatter around `n_points * fraction`. Gaussian variates use the ziggurat
//! sampler of `rand_distr::StandardNormal` on a ChaCha8 stream.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Prior, ProbMatrix};
use crate::error::{Error, Result};
use crate::rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One class: independent normal per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassSpec {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianClassSpec {
    pub fn new(mean: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mean.len() != sigma.len() || mean.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "mean has {} entries, sigma has {}",
                mean.len(),
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("sigma entries must be positive".into()));
        }
        Ok(Self { mean, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.sigma)
            .zip(x)
            .map(|((m, s), v)| {
                let z = (v - m) / s;
                -0.5 * z * z - s.ln() - LN_SQRT_2PI
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    /// Nominal survey mix (0.6, 0.38, 0.02).
    Representative,
    /// Equal class fractions.
    Biased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub classes: Vec<GaussianClassSpec>,
    pub fractions: Prior,
    pub n_points: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(classes: Vec<GaussianClassSpec>, fractions: Prior, n_points: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            classes,
            fractions,
            n_points,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if self.fractions.len() != self.classes.len() {
            return Err(Error::InvalidConfig(format!(
                "{} fractions for {} classes",
                self.fractions.len(),
                self.classes.len()
            )));
        }
        let d = self.classes[0].dim();
        for c in &self.classes {
            GaussianClassSpec::new(c.mean.clone(), c.sigma.clone())?;
            if c.dim() != d {
                return Err(Error::InvalidConfig("class specs differ in dimension".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.classes[0].dim()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn with_points(mut self, n_points: usize) -> Self {
        self.n_points = n_points;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// The built-in 4-d, 3-class simulation with one million points and seed 0.
pub fn default_spec(kind: SimKind) -> SimConfig {
    let ones = vec![1.0; 4];
    let classes = vec![
        GaussianClassSpec {
            mean: vec![0.0, 0.0, 0.0, 0.0],
            sigma: ones.clone(),
        },
        GaussianClassSpec {
            mean: vec![1.0, 0.5, 0.0, 0.0],
            sigma: ones,
        },
        GaussianClassSpec {
            mean: vec![-0.75, -0.5, 0.0, 0.0],
            sigma: vec![1.0, 1.0, 2.0, 1.0],
        },
    ];
    let fractions = match kind {
        SimKind::Representative => Prior::from_vec_unchecked(vec![0.6, 0.38, 0.02]),
        SimKind::Biased => Prior::uniform(3),
    };
    SimConfig {
        classes,
        fractions,
        n_points: 1_000_000,
        seed: 0,
    }
}

/// Draws `cfg.n_points` labelled rows. Fully determined by `cfg.seed`.
pub fn sample_dataset(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.dim();
    let mut rng = rng::seeded(cfg.seed);
    let cumulative: Vec<f64> = cfg
        .fractions
        .as_slice()
        .iter()
        .scan(0.0, |acc, f| {
            *acc += f;
            Some(*acc)
        })
        .collect();
    let last_nonzero = cfg
        .fractions
        .as_slice()
        .iter()
        .rposition(|&f| f > 0.0)
        .unwrap_or(0);

    let mut features = Vec::with_capacity(cfg.n_points * d);
    let mut labels = Vec::with_capacity(cfg.n_points);
    for _ in 0..cfg.n_points {
        let u: f64 = rng.random();
        let label = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last_nonzero);
        let spec = &cfg.classes[label];
        for (m, s) in spec.mean.iter().zip(&spec.sigma) {
            let z: f64 = rng.sample(StandardNormal);
            features.push(m + s * z);
        }
        labels.push(label);
    }
    Dataset::new(features, d, Some(labels), None, cfg.class_count())
}

/// Exact `P(i|x)` for the mixture, evaluated in log space.
pub fn true_posterior(cfg: &SimConfig, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; cfg.class_count()];
    posterior_into(cfg, x, &mut out);
    Ok(out)
}

fn posterior_into(cfg: &SimConfig, x: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, (spec, &f)) in out.iter_mut().zip(cfg.classes.iter().zip(cfg.fractions.as_slice())) {
        *o = if f > 0.0 {
            f.ln() + spec.log_density(x)
        } else {
            f64::NEG_INFINITY
        };
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// [`true_posterior`] for every row of `ds`.
pub fn oracle_matrix(cfg: &SimConfig, ds: &Dataset) -> Result<ProbMatrix> {
    if ds.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            got: ds.dim(),
        });
    }
    let k = cfg.class_count();
    let mut data = vec![0.0; ds.len() * k];
    for (row, out) in ds.rows().zip(data.chunks_exact_mut(k)) {
        posterior_into(cfg, row, out);
    }
    Ok(ProbMatrix::from_vec_unchecked(k, data))
}
