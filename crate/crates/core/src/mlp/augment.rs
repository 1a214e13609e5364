//! Second-order polynomial feature augmentation.
//!
//! Each output is a monomial `x_0^{n_0} ... x_{d-1}^{n_{d-1}}`. Monomials
//! are ordered lexicographically by the exponent tuple `(n_0, ..., n_{d-1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Every exponent in `{0, 1, 2}` independently, constant excluded:
    /// `3^d - 1` terms.
    Interpolation,
    /// Total degree 1 or 2: `d (d + 3) / 2` terms.
    Mathematician,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub convention: Convention,
    pub base_dim: usize,
}

impl AugmentSpec {
    pub fn new(convention: Convention, base_dim: usize) -> Self {
        Self {
            convention,
            base_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        let d = self.base_dim;
        match self.convention {
            Convention::Interpolation => 3usize.pow(d as u32) - 1,
            Convention::Mathematician => d * (d + 3) / 2,
        }
    }

    /// Exponent tuples in output order.
    pub fn exponents(&self) -> Vec<Vec<u8>> {
        let d = self.base_dim;
        let mut out = Vec::with_capacity(self.output_dim());
        let mut tuple = vec![0u8; d];
        // Odometer over {0,1,2}^d with the last axis fastest gives
        // ascending lexicographic order.
        loop {
            let pos = (0..d).rev().find(|&k| tuple[k] < 2);
            let Some(pos) = pos else { break };
            tuple[pos] += 1;
            tuple[pos + 1..].iter_mut().for_each(|t| *t = 0);
            let degree: u8 = tuple.iter().sum();
            let keep = match self.convention {
                Convention::Interpolation => true,
                Convention::Mathematician => degree <= 2,
            };
            if keep {
                out.push(tuple.clone());
            }
        }
        out
    }

    pub fn plan(&self) -> AugmentPlan {
        AugmentPlan {
            base_dim: self.base_dim,
            exponents: self.exponents(),
        }
    }

    pub fn augment(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.plan().augment(x)
    }
}

/// Precomputed exponent table for repeated augmentation.
#[derive(Debug, Clone)]
pub struct AugmentPlan {
    base_dim: usize,
    exponents: Vec<Vec<u8>>,
}

impl AugmentPlan {
    pub fn output_dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn augment(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.base_dim {
            return Err(Error::DimensionMismatch {
                expected: self.base_dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.output_dim()];
        self.augment_into(x, &mut out);
        Ok(out)
    }

    pub fn augment_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, exps) in out.iter_mut().zip(&self.exponents) {
            *o = exps
                .iter()
                .zip(x)
                .map(|(&e, &v)| match e {
                    0 => 1.0,
                    1 => v,
                    _ => v * v,
                })
                .product();
        }
    }
}
