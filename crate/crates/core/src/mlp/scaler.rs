use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Affine map sending each training column's `[min, max]` onto `[-1, 1]`.
///
/// Later data goes through the same map and may land outside `[-1, 1]`.
/// A constant training column (`hi == lo`) maps everything to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Scaler {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty);
        }
        let d = ds.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in ds.rows() {
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, &v), &l), &h) in out.iter_mut().zip(x).zip(&self.lo).zip(&self.hi) {
            let width = h - l;
            *o = if width > 0.0 {
                2.0 * (v - l) / width - 1.0
            } else {
                0.0
            };
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }
}

/// Fits a [`Scaler`] on `ds` and returns it with the scaled rows (row-major).
pub fn fit_scaler_and_scale(ds: &Dataset) -> Result<(Scaler, Vec<f64>)> {
    let scaler = Scaler::fit(ds)?;
    let mut scaled = vec![0.0; ds.features().len()];
    for (row, out) in ds.rows().zip(scaled.chunks_exact_mut(ds.dim())) {
        scaler.apply_into(row, out);
    }
    Ok((scaler, scaled))
}
