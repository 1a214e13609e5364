//! Feed-forward probabilistic classifier.
//!
//! Pipeline: range scaling to `[-1, 1]`, second-order polynomial
//! augmentation, fully connected ReLU layers, and a sequential log-odds head
//! with `K - 1` outputs. Training minimises (optionally weighted)
//! cross-entropy plus L2 weight decay with full-batch Adam.

mod adam;
mod augment;
mod head;
mod network;
mod scaler;
mod train;

pub use adam::Adam;
pub use augment::{AugmentPlan, AugmentSpec, Convention};
pub use head::{
    head_offsets, logits_to_probs, logits_to_probs_softmax, sequential_jacobian, softmax_jacobian,
};
pub use network::{parameter_count, Architecture, MlpModel, RestartSummary, TrainReport};
pub use scaler::{fit_scaler_and_scale, Scaler};
pub use train::{init_params, train, TrainConfig};

use std::path::Path;

use crate::error::{Error, Result};

impl MlpModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: MlpModel = crate::io::read_json(path)?;
        let expected = model.architecture.param_count();
        if model.params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: model.params.len(),
            });
        }
        if model.architecture.input_dim() != model.augment.output_dim()
            || model.architecture.output_dim() + 1 != model.class_count
            || model.scaler.dim() != model.augment.base_dim
        {
            return Err(Error::InvalidConfig("model file has inconsistent layer dimensions".into()));
        }
        Ok(model)
    }
}
