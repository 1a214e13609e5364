use serde::{Deserialize, Serialize};

use super::augment::{AugmentPlan, AugmentSpec, Convention};
use super::head::{head_offsets, logits_to_probs_into, nll_and_grad};
use super::scaler::Scaler;
use crate::data::{Dataset, ProbMatrix};
use crate::error::{Error, Result};

/// Layer widths from the augmented input to the `K - 1` head outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: &[usize], class_count: usize) -> Self {
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(input_dim);
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(class_count - 1);
        Self { layer_dims }
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offsets of layer `l`'s weight block (`in x out`, row-major) and bias.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.layer_dims[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (start, start + self.layer_dims[l] * self.layer_dims[l + 1])
    }
}

/// Number of free parameters for a base dimension, augmentation convention,
/// hidden widths and class count.
pub fn parameter_count(base_dim: usize, convention: Convention, hidden: &[usize], class_count: usize) -> usize {
    let input = AugmentSpec::new(convention, base_dim).output_dim();
    Architecture::new(input, hidden, class_count).param_count()
}

/// Summary of the optimisation that produced a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: super::TrainConfig,
    pub best_restart: usize,
    pub best_loss: f64,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub final_loss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Trained classifier: scaling, augmentation, ReLU network, sequential head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub scaler: Scaler,
    pub augment: AugmentSpec,
    pub architecture: Architecture,
    pub class_count: usize,
    /// Per layer: weights (`in x out`, row-major) then biases.
    pub params: Vec<f64>,
    pub head_offsets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainReport>,
}

impl MlpModel {
    /// A model with every parameter zero (predicts the uniform prior).
    pub fn zeros(scaler: Scaler, convention: Convention, hidden: &[usize], class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidConfig("class_count must be at least 2".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        let augment = AugmentSpec::new(convention, scaler.dim());
        let architecture = Architecture::new(augment.output_dim(), hidden, class_count);
        Ok(Self {
            params: vec![0.0; architecture.param_count()],
            scaler,
            augment,
            architecture,
            class_count,
            head_offsets: head_offsets(class_count),
            training: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn base_dim(&self) -> usize {
        self.augment.base_dim
    }

    /// Scaled and augmented rows of `ds`, row-major.
    pub fn design_matrix(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.dim() != self.base_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base_dim(),
                got: ds.dim(),
            });
        }
        Ok(design_matrix(&self.scaler, &self.augment.plan(), ds))
    }

    /// Network outputs `y` (length `K - 1`) for one raw feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scaled = self.scaler.apply(x)?;
        let input = self.augment.plan().augment(&scaled)?;
        let mut ws = Workspace::default();
        forward_batch(&self.architecture, &self.params, &input, 1, &mut ws);
        Ok(ws.acts.last().unwrap().clone())
    }

    pub fn predict(&self, ds: &Dataset) -> Result<ProbMatrix> {
        let x = self.design_matrix(ds)?;
        let n = ds.len();
        let k = self.class_count;
        if n == 0 {
            return Ok(ProbMatrix::empty(k));
        }
        let mut ws = Workspace::default();
        forward_batch(&self.architecture, &self.params, &x, n, &mut ws);
        let y = ws.acts.last().unwrap();
        let mut data = vec![0.0; n * k];
        for (yr, out) in y.chunks_exact(k - 1).zip(data.chunks_exact_mut(k)) {
            logits_to_probs_into(yr, &self.head_offsets, out);
        }
        Ok(ProbMatrix::from_vec_unchecked(k, data))
    }

    /// Weighted cross-entropy plus `weight_decay / (2 N_p) * sum(theta^2)`.
    /// `weights = None` weighs every example equally.
    pub fn loss(&self, ds: &Dataset, weights: Option<&[f64]>, weight_decay: f64) -> Result<f64> {
        let batch = Batch::from_dataset(self, ds, weights)?;
        let mut ws = Workspace::default();
        Ok(loss_and_grad(
            &self.architecture,
            &self.params,
            &self.head_offsets,
            &batch.as_view(),
            weight_decay,
            None,
            &mut ws,
        ))
    }

    /// Loss and its gradient with respect to `params`.
    pub fn loss_and_gradient(
        &self,
        ds: &Dataset,
        weights: Option<&[f64]>,
        weight_decay: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let batch = Batch::from_dataset(self, ds, weights)?;
        let mut ws = Workspace::default();
        let mut grad = vec![0.0; self.param_count()];
        let loss = loss_and_grad(
            &self.architecture,
            &self.params,
            &self.head_offsets,
            &batch.as_view(),
            weight_decay,
            Some(&mut grad),
            &mut ws,
        );
        Ok((loss, grad))
    }
}

pub(crate) fn design_matrix(scaler: &Scaler, plan: &AugmentPlan, ds: &Dataset) -> Vec<f64> {
    let a = plan.output_dim();
    let mut x = vec![0.0; ds.len() * a];
    let mut scaled = vec![0.0; ds.dim()];
    for (row, out) in ds.rows().zip(x.chunks_exact_mut(a)) {
        scaler.apply_into(row, &mut scaled);
        plan.augment_into(&scaled, out);
    }
    x
}

/// Precomputed training inputs.
pub(crate) struct Batch {
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

pub(crate) struct BatchView<'a> {
    pub x: &'a [f64],
    pub labels: &'a [usize],
    pub weights: &'a [f64],
    pub total_weight: f64,
}

impl Batch {
    pub fn from_dataset(model: &MlpModel, ds: &Dataset, weights: Option<&[f64]>) -> Result<Self> {
        let labels = ds.require_labels()?.to_vec();
        if labels.iter().any(|&l| l >= model.class_count) {
            return Err(Error::InvalidDataset(format!(
                "labels exceed the model's {} classes",
                model.class_count
            )));
        }
        let weights = match weights {
            Some(w) if w.len() != ds.len() => {
                return Err(Error::DimensionMismatch {
                    expected: ds.len(),
                    got: w.len(),
                })
            }
            Some(w) => {
                if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidDataset(format!(
                        "weight at row {i} is {}, weights must be positive",
                        w[i]
                    )));
                }
                w.to_vec()
            }
            None => vec![1.0; ds.len()],
        };
        Ok(Self {
            x: model.design_matrix(ds)?,
            labels,
            weights,
        })
    }

    pub fn as_view(&self) -> BatchView<'_> {
        BatchView {
            x: &self.x,
            labels: &self.labels,
            weights: &self.weights,
            total_weight: self.weights.iter().sum(),
        }
    }
}

/// Reusable activation and delta buffers.
#[derive(Default)]
pub(crate) struct Workspace {
    /// Outputs of layers 1..=L (post-ReLU for hidden layers, raw for the last).
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// `c = op(a) * op(b) + beta * c` for row-major operands; `op(a)` is
/// `m x k`, `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements checked by the debug assertion.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn forward_batch(arch: &Architecture, params: &[f64], x: &[f64], n: usize, ws: &mut Workspace) {
    let layers = arch.n_layers();
    ws.acts.resize_with(layers, Vec::new);
    for l in 0..layers {
        let (din, dout) = (arch.layer_dims[l], arch.layer_dims[l + 1]);
        let (w_off, b_off) = arch.layer_offsets(l);
        let w = &params[w_off..b_off];
        let b = &params[b_off..b_off + dout];
        let (before, rest) = ws.acts.split_at_mut(l);
        let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
        let out = &mut rest[0];
        out.resize(n * dout, 0.0);
        for row in out.chunks_exact_mut(dout) {
            row.copy_from_slice(b);
        }
        gemm(n, din, dout, input, false, w, false, 1.0, out);
        if l + 1 < layers {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

pub(crate) fn loss_and_grad(
    arch: &Architecture,
    params: &[f64],
    offsets: &[f64],
    batch: &BatchView<'_>,
    weight_decay: f64,
    grad: Option<&mut [f64]>,
    ws: &mut Workspace,
) -> f64 {
    let n = batch.labels.len();
    let n_params = params.len() as f64;
    let decay = weight_decay / (2.0 * n_params) * params.iter().map(|p| p * p).sum::<f64>();
    if n == 0 {
        if let Some(g) = grad {
            for (gi, &p) in g.iter_mut().zip(params) {
                *gi = weight_decay / n_params * p;
            }
        }
        return decay;
    }
    forward_batch(arch, params, batch.x, n, ws);
    let layers = arch.n_layers();
    let out_dim = arch.output_dim();
    let scale = 1.0 / batch.total_weight;

    ws.delta.resize(n * out_dim, 0.0);
    let y = &ws.acts[layers - 1];
    let mut data_loss = 0.0;
    for (((yr, dr), &label), &w) in y
        .chunks_exact(out_dim)
        .zip(ws.delta.chunks_exact_mut(out_dim))
        .zip(batch.labels)
        .zip(batch.weights)
    {
        let nll = nll_and_grad(yr, offsets, label, dr);
        data_loss += w * nll;
        let f = w * scale;
        dr.iter_mut().for_each(|d| *d *= f);
    }
    let loss = data_loss * scale + decay;

    let Some(grad) = grad else { return loss };
    for l in (0..layers).rev() {
        let (din, dout) = (arch.layer_dims[l], arch.layer_dims[l + 1]);
        let (w_off, b_off) = arch.layer_offsets(l);
        let input: &[f64] = if l == 0 { batch.x } else { &ws.acts[l - 1] };
        gemm(din, n, dout, input, true, &ws.delta, false, 0.0, &mut grad[w_off..b_off]);
        let gb = &mut grad[b_off..b_off + dout];
        gb.iter_mut().for_each(|g| *g = 0.0);
        for row in ws.delta.chunks_exact(dout) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        if l > 0 {
            ws.delta_prev.resize(n * din, 0.0);
            gemm(n, dout, din, &ws.delta, false, &params[w_off..b_off], true, 0.0, &mut ws.delta_prev);
            for (d, &a) in ws.delta_prev.iter_mut().zip(&ws.acts[l - 1]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
    let k = weight_decay / n_params;
    for (g, &p) in grad.iter_mut().zip(params) {
        *g += k * p;
    }
    loss
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn unit_scaler(d: usize) -> Scaler {
        Scaler {
            lo: vec![-1.0; d],
            hi: vec![1.0; d],
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(4, Convention::Interpolation, &[32], 3), 2658);
        // Sequential head over five classes has four outputs.
        assert_eq!(parameter_count(5, Convention::Mathematician, &[128, 32], 5), 6948);
        assert_eq!(parameter_count(5, Convention::Mathematician, &[128, 32], 4), 6915);
    }

    #[test]
    fn layer_offsets_tile_params() {
        let arch = Architecture::new(3, &[4, 2], 3);
        assert_eq!(arch.layer_offsets(0), (0, 12));
        assert_eq!(arch.layer_offsets(1), (16, 24));
        assert_eq!(arch.layer_offsets(2), (26, 30));
        assert_eq!(arch.param_count(), 32);
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = MlpModel::zeros(unit_scaler(2), Convention::Interpolation, &[5], 3).unwrap();
        assert_eq!(model.forward(&[0.3, -0.2]).unwrap(), vec![0.0, 0.0]);
        let ds = Dataset::new(vec![0.1, 0.2, 0.3, 0.4], 2, None, None, 3).unwrap();
        let p = model.predict(&ds).unwrap();
        for row in p.rows() {
            for v in row {
                assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        let empty = Dataset::new(vec![], 2, None, None, 3).unwrap();
        assert!(model.predict(&empty).unwrap().is_empty());
    }

    #[test]
    fn single_linear_layer_passes_scaled_input() {
        // d = 1 mathematician augmentation gives (x, x^2); pick out x.
        let scaler = Scaler {
            lo: vec![0.0],
            hi: vec![10.0],
        };
        let mut model = MlpModel::zeros(scaler, Convention::Mathematician, &[], 2).unwrap();
        assert_eq!(model.param_count(), 3);
        model.params = vec![1.0, 0.0, 0.0];
        assert_eq!(model.forward(&[7.5]).unwrap(), vec![0.5]);
        assert!(model.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_is_continuous_in_weights() {
        let mut model = MlpModel::zeros(unit_scaler(2), Convention::Interpolation, &[4], 3).unwrap();
        for (i, p) in model.params.iter_mut().enumerate() {
            *p = ((i * 37 % 11) as f64 - 5.0) / 10.0;
        }
        let x = [0.3, -0.6];
        let y0 = model.forward(&x).unwrap();
        for i in 0..model.param_count() {
            for eps in [1e-3, 1e-5, 1e-7] {
                let mut m = model.clone();
                m.params[i] += eps;
                let y = m.forward(&x).unwrap();
                let dy: f64 = y.iter().zip(&y0).map(|(a, b)| (a - b).abs()).sum();
                assert!(dy <= 10.0 * eps, "param {i}, eps {eps}: {dy}");
            }
        }
    }

    #[test]
    fn loss_reference_values() {
        let model = MlpModel::zeros(unit_scaler(1), Convention::Interpolation, &[3], 3).unwrap();
        let ds = Dataset::new(vec![0.1, 0.5, -0.2], 1, Some(vec![0, 1, 2]), None, 3).unwrap();
        assert_abs_diff_eq!(model.loss(&ds, None, 0.0).unwrap(), 3f64.ln(), epsilon = 1e-14);

        // A saturated single-layer model that is right on every example.
        let mut sharp = MlpModel::zeros(unit_scaler(1), Convention::Mathematician, &[], 2).unwrap();
        sharp.params = vec![-800.0, 0.0, 0.0];
        let ds = Dataset::new(vec![-1.0, 1.0], 1, Some(vec![0, 1]), None, 2).unwrap();
        assert_abs_diff_eq!(sharp.loss(&ds, None, 0.0).unwrap(), 0.0, epsilon = 1e-300);

        let unlabelled = ds.without_labels();
        assert!(matches!(sharp.loss(&unlabelled, None, 0.0), Err(Error::MissingLabels)));
    }

    #[test]
    fn weight_decay_term() {
        let mut model = MlpModel::zeros(unit_scaler(1), Convention::Mathematician, &[], 2).unwrap();
        model.params = vec![1.0, 2.0, 3.0];
        let ds = Dataset::new(vec![], 1, Some(vec![]), None, 2).unwrap();
        let (loss, grad) = model.loss_and_gradient(&ds, None, 0.6).unwrap();
        assert_abs_diff_eq!(loss, 0.6 / 6.0 * 14.0, epsilon = 1e-14);
        for (g, e) in grad.iter().zip([0.2, 0.4, 0.6]) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-15);
        }
    }
}
