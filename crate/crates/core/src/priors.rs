//! Prior bookkeeping and correction.
//!
//! A classifier trained on weighted or rebalanced data predicts posteriors
//! under the weighted prior `P_w(i)`. [`deweight`] swaps that prior for
//! another one row by row; [`pcp_solve`] finds the prior that is consistent
//! with the model's own deweighted predictions on unlabelled data (the
//! prediction-consistent prior), by EM restricted to the mixture weights.
//!
//! Throughout, `r_mi = P_M(i|x_m) / P_M(i)` are the model's likelihood ratios
//! and `s_m(P) = sum_i P(i) r_mi`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Prior, ProbMatrix};
use crate::error::{Error, Result};

/// Denominators below this are treated as malformed input.
pub const MIN_DENOMINATOR: f64 = 1e-300;

/// Weight-sum class fractions `sum_{n: i_n = i} w_n / sum_n w_n`. Unweighted
/// datasets reduce to the label frequencies.
pub fn weighted_prior(ds: &Dataset) -> Result<Prior> {
    let labels = ds.require_labels()?;
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let mut sums = vec![0.0; ds.class_count()];
    match ds.weights() {
        Some(w) => labels.iter().zip(w).for_each(|(&l, &w)| sums[l] += w),
        None => labels.iter().for_each(|&l| sums[l] += 1.0),
    }
    Prior::normalized(sums)
}

/// Replaces `old` by `new` in every row: multiply entry `i` by
/// `new_i / old_i`, then renormalise the row.
pub fn deweight(probs: &ProbMatrix, old: &Prior, new: &Prior) -> Result<ProbMatrix> {
    let k = probs.class_count();
    for len in [old.len(), new.len()] {
        if len != k {
            return Err(Error::DimensionMismatch { expected: k, got: len });
        }
    }
    let factors: Vec<f64> = (0..k)
        .map(|i| match (old[i] > 0.0, new[i] > 0.0) {
            (true, _) => Ok(new[i] / old[i]),
            (false, false) => Ok(0.0),
            (false, true) => Err(Error::ZeroPrior { class: i }),
        })
        .collect::<Result<_>>()?;

    let mut data = vec![0.0; probs.as_slice().len()];
    for (m, (row, out)) in probs.rows().zip(data.chunks_exact_mut(k)).enumerate() {
        let mut sum = 0.0;
        for ((o, &p), &f) in out.iter_mut().zip(row).zip(&factors) {
            *o = f * p;
            sum += *o;
        }
        if !(sum >= MIN_DENOMINATOR) {
            return Err(Error::DegenerateRow { row: m, value: sum });
        }
        out.iter_mut().for_each(|o| *o /= sum);
    }
    Ok(ProbMatrix::from_vec_unchecked(k, data))
}

/// Column means of `probs`: the prior implied by the predictions.
pub fn estimate_prior_from_predictions(probs: &ProbMatrix) -> Result<Prior> {
    if probs.is_empty() {
        return Err(Error::Empty);
    }
    let k = probs.class_count();
    let mut sums = vec![NeumaierSum::default(); k];
    for row in probs.rows() {
        sums.iter_mut().zip(row).for_each(|(s, &v)| s.add(v));
    }
    let n = probs.n_rows() as f64;
    Prior::normalized(sums.into_iter().map(|s| s.total() / n).collect())
}

/// Compensated summation with a fixed order, for reproducible sums.
#[derive(Debug, Clone, Copy, Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Likelihood ratios restricted to the classes with a positive model prior.
struct Ratios {
    k: usize,
    active: Vec<usize>,
    /// `N x active.len()`, row-major.
    r: Vec<f64>,
}

impl Ratios {
    fn new(probs: &ProbMatrix, model_prior: &Prior) -> Result<Self> {
        let k = probs.class_count();
        if model_prior.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: model_prior.len(),
            });
        }
        let active: Vec<usize> = (0..k).filter(|&i| model_prior[i] > 0.0).collect();
        if let Some(i) = (0..k).find(|&i| model_prior[i] <= 0.0 && probs.rows().any(|r| r[i] != 0.0)) {
            return Err(Error::InvalidProbabilities(format!(
                "class {i} has model prior 0 but non-zero predictions"
            )));
        }
        let mut r = Vec::with_capacity(probs.n_rows() * active.len());
        for row in probs.rows() {
            r.extend(active.iter().map(|&i| row[i] / model_prior[i]));
        }
        Ok(Self { k, active, r })
    }

    fn width(&self) -> usize {
        self.active.len()
    }

    fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.r.chunks_exact(self.width())
    }

    fn restrict(&self, p: &Prior) -> Vec<f64> {
        self.active.iter().map(|&i| p[i]).collect()
    }

    fn expand(&self, q: &[f64]) -> Prior {
        let mut full = vec![0.0; self.k];
        for (&i, &v) in self.active.iter().zip(q) {
            full[i] = v;
        }
        let sum: f64 = full.iter().sum();
        Prior::from_vec_unchecked(full.into_iter().map(|v| v / sum).collect())
    }

    fn denominators(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.rows()
            .enumerate()
            .map(|(m, row)| {
                let s: f64 = row.iter().zip(q).map(|(r, p)| r * p).sum();
                if s >= MIN_DENOMINATOR {
                    Ok(s)
                } else {
                    Err(Error::DegenerateRow { row: m, value: s })
                }
            })
            .collect()
    }

    fn nll(denominators: &[f64]) -> f64 {
        let mut acc = NeumaierSum::default();
        denominators.iter().for_each(|s| acc.add(-s.ln()));
        acc.total()
    }

    /// One recursion step: the mean of the rows deweighted to `q`.
    fn em_step(&self, q: &[f64], denominators: &[f64]) -> Vec<f64> {
        let mut sums = vec![NeumaierSum::default(); q.len()];
        for (row, &s) in self.rows().zip(denominators) {
            for ((acc, &r), &p) in sums.iter_mut().zip(row).zip(q) {
                acc.add(p * r / s);
            }
        }
        let n = denominators.len() as f64;
        let mut next: Vec<f64> = sums.into_iter().map(|s| s.total() / n).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        next
    }

    /// Gradient and Hessian of the relative NLL over the active classes.
    fn derivatives(&self, denominators: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = self.width();
        let mut grad = vec![0.0; w];
        let mut hess = vec![0.0; w * w];
        for (row, &s) in self.rows().zip(denominators) {
            let inv = 1.0 / s;
            let inv2 = inv * inv;
            for j in 0..w {
                grad[j] -= row[j] * inv;
                let a = row[j] * inv2;
                for k in j..w {
                    hess[j * w + k] += a * row[k];
                }
            }
        }
        for j in 0..w {
            for k in 0..j {
                hess[j * w + k] = hess[k * w + j];
            }
        }
        (grad, hess)
    }
}

/// `-sum_m ln sum_i (candidate_i / model_prior_i) P_M(i|x_m)`: the unlabelled
/// negative log-likelihood of `candidate`, up to a constant that does not
/// depend on it. Zero at `candidate = model_prior`.
pub fn relative_nll(probs: &ProbMatrix, model_prior: &Prior, candidate: &Prior) -> Result<f64> {
    let ratios = Ratios::new(probs, model_prior)?;
    check_len(candidate, probs.class_count())?;
    let s = ratios.denominators(&ratios.restrict(candidate))?;
    Ok(Ratios::nll(&s))
}

/// Hessian of [`relative_nll`] with respect to the prior, `K x K` row-major:
/// `H_jk = sum_m r_mj r_mk / s_m^2`.
pub fn pcp_hessian(probs: &ProbMatrix, model_prior: &Prior, candidate: &Prior) -> Result<Vec<f64>> {
    let ratios = Ratios::new(probs, model_prior)?;
    let k = probs.class_count();
    check_len(candidate, k)?;
    let s = ratios.denominators(&ratios.restrict(candidate))?;
    let (_, active_h) = ratios.derivatives(&s);
    let w = ratios.width();
    let mut h = vec![0.0; k * k];
    for (a, &i) in ratios.active.iter().enumerate() {
        for (b, &j) in ratios.active.iter().enumerate() {
            h[i * k + j] = active_h[a * w + b];
        }
    }
    Ok(h)
}

/// Eigenvalues of a symmetric `k x k` row-major matrix, ascending.
pub fn symmetric_eigenvalues(m: &[f64], k: usize) -> Vec<f64> {
    let mat = DMatrix::from_row_slice(k, k, m);
    let mut ev: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn check_len(p: &Prior, k: usize) -> Result<()> {
    if p.len() == k {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: k, got: p.len() })
    }
}

/// Starting point for [`pcp_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcpInit {
    Uniform,
    Model,
    Given(Prior),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpOptions {
    pub init: PcpInit,
    /// Stop when successive priors differ by less than this in mean
    /// absolute deviation.
    pub tol: f64,
    pub max_iter: usize,
    /// Try constrained Newton steps, keeping the recursion step whenever
    /// Newton fails to lower the likelihood.
    pub newton: bool,
}

impl Default for PcpOptions {
    fn default() -> Self {
        Self {
            init: PcpInit::Uniform,
            tol: 1e-8,
            max_iter: 10_000,
            newton: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpResult {
    pub prior: Prior,
    /// Accepted updates before the fixed-point residual fell below `tol`.
    pub iterations: usize,
    pub converged: bool,
    /// Relative NLL of the initial prior and of every accepted update.
    pub nll_trace: Vec<f64>,
    pub newton_steps: usize,
}

/// Solves `P(i) = (1/N) sum_m deweight(P_M(.|x_m), P_M, P)_i` for `P`.
///
/// The returned prior `P*` is the last iterate whose update `F(P*)` moved by
/// less than `tol` (mean absolute deviation), so `|P* - F(P*)| <= K tol`
/// entrywise. Without convergence after `max_iter` updates the latest
/// iterate (the lowest likelihood seen) comes back with `converged = false`.
pub fn pcp_solve(probs: &ProbMatrix, model_prior: &Prior, opts: &PcpOptions) -> Result<PcpResult> {
    if probs.is_empty() {
        return Err(Error::Empty);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidConfig("tol must be positive".into()));
    }
    let k = probs.class_count();
    let ratios = Ratios::new(probs, model_prior)?;
    let init = match &opts.init {
        PcpInit::Uniform => Prior::uniform(k),
        PcpInit::Model => model_prior.clone(),
        PcpInit::Given(p) => {
            check_len(p, k)?;
            p.clone()
        }
    };
    let mut q = ratios.restrict(&init);
    let q_sum: f64 = q.iter().sum();
    if q_sum <= 0.0 {
        return Err(Error::InvalidPrior("initial prior puts no mass on any class the model can predict".into()));
    }
    q.iter_mut().for_each(|v| *v /= q_sum);

    let mut s = ratios.denominators(&q)?;
    let mut nll = Ratios::nll(&s);
    let mut trace = vec![nll];
    let mut newton_steps = 0;
    for t in 0..opts.max_iter {
        let em = ratios.em_step(&q, &s);
        let mad = |a: &[f64]| a.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>() / k as f64;
        let dev = mad(&em);
        let newton = if opts.newton { newton_candidate(&ratios, &q, &s, nll) } else { None };
        // A small EM residual only bounds the distance to the optimum by
        // tol / (1 - rate); in Newton mode also require a small Newton step.
        let settled = match &newton {
            Some((cand, _, _)) => mad(cand) < opts.tol,
            None => true,
        };
        if dev < opts.tol && settled {
            return Ok(PcpResult {
                prior: ratios.expand(&q),
                iterations: t,
                converged: true,
                nll_trace: trace,
                newton_steps,
            });
        }
        // A negligible Newton step with a large residual means the step is
        // held up at the boundary; let the recursion move instead.
        let next = newton.filter(|_| settled_or_far(dev, opts.tol, settled));
        if next.is_some() {
            newton_steps += 1;
        }
        let (cand, cand_s, cand_nll) = match next {
            Some(v) => v,
            None => {
                let cand_s = ratios.denominators(&em)?;
                let cand_nll = Ratios::nll(&cand_s);
                (em, cand_s, cand_nll)
            }
        };
        q = cand;
        s = cand_s;
        nll = cand_nll;
        trace.push(nll);
    }
    Ok(PcpResult {
        prior: ratios.expand(&q),
        iterations: opts.max_iter,
        converged: false,
        nll_trace: trace,
        newton_steps,
    })
}

/// Damped Newton step on the simplex; `None` unless it strictly lowers the
/// likelihood.
fn settled_or_far(dev: f64, tol: f64, settled: bool) -> bool {
    !(settled && dev >= tol)
}

fn newton_candidate(ratios: &Ratios, q: &[f64], s: &[f64], nll: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let w = q.len();
    let (grad, hess) = ratios.derivatives(s);
    // Classes the step would push out of the simplex are shrunk instead and
    // the remaining ones re-solved. Shrinking keeps them positive, so the
    // recursion can still revive a class that was cut too eagerly.
    let mut step = vec![0.0; w];
    let mut fixed = vec![false; w];
    loop {
        let free: Vec<usize> = (0..w).filter(|&j| !fixed[j]).collect();
        if free.is_empty() {
            return None;
        }
        let f = free.len();
        let shift: f64 = (0..w).filter(|&j| fixed[j]).map(|j| step[j]).sum();
        // KKT system for the free classes with the sum of all changes fixed at 0.
        let mut kkt = DMatrix::zeros(f + 1, f + 1);
        let mut rhs = DVector::zeros(f + 1);
        for (a, &j) in free.iter().enumerate() {
            for (b, &k) in free.iter().enumerate() {
                kkt[(a, b)] = hess[j * w + k];
            }
            kkt[(a, f)] = 1.0;
            kkt[(f, a)] = 1.0;
            let coupling: f64 = (0..w).filter(|&k| fixed[k]).map(|k| hess[j * w + k] * step[k]).sum();
            rhs[a] = -grad[j] - coupling;
        }
        rhs[f] = -shift;
        let sol = kkt.lu().solve(&rhs)?;
        let mut blocked = false;
        for (a, &j) in free.iter().enumerate() {
            step[j] = sol[a];
            if !step[j].is_finite() {
                return None;
            }
            if q[j] + step[j] <= 0.0 {
                fixed[j] = true;
                step[j] = -0.99 * q[j];
                blocked = true;
            }
        }
        if !blocked {
            break;
        }
    }
    let mut alpha = 1.0;
    for _ in 0..30 {
        let cand: Vec<f64> = q.iter().zip(&step).map(|(p, d)| p + alpha * d).collect();
        if cand.iter().all(|&v| v > 0.0) {
            let total: f64 = cand.iter().sum();
            let cand: Vec<f64> = cand.into_iter().map(|v| v / total).collect();
            if let Ok(cs) = ratios.denominators(&cand) {
                let cn = Ratios::nll(&cs);
                if cn < nll {
                    return Some((cand, cs, cn));
                }
            }
        }
        alpha *= 0.5;
    }
    None
}
