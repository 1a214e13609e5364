//! Output heads mapping network outputs to class probabilities.
//!
//! The sequential log-odds head reads output `y_i` as the log-odds of class
//! `i` against every higher-indexed class, shifted by `b_i = ln(K - 1 - i)`
//! so that an all-zero network predicts the uniform distribution. It uses
//! `K - 1` outputs and its Jacobian has full rank, unlike softmax over `K`
//! outputs.

/// `ln(a)` where `a = 1 / (1 + e^{-z})`, without overflow.
fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Offsets `b_i = ln(K - 1 - i)` for `i < K - 1`.
pub fn head_offsets(class_count: usize) -> Vec<f64> {
    (0..class_count.saturating_sub(1))
        .map(|i| ((class_count - 1 - i) as f64).ln())
        .collect()
}

/// Sequential log-odds head. The last class takes the complement, so the
/// output sums to one.
pub fn logits_to_probs(y: &[f64], offsets: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len() + 1];
    logits_to_probs_into(y, offsets, &mut out);
    out
}

pub(crate) fn logits_to_probs_into(y: &[f64], offsets: &[f64], out: &mut [f64]) {
    debug_assert_eq!(y.len(), offsets.len());
    let mut log_remaining = 0.0;
    let mut assigned = 0.0;
    for ((o, &yi), &bi) in out.iter_mut().zip(y).zip(offsets) {
        let z = yi - bi;
        let p = (log_remaining + log_sigmoid(z)).exp().min(1.0);
        *o = p;
        assigned += p;
        log_remaining -= softplus(z);
    }
    out[y.len()] = (1.0 - assigned).clamp(0.0, 1.0);
}

/// Negative log-probability of `label` under the sequential head, and its
/// gradient with respect to `y` written into `grad`.
///
/// With `s_j = sigmoid(y_j - b_j)`, `-ln P(c)` has derivative `s_j` for
/// `j < c`, `-(1 - s_c)` for `j = c < K - 1`, and 0 above `c`.
pub(crate) fn nll_and_grad(y: &[f64], offsets: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let mut nll = 0.0;
    for (j, ((g, &yj), &bj)) in grad.iter_mut().zip(y).zip(offsets).enumerate() {
        let z = yj - bj;
        if j < label {
            nll += softplus(z);
            *g = sigmoid(z);
        } else if j == label {
            nll += softplus(-z);
            *g = -sigmoid(-z);
        } else {
            *g = 0.0;
        }
    }
    nll
}

/// `K x (K - 1)` Jacobian `dP_i / dy_k` of the sequential head, row-major.
pub fn sequential_jacobian(y: &[f64], offsets: &[f64]) -> Vec<f64> {
    let m = y.len();
    let k = m + 1;
    let p = logits_to_probs(y, offsets);
    let s: Vec<f64> = y.iter().zip(offsets).map(|(&a, &b)| sigmoid(a - b)).collect();
    let mut jac = vec![0.0; k * m];
    for i in 0..k {
        for c in 0..m {
            let dlog = if c < i {
                -s[c]
            } else if c == i {
                1.0 - s[c]
            } else {
                0.0
            };
            jac[i * m + c] = p[i] * dlog;
        }
    }
    jac
}

/// Softmax over `K` outputs with max-subtraction.
pub fn logits_to_probs_softmax(y: &[f64]) -> Vec<f64> {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// `K x K` Jacobian of softmax, `diag(P) - P P^T`, row-major.
pub fn softmax_jacobian(y: &[f64]) -> Vec<f64> {
    let p = logits_to_probs_softmax(y);
    let k = p.len();
    let mut jac = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            jac[i * k + j] = if i == j { p[i] } else { 0.0 } - p[i] * p[j];
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn zero_logits_are_uniform() {
        let p = logits_to_probs(&[0.0, 0.0], &head_offsets(3));
        for v in &p {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        for k in [2, 5, 9] {
            let p = logits_to_probs(&vec![0.0; k - 1], &head_offsets(k));
            for v in &p {
                assert_abs_diff_eq!(*v, 1.0 / k as f64, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn two_class_log_odds() {
        let p = logits_to_probs(&[3f64.ln()], &head_offsets(2));
        assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn saturation_stays_in_range() {
        let p = logits_to_probs(&[20.0, 20.0], &head_offsets(3));
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(p[0] > 1.0 - 1e-8);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
        let q = logits_to_probs(&[-800.0, 800.0], &head_offsets(3));
        assert!(q.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_values() {
        assert_eq!(logits_to_probs_softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
        let p = logits_to_probs_softmax(&[2f64.ln(), 0.0]);
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-15);
        let shifted = logits_to_probs_softmax(&[2f64.ln() + 7.5, 7.5]);
        assert_abs_diff_eq!(shifted[0], p[0], epsilon = 1e-15);
        let big = logits_to_probs_softmax(&[1000.0, 999.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let offsets = head_offsets(4);
        let y = [0.3, -1.2, 0.8];
        for label in 0..4 {
            let mut g = [0.0; 3];
            let nll = nll_and_grad(&y, &offsets, label, &mut g);
            assert_abs_diff_eq!(nll, -logits_to_probs(&y, &offsets)[label].ln(), epsilon = 1e-12);
            for k in 0..3 {
                let h = 1e-6;
                let mut yp = y;
                let mut ym = y;
                yp[k] += h;
                ym[k] -= h;
                let mut scratch = [0.0; 3];
                let fd = (nll_and_grad(&yp, &offsets, label, &mut scratch)
                    - nll_and_grad(&ym, &offsets, label, &mut scratch))
                    / (2.0 * h);
                assert_abs_diff_eq!(g[k], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let offsets = head_offsets(3);
        let y = [0.4, -0.7];
        let jac = sequential_jacobian(&y, &offsets);
        for k in 0..2 {
            let h = 1e-6;
            let mut yp = y;
            let mut ym = y;
            yp[k] += h;
            ym[k] -= h;
            let pp = logits_to_probs(&yp, &offsets);
            let pm = logits_to_probs(&ym, &offsets);
            for i in 0..3 {
                assert_abs_diff_eq!(jac[i * 2 + k], (pp[i] - pm[i]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }
}
