//! Completeness (recall), reliability (precision) and F1, predicted from a
//! model's probabilities and observed against true labels.
//!
//! The predicted values treat each row's probabilities as the truth: for a
//! fixed set of assignments, `P(i|x_n)` is the chance that row `n` really is
//! class `i`. If the probabilities are right, observed metrics scatter
//! around the predicted ones with the propagated variances; the gap
//! (overshoot) in units of its standard deviation is the z-score.
//!
//! Ratios with a zero denominator are `None` throughout.

use serde::{Deserialize, Serialize};

use crate::data::ProbMatrix;
use crate::error::{Error, Result};

/// Model entries are clamped up to this before taking KL log-ratios.
pub const KL_CLAMP: f64 = 1e-12;

/// An overshoot further than this many standard deviations from zero marks
/// the probabilities as inconsistent with the labels.
pub const Z_FLAG: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub e_tp: f64,
    pub e_fp: f64,
    pub e_fn: f64,
    pub v_tp: f64,
    pub v_fp: f64,
    pub v_fn: f64,
    /// Rows assigned to this class.
    pub np: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub rows: usize,
    pub classes: Vec<ClassCounts>,
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().enumerate().find(|(_, &l)| l >= k) {
        Some((row, &label)) => Err(Error::LabelOutOfRange {
            row,
            label,
            class_count: k,
        }),
        None => Ok(()),
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Expected true positives, false positives and false negatives of the
/// assignments `assigned`, with their variances.
pub fn expected_counts(probs: &ProbMatrix, assigned: &[usize]) -> Result<ExpectedCounts> {
    let k = probs.class_count();
    check_len(probs.n_rows(), assigned.len())?;
    check_labels(assigned, k)?;
    let mut classes = vec![ClassCounts::default(); k];
    for (row, &j) in probs.rows().zip(assigned) {
        for (i, (c, &p)) in classes.iter_mut().zip(row).enumerate() {
            let v = p * (1.0 - p);
            if i == j {
                c.e_tp += p;
                c.v_tp += v;
            } else {
                c.e_fn += p;
                c.v_fn += v;
            }
        }
        let c = &mut classes[j];
        c.np += 1;
        let p = row[j];
        c.e_fp += 1.0 - p;
        c.v_fp += p * (1.0 - p);
    }
    Ok(ExpectedCounts {
        rows: assigned.len(),
        classes,
    })
}

/// Which denominator to use for the variance of predicted completeness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceForm {
    /// `(eTP + eFN)^4`, from propagating errors through `eTP / (eTP + eFN)`.
    #[default]
    Derived,
    /// `(eTP + eFP)^4`, kept for comparison.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "C")]
    Completeness,
    #[serde(rename = "R")]
    Reliability,
    #[serde(rename = "F1")]
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Completeness, Metric::Reliability, Metric::F1];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Completeness => "C",
            Metric::Reliability => "R",
            Metric::F1 => "F1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Predicted {
    pub completeness: Estimate,
    pub reliability: Estimate,
    pub f1: Estimate,
}

impl Predicted {
    pub fn get(&self, m: Metric) -> Estimate {
        match m {
            Metric::Completeness => self.completeness,
            Metric::Reliability => self.reliability,
            Metric::F1 => self.f1,
        }
    }
}

pub fn predicted_metrics(counts: &ExpectedCounts, form: VarianceForm) -> Vec<Predicted> {
    counts.classes.iter().map(|c| predict_class(c, form)).collect()
}

fn predict_class(c: &ClassCounts, form: VarianceForm) -> Predicted {
    let np = c.np as f64;
    let truth = c.e_tp + c.e_fn;
    let completeness = (truth > 0.0).then(|| {
        let denom = match form {
            VarianceForm::Derived => truth,
            VarianceForm::Printed => c.e_tp + c.e_fp,
        };
        let num = c.v_tp * c.e_fn * c.e_fn + c.v_fn * c.e_tp * c.e_tp;
        Estimate {
            value: Some(c.e_tp / truth),
            variance: Some(if num == 0.0 { 0.0 } else { num / denom.powi(4) }),
        }
    });
    let reliability = (c.np > 0).then(|| Estimate {
        value: Some(c.e_tp / np),
        variance: Some(c.v_tp / (np * np)),
    });
    let f1 = (completeness.is_some() && reliability.is_some()).then(|| {
        let denom = np + truth;
        let a = np + c.e_fn;
        Estimate {
            value: Some(2.0 * c.e_tp / denom),
            variance: Some(4.0 * (c.v_tp * a * a + c.v_fn * c.e_tp * c.e_tp) / denom.powi(4)),
        }
    });
    Predicted {
        completeness: completeness.unwrap_or_default(),
        reliability: reliability.unwrap_or_default(),
        f1: f1.unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub completeness: Option<f64>,
    pub reliability: Option<f64>,
    pub f1: Option<f64>,
}

impl Observed {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Completeness => self.completeness,
            Metric::Reliability => self.reliability,
            Metric::F1 => self.f1,
        }
    }
}

/// Confusion-matrix metrics of `assigned` against `truth` for classes
/// `0..class_count`.
pub fn observed_metrics(assigned: &[usize], truth: &[usize], class_count: usize) -> Result<Vec<Observed>> {
    check_len(truth.len(), assigned.len())?;
    check_labels(assigned, class_count)?;
    check_labels(truth, class_count)?;
    let mut out = vec![Observed::default(); class_count];
    for (&a, &t) in assigned.iter().zip(truth) {
        if a == t {
            out[a].tp += 1;
        } else {
            out[a].fp += 1;
            out[t].fn_ += 1;
        }
    }
    for o in &mut out {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        o.completeness = ratio(o.tp, o.tp + o.fn_);
        o.reliability = ratio(o.tp, o.tp + o.fp);
        o.f1 = (o.completeness.is_some() && o.reliability.is_some())
            .then(|| 2.0 * o.tp as f64 / (2 * o.tp + o.fp + o.fn_) as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub class: usize,
    pub metric: Metric,
    pub predicted: Option<f64>,
    pub variance: Option<f64>,
    pub observed: Option<f64>,
    /// Observed minus predicted.
    pub overshoot: Option<f64>,
    /// Overshoot over the predicted standard deviation, when that is positive.
    pub z: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variance_form: VarianceForm,
    pub counts: ExpectedCounts,
    pub predicted: Vec<Predicted>,
    pub observed: Vec<Observed>,
    /// Class-major, metrics in `C, R, F1` order.
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn row(&self, class: usize, metric: Metric) -> &MetricRow {
        &self.rows[class * Metric::ALL.len() + metric as usize]
    }

    pub fn flagged(&self) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn max_abs_z(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.z).map(f64::abs).reduce(f64::max)
    }
}

/// Predicted metrics from `probs`, observed metrics against `truth`, and the
/// overshoot between them, all for the same `assigned` labels.
pub fn overshoot(probs: &ProbMatrix, assigned: &[usize], truth: &[usize], form: VarianceForm) -> Result<MetricReport> {
    let counts = expected_counts(probs, assigned)?;
    let predicted = predicted_metrics(&counts, form);
    let observed = observed_metrics(assigned, truth, probs.class_count())?;
    let mut rows = Vec::with_capacity(predicted.len() * 3);
    for (class, (p, o)) in predicted.iter().zip(&observed).enumerate() {
        for metric in Metric::ALL {
            let est = p.get(metric);
            let obs = o.get(metric);
            let diff = est.value.zip(obs).map(|(p, o)| o - p);
            let z = diff
                .zip(est.variance)
                .filter(|&(_, v)| v > 0.0)
                .map(|(d, v)| d / v.sqrt());
            rows.push(MetricRow {
                class,
                metric,
                predicted: est.value,
                variance: est.variance,
                observed: obs,
                overshoot: diff,
                z,
                flagged: z.is_some_and(|z| z.abs() > Z_FLAG),
            });
        }
    }
    Ok(MetricReport {
        variance_form: form,
        counts,
        predicted,
        observed,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    /// Mean divergence over the rows of each true class, in nats.
    pub per_class: Vec<Option<f64>>,
    pub class_rows: Vec<usize>,
    /// Mean over all rows.
    pub overall: Option<f64>,
    /// Model entries raised to [`KL_CLAMP`] where the true entry was positive.
    pub clamped: usize,
}

/// `D(P_true || P_model)` per row, averaged within each true class.
pub fn mean_kl_by_class(true_probs: &ProbMatrix, model_probs: &ProbMatrix, truth: &[usize]) -> Result<KlReport> {
    let k = true_probs.class_count();
    check_len(k, model_probs.class_count())?;
    check_len(true_probs.n_rows(), model_probs.n_rows())?;
    check_len(true_probs.n_rows(), truth.len())?;
    check_labels(truth, k)?;
    let mut sums = vec![0.0; k];
    let mut class_rows = vec![0; k];
    let mut clamped = 0;
    for ((t_row, m_row), &c) in true_probs.rows().zip(model_probs.rows()).zip(truth) {
        let mut d = 0.0;
        for (&t, &m) in t_row.iter().zip(m_row) {
            if t > 0.0 {
                if m < KL_CLAMP {
                    clamped += 1;
                }
                d += t * (t / m.max(KL_CLAMP)).ln();
            }
        }
        sums[c] += d;
        class_rows[c] += 1;
    }
    let total: f64 = sums.iter().sum();
    let n = truth.len();
    Ok(KlReport {
        per_class: sums
            .iter()
            .zip(&class_rows)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect(),
        class_rows,
        overall: (n > 0).then(|| total / n as f64),
        clamped,
    })
}
