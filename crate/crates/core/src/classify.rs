//! Hard class assignment from probability rows.

use rand::Rng as _;

use crate::data::ProbMatrix;
use crate::rng;

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn bayes_classify(probs: &ProbMatrix) -> Vec<usize> {
    probs
        .rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Draws each row's class from its probabilities.
///
/// Row `n` uses one uniform variate from ChaCha stream `n` under `seed` and
/// walks the cumulative sum in class order, so a row's label depends only on
/// `(seed, n)` and the row itself.
pub fn stochastic_classify(probs: &ProbMatrix, seed: u64) -> Vec<usize> {
    probs
        .rows()
        .enumerate()
        .map(|(n, row)| {
            let u: f64 = rng::stream(seed, n as u64).random();
            sample_row(row, u)
        })
        .collect()
}

fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the final cumulative sum: last class with mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ProbMatrix {
        ProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn bayes_rule() {
        assert_eq!(bayes_classify(&matrix(&[&[0.2, 0.5, 0.3]])), vec![1]);
        assert_eq!(bayes_classify(&matrix(&[&[0.5, 0.5]])), vec![0]);
        assert_eq!(
            bayes_classify(&matrix(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]])),
            vec![1, 0, 2]
        );
        assert_eq!(bayes_classify(&matrix(&[&[0.25, 0.25, 0.5]])), vec![2]);
    }

    #[test]
    fn bayes_is_scale_invariant() {
        let row = [0.1, 0.6, 0.3];
        for c in [0.01, 3.0, 1e6] {
            let scaled: Vec<f64> = row.iter().map(|v| v * c).collect();
            let sum: f64 = scaled.iter().sum();
            let renorm: Vec<f64> = scaled.iter().map(|v| v / sum).collect();
            assert_eq!(bayes_classify(&ProbMatrix::from_rows(&[renorm]).unwrap()), vec![1]);
        }
    }

    #[test]
    fn certain_rows_ignore_the_seed() {
        let m = ProbMatrix::new(2, [1.0, 0.0].repeat(50)).unwrap();
        for seed in 0..5 {
            assert!(stochastic_classify(&m, seed).iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn stochastic_is_deterministic() {
        let m = ProbMatrix::new(3, [0.6, 0.38, 0.02].repeat(1000)).unwrap();
        assert_eq!(stochastic_classify(&m, 17), stochastic_classify(&m, 17));
        assert_ne!(stochastic_classify(&m, 17), stochastic_classify(&m, 18));
        // Row-local streams: a prefix classifies identically.
        let prefix = ProbMatrix::new(3, [0.6, 0.38, 0.02].repeat(10)).unwrap();
        assert_eq!(stochastic_classify(&prefix, 17), stochastic_classify(&m, 17)[..10]);
    }

    #[test]
    fn rare_class_frequency() {
        let n = 100_000;
        let m = ProbMatrix::new(3, [0.6, 0.38, 0.02].repeat(n)).unwrap();
        let labels = stochastic_classify(&m, 2024);
        let count = labels.iter().filter(|&&l| l == 2).count() as f64;
        let sigma = (n as f64 * 0.02 * 0.98).sqrt();
        assert!((count - 2000.0).abs() < 5.0 * sigma, "{count}");
    }

    #[test]
    fn rounding_falls_back_to_last_supported_class() {
        assert_eq!(sample_row(&[0.3, 0.7, 0.0], 1.0), 1);
    }
}
