//! Closed-form ridge regression with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Cholesky pivots below this fraction of the largest diagonal entry mean the
/// system is numerically rank deficient.
const PIVOT_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).fold(self.bias, |acc, (w, v)| acc + w * v)
    }
}

/// Minimizes `sum (y - b0 - x.w)^2 + lambda * |w|^2`.
///
/// The inputs and target are centered, `(Xc'Xc + lambda I) w = Xc'yc` is solved
/// by Cholesky factorization, and the intercept is recovered from the means.
pub fn ridge_fit(rows: &[&[f64]], y: &[f64], lambda: f64) -> Result<LinearModel> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if rows.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: rows.len(),
            actual: y.len(),
        });
    }
    let n = rows.len();
    let m = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    let x_mean: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let xc = DMatrix::from_fn(n, m, |i, j| rows[i][j] - x_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.tr_mul(&xc);
    for j in 0..m {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let scale = (0..m).map(|j| gram[(j, j)]).fold(0.0f64, f64::max);
    let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l_dirty();
    if (0..m).any(|j| l[(j, j)] * l[(j, j)] <= PIVOT_RTOL * scale) {
        return Err(Error::SingularSystem);
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let weights: Vec<f64> = w.iter().copied().collect();
    let bias = y_mean - x_mean.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel { weights, bias })
}

pub fn ridge_fit_dataset(d: &Dataset, lambda: f64) -> Result<LinearModel> {
    let rows: Vec<&[f64]> = d.rows().collect();
    ridge_fit(&rows, d.targets(), lambda)
}

/// `b0 + X w` for every row.
pub fn ridge_predict(model: &LinearModel, rows: &[&[f64]]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| {
            if r.len() == model.weights.len() {
                Ok(model.predict_row(r))
            } else {
                Err(Error::DimensionMismatch {
                    expected: model.weights.len(),
                    actual: r.len(),
                })
            }
        })
        .collect()
}

/// Root mean squared error of `model` on `d`.
pub fn ridge_rmse(model: &LinearModel, d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<&[f64]> = d.rows().collect();
    let pred = ridge_predict(model, &rows)?;
    let mse = pred
        .iter()
        .zip(d.targets())
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>()
        / d.len() as f64;
    Ok(mse.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, m: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| (j as f64 - 1.5) * v).sum::<f64>() + rng.random_range(-0.5..0.5))
            .collect();
        (rows, y)
    }

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn interpolates_square_system() {
        // 4 points, 3 weights + intercept
        let rows = vec![
            vec![1.0, 0.0, 2.0],
            vec![0.0, 1.0, -1.0],
            vec![2.0, 3.0, 0.5],
            vec![-1.0, 1.0, 1.0],
        ];
        let y = vec![3.0, -1.0, 4.0, 0.5];
        let model = ridge_fit(&refs(&rows), &y, 0.0).unwrap();
        let pred = ridge_predict(&model, &refs(&rows)).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() <= 1e-8);
        }
    }

    #[test]
    fn huge_penalty_predicts_the_mean() {
        let (rows, y) = random_problem(40, 3, 1);
        let model = ridge_fit(&refs(&rows), &y, 1e12).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(model.weights.iter().all(|w| w.abs() < 1e-8));
        for p in ridge_predict(&model, &refs(&rows)).unwrap() {
            assert!((p - mean).abs() < 1e-7);
        }
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(matches!(
            ridge_fit(&refs(&rows), &[1.0, 2.0, 3.0], 0.0),
            Err(Error::SingularSystem)
        ));
        assert!(ridge_fit(&refs(&rows), &[1.0, 2.0, 3.0], 0.05).is_ok());
    }

    #[test]
    fn predict_examples() {
        let m = LinearModel {
            weights: vec![0.0, 0.0],
            bias: 1.25,
        };
        assert_eq!(ridge_predict(&m, &[&[3.0, -4.0]]).unwrap(), vec![1.25]);
        let m = LinearModel {
            weights: vec![2.0],
            bias: 1.0,
        };
        assert_eq!(ridge_predict(&m, &[&[3.0]]).unwrap(), vec![7.0]);
        assert!(matches!(
            ridge_predict(&m, &[&[3.0, 1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shifting_targets_moves_only_the_intercept() {
        let (rows, y) = random_problem(50, 5, 2);
        let a = ridge_fit(&refs(&rows), &y, 0.05).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 7.5).collect();
        let b = ridge_fit(&refs(&rows), &shifted, 0.05).unwrap();
        assert!((b.bias - a.bias - 7.5).abs() < 1e-10);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-10);
        }
    }

    #[test]
    fn weight_norm_shrinks_with_penalty() {
        let (rows, y) = random_problem(50, 5, 3);
        let norm = |l| {
            let m = ridge_fit(&refs(&rows), &y, l).unwrap();
            m.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
        };
        let lambdas = [0.0, 0.05, 1.0, 10.0, 100.0];
        for w in lambdas.windows(2) {
            assert!(norm(w[1]) <= norm(w[0]));
        }
    }
}
