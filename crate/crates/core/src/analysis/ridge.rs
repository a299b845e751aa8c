//! Closed-form ridge regression with an unpenalized intercept.

use crate::error::{Error, Result};

/// Penalties tried by cross-validation.
pub const RIDGE_LAMBDAS: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
const FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl Ridge {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Minimizes `‖Xβ + c − y‖² + λ‖β‖²`. Centering removes the intercept from
/// the penalized system `(XcᵀXc + λI) β = Xcᵀyc`.
pub fn fit_ridge(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Ridge> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::domain(format!("ridge penalty {lambda} must be ≥ 0")));
    }
    if rows.is_empty() || rows.len() != y.len() {
        return Err(Error::domain("ridge needs a non-empty table with one target per row"));
    }
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mean_x: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mean_y = y.iter().sum::<f64>() / n;

    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (r, &t) in rows.iter().zip(y) {
        let xc: Vec<f64> = r.iter().zip(&mean_x).map(|(v, m)| v - m).collect();
        for i in 0..p {
            b[i] += xc[i] * (t - mean_y);
            for j in 0..p {
                a[i][j] += xc[i] * xc[j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda;
    }
    let coefficients = solve(a, b)?;
    let intercept = mean_y - coefficients.iter().zip(&mean_x).map(|(c, m)| c * m).sum::<f64>();
    Ok(Ridge {
        coefficients,
        intercept,
        lambda,
    })
}

/// Gaussian elimination with partial pivoting. Singular directions (zero
/// pivots, e.g. constant columns with λ = 0) get a zero coefficient.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let p = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tiny = 1e-12 * scale;
    let mut pivots = vec![None; p];
    let mut row = 0;
    for col in 0..p {
        if row == p {
            break;
        }
        let best = (row..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[best][col].abs() <= tiny {
            continue;
        }
        a.swap(row, best);
        b.swap(row, best);
        for i in 0..p {
            if i != row {
                let f = a[i][col] / a[row][col];
                if f != 0.0 {
                    for k in col..p {
                        a[i][k] -= f * a[row][k];
                    }
                    b[i] -= f * b[row];
                }
            }
        }
        pivots[col] = Some(row);
        row += 1;
    }
    let x: Vec<f64> = (0..p)
        .map(|col| pivots[col].map_or(0.0, |r| b[r] / a[r][col]))
        .collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("ridge system is numerically singular"));
    }
    Ok(x)
}

/// Picks λ from [`RIDGE_LAMBDAS`] by 5-fold cross-validated squared error
/// (contiguous folds), then refits on all rows. Returns the model and its
/// mean CV error.
pub fn fit_ridge_cv(rows: &[Vec<f64>], y: &[f64]) -> Result<(Ridge, f64)> {
    if rows.len() < FOLDS {
        return Err(Error::domain(format!("cross-validation needs at least {FOLDS} rows")));
    }
    let n = rows.len();
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &RIDGE_LAMBDAS {
        let mut sse = 0.0;
        for f in 0..FOLDS {
            let (lo, hi) = (f * n / FOLDS, (f + 1) * n / FOLDS);
            let train_rows: Vec<Vec<f64>> = rows[..lo].iter().chain(&rows[hi..]).cloned().collect();
            let train_y: Vec<f64> = y[..lo].iter().chain(&y[hi..]).copied().collect();
            let model = fit_ridge(&train_rows, &train_y, lambda)?;
            sse += (lo..hi).map(|i| (model.predict(&rows[i]) - y[i]).powi(2)).sum::<f64>();
        }
        let mse = sse / n as f64;
        if best.is_none_or(|(_, b)| mse < b) {
            best = Some((lambda, mse));
        }
    }
    let (lambda, mse) = best.expect("non-empty grid");
    Ok((fit_ridge(rows, y, lambda)?, mse))
}
