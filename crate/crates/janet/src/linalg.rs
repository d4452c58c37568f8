//! Small dense least-squares solver used by the AR and scale fitters.
//!
//! Solves the normal equations with partial pivoting and classifies the
//! design by its worst pivot relative to the matrix scale:
//!
//! * pivots above `SOFT_TOL` x scale: plain OLS solution;
//! * pivots in between: near-collinear, retried once with a relative ridge
//!   penalty of `RIDGE` x scale;
//! * pivots at or below `HARD_TOL` x scale: genuinely collinear (for
//!   example a constant series), reported as a singular design.

use ndarray::Array2;

use crate::error::{Error, Result};

const SOFT_TOL: f64 = 1e-7;
const HARD_TOL: f64 = 1e-12;
const RIDGE: f64 = 1e-8;

/// Least-squares coefficients of `y ~ x` (columns of `x` are regressors).
pub(crate) fn least_squares(x: &Array2<f64>, y: &[f64], context: &str) -> Result<Vec<f64>> {
    let (n, k) = x.dim();
    assert_eq!(n, y.len(), "design rows must match response length");
    if n < k {
        return Err(Error::SingularDesign {
            context: format!("{context}: {n} rows for {k} coefficients"),
        });
    }

    // Normal equations X'X beta = X'y.
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for r in 0..n {
        for i in 0..k {
            let xi = x[[r, i]];
            xty[i] += xi * y[r];
            for j in i..k {
                xtx[i][j] += xi * x[[r, j]];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }

    let scale = (0..k).map(|i| xtx[i][i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::SingularDesign {
            context: format!("{context}: zero design matrix"),
        });
    }

    let (solution, min_pivot) = gauss_solve(xtx.clone(), xty.clone());
    if let Some(beta) = solution {
        if min_pivot > SOFT_TOL * scale {
            return Ok(beta);
        }
    }
    if min_pivot <= HARD_TOL * scale {
        return Err(Error::SingularDesign {
            context: context.to_string(),
        });
    }

    // Near-singular: retry once with a small ridge penalty.
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += RIDGE * scale;
    }
    let (solution, min_pivot) = gauss_solve(xtx, xty);
    match solution {
        Some(beta) if min_pivot > HARD_TOL * scale => Ok(beta),
        _ => Err(Error::SingularDesign {
            context: context.to_string(),
        }),
    }
}

/// Gaussian elimination with partial pivoting. Returns the solution (when
/// every pivot is nonzero) and the smallest absolute pivot encountered.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> (Option<Vec<f64>>, f64) {
    let k = b.len();
    let mut min_pivot = f64::INFINITY;
    for col in 0..k {
        let (pivot_row, pivot_abs) = (col..k)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty column range");
        min_pivot = min_pivot.min(pivot_abs);
        if pivot_abs == 0.0 {
            return (None, 0.0);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for col in (0..k).rev() {
        let mut acc = b[col];
        for c in col + 1..k {
            acc -= a[col][c] * x[c];
        }
        x[col] = acc / a[col][col];
    }
    (Some(x), min_pivot)
}
