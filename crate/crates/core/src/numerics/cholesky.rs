//! Cholesky factorization and SPD solves.

use crate::error::{DaraError, Result};
use crate::numerics::Matrix;

/// Lower-triangular factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Fails when a pivot is not above `n * eps * a_jj`, which catches
    /// Gram matrices that are singular up to rounding.
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(DaraError::shape("cholesky", a.shape(), (n, n)));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            let floor = n as f64 * f64::EPSILON * a[(j, j)].abs();
            if !(d > floor) || !d.is_finite() {
                return Err(DaraError::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                let (ri, rj) = (i * n, j * n);
                let ld = l.data();
                for k in 0..j {
                    s -= ld[ri + k] * ld[rj + k];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// Solves `A X = B` by forward then backward substitution.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(DaraError::shape("cholesky_solve", (n, n), b.shape()));
        }
        let m = b.cols();
        let l = self.l.data();
        let mut x = b.clone();
        let xd = x.data_mut();
        // L y = b
        for i in 0..n {
            for k in 0..i {
                let lik = l[i * n + k];
                if lik == 0.0 {
                    continue;
                }
                for c in 0..m {
                    xd[i * m + c] -= lik * xd[k * m + c];
                }
            }
            let d = l[i * n + i];
            for c in 0..m {
                xd[i * m + c] /= d;
            }
        }
        // L^T x = y
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = l[k * n + i];
                if lki == 0.0 {
                    continue;
                }
                for c in 0..m {
                    xd[i * m + c] -= lki * xd[k * m + c];
                }
            }
            let d = l[i * n + i];
            for c in 0..m {
                xd[i * m + c] /= d;
            }
        }
        Ok(x)
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    Cholesky::factor(a)?.solve(b)
}
