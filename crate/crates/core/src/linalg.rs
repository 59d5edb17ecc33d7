//! Dense symmetric positive-definite solves used by the regression and GP code.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Fails with `SingularMatrix` when a pivot is not positive relative to the
/// corresponding diagonal entry of `A`, or when `A` is not square.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        let scale = a[[j, j]].abs().max(f64::MIN_POSITIVE);
        if !d.is_finite() || d <= PIVOT_TOLERANCE * scale {
            return Err(Error::SingularMatrix);
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` by forward substitution.
pub fn solve_lower(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves `Lᵀ x = b` by back substitution.
pub fn solve_lower_transpose(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, y.view())
}

/// SPD system solver with symmetric Jacobi scaling `D A D`, `D = diag(1/√a_jj)`.
///
/// The scaling makes the pivot test independent of column units, which
/// matters for design matrices mixing ratios of order 1 with squared
/// reinforcement ratios of order 1e-8.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    scale: Array1<f64>,
    factor: Array2<f64>,
}

impl SpdSolver {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let mut scale = Array1::<f64>::zeros(n);
        for j in 0..n {
            let d = a[[j, j]];
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::SingularMatrix);
            }
            scale[j] = 1.0 / d.sqrt();
        }
        let mut scaled = a.to_owned();
        for i in 0..n {
            for j in 0..n {
                scaled[[i, j]] *= scale[i] * scale[j];
            }
        }
        Ok(SpdSolver { factor: cholesky(scaled.view())?, scale })
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let rhs = &b * &self.scale;
        let z = cholesky_solve(self.factor.view(), rhs.view());
        z * &self.scale
    }

    /// Diagonal of `A⁻¹`.
    pub fn inverse_diagonal(&self) -> Array1<f64> {
        let n = self.scale.len();
        let mut diag = Array1::<f64>::zeros(n);
        for j in 0..n {
            let mut e = Array1::<f64>::zeros(n);
            e[j] = 1.0;
            diag[j] = self.solve(e.view())[j];
        }
        diag
    }
}

/// `XᵀX` without forming the transpose explicitly.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    x.t().dot(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn factor_and_solve() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let b = array![1.0, -2.0, 0.5];
        let x = SpdSolver::new(a.view()).unwrap().solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn singular_is_detected() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert_eq!(cholesky(a.view()).unwrap_err(), Error::SingularMatrix);
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert_eq!(SpdSolver::new(a.view()).unwrap_err(), Error::SingularMatrix);
        let a = array![[0.0, 0.0], [0.0, 1.0]];
        assert_eq!(SpdSolver::new(a.view()).unwrap_err(), Error::SingularMatrix);
    }

    #[test]
    fn inverse_diagonal_matches_2x2() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let d = SpdSolver::new(a.view()).unwrap().inverse_diagonal();
        assert!((d[0] - 3.0 / 5.0).abs() < 1e-15);
        assert!((d[1] - 2.0 / 5.0).abs() < 1e-15);
    }
}
