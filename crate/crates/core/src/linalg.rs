//! Dense symmetric positive-definite helpers: Cholesky factorization,
//! inversion through the factor, and the matrix 1-norm.

use ndarray::Array2;

/// Pivots at or below this fraction of the original diagonal entry are
/// treated as numerically zero.
const PIVOT_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CholeskyFailure {
    /// A pivot was zero up to rounding: the matrix is singular but not
    /// meaningfully indefinite.
    Singular { index: usize, pivot: f64 },
    /// A clearly negative pivot.
    NotPositiveDefinite { index: usize, pivot: f64 },
}

/// Lower-triangular `L` with `A = L Lᵀ`. Only the lower triangle of `a` is read.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>, CholeskyFailure> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        let tol = PIVOT_REL_TOL * a[[j, j]].abs();
        if d <= tol {
            return Err(if d >= -tol {
                CholeskyFailure::Singular { index: j, pivot: d }
            } else {
                CholeskyFailure::NotPositiveDefinite { index: j, pivot: d }
            });
        }
        let ljj = d.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix via `A⁻¹ = L⁻ᵀ L⁻¹`.
/// The result is exactly symmetric.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>, CholeskyFailure> {
    let n = a.nrows();
    let l = cholesky(a)?;
    // forward substitution for L⁻¹, column by column
    let mut linv = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        linv[[c, c]] = 1.0 / l[[c, c]];
        for i in (c + 1)..n {
            let mut s = 0.0;
            for k in c..i {
                s -= l[[i, k]] * linv[[k, c]];
            }
            linv[[i, c]] = s / l[[i, i]];
        }
    }
    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            // (L⁻ᵀ L⁻¹)_{ij} = Σ_k linv[k,i] linv[k,j], nonzero for k ≥ max(i, j)
            let s: f64 = (j..n).map(|k| linv[[k, i]] * linv[[k, j]]).sum();
            inv[[i, j]] = s;
            inv[[j, i]] = s;
        }
    }
    Ok(inv)
}

/// Maximum absolute column sum.
pub fn norm1(a: &Array2<f64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
