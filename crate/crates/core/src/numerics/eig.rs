use super::{Mat, SymMat};
use crate::error::{Error, Result};
use crate::tol;

/// Eigen-decomposition `M = V·diag(values)·Vᵀ` with ascending eigenvalues.
/// Column `i` of `vectors` pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Each sweep visits every off-diagonal pair once and annihilates it with a
/// plane rotation; sweeps repeat until the off-diagonal mass is negligible
/// relative to the matrix norm.
pub fn sym_eig(m: &SymMat) -> Result<SymEigen> {
    if !m.is_finite() {
        return Err(Error::NonFinite("eigensolver input".into()));
    }
    let n = m.dim();
    let mut a = m.to_mat();
    let mut v = Mat::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok(SymEigen {
            values: vec![0.0; n],
            vectors: v,
        });
    }

    let mut converged = false;
    for _ in 0..tol::JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= f64::EPSILON * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() > tol::EIG_RESIDUAL * scale * 1e-2 {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge in {} sweeps",
                tol::JACOBI_MAX_SWEEPS
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_col(dst, &v.col(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Spectral norm of a symmetric matrix, `max |λ_i|`.
pub fn spectral_norm(m: &SymMat) -> Result<f64> {
    let e = sym_eig(m)?;
    Ok(e.min().abs().max(e.max().abs()))
}
