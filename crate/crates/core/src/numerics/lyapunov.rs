use super::{lu_solve, sym_eig, Mat, SymMat};
use crate::error::{Error, Result};
use crate::tol;

/// Solution pair of `A_mᵀP + PA_m = −Q` with the spectral constants used by
/// the stability bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCert {
    pub p: SymMat,
    pub q: SymMat,
    /// Smallest eigenvalue of `Q`.
    pub q0: f64,
    pub p_min: f64,
    pub p_max: f64,
}

fn residual(a: &Mat, p: &Mat, q: &Mat) -> Mat {
    &(&(&a.transpose() * p) + &(p * a)) + q
}

/// Solves the continuous Lyapunov equation through its Kronecker form
/// `(I⊗A_mᵀ + A_mᵀ⊗I)·vec(P) = −vec(Q)` and certifies the result.
pub fn solve_lyapunov(a_m: &Mat, q: &SymMat) -> Result<LyapunovCert> {
    if !a_m.is_square() || a_m.rows() != q.dim() {
        return Err(Error::Dimension(format!(
            "Lyapunov solve needs square A_m matching Q ({}), got {}x{}",
            q.dim(),
            a_m.rows(),
            a_m.cols()
        )));
    }
    let q_eig = sym_eig(q)?;
    if q_eig.min() <= 0.0 {
        return Err(Error::Certificate(format!(
            "Q must be positive definite, min eigenvalue {}",
            q_eig.min()
        )));
    }
    let n = a_m.rows();
    let nn = n * n;
    let mut kron = Mat::zeros(nn, nn);
    // row (i,j) of A_mᵀP + PA_m, vec index i + j·n (column-major)
    for j in 0..n {
        for i in 0..n {
            let r = i + j * n;
            for k in 0..n {
                kron[(r, k + j * n)] += a_m[(k, i)];
                kron[(r, i + k * n)] += a_m[(k, j)];
            }
        }
    }
    let qm = q.to_mat();
    let rhs: Vec<f64> = (0..nn).map(|idx| -qm[(idx % n, idx / n)]).collect();
    let unvec = |x: &[f64]| {
        let mut p = Mat::zeros(n, n);
        for (idx, &v) in x.iter().enumerate() {
            p[(idx % n, idx / n)] = v;
        }
        p
    };

    let x = lu_solve(&kron, &rhs).map_err(|_| {
        Error::Certificate("Kronecker system singular: A_m is not Hurwitz".into())
    })?;
    let mut p = unvec(&x).sym_part();
    // one step of iterative refinement
    let r = residual(a_m, &p, &qm);
    let rvec: Vec<f64> = (0..nn).map(|idx| -r[(idx % n, idx / n)]).collect();
    if let Ok(dx) = lu_solve(&kron, &rvec) {
        p = (&p + &unvec(&dx)).sym_part();
    }

    let rel = residual(a_m, &p, &qm).frobenius_norm() / qm.frobenius_norm();
    if !(rel <= tol::LYAPUNOV_RESIDUAL) {
        return Err(Error::Certificate(format!(
            "relative residual {rel:e} exceeds {:e}",
            tol::LYAPUNOV_RESIDUAL
        )));
    }
    let p = SymMat::from_upper(&p)?;
    let p_eig = sym_eig(&p)?;
    if p_eig.min() <= 0.0 {
        return Err(Error::Certificate(format!(
            "P is not positive definite (min eigenvalue {:e}): A_m is not Hurwitz",
            p_eig.min()
        )));
    }
    Ok(LyapunovCert {
        p,
        q: q.clone(),
        q0: q_eig.min(),
        p_min: p_eig.min(),
        p_max: p_eig.max(),
    })
}

impl LyapunovCert {
    /// Relative Frobenius residual of `A_mᵀP + PA_m + Q` for a given `A_m`.
    pub fn residual(&self, a_m: &Mat) -> f64 {
        let q = self.q.to_mat();
        residual(a_m, &self.p.to_mat(), &q).frobenius_norm() / q.frobenius_norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_identity_gives_identity() {
        let a = Mat::identity(3).scale(-0.5);
        let c = solve_lyapunov(&a, &SymMat::identity(3)).unwrap();
        assert!((&c.p.to_mat() - &Mat::identity(3)).max_abs() < 1e-14);
        assert_eq!(c.q0, 1.0);
        assert!((c.p_min - 1.0).abs() < 1e-14 && (c.p_max - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_case() {
        // 2·a·p = −q with a = −1, q = 2
        let c = solve_lyapunov(&Mat::diag(&[-1.0]), &SymMat::scaled_identity(1, 2.0)).unwrap();
        assert!((c.p.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unstable_is_rejected() {
        let a = Mat::diag(&[-1.0, 0.5]);
        assert!(matches!(
            solve_lyapunov(&a, &SymMat::identity(2)),
            Err(Error::Certificate(_))
        ));
        // marginal: eigenvalues ±i make the Kronecker system singular
        let rot = Mat::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        assert!(matches!(
            solve_lyapunov(&rot, &SymMat::identity(2)),
            Err(Error::Certificate(_))
        ));
    }

    #[test]
    fn indefinite_q_is_rejected() {
        let q = SymMat::from_upper(&Mat::diag(&[1.0, -1.0])).unwrap();
        assert!(solve_lyapunov(&Mat::identity(2).scale(-1.0), &q).is_err());
    }

    fn hurwitz() -> impl Strategy<Value = (Mat, f64)> {
        (1usize..=6).prop_flat_map(|n| {
            (prop::collection::vec(-1.0f64..1.0, n * n), 0.05f64..2.0, prop::collection::vec(-1.0f64..1.0, n * n))
                .prop_map(move |(r, s, skew)| {
                    let r = Mat::new(n, n, r).unwrap();
                    let k = Mat::new(n, n, skew).unwrap();
                    // −RRᵀ − sI plus a skew part keeps the symmetric part negative definite
                    let sk = &k - &k.transpose();
                    let a = &(&(&r * &r.transpose()).scale(-1.0) - &Mat::identity(n).scale(s)) + &sk;
                    (a, s)
                })
        })
    }

    proptest! {
        #[test]
        fn random_hurwitz_certified((a, _s) in hurwitz()) {
            let n = a.rows();
            let c = solve_lyapunov(&a, &SymMat::identity(n)).unwrap();
            prop_assert!(c.residual(&a) <= tol::LYAPUNOV_RESIDUAL);
            prop_assert!(c.p_min > 0.0 && c.p_min <= c.p_max);
        }
    }
}
