use super::{Mat, SymMat};
use crate::error::{Error, Result};
use crate::tol;

struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

fn lu_factor(a: &Mat, what: &str) -> Result<Lu> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "{what}: LU needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let floor = tol::LU_PIVOT * a.max_abs();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= floor || pmax == 0.0 {
            return Err(Error::Singular(what.to_string()));
        }
        if piv != k {
            perm.swap(piv, k);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
        }
        let d = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / d;
            lu[(i, k)] = f;
            if f != 0.0 {
                for j in (k + 1)..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves `A·x = b` by LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match {} rows",
            b.len(),
            a.rows()
        )));
    }
    let lu = lu_factor(a, "linear solve")?;
    Ok(lu.solve(b))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    let lu = lu_factor(a, "matrix inverse")?;
    let n = a.rows();
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        inv.set_col(j, &lu.solve(&e));
    }
    Ok(inv)
}

/// Inverse of a symmetric matrix, re-packed so the result is exactly symmetric.
pub fn sym_inverse(a: &SymMat) -> Result<SymMat> {
    let inv = inverse(&a.to_mat())?;
    SymMat::from_upper(&inv.sym_part())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = Mat::from_rows(&[&[0.0, 2.0], &[1.0, 1.0]]).unwrap();
        let x = lu_solve(&a, &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(lu_solve(&a, &[1.0, 1.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Mat::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]).unwrap();
        let inv = inverse(&a).unwrap();
        let id = &a * &inv;
        assert!((&id - &Mat::identity(3)).max_abs() < 1e-14);
    }
}
