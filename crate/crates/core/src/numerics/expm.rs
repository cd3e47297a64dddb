use super::{inverse, Mat};
use crate::error::{Error, Result};

// Padé(13) coefficients and the 1-norm threshold below which the degree-13
// approximant is accurate to unit roundoff without scaling.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential `exp(M·t)` by scaling and squaring with a degree-13
/// Padé approximant.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::Dimension("expm needs a square matrix".into()));
    }
    if !t.is_finite() || !m.is_finite() {
        return Err(Error::NonFinite("expm input".into()));
    }
    let n = m.rows();
    let a = m.scale(t);
    let norm = a.norm1();
    if norm == 0.0 {
        return Ok(Mat::identity(n));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale(0.5f64.powi(s));

    let id = Mat::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let mut u_inner = &(&a6.scale(b[13]) + &a4.scale(b[11])) + &a2.scale(b[9]);
    u_inner = &a6 * &u_inner;
    let u_tail = &(&(&a6.scale(b[7]) + &a4.scale(b[5])) + &a2.scale(b[3])) + &id.scale(b[1]);
    let u = &a * &(&u_inner + &u_tail);

    let mut v_inner = &(&a6.scale(b[12]) + &a4.scale(b[10])) + &a2.scale(b[8]);
    v_inner = &a6 * &v_inner;
    let v_tail = &(&(&a6.scale(b[6]) + &a4.scale(b[4])) + &a2.scale(b[2])) + &id.scale(b[0]);
    let v = &v_inner + &v_tail;

    let p = &v + &u;
    let q = &v - &u;
    let mut r = &inverse(&q)? * &p;
    for _ in 0..s {
        r = &r * &r;
    }
    if !r.is_finite() {
        return Err(Error::NonFinite("expm result".into()));
    }
    Ok(r)
}
