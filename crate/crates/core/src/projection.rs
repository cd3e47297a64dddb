//! Continuous projection operators that keep an adapted quantity inside a
//! convex sublevel set.
//!
//! Two operators live here:
//!
//! * the Γ-projection for parameter matrices, applied column by column,
//!   which removes the Γ-weighted outward normal component of an update once
//!   a column enters the boundary layer `0 < f(θ_j) ≤ 1`;
//! * the projection for positive definite matrices, which scales the whole
//!   update by `ρ = 1 − ℱ(Γ)` when `Γ` moves outward inside its layer.
//!
//! Both use the quadratic bound family
//!
//! ```text
//! f(x) = (‖x‖² − cap²) / (2·ε·cap + ε²),   ∇f(x) = 2x / (2·ε·cap + ε²)
//! ```
//!
//! which is `0` on `‖x‖ = cap` and `1` on `‖x‖ = cap + ε`.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, Mat, SymMat};

/// A coercive, continuously differentiable convex function over the entries
/// of a vector or matrix (flattened row-major).
pub trait ConvexFunction {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Vector2,
    Frobenius,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexBound {
    cap: f64,
    margin: f64,
    kind: NormKind,
}

impl ConvexBound {
    pub fn new(cap: f64, margin: f64, kind: NormKind) -> Result<Self> {
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(Error::invalid("cap", format!("must be finite and >= 0, got {cap}")));
        }
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::invalid("margin", format!("must be finite and > 0, got {margin}")));
        }
        Ok(Self { cap, margin, kind })
    }

    pub fn vector(cap: f64, margin: f64) -> Result<Self> {
        Self::new(cap, margin, NormKind::Vector2)
    }

    pub fn frobenius(cap: f64, margin: f64) -> Result<Self> {
        Self::new(cap, margin, NormKind::Frobenius)
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    /// Radius of the `f ≤ 1` sublevel set, `cap + ε`.
    pub fn outer_radius(&self) -> f64 {
        self.cap + self.margin
    }

    fn denom(&self) -> f64 {
        2.0 * self.margin * self.cap + self.margin * self.margin
    }

    /// `f` as a function of the norm alone.
    pub fn value_at_norm(&self, norm: f64) -> f64 {
        (norm * norm - self.cap * self.cap) / self.denom()
    }

    pub fn eval_mat(&self, x: &Mat) -> f64 {
        self.value(x.as_slice())
    }

    pub fn grad_mat(&self, x: &Mat) -> Mat {
        x.scale(2.0 / self.denom())
    }

    /// `ℱ(Γ)` with the Frobenius norm of the full symmetric matrix.
    pub fn eval_sym(&self, g: &SymMat) -> f64 {
        self.value_at_norm(g.frobenius_norm())
    }
}

impl ConvexFunction for ConvexBound {
    fn value(&self, x: &[f64]) -> f64 {
        self.value_at_norm(norm2(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let k = 2.0 / self.denom();
        x.iter().map(|v| k * v).collect()
    }
}

/// Per-column bounds `F = [f_1, …, f_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjFamily {
    bounds: Vec<ConvexBound>,
}

impl ProjFamily {
    pub fn new(bounds: Vec<ConvexBound>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("family", "needs at least one column bound"));
        }
        Ok(Self { bounds })
    }

    pub fn uniform(bound: ConvexBound, m: usize) -> Result<Self> {
        Self::new(vec![bound; m])
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[ConvexBound] {
        &self.bounds
    }

    /// Largest column radius, the norm cap on each projected column.
    pub fn max_outer_radius(&self) -> f64 {
        self.bounds.iter().map(|b| b.outer_radius()).fold(0.0, f64::max)
    }

    /// Bound on the Frobenius norm of any matrix whose columns lie in `Ξ₁`.
    pub fn theta_max(&self) -> f64 {
        self.bounds
            .iter()
            .map(|b| b.outer_radius().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `f_j(θ_j)` for every column.
    pub fn levels(&self, theta: &Mat) -> Vec<f64> {
        self.bounds
            .iter()
            .enumerate()
            .map(|(j, b)| b.value(&theta.col(j)))
            .collect()
    }
}

fn gamma_column<F: ConvexFunction + ?Sized>(
    theta_j: &[f64],
    y_j: &[f64],
    f: &F,
    gamma: &Mat,
) -> Result<Vec<f64>> {
    let gy = gamma.mul_vec(y_j);
    let level = f.value(theta_j);
    if !(level > 0.0) {
        return Ok(gy);
    }
    let grad = f.gradient(theta_j);
    // yᵀΓ∇f = (Γy)·∇f since Γ is symmetric
    let push = dot(&gy, &grad);
    if !(push > 0.0) {
        return Ok(gy);
    }
    let g_grad = gamma.mul_vec(&grad);
    let curvature = dot(&grad, &g_grad);
    if !(curvature > 0.0) {
        return Err(Error::Internal(format!(
            "zero projection gradient with f = {level} > 0"
        )));
    }
    let k = push * level / curvature;
    Ok(gy.iter().zip(&g_grad).map(|(a, b)| a - k * b).collect())
}

/// Γ-projection of a single column update `y_j` at `θ_j`.
pub fn proj_gamma_column<F: ConvexFunction + ?Sized>(
    theta_j: &[f64],
    y_j: &[f64],
    f: &F,
    gamma: &SymMat,
) -> Result<Vec<f64>> {
    let n = gamma.dim();
    if theta_j.len() != n || y_j.len() != n {
        return Err(Error::Dimension(format!(
            "column projection with Γ {n}x{n}, θ_j {}, y_j {}",
            theta_j.len(),
            y_j.len()
        )));
    }
    gamma_column(theta_j, y_j, f, &gamma.to_mat())
}

/// Columnwise Γ-projection `[Proj_Γ(θ_1, y_1, f_1) ⋯ Proj_Γ(θ_m, y_m, f_m)]`.
pub fn proj_gamma_matrix(theta: &Mat, y: &Mat, family: &ProjFamily, gamma: &SymMat) -> Result<Mat> {
    let n = gamma.dim();
    if theta.shape() != y.shape() || theta.rows() != n || theta.cols() != family.len() {
        return Err(Error::Dimension(format!(
            "Γ-projection: θ {:?}, Y {:?}, Γ {n}x{n}, {} column bounds",
            theta.shape(),
            y.shape(),
            family.len()
        )));
    }
    let g = gamma.to_mat();
    let mut out = Mat::zeros(theta.rows(), theta.cols());
    for (j, f) in family.bounds().iter().enumerate() {
        let col = gamma_column(&theta.col(j), &y.col(j), f, &g)?;
        out.set_col(j, &col);
    }
    Ok(out)
}

/// Scalar form `ρ` of the positive-definite projection: `1 − ℱ(Γ)` when
/// `ℱ(Γ) > 0` and `Tr[𝒴ᵀ∇ℱ(Γ)] > 0`, otherwise `1`.
pub fn pd_rho(gamma: &SymMat, ycal: &Mat, fcal: &ConvexBound) -> Result<f64> {
    let n = gamma.dim();
    if ycal.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "PD projection: Γ {n}x{n} but 𝒴 {:?}",
            ycal.shape()
        )));
    }
    let level = fcal.eval_sym(gamma);
    if !(level > 0.0) {
        return Ok(1.0);
    }
    // ∇ℱ(Γ) = 2Γ/(2·ε·cap + ε²), a positive multiple of Γ
    let push = ycal.frobenius_dot(&gamma.to_mat());
    if push > 0.0 {
        Ok(1.0 - level)
    } else {
        Ok(1.0)
    }
}

/// Projection for positive definite matrices, returned as `(ρ·𝒴, ρ)`.
pub fn proj_pd(gamma: &SymMat, ycal: &Mat, fcal: &ConvexBound) -> Result<(Mat, f64)> {
    let rho = pd_rho(gamma, ycal, fcal)?;
    Ok((ycal.scale(rho), rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_bound() -> ConvexBound {
        ConvexBound::vector(1.0, 0.1).unwrap()
    }

    #[test]
    fn f_on_both_boundaries() {
        let f = unit_bound();
        assert_eq!(f.value(&[1.0, 0.0]), 0.0);
        assert!((f.value(&[1.1, 0.0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn f_midway_value_and_gradient() {
        // (1.05² − 1)/(0.2 + 0.01) = 0.1025/0.21
        let f = unit_bound();
        let x = [1.05, 0.0];
        assert!((f.value(&x) - 0.1025 / 0.21).abs() < 1e-14);
        assert!((f.value(&x) - 0.488).abs() < 1e-3);
        let g = f.gradient(&x);
        assert!((g[0] - 10.0).abs() < 1e-13 && g[1] == 0.0);
    }

    #[test]
    fn non_positive_margin_rejected() {
        assert!(ConvexBound::vector(1.0, 0.0).is_err());
        assert!(ConvexBound::vector(1.0, -0.1).is_err());
        assert!(ConvexBound::vector(-1.0, 0.1).is_err());
    }

    #[test]
    fn inactive_inside() {
        let out =
            proj_gamma_column(&[0.5, 0.0], &[1.0, 0.0], &unit_bound(), &SymMat::identity(2)).unwrap();
        assert_eq!(out, vec![1.0, 0.0]);
    }

    #[test]
    fn outer_boundary_annihilates_radial_push() {
        let out =
            proj_gamma_column(&[1.1, 0.0], &[1.0, 0.0], &unit_bound(), &SymMat::identity(2)).unwrap();
        assert!(out[0].abs() < 1e-14 && out[1] == 0.0);
    }

    #[test]
    fn midway_scales_radial_push() {
        let out =
            proj_gamma_column(&[1.05, 0.0], &[1.0, 0.0], &unit_bound(), &SymMat::identity(2)).unwrap();
        assert!((out[0] - (1.0 - 0.1025 / 0.21)).abs() < 1e-14);
        assert!((out[0] - 0.512).abs() < 1e-3);
    }

    #[test]
    fn inward_push_is_untouched() {
        let out =
            proj_gamma_column(&[1.05, 0.0], &[-1.0, 0.3], &unit_bound(), &SymMat::identity(2)).unwrap();
        assert_eq!(out, vec![-1.0, 0.3]);
    }

    #[test]
    fn matrix_projection_is_columnwise() {
        let fam = ProjFamily::uniform(unit_bound(), 2).unwrap();
        let theta = Mat::from_rows(&[&[1.05, 0.2], &[0.0, 0.0]]).unwrap();
        let y = Mat::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]]).unwrap();
        let out = proj_gamma_matrix(&theta, &y, &fam, &SymMat::identity(2)).unwrap();
        assert!((out[(0, 0)] - (1.0 - 0.1025 / 0.21)).abs() < 1e-14);
        assert_eq!(out[(0, 1)], 1.0);
        assert_eq!(out[(1, 0)], 0.0);
        assert_eq!(out[(1, 1)], 0.0);

        // single column matches the column operator
        let fam1 = ProjFamily::uniform(unit_bound(), 1).unwrap();
        let g = SymMat::from_upper(&Mat::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap();
        let th = Mat::column(&[0.9, 0.5]).unwrap();
        let yy = Mat::column(&[0.3, 0.7]).unwrap();
        let m = proj_gamma_matrix(&th, &yy, &fam1, &g).unwrap();
        let c = proj_gamma_column(&th.col(0), &yy.col(0), &unit_bound(), &g).unwrap();
        assert_eq!(m.col(0), c);
    }

    #[test]
    fn all_inactive_gives_gamma_y() {
        let fam = ProjFamily::uniform(unit_bound(), 2).unwrap();
        let theta = Mat::zeros(2, 2);
        let y = Mat::from_rows(&[&[1.0, -2.0], &[3.0, 0.5]]).unwrap();
        let g = SymMat::from_upper(&Mat::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap();
        let out = proj_gamma_matrix(&theta, &y, &fam, &g).unwrap();
        assert_eq!(out, &g.to_mat() * &y);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let fam = ProjFamily::uniform(unit_bound(), 1).unwrap();
        let r = proj_gamma_matrix(&Mat::zeros(3, 1), &Mat::zeros(2, 1), &fam, &SymMat::identity(2));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    fn frob_bound_with_level(gamma: &SymMat, level: f64) -> ConvexBound {
        // choose cap so that ℱ(Γ) = level with margin ε = 1
        let r = gamma.frobenius_norm();
        let eps: f64 = 1.0;
        // (r² − c²) = level (2c + 1)  ⇒  c² + 2·level·c + level − r² = 0
        let c = -level + (level * level - level + r * r).sqrt();
        let b = ConvexBound::frobenius(c, eps).unwrap();
        assert!((b.eval_sym(gamma) - level).abs() < 1e-12);
        b
    }

    #[test]
    fn pd_interior_passes_through() {
        let g = SymMat::identity(2);
        let f = ConvexBound::frobenius(10.0, 1.0).unwrap();
        let y = Mat::identity(2);
        let (out, rho) = proj_pd(&g, &y, &f).unwrap();
        assert_eq!(rho, 1.0);
        assert_eq!(out, y);
    }

    #[test]
    fn pd_outer_edge_freezes() {
        let g = SymMat::scaled_identity(2, 3.0);
        let r = g.frobenius_norm();
        let f = ConvexBound::frobenius(r - 1.0, 1.0).unwrap();
        assert!((f.eval_sym(&g) - 1.0).abs() < 1e-12);
        let (out, rho) = proj_pd(&g, &Mat::identity(2), &f).unwrap();
        assert!(rho.abs() < 1e-12);
        assert!(out.max_abs() < 1e-12);
    }

    #[test]
    fn pd_half_level() {
        let g = SymMat::scaled_identity(3, 2.0);
        let f = frob_bound_with_level(&g, 0.5);
        let y = Mat::identity(3);
        let (out, rho) = proj_pd(&g, &y, &f).unwrap();
        assert!((rho - 0.5).abs() < 1e-12);
        assert!((&out - &y.scale(0.5)).max_abs() < 1e-12);
        // shrinking direction is not limited
        let (_, rho) = proj_pd(&g, &y.scale(-1.0), &f).unwrap();
        assert_eq!(rho, 1.0);
    }

    // --- projection inequalities ---

    fn rand_spd(n: usize) -> impl Strategy<Value = SymMat> {
        (prop::collection::vec(-1.0f64..1.0, n * n), 0.05f64..3.0).prop_map(move |(r, s)| {
            let r = Mat::new(n, n, r).unwrap();
            let m = &(&r * &r.transpose()) + &Mat::identity(n).scale(s);
            SymMat::from_upper(&m).unwrap()
        })
    }

    fn point_in_ball(n: usize, radius: f64) -> impl Strategy<Value = Vec<f64>> {
        (prop::collection::vec(-1.0f64..1.0, n), 0.0f64..=1.0).prop_map(move |(d, s)| {
            let nd = norm2(&d).max(1e-12);
            d.iter().map(|v| v / nd * radius * s).collect()
        })
    }

    proptest! {
        #[test]
        fn trace_inequality(
            (gamma, theta, theta_star, y) in (1usize..=6, 1usize..=3).prop_flat_map(|(n, m)| (
                rand_spd(n),
                prop::collection::vec(point_in_ball(n, 1.1), m),
                prop::collection::vec(point_in_ball(n, 1.0), m),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), m),
            ))
        ) {
            let n = gamma.dim();
            let m = theta.len();
            let to_mat = |cols: &Vec<Vec<f64>>| {
                let mut a = Mat::zeros(n, m);
                for (j, c) in cols.iter().enumerate() { a.set_col(j, c); }
                a
            };
            let (th, ts, yy) = (to_mat(&theta), to_mat(&theta_star), to_mat(&y));
            let fam = ProjFamily::uniform(unit_bound(), m).unwrap();
            let p = proj_gamma_matrix(&th, &yy, &fam, &gamma).unwrap();
            let gy = &gamma.to_mat() * &yy;
            let ginv = crate::numerics::inverse(&gamma.to_mat()).unwrap();
            let lhs = (&(&th - &ts).transpose() * &(&ginv * &(&p - &gy))).trace();
            prop_assert!(lhs <= 1e-12 * (1.0 + gy.max_abs() * ginv.max_abs()), "lhs = {lhs}");
        }

        #[test]
        fn boundary_gradient_points_away_from_interior(
            n in 1usize..=6,
            dir in prop::collection::vec(-1.0f64..1.0, 6),
            inner in prop::collection::vec(-1.0f64..1.0, 6),
            delta in 0.01f64..1.0,
            frac in 0.0f64..0.999,
        ) {
            let f = unit_bound();
            let dir = &dir[..n];
            let nd = norm2(dir);
            prop_assume!(nd > 1e-6);
            // θ on f = δ; θ* strictly inside
            let r = (1.0 + delta * f.denom()).sqrt();
            let theta: Vec<f64> = dir.iter().map(|v| v / nd * r).collect();
            let inner = &inner[..n];
            let ni = norm2(inner).max(1e-12);
            let rs = (f.cap() * f.cap() + frac * delta * f.denom()).sqrt() * frac;
            let star: Vec<f64> = inner.iter().map(|v| v / ni * rs).collect();
            prop_assert!(f.value(&star) < delta);
            let g = f.gradient(&theta);
            let lhs: f64 = theta.iter().zip(&star).zip(&g).map(|((a, b), c)| (a - b) * c).sum();
            prop_assert!(lhs >= -1e-12);
        }

        #[test]
        fn sublevel_set_is_bounded(cap in 0.0f64..10.0, eps in 0.01f64..5.0, x in prop::collection::vec(-20.0f64..20.0, 1..6)) {
            let f = ConvexBound::vector(cap, eps).unwrap();
            if f.value(&x) <= 1.0 {
                prop_assert!(norm2(&x) <= cap + eps);
            }
        }

        #[test]
        fn rho_in_unit_interval(gamma in rand_spd(3), level in -2.0f64..=1.0, y in prop::collection::vec(-5.0f64..5.0, 9)) {
            let r = gamma.frobenius_norm();
            // any level ≤ 1 is reachable by choosing the cap (ε = 1)
            let c2 = level * level - level + r * r;
            prop_assume!(c2 >= 0.0);
            let c = -level + c2.sqrt();
            prop_assume!(c >= 0.0);
            let f = ConvexBound::frobenius(c, 1.0).unwrap();
            let (_, rho) = proj_pd(&gamma, &Mat::new(3, 3, y).unwrap(), &f).unwrap();
            prop_assert!((-1e-12..=1.0).contains(&rho), "rho = {rho}");
        }
    }

    #[test]
    fn projected_flow_stays_in_outer_set() {
        // RK4 on θ̇ = Proj_Γ(θ, Y(t), F) with a persistent outward push
        let fam = ProjFamily::uniform(unit_bound(), 2).unwrap();
        let gamma = SymMat::from_upper(&Mat::from_rows(&[&[3.0, 1.0], &[1.0, 2.0]]).unwrap()).unwrap();
        let field = |t: f64, th: &Mat| {
            let y = Mat::from_rows(&[&[5.0 * t.cos(), 4.0], &[5.0 * t.sin(), 3.0 * (2.0 * t).cos()]]).unwrap();
            proj_gamma_matrix(th, &y, &fam, &gamma).unwrap()
        };
        let mut theta = Mat::from_rows(&[&[0.9, -0.2], &[0.3, 1.0]]).unwrap();
        let dt = 1e-3;
        let mut worst: f64 = 0.0;
        for k in 0..20_000 {
            let t = k as f64 * dt;
            let k1 = field(t, &theta);
            let k2 = field(t + 0.5 * dt, &(&theta + &k1.scale(0.5 * dt)));
            let k3 = field(t + 0.5 * dt, &(&theta + &k2.scale(0.5 * dt)));
            let k4 = field(t + dt, &(&theta + &k3.scale(dt)));
            let incr = &(&k1 + &k2.scale(2.0)) + &(&k3.scale(2.0) + &k4);
            theta = &theta + &incr.scale(dt / 6.0);
            for lv in fam.levels(&theta) {
                worst = worst.max(lv);
            }
        }
        assert!(worst > 0.9, "flow never reached the boundary layer");
        assert!(worst <= 1.0 + 1e-6, "max level {worst}");
    }
}
