//! Adaptive laws for the parameter estimate.
//!
//! Three variants share one state layout:
//!
//! * static gain, `θ̇ = Γ₀·Y`;
//! * time-varying learning rate with projection,
//!   `θ̇ = Proj_Γ(θ, Y, F)`, `Γ̇ = λ_Γ·ρ·(Γ − κΓΩΓ)`;
//! * the same with a forgetting factor in place of the matrix projection,
//!   `Γ̇ = λ_Γ(1 − ‖Γ‖/Γ_max)(Γ − κΓΩΓ)`.
//!
//! The time-varying variants carry the information-matrix filter `Ω`.
//! For stepping, the live state is flattened as `[θ (row-major), Γ (packed),
//! Ω (packed)]` so that every sub-state advances on the same integrator
//! stages.

use crate::error::{Error, Result};
use crate::excitation::{omega_rhs_packed, InfoMatrixState};
use crate::numerics::{packed_len, spectral_norm, sym_eig, Mat, SymMat};
use crate::projection::{pd_rho, proj_gamma_matrix, ConvexBound, NormKind, ProjFamily};
use crate::simulate::{integrate_step, Integrator, StageTime};
use crate::tol;

/// Parameter estimate `θ` (N×m) with its per-column bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    pub theta: Mat,
    pub family: ProjFamily,
}

impl ParamMatrix {
    pub fn new(theta: Mat, family: ProjFamily) -> Result<Self> {
        if theta.cols() != family.len() {
            return Err(Error::Dimension(format!(
                "θ has {} columns but {} column bounds were given",
                theta.cols(),
                family.len()
            )));
        }
        Ok(Self { theta, family })
    }

    pub fn max_level(&self) -> f64 {
        self.family.levels(&self.theta).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Learning rate `Γ` with the bound that keeps it inside `Υ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRateState {
    pub gamma: SymMat,
    pub fcal: ConvexBound,
    pub lambda_gamma: f64,
    pub kappa: f64,
    pub rho_last: f64,
    gamma_min: f64,
}

impl LearningRateState {
    pub fn new(gamma0: SymMat, fcal: ConvexBound, lambda_gamma: f64, kappa: f64) -> Result<Self> {
        if fcal.kind() != NormKind::Frobenius {
            return Err(Error::invalid("fcal", "learning-rate bound must use the Frobenius norm"));
        }
        if !(lambda_gamma > 0.0 && lambda_gamma.is_finite()) {
            return Err(Error::invalid("lambda_gamma", format!("must be positive, got {lambda_gamma}")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("must be non-negative, got {kappa}")));
        }
        let e = sym_eig(&gamma0)?;
        if !(e.min() > 0.0) {
            return Err(Error::invalid(
                "gamma0",
                format!("must be positive definite, smallest eigenvalue {}", e.min()),
            ));
        }
        let level = fcal.eval_sym(&gamma0);
        if level > 1.0 {
            return Err(Error::invalid(
                "gamma0",
                format!("‖Γ₀‖_F = {} exceeds Γ_max = {}", gamma0.frobenius_norm(), fcal.outer_radius()),
            ));
        }
        let gamma_min = 1.0 / (1.0 / e.min() + kappa);
        let mut state = Self {
            gamma: gamma0,
            fcal,
            lambda_gamma,
            kappa,
            rho_last: 1.0,
            gamma_min,
        };
        state.rho_last = pd_rho(&state.gamma, &state.ycal(&SymMat::zeros(state.dim()))?, &state.fcal)?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    /// `1/(max eig(Γ(t₀)⁻¹) + κ)`.
    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    /// Radius at which the bound function reaches one.
    pub fn gamma_max(&self) -> f64 {
        self.fcal.outer_radius()
    }

    /// `𝒴 = Γ − κΓΩΓ`.
    pub fn ycal(&self, omega: &SymMat) -> Result<Mat> {
        ycal(&self.gamma, omega, self.kappa)
    }
}

fn ycal(gamma: &SymMat, omega: &SymMat, kappa: f64) -> Result<Mat> {
    if omega.dim() != gamma.dim() {
        return Err(Error::Dimension(format!(
            "Ω is {0}x{0} but Γ is {1}x{1}",
            omega.dim(),
            gamma.dim()
        )));
    }
    let g = gamma.to_mat();
    let gog = &(&g * &omega.to_mat()) * &g;
    Ok(&g - &gog.scale(kappa))
}

fn gamma_rhs_at(gamma: &SymMat, omega: &SymMat, fcal: &ConvexBound, lambda: f64, kappa: f64) -> Result<(SymMat, f64)> {
    let y = ycal(gamma, omega, kappa)?;
    let rho = pd_rho(gamma, &y, fcal)?;
    Ok((SymMat::from_upper(&y)?.scale(lambda * rho), rho))
}

fn forgetting_factor(gamma: &SymMat, gamma_max: f64) -> Result<f64> {
    Ok(1.0 - spectral_norm(gamma)? / gamma_max)
}

fn gamma_rhs_forgetting_at(gamma: &SymMat, omega: &SymMat, gamma_max: f64, lambda: f64, kappa: f64) -> Result<(SymMat, f64)> {
    let y = ycal(gamma, omega, kappa)?;
    let factor = forgetting_factor(gamma, gamma_max)?;
    Ok((SymMat::from_upper(&y)?.scale(lambda * factor), factor))
}

/// `Γ̇ = λ_Γ·ρ·(Γ − κΓΩΓ)` together with `ρ`.
pub fn gamma_rhs(state: &LearningRateState, omega: &SymMat) -> Result<(SymMat, f64)> {
    gamma_rhs_at(&state.gamma, omega, &state.fcal, state.lambda_gamma, state.kappa)
}

/// `Γ̇ = λ_Γ(1 − ‖Γ‖₂/Γ_max)(Γ − κΓΩΓ)`.
pub fn gamma_rhs_forgetting(state: &LearningRateState, omega: &SymMat) -> Result<SymMat> {
    Ok(gamma_rhs_forgetting_at(&state.gamma, omega, state.gamma_max(), state.lambda_gamma, state.kappa)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvState {
    pub rate: LearningRateState,
    pub info: InfoMatrixState,
}

impl TvState {
    pub fn new(rate: LearningRateState, info: InfoMatrixState) -> Result<Self> {
        if rate.dim() != info.omega.dim() {
            return Err(Error::Dimension(format!(
                "Γ is {0}x{0} but Ω is {1}x{1}",
                rate.dim(),
                info.omega.dim()
            )));
        }
        let mut s = Self { rate, info };
        s.rate.rho_last = s.current_rho(false)?;
        Ok(s)
    }

    fn current_rho(&self, forgetting: bool) -> Result<f64> {
        if forgetting {
            forgetting_factor(&self.rate.gamma, self.rate.gamma_max())
        } else {
            pd_rho(&self.rate.gamma, &self.rate.ycal(&self.info.omega)?, &self.rate.fcal)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    Static { gamma0: SymMat },
    TvProjected(TvState),
    TvForgetting(TvState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorLaw {
    pub params: ParamMatrix,
    pub kind: LawKind,
}

impl EstimatorLaw {
    pub fn static_gain(params: ParamMatrix, gamma0: SymMat) -> Result<Self> {
        if gamma0.dim() != params.theta.rows() {
            return Err(Error::Dimension(format!(
                "Γ₀ is {0}x{0} but θ has {1} rows",
                gamma0.dim(),
                params.theta.rows()
            )));
        }
        if !(sym_eig(&gamma0)?.min() > 0.0) {
            return Err(Error::invalid("gamma0", "must be positive definite"));
        }
        Ok(Self {
            params,
            kind: LawKind::Static { gamma0 },
        })
    }

    pub fn projected(params: ParamMatrix, tv: TvState) -> Result<Self> {
        Self::check_tv(&params, &tv)?;
        Ok(Self {
            params,
            kind: LawKind::TvProjected(tv),
        })
    }

    pub fn forgetting(params: ParamMatrix, mut tv: TvState) -> Result<Self> {
        Self::check_tv(&params, &tv)?;
        tv.rate.rho_last = tv.current_rho(true)?;
        Ok(Self {
            params,
            kind: LawKind::TvForgetting(tv),
        })
    }

    fn check_tv(params: &ParamMatrix, tv: &TvState) -> Result<()> {
        if tv.rate.dim() != params.theta.rows() {
            return Err(Error::Dimension(format!(
                "Γ is {0}x{0} but θ has {1} rows",
                tv.rate.dim(),
                params.theta.rows()
            )));
        }
        let level = params.max_level();
        if level > 1.0 + tol::THETA_LEVEL {
            return Err(Error::invalid(
                "theta0",
                format!("initial estimate lies outside its bound (level {level})"),
            ));
        }
        Ok(())
    }

    pub fn theta(&self) -> &Mat {
        &self.params.theta
    }

    pub fn n(&self) -> usize {
        self.params.theta.rows()
    }

    pub fn m(&self) -> usize {
        self.params.theta.cols()
    }

    pub fn tv(&self) -> Option<&TvState> {
        match &self.kind {
            LawKind::Static { .. } => None,
            LawKind::TvProjected(s) | LawKind::TvForgetting(s) => Some(s),
        }
    }

    /// Current learning rate: `Γ₀` for the static law.
    pub fn gamma(&self) -> &SymMat {
        match &self.kind {
            LawKind::Static { gamma0 } => gamma0,
            LawKind::TvProjected(s) | LawKind::TvForgetting(s) => &s.rate.gamma,
        }
    }

    pub fn omega(&self) -> Option<&SymMat> {
        self.tv().map(|s| &s.info.omega)
    }

    /// Scaling applied to the learning-rate flow at the current state: the
    /// projection `ρ`, the forgetting factor, or zero for the static law.
    pub fn rho(&self) -> f64 {
        self.tv().map_or(0.0, |s| s.rate.rho_last)
    }

    /// Length of the flattened live state.
    pub fn state_len(&self) -> usize {
        let nm = self.n() * self.m();
        match self.kind {
            LawKind::Static { .. } => nm,
            _ => nm + 2 * packed_len(self.n()),
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut out = self.params.theta.as_slice().to_vec();
        if let Some(s) = self.tv() {
            out.extend_from_slice(s.rate.gamma.packed());
            out.extend_from_slice(s.info.omega.packed());
        }
        out
    }

    fn split(&self, packed: &[f64]) -> Result<(Mat, Option<(SymMat, SymMat)>)> {
        if packed.len() != self.state_len() {
            return Err(Error::Dimension(format!(
                "estimator state of length {}, expected {}",
                packed.len(),
                self.state_len()
            )));
        }
        let (n, nm, p) = (self.n(), self.n() * self.m(), packed_len(self.n()));
        let theta = Mat::new(n, self.m(), packed[..nm].to_vec())?;
        let rest = match self.kind {
            LawKind::Static { .. } => None,
            _ => Some((
                SymMat::from_packed(n, packed[nm..nm + p].to_vec())?,
                SymMat::from_packed(n, packed[nm + p..].to_vec())?,
            )),
        };
        Ok((theta, rest))
    }

    /// `θ` stored in a flattened state.
    pub fn theta_of(&self, packed: &[f64]) -> Result<Mat> {
        Ok(self.split(packed)?.0)
    }

    /// Time derivative of the flattened state at `packed`, for update
    /// direction `Y` and regressor `φ`.
    pub fn derivative(&self, packed: &[f64], y: &Mat, phi: &[f64]) -> Result<Vec<f64>> {
        if y.shape() != self.params.theta.shape() {
            return Err(Error::Dimension(format!(
                "Y is {:?} but θ is {:?}",
                y.shape(),
                self.params.theta.shape()
            )));
        }
        let (theta, rest) = self.split(packed)?;
        match (&self.kind, rest) {
            (LawKind::Static { gamma0 }, _) => Ok((&gamma0.to_mat() * y).into_vec()),
            (LawKind::TvProjected(s) | LawKind::TvForgetting(s), Some((gamma, omega))) => {
                if phi.len() != self.n() {
                    return Err(Error::Dimension(format!(
                        "regressor of length {} for N = {}",
                        phi.len(),
                        self.n()
                    )));
                }
                let r = &s.rate;
                let dtheta = proj_gamma_matrix(&theta, y, &self.params.family, &gamma)?;
                let (dgamma, _) = match self.kind {
                    LawKind::TvForgetting(_) => {
                        gamma_rhs_forgetting_at(&gamma, &omega, r.gamma_max(), r.lambda_gamma, r.kappa)?
                    }
                    _ => gamma_rhs_at(&gamma, &omega, &r.fcal, r.lambda_gamma, r.kappa)?,
                };
                let mut out = dtheta.into_vec();
                out.extend_from_slice(dgamma.packed());
                out.extend(omega_rhs_packed(omega.packed(), phi, s.info.lambda_omega));
                Ok(out)
            }
            _ => Err(Error::Internal("estimator state layout mismatch".into())),
        }
    }

    /// Rebuilds the law from an advanced flattened state, checking every
    /// invariant. Excursions beyond tolerance are reported as integration
    /// failures at time `t`.
    pub fn with_state(&self, packed: &[f64], t: f64) -> Result<Self> {
        let (theta, rest) = self.split(packed)?;
        let params = ParamMatrix {
            theta,
            family: self.params.family.clone(),
        };
        let fail = |quantity: &str, detail: String| Error::Integration {
            t,
            quantity: quantity.into(),
            detail,
        };
        let kind = match (&self.kind, rest) {
            (LawKind::Static { gamma0 }, _) => LawKind::Static { gamma0: gamma0.clone() },
            (k @ (LawKind::TvProjected(s) | LawKind::TvForgetting(s)), Some((gamma, omega))) => {
                let level = params.max_level();
                if level > 1.0 + tol::THETA_LEVEL {
                    return Err(fail("theta", format!("left its bound, level {level}")));
                }
                let ge = sym_eig(&gamma)?;
                let (lo, hi) = (s.rate.gamma_min, s.rate.gamma_max());
                if ge.min() < lo - tol::GAMMA_BAND || ge.max() > hi + tol::GAMMA_BAND {
                    return Err(fail(
                        "Gamma",
                        format!("eigenvalues [{}, {}] outside [{lo}, {hi}]", ge.min(), ge.max()),
                    ));
                }
                let oe = sym_eig(&omega)?;
                if oe.min() < -tol::OMEGA_BAND || oe.max() > 1.0 + tol::OMEGA_BAND {
                    return Err(fail(
                        "Omega",
                        format!("eigenvalues [{}, {}] outside [0, 1]", oe.min(), oe.max()),
                    ));
                }
                let mut tv = s.clone();
                tv.rate.gamma = gamma;
                tv.info.omega = omega;
                tv.info.t = t;
                match k {
                    LawKind::TvForgetting(_) => {
                        tv.rate.rho_last = tv.current_rho(true)?;
                        LawKind::TvForgetting(tv)
                    }
                    _ => {
                        tv.rate.rho_last = tv.current_rho(false)?;
                        LawKind::TvProjected(tv)
                    }
                }
            }
            _ => return Err(Error::Internal("estimator state layout mismatch".into())),
        };
        Ok(Self { params, kind })
    }
}

/// `θ̇` for the current state: `Γ₀·Y` for the static law, the Γ-projection
/// otherwise.
pub fn theta_rhs(law: &EstimatorLaw, y: &Mat) -> Result<Mat> {
    if y.shape() != law.params.theta.shape() {
        return Err(Error::Dimension(format!(
            "Y is {:?} but θ is {:?}",
            y.shape(),
            law.params.theta.shape()
        )));
    }
    match &law.kind {
        LawKind::Static { gamma0 } => Ok(&gamma0.to_mat() * y),
        LawKind::TvProjected(s) | LawKind::TvForgetting(s) => {
            proj_gamma_matrix(&law.params.theta, y, &law.params.family, &s.rate.gamma)
        }
    }
}

/// One RK4 step of the estimator with `Y` and `φ` held over the step.
pub fn estimator_step(law: &EstimatorLaw, y: &Mat, phi: &[f64], t: f64, dt: f64) -> Result<EstimatorLaw> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let next = integrate_step(
        Integrator::Rk4,
        |_: StageTime, x: &[f64]| law.derivative(x, y, phi),
        t,
        &law.pack(),
        dt,
    )?;
    law.with_state(&next, t + dt)
}
