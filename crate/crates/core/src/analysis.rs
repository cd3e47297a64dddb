//! Lyapunov diagnostics along recorded trajectories.
//!
//! With `V = eᵀPe + Tr[θ̃ᵀΓ⁻¹θ̃]`, the derivative obeys
//! `V̇ ≤ −η(t)·V + υ(t)` where
//!
//! ```text
//! υ(t) = λ_Γ·ρ·κ‖Ω‖‖θ̃‖² + 2Γ_min⁻¹‖θ̃‖‖θ̇*‖
//! η(t) = min{q₀, λ_Γ·ρ/Γ_max} / max{p_max, 1/Γ_min}
//! ```
//!
//! and the residual sets are `D = {η(p_min‖e‖² + ‖θ̃‖²/Γ_max) ≤ υ}`, with
//! `D_max` the same using the constants `η₀` and `υ_max`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::error_models::ErrorModelScenario;
use crate::estimator::{EstimatorLaw, LawKind};
use crate::numerics::{dot, spectral_norm, sym_eig, sym_inverse, LyapunovCert, Mat, SymMat};
use crate::simulate::Trajectory;
use crate::tol;

/// Learning-rate constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub lambda_gamma: f64,
    pub kappa: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Gains {
    /// For the static law `λ_Γ = κ = 0` and the bounds are the extreme
    /// eigenvalues of `Γ₀`.
    pub fn from_law(law: &EstimatorLaw) -> Result<Self> {
        match &law.kind {
            LawKind::Static { gamma0 } => {
                let e = sym_eig(gamma0)?;
                Ok(Self {
                    lambda_gamma: 0.0,
                    kappa: 0.0,
                    gamma_min: e.min(),
                    gamma_max: e.max(),
                })
            }
            LawKind::TvProjected(s) | LawKind::TvForgetting(s) => Ok(Self {
                lambda_gamma: s.rate.lambda_gamma,
                kappa: s.rate.kappa,
                gamma_min: s.rate.gamma_min(),
                gamma_max: s.rate.gamma_max(),
            }),
        }
    }
}

/// `eᵀPe + Tr[θ̃ᵀΓ⁻¹θ̃]`.
pub fn lyapunov_v(e: &[f64], theta_tilde: &Mat, p: &SymMat, gamma: &SymMat) -> Result<f64> {
    let n = p.dim();
    if e.len() != n || gamma.dim() != theta_tilde.rows() {
        return Err(Error::Dimension(format!(
            "V with e {}, P {n}x{n}, θ̃ {:?}, Γ {}x{}",
            e.len(),
            theta_tilde.shape(),
            gamma.dim(),
            gamma.dim()
        )));
    }
    let pe = p.to_mat().mul_vec(e);
    let gi = sym_inverse(gamma)?.to_mat();
    let w = &gi * theta_tilde;
    Ok(dot(e, &pe) + theta_tilde.frobenius_dot(&w))
}

/// `λ_Γ·ρ·κ‖Ω‖‖θ̃‖² + 2Γ_min⁻¹‖θ̃‖‖θ̇*‖`, with the spectral norm of `Ω`.
pub fn upsilon(rho: f64, omega: &SymMat, norm_theta_tilde: f64, norm_theta_star_dot: f64, gains: &Gains) -> Result<f64> {
    let w = spectral_norm(omega)?;
    Ok(gains.lambda_gamma * rho * gains.kappa * w * norm_theta_tilde * norm_theta_tilde
        + 2.0 / gains.gamma_min * norm_theta_tilde * norm_theta_star_dot)
}

/// `λ_Γ·κ·θ̃_max² + 2Γ_min⁻¹·θ̃_max·θ*_{d,max}`.
pub fn upsilon_max(theta_tilde_max: f64, theta_star_d_max: f64, gains: &Gains) -> f64 {
    gains.lambda_gamma * gains.kappa * theta_tilde_max * theta_tilde_max
        + 2.0 / gains.gamma_min * theta_tilde_max * theta_star_d_max
}

/// `min{q₀, λ_Γ·ρ/Γ_max} / max{p_max, 1/Γ_min}`.
pub fn eta(rho: f64, cert: &LyapunovCert, gains: &Gains) -> f64 {
    let num = cert.q0.min(gains.lambda_gamma * rho / gains.gamma_max);
    num / cert.p_max.max(1.0 / gains.gamma_min)
}

/// `η` evaluated at the lower bound `ρ₀` of `ρ` over the excitation interval.
pub fn eta0(rho0: f64, cert: &LyapunovCert, gains: &Gains) -> f64 {
    eta(rho0, cert, gains)
}

/// Membership of `(e, θ̃)` in `{η(p_min‖e‖² + ‖θ̃‖²/Γ_max) ≤ υ}`.
pub fn in_residual_set(norm_e: f64, norm_theta_tilde: f64, eta: f64, upsilon: f64, cert: &LyapunovCert, gains: &Gains) -> bool {
    eta * (cert.p_min * norm_e * norm_e + norm_theta_tilde * norm_theta_tilde / gains.gamma_max) <= upsilon
}

/// Membership in `D` (with `η`, `υ`) and in `D_max` (with `η₀`, `υ_max`).
pub fn set_membership(
    norm_e: f64,
    norm_theta_tilde: f64,
    (eta_t, upsilon_t): (f64, f64),
    (eta0_val, upsilon_max_val): (f64, f64),
    cert: &LyapunovCert,
    gains: &Gains,
) -> (bool, bool) {
    (
        in_residual_set(norm_e, norm_theta_tilde, eta_t, upsilon_t, cert, gains),
        in_residual_set(norm_e, norm_theta_tilde, eta0_val, upsilon_max_val, cert, gains),
    )
}

/// `e^{−η₀(t−t3)}(V(t3) − υ_max/η₀) + υ_max/η₀`, and its limit
/// `V(t3) + υ_max(t − t3)` when `η₀ = 0`.
pub fn envelope_value(t: f64, t3: f64, v_t3: f64, eta0_val: f64, upsilon_max_val: f64) -> f64 {
    let s = t - t3;
    if eta0_val > 0.0 {
        let floor = upsilon_max_val / eta0_val;
        (-eta0_val * s).exp() * (v_t3 - floor) + floor
    } else {
        v_t3 + upsilon_max_val * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSample {
    pub t: f64,
    pub v: f64,
    pub envelope: f64,
    pub ok: bool,
}

fn window_range(traj: &Trajectory, t3: f64, t4: f64) -> Result<(usize, usize)> {
    if !(t4 >= t3) {
        return Err(Error::Range(format!("empty window [{t3}, {t4}]")));
    }
    Ok((traj.index_of(t3)?, traj.index_of(t4)?))
}

/// Checks `V(t) ≤ envelope(t) + 1e-6·(1 + V(t3))` on every record in
/// `[t3, t4]`.
pub fn envelope_check(traj: &Trajectory, t3: f64, t4: f64, eta0_val: f64, upsilon_max_val: f64) -> Result<Vec<EnvelopeSample>> {
    let (i3, i4) = window_range(traj, t3, t4)?;
    let r3 = &traj.records[i3];
    let slack = tol::ENVELOPE_SLACK * (1.0 + r3.v);
    Ok(traj.records[i3..=i4]
        .iter()
        .map(|r| {
            let envelope = envelope_value(r.t, r3.t, r3.v, eta0_val, upsilon_max_val);
            EnvelopeSample {
                t: r.t,
                v: r.v,
                envelope,
                ok: r.v <= envelope + slack,
            }
        })
        .collect())
}

/// Comparison bound `Φ(t,t3)V(t3) + ∫_{t3}^t Φ(t,τ)υ(τ)dτ` with
/// `Φ(t,τ) = exp(−∫_τ^t η)`, built by the trapezoid rule from per-record
/// `η` and `υ` over `[t3, t4]`.
pub fn transition_bound(traj: &Trajectory, eta_series: &[f64], upsilon_series: &[f64], t3: f64, t4: f64) -> Result<Vec<EnvelopeSample>> {
    if eta_series.len() != traj.records.len() || upsilon_series.len() != traj.records.len() {
        return Err(Error::Dimension("η and υ series must align with the records".into()));
    }
    let (i3, i4) = window_range(traj, t3, t4)?;
    let slack = tol::ENVELOPE_SLACK * (1.0 + traj.records[i3].v);
    let mut bound = traj.records[i3].v;
    let mut out = Vec::with_capacity(i4 - i3 + 1);
    for k in i3..=i4 {
        if k > i3 {
            let h = traj.records[k].t - traj.records[k - 1].t;
            let decay = (-0.5 * h * (eta_series[k - 1] + eta_series[k])).exp();
            bound = decay * bound + 0.5 * h * (decay * upsilon_series[k - 1] + upsilon_series[k]);
        }
        let r = &traj.records[k];
        out.push(EnvelopeSample {
            t: r.t,
            v: r.v,
            envelope: bound,
            ok: r.v <= bound + slack,
        });
    }
    Ok(out)
}

/// The three terms bounding `V̇`: `−eᵀQe`, `−2Tr[θ̃ᵀΓ⁻¹θ̇*]` and
/// `−λ_Γ·ρ·Tr[θ̃ᵀ(Γ⁻¹ − κΩ)θ̃]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdotTerms {
    pub term_q: f64,
    pub term_thetadot: f64,
    pub term_excitation: f64,
}

impl VdotTerms {
    pub fn sum(&self) -> f64 {
        self.term_q + self.term_thetadot + self.term_excitation
    }
}

pub struct Snapshot<'a> {
    pub e: &'a [f64],
    pub theta_tilde: &'a Mat,
    pub theta_star_dot: &'a Mat,
    pub gamma: &'a SymMat,
    pub omega: &'a SymMat,
    pub rho: f64,
    pub q: &'a SymMat,
}

pub fn vdot_decomposition(s: &Snapshot<'_>, gains: &Gains) -> Result<VdotTerms> {
    let gi = sym_inverse(s.gamma)?.to_mat();
    let qe = s.q.to_mat().mul_vec(s.e);
    let term_thetadot = -2.0 * s.theta_tilde.frobenius_dot(&(&gi * s.theta_star_dot));
    let inner = &gi - &s.omega.to_mat().scale(gains.kappa);
    let term_excitation = -gains.lambda_gamma * s.rho * s.theta_tilde.frobenius_dot(&(&inner * s.theta_tilde));
    Ok(VdotTerms {
        term_q: -dot(s.e, &qe),
        term_thetadot,
        term_excitation,
    })
}

/// Per-record bound diagnostics, aligned with the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub t: f64,
    pub eta_t: f64,
    pub upsilon_t: f64,
    pub eta0: f64,
    pub upsilon_max: f64,
    pub in_d: bool,
    pub in_dmax: bool,
    /// Present on records inside the envelope window.
    pub envelope_value: Option<f64>,
    pub envelope_ok: Option<bool>,
    pub vdot: VdotTerms,
}

/// Constants shared by every record of a bound report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSetup {
    pub gains: Gains,
    /// `θ_max + θ*_max`.
    pub theta_tilde_max: f64,
    pub theta_star_d_max: f64,
    /// Envelope window `[t3, t4]`; `ρ₀` is the smallest recorded `ρ` inside
    /// it, or over the whole trace when absent.
    pub window: Option<(f64, f64)>,
}

impl BoundSetup {
    pub fn new(scenario: &ErrorModelScenario, law: &EstimatorLaw, window: Option<(f64, f64)>) -> Result<Self> {
        Ok(Self {
            gains: Gains::from_law(law)?,
            theta_tilde_max: law.params.family.theta_max() + scenario.uncertainty.theta_star_max(),
            theta_star_d_max: scenario.uncertainty.theta_star_d_max(),
            window,
        })
    }
}

pub fn bound_reports(traj: &Trajectory, scenario: &ErrorModelScenario, setup: &BoundSetup) -> Result<Vec<BoundReport>> {
    let cert = &scenario.cert;
    let gains = &setup.gains;
    let (lo, hi) = match setup.window {
        Some((t3, t4)) => window_range(traj, t3, t4)?,
        None => (0, traj.records.len().saturating_sub(1)),
    };
    let rho0 = traj.records[lo..=hi].iter().map(|r| r.rho).fold(f64::INFINITY, f64::min);
    let eta0_val = eta0(rho0, cert, gains);
    let ups_max = upsilon_max(setup.theta_tilde_max, setup.theta_star_d_max, gains);

    let mut out = Vec::with_capacity(traj.records.len());
    for r in &traj.records {
        let tsd = scenario.uncertainty.theta_star_dot(r.t);
        let eta_t = eta(r.rho, cert, gains);
        let ups = upsilon(r.rho, &r.omega, r.norm_theta_tilde, tsd.frobenius_norm(), gains)?;
        let (in_d, in_dmax) = set_membership(r.norm_e, r.norm_theta_tilde, (eta_t, ups), (eta0_val, ups_max), cert, gains);
        let vdot = vdot_decomposition(
            &Snapshot {
                e: &r.e,
                theta_tilde: &r.theta_tilde,
                theta_star_dot: &tsd,
                gamma: &r.gamma,
                omega: &r.omega,
                rho: r.rho,
                q: &scenario.q,
            },
            gains,
        )?;
        out.push(BoundReport {
            t: r.t,
            eta_t,
            upsilon_t: ups,
            eta0: eta0_val,
            upsilon_max: ups_max,
            in_d,
            in_dmax,
            envelope_value: None,
            envelope_ok: None,
            vdot,
        });
    }
    if let Some((t3, t4)) = setup.window {
        for (k, s) in (lo..=hi).zip(envelope_check(traj, t3, t4, eta0_val, ups_max)?) {
            out[k].envelope_value = Some(s.envelope);
            out[k].envelope_ok = Some(s.ok);
        }
    }
    Ok(out)
}

pub const BOUND_HEADER: [&str; 12] = [
    "t",
    "eta",
    "upsilon",
    "eta0",
    "upsilon_max",
    "in_D",
    "in_Dmax",
    "envelope",
    "envelope_ok",
    "vdot_term_Q",
    "vdot_term_thetadot",
    "vdot_term_excitation",
];

/// Writes the reports as CSV. Envelope fields are empty outside the window.
pub fn write_bound_csv<W: Write>(reports: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUND_HEADER)?;
    for r in reports {
        w.write_record([
            r.t.to_string(),
            r.eta_t.to_string(),
            r.upsilon_t.to_string(),
            r.eta0.to_string(),
            r.upsilon_max.to_string(),
            r.in_d.to_string(),
            r.in_dmax.to_string(),
            r.envelope_value.map_or(String::new(), |v| v.to_string()),
            r.envelope_ok.map_or(String::new(), |v| v.to_string()),
            r.vdot.term_q.to_string(),
            r.vdot.term_thetadot.to_string(),
            r.vdot.term_excitation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::solve_lyapunov;
    use crate::simulate::Record;

    fn gains() -> Gains {
        Gains {
            lambda_gamma: 0.5,
            kappa: 0.5,
            gamma_min: 0.1,
            gamma_max: 10.0,
        }
    }

    fn cert(p_diag: f64) -> LyapunovCert {
        // A_m = −(1/(2p))·I gives P = p·I for Q = I
        solve_lyapunov(&Mat::identity(3).scale(-0.5 / p_diag), &SymMat::identity(3)).unwrap()
    }

    #[test]
    fn v_examples() {
        let p = SymMat::identity(3);
        let g = SymMat::scaled_identity(3, 2.0);
        assert_eq!(lyapunov_v(&[0.0; 3], &Mat::zeros(3, 1), &p, &g).unwrap(), 0.0);
        let tt = Mat::column(&[1.0, 0.0, 0.0]).unwrap();
        assert!((lyapunov_v(&[1.0, 0.0, 0.0], &tt, &p, &g).unwrap() - 1.5).abs() < 1e-15);
        let v1 = lyapunov_v(&[0.3, -0.2, 0.9], &Mat::column(&[0.1, 0.5, -0.4]).unwrap(), &p, &g).unwrap();
        let v2 = lyapunov_v(&[0.6, -0.4, 1.8], &Mat::column(&[0.2, 1.0, -0.8]).unwrap(), &p, &g).unwrap();
        assert!((v2 - 4.0 * v1).abs() < 1e-14);
    }

    #[test]
    fn upsilon_examples() {
        let g = gains();
        let om = SymMat::identity(3);
        assert_eq!(upsilon(1.0, &om, 0.0, 0.3, &g).unwrap(), 0.0);
        assert_eq!(upsilon(0.0, &om, 2.0, 0.0, &g).unwrap(), 0.0);
        assert!((upsilon(1.0, &om, 2.0, 0.3, &g).unwrap() - 13.0).abs() < 1e-12);
        assert!(upsilon(1.0, &om, 2.0, 0.3, &g).unwrap() <= upsilon_max(2.0, 0.3, &g) + 1e-12);
    }

    #[test]
    fn eta_examples() {
        let g = gains();
        // P = 2I gives p_max = 2, q0 = 1
        let c = cert(2.0);
        assert!((c.p_max - 2.0).abs() < 1e-12);
        assert_eq!(eta(0.0, &c, &g), 0.0);
        assert!((eta(1.0, &c, &g) - 0.005).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..=10 {
            let e = eta(k as f64 / 10.0, &c, &g);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn membership_examples() {
        let g = gains();
        let c = cert(1.0);
        assert_eq!(set_membership(0.0, 0.0, (0.3, 0.0), (0.1, 0.0), &c, &g), (true, true));
        assert_eq!(set_membership(0.1, 0.0, (0.3, 0.0), (0.1, 0.0), &c, &g), (false, false));
        assert!(in_residual_set(1.0, 10f64.sqrt(), 0.01, 0.02, &c, &g));
        assert!(in_residual_set(100.0, 100.0, 0.0, 0.5, &c, &g));
    }

    fn synthetic(vs: &[f64], spacing: f64) -> Trajectory {
        let records = vs
            .iter()
            .enumerate()
            .map(|(k, &v)| Record {
                t: k as f64 * spacing,
                x: vec![0.0],
                x_hat: vec![0.0],
                e: vec![0.0],
                u: vec![0.0],
                theta: Mat::zeros(1, 1),
                theta_tilde: Mat::zeros(1, 1),
                gamma: SymMat::identity(1),
                omega: SymMat::zeros(1),
                rho: 1.0,
                v,
                norm_e: 0.0,
                norm_theta_tilde: 0.0,
            })
            .collect();
        Trajectory {
            n: 1,
            m: 1,
            spacing,
            records,
        }
    }

    #[test]
    fn envelope_tight_on_exact_decay() {
        let eta0_val = 0.7;
        let vs: Vec<f64> = (0..=200).map(|k| 3.0 * (-eta0_val * (k as f64 * 0.01 - 0.5)).exp()).collect();
        let tr = synthetic(&vs, 0.01);
        let s = envelope_check(&tr, 0.5, 2.0, eta0_val, 0.0).unwrap();
        assert_eq!(s.len(), 151);
        for x in &s {
            assert!(x.ok);
            assert!((x.v - x.envelope).abs() < 1e-9);
        }
    }

    #[test]
    fn envelope_floor_when_starting_below() {
        let tr = synthetic(&[0.5; 50], 0.1);
        let s = envelope_check(&tr, 0.0, 4.9, 0.5, 1.0).unwrap();
        // rises from V(t3) toward the floor υ_max/η₀ = 2 and never passes it
        assert!(s.iter().all(|x| x.ok && x.envelope <= 2.0));
        assert!(s.windows(2).all(|w| w[1].envelope >= w[0].envelope));
        assert_eq!(s[0].envelope, 0.5);
        assert!((s.last().unwrap().envelope - (2.0 - 1.5 * (-0.5f64 * 4.9).exp())).abs() < 1e-12);
        let tr = synthetic(&[0.5, 0.5, 3.0], 0.1);
        let s = envelope_check(&tr, 0.0, 0.2, 0.5, 1.0).unwrap();
        assert!(!s[2].ok);
    }

    #[test]
    fn envelope_window_outside_trace() {
        let tr = synthetic(&[1.0; 10], 0.1);
        assert!(matches!(envelope_check(&tr, 0.5, 3.0, 1.0, 0.0), Err(Error::Range(_))));
    }

    #[test]
    fn transition_bound_matches_closed_form_for_constant_rates() {
        // with η, υ constant the comparison bound equals the envelope
        let (eta_c, ups) = (0.8, 0.3);
        let tr = synthetic(&[2.0; 401], 0.005);
        let n = tr.records.len();
        let tb = transition_bound(&tr, &vec![eta_c; n], &vec![ups; n], 0.0, 2.0).unwrap();
        for s in &tb {
            let env = envelope_value(s.t, 0.0, 2.0, eta_c, ups);
            assert!((s.envelope - env).abs() < 1e-5, "t = {}", s.t);
        }
    }

    #[test]
    fn vdot_terms() {
        let g = gains();
        let q = SymMat::identity(2);
        let gamma = SymMat::scaled_identity(2, 4.0);
        let zero = Mat::zeros(2, 1);
        let snap = Snapshot {
            e: &[1.0, 2.0],
            theta_tilde: &zero,
            theta_star_dot: &Mat::column(&[1.0, 1.0]).unwrap(),
            gamma: &gamma,
            omega: &SymMat::identity(2),
            rho: 1.0,
            q: &q,
        };
        let t = vdot_decomposition(&snap, &g).unwrap();
        assert_eq!((t.term_q, t.term_thetadot, t.term_excitation), (-5.0, 0.0, 0.0));
        // κΩ = Γ⁻¹ ⇒ Ω = I/(κ·4) = 0.5·I
        let tt = Mat::column(&[0.3, -1.0]).unwrap();
        let om = SymMat::scaled_identity(2, 0.5);
        let snap = Snapshot {
            theta_tilde: &tt,
            omega: &om,
            ..snap
        };
        assert!(vdot_decomposition(&snap, &g).unwrap().term_excitation.abs() < 1e-15);
    }
}
