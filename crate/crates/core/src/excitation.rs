//! Information-matrix filter and excitation analysis.
//!
//! The information matrix is the filtered, normalized regressor outer product
//!
//! ```text
//! Ω̇ = −λ_Ω·Ω + λ_Ω·φφᵀ / (1 + φᵀφ)
//! ```
//!
//! which stays between `0` and `I`. Excitation is measured on sampled
//! regressor traces through the windowed Gram integral `∫ φφᵀ dτ`.
//!
//! Persistent excitation asks for a Gram bound over every window for all
//! future time; from a finite recording only the windows inside the trace can
//! be checked, so [`detect_pe`] is a finite-horizon report.

use crate::error::{Error, Result};
use crate::numerics::{dot, packed_len, sym_eig, SymMat};
use crate::simulate::{integrate_step, Integrator, StageTime};
use crate::tol;

/// Uniformly sampled vector signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    t0: f64,
    dt: f64,
    dim: usize,
    samples: Vec<Vec<f64>>,
}

impl SampledSignal {
    pub fn new(t0: f64, dt: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::invalid("dt", format!("sample spacing must be positive, got {dt}")));
        }
        let dim = samples.first().map_or(0, Vec::len);
        if samples.len() < 2 || dim == 0 {
            return Err(Error::invalid("samples", "need at least two non-empty samples"));
        }
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Dimension("samples have differing lengths".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal samples".into()));
        }
        Ok(Self { t0, dt, dim, samples })
    }

    /// Builds a signal from explicit sample times, which must be uniform.
    pub fn from_times(times: &[f64], samples: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != samples.len() || times.len() < 2 {
            return Err(Error::Dimension(format!(
                "{} times for {} samples",
                times.len(),
                samples.len()
            )));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (k, &t) in times.iter().enumerate() {
            let want = times[0] + k as f64 * dt;
            if (t - want).abs() > tol::GRID_ALIGN * dt.abs().max(f64::MIN_POSITIVE) * 1e3 {
                return Err(Error::invalid(
                    "times",
                    format!("sample times are not uniform near t = {t}"),
                ));
            }
        }
        Self::new(times[0], dt, samples)
    }

    /// Samples `f` at `n + 1` uniform points covering `[t0, t0 + n·dt]`.
    pub fn sample<F: FnMut(f64) -> Vec<f64>>(t0: f64, dt: f64, n: usize, mut f: F) -> Result<Self> {
        Self::new(t0, dt, (0..=n).map(|k| f(t0 + k as f64 * dt)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Index of the sample nearest to `t`; times outside the trace by more
    /// than half a spacing are a range error.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if !t.is_finite() || k < 0.0 || k > (self.samples.len() - 1) as f64 {
            return Err(Error::Range(format!(
                "t = {t} outside trace [{}, {}]",
                self.t0,
                self.t_end()
            )));
        }
        Ok(k as usize)
    }
}

/// Quadrature weights (in units of the spacing) for `intervals` uniform
/// intervals: composite Simpson, with a closing 3/8 panel when the interval
/// count is odd, and the trapezoid rule for a single interval.
pub fn quadrature_weights(intervals: usize) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = 0.5;
            w[1] = 0.5;
        }
        _ => {
            let simpson_end = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
            for k in (0..simpson_end).step_by(2) {
                w[k] += 1.0 / 3.0;
                w[k + 1] += 4.0 / 3.0;
                w[k + 2] += 1.0 / 3.0;
            }
            if simpson_end < intervals {
                let s = simpson_end;
                w[s] += 3.0 / 8.0;
                w[s + 1] += 9.0 / 8.0;
                w[s + 2] += 9.0 / 8.0;
                w[s + 3] += 3.0 / 8.0;
            }
        }
    }
    w
}

fn gram_by_index(trace: &SampledSignal, i1: usize, i2: usize) -> SymMat {
    let n = trace.dim();
    let w = quadrature_weights(i2 - i1);
    let mut g = SymMat::zeros(n);
    for (k, wk) in w.iter().enumerate() {
        let phi = &trace.samples[i1 + k];
        for i in 0..n {
            for j in i..n {
                let v = g.get(i, j) + wk * trace.dt * phi[i] * phi[j];
                g.set(i, j, v);
            }
        }
    }
    g
}

fn window_indices(trace: &SampledSignal, t1: f64, t2: f64) -> Result<(usize, usize)> {
    if !(t2 > t1) {
        return Err(Error::Range(format!("window [{t1}, {t2}] is empty")));
    }
    let i1 = trace.index_of(t1)?;
    let i2 = trace.index_of(t2)?;
    if i2 <= i1 {
        return Err(Error::Range(format!(
            "window [{t1}, {t2}] is narrower than one sample spacing"
        )));
    }
    Ok((i1, i2))
}

/// `∫_{t1}^{t2} φ(τ)φᵀ(τ) dτ` over the trace samples. Window ends snap to the
/// nearest sample.
pub fn gram_integral(trace: &SampledSignal, t1: f64, t2: f64) -> Result<SymMat> {
    let (i1, i2) = window_indices(trace, t1, t2)?;
    Ok(gram_by_index(trace, i1, i2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationConfig {
    kappa: f64,
    gamma_max: f64,
    k_omega: f64,
    rho_omega: f64,
    lambda_omega: f64,
}

impl ExcitationConfig {
    pub fn new(kappa: f64, gamma_max: f64, k_omega: f64, rho_omega: f64, lambda_omega: f64) -> Result<Self> {
        if !(gamma_max > 0.0 && gamma_max.is_finite()) {
            return Err(Error::invalid("gamma_max", format!("must be positive, got {gamma_max}")));
        }
        if !(kappa > 1.0 / gamma_max && kappa.is_finite()) {
            return Err(Error::invalid(
                "kappa",
                format!("must exceed 1/gamma_max = {}, got {kappa}", 1.0 / gamma_max),
            ));
        }
        if !(k_omega > 1.0 && k_omega.is_finite()) {
            return Err(Error::invalid("k_omega", format!("must exceed 1, got {k_omega}")));
        }
        if !(rho_omega > 0.0 && rho_omega < 1.0) {
            return Err(Error::invalid("rho_omega", format!("must lie in (0, 1), got {rho_omega}")));
        }
        if !(lambda_omega > 0.0 && lambda_omega.is_finite()) {
            return Err(Error::invalid("lambda_omega", format!("must be positive, got {lambda_omega}")));
        }
        Ok(Self {
            kappa,
            gamma_max,
            k_omega,
            rho_omega,
            lambda_omega,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }
    pub fn k_omega(&self) -> f64 {
        self.k_omega
    }
    pub fn rho_omega(&self) -> f64 {
        self.rho_omega
    }
    pub fn lambda_omega(&self) -> f64 {
        self.lambda_omega
    }

    /// Minimum excitation level over a window of length `window` whose
    /// normalization peak is `d`:
    /// `α₀ = k_Ω·d / (κ·Γ_max·ρ_Ω·λ_Ω·exp(−λ_Ω·window))`.
    pub fn alpha0(&self, d: f64, window: f64) -> f64 {
        self.k_omega * d
            / (self.kappa
                * self.gamma_max
                * self.rho_omega
                * self.lambda_omega
                * (-self.lambda_omega * window).exp())
    }

    /// Lower bound on `Ω` after a sufficiently exciting window.
    pub fn omega_fe(&self) -> f64 {
        self.k_omega / (self.kappa * self.gamma_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcitationKind {
    None,
    Finite,
    Persistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationReport {
    pub kind: ExcitationKind,
    pub t1: f64,
    pub t2: f64,
    /// Excitation level: smallest Gram eigenvalue, floored at zero.
    pub alpha: f64,
    /// Window length `T`.
    pub window: f64,
    /// `max (1 + ‖φ‖²)` over the samples considered.
    pub d: f64,
    pub alpha0: f64,
    pub meets_assumption3: bool,
}

fn level_of(g: &SymMat) -> Result<(f64, bool)> {
    let e = sym_eig(g)?;
    let top = e.max();
    let exciting = top > 0.0 && e.min() > tol::EXCITATION_RANK * top;
    Ok((e.min().max(0.0), exciting))
}

fn peak_normalization(rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|p| 1.0 + dot(p, p)).fold(0.0, f64::max)
}

/// Finite-excitation report on `[t1, t2]`.
pub fn detect_fe(trace: &SampledSignal, window: (f64, f64), config: &ExcitationConfig) -> Result<ExcitationReport> {
    let (i1, i2) = window_indices(trace, window.0, window.1)?;
    let g = gram_by_index(trace, i1, i2);
    let (alpha, exciting) = level_of(&g)?;
    let (t1, t2) = (trace.time(i1), trace.time(i2));
    let d = peak_normalization(&trace.samples[i1..=i2]);
    let alpha0 = config.alpha0(d, t2 - t1);
    Ok(ExcitationReport {
        kind: if exciting { ExcitationKind::Finite } else { ExcitationKind::None },
        t1,
        t2,
        alpha,
        window: t2 - t1,
        d,
        alpha0,
        meets_assumption3: exciting && alpha >= alpha0,
    })
}

/// Persistent-excitation report over every window of length `window`
/// starting at multiples of `stride` inside the trace.
///
/// `alpha` is the smallest level over those windows. `d` is taken over the
/// whole trace and `alpha0` is the threshold for windows of length `window`
/// with that `d`.
pub fn detect_pe(trace: &SampledSignal, window: f64, stride: f64, config: &ExcitationConfig) -> Result<ExcitationReport> {
    let span = ((window / trace.dt).round()) as usize;
    let step = ((stride / trace.dt).round()) as usize;
    if !(window > 0.0) || span == 0 {
        return Err(Error::Precondition(format!("window length {window} shorter than one sample")));
    }
    if !(stride > 0.0) || step == 0 {
        return Err(Error::Precondition(format!("stride {stride} shorter than one sample")));
    }
    if span >= trace.len() {
        return Err(Error::Precondition(format!(
            "trace covers {} s, shorter than the window {window} s",
            trace.t_end() - trace.t0
        )));
    }
    let mut alpha = f64::INFINITY;
    let mut exciting = true;
    let mut start = 0;
    while start + span < trace.len() {
        let (a, ok) = level_of(&gram_by_index(trace, start, start + span))?;
        alpha = alpha.min(a);
        exciting &= ok;
        start += step;
    }
    let d = peak_normalization(&trace.samples);
    let len = span as f64 * trace.dt;
    let alpha0 = config.alpha0(d, len);
    Ok(ExcitationReport {
        kind: if exciting { ExcitationKind::Persistent } else { ExcitationKind::None },
        t1: trace.t0,
        t2: trace.t0 + len,
        alpha,
        window: len,
        d,
        alpha0,
        meets_assumption3: exciting && alpha >= alpha0,
    })
}

/// `t3 = t2 − ln(ρ_Ω)/λ_Ω`: end of the interval on which `Ω ≥ Ω_FE·I`.
pub fn omega_hold_end(t2: f64, rho_omega: f64, lambda_omega: f64) -> f64 {
    t2 - rho_omega.ln() / lambda_omega
}

/// `t4 = t3 − ln(ρ_Γ)/λ_Γ`: end of the interval on which `Γ ≤ Γ_FE·I`.
pub fn gamma_hold_end(t3: f64, rho_gamma: f64, lambda_gamma: f64) -> f64 {
    t3 - rho_gamma.ln() / lambda_gamma
}

/// Threshold for persistent excitation relative to a finite window:
/// `α₀′ = α₀·exp(−λ_Ω(t2 − t2′))·d′/d`.
pub fn alpha0_prime(alpha0: f64, lambda_omega: f64, t2: f64, t2_prime: f64, d: f64, d_prime: f64) -> f64 {
    alpha0 * (-lambda_omega * (t2 - t2_prime)).exp() * d_prime / d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRatePhase {
    pub rho_gamma: f64,
    pub lambda_gamma: f64,
}

/// Phase boundaries of excitation propagation after a qualifying window.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub t1: f64,
    pub t2: f64,
    pub omega_fe: f64,
    pub t3: f64,
    pub t4: f64,
    pub rho_gamma: f64,
    /// Present for persistent reports: the threshold `α₀′` they were tested
    /// against.
    pub alpha0_prime: Option<f64>,
}

impl Timeline {
    /// `Γ_FE = Γ(t3)/ρ_Γ`, given the measured learning-rate norm at `t3`.
    /// Requires `ρ_Γ ∈ (Γ(t3)/Γ_max, 1)`.
    pub fn gamma_fe(&self, gamma_t3: f64, gamma_max: f64) -> Result<f64> {
        if !(gamma_t3 < gamma_max) {
            return Err(Error::Precondition(format!(
                "Γ(t3) = {gamma_t3} is not below Γ_max = {gamma_max}"
            )));
        }
        if !(self.rho_gamma > gamma_t3 / gamma_max) {
            return Err(Error::Precondition(format!(
                "ρ_Γ = {} must exceed Γ(t3)/Γ_max = {}",
                self.rho_gamma,
                gamma_t3 / gamma_max
            )));
        }
        Ok(gamma_t3 / self.rho_gamma)
    }
}

pub fn propagation_timeline(
    report: &ExcitationReport,
    config: &ExcitationConfig,
    phase: &LearningRatePhase,
) -> Result<Timeline> {
    if !report.meets_assumption3 {
        return Err(Error::Precondition(format!(
            "excitation level {} below the required {}",
            report.alpha, report.alpha0
        )));
    }
    if !(phase.rho_gamma > 0.0 && phase.rho_gamma < 1.0) {
        return Err(Error::invalid("rho_gamma", format!("must lie in (0, 1), got {}", phase.rho_gamma)));
    }
    if !(phase.lambda_gamma > 0.0) {
        return Err(Error::invalid("lambda_gamma", "must be positive"));
    }
    let t3 = omega_hold_end(report.t2, config.rho_omega, config.lambda_omega);
    Ok(Timeline {
        t1: report.t1,
        t2: report.t2,
        omega_fe: config.omega_fe(),
        t3,
        t4: gamma_hold_end(t3, phase.rho_gamma, phase.lambda_gamma),
        rho_gamma: phase.rho_gamma,
        alpha0_prime: (report.kind == ExcitationKind::Persistent).then_some(report.alpha0),
    })
}

/// State of the information-matrix filter.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrixState {
    pub omega: SymMat,
    pub lambda_omega: f64,
    pub t: f64,
}

impl InfoMatrixState {
    pub fn new(omega0: SymMat, lambda_omega: f64, t0: f64) -> Result<Self> {
        if !(lambda_omega > 0.0 && lambda_omega.is_finite()) {
            return Err(Error::invalid("lambda_omega", format!("must be positive, got {lambda_omega}")));
        }
        let e = sym_eig(&omega0)?;
        if e.min() < -tol::OMEGA_BAND || e.max() > 1.0 + tol::OMEGA_BAND {
            return Err(Error::invalid(
                "omega0",
                format!("eigenvalues must lie in [0, 1], got [{}, {}]", e.min(), e.max()),
            ));
        }
        Ok(Self {
            omega: omega0,
            lambda_omega,
            t: t0,
        })
    }

    pub fn zero(dim: usize, lambda_omega: f64) -> Result<Self> {
        Self::new(SymMat::zeros(dim), lambda_omega, 0.0)
    }
}

/// `Ω̇` at `Ω` for regressor `φ`, in packed upper-triangular form.
pub fn omega_rhs_packed(omega: &[f64], phi: &[f64], lambda_omega: f64) -> Vec<f64> {
    let n = phi.len();
    debug_assert_eq!(omega.len(), packed_len(n));
    let norm = 1.0 + dot(phi, phi);
    let mut out = Vec::with_capacity(omega.len());
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out.push(lambda_omega * (phi[i] * phi[j] / norm - omega[k]));
            k += 1;
        }
    }
    out
}

pub fn omega_rhs(omega: &SymMat, phi: &[f64], lambda_omega: f64) -> Result<SymMat> {
    if phi.len() != omega.dim() {
        return Err(Error::Dimension(format!(
            "regressor of length {} for a {}x{} information matrix",
            phi.len(),
            omega.dim(),
            omega.dim()
        )));
    }
    SymMat::from_packed(omega.dim(), omega_rhs_packed(omega.packed(), phi, lambda_omega))
}

/// One RK4 step of the filter with `φ` held constant over the step.
pub fn omega_step(state: &InfoMatrixState, phi: &[f64], dt: f64) -> Result<InfoMatrixState> {
    if phi.len() != state.omega.dim() {
        return Err(Error::Dimension(format!(
            "regressor of length {} for a {}x{} information matrix",
            phi.len(),
            state.omega.dim(),
            state.omega.dim()
        )));
    }
    let lambda = state.lambda_omega;
    let next = integrate_step(
        Integrator::Rk4,
        |_: StageTime, x: &[f64]| Ok(omega_rhs_packed(x, phi, lambda)),
        state.t,
        state.omega.packed(),
        dt,
    )?;
    Ok(InfoMatrixState {
        omega: SymMat::from_packed(state.omega.dim(), next)?,
        lambda_omega: lambda,
        t: state.t + dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{expm, Mat};
    use std::f64::consts::{PI, TAU};

    fn reference_config() -> ExcitationConfig {
        ExcitationConfig::new(0.5, 10.0, 2.0, 0.5, 10.0).unwrap()
    }

    #[test]
    fn zero_regressor_keeps_zero() {
        let mut s = InfoMatrixState::zero(3, 10.0).unwrap();
        for _ in 0..100 {
            s = omega_step(&s, &[0.0; 3], 1e-2).unwrap();
        }
        assert_eq!(s.omega, SymMat::zeros(3));
    }

    #[test]
    fn pure_decay_from_identity() {
        let mut s = InfoMatrixState::new(SymMat::identity(2), 10.0, 0.0).unwrap();
        for _ in 0..100 {
            s = omega_step(&s, &[0.0, 0.0], 1e-3).unwrap();
        }
        let want = (-10.0f64 * 0.1).exp();
        assert!((s.omega.get(0, 0) - want).abs() < 1e-10);
        assert!((s.omega.get(1, 1) - want).abs() < 1e-10);
        assert_eq!(s.omega.get(0, 1), 0.0);
    }

    #[test]
    fn constant_scalar_regressor_closed_form() {
        // Ω(t) = (1 − e^{−10t})/2, Ω(0.1) = (1 − e^{−1})/2 ≈ 0.31606
        let mut s = InfoMatrixState::zero(1, 10.0).unwrap();
        for _ in 0..100 {
            s = omega_step(&s, &[1.0], 1e-3).unwrap();
        }
        let exact = 0.5 * (1.0 - (-1.0f64).exp());
        assert!((exact - 0.3161).abs() < 1e-4);
        assert!((s.omega.get(0, 0) - exact).abs() < 1e-8);
    }

    #[test]
    fn matches_exponential_update_for_piecewise_constant_regressor() {
        // Augmented linear system [ẏ; 0] = [[−λI, λc], [0, 0]]·[y; 1] integrated
        // exactly through expm, compared against RK4 at two step sizes.
        let lambda = 10.0;
        let n = 2;
        let p = packed_len(n);
        let phis = [[1.0, 0.5], [-0.3, 2.0], [0.0, 0.0], [1.5, -1.0]];
        let segment = 0.05;
        let exact = {
            let mut y = vec![0.0; p];
            for phi in &phis {
                let norm = 1.0 + dot(phi, phi);
                let mut aug = Mat::zeros(p + 1, p + 1);
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        aug[(k, k)] = -lambda;
                        aug[(k, p)] = lambda * phi[i] * phi[j] / norm;
                        k += 1;
                    }
                }
                let e = expm(&aug, segment).unwrap();
                let mut ext = y.clone();
                ext.push(1.0);
                y = e.mul_vec(&ext)[..p].to_vec();
            }
            y
        };
        let run = |dt: f64| {
            let steps = (segment / dt).round() as usize;
            let mut s = InfoMatrixState::zero(n, lambda).unwrap();
            for phi in &phis {
                for _ in 0..steps {
                    s = omega_step(&s, phi, dt).unwrap();
                }
            }
            s.omega
                .packed()
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (run(5e-3), run(2.5e-3));
        assert!(e1 < 1e-8, "error {e1}");
        let order = (e1 / e2).log2();
        assert!(order > 3.8, "empirical order {order}");
    }

    #[test]
    fn band_holds_under_random_regressors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut s = InfoMatrixState::zero(4, 10.0).unwrap();
        for _ in 0..5000 {
            let phi: Vec<f64> = (0..4).map(|_| rng.gen_range(-50.0..50.0)).collect();
            s = omega_step(&s, &phi, 1e-3).unwrap();
            let e = sym_eig(&s.omega).unwrap();
            assert!(e.min() >= -tol::OMEGA_BAND && e.max() <= 1.0 + tol::OMEGA_BAND);
        }
    }

    #[test]
    fn gram_of_constant_rank_one() {
        let tr = SampledSignal::sample(0.0, 0.01, 100, |_| vec![1.0, 0.0]).unwrap();
        let g = gram_integral(&tr, 0.0, 1.0).unwrap();
        assert!((g.get(0, 0) - 1.0).abs() < 1e-14);
        assert_eq!(g.get(0, 1), 0.0);
        assert_eq!(g.get(1, 1), 0.0);
    }

    #[test]
    fn gram_of_rotation_is_pi_identity() {
        let n = 1000;
        let tr = SampledSignal::sample(0.0, TAU / n as f64, n, |t| vec![t.sin(), t.cos()]).unwrap();
        let g = gram_integral(&tr, 0.0, TAU).unwrap();
        assert!((g.get(0, 0) - PI).abs() < 1e-6);
        assert!((g.get(1, 1) - PI).abs() < 1e-6);
        assert!(g.get(0, 1).abs() < 1e-6);
    }

    #[test]
    fn gram_of_scalar_one_is_length() {
        let tr = SampledSignal::sample(0.0, 0.1, 37, |_| vec![1.0]).unwrap();
        // odd interval count exercises the 3/8 closing panel
        let g = gram_integral(&tr, 0.0, 3.7).unwrap();
        assert!((g.get(0, 0) - 3.7).abs() < 1e-13);
    }

    #[test]
    fn gram_window_outside_trace() {
        let tr = SampledSignal::sample(0.0, 0.1, 10, |_| vec![1.0]).unwrap();
        assert!(matches!(gram_integral(&tr, 0.5, 2.0), Err(Error::Range(_))));
        assert!(matches!(gram_integral(&tr, 0.5, 0.5), Err(Error::Range(_))));
    }

    #[test]
    fn simpson_converges_at_fourth_order() {
        // ∫₀¹ e^{2t} dt = (e² − 1)/2 for φ = e^t
        let exact = (1.0f64.exp().powi(2) - 1.0) / 2.0;
        let err = |n: usize| {
            let tr = SampledSignal::sample(0.0, 1.0 / n as f64, n, |t| vec![t.exp()]).unwrap();
            (gram_integral(&tr, 0.0, 1.0).unwrap().get(0, 0) - exact).abs()
        };
        let ratio = err(16) / err(32);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn alpha0_arithmetic() {
        // 2·2 / (0.5·10·0.5·10·e^{−1}) = 4e/25
        let a0 = reference_config().alpha0(2.0, 0.1);
        assert!((a0 - 4.0 * 1.0f64.exp() / 25.0).abs() < 1e-14);
        assert!((a0 - 0.4349).abs() < 1e-4);
    }

    #[test]
    fn fe_on_constant_direction_is_not_exciting() {
        let tr = SampledSignal::sample(0.0, 0.01, 300, |_| vec![0.6, 0.8]).unwrap();
        let r = detect_fe(&tr, (0.5, 2.5), &reference_config()).unwrap();
        assert_eq!(r.kind, ExcitationKind::None);
        assert!(r.alpha.abs() < 1e-12);
        assert!(!r.meets_assumption3);
        assert!((r.d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fe_on_rotation() {
        let n = 2000;
        let tr = SampledSignal::sample(0.0, TAU / n as f64, n, |t| vec![t.sin(), t.cos()]).unwrap();
        let r = detect_fe(&tr, (0.0, TAU), &reference_config()).unwrap();
        assert_eq!(r.kind, ExcitationKind::Finite);
        assert!((r.alpha - PI).abs() < 1e-6);
        assert!((r.window - TAU).abs() < 1e-12);
    }

    #[test]
    fn pe_on_rotation_any_start() {
        let n = 400;
        let dt = TAU / n as f64;
        let tr = SampledSignal::sample(0.0, dt, 3 * n, |t| vec![t.sin(), t.cos()]).unwrap();
        let r = detect_pe(&tr, TAU, 17.0 * dt, &reference_config()).unwrap();
        assert_eq!(r.kind, ExcitationKind::Persistent);
        assert!((r.alpha - PI).abs() < 1e-6, "alpha {}", r.alpha);
    }

    #[test]
    fn pe_scalar_one() {
        let tr = SampledSignal::sample(0.0, 0.01, 500, |_| vec![1.0]).unwrap();
        let r = detect_pe(&tr, 1.0, 0.25, &reference_config()).unwrap();
        assert!((r.alpha - 1.0).abs() < 1e-12);
        assert_eq!(r.kind, ExcitationKind::Persistent);
    }

    #[test]
    fn pe_decaying_signal_vanishes() {
        let cfg = reference_config();
        let tr = SampledSignal::sample(0.0, 0.01, 2000, |t| vec![(-t).exp(), 0.0]).unwrap();
        let r = detect_pe(&tr, 1.0, 0.5, &cfg).unwrap();
        assert_eq!(r.kind, ExcitationKind::None);
        assert_eq!(r.alpha, 0.0);
        // the scalar version is positive on any finite trace but shrinks as
        // later windows are included
        let short = SampledSignal::sample(0.0, 0.01, 300, |t| vec![(-t).exp()]).unwrap();
        let long = SampledSignal::sample(0.0, 0.01, 2000, |t| vec![(-t).exp()]).unwrap();
        let a_short = detect_pe(&short, 1.0, 0.5, &cfg).unwrap().alpha;
        let a_long = detect_pe(&long, 1.0, 0.5, &cfg).unwrap().alpha;
        assert!(a_long < a_short * 1e-6);
    }

    #[test]
    fn pe_needs_a_long_enough_trace() {
        let tr = SampledSignal::sample(0.0, 0.01, 50, |_| vec![1.0]).unwrap();
        assert!(matches!(detect_pe(&tr, 1.0, 0.1, &reference_config()), Err(Error::Precondition(_))));
    }

    #[test]
    fn timeline_constants() {
        let cfg = reference_config();
        assert!((cfg.omega_fe() - 0.4).abs() < 1e-15);
        assert!(cfg.omega_fe() > 1.0 / (cfg.kappa() * cfg.gamma_max()));
        assert_eq!(omega_hold_end(3.0, 1.0, 10.0), 3.0);
        assert!((omega_hold_end(3.0, (-1.0f64).exp(), 10.0) - 3.1).abs() < 1e-15);
    }

    #[test]
    fn timeline_requires_sufficient_excitation() {
        let cfg = reference_config();
        let tr = SampledSignal::sample(0.0, 0.01, 300, |_| vec![0.6, 0.8]).unwrap();
        let r = detect_fe(&tr, (0.5, 2.5), &cfg).unwrap();
        let phase = LearningRatePhase { rho_gamma: 0.9, lambda_gamma: 0.5 };
        assert!(matches!(propagation_timeline(&r, &cfg, &phase), Err(Error::Precondition(_))));
    }

    #[test]
    fn timeline_from_qualifying_window() {
        // low filter rate and a short window keep α₀ small
        let cfg = ExcitationConfig::new(0.5, 110.0, 2.0, 0.5, 1.0).unwrap();
        let n = 1000;
        let tr = SampledSignal::sample(0.0, 1.0 / n as f64, 2 * n, |t| {
            vec![(TAU * t).sin(), (TAU * t).cos()]
        })
        .unwrap();
        let r = detect_fe(&tr, (0.0, 1.0), &cfg).unwrap();
        assert!(r.meets_assumption3, "{r:?}");
        let phase = LearningRatePhase { rho_gamma: 0.9, lambda_gamma: 0.5 };
        let tl = propagation_timeline(&r, &cfg, &phase).unwrap();
        assert!((tl.t3 - (1.0 + 2.0f64.ln())).abs() < 1e-12);
        assert!((tl.t4 - (tl.t3 - 0.9f64.ln() / 0.5)).abs() < 1e-12);
        assert_eq!(tl.alpha0_prime, None);
        assert!((tl.gamma_fe(50.0, 110.0).unwrap() - 50.0 / 0.9).abs() < 1e-12);
        assert!(tl.gamma_fe(105.0, 110.0).is_err());
    }

    #[test]
    fn alpha0_prime_reduces_to_d_ratio() {
        assert!((alpha0_prime(0.4, 10.0, 2.0, 2.0, 2.0, 3.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn config_ranges_enforced() {
        assert!(ExcitationConfig::new(0.05, 10.0, 2.0, 0.5, 10.0).is_err());
        assert!(ExcitationConfig::new(0.5, 10.0, 1.0, 0.5, 10.0).is_err());
        assert!(ExcitationConfig::new(0.5, 10.0, 2.0, 1.0, 10.0).is_err());
        assert!(ExcitationConfig::new(0.5, 10.0, 2.0, 0.5, 0.0).is_err());
    }
}
