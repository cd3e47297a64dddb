//! Fixed-step simulation of the closed loop together with the estimator.
//!
//! The integrated state is `[x, x̂, estimator]`, advanced on shared
//! integrator stages. Records are taken every `record_stride` steps at
//! `t_k = k·dt`.

mod integrator;

use std::io::Write;
use std::thread;

pub use integrator::{integrate_step, Integrator, StageTime};

use crate::analysis::lyapunov_v;
use crate::error::{Error, Result};
use crate::error_models::{closed_loop_rhs, ErrorModelScenario};
use crate::estimator::EstimatorLaw;
use crate::excitation::SampledSignal;
use crate::numerics::{norm2, Mat, SymMat};

/// Largest accepted step; the fastest reference-model mode at the F-16
/// scales has a time constant near 0.1 s.
pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub integrator: Integrator,
    /// Initial plant state, zero when absent.
    pub x0: Option<Vec<f64>>,
    /// Initial reference state, zero when absent.
    pub x_hat0: Option<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 60.0,
            record_stride: 10,
            integrator: Integrator::Rk4,
            x0: None,
            x_hat0: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::invalid("dt", format!("must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of integration steps, `round(t_end/dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Mat,
    pub theta_tilde: Mat,
    pub gamma: SymMat,
    /// Zero for the static law, which carries no information matrix.
    pub omega: SymMat,
    pub rho: f64,
    pub v: f64,
    pub norm_e: f64,
    pub norm_theta_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    /// Time between records.
    pub spacing: f64,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Record nearest to `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let t0 = self.records.first().map_or(0.0, |r| r.t);
        let k = ((t - t0) / self.spacing).round();
        if !t.is_finite() || k < 0.0 || k as usize >= self.records.len() {
            return Err(Error::Range(format!("t = {t} outside the recorded span")));
        }
        Ok(k as usize)
    }

    /// The regressor `φ = x` as a sampled signal.
    pub fn regressor(&self) -> Result<SampledSignal> {
        SampledSignal::new(
            self.records.first().map_or(0.0, |r| r.t),
            self.spacing,
            self.records.iter().map(|r| r.x.clone()).collect(),
        )
    }

    pub fn header(&self) -> Vec<String> {
        let (n, m) = (self.n, self.m);
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|i| format!("x{i}")));
        h.extend((1..=n).map(|i| format!("xhat{i}")));
        h.extend((1..=n).map(|i| format!("e{i}")));
        if m == 1 {
            h.push("u".into());
        } else {
            h.extend((1..=m).map(|j| format!("u{j}")));
        }
        for j in 1..=m {
            h.extend((1..=n).map(|i| format!("theta_{i}_{j}")));
        }
        for name in ["gamma", "omega"] {
            for i in 1..=n {
                h.extend((i..=n).map(|j| format!("{name}_{i}_{j}")));
            }
        }
        h.extend(["rho", "V", "norm_e", "norm_theta_tilde"].map(String::from));
        h
    }

    fn row(&self, r: &Record) -> Vec<f64> {
        let mut v = vec![r.t];
        v.extend(&r.x);
        v.extend(&r.x_hat);
        v.extend(&r.e);
        v.extend(&r.u);
        for j in 0..self.m {
            v.extend(r.theta.col(j));
        }
        v.extend(r.gamma.packed());
        v.extend(r.omega.packed());
        v.extend([r.rho, r.v, r.norm_e, r.norm_theta_tilde]);
        v
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.records {
            w.write_record(self.row(r).iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn initial(v: &Option<Vec<f64>>, n: usize, name: &'static str) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![0.0; n]),
        Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
        Some(v) => Err(Error::invalid(name, format!("expected {n} finite entries, got {v:?}"))),
    }
}

fn record(scenario: &ErrorModelScenario, law: &EstimatorLaw, x: &[f64], x_hat: &[f64], t: f64) -> Result<Record> {
    let theta = law.theta().clone();
    let cl = closed_loop_rhs(scenario, x, x_hat, &theta, StageTime::start(t))?;
    let theta_tilde = &theta - &scenario.uncertainty.theta_star(t);
    let gamma = law.gamma().clone();
    let v = lyapunov_v(&cl.e, &theta_tilde, &scenario.cert.p, &gamma)?;
    Ok(Record {
        t,
        x: x.to_vec(),
        x_hat: x_hat.to_vec(),
        norm_e: norm2(&cl.e),
        e: cl.e,
        u: cl.u,
        norm_theta_tilde: theta_tilde.frobenius_norm(),
        theta,
        theta_tilde,
        omega: law.omega().cloned().unwrap_or_else(|| SymMat::zeros(gamma.dim())),
        gamma,
        rho: law.rho(),
        v,
    })
}

/// Simulates `scenario` under `law` from the configured initial state.
pub fn run(scenario: &ErrorModelScenario, law: &EstimatorLaw, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let (n, m) = (scenario.n(), scenario.inputs());
    if law.n() != n || law.m() != m {
        return Err(Error::Dimension(format!(
            "estimator is {}x{} but the scenario needs {n}x{m}",
            law.n(),
            law.m()
        )));
    }
    let mut x = initial(&config.x0, n, "x0")?;
    let mut x_hat = initial(&config.x_hat0, n, "x_hat0")?;
    let mut law = law.clone();
    let steps = config.steps();
    let mut records = Vec::with_capacity(steps / config.record_stride + 1);
    records.push(record(scenario, &law, &x, &x_hat, 0.0)?);

    for k in 0..steps {
        let t = k as f64 * config.dt;
        let mut state = Vec::with_capacity(2 * n + law.state_len());
        state.extend(&x);
        state.extend(&x_hat);
        state.extend(law.pack());
        let next = integrate_step(
            config.integrator,
            |st, z: &[f64]| {
                let (xs, rest) = z.split_at(n);
                let (xh, est) = rest.split_at(n);
                let theta = law.theta_of(est)?;
                let cl = closed_loop_rhs(scenario, xs, xh, &theta, st)?;
                let dest = law.derivative(est, &cl.y, xs)?;
                let mut d = cl.dx;
                d.extend(cl.dx_hat);
                d.extend(dest);
                Ok(d)
            },
            t,
            &state,
            config.dt,
        )?;
        let t_next = (k + 1) as f64 * config.dt;
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t: t_next,
                quantity: format!("state component {i}"),
                detail: "is not finite".into(),
            });
        }
        law = law.with_state(&next[2 * n..], t_next)?;
        x.copy_from_slice(&next[..n]);
        x_hat.copy_from_slice(&next[n..2 * n]);
        if (k + 1) % config.record_stride == 0 {
            records.push(record(scenario, &law, &x, &x_hat, t_next)?);
        }
    }
    Ok(Trajectory {
        n,
        m,
        spacing: config.dt * config.record_stride as f64,
        records,
    })
}

/// Runs independent simulations on separate threads. Results keep the order
/// of `jobs`.
pub fn run_many(jobs: &[(&ErrorModelScenario, &EstimatorLaw, &SimConfig)]) -> Vec<Result<Trajectory>> {
    thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(sc, law, cfg)| s.spawn(move || run(sc, law, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Internal("simulation thread panicked".into()))))
            .collect()
    })
}
