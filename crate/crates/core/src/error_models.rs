//! State-feedback model-reference error model.
//!
//! Plant `ẋ = A·x + B·(u + θ*ᵀφ) + B_z·z_cmd` with `φ = x`, reference model
//! `x̂̇ = A_m·x̂ + B_z·z_cmd` where `A_m = A − B·Kᵀ`, control
//! `u = −Kᵀx − θᵀφ`, tracking error `e = x̂ − x` and update direction
//! `Y = −φ·eᵀ·P·B`. With `θ̃ = θ − θ*` the error obeys `ė = A_m·e + B·θ̃ᵀφ`.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::numerics::{solve_lyapunov, LyapunovCert, Mat, SymMat};
use crate::simulate::StageTime;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Mat,
    pub b: Mat,
    pub bz: Mat,
}

impl PlantModel {
    pub fn new(a: Mat, b: Mat, bz: Mat) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || n == 0 {
            return Err(Error::Dimension(format!("A must be square, got {:?}", a.shape())));
        }
        if b.rows() != n || b.cols() == 0 {
            return Err(Error::Dimension(format!("B is {:?} for a plant of order {n}", b.shape())));
        }
        if bz.shape() != (n, 1) {
            return Err(Error::Dimension(format!("B_z is {:?}, expected ({n}, 1)", bz.shape())));
        }
        Ok(Self { a, b, bz })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub a_m: Mat,
    pub bz: Mat,
    pub k: Mat,
}

impl ReferenceModel {
    /// Builds `A_m = A − B·Kᵀ` for the plant.
    pub fn from_gain(plant: &PlantModel, k: Mat) -> Result<Self> {
        if k.shape() != plant.b.shape() {
            return Err(Error::Dimension(format!(
                "K is {:?} but B is {:?}",
                k.shape(),
                plant.b.shape()
            )));
        }
        let a_m = &plant.a - &(&plant.b * &k.transpose());
        Ok(Self {
            a_m,
            bz: plant.bz.clone(),
            k,
        })
    }
}

/// Unknown parameter trajectory
/// `θ*(t) = base + amplitude·sin(2π·f·t)·base/‖base‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyProfile {
    base: Mat,
    amplitude: f64,
    frequency: f64,
}

impl UncertaintyProfile {
    pub fn constant(base: Mat) -> Self {
        Self {
            base,
            amplitude: 0.0,
            frequency: 0.0,
        }
    }

    pub fn sinusoid(base: Mat, amplitude: f64, frequency: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid("amplitude", format!("must be non-negative, got {amplitude}")));
        }
        if !(frequency >= 0.0 && frequency.is_finite()) {
            return Err(Error::invalid("frequency", format!("must be non-negative, got {frequency}")));
        }
        if amplitude > 0.0 && base.frobenius_norm() == 0.0 {
            return Err(Error::invalid("base", "a varying profile needs a non-zero base direction"));
        }
        Ok(Self {
            base,
            amplitude,
            frequency,
        })
    }

    pub fn base(&self) -> &Mat {
        &self.base
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    fn direction(&self) -> Mat {
        let n = self.base.frobenius_norm();
        if n == 0.0 {
            self.base.clone()
        } else {
            self.base.scale(1.0 / n)
        }
    }

    pub fn theta_star(&self, t: f64) -> Mat {
        if self.amplitude == 0.0 {
            return self.base.clone();
        }
        &self.base + &self.direction().scale(self.amplitude * (TAU * self.frequency * t).sin())
    }

    pub fn theta_star_dot(&self, t: f64) -> Mat {
        let w = TAU * self.frequency;
        self.direction().scale(self.amplitude * w * (w * t).cos())
    }

    pub fn theta_star_max(&self) -> f64 {
        self.base.frobenius_norm() + self.amplitude
    }

    pub fn theta_star_d_max(&self) -> f64 {
        self.amplitude * TAU * self.frequency
    }
}

/// Reference command `z_cmd(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Zero,
    Constant(f64),
    /// `+amplitude` on `[0, period)`, `−amplitude` on `[period, 2·period)`, …
    StepTrain { period: f64, amplitude: f64 },
    /// `amplitude·sin(2π·frequency·(t − start))` on `[start, end)`, zero
    /// elsewhere.
    SineBurst {
        amplitude: f64,
        frequency: f64,
        start: f64,
        end: f64,
    },
}

impl Command {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Command::Zero => true,
            Command::Constant(v) => v.is_finite(),
            Command::StepTrain { period, amplitude } => period > 0.0 && period.is_finite() && amplitude.is_finite(),
            Command::SineBurst {
                amplitude,
                frequency,
                start,
                end,
            } => amplitude.is_finite() && frequency.is_finite() && start.is_finite() && end.is_finite() && end >= start,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("command", format!("{self:?} has invalid parameters")))
        }
    }

    /// Value at `t`, or its left limit when `left` is set. Breakpoints
    /// within a relative `1e-6` of a switching time count as that time.
    pub fn value(&self, t: f64, left: bool) -> f64 {
        match *self {
            Command::Zero => 0.0,
            Command::Constant(v) => v,
            Command::StepTrain { period, amplitude } => {
                let s = t / period;
                let k = if left {
                    (s - tol::GRID_ALIGN).ceil() - 1.0
                } else {
                    (s + tol::GRID_ALIGN).floor()
                };
                if k < 0.0 {
                    0.0
                } else if k % 2.0 == 0.0 {
                    amplitude
                } else {
                    -amplitude
                }
            }
            Command::SineBurst {
                amplitude,
                frequency,
                start,
                end,
            } => {
                let slack = tol::GRID_ALIGN * (1.0 + end.abs());
                let inside = if left {
                    t > start + slack && t <= end + slack
                } else {
                    t >= start - slack && t < end - slack
                };
                if inside {
                    amplitude * (TAU * frequency * (t - start)).sin()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn at(&self, stage: StageTime) -> f64 {
        self.value(stage.t, stage.end_of_step)
    }
}

pub fn make_command(kind: Command) -> Result<Command> {
    kind.validate()?;
    Ok(kind)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModelScenario {
    pub plant: PlantModel,
    pub reference: ReferenceModel,
    pub uncertainty: UncertaintyProfile,
    pub command: Command,
    pub q: SymMat,
    pub cert: LyapunovCert,
}

impl ErrorModelScenario {
    pub fn new(
        plant: PlantModel,
        k: Mat,
        uncertainty: UncertaintyProfile,
        command: Command,
        q: SymMat,
    ) -> Result<Self> {
        let reference = ReferenceModel::from_gain(&plant, k)?;
        if uncertainty.base().shape() != (plant.n(), plant.inputs()) {
            return Err(Error::Dimension(format!(
                "θ* is {:?}, expected ({}, {})",
                uncertainty.base().shape(),
                plant.n(),
                plant.inputs()
            )));
        }
        command.validate()?;
        let cert = solve_lyapunov(&reference.a_m, &q)?;
        Ok(Self {
            plant,
            reference,
            uncertainty,
            command,
            q,
            cert,
        })
    }

    pub fn n(&self) -> usize {
        self.plant.n()
    }

    pub fn inputs(&self) -> usize {
        self.plant.inputs()
    }

    pub fn with_command(mut self, command: Command) -> Result<Self> {
        command.validate()?;
        self.command = command;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub dx: Vec<f64>,
    pub dx_hat: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    /// `Y = −φ·eᵀ·P·B`, shaped like `θ`.
    pub y: Mat,
}

pub fn closed_loop_rhs(scenario: &ErrorModelScenario, x: &[f64], x_hat: &[f64], theta: &Mat, stage: StageTime) -> Result<ClosedLoop> {
    let (n, m) = (scenario.n(), scenario.inputs());
    if x.len() != n || x_hat.len() != n || theta.shape() != (n, m) {
        return Err(Error::Dimension(format!(
            "closed loop of order {n} with {m} inputs: x {}, x̂ {}, θ {:?}",
            x.len(),
            x_hat.len(),
            theta.shape()
        )));
    }
    let z = scenario.command.at(stage);
    let phi = x;
    let k = &scenario.reference.k;
    let kx = k.transpose().mul_vec(x);
    let tphi = theta.transpose().mul_vec(phi);
    let u: Vec<f64> = kx.iter().zip(&tphi).map(|(a, b)| -a - b).collect();
    let ts_phi = scenario.uncertainty.theta_star(stage.t).transpose().mul_vec(phi);
    let drive: Vec<f64> = u.iter().zip(&ts_phi).map(|(a, b)| a + b).collect();

    let ax = scenario.plant.a.mul_vec(x);
    let bd = scenario.plant.b.mul_vec(&drive);
    let bz = scenario.plant.bz.col(0);
    let dx = (0..n).map(|i| ax[i] + bd[i] + bz[i] * z).collect();
    let am = scenario.reference.a_m.mul_vec(x_hat);
    let dx_hat = (0..n).map(|i| am[i] + bz[i] * z).collect();

    let e: Vec<f64> = x_hat.iter().zip(x).map(|(a, b)| a - b).collect();
    let pb = &scenario.cert.p.to_mat() * &scenario.plant.b;
    let epb = pb.transpose().mul_vec(&e);
    let mut y = Mat::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            y[(i, j)] = -phi[i] * epb[j];
        }
    }
    Ok(ClosedLoop { dx, dx_hat, e, u, y })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum F16Uncertainty {
    Constant,
    Sinusoid { amplitude: f64, frequency: f64 },
}

pub const F16_A: [[f64; 3]; 3] = [[-0.6398, 0.9378, 0.0], [-1.5679, -0.8791, 0.0], [0.0, 1.0, 0.0]];
pub const F16_B: [f64; 3] = [-0.0777, -6.5121, 0.0];
pub const F16_BZ: [f64; 3] = [0.0, 0.0, -1.0];
pub const F16_K: [f64; 3] = [0.1965, -0.3835, -1.0];
pub const F16_THETA_STAR: [f64; 3] = [0.1965, -0.03835, 0.0];

/// Linearized F-16 short-period dynamics with integral pitch-rate tracking
/// (500 ft/s, 15 000 ft), `Q = I`, driven by the default ±5 dps square wave
/// of period 10 s.
pub fn make_f16_scenario(uncertainty: F16Uncertainty) -> Result<ErrorModelScenario> {
    let rows: Vec<Vec<f64>> = F16_A.iter().map(|r| r.to_vec()).collect();
    let plant = PlantModel::new(
        Mat::from_nested(&rows)?,
        Mat::column(&F16_B)?,
        Mat::column(&F16_BZ)?,
    )?;
    let base = Mat::column(&F16_THETA_STAR)?;
    let profile = match uncertainty {
        F16Uncertainty::Constant => UncertaintyProfile::constant(base),
        F16Uncertainty::Sinusoid { amplitude, frequency } => {
            UncertaintyProfile::sinusoid(base, amplitude, frequency)?
        }
    };
    ErrorModelScenario::new(
        plant,
        Mat::column(&F16_K)?,
        profile,
        Command::StepTrain {
            period: 10.0,
            amplitude: 5.0,
        },
        SymMat::identity(3),
    )
}
