//! Run configuration: a JSON document with every section optional. Missing
//! sections take the built-in `f16-paper` values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tvlr_core::error_models::{
    make_f16_scenario, Command, ErrorModelScenario, F16Uncertainty, PlantModel, UncertaintyProfile, F16_THETA_STAR,
};
use tvlr_core::estimator::{EstimatorLaw, LearningRateState, ParamMatrix, TvState};
use tvlr_core::excitation::{ExcitationConfig, InfoMatrixState, LearningRatePhase};
use tvlr_core::numerics::{Mat, SymMat};
use tvlr_core::projection::{ConvexBound, ProjFamily};
use tvlr_core::simulate::SimConfig;

use crate::error::{CliError, CliResult};

pub const BUILTIN_NAMES: &[&str] = &["f16-paper"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Builtin {
    #[serde(rename = "f16-paper")]
    F16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Builtin(Builtin),
    Inline(InlineScenario),
}

/// Matrices are nested arrays, one inner array per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScenario {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub bz: Vec<Vec<f64>>,
    /// Feedback gain, same shape as `b`.
    pub k: Vec<Vec<f64>>,
    /// Identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintySpec {
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_star: Option<Vec<Vec<f64>>>,
    },
    Sinusoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_star: Option<Vec<Vec<f64>>>,
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandSpec {
    Zero,
    Constant { value: f64 },
    StepTrain { period: f64, amplitude: f64 },
    SineBurst { amplitude: f64, frequency: f64, start: f64, end: f64 },
}

impl From<CommandSpec> for Command {
    fn from(c: CommandSpec) -> Self {
        match c {
            CommandSpec::Zero => Command::Zero,
            CommandSpec::Constant { value } => Command::Constant(value),
            CommandSpec::StepTrain { period, amplitude } => Command::StepTrain { period, amplitude },
            CommandSpec::SineBurst {
                amplitude,
                frequency,
                start,
                end,
            } => Command::SineBurst {
                amplitude,
                frequency,
                start,
                end,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum LawName {
    Static,
    TvProjected,
    TvForgetting,
}

impl LawName {
    pub fn as_str(self) -> &'static str {
        match self {
            LawName::Static => "static",
            LawName::TvProjected => "tv_projected",
            LawName::TvForgetting => "tv_forgetting",
        }
    }
}

/// A scalar `g` stands for `g·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSpec {
    pub lambda_gamma: f64,
    pub kappa: f64,
    pub lambda_omega: f64,
    pub gamma0: GainSpec,
    /// Initial estimate, zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<Vec<f64>>>,
}

impl Default for GainsSpec {
    fn default() -> Self {
        Self {
            lambda_gamma: 0.5,
            kappa: 0.5,
            lambda_omega: 10.0,
            gamma0: GainSpec::Scalar(10.0),
            theta0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSpec {
    pub theta_cap: f64,
    pub theta_eps: f64,
    pub gamma_cap: f64,
    pub gamma_eps: f64,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self {
            theta_cap: 1.0,
            theta_eps: 0.1,
            gamma_cap: 100.0,
            gamma_eps: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationSpec {
    pub k_omega: f64,
    pub rho_omega: f64,
    pub rho_gamma: f64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        Self {
            k_omega: 2.0,
            rho_omega: 0.5,
            rho_gamma: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_hat0: Option<Vec<f64>>,
}

impl Default for SimSpec {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt: d.dt,
            t_end: d.t_end,
            record_stride: d.record_stride,
            x0: None,
            x_hat0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub uncertainty: UncertaintySpec,
    pub command: CommandSpec,
    pub law: LawName,
    /// Laws run side by side by `compare`.
    pub laws: Vec<LawName>,
    pub gains: GainsSpec,
    pub projection: ProjectionSpec,
    pub excitation: ExcitationSpec,
    pub sim: SimSpec,
    /// Output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::Builtin(Builtin::F16),
            uncertainty: UncertaintySpec::Constant { theta_star: None },
            command: CommandSpec::StepTrain {
                period: 10.0,
                amplitude: 5.0,
            },
            law: LawName::TvProjected,
            laws: vec![LawName::Static, LawName::TvProjected],
            gains: GainsSpec::default(),
            projection: ProjectionSpec::default(),
            excitation: ExcitationSpec::default(),
            sim: SimSpec::default(),
            output: None,
        }
    }
}

pub fn builtin(name: &str) -> CliResult<RunConfig> {
    match name {
        "f16-paper" => Ok(RunConfig::default()),
        _ => Err(CliError::Config(format!(
            "unknown built-in `{name}`, expected one of {BUILTIN_NAMES:?}"
        ))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("at key `{path}`: {inner}"))
            }
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds and validates every core object the config describes.
    pub fn build(&self) -> CliResult<Built> {
        let scenario = self.scenario()?;
        let n = scenario.n();
        let m = scenario.inputs();
        let p = &self.projection;
        let theta_bound = ConvexBound::vector(p.theta_cap, p.theta_eps).map_err(ctx("projection"))?;
        let family = ProjFamily::uniform(theta_bound, m)?;
        let theta0 = match &self.gains.theta0 {
            Some(rows) => mat(rows, "gains.theta0")?,
            None => Mat::zeros(n, m),
        };
        let params = ParamMatrix::new(theta0, family).map_err(ctx("gains.theta0"))?;
        let gamma0 = match &self.gains.gamma0 {
            GainSpec::Scalar(g) => SymMat::scaled_identity(n, *g),
            GainSpec::Matrix(rows) => {
                SymMat::try_from_mat(&mat(rows, "gains.gamma0")?, 1e-12).map_err(ctx("gains.gamma0"))?
            }
        };
        let fcal = ConvexBound::frobenius(p.gamma_cap, p.gamma_eps).map_err(ctx("projection"))?;
        let excitation = ExcitationConfig::new(
            self.gains.kappa,
            fcal.outer_radius(),
            self.excitation.k_omega,
            self.excitation.rho_omega,
            self.gains.lambda_omega,
        )
        .map_err(ctx("excitation"))?;
        let phase = LearningRatePhase {
            rho_gamma: self.excitation.rho_gamma,
            lambda_gamma: self.gains.lambda_gamma,
        };
        let sim = SimConfig {
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            record_stride: self.sim.record_stride,
            x0: self.sim.x0.clone(),
            x_hat0: self.sim.x_hat0.clone(),
            ..SimConfig::default()
        };
        sim.validate().map_err(ctx("sim"))?;
        for (v, key) in [(&sim.x0, "sim.x0"), (&sim.x_hat0, "sim.x_hat0")] {
            if v.as_ref().is_some_and(|v| v.len() != n) {
                return Err(CliError::Config(format!("at key `{key}`: expected {n} entries")));
            }
        }
        let built = Built {
            scenario,
            params,
            gamma0,
            fcal,
            lambda_gamma: self.gains.lambda_gamma,
            kappa: self.gains.kappa,
            lambda_omega: self.gains.lambda_omega,
            excitation,
            phase,
            sim,
        };
        // surface gain errors now rather than at the first run
        for law in [LawName::Static, LawName::TvProjected, LawName::TvForgetting] {
            built.law(law)?;
        }
        Ok(built)
    }

    fn scenario(&self) -> CliResult<ErrorModelScenario> {
        let base = match &self.uncertainty {
            UncertaintySpec::Constant { theta_star } | UncertaintySpec::Sinusoid { theta_star, .. } => {
                theta_star.as_ref().map(|r| mat(r, "uncertainty.theta_star")).transpose()?
            }
        };
        let sc = match &self.scenario {
            ScenarioSpec::Builtin(Builtin::F16) => {
                let mut sc = make_f16_scenario(F16Uncertainty::Constant)?;
                let base = base.unwrap_or(Mat::column(&F16_THETA_STAR)?);
                sc.uncertainty = self.profile(base)?;
                sc
            }
            ScenarioSpec::Inline(s) => {
                let base = base.ok_or_else(|| {
                    CliError::Config("at key `uncertainty.theta_star`: required for an inline scenario".into())
                })?;
                let plant = PlantModel::new(mat(&s.a, "scenario.a")?, mat(&s.b, "scenario.b")?, mat(&s.bz, "scenario.bz")?)
                    .map_err(ctx("scenario"))?;
                let q = match &s.q {
                    Some(rows) => SymMat::try_from_mat(&mat(rows, "scenario.q")?, 1e-12).map_err(ctx("scenario.q"))?,
                    None => SymMat::identity(plant.n()),
                };
                ErrorModelScenario::new(plant, mat(&s.k, "scenario.k")?, self.profile(base)?, Command::Zero, q)
                    .map_err(ctx("scenario"))?
            }
        };
        if sc.uncertainty.base().shape() != (sc.n(), sc.inputs()) {
            return Err(CliError::Config(format!(
                "at key `uncertainty.theta_star`: expected a {}×{} matrix",
                sc.n(),
                sc.inputs()
            )));
        }
        sc.with_command(self.command.into()).map_err(ctx("command"))
    }

    fn profile(&self, base: Mat) -> CliResult<UncertaintyProfile> {
        match self.uncertainty {
            UncertaintySpec::Constant { .. } => Ok(UncertaintyProfile::constant(base)),
            UncertaintySpec::Sinusoid {
                amplitude, frequency, ..
            } => UncertaintyProfile::sinusoid(base, amplitude, frequency).map_err(ctx("uncertainty")),
        }
    }
}

fn mat(rows: &[Vec<f64>], key: &str) -> CliResult<Mat> {
    Mat::from_nested(rows).map_err(ctx(key))
}

fn ctx(key: &str) -> impl Fn(tvlr_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("at key `{key}`: {e}"))
}

/// Validated core objects for one configuration.
#[derive(Debug, Clone)]
pub struct Built {
    pub scenario: ErrorModelScenario,
    params: ParamMatrix,
    gamma0: SymMat,
    fcal: ConvexBound,
    lambda_gamma: f64,
    kappa: f64,
    lambda_omega: f64,
    pub excitation: ExcitationConfig,
    pub phase: LearningRatePhase,
    pub sim: SimConfig,
}

impl Built {
    pub fn law(&self, name: LawName) -> CliResult<EstimatorLaw> {
        let tv = || -> CliResult<TvState> {
            let rate = LearningRateState::new(self.gamma0.clone(), self.fcal, self.lambda_gamma, self.kappa)
                .map_err(ctx("gains"))?;
            let info = InfoMatrixState::zero(self.scenario.n(), self.lambda_omega).map_err(ctx("gains.lambda_omega"))?;
            TvState::new(rate, info).map_err(ctx("gains"))
        };
        let law = match name {
            LawName::Static => EstimatorLaw::static_gain(self.params.clone(), self.gamma0.clone()),
            LawName::TvProjected => EstimatorLaw::projected(self.params.clone(), tv()?),
            LawName::TvForgetting => EstimatorLaw::forgetting(self.params.clone(), tv()?),
        };
        law.map_err(ctx("gains"))
    }
}
