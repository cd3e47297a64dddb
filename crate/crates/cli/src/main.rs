mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{EnvelopeWindow, ExciteSource, ExciteWindow};
use config::{LawName, RunConfig};
use error::{CliError, CliResult};

/// Adaptive-control simulator with time-varying learning rates.
///
/// Exit codes: 0 success, 2 config error, 3 invariant breach, 4 I/O error.
#[derive(Debug, Parser)]
#[command(name = "tvlr", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one law and write trajectory.csv and bounds.csv.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Estimator law; overrides the config's `law`.
        #[arg(long, value_enum)]
        law: Option<LawName>,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check the convergence envelope on [T3, T4].
        #[arg(long, num_args = 2, value_names = ["T3", "T4"], conflicts_with = "fe_window")]
        envelope: Option<Vec<f64>>,
        /// Test excitation on [T1, T2] and check the envelope on the derived [t3, t4].
        #[arg(long, num_args = 2, value_names = ["T1", "T2"])]
        fe_window: Option<Vec<f64>>,
    },
    /// Run several laws on the same scenario and write compare.csv.
    Compare {
        #[command(flatten)]
        source: Source,
        /// Comma-separated laws; overrides the config's `laws`.
        #[arg(long, value_enum, value_delimiter = ',')]
        laws: Option<Vec<LawName>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the excitation level of a regressor trace.
    Excite {
        #[command(flatten)]
        source: Source,
        /// CSV trace (time column, then regressor columns); without it the
        /// configured scenario is simulated and its regressor used.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Law to simulate when no trace is given.
        #[arg(long, value_enum, conflicts_with = "trace")]
        law: Option<LawName>,
        /// Finite-excitation window [T1, T2].
        #[arg(long, num_args = 2, value_names = ["T1", "T2"], required_unless_present = "pe")]
        window: Option<Vec<f64>>,
        /// Persistent-excitation window length.
        #[arg(long, conflicts_with = "window", requires = "stride")]
        pe: Option<f64>,
        /// Spacing of persistent-excitation window starts.
        #[arg(long)]
        stride: Option<f64>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the effective configuration as JSON.
    Config {
        #[command(flatten)]
        source: Source,
    },
}

/// Configuration source and overrides. Values marked "tool default"
/// are choices of this tool, not published constants.
#[derive(Debug, Args)]
struct Source {
    /// JSON config file.
    #[arg(long, conflicts_with = "builtin")]
    config: Option<PathBuf>,
    /// Built-in config name.
    #[arg(long, default_value = "f16-paper")]
    builtin: String,
    /// θ-projection cap [tool default: 1.0]
    #[arg(long)]
    theta_cap: Option<f64>,
    /// θ-projection margin ε [tool default: 0.1]
    #[arg(long)]
    theta_eps: Option<f64>,
    /// Γ-projection Frobenius cap [tool default: 100]
    #[arg(long)]
    gamma_cap: Option<f64>,
    /// Γ-projection margin ε_Γ [tool default: 10]
    #[arg(long)]
    gamma_eps: Option<f64>,
    /// k_Ω [tool default: 2]
    #[arg(long)]
    k_omega: Option<f64>,
    /// ρ_Ω [tool default: 0.5]
    #[arg(long)]
    rho_omega: Option<f64>,
    /// ρ_Γ [tool default: 0.9]
    #[arg(long)]
    rho_gamma: Option<f64>,
    /// Integration step in seconds [tool default: 0.001]
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon in seconds [tool default: 60]
    #[arg(long)]
    t_end: Option<f64>,
    /// Record every n-th step [default: 10]
    #[arg(long)]
    record_stride: Option<usize>,
}

impl Source {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => config::builtin(&self.builtin)?,
        };
        let p = &mut c.projection;
        set(&mut p.theta_cap, self.theta_cap);
        set(&mut p.theta_eps, self.theta_eps);
        set(&mut p.gamma_cap, self.gamma_cap);
        set(&mut p.gamma_eps, self.gamma_eps);
        let e = &mut c.excitation;
        set(&mut e.k_omega, self.k_omega);
        set(&mut e.rho_omega, self.rho_omega);
        set(&mut e.rho_gamma, self.rho_gamma);
        set(&mut c.sim.dt, self.dt);
        set(&mut c.sim.t_end, self.t_end);
        set(&mut c.sim.record_stride, self.record_stride);
        Ok(c)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn pair(v: Option<Vec<f64>>) -> Option<(f64, f64)> {
    v.map(|v| (v[0], v[1]))
}

fn dispatch(cmd: Cmd, stdout: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Cmd::Simulate {
            source,
            law,
            out,
            envelope,
            fe_window,
        } => {
            let c = source.resolve()?;
            let window = match (pair(envelope), pair(fe_window)) {
                (Some((a, b)), _) => EnvelopeWindow::Explicit(a, b),
                (None, Some((a, b))) => EnvelopeWindow::FromExcitation(a, b),
                (None, None) => EnvelopeWindow::None,
            };
            commands::simulate(&c, law.unwrap_or(c.law), out, window, stdout)
        }
        Cmd::Compare { source, laws, out } => {
            let c = source.resolve()?;
            let laws = laws.unwrap_or_else(|| c.laws.clone());
            commands::compare(&c, &laws, out, stdout)
        }
        Cmd::Excite {
            source,
            trace,
            law,
            window,
            pe,
            stride,
            csv,
        } => {
            let c = source.resolve()?;
            let src = match trace {
                Some(p) => ExciteSource::Trace(p),
                None => ExciteSource::Simulate(law.unwrap_or(c.law)),
            };
            let win = match (pair(window), pe, stride) {
                (Some((a, b)), _, _) => ExciteWindow::Finite(a, b),
                (None, Some(w), Some(s)) => ExciteWindow::Persistent { window: w, stride: s },
                _ => return Err(CliError::Config("either --window or --pe with --stride is required".into())),
            };
            commands::excite(&c, src, win, csv, stdout)
        }
        Cmd::Config { source } => {
            let c = source.resolve()?;
            c.build()?;
            writeln!(stdout, "{}", c.to_json()).map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(cli.command, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tvlr: {e}");
            e.exit_code()
        }
    }
}
