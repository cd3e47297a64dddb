use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tvlr_core::analysis::{bound_reports, write_bound_csv, BoundSetup};
use tvlr_core::excitation::{
    detect_fe, detect_pe, propagation_timeline, ExcitationKind, ExcitationReport, SampledSignal, Timeline,
};
use tvlr_core::simulate::{run, run_many, Trajectory};

use crate::config::{Built, LawName, RunConfig};
use crate::error::{CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn output_dir(config: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("."))
}

pub enum EnvelopeWindow {
    None,
    Explicit(f64, f64),
    /// Derive `[t3, t4]` from an excitation window `[t1, t2]`.
    FromExcitation(f64, f64),
}

pub fn simulate(
    config: &RunConfig,
    law_name: LawName,
    out: Option<PathBuf>,
    window: EnvelopeWindow,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let built = config.build()?;
    let law = built.law(law_name)?;
    let traj = run(&built.scenario, &law, &built.sim)?;
    let last = traj.records.last().expect("at least one record").t;

    let envelope = match window {
        EnvelopeWindow::None => None,
        EnvelopeWindow::Explicit(t3, t4) => Some((t3, t4)),
        EnvelopeWindow::FromExcitation(t1, t2) => {
            let report = detect_fe(&traj.regressor()?, (t1, t2), &built.excitation)?;
            write_report(stdout, &report, None).map_err(stdout_err)?;
            if report.meets_assumption3 {
                let tl = propagation_timeline(&report, &built.excitation, &built.phase)?;
                write_timeline(stdout, &tl).map_err(stdout_err)?;
                if tl.t3 >= last {
                    writeln!(stdout, "t3 lies past the end of the run, no envelope check").map_err(stdout_err)?;
                    None
                } else {
                    Some((tl.t3, tl.t4.min(last)))
                }
            } else {
                writeln!(stdout, "excitation too weak for the envelope check").map_err(stdout_err)?;
                None
            }
        }
    };

    let setup = BoundSetup::new(&built.scenario, &law, envelope)?;
    let reports = bound_reports(&traj, &built.scenario, &setup)?;
    let dir = output_dir(config, out);
    let traj_path = dir.join("trajectory.csv");
    let bound_path = dir.join("bounds.csv");
    traj.write_csv(create(&traj_path)?).map_err(|e| CliError::io(&traj_path, e))?;
    write_bound_csv(&reports, create(&bound_path)?).map_err(|e| CliError::io(&bound_path, e))?;

    let fin = traj.records.last().expect("at least one record");
    writeln!(
        stdout,
        "{}: {} records to t = {}; final V {:.6e}, |e| {:.6e}, |theta_tilde| {:.6e}",
        law_name.as_str(),
        traj.records.len(),
        fin.t,
        fin.v,
        fin.norm_e,
        fin.norm_theta_tilde
    )
    .map_err(stdout_err)?;
    if let Some((t3, t4)) = envelope {
        let inside: Vec<_> = reports.iter().filter_map(|r| r.envelope_ok).collect();
        let ok = inside.iter().filter(|&&b| b).count();
        writeln!(stdout, "envelope on [{t3}, {t4}]: {ok}/{} samples within bound", inside.len()).map_err(stdout_err)?;
    }
    writeln!(stdout, "wrote {} and {}", traj_path.display(), bound_path.display()).map_err(stdout_err)?;
    Ok(())
}

/// Header of the wide comparison CSV.
pub fn compare_header(laws: &[LawName]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for l in laws {
        for q in ["V", "norm_e", "norm_theta_tilde"] {
            h.push(format!("{q}_{}", l.as_str()));
        }
    }
    h
}

pub fn compare(config: &RunConfig, laws: &[LawName], out: Option<PathBuf>, stdout: &mut dyn Write) -> CliResult<()> {
    if laws.is_empty() {
        return Err(CliError::Config("at key `laws`: at least one law is required".into()));
    }
    let mut seen = Vec::new();
    for l in laws {
        if seen.contains(l) {
            return Err(CliError::Config(format!("at key `laws`: `{}` listed twice", l.as_str())));
        }
        seen.push(*l);
    }
    let built = config.build()?;
    let estimators = laws.iter().map(|&l| built.law(l)).collect::<CliResult<Vec<_>>>()?;
    let jobs: Vec<_> = estimators.iter().map(|law| (&built.scenario, law, &built.sim)).collect();
    let trajs = run_many(&jobs).into_iter().collect::<Result<Vec<Trajectory>, _>>()?;

    let path = output_dir(config, out).join("compare.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let io = |e: csv::Error| CliError::io(&path, e);
    w.write_record(compare_header(laws)).map_err(io)?;
    for k in 0..trajs[0].records.len() {
        let mut row = vec![trajs[0].records[k].t.to_string()];
        for tr in &trajs {
            let r = &tr.records[k];
            row.extend([r.v.to_string(), r.norm_e.to_string(), r.norm_theta_tilde.to_string()]);
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    for (l, tr) in laws.iter().zip(&trajs) {
        let fin = tr.records.last().expect("at least one record");
        let gmax = tr.records.iter().map(|r| r.gamma.frobenius_norm()).fold(0.0, f64::max);
        writeln!(
            stdout,
            "{:<14} final V {:.6e}, |e| {:.6e}, |theta_tilde| {:.6e}; max |Gamma|_F {:.4}",
            l.as_str(),
            fin.v,
            fin.norm_e,
            fin.norm_theta_tilde,
            gmax
        )
        .map_err(stdout_err)?;
    }
    writeln!(stdout, "wrote {}", path.display()).map_err(stdout_err)?;
    Ok(())
}

/// Reads a regressor trace: a header row, then a time column followed by
/// one column per regressor entry.
pub fn read_trace(path: &Path) -> CliResult<SampledSignal> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}: data row {}: {e}", path.display(), i + 1)))?;
        if vals.len() < 2 {
            return Err(CliError::Config(format!(
                "{}: data row {} needs a time column and at least one regressor column",
                path.display(),
                i + 1
            )));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    SampledSignal::from_times(&times, rows).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub enum ExciteSource {
    Trace(PathBuf),
    Simulate(LawName),
}

pub enum ExciteWindow {
    Finite(f64, f64),
    Persistent { window: f64, stride: f64 },
}

pub const EXCITE_HEADER: [&str; 12] = [
    "kind",
    "t1",
    "t2",
    "T",
    "alpha",
    "d",
    "alpha0",
    "meets_assumption3",
    "omega_fe",
    "t3",
    "t4",
    "alpha0_prime",
];

fn kind_name(k: ExcitationKind) -> &'static str {
    match k {
        ExcitationKind::None => "none",
        ExcitationKind::Finite => "finite",
        ExcitationKind::Persistent => "persistent",
    }
}

pub fn excite(
    config: &RunConfig,
    source: ExciteSource,
    window: ExciteWindow,
    csv_out: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let built: Built = config.build()?;
    let trace = match source {
        ExciteSource::Trace(p) => read_trace(&p)?,
        ExciteSource::Simulate(l) => run(&built.scenario, &built.law(l)?, &built.sim)?.regressor()?,
    };
    let report = match window {
        ExciteWindow::Finite(t1, t2) => detect_fe(&trace, (t1, t2), &built.excitation)?,
        ExciteWindow::Persistent { window, stride } => detect_pe(&trace, window, stride, &built.excitation)?,
    };
    let timeline = if report.meets_assumption3 {
        Some(propagation_timeline(&report, &built.excitation, &built.phase)?)
    } else {
        None
    };
    write_report(stdout, &report, timeline.as_ref()).map_err(stdout_err)?;
    if let Some(tl) = &timeline {
        write_timeline(stdout, tl).map_err(stdout_err)?;
    }

    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_writer(create(&path)?);
        let io = |e: csv::Error| CliError::io(&path, e);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(EXCITE_HEADER).map_err(io)?;
        w.write_record([
            kind_name(report.kind).to_string(),
            report.t1.to_string(),
            report.t2.to_string(),
            report.window.to_string(),
            report.alpha.to_string(),
            report.d.to_string(),
            report.alpha0.to_string(),
            report.meets_assumption3.to_string(),
            built.excitation.omega_fe().to_string(),
            opt(timeline.as_ref().map(|t| t.t3)),
            opt(timeline.as_ref().map(|t| t.t4)),
            opt(timeline.as_ref().and_then(|t| t.alpha0_prime)),
        ])
        .map_err(io)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn write_report(out: &mut dyn Write, r: &ExcitationReport, tl: Option<&Timeline>) -> std::io::Result<()> {
    writeln!(out, "excitation:  {}", kind_name(r.kind))?;
    writeln!(out, "window:      [{}, {}] (T = {})", r.t1, r.t2, r.window)?;
    writeln!(out, "alpha:       {:.6e}", r.alpha)?;
    writeln!(out, "d:           {:.6e}", r.d)?;
    let threshold = tl.and_then(|t| t.alpha0_prime).unwrap_or(r.alpha0);
    writeln!(out, "alpha0:      {threshold:.6e}")?;
    let verdict = if r.meets_assumption3 { "holds" } else { "does not hold" };
    writeln!(out, "alpha >= alpha0: {verdict}")
}

fn write_timeline(out: &mut dyn Write, tl: &Timeline) -> std::io::Result<()> {
    writeln!(out, "Omega_FE:    {:.6e}", tl.omega_fe)?;
    writeln!(out, "t3:          {:.6}", tl.t3)?;
    writeln!(out, "t4:          {:.6}", tl.t4)
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Io(format!("stdout: {e}"))
}
