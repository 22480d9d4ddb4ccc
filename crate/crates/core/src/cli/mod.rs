//! Command-line front end: one config file describes one model and one run.
//!
//! Exit status is 0 when every check passes, 2 when a check fails and 1 on a
//! config or runtime error.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};
use thiserror::Error;

use crate::cumulants::{cumulant, CumulantError, MAX_CUMULANT_ORDER};
use crate::greens::{schwinger_by_differentiation, Argument, DifferentiationSettings, GreensError};
use crate::sampler::{
    atom_frequencies, empirical_green, empirical_moment, fourth_cumulant_kstat, sample_gaussian, sample_mixture,
    SamplerError,
};
use crate::verify::{
    boundedness_probe, invariance_audit, kernel_positivity, reflection_positivity, s_positivity, GramReport,
    PositivityKind, VerifyError,
};
use config::{Config, ConfigError, Loaded, Model};
use report::{complex, Provenance, Report};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_CHECK_FAILED: u8 = 2;

/// Largest order checked against finite differences (`2^n` evaluations per step).
const MAX_DIFFERENTIATION_ORDER: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "thermal-kms", version, about = "Thermal Green functionals, cumulants and positivity audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report destination; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `run.tolerances.psd`.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Overrides `run.samples`.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Covariance matrix B(x_i, x_j) of the configured points.
    KernelEval,
    /// Green functional on each point and on their sum.
    GreenEval,
    /// n-point Schwinger function, pairing route against finite differences.
    Schwinger,
    /// n-point truncated function and the quasi-free verdict.
    Cumulant,
    /// S- and reflection positivity of the functional and its kernel.
    AuditPositivity,
    /// Shift, reflection and periodicity invariance.
    AuditInvariance,
    /// Monte Carlo estimates against analytic values.
    SampleValidate,
    /// Every command above in one report.
    FullReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::KernelEval => "kernel-eval",
            Self::GreenEval => "green-eval",
            Self::Schwinger => "schwinger",
            Self::Cumulant => "cumulant",
            Self::AuditPositivity => "audit-positivity",
            Self::AuditInvariance => "audit-invariance",
            Self::SampleValidate => "sample-validate",
            Self::FullReport => "full-report",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing --config")]
    MissingConfig,
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("greens: {0}")]
    Greens(#[from] GreensError),
    #[error("cumulants: {0}")]
    Cumulant(#[from] CumulantError),
    #[error("verify: {0}")]
    Verify(#[from] VerifyError),
    #[error("sampler: {0}")]
    Sampler(#[from] SamplerError),
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Parses, runs and writes the report; returns the exit status.
pub fn run(cli: &Cli) -> u8 {
    match execute(cli) {
        Ok(report) => {
            if report.passed {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Builds the report and writes it to `--out` (or stdout).
pub fn execute(cli: &Cli) -> Result<Report> {
    let path = cli.config.as_ref().ok_or(CliError::MissingConfig)?;
    let mut cfg = Config::from_path(path)?;
    let mut overrides = BTreeMap::new();
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
        overrides.insert("seed".to_string(), json!(seed));
    }
    if let Some(tol) = cli.tolerance {
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(CliError::Usage(format!("--tolerance must be finite and >= 0, got {tol}")));
        }
        cfg.run.tolerances.psd = tol;
        overrides.insert("tolerance".to_string(), json!(tol));
    }
    if let Some(n) = cli.samples {
        cfg.run.samples = n;
        overrides.insert("samples".to_string(), json!(n));
    }
    let loaded = cfg.clone().load()?;
    let provenance = Provenance {
        version: env!("CARGO_PKG_VERSION"),
        config_path: path.display().to_string(),
        overrides,
        config: cfg,
    };
    let mut report = Report::new(cli.command.name(), provenance);
    run_command(cli.command, &loaded, &mut report)?;
    match &cli.out {
        Some(out) => report.write(BufWriter::new(File::create(out)?))?,
        None => report.write(io::stdout().lock())?,
    }
    Ok(report)
}

pub fn run_command(command: Command, loaded: &Loaded, report: &mut Report) -> Result<()> {
    match command {
        Command::KernelEval => kernel_eval(loaded, report),
        Command::GreenEval => green_eval(loaded, report),
        Command::Schwinger => schwinger(loaded, report),
        Command::Cumulant => cumulant_cmd(loaded, report),
        Command::AuditPositivity => audit_positivity(loaded, report),
        Command::AuditInvariance => audit_invariance(loaded, report),
        Command::SampleValidate => sample_validate(loaded, report),
        Command::FullReport => {
            for c in [
                Command::KernelEval,
                Command::GreenEval,
                Command::Schwinger,
                Command::Cumulant,
                Command::AuditPositivity,
                Command::AuditInvariance,
                Command::SampleValidate,
            ] {
                run_command(c, loaded, report)?;
            }
            Ok(())
        }
    }
}

fn matrix_json(m: &[Vec<Complex64>]) -> Value {
    Value::Array(
        m.iter()
            .map(|row| Value::Array(row.iter().map(|&z| complex(z)).collect()))
            .collect(),
    )
}

fn kernel_eval(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let kernel = loaded.model.kernel();
    let circle = loaded.model.circle();
    let pts = &loaded.points;
    let n = pts.len();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = kernel
                .bilinear(&pts[i].profile, &pts[i].f, &pts[j].profile, &pts[j].f, &circle)
                .map_err(GreensError::from)?;
        }
    }
    let norm = m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((m[i][j] - m[j][i].conj()).norm());
        }
    }
    let pairs: Vec<(Argument, Argument)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (pts[i].clone(), pts[j].clone()))
        .collect();
    let bound = boundedness_probe(&kernel, &circle, &pairs, &loaded.model.norm_dispersion())?;
    report.result("kernel", json!({ "matrix": matrix_json(&m), "max_asymmetry": asym }));
    report.result("boundedness", serde_json::to_value(&bound).expect("serializable"));
    report.check(
        "kernel_hermitian",
        asym <= 1e-12 * norm.max(1.0),
        json!({ "max_asymmetry": asym, "norm": norm }),
    );
    report.check(
        "kernel_bounded",
        bound.passes,
        json!({ "supremum": bound.supremum, "bound": bound.bound }),
    );
    Ok(())
}

fn green_eval(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let g = loaded.model.functional();
    let joint = g.characteristic(&loaded.points)?;
    let singles = loaded
        .points
        .iter()
        .map(|p| g.characteristic(std::slice::from_ref(p)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let max_modulus = singles.iter().chain([&joint]).map(|z| z.norm()).fold(0.0, f64::max);
    report.result(
        "green",
        json!({
            "joint": complex(joint),
            "single": singles.iter().map(|&z| complex(z)).collect::<Vec<_>>(),
            "at_zero": complex(g.characteristic(&[])?),
        }),
    );
    report.check("green_modulus_at_most_one", max_modulus <= 1.0 + 1e-12, json!({ "max_modulus": max_modulus }));
    Ok(())
}

/// `prod_k sqrt(S(x_k, x_k))`, the natural size of an n-point function.
fn moment_scale(loaded: &Loaded) -> Result<f64> {
    let g = loaded.model.functional();
    let mut scale = 1.0;
    for p in &loaded.points {
        scale *= g.moment(&[p.clone(), p.clone()])?.norm().sqrt();
    }
    Ok(scale)
}

fn schwinger(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let g = loaded.model.functional();
    let n = loaded.points.len();
    let wick = g.moment(&loaded.points)?;
    let scale = moment_scale(loaded)?;
    let mut entry = json!({ "order": n, "pairing": complex(wick), "scale": scale });
    if n <= MAX_DIFFERENTIATION_ORDER {
        let settings = DifferentiationSettings::for_order(n);
        let fd = schwinger_by_differentiation(g, &loaded.points, settings)?;
        let gap = (fd - wick).norm() / wick.norm().max(scale);
        let tol = loaded.config.run.tolerances.derivative;
        entry["finite_difference"] = complex(fd);
        entry["relative_gap"] = json!(gap);
        report.check("schwinger_derivative_consistency", gap < tol, json!({ "relative_gap": gap, "tolerance": tol }));
    } else {
        entry["finite_difference"] = json!("skipped: order too large");
    }
    report.result("schwinger", entry);
    Ok(())
}

fn cumulant_cmd(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let n = loaded.points.len();
    if n > MAX_CUMULANT_ORDER {
        return Err(CumulantError::OrderOutOfRange {
            n,
            max: MAX_CUMULANT_ORDER,
        }
        .into());
    }
    let kappa = cumulant(loaded.model.functional(), &loaded.points)?;
    let scale = moment_scale(loaded)?;
    let tol = loaded.config.run.tolerances.cumulant;
    let expected = if loaded.model.expects_quasi_free() {
        "quasi_free"
    } else {
        "non_quasi_free"
    };
    let verdict = if n < 3 {
        "not_applicable"
    } else if kappa.norm() > tol * scale {
        "non_quasi_free"
    } else {
        "quasi_free"
    };
    let mut entry = json!({
        "order": n,
        "cumulant": complex(kappa),
        "scale": scale,
        "verdict": verdict,
        "expected": expected,
    });
    if n == 4 {
        entry["fourth_cumulant"] = json!(kappa.re);
    }
    report.result("cumulant", entry);
    report.check(
        "cumulant_verdict_matches_model",
        verdict == "not_applicable" || verdict == expected,
        json!({ "verdict": verdict, "expected": expected, "relative_size": kappa.norm() / scale }),
    );
    Ok(())
}

fn gram_json(r: &GramReport) -> Value {
    serde_json::to_value(r).expect("serializable")
}

fn audit_positivity(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let g = loaded.model.functional();
    let kernel = loaded.model.kernel();
    let circle = loaded.model.circle();
    let tol = loaded.config.run.tolerances.psd;
    let pts = &loaded.points;
    let supported: Vec<Argument> = pts
        .iter()
        .filter(|p| p.profile.supported_on_positive_half(&circle))
        .cloned()
        .collect();
    let mut audits = vec![
        ("s_positivity", Some(s_positivity(g, pts, tol)?)),
        ("kernel_s_positivity", Some(kernel_positivity(&kernel, &circle, pts, PositivityKind::Shift, tol)?)),
    ];
    if supported.is_empty() {
        audits.push(("reflection_positivity", None));
        audits.push(("kernel_reflection_positivity", None));
    } else {
        audits.push(("reflection_positivity", Some(reflection_positivity(g, &supported, tol)?)));
        audits.push((
            "kernel_reflection_positivity",
            Some(kernel_positivity(&kernel, &circle, &supported, PositivityKind::Reflection, tol)?),
        ));
    }
    let mut all_psd = true;
    let mut results = serde_json::Map::new();
    for (name, audit) in audits {
        match audit {
            Some(r) => {
                all_psd &= r.is_psd();
                report.check(
                    name,
                    r.is_psd(),
                    json!({ "min_eigenvalue": r.min_eigenvalue(), "max_eigenvalue": r.max_eigenvalue() }),
                );
                results.insert(name.to_string(), gram_json(&r));
            }
            None => {
                results.insert(name.to_string(), json!("skipped: no point supported on [0, beta/2]"));
            }
        }
    }
    results.insert("verdict".into(), json!(if all_psd { "psd" } else { "indefinite" }));
    report.result("positivity", Value::Object(results));
    Ok(())
}

fn audit_invariance(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let tol = loaded.config.run.tolerances.invariance;
    let r = invariance_audit(loaded.model.functional(), &loaded.points, &loaded.config.shifts(), tol)?;
    report.check(
        "invariance",
        r.passes,
        json!({
            "shift_deviation": r.shift_deviation,
            "reflection_deviation": r.reflection_deviation,
            "periodicity_deviation": r.periodicity_deviation,
        }),
    );
    report.result("invariance", serde_json::to_value(&r).expect("serializable"));
    Ok(())
}

fn sample_validate(loaded: &Loaded, report: &mut Report) -> Result<()> {
    let run = &loaded.config.run;
    let k = run.tolerances.sigma;
    let g = loaded.model.functional();
    let pts = &loaded.points;
    let n = pts.len();
    let batch = match &loaded.model {
        Model::QuasiFree(spec) => sample_gaussian(spec, pts, run.samples, run.seed)?,
        Model::Mixture(m) => sample_mixture(&m.measure, m.kind, &m.circle, pts, run.samples, run.seed)?,
    };
    let mut rows = Vec::new();
    let mut record = |report: &mut Report, name: String, mean: f64, stderr: f64, target: f64| {
        let passed = (mean - target).abs() <= k * stderr;
        rows.push(json!({ "name": name, "estimate": mean, "stderr": stderr, "analytic": target }));
        report.check(
            format!("mc_{name}"),
            passed,
            json!({ "estimate": mean, "stderr": stderr, "analytic": target }),
        );
    };

    let mut unit = vec![0.0; n];
    for i in 0..n {
        unit.iter_mut().for_each(|c| *c = 0.0);
        unit[i] = 1.0;
        let e = empirical_green(&batch, &unit)?;
        let target = g.characteristic(std::slice::from_ref(&pts[i]))?;
        record(report, format!("green_{i}_re"), e.mean.re, e.stderr_re, target.re);
    }
    let ones = vec![1.0; n];
    let e = empirical_green(&batch, &ones)?;
    let target = g.characteristic(pts)?;
    record(report, "green_joint_re".into(), e.mean.re, e.stderr_re, target.re);
    record(report, "green_joint_im".into(), e.mean.im, e.stderr_im, target.im);
    for i in 0..n {
        for j in i..n {
            let e = empirical_moment(&batch, &[i, j])?;
            let target = g.moment(&[pts[i].clone(), pts[j].clone()])?;
            record(report, format!("moment_{i}{j}"), e.mean, e.stderr, target.re);
        }
    }
    let four = vec![pts[0].clone(); 4];
    let e = empirical_moment(&batch, &[0, 0, 0, 0])?;
    record(report, "moment_0000".into(), e.mean, e.stderr, g.moment(&four)?.re);
    let mut c0 = vec![0.0; n];
    c0[0] = 1.0;
    let k4 = fourth_cumulant_kstat(&batch, &c0)?;
    let kappa4 = cumulant(g, &four)?.re;
    record(report, "fourth_cumulant_0000".into(), k4.mean, k4.stderr, kappa4);
    if !loaded.model.expects_quasi_free() {
        report.check("mc_fourth_cumulant_positive", k4.mean > 0.0, json!({ "estimate": k4.mean }));
    }
    if let Model::Mixture(m) = &loaded.model {
        let freq = atom_frequencies(&batch);
        let nf = batch.len() as f64;
        for (i, atom) in m.measure.atoms().iter().enumerate() {
            let w = atom.weight;
            record(report, format!("atom_{i}_frequency"), freq[i], (w * (1.0 - w) / nf).sqrt(), w);
        }
    }
    report.result(
        "sampling",
        json!({
            "draws": batch.len(),
            "seed": batch.seed,
            "sigma": k,
            "estimates": rows,
        }),
    );
    Ok(())
}
