//! Command-line interface: problem-file ingestion, result export, exit codes.
//!
//! Problem files are JSON; designs are JSON ({"points": [...], "weights":
//! [...]}, optionally wrapped in a {"design": ...} object as emitted by
//! `optimize`); sensitivity curves are CSV. Exit codes: 0 ok/optimal,
//! 1 input error, 2 non-converged (or verified non-optimal), 3 numeric
//! error, 4 no closed form.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::activecontrol::{extend, ActiveControlDesign, ControlSpec};
use crate::criteria::{efficiency, phi_p, CriterionSpec};
use crate::design_theory::minimal_d_design;
use crate::equivalence::{sensitivity_curve, verify, VerificationReport};
use crate::error::{DesignError, Result};
use crate::infomat::{BivariateModel, CovarianceSpec, Design, DoseRange};
use crate::models::{ModelFamily, ModelSpec};
use crate::pso::{optimize, DesignProblem, PsoConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_NO_CLOSED_FORM: i32 = 4;

const DEFAULT_GRID: usize = 2001;
const DEFAULT_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "efftox-design",
    version,
    about = "Optimal designs for dose-finding trials with correlated efficacy-toxicity outcomes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the phi_p-optimal design by particle swarm optimization
    Optimize {
        /// Problem file (JSON)
        problem: PathBuf,
        /// Write the result JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the optimizer's random seed
        #[arg(long)]
        seed: Option<u64>,
        /// Verification grid size
        #[arg(long)]
        grid: Option<usize>,
        /// Relative verification tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// Support-point budget
        #[arg(long)]
        k: Option<usize>,
    },
    /// Emit the closed-form minimally supported D-optimal design
    Minimal {
        /// Problem file (JSON)
        problem: PathBuf,
        /// Write the result JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a design for phi_p-optimality via its sensitivity function
    Verify {
        /// Problem file (JSON)
        problem: PathBuf,
        /// Design file (JSON)
        design: PathBuf,
        /// Write the report JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scan grid size
        #[arg(long)]
        grid: Option<usize>,
        /// Relative decision tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// Also export the sensitivity curve as CSV to this path
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// phi_p-efficiency of a design relative to a reference design
    Efficiency {
        /// Problem file (JSON)
        problem: PathBuf,
        /// Design file (JSON)
        design: PathBuf,
        /// Reference (claimed optimal) design file (JSON)
        reference: PathBuf,
        /// Write the bare ratio here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Everything a problem file can specify, converted and validated.
#[derive(Debug, Clone)]
pub struct Problem {
    pub bm: BivariateModel,
    pub range: DoseRange,
    pub crit: CriterionSpec,
    pub control: Option<ControlSpec>,
    pub pso: PsoConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    efficacy: RawModel,
    toxicity: RawModel,
    covariance: RawCovariance,
    range: RawRange,
    #[serde(default)]
    criterion: Option<RawCriterion>,
    #[serde(default)]
    control: Option<RawControl>,
    #[serde(default)]
    pso: Option<PsoConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: String,
    params: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovariance {
    sigma_e: f64,
    sigma_t: f64,
    rho: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "R")]
    r: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCriterion {
    p: RawP,
    #[serde(rename = "K", default)]
    k: Option<Vec<Vec<f64>>>,
}

/// p is a JSON number, or the string "-inf" for the E-criterion.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawP {
    Num(f64),
    Str(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    sigma_e: f64,
    sigma_t: f64,
    /// Correlation of the control arm's bivariate response; defaults to the
    /// drug model's rho when omitted.
    #[serde(default)]
    rho: Option<f64>,
    /// Fixed dose of the control drug (informational).
    #[serde(default)]
    dose: f64,
}

fn parse_family(name: &str, path: &str) -> Result<ModelFamily> {
    ModelFamily::parse(name).ok_or_else(|| DesignError::Invalid {
        path: format!("{path}.family"),
        message: format!(
            "unknown model family '{name}' (expected linear, quadratic, michaelis-menten or emax)"
        ),
    })
}

/// Parses and validates a problem file, attaching field paths to every
/// complaint (e.g. "toxicity.params[1]: half-maximal parameter must be > 0").
pub fn parse_problem(text: &str) -> Result<Problem> {
    let raw: RawProblem = serde_json::from_str(text).map_err(|e| DesignError::Invalid {
        path: "problem".into(),
        message: e.to_string(),
    })?;

    let bm = BivariateModel::new(
        ModelSpec {
            family: parse_family(&raw.efficacy.family, "efficacy")?,
            params: raw.efficacy.params,
        },
        ModelSpec {
            family: parse_family(&raw.toxicity.family, "toxicity")?,
            params: raw.toxicity.params,
        },
        CovarianceSpec {
            sigma_e: raw.covariance.sigma_e,
            sigma_t: raw.covariance.sigma_t,
            rho: raw.covariance.rho,
        },
    )?;
    let range = DoseRange::new(raw.range.l, raw.range.r).map_err(|e| e.nest("range"))?;

    let crit = match raw.criterion {
        None => CriterionSpec::d_optimal(),
        Some(rc) => {
            let p = match rc.p {
                RawP::Num(v) => v,
                RawP::Str(s) if s == "-inf" => f64::NEG_INFINITY,
                RawP::Str(s) => {
                    return Err(DesignError::Invalid {
                        path: "criterion.p".into(),
                        message: format!("expected a number below 1 or \"-inf\" (got \"{s}\")"),
                    })
                }
            };
            let k = match rc.k {
                None => None,
                Some(rows) => Some(parse_k_matrix(rows, bm.s_dim())?),
            };
            CriterionSpec::new(p, k)?
        }
    };

    let control = match raw.control {
        None => None,
        Some(rc) => Some(ControlSpec {
            cov: CovarianceSpec::new(rc.sigma_e, rc.sigma_t, rc.rho.unwrap_or(bm.cov.rho))
                .map_err(|e| e.nest("control"))?,
            dose: rc.dose,
        }),
    };

    let pso = raw.pso.unwrap_or_default();
    pso.validate()?;

    Ok(Problem {
        bm,
        range,
        crit,
        control,
        pso,
    })
}

fn parse_k_matrix(rows: Vec<Vec<f64>>, s1: usize) -> Result<DMatrix<f64>> {
    if rows.len() != s1 {
        return Err(DesignError::Invalid {
            path: "criterion.K".into(),
            message: format!("K must have {s1} rows (one per model parameter), got {}", rows.len()),
        });
    }
    let m = rows[0].len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(DesignError::Invalid {
            path: "criterion.K".into(),
            message: "K rows must be non-empty and of equal length".into(),
        });
    }
    Ok(DMatrix::from_fn(s1, m, |i, j| rows[i][j]))
}

#[derive(Deserialize)]
struct RawDesign {
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Parses a design file: either a bare {"points", "weights"} object or the
/// {"design": {...}, ...} wrapper produced by `optimize`/`minimal`.
pub fn parse_design(text: &str, range: &DoseRange) -> Result<Design> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DesignError::Invalid {
        path: "design".into(),
        message: e.to_string(),
    })?;
    let inner = value.get("design").unwrap_or(&value);
    let raw: RawDesign =
        serde_json::from_value(inner.clone()).map_err(|e| DesignError::Invalid {
            path: "design".into(),
            message: e.to_string(),
        })?;
    Design::new(raw.points, raw.weights, range)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DesignError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| DesignError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// JSON encoding of p: a number, or "-inf" for the E-criterion.
fn p_to_json(p: f64) -> serde_json::Value {
    if p == f64::NEG_INFINITY {
        serde_json::Value::String("-inf".into())
    } else {
        serde_json::json!(p)
    }
}

/// Rounds to `digits` significant digits for human-readable summaries
/// (full precision is preserved in every JSON field).
fn fmt_sig(x: f64, digits: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let dec = digits - 1 - mag;
    if dec <= 0 {
        let scale = 10f64.powi(-dec);
        format!("{}", (x / scale).round() * scale)
    } else {
        format!("{:.*}", dec as usize, x)
    }
}

fn design_summary(xi: &Design) -> String {
    xi.iter()
        .map(|(d, w)| format!("  dose {:<14} weight {}", fmt_sig(d, 6), fmt_sig(w, 6)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn emit(out: Option<&Path>, payload: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, &format!("{payload}\n")),
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct OptimizeOutput<'a> {
    design: &'a Design,
    phi: f64,
    p: serde_json::Value,
    converged: bool,
    seed: u64,
    k_max: usize,
    report: &'a VerificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_control: Option<&'a ActiveControlDesign>,
}

#[derive(Serialize)]
struct MinimalOutput<'a> {
    design: &'a Design,
    phi: f64,
    p: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_control: Option<&'a ActiveControlDesign>,
}

fn cmd_optimize(
    problem_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    grid: Option<usize>,
    tol: Option<f64>,
    k: Option<usize>,
) -> Result<i32> {
    let mut problem = parse_problem(&read_file(problem_path)?)?;
    if let Some(seed) = seed {
        problem.pso.seed = seed;
    }
    if let Some(k) = k {
        problem.pso.k_max = Some(k);
    }
    let dp = DesignProblem::new(problem.bm.clone(), problem.range, problem.crit.clone())?;
    let (xi, mut diag) = optimize(&dp, &problem.pso)?;
    // re-verify at the user's grid/tolerance when they differ from the
    // optimizer's built-in check
    if grid.is_some() || tol.is_some() {
        if let Ok(report) = verify(
            &xi,
            &problem.bm,
            &problem.crit,
            &problem.range,
            grid.unwrap_or(DEFAULT_GRID),
            tol.unwrap_or(DEFAULT_TOL),
        ) {
            diag.converged = report.optimal;
            diag.report = report;
        }
    }

    let active_control = match &problem.control {
        Some(ctrl) => Some(extend(&xi, &problem.bm, ctrl, problem.crit.p())?),
        None => None,
    };

    let output = OptimizeOutput {
        design: &xi,
        phi: diag.phi,
        p: p_to_json(problem.crit.p()),
        converged: diag.converged,
        seed: problem.pso.seed,
        k_max: diag.k_max,
        report: &diag.report,
        active_control: active_control.as_ref(),
    };
    emit(out, &serde_json::to_string_pretty(&output).expect("serializable"))?;

    eprintln!(
        "optimal design candidate (p = {}, phi = {}):\n{}",
        p_to_json(problem.crit.p()),
        fmt_sig(diag.phi, 6),
        design_summary(&xi)
    );
    if let Some(ac) = &active_control {
        eprintln!(
            "active-control extension: control weight {}, drug arm total {}",
            fmt_sig(ac.control_weight, 6),
            fmt_sig(1.0 - ac.control_weight, 6)
        );
    }
    if diag.converged {
        eprintln!(
            "verified optimal: max sensitivity {} within tolerance {}",
            fmt_sig(diag.report.max_sensitivity, 6),
            fmt_sig(diag.report.tolerance, 6)
        );
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "NOT verified optimal: max sensitivity {} at dose {} exceeds tolerance {}",
            fmt_sig(diag.report.max_sensitivity, 6),
            fmt_sig(diag.report.argmax_dose, 6),
            fmt_sig(diag.report.tolerance, 6)
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_minimal(problem_path: &Path, out: Option<&Path>) -> Result<i32> {
    let problem = parse_problem(&read_file(problem_path)?)?;
    let xi = minimal_d_design(&problem.bm, &problem.range)?;
    let phi = phi_p(&xi, &problem.bm, &problem.crit);
    let active_control = match &problem.control {
        Some(ctrl) => Some(extend(&xi, &problem.bm, ctrl, problem.crit.p())?),
        None => None,
    };
    let output = MinimalOutput {
        design: &xi,
        phi,
        p: p_to_json(problem.crit.p()),
        active_control: active_control.as_ref(),
    };
    emit(out, &serde_json::to_string_pretty(&output).expect("serializable"))?;
    eprintln!(
        "minimally supported D-optimal design (phi at p = {}: {}):\n{}",
        p_to_json(problem.crit.p()),
        fmt_sig(phi, 6),
        design_summary(&xi)
    );
    Ok(EXIT_OK)
}

fn cmd_verify(
    problem_path: &Path,
    design_path: &Path,
    out: Option<&Path>,
    grid: Option<usize>,
    tol: Option<f64>,
    curve: Option<&Path>,
) -> Result<i32> {
    let problem = parse_problem(&read_file(problem_path)?)?;
    let xi = parse_design(&read_file(design_path)?, &problem.range)?;
    let grid_n = grid.unwrap_or(DEFAULT_GRID);
    let report = verify(
        &xi,
        &problem.bm,
        &problem.crit,
        &problem.range,
        grid_n,
        tol.unwrap_or(DEFAULT_TOL),
    )?;
    if let Some(curve_path) = curve {
        let pts = sensitivity_curve(&xi, &problem.bm, &problem.crit, &problem.range, grid_n)?;
        let mut csv = String::with_capacity(pts.len() * 32 + 20);
        csv.push_str("dose,sensitivity\n");
        for (d, s) in pts {
            csv.push_str(&format!("{d},{s}\n"));
        }
        write_file(curve_path, &csv)?;
    }
    emit(out, &serde_json::to_string_pretty(&report).expect("serializable"))?;
    if report.optimal {
        eprintln!(
            "optimal: max sensitivity {} within tolerance {}",
            fmt_sig(report.max_sensitivity, 6),
            fmt_sig(report.tolerance, 6)
        );
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "not optimal: max sensitivity {} at dose {} (tolerance {})",
            fmt_sig(report.max_sensitivity, 6),
            fmt_sig(report.argmax_dose, 6),
            fmt_sig(report.tolerance, 6)
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_efficiency(
    problem_path: &Path,
    design_path: &Path,
    reference_path: &Path,
    out: Option<&Path>,
) -> Result<i32> {
    let problem = parse_problem(&read_file(problem_path)?)?;
    let xi = parse_design(&read_file(design_path)?, &problem.range)?;
    let reference = parse_design(&read_file(reference_path)?, &problem.range)?;
    let eff = efficiency(&xi, &reference, &problem.bm, &problem.crit)?;
    emit(out, &format!("{eff}"))?;
    eprintln!("phi_p-efficiency (p = {}): {}", p_to_json(problem.crit.p()), fmt_sig(eff, 6));
    Ok(EXIT_OK)
}

fn exit_code_for(err: &DesignError) -> i32 {
    match err {
        DesignError::Invalid { .. }
        | DesignError::EqualHalfMax { .. }
        | DesignError::DimensionMismatch(_) => EXIT_INPUT,
        DesignError::SingularDesign { .. } | DesignError::Numeric(_) => EXIT_NUMERIC,
        DesignError::NonConverged(_) => EXIT_NOT_CONVERGED,
        DesignError::NoClosedForm { .. } => EXIT_NO_CLOSED_FORM,
    }
}

/// Parses arguments, runs the selected command, and returns the process
/// exit code. Parse failures exit 1; --help/--version exit 0.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Optimize {
            problem,
            out,
            seed,
            grid,
            tol,
            k,
        } => cmd_optimize(problem, out.as_deref(), *seed, *grid, *tol, *k),
        Command::Minimal { problem, out } => cmd_minimal(problem, out.as_deref()),
        Command::Verify {
            problem,
            design,
            out,
            grid,
            tol,
            curve,
        } => cmd_verify(problem, design, out.as_deref(), *grid, *tol, curve.as_deref()),
        Command::Efficiency {
            problem,
            design,
            reference,
            out,
        } => cmd_efficiency(problem, design, reference, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
