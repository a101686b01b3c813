//! `qcsys` command line: reads a family file, runs one analysis and writes a
//! JSON report.
//!
//! Exit codes: 0 when the analysis completed (whatever its verdict), 1 for
//! usage and I/O errors, 2 when the input or parameters fail validation.

mod number;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use qcsys::classify::{classify, instability_profile, VerdictStatus};
use qcsys::families::{desync_family, desync_qcm_bound, vertex_family, vertex_qcm_bound, BoundReport};
use qcsys::measures::{ovm_empirical_with, qcm, transient_bound_with, OvmEstimate};
use qcsys::reachability::qc_check;
use qcsys::robustness::{qcm_perturbation_check_seeded, PROBE_SEED};
use qcsys::{Error, FamilyDocument, Matrix, MatrixFamily, NormSpec, SystemSpec};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use number::sig17;

/// Horizon used by `ovm` and the instability diagnostic when `--horizon` is absent.
pub const DEFAULT_HORIZON: usize = 50;
/// Probe points per `perturb` run.
pub const PERTURB_PROBES: usize = 50;
/// Starting points sampled by the instability diagnostic.
const INSTABILITY_SAMPLES: usize = 32;
const THREADS_VAR: &str = "ANALYZER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qcsys", version, about = "Analyze discrete-time switched linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Horizon s of the quasi-controllability measure.
    #[arg(long, global = true)]
    s: Option<usize>,
    /// Product depth for stability classification.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Overshoot horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Sphere grid pitch; must be 1/m for a positive integer m.
    #[arg(long, global = true)]
    mesh: Option<f64>,
    #[arg(long, global = true, value_enum)]
    norm: Option<NormArg>,
    /// Seed for diagnostic random probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the overshoot profile here as CSV.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    Linf,
}

impl From<NormArg> for NormSpec {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L1 => NormSpec::L1,
            NormArg::Linf => NormSpec::Linf,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide quasi-controllability.
    Check { file: PathBuf },
    /// Estimate the quasi-controllability measure.
    Qcm { file: PathBuf },
    /// Overshoot over a finite horizon.
    Ovm { file: PathBuf },
    /// Certified overshoot bound for a stable family.
    Bound { file: PathBuf },
    /// Stable, unstable or marginal.
    Classify { file: PathBuf },
    /// Desynchronized family of a single base matrix, with its measure bound.
    Desync { file: PathBuf },
    /// Vertex family of a single base matrix, with its measure bound.
    Vertex { file: PathBuf },
    /// Compare the measure of a family with that of the family plus `deltas`.
    Perturb { file: PathBuf, deltas: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Qcm { .. } => "qcm",
            Command::Ovm { .. } => "ovm",
            Command::Bound { .. } => "bound",
            Command::Classify { .. } => "classify",
            Command::Desync { .. } => "desync",
            Command::Vertex { .. } => "vertex",
            Command::Perturb { .. } => "perturb",
        }
    }

    fn file(&self) -> &Path {
        match self {
            Command::Check { file }
            | Command::Qcm { file }
            | Command::Ovm { file }
            | Command::Bound { file }
            | Command::Classify { file }
            | Command::Desync { file }
            | Command::Vertex { file }
            | Command::Perturb { file, .. } => file,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub command: String,
    /// SHA-256 of the input file bytes (both files, in order, for `perturb`).
    pub input_digest: String,
    pub parameters: Value,
    pub results: Value,
    pub warnings: Vec<String>,
    pub wall_time_ms: u64,
}

enum Failure {
    Io(String),
    Invalid(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Invalid(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Invalid(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

/// Runs the tool with real standard output and error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Runs the tool, writing the report to `out` and diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let shown = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(shown.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(shown.as_bytes());
                    1
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

/// Accepts a family file, or a report from `desync`/`vertex` whose results
/// carry the generated family.
fn load_spec(bytes: &[u8]) -> Result<SystemSpec, Failure> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Syntax(e.to_string()))?;
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
    if value.get("command").is_some() {
        if let Some(family) = value.pointer_mut("/results/family") {
            value = family.take();
        }
    }
    let doc: FamilyDocument =
        serde_json::from_value(value).map_err(|e| Error::Syntax(e.to_string()))?;
    Ok(doc.into_spec()?)
}

fn configure_threads(warnings: &mut Vec<String>) {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // Only the first call in a process can set the pool size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => warnings.push(format!("ignoring {THREADS_VAR}={raw:?}: expected a positive integer")),
    }
}

fn single_base(spec: &SystemSpec) -> Result<Matrix, Failure> {
    match spec.family.members() {
        [a] => Ok(a.clone()),
        ms => Err(Failure::Invalid(format!(
            "expected exactly one base matrix, found {}",
            ms.len()
        ))),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("analysis results always serialize")
}

fn family_result(family: &MatrixFamily, norm: NormSpec, bound: qcsys::Result<BoundReport>, warnings: &mut Vec<String>) -> Value {
    let bound = match bound {
        Ok(b) => to_value(&b),
        Err(e) => {
            warnings.push(format!("no analytic bound: {e}"));
            Value::Null
        }
    };
    json!({
        "family": to_value(&FamilyDocument::from_family(family, norm)),
        "bound": bound,
    })
}

fn write_csv(path: &Path, ovm: &OvmEstimate) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t", "max_norm", "word"]).map_err(io)?;
    for row in &ovm.profile {
        let word = row.word.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        w.write_record([row.t.to_string(), sig17(row.max_norm), word]).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let started = Instant::now();
    let mut warnings = Vec::new();
    configure_threads(&mut warnings);

    let bytes = read(cli.command.file())?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let mut spec = load_spec(&bytes)?;
    let deltas = match &cli.command {
        Command::Perturb { deltas, .. } => {
            let extra = read(deltas)?;
            hasher.update(&extra);
            Some(load_spec(&extra)?.family)
        }
        _ => None,
    };
    let input_digest = hex::encode(hasher.finalize());

    if let Some(n) = cli.norm {
        spec.norm = n.into();
    }
    if let Some(s) = cli.s {
        spec.horizon_s = s;
    }
    if let Some(d) = cli.depth {
        spec.product_depth = d;
    }
    if let Some(m) = cli.mesh {
        spec.sphere_mesh = m;
    }
    spec.validate()?;
    let horizon = cli.horizon.unwrap_or(DEFAULT_HORIZON);
    let seed = cli.seed.unwrap_or(PROBE_SEED);
    if cli.csv.is_some() && !matches!(cli.command, Command::Ovm { .. }) {
        warnings.push("--csv applies only to ovm and was ignored".into());
    }

    let f = &spec.family;
    let n = spec.norm;
    let tol = &spec.tolerances;
    let results = match &cli.command {
        Command::Check { .. } => to_value(&qc_check(f, &spec)?),
        Command::Qcm { .. } => {
            let e = qcm(f, spec.horizon_s, n, spec.sphere_mesh, tol)?;
            json!({
                "s": e.s,
                "certified_lower": e.certified_lower,
                "empirical_inf": e.empirical_inf,
                "argmin": e.argmin_point.as_slice(),
                "mesh": e.mesh,
                "lipschitz_m": e.lipschitz_m,
                "covering_radius": e.covering_radius,
                "grid_points": e.grid_points,
            })
        }
        Command::Ovm { .. } => {
            let e = ovm_empirical_with(f, horizon, n, tol.dedup_tol)?;
            if let Some(path) = &cli.csv {
                write_csv(path, &e)?;
            }
            to_value(&e)
        }
        Command::Bound { .. } => {
            let verdict = classify(f, &spec)?;
            let certificate = to_value(&verdict);
            match transient_bound_with(f, &spec, verdict) {
                Ok(b) => json!({
                    "applicable": true,
                    "reason": null,
                    "bound": b.bound,
                    "qcm_lower": b.qcm_lower,
                    "qcm": to_value(&b.qcm),
                    "stability_certificate": certificate,
                }),
                Err(e @ (Error::NotApplicable(_) | Error::DegenerateMeasure)) => json!({
                    "applicable": false,
                    "reason": e.to_string(),
                    "bound": null,
                    "qcm_lower": null,
                    "qcm": null,
                    "stability_certificate": certificate,
                }),
                Err(e) => return Err(e.into()),
            }
        }
        Command::Classify { .. } => {
            let verdict = classify(f, &spec)?;
            let growing = matches!(
                verdict.status,
                VerdictStatus::AbsolutelyExponentiallyUnstable | VerdictStatus::Inconclusive
            );
            let profile = if growing {
                match instability_profile(f, horizon, INSTABILITY_SAMPLES, n, seed) {
                    Ok(p) => to_value(&p),
                    Err(e) => {
                        warnings.push(format!("no instability profile: {e}"));
                        Value::Null
                    }
                }
            } else {
                Value::Null
            };
            json!({ "verdict": to_value(&verdict), "instability_profile": profile })
        }
        Command::Desync { .. } => {
            let a = single_base(&spec)?;
            family_result(&desync_family(&a)?, n, desync_qcm_bound(&a, n), &mut warnings)
        }
        Command::Vertex { .. } => {
            let a = single_base(&spec)?;
            family_result(&vertex_family(&a)?, n, vertex_qcm_bound(&a, n), &mut warnings)
        }
        Command::Perturb { .. } => {
            let deltas = deltas.expect("loaded above");
            if deltas.dimension() != f.dimension() || deltas.len() != f.len() {
                return Err(Failure::Invalid(format!(
                    "deltas must be {} matrices of size {}",
                    f.len(),
                    f.dimension()
                )));
            }
            to_value(&qcm_perturbation_check_seeded(f, deltas.members(), &spec, PERTURB_PROBES, seed)?)
        }
    };

    let t = &spec.tolerances;
    let parameters = json!({
        "dimension": f.dimension(),
        "members": f.len(),
        "norm": n.name(),
        "horizon_s": spec.horizon_s,
        "product_depth": spec.product_depth,
        "sphere_mesh": spec.sphere_mesh,
        "horizon": horizon,
        "seed": seed,
        "tolerances": {"rank_tol": t.rank_tol, "dedup_tol": t.dedup_tol, "lp_tol": t.lp_tol},
    });
    let report = AnalysisReport {
        command: cli.command.name().into(),
        input_digest,
        parameters,
        results,
        warnings,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    let mut text = number::to_json(&report);
    text.push('\n');
    match &cli.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("cannot write report: {e}"))),
    }
}
