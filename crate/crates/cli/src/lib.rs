//! Command-line front end: seeded sampling, named checks and a JSON report.

mod suites;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;

use clap::{Args, Parser, Subcommand};
use ellipsoid_cr::classify::{classify, classify_samples, SampleTable};
use ellipsoid_cr::maps::parse_map;
use ellipsoid_cr::report::{all_pass, Check};
use ellipsoid_cr::{sample, CrError, Map, Point, Signature};
use serde::Serialize;
use serde_json::{json, Value};

pub use suites::*;

pub const SCHEMA: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: usize = 50;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "ellipsoid-cr", version, about = "Pseudohermitian invariants and CR maps of generalized ellipsoids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Curvature, torsion and Chern tensor: closed forms against differentiation.
    Invariants(Common),
    /// Curvature cone: definitional against structural membership.
    Cone(Common),
    /// CR conditions and CR factor of a map.
    VerifyMap(WithMap),
    /// Transformation laws of the pseudohermitian invariants under a map.
    LeeCheck(WithMap),
    /// Recovers the normal form of a map from evaluations only.
    Classify(ClassifyArgs),
    /// Every suite at once.
    Selftest(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Signature such as "m=2,3;n=2,2,1".
    #[arg(long)]
    signature: String,
    /// Single point as JSON, e.g. '{"z":[[1,0],[0,0],[0,0]],"t":0}'.
    #[arg(long)]
    point: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Number of random sample points.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Print the JSON report instead of the summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct WithMap {
    #[command(flatten)]
    common: Common,
    /// Map word such as "dil(r=2) . inv".
    #[arg(long)]
    map: String,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    signature: Option<String>,
    #[arg(long)]
    map: Option<String>,
    /// Tabulated point/image/Jacobian records (JSON) to classify.
    #[arg(long, conflicts_with = "map")]
    samples: Option<String>,
    /// Writes the tabulated records of `--map` to this path.
    #[arg(long, requires = "map")]
    emit_samples: Option<String>,
    /// Number of records written by `--emit-samples`.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    count: usize,
    #[arg(long)]
    point: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

/// Deterministic given the arguments and seed; timing is left out.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub signature: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub values: Value,
}

impl Report {
    fn new(command: &str, sig: &Signature, seed: u64, checks: Vec<Check>, values: Value) -> Self {
        let pass = all_pass(&checks);
        Self { schema: SCHEMA, command: command.to_string(), signature: sig.to_string(), seed, checks, pass, values }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} on {} (seed {})\n", self.command, self.signature, self.seed);
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "  [{}] {:width$}  {:.3e} <= {:.0e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.max_residual,
                c.tolerance
            );
        }
        if let Value::Object(map) = &self.values {
            for (k, v) in map {
                let _ = writeln!(s, "  {k}: {v}");
            }
        }
        let _ = write!(s, "{}", if self.pass { "all checks pass" } else { "some checks FAIL" });
        s
    }
}

/// What a run prints and its exit code.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<CrError> for Failure {
    fn from(e: CrError) -> Self {
        match e {
            CrError::InvalidSignature(_) | CrError::SyntaxError { .. } | CrError::InvalidParameter(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Compute(other.to_string()),
        }
    }
}

/// Runs one command line; the first item is the program name.
pub fn run<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            return if code == EXIT_PASS {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let json = cli_json(&cli.command);
    match dispatch(cli.command) {
        Ok(report) => Outcome {
            code: if report.pass { EXIT_PASS } else { EXIT_FAIL },
            stdout: if json { report.to_json() } else { report.summary() },
            stderr: String::new(),
        },
        Err(Failure::Usage(msg)) => Outcome { code: EXIT_USAGE, stdout: String::new(), stderr: format!("usage error: {msg}") },
        Err(Failure::Compute(msg)) => Outcome { code: EXIT_FAIL, stdout: String::new(), stderr: format!("error: {msg}") },
    }
}

fn cli_json(c: &Command) -> bool {
    match c {
        Command::Invariants(a) | Command::Cone(a) | Command::Selftest(a) => a.json,
        Command::VerifyMap(a) | Command::LeeCheck(a) => a.common.json,
        Command::Classify(a) => a.json,
    }
}

fn parse_signature(text: &str) -> Result<Signature, Failure> {
    text.parse().map_err(Failure::from)
}

fn parse_point(sig: &Signature, text: &str) -> Result<Point, Failure> {
    let p: Point = serde_json::from_str(text).map_err(|e| Failure::Usage(format!("--point: {e}")))?;
    if p.z.len() != sig.dim() {
        return Err(Failure::Usage(format!("--point has {} coordinates, signature needs {}", p.z.len(), sig.dim())));
    }
    p.check_admissible(sig)?;
    Ok(p)
}

fn parse_word(sig: &Signature, text: &str) -> Result<Map, Failure> {
    parse_map(text, sig).map_err(Failure::from)
}

/// The `--point` if given, else `samples` seeded random points.
fn sample_points(c: &Common, sig: &Signature) -> Result<Vec<Point>, Failure> {
    match &c.point {
        Some(text) => Ok(vec![parse_point(sig, text)?]),
        None => {
            if c.samples == 0 {
                return Err(Failure::Usage("--samples must be positive".into()));
            }
            let mut rng = sample::rng(c.seed);
            Ok((0..c.samples).map(|_| sample::point(sig, &mut rng)).collect())
        }
    }
}

fn dispatch(command: Command) -> Result<Report, Failure> {
    match command {
        Command::Invariants(c) => {
            let sig = parse_signature(&c.signature)?;
            let pts = sample_points(&c, &sig)?;
            let (checks, values) = invariant_suite(&sig, &pts)?;
            Ok(Report::new("invariants", &sig, c.seed, checks, values))
        }
        Command::Cone(c) => {
            let sig = parse_signature(&c.signature)?;
            let pts = sample_points(&c, &sig)?;
            let (checks, values) = cone_suite(&sig, &pts, c.seed)?;
            Ok(Report::new("cone", &sig, c.seed, checks, values))
        }
        Command::VerifyMap(a) => {
            let sig = parse_signature(&a.common.signature)?;
            let map = parse_word(&sig, &a.map)?;
            let pts = sample_points(&a.common, &sig)?;
            let (checks, values) = verify_map_suite(&map, &pts, a.common.seed)?;
            Ok(Report::new("verify-map", &sig, a.common.seed, checks, values))
        }
        Command::LeeCheck(a) => {
            let sig = parse_signature(&a.common.signature)?;
            let map = parse_word(&sig, &a.map)?;
            let pts = sample_points(&a.common, &sig)?;
            let (checks, values) = lee_suite(&map, &pts, a.common.seed)?;
            Ok(Report::new("lee-check", &sig, a.common.seed, checks, values))
        }
        Command::Classify(a) => classify_command(a),
        Command::Selftest(c) => {
            let sig = parse_signature(&c.signature)?;
            let pts = sample_points(&c, &sig)?;
            let (checks, values) = selftest_suite(&sig, &pts, c.seed)?;
            Ok(Report::new("selftest", &sig, c.seed, checks, values))
        }
    }
}

fn classify_command(a: ClassifyArgs) -> Result<Report, Failure> {
    if let Some(path) = &a.samples {
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("--samples {path}: {e}")))?;
        let table: SampleTable<f64> =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("--samples {path}: {e}")))?;
        if let Some(text) = &a.signature {
            if parse_signature(text)? != table.signature {
                return Err(Failure::Usage("--signature differs from the sample file".into()));
            }
        }
        let c = classify_samples(&table)?;
        let (checks, values) = classification_report(&table.signature, &c, None);
        return Ok(Report::new("classify", &table.signature, a.seed, checks, values));
    }
    let sig = parse_signature(a.signature.as_deref().ok_or_else(|| Failure::Usage("--signature is required".into()))?)?;
    let map = parse_word(&sig, a.map.as_deref().ok_or_else(|| Failure::Usage("either --map or --samples is required".into()))?)?;
    let mut rng = sample::rng(a.seed);
    if let Some(path) = &a.emit_samples {
        let pts: Vec<Point> = (0..a.count).map(|_| sample::point(&sig, &mut rng)).collect();
        let table = SampleTable::tabulate(&map, &pts)?;
        let text = serde_json::to_string_pretty(&table).expect("table serializes");
        fs::write(path, text).map_err(|e| Failure::Compute(format!("--emit-samples {path}: {e}")))?;
        let checks = vec![Check::flag("samples_written", true)];
        let values = json!({ "path": path, "count": a.count, "map": map.to_string() });
        return Ok(Report::new("classify", &sig, a.seed, checks, values));
    }
    let p0 = match &a.point {
        Some(text) => parse_point(&sig, text)?,
        None => sample::point(&sig, &mut rng),
    };
    let c = classify(&map, &p0, a.seed)?;
    let held_out: Vec<Point> = (0..DEFAULT_SAMPLES).map(|_| sample::point(&sig, &mut rng)).collect();
    let (checks, values) = classification_report(&sig, &c, Some((&map, &held_out)));
    Ok(Report::new("classify", &sig, a.seed, checks, values))
}
