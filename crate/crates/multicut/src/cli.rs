//! Command line front end: build, evaluate, validate, sweep, invert.
//!
//! Reports go out as JSON, point evaluations as CSV. Exit codes are stable
//! so scripts can branch on them: 0 success, 1 bad input or I/O, 2 a
//! validation run whose residuals missed the threshold, 3 a solver failure
//! (quadrature, inversion, or an evaluation that cannot be completed).

use crate::config::{BuildReport, InvertReport, ProblemConfig, SweepReport, ValidationReport};
use crate::parametrix::{boundedness_sweep, ParametrixMatrix, SweepOptions};
use crate::surface::{Side, SurfaceConfig};
use crate::{C64, Error, Result};
use clap::{Args as ClapArgs, Parser, Subcommand};
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "multicut",
    version,
    about = "Explicit 2x2 matrix solution of the model jump problem on a multi-interval support"
)]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Construct the matrix and report the divisor, periods, and phases.
    Build(ProblemArgs),
    /// Evaluate the matrix on point grids and write CSV.
    Eval(EvalArgs),
    /// Sample every jump relation and judge residuals against a threshold.
    Validate(ValidateArgs),
    /// Sweep the degree and compare against the phase-torus envelope.
    Sweep(SweepArgs),
    /// Solve the period problem only; no matrix evaluations.
    Invert(ProblemArgs),
}

#[derive(ClapArgs)]
pub struct ProblemArgs {
    /// Problem description file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ClapArgs)]
pub struct EvalArgs {
    /// Problem description file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Grid spec; repeatable. circle:r=3,n=64 | line:from=-2+1i,to=2+1i,n=50
    /// | cut:index=1,n=20,side=above | gap:index=1,n=20,side=below
    #[arg(long, required = true)]
    pub grid: Vec<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ClapArgs)]
pub struct ValidateArgs {
    /// Problem description file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Samples per interval and per check family.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Seed for the sample points.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Residual threshold; defaults to the file's validation tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ClapArgs)]
pub struct SweepArgs {
    /// Problem description file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Largest degree to test.
    #[arg(long, default_value_t = 20)]
    pub n_max: i64,
    /// Phase grid points per torus dimension for the envelope.
    #[arg(long, default_value_t = 12)]
    pub grid: usize,
    /// Excluded-disk radius around each branch point.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One family of evaluation points.
#[derive(Clone, Debug, PartialEq)]
pub enum GridSpec {
    Circle { r: f64, n: usize },
    Line { from: C64, to: C64, n: usize },
    Cut { index: usize, n: usize, side: Side },
    Gap { index: usize, n: usize, side: Side },
}

fn bad(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

fn parse_pairs(rest: &str) -> Result<Vec<(&str, &str)>> {
    rest.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| bad(format!("grid: expected key=value, got '{kv}'")))
        })
        .collect()
}

fn lookup<'a>(pairs: &[(&'a str, &'a str)], kind: &str, keys: &[&str]) -> Result<Vec<&'a str>> {
    for (k, _) in pairs {
        if !keys.contains(k) {
            return Err(bad(format!("grid: unknown key '{k}' for {kind}")));
        }
    }
    keys.iter()
        .map(|want| {
            pairs
                .iter()
                .find(|(k, _)| k == want)
                .map(|(_, v)| *v)
                .ok_or_else(|| bad(format!("grid: {kind} needs {want}=")))
        })
        .collect()
}

fn parse_side(text: &str) -> Result<Side> {
    match text {
        "above" => Ok(Side::Above),
        "below" => Ok(Side::Below),
        other => Err(bad(format!("grid: side must be above or below, got '{other}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| bad(format!("grid: cannot parse {what} from '{text}'")))
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<GridSpec> {
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| bad(format!("grid: expected kind:key=value,..., got '{text}'")))?;
        let pairs = parse_pairs(rest)?;
        let spec = match kind {
            "circle" => {
                let v = lookup(&pairs, kind, &["r", "n"])?;
                GridSpec::Circle {
                    r: parse_num(v[0], "r")?,
                    n: parse_num(v[1], "n")?,
                }
            }
            "line" => {
                let v = lookup(&pairs, kind, &["from", "to", "n"])?;
                GridSpec::Line {
                    from: parse_num(v[0], "from")?,
                    to: parse_num(v[1], "to")?,
                    n: parse_num(v[2], "n")?,
                }
            }
            "cut" => {
                let v = lookup(&pairs, kind, &["index", "n", "side"])?;
                GridSpec::Cut {
                    index: parse_num(v[0], "index")?,
                    n: parse_num(v[1], "n")?,
                    side: parse_side(v[2])?,
                }
            }
            "gap" => {
                let v = lookup(&pairs, kind, &["index", "n", "side"])?;
                GridSpec::Gap {
                    index: parse_num(v[0], "index")?,
                    n: parse_num(v[1], "n")?,
                    side: parse_side(v[2])?,
                }
            }
            other => {
                return Err(bad(format!(
                    "grid: unknown kind '{other}', expected circle, line, cut, or gap"
                )))
            }
        };
        spec.checked()
    }

    fn checked(self) -> Result<GridSpec> {
        let n = match &self {
            GridSpec::Circle { r, n } => {
                if !(*r > 0.0 && r.is_finite()) {
                    return Err(bad(format!("grid: circle radius must be positive, got {r}")));
                }
                *n
            }
            GridSpec::Line { n, .. } => *n,
            GridSpec::Cut { n, .. } | GridSpec::Gap { n, .. } => *n,
        };
        if n == 0 {
            return Err(bad("grid: n must be at least 1".into()));
        }
        Ok(self)
    }

    /// Concrete points with their side tags. Interval interiors are sampled
    /// at midpoint offsets so no point lands on a branch point.
    pub fn points(&self, config: &SurfaceConfig) -> Result<Vec<(C64, Option<Side>)>> {
        let interior = |lo: f64, hi: f64, n: usize, side: Side| {
            (0..n)
                .map(|k| {
                    let x = lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
                    (C64::new(x, 0.0), Some(side))
                })
                .collect::<Vec<_>>()
        };
        Ok(match self {
            GridSpec::Circle { r, n } => (0..*n)
                .map(|k| {
                    let phi = TAU * (k as f64 + 0.5) / *n as f64;
                    (C64::from_polar(*r, phi), None)
                })
                .collect(),
            GridSpec::Line { from, to, n } => (0..*n)
                .map(|k| {
                    let t = if *n == 1 {
                        0.5
                    } else {
                        k as f64 / (*n as f64 - 1.0)
                    };
                    (from + (to - from) * t, None)
                })
                .collect(),
            GridSpec::Cut { index, n, side } => {
                if *index == 0 || *index > config.n_cuts() {
                    return Err(bad(format!(
                        "grid: cut index {index} out of range 1..={}",
                        config.n_cuts()
                    )));
                }
                let (a, b) = config.cut(*index);
                interior(a, b, *n, *side)
            }
            GridSpec::Gap { index, n, side } => {
                if *index == 0 || *index > config.genus() {
                    return Err(bad(format!(
                        "grid: gap index {index} out of range 1..={}",
                        config.genus()
                    )));
                }
                let (lo, hi) = config.gap(*index);
                interior(lo, hi, *n, *side)
            }
        })
    }
}

fn csv_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:e}")
    }
}

const CSV_HEADER: &str =
    "re_z,im_z,side,m11_re,m11_im,m12_re,m12_im,m21_re,m21_im,m22_re,m22_im,det_dev";

/// Off the support the two boundary values agree, so an untagged real point
/// there can be evaluated from either half-plane.
fn effective_side(config: &SurfaceConfig, z: C64, side: Option<Side>) -> Option<Side> {
    if side.is_some() || z.im != 0.0 {
        return side;
    }
    let (lo, hi) = config.span();
    if z.re < lo || z.re > hi {
        Some(Side::Above)
    } else {
        side
    }
}

/// CSV rows for the given points; points the matrix cannot be evaluated at
/// (poles, untagged support points) are skipped with a note on stderr.
fn eval_csv(m: &ParametrixMatrix, points: &[(C64, Option<Side>)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (z, side) in points {
        let eff = effective_side(m.config(), *z, *side);
        let mat = match m.eval(*z, eff) {
            Ok(mat) => mat,
            Err(e) => {
                eprintln!("skipping z = {z}: {e}");
                continue;
            }
        };
        let det = mat[(0, 0)] * mat[(1, 1)] - mat[(0, 1)] * mat[(1, 0)];
        let side_text = match side {
            Some(Side::Above) => "above",
            Some(Side::Below) => "below",
            None => "",
        };
        let mut fields = vec![csv_num(z.re), csv_num(z.im), side_text.to_string()];
        for r in 0..2 {
            for c in 0..2 {
                fields.push(csv_num(mat[(r, c)].re));
                fields.push(csv_num(mat[(r, c)].im));
            }
        }
        fields.push(csv_num((det - 1.0).norm()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    let newline = if text.ends_with('\n') { "" } else { "\n" };
    match out {
        Some(path) => std::fs::write(path, format!("{text}{newline}"))
            .map_err(|e| bad(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match write!(stdout, "{text}{newline}") {
                Ok(()) => Ok(()),
                // A closed pipe downstream is not our failure.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                Err(e) => Err(bad(format!("stdout: {e}"))),
            }
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::ContractViolation(format!("report serialization: {e}")))
}

fn build_cmd(args: &ProblemArgs) -> Result<i32> {
    let cfg = ProblemConfig::from_path(&args.config)?;
    let start = Instant::now();
    let m = cfg.build()?;
    let report = BuildReport::new(&m, start.elapsed().as_millis());
    emit(args.out.as_ref(), &to_json(&report)?)?;
    Ok(0)
}

fn invert_cmd(args: &ProblemArgs) -> Result<i32> {
    let cfg = ProblemConfig::from_path(&args.config)?;
    let start = Instant::now();
    let m = cfg.build()?;
    let report = InvertReport::new(&m, start.elapsed().as_millis());
    emit(args.out.as_ref(), &to_json(&report)?)?;
    Ok(0)
}

fn eval_cmd(args: &EvalArgs) -> Result<i32> {
    let cfg = ProblemConfig::from_path(&args.config)?;
    let surface = cfg.surface()?;
    let mut points = Vec::new();
    for text in &args.grid {
        points.extend(GridSpec::parse(text)?.points(&surface)?);
    }
    let m = cfg.build()?;
    emit(args.out.as_ref(), &eval_csv(&m, &points))?;
    Ok(0)
}

fn validate_cmd(args: &ValidateArgs) -> Result<i32> {
    let cfg = ProblemConfig::from_path(&args.config)?;
    let threshold = args.tol.unwrap_or(cfg.tolerances.validation);
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(bad(format!("threshold must be positive, got {threshold}")));
    }
    let start = Instant::now();
    let m = cfg.build()?;
    let residuals = m.validate(args.samples, args.seed)?;
    let report = ValidationReport::new(residuals, threshold, start.elapsed().as_millis());
    let passed = report.passed;
    emit(args.out.as_ref(), &to_json(&report)?)?;
    Ok(if passed { 0 } else { 2 })
}

fn sweep_cmd(args: &SweepArgs) -> Result<i32> {
    let cfg = ProblemConfig::from_path(&args.config)?;
    let surface = cfg.surface()?;
    let opts = SweepOptions {
        n_max: args.n_max,
        grid: args.grid,
        eps: args.eps,
        quad_tol: cfg.tolerances.quadrature(),
        newton_tol: cfg.tolerances.newton,
    };
    let start = Instant::now();
    let record = boundedness_sweep(&surface, &cfg.alpha, &opts)?;
    let report = SweepReport {
        cuts: cfg.cuts.clone(),
        alpha: cfg.alpha.clone(),
        record,
        timing_ms: start.elapsed().as_millis(),
    };
    emit(args.out.as_ref(), &to_json(&report)?)?;
    Ok(0)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 1,
        _ => 3,
    }
}

/// Runs one parsed command and returns the process exit code.
pub fn run(args: Args) -> i32 {
    let outcome = match &args.command {
        Command::Build(a) => build_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Invert(a) => invert_cmd(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cut_surface() -> SurfaceConfig {
        SurfaceConfig::new(vec![[-2.0, -1.0], [1.0, 2.0]]).unwrap()
    }

    #[test]
    fn grid_specs_parse_and_sample() {
        let surface = two_cut_surface();

        let circle = GridSpec::parse("circle:r=3,n=8").unwrap();
        let pts = circle.points(&surface).unwrap();
        assert_eq!(pts.len(), 8);
        for (z, side) in &pts {
            assert!((z.norm() - 3.0).abs() < 1e-12);
            assert!(z.im != 0.0, "circle point {z} landed on the axis");
            assert!(side.is_none());
        }

        let line = GridSpec::parse("line:from=-3+0.5i,to=3+0.5i,n=5").unwrap();
        let pts = line.points(&surface).unwrap();
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[0].0, C64::new(-3.0, 0.5));
        assert_eq!(pts[4].0, C64::new(3.0, 0.5));

        let cut = GridSpec::parse("cut:index=2,n=4,side=below").unwrap();
        for (z, side) in cut.points(&surface).unwrap() {
            assert!(z.re > 1.0 && z.re < 2.0 && z.im == 0.0);
            assert_eq!(*side.as_ref().unwrap(), Side::Below);
        }

        let gap = GridSpec::parse("gap:index=1,n=3,side=above").unwrap();
        for (z, _) in gap.points(&surface).unwrap() {
            assert!(z.re > -1.0 && z.re < 1.0);
        }
    }

    #[test]
    fn bad_grid_specs_are_refused() {
        let surface = two_cut_surface();
        for text in [
            "circle",
            "circle:r=3",
            "circle:r=-1,n=8",
            "circle:r=2,n=0",
            "circle:r=2,n=8,extra=1",
            "ring:r=2,n=8",
            "cut:index=1,n=4,side=left",
            "line:from=zzz,to=1,n=2",
        ] {
            assert!(GridSpec::parse(text).is_err(), "accepted: {text}");
        }
        let out_of_range = GridSpec::parse("cut:index=3,n=4,side=above").unwrap();
        assert!(out_of_range.points(&surface).is_err());
        let no_such_gap = GridSpec::parse("gap:index=2,n=4,side=above").unwrap();
        assert!(no_such_gap.points(&surface).is_err());
    }

    #[test]
    fn csv_formatting_is_exact_for_zero() {
        assert_eq!(csv_num(0.0), "0");
        assert_eq!(csv_num(1.5), "1.5e0");
        assert_eq!(csv_num(-2.5e-13), "-2.5e-13");
    }
}
