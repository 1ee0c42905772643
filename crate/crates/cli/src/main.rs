use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cpvquad::acceptance::{self, CriterionResult, CRITERIA};
use cpvquad::approx::best_approx_ladder;
use cpvquad::cache::write_atomic;
use cpvquad::cpv::{cpv_eval, CpvOptions};
use cpvquad::mrs::solve_mrs;
use cpvquad::orthopoly::{cached_table, pn_diagnostics, RecurrenceTable, DEFAULT_N_MAX, MAX_N};
use cpvquad::quadrature::{
    build_rule, convergence_study, error_bound, BoundOptions, ConvergenceRow, StudyPoint,
};
use cpvquad::second_kind::{qn_prime_study, qn_sup_study, QnEvaluator};
use cpvquad::{Builtin, Error, WeightSpec};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "cpvquad", version, about = "Principal value quadrature for exponential weights")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Weight, e.g. `freud:alpha=2,beta=2`, `iterexp:l=1,k=1,alpha=2,beta=2`, `pollaczek:alpha=1,beta=1`
    #[arg(long, global = true, default_value = "freud:alpha=2,beta=2")]
    weight: String,
    /// Working digits of the recurrence coefficient computation
    #[arg(long, global = true, default_value_t = 64)]
    precision_digits: u32,
    /// Absolute tolerance of principal value integrals
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_abs: f64,
    /// Relative tolerance of principal value integrals
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_rel: f64,
    /// Seed for randomized checks
    #[arg(long, global = true, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,
    /// Output file (stdout when absent); a directory for `reproduce-all`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mhaskar-Rakhmanov-Saff numbers as CSV
    Mrs {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// Product rule nodes and weights at `x` as JSON
    Rule {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
    },
    /// Principal value integral of `f w²` at `x` as JSON
    Cpv {
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long)]
        f: String,
    },
    /// Function of the second kind `q_n` as CSV
    Qn {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
    },
    /// Weighted minimax proxy for a ladder of degrees as CSV
    Approx {
        #[arg(long)]
        f: String,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Grid points (at least 20 times the largest degree)
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Rule value, oracle, error and a-priori bound at one point as JSON
    Eval {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long)]
        f: String,
    },
    /// Studies over a ladder of degrees
    #[command(subcommand)]
    Study(Study),
    /// Run every acceptance criterion and write a manifest into the `--out` directory
    ReproduceAll {
        /// Run only these criteria
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

#[derive(Subcommand)]
enum Study {
    /// Rule error against the oracle and the a-priori bound as CSV
    Converge {
        #[arg(long)]
        f: String,
        /// Points; `half` stands for `a_{n/2}`
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_parser = parse_point, required = true)]
        x: Vec<StudyPoint>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Approximation grid points per degree
        #[arg(long, default_value_t = 20)]
        grid_factor: usize,
    },
    /// Normalized `sup |q_n|` as JSON
    QnSup {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// Regional sups of `|q_n'|` as CSV
    QnPrime {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        xi: f64,
    },
    /// Normalized statistics of `p_n` as JSON
    DiagPn {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        grid_points: usize,
    },
}

fn parse_point(s: &str) -> std::result::Result<StudyPoint, String> {
    if s == "half" {
        return Ok(StudyPoint::HalfMrs);
    }
    s.parse::<f64>()
        .map(StudyPoint::Fixed)
        .map_err(|_| format!("`{s}` is neither a number nor `half`"))
}

struct Ctx {
    spec: WeightSpec,
    digits: u32,
    cpv: CpvOptions,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn table(&self, n: usize) -> Result<Arc<RecurrenceTable>> {
        if n + 24 > MAX_N {
            return Err(Error::Degree { degree: n, max: MAX_N - 24 }.into());
        }
        Ok(cached_table(&self.spec, DEFAULT_N_MAX.max(n + 24), self.digits)?)
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(&text)
    }

    fn emit_csv<T: Serialize>(&self, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        self.emit(&String::from_utf8(w.into_inner()?)?)
    }
}

fn integrand(name: &str) -> Result<Builtin> {
    Ok(name.parse::<Builtin>()?)
}

fn summary(line: String) {
    eprintln!("{line}");
}

#[derive(Serialize)]
struct QnRow {
    x: f64,
    qn: f64,
    method: String,
}

#[derive(Serialize)]
struct ApproxRow {
    n: usize,
    e_proxy: f64,
    alternations: usize,
    iterations: usize,
    warning: bool,
}

#[derive(Serialize)]
struct ConvergeCsv {
    x: f64,
    n: usize,
    oracle: f64,
    oracle_error: f64,
    quadrature: f64,
    abs_error: f64,
    noise_floor: f64,
    e_proxy: f64,
    bound: f64,
    ratio: f64,
    region: &'static str,
}

impl From<&ConvergenceRow> for ConvergeCsv {
    fn from(r: &ConvergenceRow) -> Self {
        Self {
            x: r.x,
            n: r.n,
            oracle: r.oracle,
            oracle_error: r.oracle_error,
            quadrature: r.quadrature,
            abs_error: r.abs_error,
            noise_floor: r.noise_floor,
            e_proxy: r.e_proxy,
            bound: r.bound,
            ratio: r.ratio,
            region: r.region.label(),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let spec: WeightSpec = g.weight.parse()?;
    if !(g.tol_abs > 0.0 && g.tol_rel >= 0.0) {
        return Err(Error::Parameter("tolerances must be positive".into()).into());
    }
    let ctx = Ctx {
        spec,
        digits: g.precision_digits,
        cpv: CpvOptions::default().with_tolerances(g.tol_abs, g.tol_rel),
        seed: g.seed,
        out: g.out,
    };
    match cli.command {
        Command::Mrs { t } => {
            let rows = t
                .iter()
                .map(|&t| solve_mrs(&ctx.spec, t, g.tol_abs.min(1e-12)))
                .collect::<cpvquad::Result<Vec<_>>>()?;
            for r in &rows {
                summary(format!("t={} a_minus={:.12} a_plus={:.12}", r.t, r.a_minus, r.a_plus));
            }
            ctx.emit_csv(&rows)
        }
        Command::Rule { n, x } => {
            let ev = QnEvaluator::new(&ctx.spec, ctx.table(n)?, n)?;
            let rule = build_rule(&ev, x)?;
            summary(format!("n={n} x={x} q_n(x)={:.15e}", rule.qn_x));
            ctx.emit_json(&rule)
        }
        Command::Cpv { x, f } => {
            let f = integrand(&f)?;
            let v = cpv_eval(&ctx.spec, |t| f.eval(t), x, &ctx.cpv)?;
            summary(format!("cpv {f} at x={x}: {:.15e} ± {:.1e}", v.value, v.error_estimate));
            ctx.emit_json(&v)
        }
        Command::Qn { n, x } => {
            let ev = QnEvaluator::new(&ctx.spec, ctx.table(n)?, n)?;
            let mut rows = Vec::new();
            for &x in &x {
                let (qn, method) = ev.qn_with_method(x)?;
                summary(format!("n={n} x={x} q_n={qn:.15e} ({method:?})"));
                rows.push(QnRow { x, qn, method: format!("{method:?}") });
            }
            ctx.emit_csv(&rows)
        }
        Command::Approx { f, n, grid_points } => {
            let f = integrand(&f)?;
            let top = n.iter().copied().max().unwrap_or(1);
            let table = ctx.table(top)?;
            let grid = grid_points.unwrap_or(20 * top.max(1));
            let res = best_approx_ladder(&ctx.spec, &table, |t| f.eval(t), &n, grid)?;
            let rows: Vec<ApproxRow> = res
                .iter()
                .map(|r| ApproxRow {
                    n: r.n,
                    e_proxy: r.proxy,
                    alternations: r.alternations,
                    iterations: r.iterations,
                    warning: r.warning,
                })
                .collect();
            for r in &rows {
                summary(format!("n={} E={:.6e} alternations={}", r.n, r.e_proxy, r.alternations));
            }
            ctx.emit_csv(&rows)
        }
        Command::Eval { n, x, f } => {
            let f = integrand(&f)?;
            let table = ctx.table(n)?;
            let ev = QnEvaluator::new(&ctx.spec, table.clone(), n)?;
            let rule = build_rule(&ev, x)?;
            let value = rule.evaluate(|t| f.eval(t))?;
            let oracle = cpv_eval(&ctx.spec, |t| f.eval(t), x, &ctx.cpv)?;
            let e_proxy = cpvquad::approx::best_approx(&ctx.spec, &table, |t| f.eval(t), n - 1, 20 * n)?.proxy;
            let bound = error_bound(&ctx.spec, n, x, e_proxy, &BoundOptions::default())?;
            let abs_err = (value - oracle.value).abs();
            summary(format!("n={n} x={x} f={f}: Q_n={value:.15e} error={abs_err:.3e} bound={:.3e}", bound.total));
            ctx.emit_json(&json!({
                "weight": ctx.spec.to_string(),
                "n": n,
                "x": x,
                "f": f.name(),
                "qn_value": value,
                "oracle": oracle.value,
                "oracle_error": oracle.error_estimate,
                "abs_err": abs_err,
                "bound_report": bound,
            }))
        }
        Command::Study(study) => run_study(&ctx, study),
        Command::ReproduceAll { only } => reproduce_all(&ctx, &only),
    }
}

fn run_study(ctx: &Ctx, study: Study) -> Result<()> {
    match study {
        Study::Converge { f, x, n, grid_factor } => {
            let f = integrand(&f)?;
            let top = n.iter().copied().max().unwrap_or(2);
            if n.iter().any(|&k| k < 2) {
                return Err(Error::Parameter("convergence studies need n ≥ 2".into()).into());
            }
            let rows = convergence_study(&ctx.spec, ctx.table(top)?, |t| f.eval(t), &x, &n, grid_factor)?;
            for r in &rows {
                summary(format!(
                    "n={} x={:.6} error={:.3e} bound={:.3e} ratio={:.3e} region={}",
                    r.n,
                    r.x,
                    r.abs_error,
                    r.bound,
                    r.ratio,
                    r.region.label()
                ));
            }
            let rows: Vec<ConvergeCsv> = rows.iter().map(ConvergeCsv::from).collect();
            ctx.emit_csv(&rows)
        }
        Study::QnSup { n } => {
            let top = n.iter().copied().max().unwrap_or(2);
            let report = qn_sup_study(&ctx.spec, ctx.table(top)?, &n)?;
            for r in &report.rows {
                summary(format!("n={} sup={:.6e} normalized={:.4}", r.n, r.sup, r.normalized));
            }
            ctx.emit_json(&report)
        }
        Study::QnPrime { n, xi } => {
            let top = n.iter().copied().max().unwrap_or(2);
            let rows = qn_prime_study(&ctx.spec, ctx.table(top)?, &n, xi)?;
            for r in &rows {
                summary(format!(
                    "n={} inner={:.4} upper={:.4} lower={:.4}",
                    r.n, r.normalized_inner, r.normalized_upper, r.normalized_lower
                ));
            }
            ctx.emit_csv(&rows)
        }
        Study::DiagPn { n, grid_points } => {
            let top = n.iter().copied().max().unwrap_or(1);
            let table = ctx.table(top)?;
            let mut rows = Vec::new();
            for &k in &n {
                let d = pn_diagnostics(&ctx.spec, &table, k, grid_points)?;
                summary(format!(
                    "n={} edge_sup={:.4} spacing=[{:.3}, {:.3}] christoffel=[{:.3}, {:.3}]",
                    k, d.sup_pw_edge, d.spacing_band.0, d.spacing_band.1, d.christoffel_band.0, d.christoffel_band.1
                ));
                rows.push(d);
            }
            ctx.emit_json(&rows)
        }
    }
}

#[derive(Debug)]
struct CriteriaFailed(Vec<u32>);

impl std::fmt::Display for CriteriaFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "acceptance criteria failed: {:?}", self.0)
    }
}

impl std::error::Error for CriteriaFailed {}

fn fingerprint(seed: u64) -> serde_json::Value {
    json!({
        "package_version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "cpus": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        "debug_build": cfg!(debug_assertions),
        "cache_dir": cpvquad::cache::cache_dir().map(|p| p.display().to_string()),
        "seed": seed,
        "unix_time": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    })
}

fn reproduce_all(ctx: &Ctx, only: &[u32]) -> Result<()> {
    let Some(dir) = &ctx.out else {
        bail!(Error::Parameter("reproduce-all needs --out <directory>".into()));
    };
    for id in only {
        if !CRITERIA.iter().any(|(c, _)| c == id) {
            return Err(Error::Parameter(format!("unknown criterion {id}; valid ids are 1 to {}", CRITERIA.len())).into());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let start = Instant::now();
    let mut results: Vec<CriterionResult> = Vec::new();
    for &(id, _) in CRITERIA.iter().filter(|(id, _)| only.is_empty() || only.contains(id)) {
        let r = acceptance::run_criterion(id, ctx.seed);
        println!("{}", r.line());
        write_json(&dir.join(format!("criterion_{id:02}.json")), &r)?;
        results.push(r);
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let manifest = json!({
        "passed": failed.is_empty(),
        "seconds": start.elapsed().as_secs_f64(),
        "environment": fingerprint(ctx.seed),
        "criteria": results.iter().map(|r| json!({
            "id": r.id,
            "name": r.name,
            "passed": r.passed,
            "seconds": r.seconds,
            "summary": r.summary,
            "details_file": format!("criterion_{:02}.json", r.id),
        })).collect::<Vec<_>>(),
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CriteriaFailed(failed).into())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CriteriaFailed>().is_some() {
        return EXIT_NUMERICAL;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::Parameter(_)
            | Error::Parse { .. }
            | Error::Domain(_)
            | Error::Input(_)
            | Error::Degree { .. },
        ) => EXIT_VALIDATION,
        Some(
            Error::NoConvergence { .. }
            | Error::Precision { .. }
            | Error::Accuracy { .. }
            | Error::Orthonormality { .. }
            | Error::Eigen(_),
        ) => EXIT_NUMERICAL,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("half").unwrap(), StudyPoint::HalfMrs);
        assert_eq!(parse_point("-0.25").unwrap(), StudyPoint::Fixed(-0.25));
        assert!(parse_point("edge").is_err());
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Domain("x".into()).into()), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Accuracy { value: 0.0, error: 1.0, panels: 3 }.into()), EXIT_NUMERICAL);
        assert_eq!(exit_code(&CriteriaFailed(vec![2]).into()), EXIT_NUMERICAL);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }
}
