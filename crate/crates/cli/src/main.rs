//! `bingham-kit` command-line interface.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 for numerical failure
//! (including failed acceptance criteria in `report`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bingham_kit::acceptance::{self, lambda_draws, random_params, random_unit};
use bingham_kit::distribution::{classify_symmetry, log_pdf, trace_indicator, DEFAULT_SYMMETRY_TOL};
use bingham_kit::io::{fmt12, fmt12_list, parse_list, read_quaternions, write_quaternions_csv, write_quaternions_jsonl};
use bingham_kit::loss::check::{check_instance, GradCheck, DEFAULT_STEP};
use bingham_kit::loss::{fit_mle, nll_from_params, nll_grad, OptimizerSettings};
use bingham_kit::normalizer::{convergence_check, Normalizer};
use bingham_kit::oracle::{certified_c, GridSpec, OracleCache, CERTIFY_TOL};
use bingham_kit::parametrization::realize;
use bingham_kit::sampler::{delta_q_summary, sample};
use bingham_kit::{BinghamError, BinghamParams, LossReport, ParamVector, QuadratureConfig, Repr, Result, UnitQuaternion};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "bingham-kit", version, about = "Bingham distributions on unit quaternions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalizing constant, its λ-gradient and quadrature diagnostics.
    Normconst {
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        /// JSON file with a `lambda` field (a distribution file works too).
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Log-density of each quaternion.
    Pdf {
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        common: Common,
    },
    /// NLL value and gradients for each ground-truth quaternion.
    Loss {
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Maximum relative error of analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, allow_hyphen_values = true)]
        qgt: Option<String>,
        /// Random instances to check when no distribution is given.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Draw samples; `.jsonl` output selects JSON lines, anything else CSV.
    Sample {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report ΔQ statistics against this rotation.
        #[arg(long, allow_hyphen_values = true)]
        qgt: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Maximum-likelihood fit to a quaternion dataset.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "P10")]
        repr: String,
        /// JSON optimizer settings (step, max_iters, tol, seed, warmup).
        #[arg(long)]
        optimizer: Option<PathBuf>,
        /// Overrides the optimizer seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Loss trace CSV; defaults to `<output>.trace.csv` when `--output` is set.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Symmetry class and trace indicator.
    Classify {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, default_value_t = DEFAULT_SYMMETRY_TOL)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance suite; writes a table to stdout and JSON to `--output`.
    Report {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long)]
        criteria: Option<String>,
        /// Oracle cache used for the oracle-agreement criterion.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value = "acceptance_report.json")]
        output: PathBuf,
    },
    /// Certify oracle values and write them as a JSON cache.
    OracleCache {
        /// A single λ; the reference set is used when omitted.
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        #[arg(long, default_value = "oracle_cache.json")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Quadrature settings as JSON; missing fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// One of `--dist`, `--lambda` (with `D = I`) or `--repr` with `--theta`.
#[derive(Args)]
struct DistArgs {
    /// Distribution JSON with `D` (rows) and `lambda`.
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    repr: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
}

/// Quaternions from `--input` (CSV or JSON lines) or a single `--qgt`.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    qgt: Option<String>,
}

enum Dist {
    Params(BinghamParams),
    Theta(ParamVector),
}

impl Dist {
    fn params(&self) -> Result<BinghamParams> {
        match self {
            Dist::Params(p) => Ok(p.clone()),
            Dist::Theta(t) => realize(t),
        }
    }
}

fn invalid(msg: impl Into<String>) -> BinghamError {
    BinghamError::InvalidParameter(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| BinghamError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| BinghamError::Parse {
        record: path.display().to_string(),
        field: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn quad_config(common: &Common) -> Result<QuadratureConfig> {
    let cfg = match &common.config {
        Some(p) => read_json(p)?,
        None => QuadratureConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_repr(tag: &str) -> Result<Repr> {
    tag.parse()
}

fn parse_quaternion(text: &str, what: &str) -> Result<UnitQuaternion> {
    let v = parse_list(text, 4, what)?;
    UnitQuaternion::new(bingham_kit::Quaternion::new(v[0], v[1], v[2], v[3]))
}

fn dist_from_args(a: &DistArgs) -> Result<Option<Dist>> {
    let given = [a.dist.is_some(), a.lambda.is_some(), a.repr.is_some() || a.theta.is_some()];
    match given.iter().filter(|g| **g).count() {
        0 => return Ok(None),
        1 => {}
        _ => return Err(invalid("give exactly one of --dist, --lambda, or --repr with --theta")),
    }
    if let Some(path) = &a.dist {
        return Ok(Some(Dist::Params(read_json(path)?)));
    }
    if let Some(l) = &a.lambda {
        let l = parse_list(l, 4, "--lambda")?;
        return Ok(Some(Dist::Params(BinghamParams::with_lambda(Vector4::from_column_slice(&l))?)));
    }
    let (Some(tag), Some(theta)) = (&a.repr, &a.theta) else {
        return Err(invalid("--repr and --theta must be given together"));
    };
    let repr = parse_repr(tag)?;
    let theta = parse_list(theta, repr.dim(), "--theta")?;
    Ok(Some(Dist::Theta(ParamVector::new(repr, theta)?)))
}

fn require_dist(a: &DistArgs) -> Result<Dist> {
    dist_from_args(a)?.ok_or_else(|| invalid("a distribution is required: --dist, --lambda, or --repr with --theta"))
}

fn quaternions(d: &DataArgs) -> Result<Vec<UnitQuaternion>> {
    match (&d.input, &d.qgt) {
        (Some(path), None) => read_quaternions(path),
        (None, Some(q)) => Ok(vec![parse_quaternion(q, "--qgt")?]),
        _ => Err(invalid("give exactly one of --input or --qgt")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| BinghamError::Io(format!("{}: {e}", path.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("values serialize") + "\n"
}

fn normconst(lambda: Option<String>, input: Option<PathBuf>, common: &Common) -> Result<()> {
    let cfg = quad_config(common)?;
    let lambda = match (lambda, input) {
        (Some(l), None) => parse_list(&l, 4, "--lambda")?,
        (None, Some(path)) => {
            let v: serde_json::Value = read_json(&path)?;
            let l = v.get("lambda").cloned().ok_or_else(|| BinghamError::Parse {
                record: path.display().to_string(),
                field: "lambda".into(),
                message: "missing".into(),
            })?;
            serde_json::from_value::<[f64; 4]>(l)
                .map_err(|e| BinghamError::Parse {
                    record: path.display().to_string(),
                    field: "lambda".into(),
                    message: e.to_string(),
                })?
                .to_vec()
        }
        _ => return Err(invalid("give exactly one of --lambda or --input")),
    };
    let lambda = Vector4::from_column_slice(&lambda);
    let out = Normalizer::new(cfg)?.evaluate(&lambda)?;
    let check = convergence_check(&lambda, &cfg)?;
    println!("C {}", fmt12(out.c));
    println!("dC_dlambda {}", fmt12_list(out.dc_dlambda.iter()));
    println!("imag_residual {}", fmt12(out.imag_residual));
    println!("convergence_check {}", fmt12(check));
    if let Some(path) = &common.output {
        let v = json!({
            "lambda": lambda.as_slice(),
            "C": out.c,
            "dC_dlambda": out.dc_dlambda.as_slice(),
            "imag_residual": out.imag_residual,
            "convergence_check": check,
        });
        write_text(path, &pretty(&v))?;
    }
    Ok(())
}

fn pdf(dist: &DistArgs, data: &DataArgs, common: &Common) -> Result<()> {
    let cfg = quad_config(common)?;
    let p = require_dist(dist)?.params()?;
    let c = Normalizer::new(cfg)?.evaluate(p.lambda())?.c;
    let values = quaternions(data)?
        .iter()
        .map(|q| log_pdf(&p, q, c))
        .collect::<Result<Vec<f64>>>()?;
    let text: String = values.iter().map(|v| fmt12(*v) + "\n").collect();
    match &common.output {
        Some(path) => write_text(path, &format!("log_pdf\n{text}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn loss(dist: &DistArgs, data: &DataArgs, common: &Common) -> Result<()> {
    let cfg = quad_config(common)?;
    let dist = require_dist(dist)?;
    let reports = quaternions(data)?
        .iter()
        .map(|q| match &dist {
            Dist::Params(p) => nll_grad(p, q, &cfg),
            Dist::Theta(t) => nll_from_params(t, q, &cfg),
        })
        .collect::<Result<Vec<LossReport>>>()?;
    for r in &reports {
        let mut line = format!("value {} grad_lambda {}", fmt12(r.value), fmt12_list(r.grad_lambda.iter()));
        if let Some(g) = &r.grad_theta {
            line += &format!(" grad_theta {}", fmt12_list(g.iter()));
        }
        if r.degenerate_eigenvalues {
            line += " degenerate_eigenvalues";
        }
        println!("{line}");
    }
    if let Some(path) = &common.output {
        let text: String = reports
            .iter()
            .map(|r| serde_json::to_string(r).expect("reports serialize") + "\n")
            .collect();
        write_text(path, &text)?;
    }
    Ok(())
}

fn gradcheck(dist: &DistArgs, qgt: Option<String>, n: usize, seed: u64, step: f64, common: &Common) -> Result<()> {
    let cfg = quad_config(common)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid(format!("--step must be positive, got {step}")));
    }
    let instances: Vec<(BinghamParams, UnitQuaternion)> = match dist_from_args(dist)? {
        Some(d) => {
            let q = qgt.ok_or_else(|| invalid("--qgt is required with a given distribution"))?;
            vec![(d.params()?, parse_quaternion(&q, "--qgt")?)]
        }
        None => {
            if n == 0 {
                return Err(invalid("--n must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| (random_params(&mut rng), random_unit(&mut rng))).collect()
        }
    };
    let mut worst: Option<GradCheck> = None;
    for (p, q) in &instances {
        let c = check_instance(p, q, &cfg, step)?;
        worst = Some(match worst {
            Some(w) => w.merge(&c),
            None => c,
        });
    }
    let w = worst.expect("at least one instance");
    println!("instances {}", instances.len());
    println!("grad_lambda {}", fmt12(w.lambda));
    println!("grad_D {}", fmt12(w.d));
    println!("grad_A {}", fmt12(w.a));
    for (repr, e) in &w.theta {
        println!("grad_theta[{repr}] {}", fmt12(*e));
    }
    println!("lambda_sum {}", fmt12(w.lambda_sum));
    println!("max {}", fmt12(w.max_error()));
    if let Some(path) = &common.output {
        write_text(path, &pretty(&w))?;
    }
    Ok(())
}

fn sample_cmd(dist: &DistArgs, n: usize, seed: u64, qgt: Option<String>, common: &Common) -> Result<()> {
    let p = require_dist(dist)?.params()?;
    let batch = sample(&p, n, seed)?;
    let jsonl = common
        .output
        .as_ref()
        .and_then(|o| o.extension())
        .is_some_and(|e| e == "jsonl" || e == "json");
    let mut buf = Vec::new();
    if jsonl {
        write_quaternions_jsonl(&mut buf, &batch.quaternions)?;
    } else {
        write_quaternions_csv(&mut buf, &batch.quaternions)?;
    }
    let mut summary = vec![format!("acceptance_rate {}", fmt12(batch.acceptance_rate))];
    if let Some(q) = qgt {
        let stats = delta_q_summary(&batch.quaternions, &parse_quaternion(&q, "--qgt")?);
        summary.push(format!("delta_q_mean {}", fmt12(stats.mean)));
        summary.push(format!("delta_q_std_error {}", fmt12(stats.std_error)));
        let counts: Vec<String> = stats.histogram.counts.iter().map(|c| c.to_string()).collect();
        summary.push(format!("delta_q_histogram {}", counts.join(",")));
    }
    match &common.output {
        Some(path) => {
            fs::write(path, &buf).map_err(|e| BinghamError::Io(format!("{}: {e}", path.display())))?;
            summary.iter().for_each(|s| println!("{s}"));
        }
        None => {
            std::io::stdout().write_all(&buf)?;
            summary.iter().for_each(|s| eprintln!("{s}"));
        }
    }
    Ok(())
}

fn fit(
    input: &Path,
    repr: &str,
    optimizer: Option<PathBuf>,
    seed: Option<u64>,
    trace: Option<PathBuf>,
    common: &Common,
) -> Result<()> {
    let cfg = quad_config(common)?;
    let repr = parse_repr(repr)?;
    let mut opt: OptimizerSettings = match &optimizer {
        Some(p) => read_json(p)?,
        None => OptimizerSettings::default(),
    };
    if let Some(s) = seed {
        opt.seed = s;
    }
    let samples = read_quaternions(input)?;
    let result = fit_mle(&samples, repr, &cfg, &opt)?;
    let params = pretty(&result.params);
    match &common.output {
        Some(path) => write_text(path, &params)?,
        None => print!("{params}"),
    }
    let trace = trace.or_else(|| common.output.as_ref().map(|o| o.with_extension("trace.csv")));
    if let Some(path) = trace {
        let mut text = String::from("iteration,loss\n");
        for (k, l) in result.losses.iter().enumerate() {
            text += &format!("{k},{}\n", fmt12(*l));
        }
        write_text(&path, &text)?;
    }
    eprintln!(
        "{} iterations, converged {}, final loss {}",
        result.iterations,
        result.converged,
        fmt12(*result.losses.last().expect("trace starts with the initial loss"))
    );
    Ok(())
}

fn classify(dist: &DistArgs, tol: f64, common: &Common) -> Result<()> {
    let p = require_dist(dist)?.params()?;
    let class = classify_symmetry(&p, tol);
    let t = trace_indicator(&p);
    println!("kind {}", class.kind);
    println!("margin {}", fmt12(class.margin));
    println!("trace_indicator {}", fmt12(t));
    if let Some(path) = &common.output {
        let v = json!({ "class": class, "trace_indicator": t });
        write_text(path, &pretty(&v))?;
    }
    Ok(())
}

/// Returns whether every selected criterion passed.
fn report(criteria: Option<String>, cache: Option<PathBuf>, output: &Path) -> Result<bool> {
    let ids: Vec<u32> = match criteria {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .ok()
                    .filter(|id| (1..=11).contains(id))
                    .ok_or_else(|| invalid(format!("--criteria: `{}` is not a criterion id 1 to 11", s.trim())))
            })
            .collect::<Result<_>>()?,
        None => (1..=11).collect(),
    };
    let cache = cache.map(|p| OracleCache::load(&p)).transpose()?;
    let mut outcomes = Vec::new();
    for id in ids {
        let o = match (&cache, id) {
            (Some(c), 2) => acceptance::run_oracle_with_cache(c),
            _ => acceptance::run(id),
        };
        println!("{}", o.line());
        outcomes.push(o);
    }
    let report = acceptance::AcceptanceReport { outcomes };
    let passed = report.outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", report.outcomes.len());
    write_text(output, &pretty(&report))?;
    Ok(report.all_passed())
}

fn oracle_cache(lambda: Option<String>, output: &Path) -> Result<()> {
    let lambdas: Vec<Vector4<f64>> = match lambda {
        Some(l) => vec![Vector4::from_column_slice(&parse_list(&l, 4, "--lambda")?)],
        None => {
            let mut v = vec![Vector4::new(0.0, -1.0, -2.0, -3.0), Vector4::new(-3.0, -1.0, 0.0, -2.0)];
            v.extend(lambda_draws());
            v
        }
    };
    let mut cache = OracleCache::default();
    for l in &lambdas {
        let r = certified_c(l, GridSpec::default(), CERTIFY_TOL)?;
        eprintln!(
            "{} C {} grid {}x{}x{} estimate {}",
            fmt12_list(l.iter()),
            fmt12(r.c),
            r.grid.n_psi,
            r.grid.n_theta,
            r.grid.n_phi,
            fmt12(r.convergence_estimate)
        );
        cache.insert(l, r);
    }
    cache.save(output)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("BINGHAM_KIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| invalid(format!("BINGHAM_KIT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| BinghamError::NumericalFailure(e.to_string()))
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Normconst { lambda, input, common } => normconst(lambda, input, &common)?,
        Command::Pdf { dist, data, common } => pdf(&dist, &data, &common)?,
        Command::Loss { dist, data, common } => loss(&dist, &data, &common)?,
        Command::Gradcheck { dist, qgt, n, seed, step, common } => gradcheck(&dist, qgt, n, seed, step, &common)?,
        Command::Sample { dist, n, seed, qgt, common } => sample_cmd(&dist, n, seed, qgt, &common)?,
        Command::Fit { input, repr, optimizer, seed, trace, common } => {
            fit(&input, &repr, optimizer, seed, trace, &common)?
        }
        Command::Classify { dist, tol, common } => classify(&dist, tol, &common)?,
        Command::Report { criteria, cache, output } => return report(criteria, cache, &output),
        Command::OracleCache { lambda, output } => oracle_cache(lambda, &output)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
