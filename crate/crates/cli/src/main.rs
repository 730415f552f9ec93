//! `adawish`: estimate partition functions of binary models, generate
//! instances, and run the query-count benchmarks.

mod report;
mod spec;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use adawish::estimator::{adawish_estimate, wish_estimate, EstimateResult, Guarantee};
use adawish::logspace::ln_to_log10;
use adawish::model::{parse_uai, serialize_uai, QuantileCurve, WeightedModel, MAX_ENUMERABLE_VARS};
use adawish::optbench::{compute_opt, regret_bound, OptMethod, OptResult, MAX_EXHAUSTIVE_N};
use adawish::oracle::{MapSolver, ModelOracle, OracleConfig};
use adawish::verify::{run_checks, VerifyLevel};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use report::{fmt_f64, RunReport};
use spec::GenSpec;

const SEED_ENV: &str = "ADAWISH_SEED";

#[derive(Parser)]
#[command(name = "adawish", version, about = "Discrete integration with adaptive quantile search")]
#[command(after_help = "Environment:\n  ADAWISH_SEED  overrides --seed when set\n\n\
Exit codes:\n  0  success\n  1  error\n  2  estimate produced without a guarantee (for example incumbent-only MAP solves)")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate log10 W for a UAI file or a generated model.
    Estimate(EstimateArgs),
    /// Write a generated model as UAI.
    Gen {
        /// Generator spec: grid:RxC[:w=..][:seed=..], clique:N[:w=..][:seed=..],
        /// random:N[:factors=..][:arity=..][:seed=..].
        spec: String,
        /// Output path; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the exact quantile curve as CSV (`index,log_b,log10_b`, natural log in `log_b`).
    Quantiles {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Smallest query set certifying a kappa approximation of a curve, as JSON lines.
    Opt {
        /// Curve CSV with `index` and `log_b` columns, as written by `quantiles`.
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        kappa: f64,
        #[arg(long, value_enum, default_value_t = OptChoice::All)]
        method: OptChoice,
    },
    /// Compare WISH and AdaWISH query counts over a seeded suite, as CSV.
    Bench(BenchArgs),
    /// Run the built-in invariant checks.
    Verify {
        #[arg(long, value_enum, default_value_t = Level::Fast)]
        level: Level,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    /// UAI model file (MARKOV or BAYES, binary variables).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generator spec, see `gen --help`.
    #[arg(long = "gen")]
    generator: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value_t = OracleChoice::Exact)]
    oracle: OracleChoice,
    /// Neighbour slack for the XOR oracle.
    #[arg(long, default_value_t = 5)]
    c: usize,
    /// Repetitions per quantile; derived from delta, alpha and n when omitted.
    #[arg(long = "repetitions", short = 't')]
    repetitions: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Concentration constant; defaults to 0.078 for c = 5.
    #[arg(long)]
    alpha: Option<f64>,
    /// Point-wise oracle accuracy factor.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SolverChoice::Bnb)]
    solver: SolverChoice,
    /// Node budget per MAP solve; exceeding it keeps the incumbent.
    #[arg(long)]
    node_limit: Option<u64>,
    /// Time budget per MAP solve in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long, value_enum, default_value_t = ScheduleChoice::Adawish)]
    schedule: ScheduleChoice,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Skip the enumeration of W even when n is small enough.
    #[arg(long)]
    no_exact: bool,
    /// Also write the report as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    /// Generator spec with a seed range, e.g. grid:4x4:seeds=0..9 (inclusive).
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleChoice {
    Wish,
    Adawish,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OracleChoice {
    Exact,
    PointWise,
    Neighbor,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Bnb,
    Enumerate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OptChoice {
    Greedy,
    Exhaustive,
    /// Greedy, plus exhaustive when n <= 20.
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

impl OracleArgs {
    fn seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}=`{v}` is not an integer")),
            Err(_) => Ok(self.seed),
        }
    }

    fn config(&self) -> Result<OracleConfig> {
        let seed = self.seed()?;
        let mut cfg = match self.oracle {
            OracleChoice::Exact => OracleConfig::exact().with_seed(seed),
            OracleChoice::PointWise => OracleConfig::point_wise(self.gamma, seed),
            OracleChoice::Neighbor => OracleConfig::neighbor(self.c, seed),
        }
        .with_delta(self.delta);
        if let Some(t) = self.repetitions {
            cfg = cfg.with_repetitions(t);
        }
        if let Some(a) = self.alpha {
            cfg = cfg.with_alpha(a);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn solver(&self) -> MapSolver {
        let mut s = match self.solver {
            SolverChoice::Bnb => MapSolver::branch_and_bound(),
            SolverChoice::Enumerate => MapSolver::enumerate(),
        };
        if let Some(n) = self.node_limit {
            s = s.with_node_limit(n);
        }
        if let Some(ms) = self.timeout_ms {
            s = s.with_timeout(Duration::from_millis(ms));
        }
        s
    }

    fn name(&self) -> &'static str {
        match self.oracle {
            OracleChoice::Exact => "exact",
            OracleChoice::PointWise => "point-wise",
            OracleChoice::Neighbor => "neighbor",
        }
    }
}

fn load_model(source: &ModelSource) -> Result<WeightedModel> {
    match (&source.model, &source.generator) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            Ok(parse_uai(&text)
                .with_context(|| format!("{}: invalid UAI model", path.display()))?
                .with_name(name))
        }
        (None, Some(g)) => GenSpec::parse(g)?.build(),
        (None, None) => bail!("give either --model or --gen"),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_schedule(
    model: &WeightedModel,
    args: &OracleArgs,
    schedule: ScheduleChoice,
    beta: f64,
) -> Result<(EstimateResult, Option<usize>)> {
    let oracle = ModelOracle::new(model, args.config()?, args.solver())?;
    let t = (args.oracle == OracleChoice::Neighbor).then(|| oracle.repetitions());
    let result = match schedule {
        ScheduleChoice::Wish => wish_estimate(&oracle)?,
        ScheduleChoice::Adawish => adawish_estimate(&oracle, beta)?,
    };
    Ok((result, t))
}

fn cmd_estimate(args: &EstimateArgs) -> Result<ExitCode> {
    let model = load_model(&args.source)?;
    let o = &args.oracle;
    let start = Instant::now();
    let (result, repetitions) = run_schedule(&model, o, args.schedule, args.beta)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let exact = (!args.no_exact && model.n() <= MAX_ENUMERABLE_VARS)
        .then(|| model.exact_partition().map(ln_to_log10))
        .transpose()?;
    let neighbor = o.oracle == OracleChoice::Neighbor;
    let report = RunReport {
        instance: model.name().to_string(),
        n: model.n(),
        schedule: match args.schedule {
            ScheduleChoice::Wish => "wish",
            ScheduleChoice::Adawish => "adawish",
        },
        oracle: o.name(),
        beta: matches!(args.schedule, ScheduleChoice::Adawish).then_some(args.beta),
        c: neighbor.then_some(o.c),
        repetitions,
        delta: neighbor.then_some(o.delta),
        gamma: (o.oracle == OracleChoice::PointWise).then_some(o.gamma),
        seed: o.seed()?,
        log10_w_estimate: ln_to_log10(result.log_w_estimate),
        log10_w_exact: exact,
        distinct_queries: result.distinct_queries(),
        map_calls: result.ledger.map_calls,
        wall_time_s,
        guarantee: result.guarantee,
    };
    let stdout = io::stdout().lock();
    match args.format {
        Format::Text => report.write_text(stdout)?,
        Format::Csv => report.write_csv(stdout)?,
    }
    if let Some(path) = &args.csv {
        report.write_csv(File::create(path).with_context(|| format!("cannot create {}", path.display()))?)?;
    }
    if result.guarantee == Guarantee::Heuristic {
        eprintln!(
            "warning: no guarantee holds for this estimate ({} incumbent-only MAP solves)",
            result.ledger.incumbent_only
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(spec: &str, out: Option<&Path>) -> Result<()> {
    let model = GenSpec::parse(spec)?.build()?;
    let mut w = output(out)?;
    w.write_all(serialize_uai(&model).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn cmd_quantiles(source: &ModelSource, out: Option<&Path>) -> Result<()> {
    let curve = load_model(source)?.exact_quantiles()?;
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["index", "log_b", "log10_b"])?;
    for (i, &b) in curve.values().iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(b), fmt_f64(ln_to_log10(b))])?;
    }
    w.flush()?;
    Ok(())
}

fn read_curve(path: &Path) -> Result<QuantileCurve> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{}: missing `{name}` column", path.display()))
    };
    let (ix, lb) = (col("index")?, col("log_b")?);
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let line = row + 2;
        let rec = rec.with_context(|| format!("{}: line {line}", path.display()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        let i: usize = field(ix)
            .parse()
            .with_context(|| format!("{}: line {line}: bad index", path.display()))?;
        if i != values.len() {
            bail!("{}: line {line}: expected index {}, found {i}", path.display(), values.len());
        }
        let v: f64 = field(lb)
            .parse()
            .with_context(|| format!("{}: line {line}: bad log_b", path.display()))?;
        values.push(v);
    }
    QuantileCurve::new(values).with_context(|| format!("{}: invalid curve", path.display()))
}

#[derive(Serialize)]
struct OptLine {
    n: usize,
    #[serde(flatten)]
    result: OptResult,
    /// Query budget the adaptive schedule is held to for this OPT.
    regret_bound: u64,
}

fn cmd_opt(path: &Path, kappa: f64, choice: OptChoice) -> Result<()> {
    let curve = read_curve(path)?;
    let n = curve.n();
    let methods: Vec<OptMethod> = match choice {
        OptChoice::Greedy => vec![OptMethod::GreedySegment],
        OptChoice::Exhaustive => vec![OptMethod::ExhaustiveGlobal],
        OptChoice::All if n <= MAX_EXHAUSTIVE_N => vec![OptMethod::GreedySegment, OptMethod::ExhaustiveGlobal],
        OptChoice::All => vec![OptMethod::GreedySegment],
    };
    let mut out = io::stdout().lock();
    for m in methods {
        let result = compute_opt(&curve, kappa, m)?;
        let regret_bound = regret_bound(result.opt_size, n);
        serde_json::to_writer(&mut out, &OptLine { n, result, regret_bound })?;
        writeln!(out)?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let suite = GenSpec::parse(&args.suite)?;
    let rows = suite
        .seeds()?
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|seed| -> Result<_> {
            let spec = suite.with_seed(seed);
            let model = spec.build()?;
            let (wish, _) = run_schedule(&model, &args.oracle, ScheduleChoice::Wish, args.beta)?;
            let (ada, _) = run_schedule(&model, &args.oracle, ScheduleChoice::Adawish, args.beta)?;
            Ok((spec.canonical()?, model.n(), wish.distinct_queries(), ada.distinct_queries()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["instance", "n", "wish_queries", "adawish_queries", "savings_pct"])?;
    let mut savings = Vec::with_capacity(rows.len());
    for (name, n, wq, aq) in rows {
        let s = 100.0 * (1.0 - aq as f64 / wq as f64);
        savings.push(s);
        w.write_record([name, n.to_string(), wq.to_string(), aq.to_string(), fmt_f64(s)])?;
    }
    w.flush()?;
    savings.sort_by(f64::total_cmp);
    eprintln!("median savings: {:.1}%", savings[(savings.len() - 1) / 2]);
    Ok(())
}

fn cmd_verify(level: Level) -> Result<ExitCode> {
    let level = match level {
        Level::Fast => VerifyLevel::Fast,
        Level::Full => VerifyLevel::Full,
    };
    let reports = run_checks(level);
    let failed = reports.iter().filter(|r| !r.passed).count();
    for r in &reports {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    println!("verify: {} of {} checks passed", reports.len() - failed, reports.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Gen { spec, out } => cmd_gen(&spec, out.as_deref()).map(|_| ExitCode::SUCCESS),
        Command::Quantiles { source, out } => cmd_quantiles(&source, out.as_deref()).map(|_| ExitCode::SUCCESS),
        Command::Opt { curve, kappa, method } => cmd_opt(&curve, kappa, method).map(|_| ExitCode::SUCCESS),
        Command::Bench(a) => cmd_bench(&a).map(|_| ExitCode::SUCCESS),
        Command::Verify { level } => cmd_verify(level),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
