//! `fairrank` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 every query
//! fell back to the system ranking, 3 a verify suite reported violations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairrank::divergence::DivergenceKind;
use fairrank::io::{
    load_groups, load_run, load_stream, report_json, save_groups, save_run, save_stream, split_stream, write_report,
    LoadedStream, RunFile,
};
use fairrank::rerank::{evaluate_run, rerank_offline, rerank_online, Objective, RerankConfig};
use fairrank::sweep::{run_sweep, write_sweep_csv, SweepSpec};
use fairrank::synth::{gen_random_instance, generate, PolarityLaw, PolarityPattern, RandomInstance, SynthSpec, Variant};
use fairrank::verify::{run_suite, Suite};
use fairrank::{Dataset, PolarityMode};

const SEED_ENV: &str = "FAIRRANK_SEED";

#[derive(Parser)]
#[command(name = "fairrank", version, about = "Distribution- and polarity-aware amortized fair ranking")]
struct Cli {
    /// Worker threads for sweeps and Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream and its group map.
    Generate(GenerateArgs),
    /// Re-rank a stream and write the run file.
    Rank(RankArgs),
    /// Compute the metric report of a run.
    Evaluate(EvaluateArgs),
    /// Run a grid over θ, divergences, objectives and polarity modes.
    Sweep(SweepArgs),
    /// Run self-check suites.
    Verify(VerifyArgs),
    /// Split a stream into tuning and test halves by hashed query id.
    Split(SplitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenVariant {
    Binary,
    Continuous,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Unit,
    Signed,
    Continuous,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "binary")]
    variant: GenVariant,
    /// Number of individuals.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Number of queries.
    #[arg(long = "queries", short = 'T', default_value_t = 16)]
    queries: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Every query gets polarity +1 (synthetic variants).
    #[arg(long)]
    all_positive: bool,
    /// Group count (random variant).
    #[arg(long, default_value_t = 2)]
    groups: usize,
    /// Polarity components per query (random variant).
    #[arg(long, default_value_t = 1)]
    components: usize,
    /// Polarity law (random variant).
    #[arg(long, value_enum, default_value = "signed")]
    law: Law,
    #[arg(long)]
    out_stream: PathBuf,
    #[arg(long)]
    out_groups: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Group map; without it every individual is in one group.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, default_value = "l1")]
    kind: DivergenceKind,
    #[arg(long, default_value = "minmax-lex")]
    objective: Objective,
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[arg(long = "k-rerank", default_value_t = 50)]
    k_rerank: usize,
    #[arg(long = "k-attention", default_value_t = 10)]
    k_attention: usize,
    #[arg(long = "k-eval", default_value_t = 10)]
    k_eval: usize,
    #[arg(long, default_value = "aware")]
    polarity_mode: PolarityMode,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Optimize the whole stream jointly instead of query by query.
    #[arg(long)]
    offline: bool,
    /// Coordinate-descent sweeps in offline mode.
    #[arg(long, default_value_t = 10)]
    max_sweeps: usize,
    /// Renormalize relevance that is off by more than 1e-6 instead of failing.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    /// Run to report relative improvements against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,1.0")]
    thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "l1,l2var,w1")]
    kinds: Vec<DivergenceKind>,
    #[arg(long, value_delimiter = ',', default_value = "minmax-lex,minsum,none")]
    objectives: Vec<Objective>,
    #[arg(long = "polarity-modes", value_delimiter = ',', default_value = "aware,agnostic")]
    polarity_modes: Vec<PolarityMode>,
    /// Bootstrap resamples per grid point; 0 runs the stream as given.
    #[arg(long, default_value_t = 0)]
    repeats: usize,
    #[arg(long = "k-rerank", default_value_t = 50)]
    k_rerank: usize,
    #[arg(long = "k-attention", default_value_t = 10)]
    k_attention: usize,
    #[arg(long = "k-eval", default_value_t = 10)]
    k_eval: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    raw: bool,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    GroupBound,
    Bounds,
    Solver,
    W1,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    /// Instances per suite (Monte Carlo trials for `bounds`); suite
    /// defaults when omitted.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value = "")]
    salt: String,
    #[arg(long)]
    out_tune: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
    #[arg(long)]
    raw: bool,
}

/// Failure that maps to a specific exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Split(a) => cmd_split(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Exit>() {
            Some(Exit(code)) => ExitCode::from(*code),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<()> {
    let polarity = if a.all_positive {
        PolarityPattern::AllPositive
    } else {
        PolarityPattern::Alternating
    };
    let (dataset, stream) = match a.variant {
        GenVariant::Binary | GenVariant::Continuous => {
            let variant = match a.variant {
                GenVariant::Binary => Variant::Binary,
                _ => Variant::Continuous,
            };
            generate(&SynthSpec {
                n: a.n,
                queries: a.queries,
                seed: a.seed,
                variant,
                polarity,
                ..SynthSpec::default()
            })?
        }
        GenVariant::Random => {
            let law = match (a.all_positive, a.law) {
                (true, _) | (_, Law::Unit) => PolarityLaw::Unit,
                (_, Law::Signed) => PolarityLaw::Signed,
                (_, Law::Continuous) => PolarityLaw::Continuous,
            };
            gen_random_instance(&RandomInstance {
                n: a.n,
                groups: a.groups,
                queries: a.queries,
                components: a.components,
                law,
                seed: a.seed,
            })?
        }
    };
    save_stream(&a.out_stream, &dataset, &stream).with_context(|| format!("writing {}", a.out_stream.display()))?;
    if let Some(path) = &a.out_groups {
        save_groups(path, &dataset).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("generated {} individuals, {} queries", dataset.len(), stream.len());
    Ok(())
}

/// Stream plus its dataset, grouped by `groups` when given.
fn load_inputs(stream: &Path, groups: Option<&Path>, raw: bool) -> anyhow::Result<(Dataset, LoadedStream)> {
    let loaded = load_stream(stream, raw).with_context(|| format!("reading {}", stream.display()))?;
    let dataset = match groups {
        Some(path) => {
            let map = load_groups(path).with_context(|| format!("reading {}", path.display()))?;
            loaded.with_groups(&map)?
        }
        None => loaded.single_group()?,
    };
    Ok((dataset, loaded))
}

fn cmd_rank(a: RankArgs) -> anyhow::Result<()> {
    let (dataset, loaded) = load_inputs(&a.stream, a.groups.as_deref(), a.raw)?;
    let config = RerankConfig {
        kind: a.kind,
        objective: a.objective,
        theta: a.theta,
        k_rerank: a.k_rerank,
        k_attention: a.k_attention,
        k_eval: a.k_eval,
        polarity_mode: a.polarity_mode,
        seed: a.seed,
    };
    let result = if a.offline {
        rerank_offline(&dataset, &loaded.queries, &config, a.max_sweeps)?
    } else {
        rerank_online(&dataset, &loaded.queries, &config)?
    };
    let file = RunFile::new(&result, dataset.ids(), &loaded.queries, a.offline);
    save_run(&a.out, &file).with_context(|| format!("writing {}", a.out.display()))?;
    let fallbacks = result.fallbacks();
    if fallbacks > 0 {
        log::warn!("{fallbacks} of {} queries fell back to the system ranking", result.fallback.len());
    }
    if config.objective != Objective::None && !result.fallback.is_empty() && fallbacks == result.fallback.len() {
        eprintln!("every query was infeasible and fell back to the system ranking");
        return Err(Exit(2).into());
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let file = load_run(&a.run).with_context(|| format!("reading {}", a.run.display()))?;
    let dataset = match &a.groups {
        Some(path) => {
            let map = load_groups(path).with_context(|| format!("reading {}", path.display()))?;
            if map.ids() != file.individuals.as_slice() {
                bail!("group map does not cover exactly the run's individuals");
            }
            map
        }
        None => Dataset::single_group(file.individuals.iter().cloned())?,
    };
    let baseline = match &a.baseline {
        Some(path) => {
            let b = load_run(path).with_context(|| format!("reading {}", path.display()))?;
            if b.individuals != file.individuals || b.query_ids != file.query_ids {
                bail!("baseline run covers different individuals or queries");
            }
            Some(b.into_result()?)
        }
        None => None,
    };
    let result = file.clone().into_result()?;
    let report = evaluate_run(&result, &dataset, baseline.as_ref());
    let doc = report_json(&report, &file)?;
    match &a.out {
        Some(path) => {
            let f = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_report(std::io::BufWriter::new(f), &doc)?;
        }
        None => write_report(std::io::stdout().lock(), &doc)?,
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let (dataset, loaded) = load_inputs(&a.stream, a.groups.as_deref(), a.raw)?;
    let spec = SweepSpec {
        thetas: a.thetas,
        kinds: a.kinds,
        objectives: a.objectives,
        polarity_modes: a.polarity_modes,
        repeats: a.repeats,
        seed: a.seed,
        base: RerankConfig {
            k_rerank: a.k_rerank,
            k_attention: a.k_attention,
            k_eval: a.k_eval,
            ..RerankConfig::default()
        },
    };
    let rows = run_sweep(&dataset, &loaded.queries, &spec)?;
    match &a.out {
        Some(path) => {
            let f = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_sweep_csv(std::io::BufWriter::new(f), &rows)?;
        }
        None => write_sweep_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn default_instances(suite: Suite) -> usize {
    match suite {
        Suite::GroupBound => 500,
        Suite::Bounds => 100_000,
        Suite::Solver | Suite::W1 => 200,
    }
}

fn cmd_verify(a: VerifyArgs) -> anyhow::Result<()> {
    let suites: Vec<Suite> = match a.suite {
        SuiteArg::GroupBound => vec![Suite::GroupBound],
        SuiteArg::Bounds => vec![Suite::Bounds],
        SuiteArg::Solver => vec![Suite::Solver],
        SuiteArg::W1 => vec![Suite::W1],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut failed = false;
    for suite in suites {
        let instances = a.instances.unwrap_or_else(|| default_instances(suite));
        let report = run_suite(suite, instances, a.seed)?;
        for v in &report.violations {
            eprintln!("{}", serde_json::to_string(v)?);
        }
        let verdict = if report.passed() { "PASS" } else { "FAIL" };
        println!(
            "{} {verdict}: {} checks, {} violations",
            suite.as_str(),
            report.checks,
            report.violations.len()
        );
        failed |= !report.passed();
    }
    if failed {
        return Err(Exit(3).into());
    }
    Ok(())
}

fn cmd_split(a: SplitArgs) -> anyhow::Result<()> {
    let loaded = load_stream(&a.stream, a.raw).with_context(|| format!("reading {}", a.stream.display()))?;
    let dataset = loaded.single_group()?;
    let (tune, test) = split_stream(&loaded.queries, &a.salt);
    save_stream(&a.out_tune, &dataset, &tune).with_context(|| format!("writing {}", a.out_tune.display()))?;
    save_stream(&a.out_test, &dataset, &test).with_context(|| format!("writing {}", a.out_test.display()))?;
    println!("tune {} queries, test {} queries", tune.len(), test.len());
    Ok(())
}
