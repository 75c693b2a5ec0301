use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context as _};
use cforge::config::{BackendChoice, ExperimentConfig, SolverConfig, StepSizeConfig};
use cforge::harness::{compare_strategies, run_experiment, write_comparison, write_outputs, ExperimentResult};
use cforge::io::{domain_to_json, DomainDescriptor, Registry};
use cforge::service::{serve, ServiceConfig};
use cforge_core::solver::SolveOutcome;
use cforge_core::{PopulationSpec, QueryStrategy, Solver, WeightDistribution};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cforge", version, about = "Constructive preference elicitation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in benchmark population.
    Bench {
        #[command(subcommand)]
        bench: Bench,
    },
    /// Run one config under several query strategies with the same users.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "cp,random")]
        strategies: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suites, plus checksum and domain checks on an
    /// instance directory.
    Verify {
        #[arg(long, default_value = "instances")]
        instances: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the instance directory checks.
        #[arg(long)]
        no_instances: bool,
    },
    /// Serve live elicitation sessions over HTTP.
    Serve(ServeArgs),
    /// Solve an LP-format problem and write a solution file.
    LpSolve {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "bnb")]
        backend: BackendChoice,
    },
    /// Write the generic definition of a registered domain.
    ExportDomain {
        #[arg(long, default_value = "instances")]
        instances: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Bench {
    Synthetic(SyntheticArgs),
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 4)]
    r: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    users: usize,
    #[arg(long, default_value_t = 25)]
    iters: usize,
    /// `uniform:LO:HI` or `normal:MEAN:SD`.
    #[arg(long, default_value = "uniform:1:100")]
    user_dist: UserDist,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Users always pick a best item.
    #[arg(long)]
    noiseless: bool,
    /// Keep iterating after a user reaches zero regret.
    #[arg(long)]
    no_early_stop: bool,
    /// Fixed step size; disables adaptation.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value = "cp")]
    strategy: String,
    #[arg(long, default_value = "auto")]
    backend: BackendChoice,
    #[arg(long, default_value_t = 20.0)]
    timeout: f64,
    #[arg(long, default_value_t = 0)]
    lanes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CFORGE_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "CFORGE_INSTANCES", default_value = "instances")]
    instances: PathBuf,
    #[arg(long, env = "CFORGE_BACKEND", default_value = "auto")]
    backend: BackendChoice,
    /// Per-query solver budget in seconds.
    #[arg(long, env = "CFORGE_TIMEOUT", default_value_t = 20.0)]
    timeout: f64,
    /// Persist sessions here; in-memory when absent.
    #[arg(long, env = "CFORGE_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct UserDist(WeightDistribution);

impl FromStr for UserDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| x.parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let dist = match parts.as_slice() {
            ["uniform", lo, hi] => WeightDistribution::Uniform { lo: num(lo)?, hi: num(hi)? },
            ["normal", mean, sd] => WeightDistribution::Normal { mean: num(mean)?, sd: num(sd)? },
            _ => return Err(format!("expected uniform:LO:HI or normal:MEAN:SD, got `{s}`")),
        };
        dist.validate().map_err(|e| e.to_string())?;
        Ok(UserDist(dist))
    }
}

fn parse_strategy(s: &str) -> anyhow::Result<QueryStrategy> {
    match s {
        "cp" | "choice-perceptron" => Ok(QueryStrategy::ChoicePerceptron),
        "random" | "uniform-random" => Ok(QueryStrategy::UniformRandom),
        other => bail!("unknown strategy `{other}` (expected cp or random)"),
    }
}

fn summarize(result: &ExperimentResult) -> bool {
    let last = result.aggregate.last();
    println!(
        "{} [{}] d={} users={} converged={} final median regret={}",
        result.config.name,
        result.config.strategy.as_str(),
        result.dim,
        result.runs.len(),
        result.converged(),
        last.map_or_else(|| "n/a".to_string(), |r| format!("{:.4}", r.median_regret)),
    );
    let failures = result.failures();
    for f in &failures {
        eprintln!("user {} failed: {}", f.user_id, f.error.as_deref().unwrap_or("unknown error"));
    }
    failures.is_empty()
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .context("no output directory: pass --out or set `output` in the config")?;
            let result = run_experiment(&cfg, &base_dir(&config))?;
            write_outputs(&result, &out)?;
            Ok(summarize(&result))
        }
        Command::Bench { bench: Bench::Synthetic(a) } => {
            let mut population = PopulationSpec::new(a.user_dist.0, a.users, a.seed);
            population.lambda = a.lambda;
            population.noiseless = a.noiseless;
            let cfg = ExperimentConfig {
                name: format!("synthetic-r{}-k{}", a.r, a.k),
                domain: DomainDescriptor::Synthetic { r: a.r },
                k: a.k,
                iterations: a.iters,
                early_stop: !a.no_early_stop,
                population,
                strategy: parse_strategy(&a.strategy)?,
                solver: SolverConfig {
                    backend: a.backend,
                    timeout_s: Some(a.timeout),
                    ..SolverConfig::default()
                },
                step_size: StepSizeConfig {
                    adapt: a.eta.is_none(),
                    fixed: a.eta.unwrap_or(1.0),
                    ..StepSizeConfig::default()
                },
                seed: a.seed,
                lanes: a.lanes,
                output: Some(a.out.clone()),
            };
            let result = run_experiment(&cfg, Path::new("."))?;
            write_outputs(&result, &a.out)?;
            Ok(summarize(&result))
        }
        Command::Compare { config, strategies, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let strategies = strategies
                .iter()
                .map(|s| parse_strategy(s))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let results = compare_strategies(&cfg, &base_dir(&config), &strategies)?;
            write_comparison(&results, &out)?;
            let mut ok = true;
            for r in &results {
                ok &= summarize(r);
            }
            Ok(ok)
        }
        Command::Verify { instances, seed, no_instances } => {
            let dir = (!no_instances).then_some(instances.as_path());
            let reports = cforge::verify::run_all(dir, seed);
            let mut ok = true;
            for r in &reports {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            Ok(ok)
        }
        Command::Serve(a) => {
            let cfg = ServiceConfig {
                bind: a.bind,
                instances: a.instances,
                solver: SolverConfig {
                    backend: a.backend,
                    timeout_s: Some(a.timeout),
                    ..SolverConfig::default()
                },
                data_dir: a.data_dir,
            };
            tokio::runtime::Runtime::new()?.block_on(serve(cfg))?;
            Ok(true)
        }
        Command::LpSolve { input, output, backend } => {
            let problem = cforge::lp::read_lp(&input)?;
            let solver = match backend {
                BackendChoice::Exhaustive => Solver::exhaustive(),
                BackendChoice::Bnb | BackendChoice::Auto => Solver::branch_and_bound(),
                BackendChoice::External => bail!("lp-solve cannot delegate to the external backend"),
            };
            let outcome: SolveOutcome = solver.solve(&problem)?;
            std::fs::write(&output, cforge::lp::write_solution(&outcome))
                .with_context(|| format!("writing {}", output.display()))?;
            Ok(true)
        }
        Command::ExportDomain { instances, id, out } => {
            let registry = Registry::load(&instances)?;
            let spec = registry.get(&id).with_context(|| format!("unknown domain `{id}`"))?;
            std::fs::write(&out, domain_to_json(spec.def())).with_context(|| format!("writing {}", out.display()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
