//! Command-line frontend: train controllers, evaluate them into trace files,
//! render plots, inspect communication topologies, list built-in scenarios.
//!
//! Every failure exits nonzero after printing a machine-readable JSON object
//! `{"error": <kind>, "message": <text>}` on stderr. The output root can be
//! set with the `SWARMFORM_OUT` environment variable; `--out` wins.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use swarmform::config::RunConfig;
use swarmform::error::{Error, Result};
use swarmform::formation::{NodeId, PatternKind, PatternSpec};
use swarmform::nces::ConstraintAggregation;
use swarmform::plot;
use swarmform::policy::PolicyFile;
use swarmform::scenario::{
    builtin_scenarios, resolve_scenario, run_episode, train_scenario, EpisodeConfig,
};
use swarmform::topology::{build_topology, elect_head, has_spanning_tree, laplacian};
use swarmform::trace::{
    tail_stats, write_summary, write_trace_files, AblationSummary, RunSummary, CONVERGENCE_FILE,
    PARAMS_FILE,
};

#[derive(Parser)]
#[command(name = "swarmform", version, about = "Formation control for a simulated missile swarm: co-evolutionary training, evaluation, plots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per-agent controllers on a scenario.
    Train(TrainArgs),
    /// Evaluate trained controllers for one episode and write trace files.
    Eval(EvalArgs),
    /// Render the SVG charts for a trace directory.
    Plot(PlotArgs),
    /// Print adjacency, degrees, Molloy-Reed ratio and spanning-tree verdict.
    InspectTopology(InspectArgs),
    /// List the built-in scenarios (optionally export them as TOML).
    ListScenarios(ListArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Built-in scenario name or scenario TOML path.
    #[arg(long)]
    scenario: Option<String>,
    /// Run-configuration TOML; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration budget.
    #[arg(long)]
    iters: Option<usize>,
    /// Initial population size override.
    #[arg(long)]
    pop_init: Option<usize>,
    /// Disable the model-based rollout constraint (ablation).
    #[arg(long)]
    no_constraint: bool,
    /// Aggregation of the termination indicator.
    #[arg(long, value_enum)]
    constraint_agg: Option<AggArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Trained parameter file (params.json).
    params: PathBuf,
    /// Scenario override; defaults to the scenario recorded in the file.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PlotArgs {
    /// Directory holding the trace files of an evaluation.
    trace_dir: PathBuf,
}

#[derive(clap::Args)]
struct InspectArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Polygon)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha_p: f64,
    #[arg(long, default_value_t = 0.5)]
    lf: f64,
    /// Failed nodes, comma separated (e.g. --fail 1,4).
    #[arg(long, value_delimiter = ',')]
    fail: Vec<NodeId>,
}

#[derive(clap::Args)]
struct ListArgs {
    /// Write each built-in scenario as TOML into this directory.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Polygon,
    Line,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Plot(args) => cmd_plot(args),
        Command::InspectTopology(args) => cmd_inspect(args),
        Command::ListScenarios(args) => cmd_list(args),
    };
    if let Err(err) = outcome {
        let json = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
        eprintln!("{json}");
        std::process::exit(1);
    }
}

fn out_root() -> PathBuf {
    std::env::var_os("SWARMFORM_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn load_run_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn resolve_out(flag: &Option<PathBuf>, config: &RunConfig, default_name: &str) -> PathBuf {
    if let Some(out) = flag {
        return out.clone();
    }
    if let Some(out) = &config.out_dir {
        return out.clone();
    }
    out_root().join(default_name)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = load_run_config(&args.config)?;
    if let Some(scenario) = args.scenario {
        config.scenario = scenario;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(iters) = args.iters {
        config.iterations = iters;
    }
    if let Some(pop_init) = args.pop_init {
        config.pop_init = Some(pop_init);
    }
    if args.no_constraint {
        config.constraint.enabled = false;
    }
    if let Some(agg) = args.constraint_agg {
        config.constraint.aggregation = match agg {
            AggArg::Min => ConstraintAggregation::Min,
            AggArg::Max => ConstraintAggregation::Max,
        };
    }
    config.validate()?;

    let mut spec = resolve_scenario(&config.scenario)?;
    spec.seed = config.seed;
    let out_dir = resolve_out(
        &args.out,
        &config,
        &format!("train-{}-seed{}", spec.name, config.seed),
    );
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    // Stream the convergence log while training runs.
    let log_path = out_dir.join(CONVERGENCE_FILE);
    let mut log_file = std::fs::File::create(&log_path)
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;
    let started = Instant::now();
    let trained = train_scenario(&spec, &config, |record, _params| {
        use std::io::Write;
        let line = serde_json::to_string(record).expect("record serializes");
        let _ = writeln!(log_file, "{line}");
    })?;
    let wall = started.elapsed().as_secs_f64();

    let policy = PolicyFile::from_agents(
        trained.layout,
        &spec.name,
        config.seed,
        &trained.outcome.params,
    );
    policy.save(&out_dir.join(PARAMS_FILE))?;

    let log = &trained.outcome.log;
    let mean_early = if log.is_empty() {
        0.0
    } else {
        log.iter().map(|r| r.early_termination_rate).sum::<f64>() / log.len() as f64
    };
    let summary = RunSummary {
        kind: "train".into(),
        scenario: spec,
        config: config.clone(),
        seed: config.seed,
        wall_time_s: Some(wall),
        iterations: Some(log.len()),
        final_mean_fitness: log.last().map(|r| r.mean_fitness),
        pop_trajectory: Some(log.iter().map(|r| r.pop_size).collect()),
        stop: Some(trained.outcome.stop),
        ablation: Some(AblationSummary {
            constraint_enabled: config.constraint.enabled,
            aggregation: config.constraint.aggregation,
            mean_early_termination_rate: mean_early,
        }),
        tail: None,
    };
    write_summary(&out_dir, &summary)?;
    println!("trained {} iterations -> {}", log.len(), out_dir.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut config = load_run_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let policy = PolicyFile::load(&args.params)?;
    let scenario_name = args.scenario.unwrap_or_else(|| policy.scenario.clone());
    let mut spec = resolve_scenario(&scenario_name)?;
    spec.seed = config.seed;
    if let Some(episode_length) = config.episode_length {
        spec.episode_length = episode_length;
    }
    config.scenario = scenario_name;

    let agents = policy.agents()?;
    let constraints = config.system_constraints();
    let outcome = run_episode(
        &spec,
        &agents,
        &EpisodeConfig {
            constraints: &constraints,
            weights: &config.cost_weights,
            constraint: None,
            record: true,
        },
    )?;
    let trace = outcome.trace.expect("recording was enabled");
    let tail = tail_stats(&trace, 10.0)?;

    let out_dir = resolve_out(
        &args.out,
        &config,
        &format!("eval-{}-seed{}", spec.name, config.seed),
    );
    let summary = RunSummary {
        kind: "eval".into(),
        scenario: spec,
        config: config.clone(),
        seed: config.seed,
        wall_time_s: None,
        iterations: None,
        final_mean_fitness: None,
        pop_trajectory: None,
        stop: None,
        ablation: None,
        tail: Some(tail),
    };
    write_trace_files(&out_dir, &trace, &summary)?;
    println!(
        "eval {} steps, tail mean |e| = {:.4} km -> {}",
        outcome.steps,
        tail.mean_resultant,
        out_dir.display()
    );
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let written = plot::render_all(&args.trace_dir)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let spec = PatternSpec {
        kind: match args.kind {
            KindArg::Polygon => PatternKind::Polygon,
            KindArg::Line => PatternKind::Line,
        },
        n: args.n,
        alpha_p: args.alpha_p,
        l_f: args.lf,
    };
    let pattern = spec.build()?;
    let alive: Vec<NodeId> = (1..=args.n).filter(|id| !args.fail.contains(id)).collect();
    let head = elect_head(&alive)?;
    let topology = build_topology(&pattern, &alive, head)?;
    let metrics = laplacian(&topology);
    let json = serde_json::json!({
        "pattern": spec,
        "alive": topology.alive(),
        "head": topology.head(),
        "adjacency": topology.adjacency_rows(),
        "degrees": metrics.degrees,
        "molloy_reed": metrics.molloy_reed,
        "spanning_tree": has_spanning_tree(&topology),
    });
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn cmd_list(args: ListArgs) -> Result<()> {
    let scenarios = builtin_scenarios();
    for spec in &scenarios {
        println!(
            "{:<22} {} missiles, {:>5.1} s, pattern {:?} l_f={}",
            spec.name,
            spec.n_missiles,
            spec.episode_length,
            spec.base_pattern_spec().kind,
            spec.base_pattern_spec().l_f,
        );
    }
    if let Some(dir) = args.export {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for spec in &scenarios {
            let path = Path::new(&dir).join(format!("{}.toml", spec.name));
            spec.save(&path)?;
            println!("exported {}", path.display());
        }
    }
    Ok(())
}
