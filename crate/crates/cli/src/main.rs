use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdd_core::analysis::{
    check_theorem_conditions, monte_carlo_phi_with, phi_rdd_closed_form, ShapeNode, SimOptions, StepTriple,
};
use rdd_core::benchmarks::{generate, write_instances, Task};
use rdd_core::experiment::{
    read_manifest, render, replay_manifest, run_experiment, BackendKind, Manifest, Method, ReportFormat, RunConfig,
};
use rdd_core::parser::DecompositionMode;
use rdd_core::prompts::Regime;
use serde_json::json;

#[derive(Parser)]
#[command(name = "rdd", version, about = "Recursive decomposition with dependencies: run, replay and analyse experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark sweep and write a manifest.
    Run(RunArgs),
    /// Re-run a manifest against its recorded completions and compare.
    Replay {
        manifest: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Summarise a manifest.
    Report {
        manifest: PathBuf,
        #[arg(short, long, value_enum, default_value_t = FormatArg::Table)]
        format: FormatArg,
        /// Instance id for dot output.
        #[arg(long)]
        instance: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Closed-form and Monte-Carlo accuracy for a full decomposition tree.
    Simulate(SimulateArgs),
    /// Write benchmark instances as JSON lines.
    Generate {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        n0: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    LetterConcat,
    LengthReversal,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::LetterConcat => Task::LetterConcat,
            TaskArg::LengthReversal => Task::LengthReversal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Oracle,
    Fault,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    TaskSpecific,
    Generic,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with the run configuration; flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// RDD+CoT, RDD+LtM, CoT+SC or LtM+SC.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    p_d: Option<f64>,
    #[arg(long)]
    p_u: Option<f64>,
    #[arg(long)]
    p_m: Option<f64>,
    #[arg(long)]
    fault_seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    instance_parallelism: Option<usize>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Use bracketed ids and {P-k} references in decompositions.
    #[arg(long)]
    dependencies: Option<bool>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(short, long, default_value = "manifest.jsonl")]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "letter_concat")]
    class: String,
    #[arg(long, default_value_t = 50)]
    n0: u64,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 0.99)]
    phi_d: f64,
    #[arg(long, default_value_t = 0.95)]
    phi_u: f64,
    #[arg(long, default_value_t = 0.97)]
    phi_m: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    #[arg(long)]
    variable_width: bool,
}

type Fallible<T = ()> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Fallible<ExitCode> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Replay { manifest, output } => replay(&manifest, output.as_deref()),
        Command::Report {
            manifest,
            format,
            instance,
            output,
        } => {
            let m = load_manifest(&manifest)?;
            let format = match format {
                FormatArg::Table => ReportFormat::Table,
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
                FormatArg::Dot => ReportFormat::Dot,
            };
            emit(output.as_deref(), render(&m, format, instance.as_deref())?.as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => {
            simulate(args)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            task,
            n0,
            count,
            seed,
            output,
        } => {
            let instances = generate(task.into(), n0, count, seed)?;
            let mut buf = Vec::new();
            write_instances(&mut buf, &instances)?;
            emit(output.as_deref(), &buf)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Fallible {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Fallible<Manifest> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(read_manifest(BufReader::new(file))?)
}

fn build_config(args: &RunArgs) -> Fallible<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            toml::from_str::<RunConfig>(&text)?
        }
        None => RunConfig::for_task(args.task.map(Task::from).unwrap_or(Task::LetterConcat)),
    };
    if let (Some(task), Some(_)) = (args.task, &args.config) {
        config.task = task.into();
    }
    if let Some(m) = &args.method {
        config.method = m.parse::<Method>()?;
    }
    if let Some(levels) = &args.levels {
        config.levels = levels.clone();
    }
    if let Some(v) = args.count {
        config.count = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(b) = args.backend {
        config.backend.kind = match b {
            BackendArg::Oracle => BackendKind::Oracle,
            BackendArg::Fault => BackendKind::Fault,
            BackendArg::Remote => BackendKind::Remote,
        };
    }
    let faults = &mut config.backend.faults;
    for (flag, slot) in [(args.p_d, &mut faults.p_d), (args.p_u, &mut faults.p_u), (args.p_m, &mut faults.p_m)] {
        if let Some(p) = flag {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("fault probability {p} is outside [0, 1]").into());
            }
            *slot = p;
        }
    }
    if let Some(v) = args.fault_seed {
        config.backend.fault_seed = v;
    }
    if let Some(v) = args.width {
        config.scheduler.width = v;
    }
    if let Some(v) = args.max_depth {
        config.scheduler.max_depth = v;
    }
    if let Some(v) = args.parallelism {
        config.scheduler.parallelism = v;
    }
    if let Some(v) = args.instance_parallelism {
        config.instance_parallelism = v;
    }
    if let Some(r) = args.regime {
        config.scheduler.regime = match r {
            RegimeArg::TaskSpecific => Regime::TaskSpecific,
            RegimeArg::Generic => Regime::Generic,
        };
    }
    if let Some(deps) = args.dependencies {
        config.scheduler.mode = if deps {
            DecompositionMode::WithDependencies
        } else {
            DecompositionMode::Independent
        };
    }
    if let Some(k) = args.samples {
        config.vote.k = k;
    }
    Ok(config)
}

fn run(args: RunArgs) -> Fallible<ExitCode> {
    let config = build_config(&args)?;
    config.validate()?;
    let backend = config.backend.build()?;
    let mut out = BufWriter::new(File::create(&args.output).map_err(|e| format!("{}: {e}", args.output.display()))?);
    let manifest = run_experiment(&config, backend.as_ref(), Some(&mut out))?;
    out.flush()?;
    print!("{}", render(&manifest, ReportFormat::Table, None)?);
    let failures = manifest.instances.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        eprintln!("{failures} instance(s) failed; see {}", args.output.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(path: &Path, output: Option<&Path>) -> Fallible<ExitCode> {
    let original = load_manifest(path)?;
    let replayed = match output {
        Some(p) => {
            let mut out = BufWriter::new(File::create(p)?);
            let m = replay_manifest(&original, Some(&mut out))?;
            out.flush()?;
            m
        }
        None => replay_manifest(&original, None)?,
    };
    let mismatches: Vec<&str> = original
        .instances
        .iter()
        .zip(&replayed.instances)
        .filter(|(a, b)| a.answer != b.answer || a.score != b.score)
        .map(|(a, _)| a.id.as_str())
        .collect();
    let same_len = original.instances.len() == replayed.instances.len();
    if same_len && mismatches.is_empty() {
        println!("replayed {} instances: answers and scores identical", original.instances.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "replay diverged: {} of {} instances differ{}",
            mismatches.len(),
            original.instances.len(),
            if same_len { "" } else { " (instance count changed)" }
        );
        for id in mismatches {
            eprintln!("  {id}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn simulate(a: SimulateArgs) -> Fallible {
    if a.trials == 0 {
        return Err("trials must be at least 1".into());
    }
    let shape = ShapeNode::full(&a.class, a.n0, a.width, a.depth);
    let acc = StepTriple::new(a.phi_d, a.phi_u, a.phi_m);
    let opts = SimOptions {
        correlation: a.correlation,
        variable_width: a.variable_width,
    };
    let estimate = monte_carlo_phi_with(&shape, &acc, a.trials, a.seed, opts);
    let report = check_theorem_conditions(&shape, &acc);
    let out = json!({
        "shape": { "class": a.class, "n0": a.n0, "width": a.width, "depth": a.depth, "steps": shape.step_count() },
        "closed_form": phi_rdd_closed_form(&shape, &acc),
        "monte_carlo": estimate,
        "theorems": report,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
