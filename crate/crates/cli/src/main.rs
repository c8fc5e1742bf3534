//! `notchseq`: batch front end over the `notchseq` library.
//!
//! Problem files are JSON objects with the `DesignProblem` fields plus
//! optional `score`, `solver`, `lpnn` and `variant` entries. Flags override
//! file values. JSON on stdout has alphabetically ordered keys.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use notchseq::baselines::{
    run_lpnn, run_shape, LpnnConfig, Variant, DEFAULT_MAX_ITERS, DEFAULT_SHAPE_TOL,
};
use notchseq::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use notchseq::oracle::exhaustive_search;
use notchseq::problem::validate_problem;
use notchseq::rounding::run_design;
use notchseq::sdp::solve_relaxation;
use notchseq::{DesignProblem, Error, ScoreKind, SolverConfig};
use serde_json::{json, Value};

/// Exit status for "ran fine, nothing feasible".
const EXIT_NO_FEASIBLE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "notchseq",
    version,
    about = "Binary sequence design with shaped DFT spectra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relaxation plus randomized rounding; prints the design result.
    Design(ProblemArgs),
    /// Exhaustive search (n <= 24).
    Oracle(ProblemArgs),
    /// SHAPE baseline.
    Shape(BaselineArgs),
    /// LPNN baseline.
    Lpnn(BaselineArgs),
    /// Runs an experiment and writes `<kind>_<seed>.csv`.
    Experiment(ExperimentArgs),
    /// Writes the relaxation matrix as row-major CSV.
    DumpSdp(ProblemArgs),
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// JSON problem file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// message_power, rejection_ratio or reciprocal_dynamic_range.
    #[arg(long)]
    score: Option<String>,
    /// Also write the primary output to this file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the best sequence as one line of ±1 entries.
    #[arg(long)]
    sequence_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// unimodular or binary.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    shape_max_iters: Option<usize>,
    #[arg(long)]
    lpnn_step: Option<f64>,
    #[arg(long)]
    lpnn_c0: Option<f64>,
    #[arg(long)]
    lpnn_max_iters: Option<usize>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment file; omit to use the defaults of `--kind`.
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    kind: Option<String>,
    /// Full-size runs (n = 128, larger trial counts) instead of desk scale.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    output: PathBuf,
    /// Add wall-clock columns (non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    shape_max_iters: Option<usize>,
    #[arg(long)]
    lpnn_step: Option<f64>,
    #[arg(long)]
    lpnn_c0: Option<f64>,
    #[arg(long)]
    lpnn_max_iters: Option<usize>,
}

/// Parsed problem file with flag overrides applied.
struct Loaded {
    problem: DesignProblem,
    score: ScoreKind,
    solver: SolverConfig,
    lpnn: LpnnConfig,
    variant: Variant,
    shape_max_iters: usize,
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> anyhow::Result<T> {
    serde_json::from_value(Value::String(text.into()))
        .with_context(|| format!("unknown {what} '{text}'"))
}

fn take<T: serde::de::DeserializeOwned>(
    obj: &mut serde_json::Map<String, Value>,
    key: &str,
) -> anyhow::Result<Option<T>> {
    obj.remove(key)
        .map(|v| serde_json::from_value(v).with_context(|| format!("invalid '{key}' entry")))
        .transpose()
}

fn load(args: &ProblemArgs) -> anyhow::Result<Loaded> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut value: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    let Some(obj) = value.as_object_mut() else {
        bail!("{} must hold a JSON object", args.config.display())
    };
    let score = take(obj, "score")?.unwrap_or_default();
    let solver = take(obj, "solver")?.unwrap_or_default();
    let lpnn = take(obj, "lpnn")?.unwrap_or_default();
    let variant = take(obj, "variant")?.unwrap_or(Variant::Binary);
    let shape_max_iters = take(obj, "shape_max_iters")?.unwrap_or(DEFAULT_MAX_ITERS);
    let mut problem: DesignProblem = serde_json::from_value(value).context("invalid problem")?;
    if let Some(seed) = args.seed {
        problem.seed = seed;
    }
    if let Some(trials) = args.trials {
        problem.trials = trials;
    }
    if let Some(alpha) = args.alpha {
        problem.alpha = alpha;
    }
    let score = match &args.score {
        Some(s) => parse_enum("score", s)?,
        None => score,
    };
    Ok(Loaded {
        problem: validate_problem(problem)?,
        score,
        solver,
        lpnn,
        variant,
        shape_max_iters,
    })
}

/// Pretty JSON with sorted keys and a trailing newline.
fn render<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    // `Value` objects are BTreeMaps, so the round trip sorts every level.
    let sorted: Value = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&sorted)? + "\n")
}

fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    print!("{text}");
    if let Some(path) = output {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_sequence(path: Option<&Path>, line: Option<String>) -> anyhow::Result<()> {
    if let (Some(path), Some(line)) = (path, line) {
        fs::write(path, line + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_design(args: &ProblemArgs) -> anyhow::Result<u8> {
    let l = load(args)?;
    let sol = match solve_relaxation(&l.problem, &l.solver) {
        Ok(sol) => sol,
        Err(e @ Error::InfeasibleRelaxation { .. }) => {
            let result = json!({
                "best": null,
                "n_feasible": 0,
                "n_trials": l.problem.trials,
                "feasibility_rate": 0.0,
                "score_kind": l.score,
                "error": e.to_string(),
            });
            emit(&render(&result)?, args.output.as_deref())?;
            return Ok(EXIT_NO_FEASIBLE);
        }
        Err(e) => return Err(e.into()),
    };
    let result = run_design(&l.problem, &sol, l.score)?;
    emit(&render(&result)?, args.output.as_deref())?;
    write_sequence(
        args.sequence_out.as_deref(),
        result.best.as_ref().map(|b| b.sequence.to_line()),
    )?;
    Ok(if result.best.is_some() {
        0
    } else {
        EXIT_NO_FEASIBLE
    })
}

fn cmd_oracle(args: &ProblemArgs) -> anyhow::Result<u8> {
    let l = load(args)?;
    match exhaustive_search(&l.problem) {
        Ok(result) => {
            emit(&render(&result)?, args.output.as_deref())?;
            write_sequence(
                args.sequence_out.as_deref(),
                Some(result.best(l.score).sequence.to_line()),
            )?;
            Ok(0)
        }
        Err(Error::NoFeasible) => {
            let result = json!({ "best_by_power": null, "best_by_rho": null, "best_by_chi": null, "n_feasible": 0 });
            emit(&render(&result)?, args.output.as_deref())?;
            Ok(EXIT_NO_FEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn baseline_overrides(
    lpnn: &mut LpnnConfig,
    shape_max_iters: &mut usize,
    step: Option<f64>,
    c0: Option<f64>,
    lpnn_iters: Option<usize>,
    shape_iters: Option<usize>,
) {
    if let Some(v) = step {
        lpnn.step = v;
    }
    if let Some(v) = c0 {
        lpnn.c0 = v;
    }
    if let Some(v) = lpnn_iters {
        lpnn.max_iters = v;
    }
    if let Some(v) = shape_iters {
        *shape_max_iters = v;
    }
}

fn cmd_baseline(args: &BaselineArgs, shape: bool) -> anyhow::Result<u8> {
    let mut l = load(&args.problem)?;
    let variant = match &args.variant {
        Some(v) => parse_enum("variant", v)?,
        None => l.variant,
    };
    baseline_overrides(
        &mut l.lpnn,
        &mut l.shape_max_iters,
        args.lpnn_step,
        args.lpnn_c0,
        args.lpnn_max_iters,
        args.shape_max_iters,
    );
    let p = &l.problem;
    let run = if shape {
        run_shape(p, variant, l.shape_max_iters, DEFAULT_SHAPE_TOL, p.seed)?
    } else {
        run_lpnn(p, variant, &l.lpnn, p.seed)?
    };
    emit(&render(&run)?, args.problem.output.as_deref())?;
    Ok(0)
}

fn cmd_dump_sdp(args: &ProblemArgs) -> anyhow::Result<u8> {
    let l = load(args)?;
    let sol = solve_relaxation(&l.problem, &l.solver)?;
    let mut buf = Vec::new();
    sol.write_csv(&mut buf)?;
    emit(std::str::from_utf8(&buf)?, args.output.as_deref())?;
    Ok(0)
}

fn cmd_experiment(args: &ExperimentArgs) -> anyhow::Result<u8> {
    let seed = args.seed.unwrap_or(0);
    let mut cfg = match (&args.config, &args.kind) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
                cfg.problem.seed = seed;
            }
            cfg
        }
        (None, Some(kind)) => ExperimentConfig::defaults(
            parse_enum::<ExperimentKind>("experiment kind", kind)?,
            args.paper_scale,
            seed,
        )?,
        (None, None) => bail!("either a config file or --kind is required"),
    };
    if let Some(trials) = args.trials {
        cfg.problem.trials = trials;
    }
    if let Some(alpha) = args.alpha {
        cfg.problem.alpha = alpha;
    }
    cfg.timing |= args.timing;
    baseline_overrides(
        &mut cfg.lpnn,
        &mut cfg.shape_max_iters,
        args.lpnn_step,
        args.lpnn_c0,
        args.lpnn_max_iters,
        args.shape_max_iters,
    );
    cfg.problem = validate_problem(cfg.problem)?;
    cfg.validate()?;

    let start = Instant::now();
    let report = run_experiment(&cfg)?;
    fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let path = args.output.join(report.file_name());
    let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    report.write_csv(file)?;
    println!(
        "wrote {} rows ({} failed) to {} in {:.1} s",
        report.rows.len(),
        report.failures(),
        path.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(if report.failures() > 0 { 1 } else { 0 })
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()?;
    }
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Shape(a) => cmd_baseline(a, true),
        Command::Lpnn(a) => cmd_baseline(a, false),
        Command::Experiment(a) => cmd_experiment(a),
        Command::DumpSdp(a) => cmd_dump_sdp(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
