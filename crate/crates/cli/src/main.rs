//! `blindchan`: reproduction runs and diagnostics from the command line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blindchan::check::{run_checks, CheckLevel};
use blindchan::harness::{
    generate_instance, run_phase_grid, run_point, run_sweep, write_grid_csv, write_json, write_summary_csv, write_trials_csv,
    ExperimentResult, ExperimentSpec, Shape,
};
use blindchan::par::Execution;
use blindchan::solvers::sccc_matrix;
use blindchan::spectral::{eigenvalues_hermitian, spectral_gap};
use blindchan::xcorr::build_cross_corr_fast;
use blindchan::CMatrix;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blindchan", version, about = "Multichannel blind deconvolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue spectrum of the cross-correlation matrix, and of its subspace-constrained form when the config sets `d`.
    Gap(RunArgs),
    /// Monte Carlo trials at a single operating point.
    Trial(RunArgs),
    /// One-parameter sweep.
    Sweep(RunArgs),
    /// (D/K, L/K) phase grid.
    Phase(RunArgs),
    /// Run the invariant suites; exits nonzero on any violation.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (JSON, kebab-case keys).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; sidecars are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Level::Fast)]
    level: Level,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct Threads {
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, env = "BLINDCHAN_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gap(args) => cmd_gap(&args)?,
        Command::Trial(args) => cmd_experiment("trial", &args, Shape::Point)?,
        Command::Sweep(args) => cmd_experiment("sweep", &args, Shape::Sweep)?,
        Command::Phase(args) => cmd_experiment("phase", &args, Shape::Grid)?,
        Command::Check(args) => return cmd_check(&args),
    }
    Ok(ExitCode::SUCCESS)
}

fn init_threads(t: &Threads) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(t.threads).build_global().context("starting worker pool")
}

fn load_spec(args: &RunArgs) -> Result<(ExperimentSpec, serde_json::Value)> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut spec = ExperimentSpec::from_json(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let raw = serde_json::from_str(&text)?;
    Ok((spec, raw))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_provenance(command: &str, args: &RunArgs, spec: &ExperimentSpec) -> Result<()> {
    let record = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": args.config.display().to_string(),
        "seed": spec.seed,
        "spec-hash": spec.hash(),
        "spec": spec,
    });
    let mut w = create(&sidecar(&args.out, ".provenance.json"))?;
    serde_json::to_writer_pretty(&mut w, &record)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_experiment(command: &str, args: &RunArgs, shape: Shape) -> Result<()> {
    init_threads(&args.threads)?;
    let (spec, _) = load_spec(args)?;
    if spec.shape() != shape {
        bail!("`{command}` needs a {shape:?} config, but {} describes a {:?}", args.config.display(), spec.shape());
    }
    let exec = Execution::Parallel;
    let result = match shape {
        Shape::Point => run_point(&spec, exec)?,
        Shape::Sweep => run_sweep(&spec, exec)?,
        Shape::Grid => run_phase_grid(&spec, exec)?,
    };
    write_result(args, &result, shape)?;
    write_provenance(command, args, &spec)?;
    for s in &result.summaries {
        println!(
            "{:?} {}: p{}={:.4e} median={:.4e} degenerate={}/{}",
            s.label,
            s.method.name(),
            spec.percentile,
            s.percentile_error,
            s.median,
            s.degenerate,
            s.trials
        );
    }
    Ok(())
}

fn write_result(args: &RunArgs, result: &ExperimentResult, shape: Shape) -> Result<()> {
    let mut w = create(&args.out)?;
    match (args.format, shape) {
        (Format::Json, _) => write_json(result, &mut w)?,
        (Format::Csv, Shape::Grid) => write_grid_csv(result, &mut w)?,
        (Format::Csv, _) => write_summary_csv(result, &mut w)?,
    }
    w.flush()?;
    if args.format == Format::Csv {
        let mut t = create(&sidecar(&args.out, ".trials.csv"))?;
        write_trials_csv(result, &mut t)?;
        t.flush()?;
    }
    Ok(())
}

/// Eigenvalues in decreasing order, divided by the largest.
fn normalized_spectrum(a: &CMatrix) -> Result<Vec<f64>> {
    let mut values = eigenvalues_hermitian(a)?;
    values.sort_by(|x, y| y.total_cmp(x));
    let top = values[0];
    if top <= 0.0 {
        bail!("matrix has no positive eigenvalue");
    }
    Ok(values.into_iter().map(|v| v / top).collect())
}

fn write_spectrum(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_gap(args: &RunArgs) -> Result<()> {
    init_threads(&args.threads)?;
    let (spec, raw) = load_spec(args)?;
    if spec.shape() != Shape::Point {
        bail!("`gap` needs a single-point config");
    }
    let with_subspace = raw.get("d").is_some();
    let (_, point) = spec.points()?[0];
    let inst = generate_instance(&spec, &point, 0)?;

    let full = build_cross_corr_fast(&inst.ys, point.k)?.into_dense();
    let full_gap = spectral_gap(&full)?;
    let full_spec = normalized_spectrum(&full)?;
    println!("cross-correlation (n = {}): gap_ratio = {:.4e}", full_spec.len(), full_gap.gap_ratio);

    let constrained = if with_subspace {
        let a = sccc_matrix(&inst.ys, &inst.model, inst.sigma2)?;
        let g = spectral_gap(&a)?;
        let s = normalized_spectrum(&a)?;
        println!("subspace-constrained (n = {}, D = {}): gap_ratio = {:.4e}", s.len(), point.d, g.gap_ratio);
        Some((g, s))
    } else {
        None
    };

    match args.format {
        Format::Csv => {
            write_spectrum(&args.out, &full_spec)?;
            if let Some((_, s)) = &constrained {
                write_spectrum(&sidecar(&args.out, ".subspace"), s)?;
            }
        }
        Format::Json => {
            let mut doc = serde_json::json!({
                "k": point.k,
                "m": point.m,
                "l": point.l,
                "cross-correlation": { "gap-ratio": full_gap.gap_ratio, "spectrum": full_spec },
            });
            if let Some((g, s)) = &constrained {
                doc["subspace-constrained"] = serde_json::json!({ "d": point.d, "gap-ratio": g.gap_ratio, "spectrum": s });
            }
            let mut w = create(&args.out)?;
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    write_provenance("gap", args, &spec)
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode> {
    init_threads(&args.threads)?;
    let level = match args.level {
        Level::Fast => CheckLevel::Fast,
        Level::Full => CheckLevel::Full,
    };
    let report = run_checks(level);
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => {
            for r in &report.results {
                println!("{} {}: {}", if r.passed { "ok  " } else { "FAIL" }, r.name, r.detail);
            }
        }
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = report.failures().map(|r| r.name.as_str()).collect();
        eprintln!("invariant violations: {}", names.join(", "));
        Ok(ExitCode::FAILURE)
    }
}
