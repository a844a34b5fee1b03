use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caim_bench::error::BenchError;
use caim_bench::output::{emit_all, read_json};
use caim_bench::svg::{emit_svg, PlotKind};
use caim_bench::{run_experiment, ExperimentConfig};
use caim_core::ising::{brute_force_ground, load_problem};
use caim_core::text::sig12;
use clap::{Parser, Subcommand};
use log::{info, warn};

#[derive(Parser)]
#[command(name = "caim", version, about = "Analog Ising machine simulator with adaptive injection control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its result bundle.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exhaustive ground-state search for a problem file.
    Oracle { problem: PathBuf },
    /// Render a plot from a saved bundle.
    Plot {
        bundle: PathBuf,
        #[arg(long)]
        kind: PlotKind,
        /// Defaults to `<kind>.svg` next to the bundle.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() {
    let Ok(v) = std::env::var("CAIM_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(k) if k > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                warn!("could not size the thread pool: {e}");
            }
        }
        _ => warn!("ignoring CAIM_THREADS={v:?}"),
    }
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), BenchError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
    let bundle = run_experiment(&cfg)?;
    for p in emit_all(&bundle, &dir)? {
        info!("wrote {}", p.display());
    }
    for pt in &bundle.points {
        println!(
            "{} {}={} mean_r={} exact_success={} pHat_mean={} tts_median={}",
            pt.machine.name(),
            cfg.scenario.name(),
            sig12(pt.sweep_value),
            sig12(pt.mean_r),
            pt.exact_success.map(sig12).unwrap_or_else(|| "-".into()),
            sig12(pt.p_hat_mean),
            sig12(pt.tts_median)
        );
    }
    if !bundle.equivalence.is_empty() {
        let eq = bundle.equivalence.iter().filter(|e| e.equivalent).count();
        println!("equivalent at {eq} of {} (instance, mu) cells", bundle.equivalence.len());
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn oracle(problem: &Path) -> Result<(), BenchError> {
    let p = load_problem(problem)?;
    let report = brute_force_ground(&p)?;
    let out = serde_json::json!({
        "n": p.n(),
        "h0": report.h0,
        "ground": report.ground,
        "gap": report.levels.gap(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
    Ok(())
}

fn plot(bundle: &Path, kind: PlotKind, out: Option<PathBuf>) -> Result<(), BenchError> {
    let b = read_json(bundle)?;
    let name = match kind {
        PlotKind::EnergyTrace => "energy_trace.svg",
        PlotKind::SweepCurve => "sweep_curve.svg",
        PlotKind::MuTrace => "mu_trace.svg",
    };
    let path = out.unwrap_or_else(|| bundle.with_file_name(name));
    emit_svg(&b, kind, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => run(&config, out, seed),
        Command::Oracle { problem } => oracle(&problem),
        Command::Plot { bundle, kind, out } => plot(&bundle, kind, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
