use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use basins::experiment::{dump_plot, read_points_csv, run_dir, run_manifest, ExperimentError, LoadedPartition, Manifest, PlotOptions};
use basins::oracle::{verify_identifiability, ChainFixture};
use clap::{Parser, Subcommand};

/// Identify metastable basins of simulators with a siamese pair classifier.
#[derive(Parser)]
#[command(name = "basins", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment manifest and print per-repeat scores.
    Run {
        manifest: PathBuf,
        /// Override the manifest's repeat count.
        #[arg(long)]
        repeats: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Assign basins to the states in a points CSV using a saved partition.
    Indicate {
        /// A repeat directory or its classifier.ckpt.
        checkpoint: PathBuf,
        points: PathBuf,
        /// Seed for the indicator trajectories.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write assignments here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write trajectories of a saved repeat as plot-ready CSV.
    DumpPlot {
        /// A repeat directory.
        dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        trajectories: usize,
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Defaults to `<dir>/plot.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the risk bounds on a finite chain given as JSON.
    VerifyTheorem {
        chain: PathBuf,
        #[arg(long)]
        t_star: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_PIPELINE: u8 = 2;
const EXIT_UNMET: u8 = 3;

fn fail(e: &ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_PIPELINE })
}

fn configure_workers() -> Result<(), String> {
    let Ok(value) = std::env::var("NBI_WORKERS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("NBI_WORKERS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(manifest: PathBuf, repeats: Option<usize>, seed: Option<u64>, output: Option<PathBuf>) -> ExitCode {
    let mut m = match Manifest::load(&manifest) {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    if let Some(r) = repeats {
        m.num_repeats = r;
    }
    if let Some(s) = seed {
        m.seed = s;
    }
    if output.is_some() {
        m.output_dir = output;
    }
    let summary = match run_manifest(&m) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    print!("{}", summary.table());
    if let Some(dir) = run_dir(&m) {
        println!("results written to {}", dir.display());
    }
    for u in &summary.unmet {
        println!("unmet: {u}");
    }
    if summary.failures > 0 {
        ExitCode::from(EXIT_PIPELINE)
    } else if !summary.passed() {
        ExitCode::from(EXIT_UNMET)
    } else {
        ExitCode::SUCCESS
    }
}

fn indicate(checkpoint: PathBuf, points: PathBuf, seed: u64, output: Option<PathBuf>) -> ExitCode {
    let result = (|| -> Result<(), ExperimentError> {
        let loaded = LoadedPartition::load(&checkpoint)?;
        let states = read_points_csv(&points, loaded.dimension())?;
        let labels = loaded.indicate(&states, seed)?;
        let mut text = String::from("point,basin\n");
        for (p, l) in labels.iter().enumerate() {
            text += &format!("{p},{l}\n");
        }
        match output {
            Some(path) => fs::write(&path, text).map_err(|source| ExperimentError::Io { path, source }),
            None => io::stdout().write_all(text.as_bytes()).map_err(|source| ExperimentError::Io {
                path: "<stdout>".into(),
                source,
            }),
        }
    })();
    result.map_or_else(|e| fail(&e), |_| ExitCode::SUCCESS)
}

fn dump(dir: PathBuf, trajectories: usize, stride: usize, output: Option<PathBuf>) -> ExitCode {
    let result = (|| -> Result<PathBuf, ExperimentError> {
        let loaded = LoadedPartition::load(&dir)?;
        let path = output.unwrap_or_else(|| dir.join("plot.csv"));
        let file = fs::File::create(&path).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        dump_plot(
            &loaded,
            PlotOptions {
                trajectories_per_candidate: trajectories,
                stride,
            },
            &mut w,
        )?;
        w.flush().map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    })();
    match result {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn verify(chain: PathBuf, t_star: Option<usize>, horizon: Option<usize>) -> ExitCode {
    let text = match fs::read_to_string(&chain) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", chain.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let fixture = match ChainFixture::from_json(&text) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}: {e}", chain.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let (Some(t_star), Some(horizon)) = (t_star.or(fixture.t_star), horizon.or(fixture.horizon)) else {
        eprintln!("error: t_star and horizon must be given in the file or as flags");
        return ExitCode::from(EXIT_VALIDATION);
    };
    match verify_identifiability(&fixture.chain, t_star, horizon) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.holds() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} bound violation(s)", report.violations);
                ExitCode::from(EXIT_UNMET)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match cli.command {
        Command::Run {
            manifest,
            repeats,
            seed,
            output,
        } => run(manifest, repeats, seed, output),
        Command::Indicate {
            checkpoint,
            points,
            seed,
            output,
        } => indicate(checkpoint, points, seed, output),
        Command::DumpPlot {
            dir,
            trajectories,
            stride,
            output,
        } => dump(dir, trajectories, stride, output),
        Command::VerifyTheorem { chain, t_star, horizon } => verify(chain, t_star, horizon),
    }
}
