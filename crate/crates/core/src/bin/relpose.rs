use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use relpose::bench::evaluate;
use relpose::io::{read_json, write_json_pretty, write_text};
use relpose::synth::{generate_corpus, manifest_paths, GenSpec, ManifestEntry, ScenarioPair};
use relpose::tuner::{tune, tune_layerwise_opts, GammaFile, TrainingSet, TuneOptions, TunedParams};
use relpose::{solve, ConsistencyParams, IoError, KeypointSet, Mode, SolveError, SolverConfig};

#[derive(Parser)]
#[command(name = "relpose", version, about = "Relative pose estimation for partial scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    Generate {
        /// Generator spec: one object or an array of them.
        #[arg(long)]
        spec: PathBuf,
        /// Seed range `a..b` (exclusive) or `a..=b`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the pose between two keypoint sets.
    Solve {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        gamma: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a corpus and write the accuracy report.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        gamma: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fit the consistency scales to a corpus.
    Tune {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "gamma-init")]
        gamma_init: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// One scale vector per outer round instead of a shared one.
        #[arg(long)]
        layerwise: bool,
        #[arg(long, default_value_t = 30)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-2)]
        fd_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Io(IoError),
    Unsolvable(SolveError),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Many(Vec<GenSpec>),
    One(GenSpec),
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Usage(format!("--seeds expects `a..b` or `a..=b`, got `{text}`"));
    let (a, b, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(Failure::Usage(format!("seed range `{text}` is empty")));
    }
    Ok(seeds)
}

fn load_gamma(path: Option<&Path>) -> Result<GammaFile, Failure> {
    match path {
        Some(p) => Ok(read_json(p)?),
        None => Ok(GammaFile::Plain(ConsistencyParams::default())),
    }
}

fn load_config(path: Option<&Path>, gamma: &GammaFile, mode: Option<Mode>) -> Result<SolverConfig, Failure> {
    let mut config: SolverConfig = match path {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if config.per_iter_gammas.is_none() {
        if let Some(per) = gamma.per_iter_gammas() {
            config.outer_iters = per.len();
            config.per_iter_gammas = Some(per.to_vec());
        }
    }
    if let Some(m) = mode {
        config.mode = m;
    }
    config
        .validate()
        .map_err(|e| Failure::Usage(format!("invalid solver config: {e}")))?;
    Ok(config)
}

fn load_corpus(manifest: &Path) -> Result<Vec<ScenarioPair>, Failure> {
    let entries: Vec<ManifestEntry> = read_json(manifest)?;
    if entries.is_empty() {
        return Err(Failure::Usage(format!("{}: manifest lists no pairs", manifest.display())));
    }
    manifest_paths(manifest, &entries)
        .iter()
        .map(|p| read_json(p).map_err(Failure::from))
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { spec, seeds, out } => {
            let seeds = parse_seeds(&seeds)?;
            let grid = match read_json::<SpecFile>(&spec)? {
                SpecFile::Many(v) => v,
                SpecFile::One(s) => vec![s],
            };
            for (i, s) in grid.iter().enumerate() {
                s.validate()
                    .map_err(|e| Failure::Usage(format!("{} entry {i}: {e}", spec.display())))?;
            }
            let manifest = generate_corpus(&grid, &seeds, &out)?;
            eprintln!("wrote {} pairs to {}", manifest.len(), out.display());
        }
        Command::Solve {
            source,
            target,
            gamma,
            config,
            mode,
            out,
        } => {
            let q1: KeypointSet = read_json(&source)?;
            let q2: KeypointSet = read_json(&target)?;
            let gamma = load_gamma(gamma.as_deref())?;
            let config = load_config(config.as_deref(), &gamma, mode)?;
            let result = solve(&q1, &q2, &gamma.gamma(), &config).map_err(Failure::Unsolvable)?;
            write_json_pretty(&out, &result)?;
        }
        Command::Bench {
            manifest,
            gamma,
            config,
            mode,
            report,
            json,
        } => {
            let pairs = load_corpus(&manifest)?;
            let gamma = load_gamma(gamma.as_deref())?;
            let config = load_config(config.as_deref(), &gamma, mode)?;
            let metrics = evaluate(&pairs, &gamma.gamma(), &config);
            write_text(&report, &metrics.to_csv())?;
            if let Some(json) = json {
                write_json_pretty(&json, &metrics)?;
            }
            eprintln!("{} pairs, {} failures", pairs.len(), metrics.failures);
        }
        Command::Tune {
            manifest,
            gamma_init,
            config,
            layerwise,
            max_iters,
            fd_step,
            out,
        } => {
            let train = TrainingSet::new(load_corpus(&manifest)?)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let gamma = load_gamma(gamma_init.as_deref())?;
            let config = load_config(config.as_deref(), &gamma, None)?;
            let tuned = if layerwise {
                let opts = TuneOptions {
                    fd_step,
                    max_iters,
                    ..TuneOptions::default()
                };
                let r = tune_layerwise_opts(&train, &gamma.gamma(), &config, &opts)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                TunedParams {
                    gamma: r.gammas[0],
                    per_iter_gammas: Some(r.gammas),
                    initial_loss: r.initial_loss,
                    final_loss: r.final_loss,
                }
            } else {
                let r = tune(&train, &gamma.gamma(), &config, fd_step, max_iters)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                TunedParams {
                    gamma: r.gamma,
                    per_iter_gammas: None,
                    initial_loss: r.initial_loss,
                    final_loss: r.final_loss,
                }
            };
            eprintln!("loss {} -> {}", tuned.initial_loss, tuned.final_loss);
            write_json_pretty(&out, &tuned)?;
        }
    }
    Ok(())
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
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Unsolvable(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_degenerate() { 2 } else { 1 })
        }
    }
}
