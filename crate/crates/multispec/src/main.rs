use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multispec::config::ExperimentConfig;
use multispec::{pipeline, Result};

#[derive(Parser)]
#[command(name = "multispec", version, about = "Acoustic scene classification from three spectrogram views")]
struct Cli {
    /// INI configuration file; ASC_<SECTION>_<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `section.key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its manifest into the output directory.
    Synth,
    /// Compute normalized patch triples for the train and evaluation splits.
    Extract,
    TrainEncoder,
    /// Write encoder features for every source as ASCF files.
    Features,
    TrainDecoder,
    /// Score the evaluation split from audio.
    Evaluate {
        /// Use the encoder heads instead of the trained decoder.
        #[arg(long)]
        encoder_only: bool,
    },
    /// Accuracy against crop length.
    EarlyEval {
        #[arg(long)]
        encoder_only: bool,
    },
    /// Every combiner, alone and with each decoder.
    Grid,
    /// Finite-difference gradient checks of every layer.
    Gradcheck,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve(&cli)?;
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match cli.command {
        Command::Synth => {
            let m = pipeline::synth(&cfg)?;
            println!("manifest {}", m.display());
        }
        Command::Extract => pipeline::extract(&cfg)?,
        Command::TrainEncoder => pipeline::train_encoder_cmd(&cfg)?,
        Command::Features => pipeline::features(&cfg)?,
        Command::TrainDecoder => pipeline::train_decoder_cmd(&cfg)?,
        Command::Evaluate { encoder_only } => {
            let rep = pipeline::evaluate(&cfg, !encoder_only)?;
            println!("accuracy {:.6} over {} segments", rep.overall, rep.segments);
        }
        Command::EarlyEval { encoder_only } => {
            for (k, a) in pipeline::early_eval(&cfg, !encoder_only)? {
                match a {
                    Some(a) => println!("{k:>6.2} s  {a:.6}"),
                    None => println!("{k:>6.2} s  undefined"),
                }
            }
        }
        Command::Grid => {
            for r in pipeline::grid(&cfg)? {
                let dec = r.decoder.map_or("encoder", |d| d.name());
                println!("{:<4} {:<8} {:.6}", r.combiner.name(), dec, r.accuracy);
            }
        }
        Command::Gradcheck => {
            pipeline::write_snapshot(&cfg, "gradcheck")?;
            let mut ok = true;
            for r in multispec_core::checks::gradient_suite(cfg.seed)? {
                ok &= r.passed();
                let verdict = if r.passed() { "ok" } else { "FAIL" };
                println!("{verdict:<4} {:.3e}  {}", r.max_rel_error, r.name);
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
