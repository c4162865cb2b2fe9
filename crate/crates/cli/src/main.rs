use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vprbench::runner::{self, RunConfig, RunOverrides, TechniqueKind};
use vprbench::{Error, Perturbation, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "vprbench",
    version,
    about = "Benchmark visual place recognition techniques"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one technique on one dataset and write a report.
    Run {
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset root directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// hog, seqslam, bow, vlad or external.
        #[arg(long)]
        technique: Option<String>,
        /// Report output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Close the PR curve at recall 0 before integrating.
        #[arg(long)]
        anchored_auc: bool,
    },
    /// Write a synthetic traverse as a dataset directory.
    Synth {
        #[arg(long)]
        frames: usize,
        /// "identity", or comma-separated brightness=, jitter=, shift=, noise=.
        #[arg(long, default_value = "identity")]
        perturb: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        window_radius: usize,
    },
    /// Print a CSV summary of several results.json files.
    Compare {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> vprbench::Result<()> {
    match cli.command {
        Command::Run {
            config,
            dataset,
            technique,
            out,
            seed,
            anchored_auc,
        } => {
            let overrides = RunOverrides {
                dataset_root: dataset,
                technique: technique
                    .as_deref()
                    .map(str::parse::<TechniqueKind>)
                    .transpose()?,
                output_dir: out,
                seed,
                anchored_auc,
            };
            let cfg = match config {
                Some(path) => RunConfig::from_file(&path, &overrides)?,
                None => overrides.into_config()?,
            };
            let evaluation = runner::run_evaluation(&cfg)?;
            let r = &evaluation.result;
            println!(
                "{} on {}: auc {} over {} queries ({} excluded), total match time {:.6e} s, {} bytes per descriptor",
                r.technique_id,
                r.dataset_name,
                runner::nine_significant(r.auc),
                r.evaluated_queries,
                r.excluded_queries,
                r.total_match_time_s,
                r.descriptor_bytes
            );
            println!("report written to {}", cfg.output_dir.display());
        }
        Command::Synth {
            frames,
            perturb,
            out,
            seed,
            window_radius,
        } => {
            let perturbation: Perturbation = perturb.parse()?;
            let spec = SyntheticSpec {
                window_radius,
                ..SyntheticSpec::new(frames, perturbation, seed)
            };
            let bundle = runner::synthesize(&spec, &out)?;
            println!(
                "wrote {} frame pairs of {} to {}",
                frames,
                bundle.name(),
                out.display()
            );
        }
        Command::Compare { results } => {
            print!("{}", runner::compare(&results)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}

fn report(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    msg
}
