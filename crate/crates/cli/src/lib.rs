//! Command-line surface: argument parsing, configuration precedence and
//! command dispatch. Exit codes: 0 success, 2 usage or configuration
//! error, 3 data or file error, 4 numeric failure.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use bcenhance::audio::{read_wav, write_wav, WavEncoding};
use bcenhance::model::{config_hash, read_checkpoint};
use bcenhance::toy::write_toy_corpus;
use bcenhance::trainer::{
    enhance, evaluate, evaluation_ids, extract_dataset, list_pairs, resume, train, TrainConfig, TrainState,
};
use bcenhance::vocoder::SAMPLE_RATE;
use bcenhance::{Error, Result};
use clap::{Args, Parser, Subcommand};

pub use plot::{plot_losses, plot_spectrograms, LOSS_PLOT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bcenhance", version, about = "Bone-conducted speech enhancement", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic paired corpus (bc/ and ac/ WAV files).
    Toy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        count: usize,
        #[arg(long, default_value_t = 0.64)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cache vocoder features as .bcf1 files beside every WAV of a dataset.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train (or resume training) on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Run directory for checkpoints, loss log and config.
        #[arg(long)]
        out: PathBuf,
        /// Flat `key = value` configuration file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Enhance one BC recording with a trained checkpoint.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Write 32-bit float samples instead of 16-bit PCM.
        #[arg(long)]
        float: bool,
    },
    /// Score enhanced test utterances against their AC references.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Record file (tab-separated id, stoi, lsd, then an average row).
        #[arg(long)]
        output: PathBuf,
        /// Evaluate every utterance instead of the held-out split.
        #[arg(long)]
        all: bool,
    },
    /// Render loss curves and, with a checkpoint and dataset, spectrograms.
    Plot {
        /// Run directory containing loss.log.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the run's latest checkpoint when a dataset is given.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Maximum number of spectrogram triptychs.
        #[arg(long, default_value_t = 4)]
        limit: usize,
    },
}

/// Training settings settable from the command line. Each overrides the
/// configuration-file value of the same key.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_generator: Option<f64>,
    #[arg(long)]
    pub lr_discriminator: Option<f64>,
    #[arg(long)]
    pub lambda_cyc: Option<f64>,
    #[arg(long)]
    pub lambda_id: Option<f64>,
    /// least_squares or negative_log_likelihood
    #[arg(long)]
    pub adversarial_form: Option<String>,
    #[arg(long)]
    pub crop_frames: Option<usize>,
    /// parallel or nonparallel
    #[arg(long)]
    pub mapping: Option<String>,
    /// dual or baseline
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub width_divisor: Option<usize>,
    /// patch or fully_connected
    #[arg(long)]
    pub defect_head: Option<String>,
    /// full or real_only
    #[arg(long)]
    pub discriminator_update: Option<String>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("lr_generator", self.lr_generator.map(|v| v.to_string()));
        put("lr_discriminator", self.lr_discriminator.map(|v| v.to_string()));
        put("lambda_cyc", self.lambda_cyc.map(|v| v.to_string()));
        put("lambda_id", self.lambda_id.map(|v| v.to_string()));
        put("adversarial_form", self.adversarial_form.clone());
        put("crop_frames", self.crop_frames.map(|v| v.to_string()));
        put("mapping", self.mapping.clone());
        put("variant", self.variant.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("width_divisor", self.width_divisor.map(|v| v.to_string()));
        put("defect_head", self.defect_head.clone());
        put("discriminator_update", self.discriminator_update.clone());
        put("checkpoint_every", self.checkpoint_every.map(|v| v.to_string()));
        out
    }
}

/// Effective training configuration: defaults, then the file, then flags.
pub fn resolve_train_config(file: Option<&Path>, overrides: &Overrides) -> Result<TrainConfig> {
    let mut cfg = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
            TrainConfig::from_text(&text)?
        }
        None => TrainConfig::default(),
    };
    for (k, v) in overrides.pairs() {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} {} is not a directory", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} {} does not exist", path.display())))
    }
}

fn load_state(path: &Path) -> Result<TrainState> {
    require_file(path, "checkpoint")?;
    TrainState::from_checkpoint(&read_checkpoint(path)?)
}

/// Removes what a failed command left behind.
struct Cleanup {
    paths: Vec<PathBuf>,
}

impl Cleanup {
    fn new() -> Self {
        Self { paths: Vec::new() }
    }

    /// Registers `path` for removal on failure if it does not exist yet.
    fn track(&mut self, path: &Path) {
        if !path.exists() {
            self.paths.push(path.to_path_buf());
        }
    }

    fn run(self) {
        for p in self.paths.into_iter().rev() {
            let removed = if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) };
            if removed.is_ok() {
                log::info!("removed partial output {}", p.display());
            }
        }
    }
}

fn run_train(
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    resume_from: Option<&Path>,
    overrides: &Overrides,
    cleanup: &mut Cleanup,
) -> Result<()> {
    require_dir(dataset, "dataset")?;
    if let Some(c) = config {
        require_file(c, "config file")?;
    }
    if let Some(r) = resume_from {
        require_file(r, "checkpoint")?;
    }
    let cfg = resolve_train_config(config, overrides)?;
    let text = cfg.to_text();
    let hash: String = config_hash(&text).iter().map(|b| format!("{b:02x}")).collect();
    println!("effective configuration (sha256 {hash}):\n{text}");
    // a fresh run directory goes away if training fails before any checkpoint
    let fresh = !out.exists();
    let outcome = match resume_from {
        Some(ckpt) => resume(&cfg, ckpt, dataset, out),
        None => train(&cfg, dataset, out),
    };
    if outcome.is_err() && fresh {
        let has_checkpoint = fs::read_dir(out)
            .map(|d| d.flatten().any(|e| e.path().extension().is_some_and(|x| x == "bcck")))
            .unwrap_or(false);
        if !has_checkpoint {
            cleanup.paths.push(out.to_path_buf());
        }
    }
    let outcome = outcome?;
    println!(
        "trained {} iterations; checkpoint {}; loss log {}",
        outcome.iterations,
        outcome.checkpoint.display(),
        outcome.loss_log.display()
    );
    Ok(())
}

fn dispatch(command: &Command, cleanup: &mut Cleanup) -> Result<()> {
    match command {
        Command::Toy {
            out,
            count,
            seconds,
            seed,
        } => {
            cleanup.track(out);
            let ids = write_toy_corpus(out, *count, *seconds, *seed)?;
            println!("wrote {} utterance pairs to {}", ids.len(), out.display());
        }
        Command::Extract { dataset } => {
            require_dir(dataset, "dataset")?;
            let s = extract_dataset(dataset)?;
            println!("{} files extracted, {} already cached", s.extracted, s.cached);
        }
        Command::Train {
            dataset,
            out,
            config,
            resume,
            overrides,
        } => run_train(dataset, out, config.as_deref(), resume.as_deref(), overrides, cleanup)?,
        Command::Enhance {
            checkpoint,
            input,
            output,
            float,
        } => {
            require_file(input, "input")?;
            let state = load_state(checkpoint)?;
            let (samples, rate) = read_wav(input)?;
            let enhanced = enhance(&state, &samples, rate)?;
            let encoding = if *float { WavEncoding::Float32 } else { WavEncoding::Pcm16 };
            cleanup.track(output);
            write_wav(output, &enhanced, SAMPLE_RATE, encoding)?;
            println!("wrote {}", output.display());
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            output,
            all,
        } => {
            require_dir(dataset, "dataset")?;
            let state = load_state(checkpoint)?;
            let ids = if *all {
                list_pairs(dataset)?
            } else {
                evaluation_ids(dataset, state.config.seed)?
            };
            let report = evaluate(&state, dataset, &ids)?;
            print!("{}", report.to_table());
            cleanup.track(output);
            fs::write(output, report.to_records()).map_err(|e| Error::Io {
                path: output.clone(),
                source: e,
            })?;
        }
        Command::Plot {
            run,
            out,
            checkpoint,
            dataset,
            limit,
        } => {
            require_dir(run, "run directory")?;
            cleanup.track(out);
            fs::create_dir_all(out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let losses = plot_losses(&run.join(bcenhance::trainer::LOSS_LOG), &out.join(LOSS_PLOT))?;
            println!("wrote {}", losses.display());
            if let Some(dataset) = dataset {
                require_dir(dataset, "dataset")?;
                let ckpt = checkpoint
                    .clone()
                    .unwrap_or_else(|| run.join(bcenhance::trainer::LATEST_CHECKPOINT));
                let state = load_state(&ckpt)?;
                for p in plot_spectrograms(&state, dataset, out, *limit)? {
                    println!("wrote {}", p.display());
                }
            } else if checkpoint.is_some() {
                return Err(Error::Input("--checkpoint needs --dataset for spectrograms".into()));
            }
        }
    }
    Ok(())
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let mut cleanup = Cleanup::new();
    match dispatch(&cli.command, &mut cleanup) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            cleanup.run();
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}
