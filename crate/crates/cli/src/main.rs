use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contextloc::datamodel::{
    generate_synthetic, read_json, write_json, Dataset, DetectionJson, Precision, VideoRecord,
};
use contextloc::pipeline::{
    ablate, detection_records, evaluate, gradcheck, infer, resume, train, Checkpoint, Config,
};
use contextloc::{Error, Result};

#[derive(Parser)]
#[command(name = "contextloc", version, about = "Context-enriched temporal action localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value config file; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::Io {
            path: self.out.clone(),
            source: e,
        })?;
        Ok(&self.out)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Float32,
    Float64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "float64")]
        precision: PrecisionArg,
    },
    /// Train a model; writes checkpoint.json and the per-epoch CSV log
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a checkpoint over a dataset; writes detections.json
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score detections against ground truth; writes map.csv
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detections: PathBuf,
        /// Dataset directory whose ground truth and class count are used
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of the full model gradient
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Four-way context ablation on synthetic data; writes ablation.csv
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Seeds to average over
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, precision } => {
            let cfg = common.config()?;
            let ds = generate_synthetic(&cfg.synthetic())?;
            let precision = match precision {
                PrecisionArg::Float32 => Precision::Float32,
                PrecisionArg::Float64 => Precision::Float64,
            };
            let out = common.out_dir()?;
            ds.save(out, precision)?;
            println!("wrote {} videos to {}", ds.videos.len(), out.display());
        }
        Command::Train { common, data, resume: from } => {
            let cfg = common.config()?;
            let ds = Dataset::load(&data)?;
            let outcome = match from {
                Some(p) => resume(&cfg, &ds, Checkpoint::load(&p)?)?,
                None => train(&cfg, &ds)?,
            };
            let out = common.out_dir()?;
            outcome.checkpoint.save(&out.join("checkpoint.json"))?;
            let single = outcome.logs.len() == 1;
            for log in &outcome.logs {
                let name = if single {
                    "train_log.csv".to_string()
                } else {
                    format!("train_log_{}.csv", log.stream.name())
                };
                write_text(&out.join(name), &log.to_csv())?;
                if let Some(last) = log.epochs.last() {
                    println!(
                        "{}: epoch {} loss {:.6} train_acc {:.4}",
                        log.stream.name(),
                        last.epoch,
                        last.loss_total,
                        last.train_acc
                    );
                }
            }
        }
        Command::Infer {
            common,
            checkpoint,
            data,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let dets = infer(&ck, &ds)?;
            let out = common.out_dir()?;
            write_json(&detection_records(&dets, &ds), &out.join("detections.json"))?;
            println!("wrote {} detections", dets.len());
        }
        Command::Eval {
            common,
            detections,
            data,
        } => {
            let cfg = common.config()?;
            let ds = Dataset::load(&data)?;
            let dets: Vec<VideoRecord<DetectionJson>> = read_json(&detections)?;
            let report = evaluate(&dets, &ds.ground_truth_records(), ds.num_classes, &cfg.eval_thresholds)?;
            let out = common.out_dir()?;
            write_text(&out.join("map.csv"), &report.to_csv())?;
            write_text(&out.join("map_per_class.csv"), &report.per_class_csv())?;
            print!("{}", report.to_csv());
            println!("average,{:.6}", report.average);
        }
        Command::Gradcheck { common } => {
            let cfg = common.config()?;
            let outcome = gradcheck(&cfg)?;
            let out = common.out_dir()?;
            write_text(&out.join("gradcheck.csv"), &outcome.report())?;
            print!("{}", outcome.report());
            if !outcome.passed() {
                return Err(Error::Numerical(format!(
                    "gradient check failed: max relative error {:e}",
                    outcome.max_rel_error
                )));
            }
            println!("PASS");
        }
        Command::Ablate { common, seeds } => {
            let cfg = common.config()?;
            let report = ablate(&cfg, &seeds)?;
            let out = common.out_dir()?;
            write_text(&out.join("ablation.csv"), &report.to_csv())?;
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are validation errors (1); exit code 2 is reserved for
    // numerical failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
