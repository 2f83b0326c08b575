use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fadogate_cli::commands::{
    cmd_evaluate, cmd_extract, cmd_predict, cmd_train, AnalysisOptions, EvaluateOptions,
    PredictInput, TrainOptions,
};
use fadogate_cli::synth::{generate_corpus, SynthSpec, DEFAULT_CLIP_S};
use fadogate_core::eval::EvalMode;
use fadogate_core::features::FeatureConfig;
use fadogate_core::ExcerptStrategy;

#[derive(Parser)]
#[command(name = "fadogate", version, about = "Fado / not-Fado song classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for every song in a manifest into a cache file
    Extract {
        /// CSV manifest with a `path,label` header
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train a model from a feature cache
    Train {
        cache: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
        /// Training report (default: <model>.train.json)
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(short = 'C', long = "c")]
        c: Option<f64>,
        #[arg(short, long)]
        gamma: Option<f64>,
        /// Grid-search C and gamma even if both are given
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classify audio files or the rows of a feature cache
    Predict {
        #[arg(short, long)]
        model: PathBuf,
        /// Feature cache to classify instead of audio files
        #[arg(long, conflicts_with = "audio")]
        cache: Option<PathBuf>,
        /// WAV files
        #[arg(required_unless_present = "cache")]
        audio: Vec<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Cross-validate or run a train/test split on a feature cache
    Evaluate {
        cache: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Cv)]
        mode: Mode,
        /// Fixed C; with gamma omitted too, both come from a grid search
        #[arg(short = 'C', long = "c")]
        c: Option<f64>,
        #[arg(short, long)]
        gamma: Option<f64>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Excerpt strategy the cache was built with, recorded in the report
        #[arg(long)]
        strategy: Option<ExcerptStrategy>,
    },
    /// Write a seeded synthetic two-class corpus and its manifest
    GenCorpus {
        out_dir: PathBuf,
        #[arg(short, long, default_value_t = 100)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CLIP_S)]
        duration: f64,
        #[arg(long, default_value_t = fadogate_core::CANONICAL_SAMPLE_RATE)]
        sample_rate: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Cv,
    Split,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = ExcerptStrategy::MaxRms)]
    strategy: ExcerptStrategy,
    /// Excerpt length in seconds
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Analysis rate; input is resampled down to it
    #[arg(long, default_value_t = fadogate_core::CANONICAL_SAMPLE_RATE)]
    sample_rate: u32,
    #[arg(long, default_value_t = 2048)]
    fft_size: usize,
    #[arg(long, default_value_t = 40)]
    mel_filters: usize,
}

impl AnalysisArgs {
    fn options(&self) -> AnalysisOptions {
        // 50 ms frames, half overlapping
        let frame_len = ((self.sample_rate as f64 * 0.05) as usize) & !1;
        AnalysisOptions {
            strategy: self.strategy,
            duration_s: self.duration,
            features: FeatureConfig {
                frame_len,
                hop: frame_len / 2,
                fft_size: self.fft_size,
                n_mel_filters: self.mel_filters,
                high_band_hz: (8000.0, (self.sample_rate as f64 / 2.0).min(11025.0)),
                sample_rate: self.sample_rate,
                ..FeatureConfig::default()
            },
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            manifest,
            out,
            analysis,
            jobs,
        } => {
            let s = cmd_extract(&manifest, &out, &analysis.options(), jobs)?;
            println!("processed {}, failed {}", s.processed, s.failed.len());
        }
        Command::Train {
            cache,
            model,
            report,
            c,
            gamma,
            grid,
            folds,
            seed,
        } => {
            let report = report.unwrap_or_else(|| model.with_extension("train.json"));
            let opts = TrainOptions {
                c,
                gamma,
                grid,
                folds,
                seed,
                ..TrainOptions::default()
            };
            let r = cmd_train(&cache, &model, &report, &opts)?;
            match r.cv_accuracy {
                Some(acc) => println!(
                    "C = {}, gamma = {}, {folds}-fold CV accuracy {acc:.2}%",
                    r.c, r.gamma
                ),
                None => println!("C = {}, gamma = {}", r.c, r.gamma),
            }
        }
        Command::Predict {
            model,
            cache,
            audio,
            analysis,
        } => {
            let input = match &cache {
                Some(c) => PredictInput::Cache(c),
                None => PredictInput::Audio(&audio),
            };
            for p in cmd_predict(&model, input, &analysis.options())? {
                println!("{}\t{}\t{}", p.id, p.label, p.decision_value);
            }
        }
        Command::Evaluate {
            cache,
            out,
            mode,
            c,
            gamma,
            k,
            train_fraction,
            seed,
            strategy,
        } => {
            let mode = match mode {
                Mode::Cv => EvalMode::Cv,
                Mode::Split => EvalMode::Split,
            };
            let opts = EvaluateOptions {
                mode,
                c,
                gamma,
                folds: k,
                train_fraction,
                seed,
                strategy,
            };
            let r = cmd_evaluate(&cache, &out, &opts)?;
            let m = r.confusion;
            println!(
                "accuracy {:.2}% (C = {}, gamma = {})",
                r.accuracy, r.params.c, r.params.gamma
            );
            println!("              actual fado  actual other");
            println!(
                "pred. fado    {:>11}  {:>12}",
                m.pred_fado_actual_fado, m.pred_fado_actual_other
            );
            println!(
                "pred. other   {:>11}  {:>12}",
                m.pred_other_actual_fado, m.pred_other_actual_other
            );
        }
        Command::GenCorpus {
            out_dir,
            n_per_class,
            seed,
            duration,
            sample_rate,
        } => {
            let spec = SynthSpec {
                n_per_class,
                seed,
                duration_s: duration,
                sample_rate,
            };
            let manifest = generate_corpus(&spec, &out_dir)?;
            println!(
                "wrote {} clips, manifest {}",
                2 * n_per_class,
                manifest.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
