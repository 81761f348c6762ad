use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use wstfl::classify::EmConfig;
use wstfl::evalkit::{EvalConfig, SoftNmsConfig};
use wstfl::gpr::GprConfig;
use wstfl::io::{read_jsonl, write_bytes, write_json, write_jsonl, ClipRecord, Header, ProposalRecord};
use wstfl::pipeline::{
    checkpoint, eval_records, fuse_records, history_csv, nms_records, propose_records,
    refine_records, run_pipeline, run_synth, train_em, PipelineConfig, RefineConfig, TargetMode,
};
use wstfl::proposals::ExtractConfig;
use wstfl::synth::SynthConfig;
use wstfl::tcr::RescaleMode;
use wstfl::{Error, Result};

/// Weakly supervised temporal forgery localization toolkit.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the scorer by EM and write predicted activations.
    TrainEm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 0.125)]
        k_ratio: f64,
        #[arg(long, default_value_t = 0.8)]
        lambda1: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda2: f64,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        #[arg(long, default_value_t = 0.0001)]
        delta: f64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for scorer.json, history.csv and predictions.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Project frame attribute rows onto the clip-level target.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long)]
        rescale_infeasible: bool,
        #[arg(long, default_value_t = 0.125)]
        k_ratio: f64,
        #[arg(long, value_enum, default_value_t = RescaleArg::MeanAttention)]
        rescale_mode: RescaleArg,
        #[arg(long, value_enum, default_value_t = TargetArg::Softmax)]
        target: TargetArg,
    },
    /// Extract preliminary proposals.
    Propose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        /// Comma-separated ascending thresholds.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        min_len: usize,
    },
    /// Graph-refine proposals into pseudo labels.
    Fuse {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        clips: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        beta: f64,
        #[arg(long, default_value_t = 0.5)]
        semantic_weight: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Soft-NMS over each clip's proposals.
    Nms {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0.001)]
        score_floor: f64,
        #[arg(long, default_value_t = 100)]
        max_keep: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// mAP / mAR of predictions against clip ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',')]
        map_ious: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        ar_budgets: Option<Vec<usize>>,
        /// Report JSON path; the text table goes next to it as `.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RescaleArg {
    MeanAttention,
    CurrentMass,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Softmax,
    Mean,
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn read_clips(path: &Path) -> Result<Vec<ClipRecord>> {
    Ok(read_jsonl::<ClipRecord>(path)?.1)
}

fn read_props(path: &Path) -> Result<Vec<ProposalRecord>> {
    Ok(read_jsonl::<ProposalRecord>(path)?.1)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            config,
            out_dir,
            seed,
        } => {
            let mut cfg: SynthConfig = match config {
                Some(p) => load_config(&p)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run_synth(&cfg, &out_dir)?;
        }
        Command::TrainEm {
            data,
            m,
            k_ratio,
            lambda1,
            lambda2,
            tau,
            delta,
            epochs,
            lr,
            seed,
            out,
        } => {
            let base = EmConfig::default();
            let cfg = EmConfig {
                m,
                k_ratio,
                lambda1,
                lambda2,
                tau,
                delta,
                epochs: epochs.unwrap_or(base.epochs),
                learning_rate: lr.unwrap_or(base.learning_rate),
                seed,
                ..base
            };
            let clips = read_clips(&data)?;
            let (fit, predicted) = train_em(&clips, &cfg)?;
            write_json(&out.join("scorer.json"), &checkpoint(&fit, &cfg))?;
            write_bytes(&out.join("history.csv"), history_csv(&fit).as_bytes())?;
            write_jsonl(&out.join("predictions.jsonl"), &Header::new("clips", "train-em"), &predicted)?;
        }
        Command::Refine {
            input,
            out,
            tol,
            max_iter,
            rescale_infeasible,
            k_ratio,
            rescale_mode,
            target,
        } => {
            let mut cfg = RefineConfig::default();
            cfg.ips.tol = tol;
            cfg.ips.max_iter = max_iter;
            cfg.ips.rescale_infeasible = rescale_infeasible;
            cfg.k_ratio = k_ratio;
            cfg.ips.rescale_mode = match rescale_mode {
                RescaleArg::MeanAttention => RescaleMode::MeanAttention,
                RescaleArg::CurrentMass => RescaleMode::CurrentMass,
            };
            cfg.target = match target {
                TargetArg::Softmax => TargetMode::Softmax,
                TargetArg::Mean => TargetMode::Mean,
            };
            let refined = refine_records(&read_clips(&input)?, &cfg)?;
            write_jsonl(&out, &Header::new("clips", "refine"), &refined)?;
        }
        Command::Propose {
            input,
            out,
            alpha,
            thresholds,
            min_len,
        } => {
            let base = ExtractConfig::default();
            let cfg = ExtractConfig {
                thresholds: thresholds.unwrap_or(base.thresholds),
                min_len,
                alpha,
            };
            let props = propose_records(&read_clips(&input)?, &cfg)?;
            write_jsonl(&out, &Header::new("proposals", "propose"), &props)?;
        }
        Command::Fuse {
            proposals,
            clips,
            beta,
            semantic_weight,
            out,
        } => {
            let cfg = GprConfig {
                beta,
                semantic_weight,
                ..GprConfig::default()
            };
            let pseudo = fuse_records(&read_props(&proposals)?, &read_clips(&clips)?, &cfg)?;
            write_jsonl(&out, &Header::new("proposals", "fuse"), &pseudo)?;
        }
        Command::Nms {
            input,
            sigma,
            score_floor,
            max_keep,
            out,
        } => {
            let cfg = SoftNmsConfig {
                sigma,
                score_floor,
                max_keep,
            };
            let fin = nms_records(&read_props(&input)?, &cfg)?;
            write_jsonl(&out, &Header::new("proposals", "nms"), &fin)?;
        }
        Command::Eval {
            pred,
            gt,
            map_ious,
            ar_budgets,
            out,
        } => {
            let base = EvalConfig::default();
            let cfg = EvalConfig {
                map_ious: map_ious.unwrap_or(base.map_ious),
                ar_budgets: ar_budgets.unwrap_or(base.ar_budgets),
                ar_ious: base.ar_ious,
            };
            let report = eval_records(&read_props(&pred)?, &read_clips(&gt)?, &cfg)?;
            write_json(&out, &report)?;
            let table = report.to_table();
            write_bytes(&out.with_extension("txt"), table.as_bytes())?;
            print!("{table}");
        }
        Command::Pipeline {
            config,
            seed,
            out_dir,
        } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            if seed.is_some() {
                cfg.seed = seed;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            let report = run_pipeline(&cfg)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
