use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use rjca::gradcheck::{DEFAULT_EPS, DEFAULT_TOLERANCE};
use rjca::metrics::{evaluate_scores, read_scores_file, write_scores_file, DcfParams};
use rjca::pipeline::checkpoint::{load_checkpoint, save_checkpoint};
use rjca::pipeline::config::{parse_key_values, SystemKind, TrainConfig};
use rjca::pipeline::dataset::{load_dataset, TRIALS};
use rjca::pipeline::evaluate::{embed_all, fuse_score_lists, labelled_scores, score_trials};
use rjca::pipeline::experiment::{run_ablation, run_comparison, AblationReport, ComparisonReport};
use rjca::pipeline::gradsuite::run_standard_suite;
use rjca::pipeline::synth::{generate_synthetic_dataset, SynthConfig};
use rjca::pipeline::train::train;
use rjca::pipeline::trials::parse_trial_list;
use rjca::{Error, Result};

#[derive(Parser)]
#[command(name = "rjca", version, about = "Audio-visual speaker verification with recursive joint cross-attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct DcfArgs {
    #[arg(long, default_value_t = 0.05)]
    p_target: f64,
    #[arg(long, default_value_t = 1.0)]
    c_miss: f64,
    #[arg(long, default_value_t = 1.0)]
    c_fa: f64,
}

impl DcfArgs {
    fn params(&self) -> Result<DcfParams> {
        let p = DcfParams {
            p_target: self.p_target,
            c_miss: self.c_miss,
            c_fa: self.c_fa,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic audio-visual dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a model on the train split of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write `epoch_NNN.ckpt` here after every epoch.
        #[arg(long)]
        epoch_dir: Option<PathBuf>,
        /// Per-epoch loss log.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a trial list and report EER and minDCF.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to `<data>/trials.txt`.
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Embed both sides of every trial instead of caching per utterance.
        #[arg(long)]
        no_cache: bool,
        /// Second checkpoint (the visual system) for score-level fusion.
        #[arg(long)]
        fuse_with: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        audio_weight: f64,
        #[command(flatten)]
        dcf: DcfArgs,
    },
    /// Write one embedding per utterance: `id v1 v2 ...`.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every layer; nonzero exit on failure.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Metrics for an existing `label score` file.
    Metrics {
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        dcf: DcfArgs,
    },
    /// Train every system on synthetic data for several seeds and compare.
    Compare {
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Synthetic data config file.
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[arg(long)]
        with_cross_attention: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recursion-count ablation on synthetic data.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        iterations: Vec<usize>,
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("override `{s}` is not KEY=VALUE")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn train_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = &args.config {
        cfg.apply_str(&read_text(p)?)?;
    }
    for o in &args.overrides {
        let (k, v) = split_override(o)?;
        cfg.set(k, v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth_config(file: Option<&Path>, args: &ConfigArgs) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    if let Some(p) = file {
        for (k, v) in parse_key_values(&read_text(p)?)? {
            cfg.set(&k, &v)?;
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { out, cfg } => {
            let mut synth = SynthConfig::default();
            if let Some(p) = &cfg.config {
                for (k, v) in parse_key_values(&read_text(p)?)? {
                    synth.set(&k, &v)?;
                }
            }
            for o in &cfg.overrides {
                let (k, v) = split_override(o)?;
                synth.set(k, v)?;
            }
            if let Some(s) = cfg.seed {
                synth.seed = s;
            }
            let data = generate_synthetic_dataset(&synth, &out)?;
            println!(
                "wrote {} utterances and {} trials to {} (seed {})",
                data.dataset.utterances.len(),
                data.trials.len(),
                out.display(),
                synth.seed
            );
        }
        Command::Train {
            data,
            out,
            epoch_dir,
            loss_log,
            cfg,
        } => {
            let config = train_config(&cfg)?;
            let dataset = load_dataset(&data, Some(config.model.segments))?;
            println!("training {} with seed {}", config.system, config.seed);
            if let Some(dir) = &epoch_dir {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut epoch_err = None;
            let outcome = train(&config, &dataset, |s, model| {
                println!("epoch {:>3}  loss {:.6}", s.epoch, s.loss);
                if let Some(dir) = &epoch_dir {
                    let path = dir.join(format!("epoch_{:03}.ckpt", s.epoch));
                    if let Err(e) = save_checkpoint(model, &path) {
                        epoch_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = epoch_err {
                return Err(e);
            }
            save_checkpoint(&outcome.model, &out)?;
            if let Some(p) = &loss_log {
                let mut text = String::new();
                for s in &outcome.history {
                    let _ = writeln!(text, "{} {:?}", s.epoch, s.loss);
                }
                fs::write(p, text).map_err(|e| Error::io(p, e))?;
            }
            println!("saved {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            data,
            trials,
            scores,
            no_cache,
            fuse_with,
            audio_weight,
            dcf,
        } => {
            let params = dcf.params()?;
            let model = load_checkpoint(&checkpoint)?;
            let dataset = load_dataset(&data, Some(model.config.model.segments))?;
            let trial_path = trials.unwrap_or_else(|| data.join(TRIALS));
            let trials = parse_trial_list(&trial_path)?;
            let mut raw = score_trials(&model, &dataset, &trials, !no_cache)?;
            if let Some(other) = fuse_with {
                let visual = load_checkpoint(&other)?;
                let second = score_trials(&visual, &dataset, &trials, !no_cache)?;
                info!("fusing {} and {} at audio weight {audio_weight}", model.config.system, visual.config.system);
                raw = fuse_score_lists(&raw, &second, audio_weight)?;
            }
            let set = labelled_scores(&trials, &raw)?;
            if let Some(p) = &scores {
                write_scores_file(p, &set)?;
            }
            println!("{}", evaluate_scores(&set, &params)?);
        }
        Command::Embed { checkpoint, data, out } => {
            let model = load_checkpoint(&checkpoint)?;
            let dataset = load_dataset(&data, Some(model.config.model.segments))?;
            let utts: Vec<_> = dataset.utterances.iter().collect();
            let emb = embed_all(&model, &utts)?;
            let mut text = String::new();
            for u in &dataset.utterances {
                let _ = write!(text, "{}", u.id);
                for v in emb[&u.id].data() {
                    let _ = write!(text, " {v:?}");
                }
                text.push('\n');
            }
            fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
            println!("wrote {} embeddings to {}", utts.len(), out.display());
        }
        Command::Gradcheck { seed, eps, tolerance } => {
            let report = run_standard_suite(seed, eps, tolerance)?;
            println!("{report}");
            return Ok(report.passed());
        }
        Command::Metrics { scores, dcf } => {
            let set = read_scores_file(&scores)?;
            println!("{}", evaluate_scores(&set, &dcf.params()?)?);
        }
        Command::Compare {
            seeds,
            synth_config: synth_file,
            with_cross_attention,
            cfg,
        } => {
            let base = train_config(&cfg)?;
            let synth = synth_config(synth_file.as_deref(), &ConfigArgs::default())?;
            let mut systems = vec![
                SystemKind::Rjca,
                SystemKind::Concat,
                SystemKind::AudioOnly,
                SystemKind::VisualOnly,
            ];
            if with_cross_attention {
                systems.push(SystemKind::CrossAttention);
            }
            let first = cfg.seed.unwrap_or(0);
            let runs = (first..first + seeds)
                .map(|s| run_comparison(&synth, &base, &systems, s))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", ComparisonReport(&runs));
            let holds = runs.iter().filter(|r| r.ordering_holds() == Some(true)).count();
            println!("ordering holds in {holds} of {} seeds", runs.len());
        }
        Command::Ablate {
            iterations,
            synth_config: synth_file,
            cfg,
        } => {
            let base = train_config(&cfg)?;
            let synth = synth_config(synth_file.as_deref(), &ConfigArgs::default())?;
            println!("seed {}", base.seed);
            let rows = run_ablation(&synth, &base, &iterations, base.seed)?;
            print!("{}", AblationReport(&rows));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
