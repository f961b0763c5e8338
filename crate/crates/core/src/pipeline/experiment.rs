//! Synthetic fusion comparison and iteration ablation.

use std::fmt::{self, Write as _};

use log::info;

use crate::error::Result;
use crate::metrics::DcfParams;
use crate::pipeline::config::{SystemKind, TrainConfig};
use crate::pipeline::dataset::Dataset;
use crate::pipeline::evaluate::{evaluate_model, fuse_score_lists, labelled_scores, score_trials};
use crate::pipeline::synth::{generate, SynthConfig};
use crate::pipeline::train::train;
use crate::pipeline::trials::TrialPair;
use crate::metrics::evaluate_scores;

/// Audio weight used when fusing the two unimodal systems at score level.
pub const SCORE_FUSION_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemResult {
    pub name: String,
    pub eer: f64,
    pub min_dcf: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRun {
    pub seed: u64,
    pub results: Vec<SystemResult>,
}

impl ComparisonRun {
    pub fn eer_of(&self, name: &str) -> Option<f64> {
        self.results.iter().find(|r| r.name == name).map(|r| r.eer)
    }

    /// RJCA beats concatenation, concatenation beats chance, and RJCA is no worse
    /// than either single modality.
    pub fn ordering_holds(&self) -> Option<bool> {
        let rjca = self.eer_of(SystemKind::Rjca.as_str())?;
        let concat = self.eer_of(SystemKind::Concat.as_str())?;
        let audio = self.eer_of(SystemKind::AudioOnly.as_str())?;
        let visual = self.eer_of(SystemKind::VisualOnly.as_str())?;
        Some(rjca < concat && concat < 0.5 && rjca <= audio && rjca <= visual)
    }
}

/// Data and training settings aligned to the same feature shapes.
pub fn aligned_configs(synth: &SynthConfig, base: &TrainConfig, seed: u64) -> (SynthConfig, TrainConfig) {
    let synth = SynthConfig { seed, ..synth.clone() };
    let mut train = TrainConfig { seed, ..base.clone() };
    train.model.audio_dim = synth.audio_dim;
    train.model.visual_dim = synth.visual_dim;
    train.model.segments = synth.segments;
    (synth, train)
}

fn train_and_score(config: &TrainConfig, dataset: &Dataset, trials: &[TrialPair]) -> Result<(Vec<f64>, f64)> {
    let outcome = train(config, dataset, |s, _| {
        log::debug!("{} epoch {}: {:.5}", config.system, s.epoch, s.loss)
    })?;
    let scores = score_trials(&outcome.model, dataset, trials, true)?;
    let loss = outcome.history.last().map_or(f64::NAN, |s| s.loss);
    Ok((scores, loss))
}

/// Trains each system on one synthetic draw and scores the held-out trials.
/// With both unimodal systems present, their score-level fusion is added.
pub fn run_comparison(
    synth: &SynthConfig,
    base: &TrainConfig,
    systems: &[SystemKind],
    seed: u64,
) -> Result<ComparisonRun> {
    let (synth, base) = aligned_configs(synth, base, seed);
    let data = generate(&synth)?;
    let params = DcfParams::default();
    let mut results = Vec::new();
    let mut unimodal = (None, None);
    for &system in systems {
        let cfg = TrainConfig { system, ..base.clone() };
        let (scores, final_loss) = train_and_score(&cfg, &data.dataset, &data.trials)?;
        let report = evaluate_scores(&labelled_scores(&data.trials, &scores)?, &params)?;
        info!("seed {seed} {system}: EER {:.4} minDCF {:.4}", report.eer, report.min_dcf);
        results.push(SystemResult {
            name: system.to_string(),
            eer: report.eer,
            min_dcf: report.min_dcf,
            final_loss,
        });
        match system {
            SystemKind::AudioOnly => unimodal.0 = Some(scores),
            SystemKind::VisualOnly => unimodal.1 = Some(scores),
            _ => {}
        }
    }
    if let (Some(a), Some(v)) = unimodal {
        let fused = fuse_score_lists(&a, &v, SCORE_FUSION_WEIGHT)?;
        let report = evaluate_scores(&labelled_scores(&data.trials, &fused)?, &params)?;
        results.push(SystemResult {
            name: "score_fusion".into(),
            eer: report.eer,
            min_dcf: report.min_dcf,
            final_loss: f64::NAN,
        });
    }
    Ok(ComparisonRun { seed, results })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub iterations: usize,
    pub eer: f64,
    pub min_dcf: f64,
    pub final_loss: f64,
}

/// RJCA at each recursion count on one synthetic draw.
pub fn run_ablation(
    synth: &SynthConfig,
    base: &TrainConfig,
    iterations: &[usize],
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let (synth, base) = aligned_configs(synth, base, seed);
    let data = generate(&synth)?;
    let params = DcfParams::default();
    let mut rows = Vec::new();
    for &t in iterations {
        let mut cfg = TrainConfig {
            system: SystemKind::Rjca,
            ..base.clone()
        };
        cfg.model.iterations = t;
        let outcome = train(&cfg, &data.dataset, |_, _| {})?;
        let ev = evaluate_model(&outcome.model, &data.dataset, &data.trials, &params)?;
        info!("T={t}: EER {:.4} minDCF {:.4}", ev.report.eer, ev.report.min_dcf);
        rows.push(AblationRow {
            iterations: t,
            eer: ev.report.eer,
            min_dcf: ev.report.min_dcf,
            final_loss: outcome.history.last().map_or(f64::NAN, |s| s.loss),
        });
    }
    Ok(rows)
}

pub struct AblationReport<'a>(pub &'a [AblationRow]);

impl fmt::Display for AblationReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10} {:>10} {:>10} {:>12}", "iterations", "EER", "minDCF", "final_loss")?;
        for r in self.0 {
            writeln!(
                f,
                "{:>10} {:>10.4} {:>10.4} {:>12.5}",
                r.iterations, r.eer, r.min_dcf, r.final_loss
            )?;
        }
        Ok(())
    }
}

pub struct ComparisonReport<'a>(pub &'a [ComparisonRun]);

impl fmt::Display for ComparisonReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:<16} {:>10} {:>10} {:>12}", "seed", "system", "EER", "minDCF", "final_loss");
        for run in self.0 {
            for r in &run.results {
                let _ = writeln!(
                    out,
                    "{:>6} {:<16} {:>10.4} {:>10.4} {:>12.5}",
                    run.seed, r.name, r.eer, r.min_dcf, r.final_loss
                );
            }
            if let Some(ok) = run.ordering_holds() {
                let _ = writeln!(out, "{:>6} ordering {}", run.seed, if ok { "holds" } else { "violated" });
            }
        }
        f.write_str(&out)
    }
}
