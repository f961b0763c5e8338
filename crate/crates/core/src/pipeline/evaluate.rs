//! Embedding extraction and trial scoring.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::score_level_fusion;
use crate::metrics::{evaluate_scores, DcfParams, MetricsReport, ScoreSet};
use crate::objective::cosine_score;
use crate::pipeline::dataset::{Dataset, Utterance};
use crate::pipeline::model::Model;
use crate::pipeline::trials::TrialPair;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub scores: ScoreSet<f64>,
    pub report: MetricsReport,
}

/// Looks up every trial id, listing all missing ones in the error.
pub fn resolve_trials<'a>(dataset: &'a Dataset, trials: &[TrialPair]) -> Result<Vec<(&'a Utterance, &'a Utterance)>> {
    let index = dataset.index();
    let mut missing = BTreeSet::new();
    let mut pairs = Vec::with_capacity(trials.len());
    for t in trials {
        let e = index.get(t.enroll.as_str());
        let s = index.get(t.test.as_str());
        match (e, s) {
            (Some(e), Some(s)) => pairs.push((*e, *s)),
            _ => {
                if e.is_none() {
                    missing.insert(t.enroll.clone());
                }
                if s.is_none() {
                    missing.insert(t.test.clone());
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Resolution(missing.into_iter().collect()));
    }
    Ok(pairs)
}

/// Embeddings for the given utterances, keyed by id.
pub fn embed_all(model: &Model<f64>, utterances: &[&Utterance]) -> Result<HashMap<String, Tensor<f64>>> {
    utterances
        .par_iter()
        .map(|u| Ok((u.id.clone(), model.embed(&u.audio, &u.visual)?)))
        .collect()
}

/// Cosine score per trial. With `cache`, each utterance is embedded once;
/// otherwise both sides are embedded per trial. Both give identical scores.
pub fn score_trials(model: &Model<f64>, dataset: &Dataset, trials: &[TrialPair], cache: bool) -> Result<Vec<f64>> {
    let pairs = resolve_trials(dataset, trials)?;
    if cache {
        let mut seen = BTreeSet::new();
        let unique: Vec<&Utterance> = pairs
            .iter()
            .flat_map(|(e, t)| [*e, *t])
            .filter(|u| seen.insert(u.id.as_str()))
            .collect();
        let emb = embed_all(model, &unique)?;
        pairs
            .iter()
            .map(|(e, t)| cosine_score(&emb[&e.id], &emb[&t.id]))
            .collect()
    } else {
        pairs
            .par_iter()
            .map(|(e, t)| {
                let a = model.embed(&e.audio, &e.visual)?;
                let b = model.embed(&t.audio, &t.visual)?;
                cosine_score(&a, &b)
            })
            .collect()
    }
}

pub fn labelled_scores(trials: &[TrialPair], scores: &[f64]) -> Result<ScoreSet<f64>> {
    if trials.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "{} trials but {} scores",
            trials.len(),
            scores.len()
        )));
    }
    ScoreSet::new(scores.iter().zip(trials).map(|(&s, t)| (s, t.label)).collect())
}

pub fn evaluate_model(
    model: &Model<f64>,
    dataset: &Dataset,
    trials: &[TrialPair],
    params: &DcfParams,
) -> Result<Evaluation> {
    let raw = score_trials(model, dataset, trials, true)?;
    let scores = labelled_scores(trials, &raw)?;
    let report = evaluate_scores(&scores, params)?;
    Ok(Evaluation { scores, report })
}

/// Weighted sum of per-trial scores from an audio and a visual system.
pub fn fuse_score_lists(audio: &[f64], visual: &[f64], audio_weight: f64) -> Result<Vec<f64>> {
    if audio.len() != visual.len() {
        return Err(Error::Dimension(format!(
            "score lists differ in length: {} vs {}",
            audio.len(),
            visual.len()
        )));
    }
    audio
        .iter()
        .zip(visual)
        .map(|(&a, &v)| score_level_fusion(a, v, audio_weight))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::pipeline::config::{SystemKind, TrainConfig};
    use crate::pipeline::synth::{generate, SynthConfig};

    fn fixture() -> (Model<f64>, Dataset, Vec<TrialPair>) {
        let synth = SynthConfig {
            speakers: 5,
            utterances_per_speaker: 3,
            test_speakers: 3,
            audio_dim: 3,
            visual_dim: 2,
            segments: 3,
            ..SynthConfig::default()
        };
        let data = generate(&synth).unwrap();
        let mut cfg = TrainConfig {
            system: SystemKind::Rjca,
            hidden: 2,
            asp_dim: 2,
            embed_dim: 3,
            ..TrainConfig::default()
        };
        cfg.model.audio_dim = 3;
        cfg.model.visual_dim = 2;
        cfg.model.segments = 3;
        let model = Model::init(&cfg, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        (model, data.dataset, data.trials)
    }

    #[test]
    fn cache_does_not_change_scores() {
        let (m, ds, trials) = fixture();
        let a = score_trials(&m, &ds, &trials, true).unwrap();
        let b = score_trials(&m, &ds, &trials, false).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| (-1.0..=1.0).contains(s)));
        let ev = evaluate_model(&m, &ds, &trials, &DcfParams::default()).unwrap();
        assert_eq!(ev.scores.len(), trials.len());
    }

    #[test]
    fn missing_ids_are_all_listed() {
        let (m, ds, mut trials) = fixture();
        trials.push(TrialPair::new(crate::metrics::TrialLabel::Target, "ghost1", "ghost2"));
        trials.push(TrialPair::new(crate::metrics::TrialLabel::Target, "ghost1", &trials[0].test.clone()));
        match score_trials(&m, &ds, &trials, true) {
            Err(Error::Resolution(ids)) => assert_eq!(ids, vec!["ghost1".to_string(), "ghost2".to_string()]),
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn fused_lists() {
        assert_eq!(fuse_score_lists(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert!(fuse_score_lists(&[1.0], &[], 0.5).is_err());
    }
}
