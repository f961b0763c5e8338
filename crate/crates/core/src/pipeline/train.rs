//! Mini-batch training with the AAM objective.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pipeline::config::TrainConfig;
use crate::pipeline::dataset::{Dataset, Split, Utterance};
use crate::pipeline::model::Model;
use crate::pipeline::optim::Optimizer;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-utterance loss over the epoch.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f64>,
    /// Class index to speaker name.
    pub speakers: Vec<String>,
    pub history: Vec<EpochStats>,
}

/// Training utterances with their class index.
pub fn labelled_examples(dataset: &Dataset) -> Result<(Vec<(&Utterance, usize)>, Vec<String>)> {
    let speakers = dataset.speakers(Split::Train);
    if speakers.is_empty() {
        return Err(Error::Input("dataset has no training utterances".into()));
    }
    let examples = dataset
        .split(Split::Train)
        .map(|u| {
            let class = speakers.binary_search(&u.speaker).expect("speaker listed");
            (u, class)
        })
        .collect();
    Ok((examples, speakers))
}

fn check_dims(config: &TrainConfig, dataset: &Dataset) -> Result<()> {
    let m = &config.model;
    match dataset.dims() {
        Some(d) if d == (m.audio_dim, m.visual_dim, m.segments) => Ok(()),
        Some(d) => Err(Error::Config(format!(
            "dataset has (d_a, d_v, L) = {d:?}, config expects ({}, {}, {})",
            m.audio_dim, m.visual_dim, m.segments
        ))),
        None => Err(Error::Input("empty dataset".into())),
    }
}

/// Trains a fresh model. Same config and data give bit-identical results regardless
/// of thread count: per-sample gradients are reduced in batch order.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    mut on_epoch: impl FnMut(&EpochStats, &Model<f64>),
) -> Result<TrainOutcome> {
    config.validate()?;
    check_dims(config, dataset)?;
    let (examples, speakers) = labelled_examples(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::<f64>::init(config, speakers.len(), &mut rng)?;
    info!(
        "training {} on {} utterances, {} speakers, {} parameters",
        config.system,
        examples.len(),
        speakers.len(),
        model.parameter_count()
    );
    let mut optimizer = Optimizer::new(config, &model.tensors());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut sample_loss = vec![0.0; examples.len()];
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let current = &model;
            let results: Vec<Result<(f64, Vec<Tensor<f64>>)>> = batch
                .par_iter()
                .map(|&i| {
                    let (u, class) = examples[i];
                    current.loss_and_gradients(&u.audio, &u.visual, class, config.debug_checks)
                })
                .collect();
            let mut total: Option<Vec<Tensor<f64>>> = None;
            for (&i, r) in batch.iter().zip(results) {
                let (loss, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, step, loss });
                }
                sample_loss[i] = loss;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.data_mut().iter_mut().zip(g.data()).for_each(|(a, g)| *a += g);
                        }
                    }
                }
            }
            let mut grads = total.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
                if !g.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: f64::NAN,
                    });
                }
            }
            optimizer.step(&mut model.tensors_mut(), &grads)?;
            if model.tensors().iter().any(|t| !t.is_finite()) {
                let loss = batch.iter().map(|&i| sample_loss[i]).sum::<f64>() * inv;
                return Err(Error::Divergence { epoch, step, loss });
            }
        }
        let loss = sample_loss.iter().sum::<f64>() / examples.len() as f64;
        let stats = EpochStats { epoch, loss };
        debug!("epoch {epoch}: loss {loss:.6}");
        history.push(stats);
        on_epoch(&stats, &model);
    }
    if model.quantize_f32().is_err() {
        let loss = history.last().map_or(f64::NAN, |s: &EpochStats| s.loss);
        return Err(Error::Divergence {
            epoch: config.epochs,
            step,
            loss,
        });
    }
    Ok(TrainOutcome {
        model,
        speakers,
        history,
    })
}
