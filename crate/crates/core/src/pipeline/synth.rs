//! Synthetic audio-visual identity data.
//!
//! Every speaker `k` draws a latent identity `z_k ~ N(0, I)`. Two fixed random
//! mixing maps project it into each modality:
//!
//! ```text
//! audio column l  = A z_k + audio_noise  * n_l   (n: unit-variance AR(1) over l)
//! visual column l = V z_k + visual_noise * e_l   (e: i.i.d. standard normal)
//! ```
//!
//! With `burst_prob > 0`, each audio segment is independently hit by an extra
//! `burst_noise * N(0, I)` burst with that probability.
//!
//! The last `test_speakers` speakers are held out and receive a balanced trial list.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::metrics::TrialLabel;
use crate::pipeline::config::{parse_key_values, ConfigValue};
use crate::pipeline::dataset::{write_dataset, Dataset, Split, Utterance, TRIALS};
use crate::pipeline::trials::{write_trial_list, TrialPair};
use crate::tensor::Tensor;

pub const SYNTH_CONFIG: &str = "synth.cfg";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub segments: usize,
    pub latent_dim: usize,
    pub audio_noise: f64,
    pub visual_noise: f64,
    /// AR(1) coefficient of the audio noise across segments.
    pub smoothing: f64,
    /// Probability that an audio segment is hit by a noise burst.
    pub burst_prob: f64,
    /// Standard deviation of the burst noise.
    pub burst_noise: f64,
    /// Probability that an audio segment carries another speaker's identity.
    pub interference_prob: f64,
    pub test_speakers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            speakers: 50,
            utterances_per_speaker: 10,
            audio_dim: 16,
            visual_dim: 16,
            segments: 8,
            latent_dim: 8,
            audio_noise: 0.5,
            visual_noise: 1.5,
            smoothing: 0.8,
            burst_prob: 0.0,
            burst_noise: 3.0,
            interference_prob: 0.0,
            test_speakers: 10,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("speakers", self.speakers),
            ("utterances_per_speaker", self.utterances_per_speaker),
            ("audio_dim", self.audio_dim),
            ("visual_dim", self.visual_dim),
            ("segments", self.segments),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.test_speakers > self.speakers {
            return Err(Error::Config("more test speakers than speakers".into()));
        }
        if !(self.audio_noise >= 0.0 && self.visual_noise >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.interference_prob) {
            return Err(Error::Config("interference_prob must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.burst_prob) || !(self.burst_noise >= 0.0) {
            return Err(Error::Config("burst_prob must be in [0, 1] and burst_noise non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Config(format!("smoothing must be in [0, 1), got {}", self.smoothing)));
        }
        Ok(())
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "speakers = {}", self.speakers);
        let _ = writeln!(out, "utterances_per_speaker = {}", self.utterances_per_speaker);
        let _ = writeln!(out, "audio_dim = {}", self.audio_dim);
        let _ = writeln!(out, "visual_dim = {}", self.visual_dim);
        let _ = writeln!(out, "segments = {}", self.segments);
        let _ = writeln!(out, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(out, "audio_noise = {:?}", self.audio_noise);
        let _ = writeln!(out, "visual_noise = {:?}", self.visual_noise);
        let _ = writeln!(out, "smoothing = {:?}", self.smoothing);
        let _ = writeln!(out, "burst_prob = {:?}", self.burst_prob);
        let _ = writeln!(out, "burst_noise = {:?}", self.burst_noise);
        let _ = writeln!(out, "interference_prob = {:?}", self.interference_prob);
        let _ = writeln!(out, "test_speakers = {}", self.test_speakers);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = ConfigValue(key, value);
        match key {
            "speakers" => self.speakers = v.parse()?,
            "utterances_per_speaker" => self.utterances_per_speaker = v.parse()?,
            "audio_dim" => self.audio_dim = v.parse()?,
            "visual_dim" => self.visual_dim = v.parse()?,
            "segments" => self.segments = v.parse()?,
            "latent_dim" => self.latent_dim = v.parse()?,
            "audio_noise" => self.audio_noise = v.parse()?,
            "visual_noise" => self.visual_noise = v.parse()?,
            "smoothing" => self.smoothing = v.parse()?,
            "burst_prob" => self.burst_prob = v.parse()?,
            "burst_noise" => self.burst_noise = v.parse()?,
            "interference_prob" => self.interference_prob = v.parse()?,
            "test_speakers" => self.test_speakers = v.parse()?,
            "seed" => self.seed = v.parse()?,
            _ => return Err(Error::Config(format!("unknown synth key `{key}`"))),
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut cfg = SynthConfig::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub trials: Vec<TrialPair>,
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::matrix(rows, cols, data).expect("finite gaussian samples")
}

pub fn speaker_id(k: usize) -> String {
    format!("spk{k:03}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.latent_dim;
    let l = cfg.segments;
    let mix_std = 1.0 / (r as f64).sqrt();
    let audio_map = gaussian(cfg.audio_dim, r, mix_std, &mut rng);
    let visual_map = gaussian(cfg.visual_dim, r, mix_std, &mut rng);
    let innovation = (1.0 - cfg.smoothing * cfg.smoothing).sqrt();

    let first_test = cfg.speakers - cfg.test_speakers;
    let project = |map: &Tensor<f64>, z: &Tensor<f64>| -> Vec<f64> {
        (0..map.rows())
            .map(|i| (0..r).map(|j| map.at(i, j) * z.at(j, 0)).sum())
            .collect()
    };
    let latents: Vec<Tensor<f64>> = (0..cfg.speakers).map(|_| gaussian(r, 1, 1.0, &mut rng)).collect();
    let audio_clean: Vec<Vec<f64>> = latents.iter().map(|z| project(&audio_map, z)).collect();
    let visual_clean: Vec<Vec<f64>> = latents.iter().map(|z| project(&visual_map, z)).collect();

    let mut utterances = Vec::with_capacity(cfg.speakers * cfg.utterances_per_speaker);
    for k in 0..cfg.speakers {
        let split = if k >= first_test { Split::Test } else { Split::Train };
        // Interferers come from the same split so held-out identities never leak.
        let pool = if k >= first_test { first_test..cfg.speakers } else { 0..first_test };
        for u in 0..cfg.utterances_per_speaker {
            let mut audio = vec![0.0; cfg.audio_dim * l];
            for c in 0..l {
                let mut source = k;
                if cfg.interference_prob > 0.0 && pool.len() > 1 && rng.random::<f64>() < cfg.interference_prob {
                    while source == k {
                        source = rng.random_range(pool.clone());
                    }
                }
                let burst = cfg.burst_prob > 0.0 && rng.random::<f64>() < cfg.burst_prob;
                for i in 0..cfg.audio_dim {
                    audio[i * l + c] = audio_clean[source][i];
                    if burst {
                        audio[i * l + c] += cfg.burst_noise * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            for i in 0..cfg.audio_dim {
                let mut n: f64 = rng.sample(StandardNormal);
                for c in 0..l {
                    if c > 0 {
                        n = cfg.smoothing * n + innovation * rng.sample::<f64, _>(StandardNormal);
                    }
                    audio[i * l + c] += cfg.audio_noise * n;
                }
            }
            let mut visual = vec![0.0; cfg.visual_dim * l];
            for i in 0..cfg.visual_dim {
                for c in 0..l {
                    let e: f64 = rng.sample(StandardNormal);
                    visual[i * l + c] = visual_clean[k][i] + cfg.visual_noise * e;
                }
            }
            utterances.push(Utterance {
                id: format!("{}_utt{u:02}", speaker_id(k)),
                speaker: speaker_id(k),
                split,
                audio: Tensor::matrix(cfg.audio_dim, l, audio)?,
                visual: Tensor::matrix(cfg.visual_dim, l, visual)?,
            });
        }
    }
    let dataset = Dataset::new(utterances)?;
    let trials = balanced_trials(&dataset, Split::Test, &mut rng);
    Ok(SyntheticData { dataset, trials })
}

/// Every same-speaker pair of the split, plus as many different-speaker pairs drawn
/// without replacement.
pub fn balanced_trials(dataset: &Dataset, split: Split, rng: &mut ChaCha8Rng) -> Vec<TrialPair> {
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for u in dataset.split(split) {
        by_speaker.entry(u.speaker.as_str()).or_default().push(u.id.as_str());
    }
    let ids: Vec<(&str, &str)> = by_speaker
        .iter()
        .flat_map(|(s, us)| us.iter().map(move |u| (*s, *u)))
        .collect();
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let pair = (ids[i].1, ids[j].1);
            if ids[i].0 == ids[j].0 {
                targets.push(pair);
            } else {
                nontargets.push(pair);
            }
        }
    }
    nontargets.shuffle(rng);
    nontargets.truncate(targets.len());
    nontargets.sort_unstable();

    let mut trials: Vec<TrialPair> = targets
        .into_iter()
        .map(|(a, b)| TrialPair::new(TrialLabel::Target, a, b))
        .chain(nontargets.into_iter().map(|(a, b)| TrialPair::new(TrialLabel::Nontarget, a, b)))
        .collect();
    trials.shuffle(rng);
    trials
}

/// Generates and writes features, manifest, trial list and the generation config.
pub fn generate_synthetic_dataset(cfg: &SynthConfig, root: &Path) -> Result<SyntheticData> {
    let data = generate(cfg)?;
    write_dataset(root, &data.dataset)?;
    write_trial_list(&root.join(TRIALS), &data.trials)?;
    let cfg_path = root.join(SYNTH_CONFIG);
    fs::write(&cfg_path, cfg.to_config_string()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(data)
}
