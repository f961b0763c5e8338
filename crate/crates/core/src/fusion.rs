//! Joint cross-attention fusion of audio and visual segment features, its recursive
//! refinement, and the simpler fusion baselines it is compared against.
//!
//! Feature matrices are laid out `dim x L`: one column per segment. For one pass
//! with audio `X_a` (`d_a x L`), visual `X_v` (`d_v x L`) and `J = [X_a; X_v]`:
//!
//! ```text
//! C_a = tanh(X_a^T W_ja J / sqrt(d))      (L x L)
//! H_a = relu(X_a W_ca C_a)                (d_a x L)
//! X_att_a = H_a W_ha + X_a
//! ```
//!
//! and symmetrically for the visual branch. The recursive form feeds both attended
//! outputs back in as the next pass's inputs, rebuilding `J` each time.

use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Default number of recursive passes.
pub const DEFAULT_ITERATIONS: usize = 3;

/// Model dimensions and recursion settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RjcaConfig {
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub segments: usize,
    pub iterations: usize,
    pub use_blstm: bool,
    /// Reuse one set of attention weights for every pass.
    pub share_weights: bool,
}

impl Default for RjcaConfig {
    fn default() -> Self {
        RjcaConfig {
            audio_dim: 16,
            visual_dim: 16,
            segments: 8,
            iterations: DEFAULT_ITERATIONS,
            use_blstm: true,
            share_weights: false,
        }
    }
}

impl RjcaConfig {
    pub fn joint_dim(&self) -> usize {
        self.audio_dim + self.visual_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.audio_dim == 0 || self.visual_dim == 0 || self.segments == 0 {
            return Err(Error::Config(format!(
                "feature dims and segment count must be positive: d_a={}, d_v={}, L={}",
                self.audio_dim, self.visual_dim, self.segments
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("recursion needs at least one iteration".into()));
        }
        Ok(())
    }

    /// Number of distinct weight sets the recursion owns.
    pub fn weight_sets(&self) -> usize {
        if self.share_weights {
            1
        } else {
            self.iterations
        }
    }
}

/// Learnable matrices of one joint cross-attention pass.
#[derive(Debug, Clone, PartialEq)]
pub struct JcaIterationParams<S> {
    /// `d_a x d`
    pub w_ja: Tensor<S>,
    /// `d_v x d`
    pub w_jv: Tensor<S>,
    /// `L x L`
    pub w_ca: Tensor<S>,
    pub w_cv: Tensor<S>,
    pub w_ha: Tensor<S>,
    pub w_hv: Tensor<S>,
}

pub const JCA_WEIGHT_NAMES: [&str; 6] = ["w_ja", "w_jv", "w_ca", "w_cv", "w_ha", "w_hv"];

fn scaled_uniform<S: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<S> {
    Tensor::uniform(&[rows, cols], 1.0 / (rows as f64).sqrt(), rng)
}

impl<S: Scalar> JcaIterationParams<S> {
    pub fn zeros(audio_dim: usize, visual_dim: usize, segments: usize) -> Self {
        let d = audio_dim + visual_dim;
        let ll = [segments, segments];
        JcaIterationParams {
            w_ja: Tensor::zeros(&[audio_dim, d]),
            w_jv: Tensor::zeros(&[visual_dim, d]),
            w_ca: Tensor::zeros(&ll),
            w_cv: Tensor::zeros(&ll),
            w_ha: Tensor::zeros(&ll),
            w_hv: Tensor::zeros(&ll),
        }
    }

    /// Scaled-uniform initialisation, bound `1/sqrt(fan_in)` with fan-in = rows.
    pub fn init<R: Rng + ?Sized>(audio_dim: usize, visual_dim: usize, segments: usize, rng: &mut R) -> Self {
        let d = audio_dim + visual_dim;
        JcaIterationParams {
            w_ja: scaled_uniform(audio_dim, d, rng),
            w_jv: scaled_uniform(visual_dim, d, rng),
            w_ca: scaled_uniform(segments, segments, rng),
            w_cv: scaled_uniform(segments, segments, rng),
            w_ha: Tensor::zeros(&[segments, segments]),
            w_hv: Tensor::zeros(&[segments, segments]),
        }
    }

    pub fn tensors(&self) -> [&Tensor<S>; 6] {
        [&self.w_ja, &self.w_jv, &self.w_ca, &self.w_cv, &self.w_ha, &self.w_hv]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 6] {
        [
            &mut self.w_ja,
            &mut self.w_jv,
            &mut self.w_ca,
            &mut self.w_cv,
            &mut self.w_ha,
            &mut self.w_hv,
        ]
    }

    pub fn from_tensors(mut t: Vec<Tensor<S>>) -> Result<Self> {
        if t.len() != 6 {
            return Err(Error::Config(format!("expected 6 attention weights, got {}", t.len())));
        }
        let w_hv = t.pop().unwrap();
        let w_ha = t.pop().unwrap();
        let w_cv = t.pop().unwrap();
        let w_ca = t.pop().unwrap();
        let w_jv = t.pop().unwrap();
        let w_ja = t.pop().unwrap();
        Ok(JcaIterationParams { w_ja, w_jv, w_ca, w_cv, w_ha, w_hv })
    }

    /// Checks every weight against the expected extents.
    pub fn validate(&self, audio_dim: usize, visual_dim: usize, segments: usize) -> Result<()> {
        let d = audio_dim + visual_dim;
        let expected = [
            [audio_dim, d],
            [visual_dim, d],
            [segments, segments],
            [segments, segments],
            [segments, segments],
            [segments, segments],
        ];
        for ((name, t), want) in JCA_WEIGHT_NAMES.iter().zip(self.tensors()).zip(expected) {
            if t.shape() != want {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn record(&self, tape: &mut Tape<S>) -> JcaVars {
        let [w_ja, w_jv, w_ca, w_cv, w_ha, w_hv] = self.tensors().map(|t| tape.leaf(t.clone()));
        JcaVars { w_ja, w_jv, w_ca, w_cv, w_ha, w_hv }
    }
}

/// Tape handles of one pass's weights, in [`JCA_WEIGHT_NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct JcaVars {
    pub w_ja: Var,
    pub w_jv: Var,
    pub w_ca: Var,
    pub w_cv: Var,
    pub w_ha: Var,
    pub w_hv: Var,
}

impl JcaVars {
    pub fn all(&self) -> [Var; 6] {
        [self.w_ja, self.w_jv, self.w_ca, self.w_cv, self.w_ha, self.w_hv]
    }
}

/// Weights of the vanilla cross-attention baseline, where each modality attends
/// to the other instead of to the joint representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionParams<S> {
    /// `d_a x d_v`
    pub w_av: Tensor<S>,
    /// `d_v x d_a`
    pub w_va: Tensor<S>,
    pub w_ca: Tensor<S>,
    pub w_cv: Tensor<S>,
    pub w_ha: Tensor<S>,
    pub w_hv: Tensor<S>,
}

pub const CROSS_WEIGHT_NAMES: [&str; 6] = ["w_av", "w_va", "w_ca", "w_cv", "w_ha", "w_hv"];

impl<S: Scalar> CrossAttentionParams<S> {
    pub fn zeros(audio_dim: usize, visual_dim: usize, segments: usize) -> Self {
        let ll = [segments, segments];
        CrossAttentionParams {
            w_av: Tensor::zeros(&[audio_dim, visual_dim]),
            w_va: Tensor::zeros(&[visual_dim, audio_dim]),
            w_ca: Tensor::zeros(&ll),
            w_cv: Tensor::zeros(&ll),
            w_ha: Tensor::zeros(&ll),
            w_hv: Tensor::zeros(&ll),
        }
    }

    pub fn init<R: Rng + ?Sized>(audio_dim: usize, visual_dim: usize, segments: usize, rng: &mut R) -> Self {
        CrossAttentionParams {
            w_av: scaled_uniform(audio_dim, visual_dim, rng),
            w_va: scaled_uniform(visual_dim, audio_dim, rng),
            w_ca: scaled_uniform(segments, segments, rng),
            w_cv: scaled_uniform(segments, segments, rng),
            w_ha: Tensor::zeros(&[segments, segments]),
            w_hv: Tensor::zeros(&[segments, segments]),
        }
    }

    pub fn tensors(&self) -> [&Tensor<S>; 6] {
        [&self.w_av, &self.w_va, &self.w_ca, &self.w_cv, &self.w_ha, &self.w_hv]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 6] {
        [
            &mut self.w_av,
            &mut self.w_va,
            &mut self.w_ca,
            &mut self.w_cv,
            &mut self.w_ha,
            &mut self.w_hv,
        ]
    }

    pub fn from_tensors(t: Vec<Tensor<S>>) -> Result<Self> {
        let JcaIterationParams { w_ja, w_jv, w_ca, w_cv, w_ha, w_hv } = JcaIterationParams::from_tensors(t)?;
        Ok(CrossAttentionParams { w_av: w_ja, w_va: w_jv, w_ca, w_cv, w_ha, w_hv })
    }

    pub fn validate(&self, audio_dim: usize, visual_dim: usize, segments: usize) -> Result<()> {
        let expected = [
            [audio_dim, visual_dim],
            [visual_dim, audio_dim],
            [segments, segments],
            [segments, segments],
            [segments, segments],
            [segments, segments],
        ];
        for ((name, t), want) in CROSS_WEIGHT_NAMES.iter().zip(self.tensors()).zip(expected) {
            if t.shape() != want {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn record(&self, tape: &mut Tape<S>) -> JcaVars {
        let [w_ja, w_jv, w_ca, w_cv, w_ha, w_hv] = self.tensors().map(|t| tape.leaf(t.clone()));
        JcaVars { w_ja, w_jv, w_ca, w_cv, w_ha, w_hv }
    }
}

/// Attended audio and visual features plus their vertical stack.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures<S> {
    pub attended_audio: Tensor<S>,
    pub attended_visual: Tensor<S>,
    pub concatenated: Tensor<S>,
}

/// Tape handles produced by one attention pass.
#[derive(Debug, Clone, Copy)]
pub struct FusedVars {
    pub audio: Var,
    pub visual: Var,
    pub joint: Var,
    pub corr_audio: Var,
    pub corr_visual: Var,
}

impl FusedVars {
    pub fn to_features<S: Scalar>(&self, tape: &Tape<S>) -> FusedFeatures<S> {
        FusedFeatures {
            attended_audio: tape.value(self.audio).clone(),
            attended_visual: tape.value(self.visual).clone(),
            concatenated: tape.value(self.joint).clone(),
        }
    }
}

/// `J = [X_a; X_v]`.
pub fn joint_representation<S: Scalar>(audio: &Tensor<S>, visual: &Tensor<S>) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let a = tape.leaf(audio.clone());
    let v = tape.leaf(visual.clone());
    let j = tape.concat_rows(a, v)?;
    Ok(tape.value(j).clone())
}

fn expect_shape<S: Scalar>(tape: &Tape<S>, var: Var, name: &str, want: [usize; 2]) -> Result<()> {
    let got = tape.value(var).shape();
    if got != want {
        return Err(Error::Dimension(format!("{name} has shape {got:?}, expected {want:?}")));
    }
    Ok(())
}

fn input_dims<S: Scalar>(tape: &Tape<S>, audio: Var, visual: Var) -> Result<(usize, usize, usize)> {
    let (da, l) = tape.value(audio).dims2()?;
    let (dv, lv) = tape.value(visual).dims2()?;
    if l != lv {
        return Err(Error::Dimension(format!(
            "audio has {l} segments but visual has {lv}"
        )));
    }
    Ok((da, dv, l))
}

/// `relu(X W_c C) W_h + X`
fn attend<S: Scalar>(tape: &mut Tape<S>, x: Var, corr: Var, w_c: Var, w_h: Var) -> Result<Var> {
    let xw = tape.matmul(x, w_c)?;
    let pre = tape.matmul(xw, corr)?;
    let h = tape.relu(pre)?;
    let hw = tape.matmul(h, w_h)?;
    tape.add(hw, x)
}

/// `tanh(X^T W K / sqrt(d))`
fn correlation<S: Scalar>(tape: &mut Tape<S>, x: Var, w: Var, key: Var, d: usize) -> Result<Var> {
    let xt = tape.transpose(x)?;
    let xw = tape.matmul(xt, w)?;
    let raw = tape.matmul(xw, key)?;
    let scaled = tape.scale(raw, S::one() / S::of(d as f64).sqrt())?;
    tape.tanh(scaled)
}

/// One joint cross-attention pass on the tape.
pub fn jca_step_on<S: Scalar>(tape: &mut Tape<S>, audio: Var, visual: Var, w: &JcaVars) -> Result<FusedVars> {
    let (da, dv, l) = input_dims(tape, audio, visual)?;
    let d = da + dv;
    for (name, var, want) in [
        ("w_ja", w.w_ja, [da, d]),
        ("w_jv", w.w_jv, [dv, d]),
        ("w_ca", w.w_ca, [l, l]),
        ("w_cv", w.w_cv, [l, l]),
        ("w_ha", w.w_ha, [l, l]),
        ("w_hv", w.w_hv, [l, l]),
    ] {
        expect_shape(tape, var, name, want)?;
    }

    let joint_in = tape.concat_rows(audio, visual)?;
    let corr_audio = correlation(tape, audio, w.w_ja, joint_in, d)?;
    let corr_visual = correlation(tape, visual, w.w_jv, joint_in, d)?;
    let att_audio = attend(tape, audio, corr_audio, w.w_ca, w.w_ha)?;
    let att_visual = attend(tape, visual, corr_visual, w.w_cv, w.w_hv)?;
    let joint = tape.concat_rows(att_audio, att_visual)?;
    Ok(FusedVars {
        audio: att_audio,
        visual: att_visual,
        joint,
        corr_audio,
        corr_visual,
    })
}

/// Recursive joint cross-attention on the tape.
///
/// Pass `t` uses `weights[t]`, or `weights[0]` for every pass when only one set is
/// given and `iterations > 1`.
pub fn rjca_forward_on<S: Scalar>(
    tape: &mut Tape<S>,
    audio: Var,
    visual: Var,
    weights: &[JcaVars],
    iterations: usize,
) -> Result<FusedVars> {
    if weights.is_empty() || iterations == 0 {
        return Err(Error::Config("recursive attention needs at least one iteration".into()));
    }
    if weights.len() != 1 && weights.len() != iterations {
        return Err(Error::Config(format!(
            "{} weight sets for {iterations} iterations",
            weights.len()
        )));
    }
    let (mut a, mut v) = (audio, visual);
    let mut out = None;
    for t in 0..iterations {
        let w = &weights[if weights.len() == 1 { 0 } else { t }];
        let step = jca_step_on(tape, a, v, w)?;
        a = step.audio;
        v = step.visual;
        out = Some(step);
    }
    Ok(out.expect("at least one iteration"))
}

/// Vanilla cross-attention pass: each modality correlates against the other.
pub fn cross_attention_on<S: Scalar>(tape: &mut Tape<S>, audio: Var, visual: Var, w: &JcaVars) -> Result<FusedVars> {
    let (da, dv, l) = input_dims(tape, audio, visual)?;
    let d = da + dv;
    for (name, var, want) in [
        ("w_av", w.w_ja, [da, dv]),
        ("w_va", w.w_jv, [dv, da]),
        ("w_ca", w.w_ca, [l, l]),
        ("w_cv", w.w_cv, [l, l]),
        ("w_ha", w.w_ha, [l, l]),
        ("w_hv", w.w_hv, [l, l]),
    ] {
        expect_shape(tape, var, name, want)?;
    }
    let corr_audio = correlation(tape, audio, w.w_ja, visual, d)?;
    let corr_visual = correlation(tape, visual, w.w_jv, audio, d)?;
    let att_audio = attend(tape, audio, corr_audio, w.w_ca, w.w_ha)?;
    let att_visual = attend(tape, visual, corr_visual, w.w_cv, w.w_hv)?;
    let joint = tape.concat_rows(att_audio, att_visual)?;
    Ok(FusedVars {
        audio: att_audio,
        visual: att_visual,
        joint,
        corr_audio,
        corr_visual,
    })
}

/// One joint cross-attention pass.
pub fn jca_step<S: Scalar>(
    audio: &Tensor<S>,
    visual: &Tensor<S>,
    params: &JcaIterationParams<S>,
) -> Result<FusedFeatures<S>> {
    let mut tape = Tape::new();
    let a = tape.leaf(audio.clone());
    let v = tape.leaf(visual.clone());
    let w = params.record(&mut tape);
    Ok(jca_step_on(&mut tape, a, v, &w)?.to_features(&tape))
}

/// Recursive joint cross-attention with one weight set per pass.
pub fn rjca_forward<S: Scalar>(
    audio: &Tensor<S>,
    visual: &Tensor<S>,
    params: &[JcaIterationParams<S>],
) -> Result<FusedFeatures<S>> {
    if params.is_empty() {
        return Err(Error::Config("empty parameter list for recursive attention".into()));
    }
    let mut tape = Tape::new();
    let a = tape.leaf(audio.clone());
    let v = tape.leaf(visual.clone());
    let w: Vec<JcaVars> = params.iter().map(|p| p.record(&mut tape)).collect();
    Ok(rjca_forward_on(&mut tape, a, v, &w, params.len())?.to_features(&tape))
}

/// `w * s_a + (1 - w) * s_v`
pub fn score_level_fusion<S: Scalar>(audio_score: S, visual_score: S, audio_weight: S) -> Result<S> {
    if !(audio_weight >= S::zero() && audio_weight <= S::one()) {
        return Err(Error::Config(format!("score fusion weight {audio_weight} outside [0, 1]")));
    }
    if audio_weight == S::one() {
        return Ok(audio_score);
    }
    Ok(audio_weight * audio_score + (S::one() - audio_weight) * visual_score)
}

/// Fusion strategies compared against recursive joint cross-attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    ScoreLevel,
    Concat,
    CrossAttention,
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score_level" | "score-level" => Ok(BaselineMode::ScoreLevel),
            "concat" => Ok(BaselineMode::Concat),
            "cross_attention" | "cross-attention" => Ok(BaselineMode::CrossAttention),
            other => Err(Error::Config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

pub enum BaselineInputs<'a, S> {
    Scores {
        audio: S,
        visual: S,
        audio_weight: S,
    },
    Features {
        audio: &'a Tensor<S>,
        visual: &'a Tensor<S>,
        cross: Option<&'a CrossAttentionParams<S>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineOutput<S> {
    Score(S),
    Features(FusedFeatures<S>),
}

pub fn baseline_fuse<S: Scalar>(mode: BaselineMode, inputs: BaselineInputs<'_, S>) -> Result<BaselineOutput<S>> {
    match (mode, inputs) {
        (BaselineMode::ScoreLevel, BaselineInputs::Scores { audio, visual, audio_weight }) => {
            score_level_fusion(audio, visual, audio_weight).map(BaselineOutput::Score)
        }
        (BaselineMode::Concat, BaselineInputs::Features { audio, visual, .. }) => {
            let joint = joint_representation(audio, visual)?;
            Ok(BaselineOutput::Features(FusedFeatures {
                attended_audio: audio.clone(),
                attended_visual: visual.clone(),
                concatenated: joint,
            }))
        }
        (BaselineMode::CrossAttention, BaselineInputs::Features { audio, visual, cross: Some(params) }) => {
            let mut tape = Tape::new();
            let a = tape.leaf(audio.clone());
            let v = tape.leaf(visual.clone());
            let w = params.record(&mut tape);
            let out = cross_attention_on(&mut tape, a, v, &w)?;
            Ok(BaselineOutput::Features(out.to_features(&tape)))
        }
        (mode, _) => Err(Error::Config(format!("inputs do not match fusion mode {mode:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::uniform(&[rows, cols], 1.0, rng)
    }

    #[test]
    fn joint_representation_shapes() {
        let a = Tensor::<f64>::filled(&[2, 4], 1.0);
        let v = Tensor::<f64>::zeros(&[3, 4]);
        let j = joint_representation(&a, &v).unwrap();
        assert_eq!(j.shape(), &[5, 4]);
        assert!(j.data()[8..].iter().all(|&x| x == 0.0));

        let one = Tensor::<f64>::filled(&[1, 1], 1.0);
        assert_eq!(joint_representation(&one, &one).unwrap().data(), &[1.0, 1.0]);

        let short = Tensor::<f64>::zeros(&[3, 2]);
        assert!(matches!(joint_representation(&a, &short), Err(Error::Dimension(_))));
    }

    #[test]
    fn scalar_jca_step_by_hand() {
        let one = Tensor::<f64>::filled(&[1, 1], 1.0);
        let params = JcaIterationParams {
            w_ja: Tensor::filled(&[1, 2], 1.0),
            w_jv: Tensor::filled(&[1, 2], 1.0),
            w_ca: one.clone(),
            w_cv: one.clone(),
            w_ha: one.clone(),
            w_hv: one.clone(),
        };
        let out = jca_step(&one, &one, &params).unwrap();
        // C = tanh(2 / sqrt(2)), H = relu(C), X_att = H + 1.
        let c = (2.0f64 / 2.0f64.sqrt()).tanh();
        assert!((c - 0.88839).abs() < 1e-5);
        assert!((out.attended_audio.data()[0] - (c + 1.0)).abs() < 1e-15);
        assert!((out.attended_visual.data()[0] - (c + 1.0)).abs() < 1e-15);
        assert!((out.attended_audio.data()[0] - 1.88839).abs() < 1e-5);
    }

    #[test]
    fn zero_weights_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(2, 4, &mut rng);
        let v = random(3, 4, &mut rng);
        let out = jca_step(&a, &v, &JcaIterationParams::zeros(2, 3, 4)).unwrap();
        assert_eq!(out.attended_audio, a);
        assert_eq!(out.attended_visual, v);
        assert_eq!(out.concatenated.shape(), &[5, 4]);
    }

    #[test]
    fn shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(2, 4, &mut rng);
        let v = random(3, 4, &mut rng);
        let p = JcaIterationParams::init(2, 3, 4, &mut rng);
        let mut tape = Tape::new();
        let (av, vv) = (tape.leaf(a), tape.leaf(v));
        let w = p.record(&mut tape);
        let out = jca_step_on(&mut tape, av, vv, &w).unwrap();
        assert_eq!(tape.value(out.corr_audio).shape(), &[4, 4]);
        assert_eq!(tape.value(out.corr_visual).shape(), &[4, 4]);
        assert_eq!(tape.value(out.audio).shape(), &[2, 4]);
        assert_eq!(tape.value(out.visual).shape(), &[3, 4]);
    }

    #[test]
    fn bad_weight_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(2, 4, &mut rng);
        let v = random(3, 4, &mut rng);
        let mut p = JcaIterationParams::zeros(2, 3, 4);
        p.w_hv = Tensor::zeros(&[3, 3]);
        let msg = jca_step(&a, &v, &p).unwrap_err().to_string();
        assert!(msg.contains("w_hv"), "{msg}");
        assert!(p.validate(2, 3, 4).unwrap_err().to_string().contains("w_hv"));
    }

    #[test]
    fn single_iteration_matches_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(3, 5, &mut rng);
        let v = random(2, 5, &mut rng);
        let p = JcaIterationParams::init(3, 2, 5, &mut rng);
        let step = jca_step(&a, &v, &p).unwrap();
        let rec = rjca_forward(&a, &v, std::slice::from_ref(&p)).unwrap();
        assert_eq!(step, rec);
    }

    #[test]
    fn empty_params_is_config_error() {
        let a = Tensor::<f64>::zeros(&[1, 1]);
        assert!(matches!(rjca_forward(&a, &a, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn recursion_feeds_attended_features_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(2, 3, &mut rng);
        let v = random(2, 3, &mut rng);
        let p1 = JcaIterationParams::init(2, 2, 3, &mut rng);
        let p2 = JcaIterationParams::init(2, 2, 3, &mut rng);
        let first = jca_step(&a, &v, &p1).unwrap();
        let second = jca_step(&first.attended_audio, &first.attended_visual, &p2).unwrap();
        let rec = rjca_forward(&a, &v, &[p1, p2]).unwrap();
        assert_eq!(rec, second);
    }

    #[test]
    fn baseline_modes() {
        assert_eq!(score_level_fusion(0.7, -0.2, 1.0).unwrap(), 0.7);
        assert!((score_level_fusion(0.5f64, 0.1, 0.25).unwrap() - 0.2).abs() < 1e-15);
        assert!(score_level_fusion(0.5, 0.1, 1.5).is_err());

        let a = Tensor::<f64>::filled(&[2, 4], 0.5);
        let v = Tensor::<f64>::filled(&[3, 4], -0.5);
        let BaselineOutput::Features(f) = baseline_fuse(
            BaselineMode::Concat,
            BaselineInputs::Features { audio: &a, visual: &v, cross: None },
        )
        .unwrap() else {
            panic!("expected features")
        };
        assert_eq!(f.concatenated.shape(), &[5, 4]);

        let zeros = CrossAttentionParams::zeros(2, 3, 4);
        let BaselineOutput::Features(f) = baseline_fuse(
            BaselineMode::CrossAttention,
            BaselineInputs::Features { audio: &a, visual: &v, cross: Some(&zeros) },
        )
        .unwrap() else {
            panic!("expected features")
        };
        assert_eq!(f.attended_audio, a);
        assert_eq!(f.attended_visual, v);

        assert!(matches!("self_attention".parse::<BaselineMode>(), Err(Error::Config(_))));
        assert!(baseline_fuse(
            BaselineMode::ScoreLevel,
            BaselineInputs::Features { audio: &a, visual: &v, cross: None }
        )
        .is_err());
    }
}
