//! Full verification model: fusion, optional BLSTM, pooling, projection and the
//! AAM classification head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fusion::{
    cross_attention_on, rjca_forward_on, CrossAttentionParams, JcaIterationParams, JcaVars, CROSS_WEIGHT_NAMES,
    JCA_WEIGHT_NAMES,
};
use crate::objective::{aam_loss_on, AamHead};
use crate::pipeline::config::{SystemKind, TrainConfig};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::temporal::{
    asp_on, blstm_on, project_on, AspParams, BlstmParams, BlstmVars, EmbeddingProjection, ASP_WEIGHT_NAMES,
    BLSTM_WEIGHT_NAMES,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams<S> {
    /// One weight set per pass, or a single shared set.
    Rjca(Vec<JcaIterationParams<S>>),
    CrossAttention(CrossAttentionParams<S>),
    /// Concatenation or a single modality: nothing to learn before the head.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub config: TrainConfig,
    pub fusion: FusionParams<S>,
    pub blstm: Option<BlstmParams<S>>,
    pub asp: AspParams<S>,
    pub projection: EmbeddingProjection<S>,
    pub head: AamHead<S>,
}

/// Rows of the feature matrix entering the temporal head.
pub fn fused_dim(config: &TrainConfig) -> usize {
    let m = &config.model;
    match config.system {
        SystemKind::Rjca | SystemKind::Concat | SystemKind::CrossAttention => m.audio_dim + m.visual_dim,
        SystemKind::AudioOnly => m.audio_dim,
        SystemKind::VisualOnly => m.visual_dim,
    }
}

fn pooled_input_dim(config: &TrainConfig) -> usize {
    if config.model.use_blstm {
        2 * config.hidden
    } else {
        fused_dim(config)
    }
}

#[derive(Debug, Clone)]
struct ModelVars {
    all: Vec<Var>,
    fusion: Vec<JcaVars>,
    blstm: Option<BlstmVars>,
    asp: [Var; 3],
    projection: (Var, Option<Var>),
    head: Var,
}

impl<S: Scalar> Model<S> {
    pub fn init<R: Rng + ?Sized>(config: &TrainConfig, classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let m = &config.model;
        let fusion = match config.system {
            SystemKind::Rjca => FusionParams::Rjca(
                (0..m.weight_sets())
                    .map(|_| JcaIterationParams::init(m.audio_dim, m.visual_dim, m.segments, rng))
                    .collect(),
            ),
            SystemKind::CrossAttention => {
                FusionParams::CrossAttention(CrossAttentionParams::init(m.audio_dim, m.visual_dim, m.segments, rng))
            }
            _ => FusionParams::None,
        };
        let fused = fused_dim(config);
        let blstm = m.use_blstm.then(|| BlstmParams::init(fused, config.hidden, rng));
        let pooled = pooled_input_dim(config);
        let asp = AspParams::init(pooled, config.asp_dim, rng);
        let projection = EmbeddingProjection::init(2 * pooled, config.embed_dim, rng);
        let head = AamHead::init(
            classes,
            config.embed_dim,
            S::of(config.aam_scale),
            S::of(config.aam_margin),
            rng,
        )?;
        Ok(Model {
            config: config.clone(),
            fusion,
            blstm,
            asp,
            projection,
            head,
        })
    }

    /// All-zero model with the right shapes; used as a skeleton for loading.
    pub fn zeros(config: &TrainConfig, classes: usize) -> Result<Self> {
        config.validate()?;
        let m = &config.model;
        let fusion = match config.system {
            SystemKind::Rjca => FusionParams::Rjca(
                (0..m.weight_sets())
                    .map(|_| JcaIterationParams::zeros(m.audio_dim, m.visual_dim, m.segments))
                    .collect(),
            ),
            SystemKind::CrossAttention => {
                FusionParams::CrossAttention(CrossAttentionParams::zeros(m.audio_dim, m.visual_dim, m.segments))
            }
            _ => FusionParams::None,
        };
        let fused = fused_dim(config);
        let pooled = pooled_input_dim(config);
        Ok(Model {
            config: config.clone(),
            fusion,
            blstm: m.use_blstm.then(|| BlstmParams::zeros(fused, config.hidden)),
            asp: AspParams::zeros(pooled, config.asp_dim),
            projection: EmbeddingProjection {
                w: Tensor::zeros(&[config.embed_dim, 2 * pooled]),
                bias: Some(Tensor::zeros(&[config.embed_dim, 1])),
            },
            head: AamHead {
                weights: Tensor::zeros(&[classes.max(1), config.embed_dim]),
                scale: S::of(config.aam_scale),
                margin: S::of(config.aam_margin),
            },
        })
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        match &self.fusion {
            FusionParams::Rjca(sets) => {
                for t in 0..sets.len() {
                    names.extend(JCA_WEIGHT_NAMES.iter().map(|n| format!("fusion.{t}.{n}")));
                }
            }
            FusionParams::CrossAttention(_) => {
                names.extend(CROSS_WEIGHT_NAMES.iter().map(|n| format!("cross.{n}")));
            }
            FusionParams::None => {}
        }
        if self.blstm.is_some() {
            names.extend(BLSTM_WEIGHT_NAMES.iter().map(|n| format!("blstm.{n}")));
        }
        names.extend(ASP_WEIGHT_NAMES.iter().map(|n| format!("asp.{n}")));
        names.push("proj.w".into());
        if self.projection.bias.is_some() {
            names.push("proj.bias".into());
        }
        names.push("head.w".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out: Vec<&Tensor<S>> = Vec::new();
        match &self.fusion {
            FusionParams::Rjca(sets) => sets.iter().for_each(|s| out.extend(s.tensors())),
            FusionParams::CrossAttention(c) => out.extend(c.tensors()),
            FusionParams::None => {}
        }
        if let Some(b) = &self.blstm {
            out.extend(b.tensors());
        }
        out.extend(self.asp.tensors());
        out.push(&self.projection.w);
        if let Some(b) = &self.projection.bias {
            out.push(b);
        }
        out.push(&self.head.weights);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = Vec::new();
        match &mut self.fusion {
            FusionParams::Rjca(sets) => sets.iter_mut().for_each(|s| out.extend(s.tensors_mut())),
            FusionParams::CrossAttention(c) => out.extend(c.tensors_mut()),
            FusionParams::None => {}
        }
        if let Some(b) = &mut self.blstm {
            out.extend(b.tensors_mut());
        }
        out.extend(self.asp.tensors_mut());
        out.push(&mut self.projection.w);
        if let Some(b) = &mut self.projection.bias {
            out.push(b);
        }
        out.push(&mut self.head.weights);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Builds a model from named tensors, which must match the configured layout
    /// exactly (names, order and shapes).
    pub fn from_named(config: &TrainConfig, classes: usize, named: Vec<(String, Tensor<S>)>) -> Result<Self> {
        let mut model = Self::zeros(config, classes)?;
        let names = model.names();
        if names.len() != named.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                names.len(),
                named.len()
            )));
        }
        for ((want, slot), (name, tensor)) in names.iter().zip(model.tensors_mut()).zip(named) {
            if *want != name {
                return Err(Error::Config(format!("expected tensor `{want}`, found `{name}`")));
            }
            if slot.shape() != tensor.shape() {
                return Err(Error::Dimension(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        Ok(model)
    }

    fn record(&self, tape: &mut Tape<S>) -> ModelVars {
        let all: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        let mut it = all.iter().copied();
        let mut next = || it.next().expect("one var per tensor");
        let mut fusion = Vec::new();
        let sets = match &self.fusion {
            FusionParams::Rjca(sets) => sets.len(),
            FusionParams::CrossAttention(_) => 1,
            FusionParams::None => 0,
        };
        for _ in 0..sets {
            fusion.push(JcaVars {
                w_ja: next(),
                w_jv: next(),
                w_ca: next(),
                w_cv: next(),
                w_ha: next(),
                w_hv: next(),
            });
        }
        let blstm = self.blstm.as_ref().map(|b| BlstmVars {
            forward: [next(), next(), next()],
            backward: [next(), next(), next()],
            hidden: b.hidden(),
        });
        let asp = [next(), next(), next()];
        let proj_w = next();
        let proj_b = self.projection.bias.as_ref().map(|_| next());
        let head = next();
        ModelVars {
            all,
            fusion,
            blstm,
            asp,
            projection: (proj_w, proj_b),
            head,
        }
    }

    fn embed_on(&self, tape: &mut Tape<S>, vars: &ModelVars, audio: &Tensor<S>, visual: &Tensor<S>) -> Result<Var> {
        let m = &self.config.model;
        if audio.shape() != [m.audio_dim, m.segments] || visual.shape() != [m.visual_dim, m.segments] {
            return Err(Error::Dimension(format!(
                "features {:?} / {:?} do not match model ({}, {}) x {}",
                audio.shape(),
                visual.shape(),
                m.audio_dim,
                m.visual_dim,
                m.segments
            )));
        }
        let fused = match self.config.system {
            SystemKind::AudioOnly => tape.leaf(audio.clone()),
            SystemKind::VisualOnly => tape.leaf(visual.clone()),
            system => {
                let a = tape.leaf(audio.clone());
                let v = tape.leaf(visual.clone());
                match system {
                    SystemKind::Rjca => rjca_forward_on(tape, a, v, &vars.fusion, m.iterations)?.joint,
                    SystemKind::CrossAttention => cross_attention_on(tape, a, v, &vars.fusion[0])?.joint,
                    _ => tape.concat_rows(a, v)?,
                }
            }
        };
        let temporal = match &vars.blstm {
            Some(b) => blstm_on(tape, fused, b)?,
            None => fused,
        };
        let pooled = asp_on(tape, temporal, vars.asp)?.pooled;
        project_on(tape, pooled, vars.projection)
    }

    /// Utterance embedding (length `embed_dim`).
    pub fn embed(&self, audio: &Tensor<S>, visual: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let e = self.embed_on(&mut tape, &vars, audio, visual)?;
        let n = tape.value(e).len();
        tape.value(e).clone().reshape(vec![n])
    }

    /// AAM loss for one labelled utterance and gradients for every parameter, in
    /// [`Model::tensors`] order.
    pub fn loss_and_gradients(
        &self,
        audio: &Tensor<S>,
        visual: &Tensor<S>,
        label: usize,
        check_finite: bool,
    ) -> Result<(S, Vec<Tensor<S>>)> {
        if label >= self.classes() {
            return Err(Error::Input(format!(
                "label {label} out of range for {} classes",
                self.classes()
            )));
        }
        let mut tape = Tape::new();
        tape.set_check_finite(check_finite);
        let vars = self.record(&mut tape);
        let e = self.embed_on(&mut tape, &vars, audio, visual)?;
        let loss = aam_loss_on(&mut tape, e, vars.head, label, self.head.scale, self.head.margin)?;
        let mut grads = tape.backward(loss)?;
        let out = vars
            .all
            .iter()
            .zip(self.tensors())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((tape.value(loss).data()[0], out))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, audio: &Tensor<S>, visual: &Tensor<S>, label: usize) -> Result<S> {
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let e = self.embed_on(&mut tape, &vars, audio, visual)?;
        let loss = aam_loss_on(&mut tape, e, vars.head, label, self.head.scale, self.head.margin)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Rounds every parameter to single precision.
    pub fn quantize_f32(&mut self) -> Result<()> {
        let names = self.names();
        for (name, t) in names.iter().zip(self.tensors_mut()) {
            for v in t.data_mut() {
                let r = v.as_f64() as f32;
                if !r.is_finite() {
                    return Err(Error::NonFinite(format!("`{name}` does not fit in single precision")));
                }
                *v = S::of(f64::from(r));
            }
        }
        Ok(())
    }
}
