//! Finite-difference checks for every layer at tiny sizes.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::{cross_attention_on, jca_step_on, rjca_forward_on, JcaVars};
use crate::gradcheck::{numeric_gradient, relative_error};
use crate::objective::aam_loss_on;
use crate::pipeline::config::{SystemKind, TrainConfig};
use crate::pipeline::model::Model;
use crate::tape::{Tape, Var};
use crate::temporal::{asp_on, blstm_on, project_on, BlstmVars, FORGET_BIAS};
use crate::tensor::Tensor;

type LossFn = Arc<dyn Fn(&[Tensor<f64>]) -> Result<f64> + Send + Sync>;
type GradFn = Arc<dyn Fn(&[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> + Send + Sync>;
type Forward = Arc<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Send + Sync>;

/// A scalar function of several tensors with its claimed gradient.
#[derive(Clone)]
pub struct LayerCase {
    pub name: String,
    pub inputs: Vec<Tensor<f64>>,
    pub loss: LossFn,
    pub gradient: GradFn,
}

impl LayerCase {
    /// Wraps a tape forward pass. The scalar checked is `sum(out * R)` for a fixed
    /// random `R`, so every output element contributes with a distinct weight.
    pub fn from_tape(name: &str, inputs: Vec<Tensor<f64>>, forward: Forward, rng: &mut ChaCha8Rng) -> Result<Self> {
        let probe = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = forward(&mut tape, &vars)?;
            tape.value(out).shape().to_vec()
        };
        let weights = Tensor::uniform(&probe, 1.0, rng);

        let build = {
            let forward = forward.clone();
            move |inputs: &[Tensor<f64>], tape: &mut Tape<f64>| -> Result<(Vec<Var>, Var)> {
                let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
                let out = forward(tape, &vars)?;
                let r = tape.leaf(weights.clone());
                let weighted = tape.mul(out, r)?;
                Ok((vars, tape.sum(weighted)?))
            }
        };
        let build = Arc::new(build);
        let for_loss = build.clone();
        let loss: LossFn = Arc::new(move |inputs| {
            let mut tape = Tape::new();
            let (_, s) = for_loss(inputs, &mut tape)?;
            Ok(tape.value(s).data()[0])
        });
        let gradient: GradFn = Arc::new(move |inputs| {
            let mut tape = Tape::new();
            let (vars, s) = build(inputs, &mut tape)?;
            let mut grads = tape.backward(s)?;
            Ok(vars
                .iter()
                .zip(inputs)
                .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect())
        });
        Ok(LayerCase {
            name: name.to_string(),
            inputs,
            loss,
            gradient,
        })
    }

    /// Same case with the analytic gradient passed through `corrupt`.
    pub fn with_corrupted_gradient(
        &self,
        corrupt: impl Fn(Vec<Tensor<f64>>) -> Vec<Tensor<f64>> + Send + Sync + 'static,
    ) -> Self {
        let inner = self.gradient.clone();
        LayerCase {
            gradient: Arc::new(move |inputs| inner(inputs).map(&corrupt)),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub name: String,
    /// Largest relative error over the case's inputs.
    pub worst: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub checks: Vec<LayerCheck>,
    pub tolerance: f64,
    pub elapsed: Duration,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>12}  result", "layer", "worst_rel")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<18} {:>12.3e}  {}",
                c.name,
                c.worst,
                if c.passed { "pass" } else { "FAIL" }
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} layers, {failed} failed, tolerance {:e}, {:.2}s",
            self.checks.len(),
            self.tolerance,
            self.elapsed.as_secs_f64()
        )
    }
}

pub fn check_case(case: &LayerCase, eps: f64, tolerance: f64) -> Result<LayerCheck> {
    let analytic = (case.gradient)(&case.inputs)?;
    if analytic.len() != case.inputs.len() {
        return Err(Error::Dimension(format!(
            "{}: {} gradients for {} inputs",
            case.name,
            analytic.len(),
            case.inputs.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut inputs = case.inputs.clone();
        let numeric = numeric_gradient(
            |t| {
                inputs[i] = t.clone();
                (case.loss)(&inputs)
            },
            &case.inputs[i],
            eps,
        )?;
        let err = relative_error(a, &numeric)?;
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    Ok(LayerCheck {
        name: case.name.clone(),
        worst,
        passed: worst < tolerance,
    })
}

pub fn run_cases(cases: &[LayerCase], eps: f64, tolerance: f64) -> Result<GradReport> {
    let start = Instant::now();
    let checks = cases
        .iter()
        .map(|c| check_case(c, eps, tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradReport {
        checks,
        tolerance,
        elapsed: start.elapsed(),
    })
}

fn rand(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

/// Uniform values with magnitude in `[0.1, 1]`, keeping kinks out of reach of the
/// finite-difference step.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let m: f64 = rng.random_range(0.1..1.0);
        *v = if rng.random::<bool>() { m } else { -m };
    }
    t
}

fn jca_vars(v: &[Var]) -> JcaVars {
    JcaVars {
        w_ja: v[0],
        w_jv: v[1],
        w_ca: v[2],
        w_cv: v[3],
        w_ha: v[4],
        w_hv: v[5],
    }
}

fn jca_inputs(da: usize, dv: usize, l: usize, sets: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
    let d = da + dv;
    let mut inputs = vec![rand(&[da, l], rng), rand(&[dv, l], rng)];
    for _ in 0..sets {
        inputs.push(rand(&[da, d], rng));
        inputs.push(rand(&[dv, d], rng));
        for _ in 0..4 {
            inputs.push(rand(&[l, l], rng));
        }
    }
    inputs
}

fn full_model_case(rng: &mut ChaCha8Rng) -> Result<LayerCase> {
    let mut cfg = TrainConfig {
        system: SystemKind::Rjca,
        hidden: 2,
        asp_dim: 3,
        embed_dim: 4,
        ..TrainConfig::default()
    };
    cfg.model.audio_dim = 3;
    cfg.model.visual_dim = 2;
    cfg.model.segments = 3;
    let mut model = Model::<f64>::init(&cfg, 3, rng)?;
    // Fresh init zeroes some branches; randomise everything so every path is live.
    for t in model.tensors_mut() {
        *t = Tensor::uniform(t.shape(), 0.8, rng);
    }
    let audio = rand(&[3, 3], rng);
    let visual = rand(&[2, 3], rng);
    let names = model.names();
    let inputs: Vec<Tensor<f64>> = model.tensors().into_iter().cloned().collect();
    let label = 1;

    let rebuild = {
        let cfg = cfg.clone();
        move |inputs: &[Tensor<f64>]| {
            Model::from_named(&cfg, 3, names.iter().cloned().zip(inputs.iter().cloned()).collect())
        }
    };
    let rebuild = Arc::new(rebuild);
    let (a2, v2, r2) = (audio.clone(), visual.clone(), rebuild.clone());
    let loss: LossFn = Arc::new(move |inputs| r2(inputs)?.loss(&audio, &visual, label));
    let gradient: GradFn = Arc::new(move |inputs| Ok(rebuild(inputs)?.loss_and_gradients(&a2, &v2, label, true)?.1));
    Ok(LayerCase {
        name: "full_model".into(),
        inputs,
        loss,
        gradient,
    })
}

/// Every layer of the stack, largest extent 8.
pub fn standard_cases(seed: u64) -> Result<Vec<LayerCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut cases = Vec::new();
    let mut push = |name: &str, inputs: Vec<Tensor<f64>>, f: Forward, rng: &mut ChaCha8Rng| -> Result<()> {
        cases.push(LayerCase::from_tape(name, inputs, f, rng)?);
        Ok(())
    };

    push(
        "matmul",
        vec![rand(&[3, 4], r), rand(&[4, 2], r)],
        Arc::new(|t, v| t.matmul(v[0], v[1])),
        r,
    )?;
    push("tanh", vec![rand(&[4, 3], r)], Arc::new(|t, v| t.tanh(v[0])), r)?;
    push("sigmoid", vec![rand(&[4, 3], r)], Arc::new(|t, v| t.sigmoid(v[0])), r)?;
    push("relu", vec![away_from_zero(&[4, 3], r)], Arc::new(|t, v| t.relu(v[0])), r)?;
    push(
        "softmax_columns",
        vec![rand(&[5, 3], r)],
        Arc::new(|t, v| t.softmax_columns(v[0])),
        r,
    )?;
    push(
        "elementwise",
        vec![rand(&[3, 4], r), rand(&[3, 4], r), rand(&[3, 1], r)],
        Arc::new(|t, v| {
            let p = t.mul(v[0], v[1])?;
            let s = t.sub(p, v[1])?;
            let a = t.add(s, v[0])?;
            let c = t.add_column(a, v[2])?;
            t.scale(c, 0.7)
        }),
        r,
    )?;
    push(
        "structural",
        vec![rand(&[3, 4], r), rand(&[2, 4], r)],
        Arc::new(|t, v| {
            let j = t.concat_rows(v[0], v[1])?;
            let s = t.slice_rows(j, 1, 3)?;
            let c0 = t.column(s, 0)?;
            let c3 = t.column(s, 3)?;
            let h = t.hstack(&[c3, s, c0])?;
            t.transpose(h)
        }),
        r,
    )?;
    push(
        "normalize_columns",
        vec![rand(&[4, 3], r)],
        Arc::new(|t, v| t.normalize_columns(v[0])),
        r,
    )?;
    push(
        "sqrt_floor",
        vec![Tensor::uniform(&[3, 3], 0.5, r).map(|x| x + 1.0)],
        Arc::new(|t, v| t.sqrt_floor(v[0], 1e-8)),
        r,
    )?;
    push(
        "jca_step",
        jca_inputs(3, 2, 4, 1, r),
        Arc::new(|t, v| Ok(jca_step_on(t, v[0], v[1], &jca_vars(&v[2..8]))?.joint)),
        r,
    )?;
    push(
        "rjca_t3",
        jca_inputs(3, 2, 4, 3, r),
        Arc::new(|t, v| {
            let sets: Vec<JcaVars> = v[2..].chunks(6).map(jca_vars).collect();
            Ok(rjca_forward_on(t, v[0], v[1], &sets, 3)?.joint)
        }),
        r,
    )?;
    push(
        "rjca_t3_shared",
        jca_inputs(3, 2, 4, 1, r),
        Arc::new(|t, v| Ok(rjca_forward_on(t, v[0], v[1], &[jca_vars(&v[2..8])], 3)?.joint)),
        r,
    )?;
    {
        let (da, dv, l) = (3, 2, 4);
        let mut inputs = vec![rand(&[da, l], r), rand(&[dv, l], r), rand(&[da, dv], r), rand(&[dv, da], r)];
        for _ in 0..4 {
            inputs.push(rand(&[l, l], r));
        }
        push(
            "cross_attention",
            inputs,
            Arc::new(|t, v| Ok(cross_attention_on(t, v[0], v[1], &jca_vars(&v[2..8]))?.joint)),
            r,
        )?;
    }
    {
        let (d, h, l) = (3, 2, 4);
        let mut inputs = vec![rand(&[d, l], r)];
        for _ in 0..2 {
            inputs.push(rand(&[4 * h, d], r));
            inputs.push(rand(&[4 * h, h], r));
            inputs.push(rand(&[4 * h, 1], r).map(|x| x + FORGET_BIAS * 0.5));
        }
        push(
            "blstm",
            inputs,
            Arc::new(move |t, v| {
                let vars = BlstmVars {
                    forward: [v[1], v[2], v[3]],
                    backward: [v[4], v[5], v[6]],
                    hidden: h,
                };
                blstm_on(t, v[0], &vars)
            }),
            r,
        )?;
    }
    push(
        "asp",
        vec![rand(&[4, 5], r), rand(&[3, 4], r), rand(&[3, 1], r), rand(&[3, 1], r)],
        Arc::new(|t, v| Ok(asp_on(t, v[0], [v[1], v[2], v[3]])?.pooled)),
        r,
    )?;
    push(
        "projection",
        vec![rand(&[8, 1], r), rand(&[3, 8], r), rand(&[3, 1], r)],
        Arc::new(|t, v| project_on(t, v[0], (v[1], Some(v[2])))),
        r,
    )?;
    push(
        "aam_loss",
        vec![rand(&[4, 1], r), rand(&[3, 4], r)],
        Arc::new(|t, v| aam_loss_on(t, v[0], v[1], 1, 30.0, 0.2)),
        r,
    )?;
    cases.push(full_model_case(r)?);
    Ok(cases)
}

pub fn run_standard_suite(seed: u64, eps: f64, tolerance: f64) -> Result<GradReport> {
    run_cases(&standard_cases(seed)?, eps, tolerance)
}
