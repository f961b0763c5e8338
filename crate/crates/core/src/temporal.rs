//! Bidirectional LSTM over segments, attentive statistics pooling and the
//! embedding projection.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Floor applied to the pooled variance before the square root.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Weights of one LSTM direction. Gate blocks are stacked `i, f, g, o`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<S> {
    /// `4h x d`
    pub w_input: Tensor<S>,
    /// `4h x h`
    pub w_recurrent: Tensor<S>,
    /// `4h x 1`
    pub bias: Tensor<S>,
}

impl<S: Scalar> LstmDirection<S> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmDirection {
            w_input: Tensor::zeros(&[4 * hidden, input_dim]),
            w_recurrent: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden, 1]),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Tensor::uniform(&[4 * hidden, 1], bound, rng);
        for v in &mut bias.data_mut()[hidden..2 * hidden] {
            *v = S::of(FORGET_BIAS);
        }
        LstmDirection {
            w_input: Tensor::uniform(&[4 * hidden, input_dim], bound, rng),
            w_recurrent: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.cols()
    }

    fn validate(&self, input_dim: usize, which: &str) -> Result<()> {
        let h = self.hidden();
        for (name, t, want) in [
            ("w_input", &self.w_input, [4 * h, input_dim]),
            ("w_recurrent", &self.w_recurrent, [4 * h, h]),
            ("bias", &self.bias, [4 * h, 1]),
        ] {
            if t.shape() != want {
                return Err(Error::Dimension(format!(
                    "{which} LSTM {name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Single-layer bidirectional LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmParams<S> {
    pub forward: LstmDirection<S>,
    pub backward: LstmDirection<S>,
}

impl<S: Scalar> BlstmParams<S> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        BlstmParams {
            forward: LstmDirection::zeros(input_dim, hidden),
            backward: LstmDirection::zeros(input_dim, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        BlstmParams {
            forward: LstmDirection::init(input_dim, hidden, rng),
            backward: LstmDirection::init(input_dim, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.forward.hidden() != self.backward.hidden() {
            return Err(Error::Dimension(format!(
                "LSTM directions disagree on hidden size: {} vs {}",
                self.forward.hidden(),
                self.backward.hidden()
            )));
        }
        self.forward.validate(input_dim, "forward")?;
        self.backward.validate(input_dim, "backward")
    }

    pub fn tensors(&self) -> [&Tensor<S>; 6] {
        [
            &self.forward.w_input,
            &self.forward.w_recurrent,
            &self.forward.bias,
            &self.backward.w_input,
            &self.backward.w_recurrent,
            &self.backward.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 6] {
        [
            &mut self.forward.w_input,
            &mut self.forward.w_recurrent,
            &mut self.forward.bias,
            &mut self.backward.w_input,
            &mut self.backward.w_recurrent,
            &mut self.backward.bias,
        ]
    }

    pub fn record(&self, tape: &mut Tape<S>) -> BlstmVars {
        let [fi, fr, fb, bi, br, bb] = self.tensors().map(|t| tape.leaf(t.clone()));
        BlstmVars {
            forward: [fi, fr, fb],
            backward: [bi, br, bb],
            hidden: self.hidden(),
        }
    }
}

pub const BLSTM_WEIGHT_NAMES: [&str; 6] = [
    "fwd.w_input",
    "fwd.w_recurrent",
    "fwd.bias",
    "bwd.w_input",
    "bwd.w_recurrent",
    "bwd.bias",
];

#[derive(Debug, Clone, Copy)]
pub struct BlstmVars {
    /// `[w_input, w_recurrent, bias]`
    pub forward: [Var; 3],
    pub backward: [Var; 3],
    pub hidden: usize,
}

fn lstm_direction_on<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    [w_input, w_recurrent, bias]: [Var; 3],
    hidden: usize,
    reverse: bool,
) -> Result<Var> {
    let (_, steps) = tape.value(x).dims2()?;
    let projected = tape.matmul(w_input, x)?;
    let projected = tape.add_column(projected, bias)?;

    let mut outputs = vec![None; steps];
    let mut state: Option<(Var, Var)> = None;
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let mut gates = tape.column(projected, t)?;
        if let Some((h_prev, _)) = state {
            let rec = tape.matmul(w_recurrent, h_prev)?;
            gates = tape.add(gates, rec)?;
        }
        let i = tape.slice_rows(gates, 0, hidden)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice_rows(gates, hidden, hidden)?;
        let f = tape.sigmoid(f)?;
        let g = tape.slice_rows(gates, 2 * hidden, hidden)?;
        let g = tape.tanh(g)?;
        let o = tape.slice_rows(gates, 3 * hidden, hidden)?;
        let o = tape.sigmoid(o)?;

        let mut c = tape.mul(i, g)?;
        if let Some((_, c_prev)) = state {
            let kept = tape.mul(f, c_prev)?;
            c = tape.add(kept, c)?;
        }
        let c_act = tape.tanh(c)?;
        let h = tape.mul(o, c_act)?;
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    let outputs: Vec<Var> = outputs.into_iter().map(|h| h.expect("every step visited")).collect();
    tape.hstack(&outputs)
}

/// Bidirectional LSTM on the tape: `d x L` in, `2h x L` out (forward block on top).
pub fn blstm_on<S: Scalar>(tape: &mut Tape<S>, x: Var, params: &BlstmVars) -> Result<Var> {
    let (d, steps) = tape.value(x).dims2()?;
    if steps == 0 {
        return Err(Error::Dimension("BLSTM needs at least one segment".into()));
    }
    let want = [4 * params.hidden, d];
    for w in [params.forward[0], params.backward[0]] {
        if tape.value(w).shape() != want {
            return Err(Error::Dimension(format!(
                "LSTM input weights have shape {:?}, expected {want:?}",
                tape.value(w).shape()
            )));
        }
    }
    let fwd = lstm_direction_on(tape, x, params.forward, params.hidden, false)?;
    let bwd = lstm_direction_on(tape, x, params.backward, params.hidden, true)?;
    tape.concat_rows(fwd, bwd)
}

pub fn blstm_forward<S: Scalar>(x: &Tensor<S>, params: &BlstmParams<S>) -> Result<Tensor<S>> {
    params.validate(x.rows())?;
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let p = params.record(&mut tape);
    let out = blstm_on(&mut tape, xv, &p)?;
    Ok(tape.value(out).clone())
}

/// Attentive statistics pooling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AspParams<S> {
    /// `a x D`
    pub w: Tensor<S>,
    /// `a x 1`
    pub b: Tensor<S>,
    /// `a x 1`
    pub v: Tensor<S>,
}

pub const ASP_WEIGHT_NAMES: [&str; 3] = ["w", "b", "v"];

impl<S: Scalar> AspParams<S> {
    pub fn zeros(input_dim: usize, bottleneck: usize) -> Self {
        AspParams {
            w: Tensor::zeros(&[bottleneck, input_dim]),
            b: Tensor::zeros(&[bottleneck, 1]),
            v: Tensor::zeros(&[bottleneck, 1]),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, bottleneck: usize, rng: &mut R) -> Self {
        AspParams {
            w: Tensor::uniform(&[bottleneck, input_dim], 1.0 / (input_dim as f64).sqrt(), rng),
            b: Tensor::zeros(&[bottleneck, 1]),
            v: Tensor::uniform(&[bottleneck, 1], 1.0 / (bottleneck as f64).sqrt(), rng),
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let a = self.w.rows();
        if a == 0 {
            return Err(Error::Config("ASP bottleneck must be at least 1".into()));
        }
        for (name, t, want) in [
            ("w", &self.w, [a, input_dim]),
            ("b", &self.b, [a, 1]),
            ("v", &self.v, [a, 1]),
        ] {
            if t.shape() != want {
                return Err(Error::Dimension(format!(
                    "ASP {name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor<S>; 3] {
        [&self.w, &self.b, &self.v]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 3] {
        [&mut self.w, &mut self.b, &mut self.v]
    }

    pub fn record(&self, tape: &mut Tape<S>) -> [Var; 3] {
        self.tensors().map(|t| tape.leaf(t.clone()))
    }
}

/// Handles produced by pooling, including the attention weights.
#[derive(Debug, Clone, Copy)]
pub struct PooledVars {
    /// `[mu; sigma]`, `2D x 1`
    pub pooled: Var,
    /// `L x 1`
    pub weights: Var,
}

/// Attentive statistics pooling on the tape: `D x L` in, `2D x 1` out.
///
/// `e_t = v^T tanh(W h_t + b)`, `alpha = softmax(e)`, `mu = sum alpha_t h_t`,
/// `sigma = sqrt(max(sum alpha_t h_t^2 - mu^2, floor))`.
pub fn asp_on<S: Scalar>(tape: &mut Tape<S>, h: Var, [w, b, v]: [Var; 3]) -> Result<PooledVars> {
    let (_, steps) = tape.value(h).dims2()?;
    if steps == 0 {
        return Err(Error::Dimension("pooling needs at least one segment".into()));
    }
    let hidden = tape.matmul(w, h)?;
    let hidden = tape.add_column(hidden, b)?;
    let hidden = tape.tanh(hidden)?;
    let vt = tape.transpose(v)?;
    let scores = tape.matmul(vt, hidden)?;
    let scores = tape.transpose(scores)?;
    let alpha = tape.softmax_columns(scores)?;

    let mean = tape.matmul(h, alpha)?;
    let sq = tape.mul(h, h)?;
    let second = tape.matmul(sq, alpha)?;
    let mean_sq = tape.mul(mean, mean)?;
    let var = tape.sub(second, mean_sq)?;
    let std = tape.sqrt_floor(var, S::of(VARIANCE_FLOOR))?;
    let pooled = tape.concat_rows(mean, std)?;
    Ok(PooledVars { pooled, weights: alpha })
}

/// Attentive statistics pooling: returns `[mu; sigma]` as a vector of length `2D`.
pub fn asp<S: Scalar>(h: &Tensor<S>, params: &AspParams<S>) -> Result<Tensor<S>> {
    params.validate(h.rows())?;
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let p = params.record(&mut tape);
    let out = asp_on(&mut tape, hv, p)?;
    let n = tape.value(out.pooled).len();
    tape.value(out.pooled).clone().reshape(vec![n])
}

/// Affine map from pooled statistics to the utterance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProjection<S> {
    /// `e x 2D`
    pub w: Tensor<S>,
    /// `e x 1`
    pub bias: Option<Tensor<S>>,
}

impl<S: Scalar> EmbeddingProjection<S> {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, embed_dim: usize, rng: &mut R) -> Self {
        EmbeddingProjection {
            w: Tensor::uniform(&[embed_dim, input_dim], 1.0 / (input_dim as f64).sqrt(), rng),
            bias: Some(Tensor::zeros(&[embed_dim, 1])),
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let e = self.w.rows();
        if e == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if self.w.shape() != [e, input_dim] {
            return Err(Error::Dimension(format!(
                "projection weight has shape {:?}, expected {:?}",
                self.w.shape(),
                [e, input_dim]
            )));
        }
        if let Some(b) = &self.bias {
            if b.shape() != [e, 1] {
                return Err(Error::Dimension(format!(
                    "projection bias has shape {:?}, expected {:?}",
                    b.shape(),
                    [e, 1]
                )));
            }
        }
        Ok(())
    }

    pub fn record(&self, tape: &mut Tape<S>) -> (Var, Option<Var>) {
        let w = tape.leaf(self.w.clone());
        let b = self.bias.as_ref().map(|b| tape.leaf(b.clone()));
        (w, b)
    }
}

pub fn project_on<S: Scalar>(tape: &mut Tape<S>, pooled: Var, (w, bias): (Var, Option<Var>)) -> Result<Var> {
    let out = tape.matmul(w, pooled)?;
    match bias {
        Some(b) => tape.add_column(out, b),
        None => Ok(out),
    }
}

pub fn project_embedding<S: Scalar>(pooled: &Tensor<S>, params: &EmbeddingProjection<S>) -> Result<Tensor<S>> {
    let n = pooled.len();
    params.validate(n)?;
    let mut tape = Tape::new();
    let x = tape.leaf(pooled.clone().reshape(vec![n, 1])?);
    let p = params.record(&mut tape);
    let out = project_on(&mut tape, x, p)?;
    let e = tape.value(out).len();
    tape.value(out).clone().reshape(vec![e])
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_blstm_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::uniform(&[3, 5], 1.0, &mut rng);
        let out = blstm_forward(&x, &BlstmParams::zeros(3, 4)).unwrap();
        assert_eq!(out, Tensor::zeros(&[8, 5]));
    }

    #[test]
    fn blstm_shape_and_direction_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, l, h) = (3, 6, 4);
        let x = Tensor::<f64>::uniform(&[d, l], 1.0, &mut rng);
        let dir = LstmDirection::init(d, h, &mut rng);
        // Same weights in both directions so reversing the input swaps the blocks.
        let params = BlstmParams { forward: dir.clone(), backward: dir };
        let out = blstm_forward(&x, &params).unwrap();
        assert_eq!(out.shape(), &[2 * h, l]);

        let mut rev = Tensor::<f64>::zeros(&[d, l]);
        for r in 0..d {
            for c in 0..l {
                rev.data_mut()[r * l + c] = x.at(r, l - 1 - c);
            }
        }
        let out_rev = blstm_forward(&rev, &params).unwrap();
        for r in 0..h {
            for c in 0..l {
                assert_eq!(out_rev.at(r, c), out.at(h + r, l - 1 - c));
                assert_eq!(out_rev.at(h + r, c), out.at(r, l - 1 - c));
            }
        }
    }

    #[test]
    fn forget_bias_initialised_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = BlstmParams::<f64>::init(3, 2, &mut rng);
        assert_eq!(&p.forward.bias.data()[2..4], &[1.0, 1.0]);
        assert_eq!(&p.backward.bias.data()[2..4], &[1.0, 1.0]);
    }

    #[test]
    fn asp_uniform_attention() {
        let h = Tensor::<f64>::from_rows(&[&[1.0, 3.0]]).unwrap();
        let out = asp(&h, &AspParams::zeros(1, 2)).unwrap();
        assert_eq!(out.data(), &[2.0, 1.0]);

        let h = Tensor::<f64>::from_rows(&[&[1.0, 2.0, 6.0], &[0.0, 0.0, 3.0]]).unwrap();
        let out = asp(&h, &AspParams::zeros(2, 3)).unwrap();
        let mean = [3.0, 1.0];
        let std = [(14.0f64 / 3.0).sqrt(), 2.0f64.sqrt()];
        for i in 0..2 {
            assert!((out.data()[i] - mean[i]).abs() < 1e-12);
            assert!((out.data()[2 + i] - std[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn asp_single_frame_hits_floor() {
        let h = Tensor::<f64>::from_rows(&[&[0.4], &[-2.0]]).unwrap();
        let out = asp(&h, &AspParams::zeros(2, 3)).unwrap();
        assert_eq!(&out.data()[..2], &[0.4, -2.0]);
        for &s in &out.data()[2..] {
            assert_eq!(s, VARIANCE_FLOOR.sqrt());
        }
    }

    #[test]
    fn projection_cases() {
        let pooled = Tensor::<f64>::vector(vec![2.0, 1.0]).unwrap();
        let p = EmbeddingProjection { w: Tensor::from_rows(&[&[1.0, 1.0]]).unwrap(), bias: None };
        assert_eq!(project_embedding(&pooled, &p).unwrap().data(), &[3.0]);

        let id = EmbeddingProjection { w: Tensor::identity(2), bias: Some(Tensor::zeros(&[2, 1])) };
        assert_eq!(project_embedding(&pooled, &id).unwrap(), pooled);

        let zero = EmbeddingProjection {
            w: Tensor::zeros(&[3, 2]),
            bias: Some(Tensor::column(vec![0.5, 0.0, -1.0]).unwrap()),
        };
        assert_eq!(project_embedding(&pooled, &zero).unwrap().data(), &[0.5, 0.0, -1.0]);

        let bad = EmbeddingProjection::<f64> { w: Tensor::zeros(&[3, 4]), bias: None };
        assert!(matches!(project_embedding(&pooled, &bad), Err(Error::Dimension(_))));
    }
}
