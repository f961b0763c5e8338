//! Additive angular margin softmax over speaker identities, and cosine trial scoring.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_SCALE: f64 = 30.0;
pub const DEFAULT_MARGIN: f64 = 0.2;

/// Classification head: one weight row per speaker, used in unit-normalised form.
#[derive(Debug, Clone, PartialEq)]
pub struct AamHead<S> {
    /// `N x e`
    pub weights: Tensor<S>,
    pub scale: S,
    pub margin: S,
}

impl<S: Scalar> AamHead<S> {
    pub fn new(weights: Tensor<S>, scale: S, margin: S) -> Result<Self> {
        let head = AamHead { weights, scale, margin };
        head.validate()?;
        Ok(head)
    }

    pub fn init<R: Rng + ?Sized>(classes: usize, embed_dim: usize, scale: S, margin: S, rng: &mut R) -> Result<Self> {
        let weights = Tensor::uniform(&[classes, embed_dim], 1.0 / (embed_dim as f64).sqrt(), rng);
        Self::new(weights, scale, margin)
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, e) = self.weights.dims2()?;
        if n == 0 || e == 0 {
            return Err(Error::Config(format!("AAM head needs at least one class and dim, got {n}x{e}")));
        }
        if !(self.scale > S::zero()) {
            return Err(Error::Config(format!("AAM scale must be positive, got {}", self.scale)));
        }
        if !(self.margin >= S::zero() && self.margin < S::of(FRAC_PI_2)) {
            return Err(Error::Config(format!("AAM margin must lie in [0, pi/2), got {}", self.margin)));
        }
        Ok(())
    }
}

/// Loss for one embedding on the tape; `embedding` is an `e x 1` column and
/// `weights` the `N x e` class matrix. Returns a `1 x 1` loss.
pub fn aam_loss_on<S: Scalar>(
    tape: &mut Tape<S>,
    embedding: Var,
    weights: Var,
    label: usize,
    scale: S,
    margin: S,
) -> Result<Var> {
    let (e, c) = tape.value(embedding).dims2()?;
    let (_, we) = tape.value(weights).dims2()?;
    if c != 1 || we != e {
        return Err(Error::Dimension(format!(
            "embedding {:?} does not match class weights {:?}",
            tape.value(embedding).shape(),
            tape.value(weights).shape()
        )));
    }
    let x = tape.normalize_columns(embedding)?;
    let wt = tape.transpose(weights)?;
    let w = tape.normalize_columns(wt)?;
    let w = tape.transpose(w)?;
    let cosines = tape.matmul(w, x)?;
    tape.angular_margin_xent(cosines, label, scale, margin)
}

/// AAM softmax loss and its gradients with respect to the embedding and the head.
#[derive(Debug, Clone)]
pub struct AamOutcome<S> {
    pub loss: S,
    pub embedding_grad: Tensor<S>,
    pub weights_grad: Tensor<S>,
}

pub fn aam_loss<S: Scalar>(embedding: &Tensor<S>, label: usize, head: &AamHead<S>) -> Result<AamOutcome<S>> {
    head.validate()?;
    if label >= head.classes() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} speakers",
            head.classes()
        )));
    }
    let shape = embedding.shape().to_vec();
    let n = embedding.len();
    let mut tape = Tape::new();
    let x = tape.leaf(embedding.clone().reshape(vec![n, 1])?);
    let w = tape.leaf(head.weights.clone());
    let loss = aam_loss_on(&mut tape, x, w, label, head.scale, head.margin)?;
    let mut grads = tape.backward(loss)?;
    let embedding_grad = grads
        .take(x)
        .unwrap_or_else(|| Tensor::zeros(&[n, 1]))
        .reshape(shape)?;
    let weights_grad = grads
        .take(w)
        .unwrap_or_else(|| Tensor::zeros(head.weights.shape()));
    Ok(AamOutcome {
        loss: tape.value(loss).data()[0],
        embedding_grad,
        weights_grad,
    })
}

/// Cosine similarity of two embeddings.
pub fn cosine_score<S: Scalar>(enroll: &Tensor<S>, test: &Tensor<S>) -> Result<S> {
    if enroll.len() != test.len() {
        return Err(Error::Dimension(format!(
            "embeddings differ in length: {} vs {}",
            enroll.len(),
            test.len()
        )));
    }
    let na = enroll.norm();
    let nb = test.norm();
    if na == S::zero() {
        return Err(Error::Normalization("enrollment embedding".into()));
    }
    if nb == S::zero() {
        return Err(Error::Normalization("test embedding".into()));
    }
    let dot: S = enroll.data().iter().zip(test.data()).map(|(&a, &b)| (a / na) * (b / nb)).sum();
    Ok(dot.max(-S::one()).min(S::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor<f64> {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn single_class_loss_is_zero() {
        let head = AamHead::new(Tensor::from_rows(&[&[0.3, -0.2, 0.9]]).unwrap(), 30.0, 0.2).unwrap();
        let out = aam_loss(&v(&[1.0, 2.0, -0.5]), 0, &head).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn aligned_two_class_closed_form() {
        let head = AamHead::new(Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]).unwrap(), 30.0, 0.2).unwrap();
        let out = aam_loss(&v(&[0.7, 0.0]), 0, &head).unwrap();
        // cos(theta_y) = 1 is clamped to 1 - 1e-7 before the margin applies.
        let c = 1.0 - 1e-7;
        let target = 30.0 * (c * 0.2f64.cos() - (1.0 - c * c).sqrt() * 0.2f64.sin());
        let expected = -(target.exp() / (target.exp() + 1.0)).ln();
        assert!((out.loss - expected).abs() < 1e-12);
        // Unclamped closed form differs only through the clamp.
        let ideal = -((30.0 * 0.2f64.cos()).exp() / ((30.0 * 0.2f64.cos()).exp() + 1.0)).ln();
        assert!((out.loss - ideal).abs() < 1e-9);
    }

    #[test]
    fn zero_margin_is_scaled_softmax() {
        let w = Tensor::from_rows(&[&[0.3, -0.2], &[0.5, 0.5], &[-1.0, 0.1]]).unwrap();
        let x = v(&[0.4, -0.9]);
        let head = AamHead::new(w.clone(), 10.0, 0.0).unwrap();
        let out = aam_loss(&x, 2, &head).unwrap();
        let logits: Vec<f64> = (0..3)
            .map(|j| {
                let row = v(&w.data()[j * 2..j * 2 + 2]);
                10.0 * row.dot(&x).unwrap() / (row.norm() * x.norm())
            })
            .collect();
        let lse = logits.iter().map(|z| z.exp()).sum::<f64>().ln();
        assert!((out.loss - (lse - logits[2])).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let head = AamHead::new(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(), 30.0, 0.2).unwrap();
        assert!(matches!(aam_loss(&v(&[0.0, 0.0]), 0, &head), Err(Error::Normalization(_))));
        assert!(matches!(aam_loss(&v(&[1.0, 0.0]), 2, &head), Err(Error::Input(_))));
        let zero_row = AamHead::new(Tensor::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]).unwrap(), 30.0, 0.2).unwrap();
        assert!(matches!(aam_loss(&v(&[1.0, 0.0]), 0, &zero_row), Err(Error::Normalization(_))));
        assert!(AamHead::new(Tensor::<f64>::zeros(&[2, 2]), -1.0, 0.2).is_err());
        assert!(AamHead::new(Tensor::<f64>::zeros(&[2, 2]), 30.0, 1.6).is_err());
    }

    #[test]
    fn cosine_cases() {
        let a = v(&[1.0, 2.0, 3.0]);
        assert!((cosine_score(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&v(&[1.0, 0.0]), &v(&[0.0, 5.0])).unwrap(), 0.0);
        assert!((cosine_score(&a, &a.map(|x| -x)).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_score(&a, &v(&[0.0; 3])), Err(Error::Normalization(_))));
    }
}
