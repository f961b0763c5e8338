//! Dense row-major tensors of rank 1 to 3.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major real tensor.
///
/// Construction through [`Tensor::new`] rejects non-finite values. Every kernel in
/// the crate treats a rank-1 tensor of length `n` as an `n x 1` column.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::Dimension(format!(
            "tensor rank must be 1..=3, got shape {shape:?}"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Dimension(format!("extent overflow for shape {shape:?}")))
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor construction (index {pos} of shape {shape:?})"
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Kernel-internal constructor; callers guarantee the length invariant.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| S::of(v))).collect();
        Self::matrix(rows.len(), cols, data)
    }

    pub fn vector(data: Vec<S>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn column(data: Vec<S>) -> Result<Self> {
        let n = data.len();
        Self::matrix(n, 1, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = check_shape(shape).expect("valid shape");
        Tensor::from_parts(shape.to_vec(), vec![S::zero(); len])
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let len = check_shape(shape).expect("valid shape");
        Tensor::from_parts(shape.to_vec(), vec![value; len])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    /// Uniform samples in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let len = check_shape(shape).expect("valid shape");
        let data = (0..len)
            .map(|_| S::of(rng.random_range(-bound..=bound)))
            .collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` view; rank-1 tensors read as columns.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Ok((*n, 1)),
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Dimension(format!(
                "expected a matrix or vector, got shape {other:?}"
            ))),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().map(|d| d.0).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.dims2().map(|d| d.1).unwrap_or(0)
    }

    /// Element `(r, c)` of a rank-1 or rank-2 tensor.
    pub fn at(&self, r: usize, c: usize) -> S {
        let cols = self.cols();
        self.data[r * cols + c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    /// Column `c` of a matrix as an owned vector.
    pub fn column_values(&self, c: usize) -> Vec<S> {
        let (r, cols) = self.dims2().expect("matrix");
        (0..r).map(|i| self.data[i * cols + c]).collect()
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|v| T::of(v.as_f64())).collect(),
        )
    }

    /// Largest elementwise absolute difference, or `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Option<S> {
        (self.shape == other.shape).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| (a - b).abs())
                .fold(S::zero(), S::max)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Tensor::<f64>::vector(vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(Tensor::<f64>::vector(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f64>::new(vec![], vec![]).is_err());
        assert!(Tensor::<f64>::new(vec![1, 1, 1, 1], vec![1.0]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 1, 2], vec![0.0; 4]).is_ok());
    }

    #[test]
    fn vector_reads_as_column() {
        let t = Tensor::<f32>::vector(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.dims2().unwrap(), (3, 1));
        assert_eq!(t.at(2, 0), 3.0);
    }

    #[test]
    fn zero_extent_is_allowed() {
        let t = Tensor::<f64>::zeros(&[0, 4]);
        assert_eq!(t.dims2().unwrap(), (0, 4));
        assert!(t.is_empty());
    }
}
