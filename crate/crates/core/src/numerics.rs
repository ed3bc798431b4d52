//! Dense vectors, matrices and the scalar nonlinearities shared by the plain
//! and decomposed forward passes. Everything is `f64`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default epsilon added to the variance inside [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// A dense activation vector.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Vector {
        self.map(|a| a * k)
    }

    pub fn add_assign(&mut self, other: &Vector) {
        assert_eq!(self.len(), other.len(), "add_assign: length mismatch");
        for (a, b) in self.0.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "axpy: length mismatch");
        for (a, b) in self.0.iter_mut().zip(other.iter()) {
            *a += k * b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.iter().map(|&a| f(a)).collect())
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        assert_eq!(self.len(), other.len(), "elementwise op: length mismatch");
        Vector(self.iter().zip(other.iter()).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|a| a.is_finite())
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in self.iter().enumerate() {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    /// Matrix-vector product, checked.
    pub fn try_matvec(&self, v: &[f64]) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "matvec: matrix is {}x{}, vector has length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Matrix-vector product. Panics on a shape mismatch; shapes are
    /// validated once when a checkpoint is loaded.
    pub fn matvec(&self, v: &[f64]) -> Vector {
        match self.try_matvec(v) {
            Ok(out) => out,
            Err(e) => panic!("{e}"),
        }
    }
}

/// Free-function form of [`Matrix::try_matvec`].
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    m.try_matvec(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Gelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => gelu(x),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn activation(kind: Activation, v: &Vector) -> Vector {
    v.map(|x| kind.apply(x))
}

pub fn softmax(v: &[f64]) -> Vector {
    if v.is_empty() {
        return Vector::zeros(0);
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log(sum(exp(v)))`, stabilised.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Layer normalisation: `alpha * (a - mean) / sqrt(var + eps) + delta`.
pub fn layer_norm(a: &[f64], alpha: &[f64], delta: &[f64], eps: f64) -> Vector {
    assert!(
        alpha.len() == a.len() && delta.len() == a.len(),
        "layer_norm: parameter length mismatch"
    );
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let denom = (var + eps).sqrt();
    a.iter()
        .zip(alpha.iter().zip(delta))
        .map(|(x, (g, b))| g * (x - mean) / denom + b)
        .collect()
}

/// Mixed relative/absolute closeness: `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// Largest violation of [`close`] across two slices, expressed as the
/// scaled error `|a - b| / max(1, |a|, |b|)`.
pub fn max_scaled_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn matvec_examples() {
        let v = Vector::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(Matrix::identity(3).matvec(&v), v);
        assert_eq!(Matrix::zeros(2, 3).matvec(&v).as_slice(), &[0.0, 0.0]);
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]).as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_shape_error() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            matvec(&m, &Vector::zeros(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn scalar_activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(0f64.tanh(), 0.0);
        assert_eq!(gelu(0.0), 0.0);
        // 1 / (1 + e^-2)
        assert_abs_diff_eq!(sigmoid(2.0), 0.8807970779778823, epsilon = 1e-15);
    }

    /// `erf(z) = 2/sqrt(pi) e^{-z^2} sum_n 2^n z^{2n+1} / (2n+1)!!`; all terms
    /// positive, so no cancellation for large `|z|`.
    fn erf_series(z: f64) -> f64 {
        let (sign, z) = if z < 0.0 { (-1.0, -z) } else { (1.0, z) };
        let mut term = z;
        let mut sum = z;
        for n in 1..400 {
            term *= 2.0 * z * z / (2 * n + 1) as f64;
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
        }
        sign * 2.0 / std::f64::consts::PI.sqrt() * (-z * z).exp() * sum
    }

    #[test]
    fn activations_match_reference_on_grid() {
        for k in 0..1000 {
            let x = -10.0 + 20.0 * k as f64 / 999.0;
            let sig_ref = 0.5 * (1.0 + (x / 2.0).tanh());
            assert!((sigmoid(x) - sig_ref).abs() < 1e-12, "sigmoid({x})");
            let gelu_ref = 0.5 * x * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
            assert!((gelu(x) - gelu_ref).abs() < 1e-12, "gelu({x}): {} vs {gelu_ref}", gelu(x));
            let tanh_ref = (x.exp() - (-x).exp()) / (x.exp() + (-x).exp());
            assert!((x.tanh() - tanh_ref).abs() < 1e-12, "tanh({x})");
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).as_slice(), &[0.5, 0.5]);
        for c in [-50.0, 0.0, 3.5, 700.0] {
            for p in softmax(&[c, c, c]).iter() {
                assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        let e = std::f64::consts::E;
        let s = softmax(&[1.0, 0.0]);
        assert_abs_diff_eq!(s[0], e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 1.0 / (e + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn layer_norm_examples() {
        let alpha = [1.5, -0.5, 2.0];
        let delta = [0.1, 0.2, 0.3];
        assert_eq!(layer_norm(&[0.0; 3], &alpha, &delta, LAYER_NORM_EPS).as_slice(), &delta);
        assert_eq!(layer_norm(&[4.2; 3], &alpha, &delta, LAYER_NORM_EPS).as_slice(), &delta);
        let out = layer_norm(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 1e-14);
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-500.0f64..500.0, 1..2000)) {
            let s = softmax(&v);
            prop_assert!((s.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(s.iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn layer_norm_shift_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 2..16),
            c in -100.0f64..100.0,
        ) {
            let n = a.len();
            let alpha: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 * 0.1).collect();
            let delta: Vec<f64> = (0..n).map(|i| i as f64 * -0.05).collect();
            let shifted: Vec<f64> = a.iter().map(|x| x + c).collect();
            let x = layer_norm(&a, &alpha, &delta, LAYER_NORM_EPS);
            let y = layer_norm(&shifted, &alpha, &delta, LAYER_NORM_EPS);
            prop_assert!(max_scaled_error(&x, &y) < 1e-9);
        }
    }
}
