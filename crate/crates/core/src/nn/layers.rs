//! Layer primitives: dense, batch normalization, ReLU, dropout, sigmoid.

use rand::Rng;

use super::tensor::{Matrix, Real};
use super::{Mode, NnError, Result};

/// `W x + b` for a single input vector.
pub fn dense_forward<T: Real>(w: &Matrix<T>, b: &[T], x: &[T]) -> Result<Vec<T>> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(NnError::Dimension(format!(
            "dense layer {}x{} with bias {} applied to input {}",
            w.rows(),
            w.cols(),
            b.len(),
            x.len()
        )));
    }
    Ok((0..w.rows())
        .map(|r| w.row(r).iter().zip(x).fold(b[r], |acc, (&wi, &xi)| acc + wi * xi))
        .collect())
}

pub fn relu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_vec<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Overflow-safe logistic function.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_vec<T: Real>(z: &[T]) -> Vec<T> {
    z.iter().map(|&v| sigmoid(v)).collect()
}

/// Inverted dropout.
///
/// In train mode every unit is kept with probability `1 - p` and survivors
/// are scaled by `1 / (1 - p)`. Returns the output and the per-element
/// multiplier (`None` when dropout is inactive).
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Matrix<T>,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(NnError::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Infer || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.as_slice().len())
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    let data = x.as_slice().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Matrix::from_vec(x.rows(), x.cols(), data), Some(mask)))
}

/// Batch normalization parameters and running statistics.
///
/// `scale` multiplies the standardized value and `shift` is added to it.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Values kept from a train-mode pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub normalized: Matrix<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            scale: vec![T::one(); width],
            shift: vec![T::zero(); width],
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    /// Normalizes each column of `batch`.
    ///
    /// Train mode uses the batch mean and population variance and returns
    /// them in the cache; infer mode uses the running statistics.
    pub fn forward(
        &self,
        batch: &Matrix<T>,
        epsilon: f64,
        mode: Mode,
    ) -> Result<(Matrix<T>, Option<BatchNormCache<T>>)> {
        let q = batch.rows();
        let width = batch.cols();
        if width != self.width() {
            return Err(NnError::Dimension(format!(
                "batch norm of width {} applied to {width} features",
                self.width()
            )));
        }
        let eps = T::lit(epsilon);
        match mode {
            Mode::Infer => {
                let inv_std: Vec<T> = self.running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut out = batch.clone();
                for r in 0..q {
                    let row = &mut out.as_mut_slice()[r * width..(r + 1) * width];
                    for j in 0..width {
                        let xhat = (row[j] - self.running_mean[j]) * inv_std[j];
                        row[j] = self.scale[j] * xhat + self.shift[j];
                    }
                }
                Ok((out, None))
            }
            Mode::Train => {
                if q < 2 {
                    return Err(NnError::Config(format!(
                        "batch normalization needs at least 2 samples in train mode, got {q}"
                    )));
                }
                let qn = T::from_usize(q).unwrap();
                let mean: Vec<T> = batch.sum_rows().into_iter().map(|s| s / qn).collect();
                let mut var = vec![T::zero(); width];
                for r in 0..q {
                    for (j, &v) in batch.row(r).iter().enumerate() {
                        let d = v - mean[j];
                        var[j] = var[j] + d * d;
                    }
                }
                for v in &mut var {
                    *v = *v / qn;
                }
                // zero variance with epsilon = 0 standardizes to zero
                let inv_std: Vec<T> = var
                    .iter()
                    .map(|&v| {
                        let s = T::one() / (v + eps).sqrt();
                        if s.is_finite() { s } else { T::zero() }
                    })
                    .collect();
                let mut normalized = batch.clone();
                let mut out = batch.clone();
                for r in 0..q {
                    for j in 0..width {
                        let idx = r * width + j;
                        let xhat = (batch.as_slice()[idx] - mean[j]) * inv_std[j];
                        normalized.as_mut_slice()[idx] = xhat;
                        out.as_mut_slice()[idx] = self.scale[j] * xhat + self.shift[j];
                    }
                }
                Ok((
                    out,
                    Some(BatchNormCache {
                        normalized,
                        inv_std,
                        mean,
                        var,
                    }),
                ))
            }
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch` with the
    /// statistics of a train-mode pass.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>, momentum: f64) {
        let mom = T::lit(momentum);
        let rest = T::one() - mom;
        for j in 0..self.width() {
            self.running_mean[j] = mom * self.running_mean[j] + rest * cache.mean[j];
            self.running_var[j] = mom * self.running_var[j] + rest * cache.var[j];
        }
    }

    /// Returns `(d_input, d_scale, d_shift)`.
    pub fn backward(&self, cache: &BatchNormCache<T>, d_out: &Matrix<T>) -> (Matrix<T>, Vec<T>, Vec<T>) {
        let q = d_out.rows();
        let width = d_out.cols();
        let qn = T::from_usize(q).unwrap();
        let xhat = cache.normalized.as_slice();
        let dy = d_out.as_slice();

        let mut d_scale = vec![T::zero(); width];
        let mut d_shift = vec![T::zero(); width];
        for r in 0..q {
            for j in 0..width {
                let idx = r * width + j;
                d_scale[j] = d_scale[j] + dy[idx] * xhat[idx];
                d_shift[j] = d_shift[j] + dy[idx];
            }
        }
        // d_xhat = dy * scale; sum(d_xhat) = scale * d_shift and
        // sum(d_xhat * xhat) = scale * d_scale.
        let mut d_in = Matrix::zeros(q, width);
        let out = d_in.as_mut_slice();
        for r in 0..q {
            for j in 0..width {
                let idx = r * width + j;
                let dxhat = dy[idx] * self.scale[j];
                let centered = qn * dxhat - self.scale[j] * d_shift[j] - xhat[idx] * self.scale[j] * d_scale[j];
                out[idx] = cache.inv_std[j] / qn * centered;
            }
        }
        (d_in, d_scale, d_shift)
    }
}
