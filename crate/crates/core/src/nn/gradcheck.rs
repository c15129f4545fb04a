//! Central finite-difference check of [`Model::backward`].

use super::loss::bce_loss;
use super::model::Model;
use super::tensor::Matrix;
use super::{Mode, Result};
use crate::rng;

/// Below this magnitude both gradients count as zero and the relative
/// error is taken against it instead.
const ZERO_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub layer: usize,
    pub name: &'static str,
    pub len: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ZERO_FLOOR)
}

/// Compares backprop gradients with `(L(θ+h) - L(θ-h)) / 2h` for every
/// trainable parameter. Each loss evaluation replays the same train-mode
/// generator, so dropout masks stay fixed across perturbations.
pub fn check_gradients(model: &Model<f64>, x: &Matrix<f64>, y: &Matrix<f64>, seed: u64, step: f64) -> Result<GradCheck> {
    let loss_of = |m: &Model<f64>| -> Result<f64> {
        let mut m = m.clone();
        let mut r = rng::stream_rng(seed, rng::stream::TRAIN);
        let (p, _) = m.forward(x, Mode::Train, &mut r)?;
        bce_loss(&p, y)
    };

    let mut probe = model.clone();
    let mut r = rng::stream_rng(seed, rng::stream::TRAIN);
    let (_, cache) = probe.forward(x, Mode::Train, &mut r)?;
    let grads = probe.backward(&cache, y)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let names: Vec<(usize, &'static str)> = model
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            let mut v = vec![(i, "weight"), (i, "bias")];
            if l.norm.is_some() {
                v.extend([(i, "scale"), (i, "shift")]);
            }
            v
        })
        .collect();

    let mut tensors = Vec::with_capacity(analytic.len());
    for (t, grad) in analytic.iter().enumerate() {
        let mut check = TensorCheck {
            layer: names[t].0,
            name: names[t].1,
            len: grad.len(),
            max_abs_error: 0.0,
            max_rel_error: 0.0,
        };
        for (k, &g) in grad.iter().enumerate() {
            let mut plus = model.clone();
            plus.parameter_tensors_mut()[t][k] += step;
            let mut minus = model.clone();
            minus.parameter_tensors_mut()[t][k] -= step;
            let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * step);
            check.max_abs_error = check.max_abs_error.max((g - numeric).abs());
            check.max_rel_error = check.max_rel_error.max(relative_error(g, numeric));
        }
        tensors.push(check);
    }
    Ok(GradCheck { tensors })
}
