use serde::{Deserialize, Serialize};

use super::tape::Gradients;
use super::tensor::ParamStore;
use super::RuntimeError;

/// Plain SGD with global-norm clipping and `lr / (1 + decay · epoch)`
/// learning-rate decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Global gradient-norm threshold; `None` disables clipping.
    pub clip: Option<f64>,
    pub decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.1,
            clip: Some(5.0),
            decay: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub epoch: usize,
    pub steps: u64,
}

impl SgdState {
    pub fn next_epoch(&mut self) {
        self.epoch += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub grad_norm: f64,
    /// Multiplier applied to the raw gradient by clipping (1 when unclipped).
    pub clip_scale: f64,
    pub learning_rate: f64,
}

pub fn optimize_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut SgdState,
    config: &SgdConfig,
) -> Result<StepReport, RuntimeError> {
    if grads.version != params.version() {
        return Err(RuntimeError::StaleTape);
    }
    for (id, g) in grads.touched() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(RuntimeError::NonFiniteGradient(params.name(id).to_owned()));
        }
    }
    let norm = grads.norm();
    let clip_scale = match config.clip {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    let lr = config.learning_rate / (1.0 + config.decay * state.epoch as f64);
    let step = lr * clip_scale;
    let touched: Vec<_> = grads.touched().map(|(id, _)| id).collect();
    for id in touched {
        let g = grads.get(id);
        let t = params.get_mut(id);
        for (p, g) in t.data.iter_mut().zip(&g) {
            *p = (*p as f64 - step * g) as f32;
        }
        if !t.is_finite() {
            return Err(RuntimeError::NonFiniteParam(params.name(id).to_owned()));
        }
    }
    state.steps += 1;
    Ok(StepReport {
        grad_norm: norm,
        clip_scale,
        learning_rate: lr,
    })
}
