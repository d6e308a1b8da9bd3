//! RMSProp over any [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::feedback::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    /// Decay `ρ` of the squared-gradient average.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::invalid("RMSProp decay must lie in (0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid("RMSProp epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// Running mean of squared gradients, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState<P> {
    mean_square: P,
}

impl<P: ParamSet> RmsPropState<P> {
    pub fn new(params: &P) -> Self {
        RmsPropState {
            mean_square: params.zeros_like(),
        }
    }

    pub fn mean_square(&self) -> &P {
        &self.mean_square
    }
}

/// `v ← ρv + (1−ρ)g²`, `θ ← θ − η g / (√v + ε)`, elementwise, in place.
pub fn rmsprop_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut RmsPropState<P>,
    config: &RmsPropConfig,
) -> Result<()> {
    let g = grads.tensors();
    let mut v = state.mean_square.tensors_mut();
    let mut theta = params.tensors_mut();
    check_dim("gradient tensors", theta.len(), g.len())?;
    check_dim("optimizer state tensors", theta.len(), v.len())?;
    for ((t, g), v) in theta.iter_mut().zip(&g).zip(v.iter_mut()) {
        check_dim("gradient tensor size", t.len(), g.len())?;
        for ((ti, gi), vi) in t.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vi = config.decay * *vi + (1.0 - config.decay) * gi * gi;
            *ti -= config.learning_rate * gi / (vi.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
