//! Dynamic movement primitives on SO(3) and in linear space, plus the
//! zero-velocity-crossing segmentation used to cut demonstrations.

mod position;
mod quaternion;
mod segment;
mod trajectory;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::canonical::{CanonicalParams, PhaseKernelBank, PhaseState, DEFAULT_KERNEL_COUNT};
use crate::error::{check_dim, Error, Result};

pub use position::{
    extract_position_forcing_target, fit_position_primitive, position_forcing_term,
    position_transformation_step, position_unroll, PositionPrimitive, PositionRollout,
    PositionState,
};
pub(crate) use position::{fit_with_timing as fit_position_with_timing, no_position_coupling};
pub(crate) use quaternion::{acceleration_residual, log_mean, no_coupling};
pub use quaternion::{
    extract_forcing_target, fit_quaternion_primitive, forcing_term, goal_step,
    replay_phase_and_goal, transformation_step, unroll, OrientationRollout, PrimitiveState,
    QuaternionPrimitive,
};
pub use segment::{segment_zvc, Segmentation, ZvcConfig};
#[cfg(test)]
pub(crate) use trajectory::rotation_vectors;
pub use trajectory::{
    interpolate_series, LinearTrajectory, OrientationSample, OrientationTrajectory,
    SMOOTHING_WINDOW,
};

/// Transformation-system gains. `β = α/4` keeps the attractor critically
/// damped; the goal system uses `α_g = α/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmpGains {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_goal: f64,
}

impl DmpGains {
    pub fn new(alpha: f64) -> Result<Self> {
        let g = DmpGains {
            alpha,
            beta: alpha / 4.0,
            alpha_goal: alpha / 2.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.alpha_goal > 0.0) {
            return Err(Error::invalid("DMP gains must be positive"));
        }
        if (self.beta - self.alpha / 4.0).abs() > 1e-12 * self.alpha {
            return Err(Error::invalid("beta must equal alpha / 4"));
        }
        Ok(())
    }
}

impl Default for DmpGains {
    fn default() -> Self {
        DmpGains {
            alpha: 25.0,
            beta: 6.25,
            alpha_goal: 12.5,
        }
    }
}

/// Settings shared by the primitive fitting routines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_kernels: usize,
    /// `τ = tau_scale · motion duration`.
    pub tau_scale: f64,
    /// Ridge penalty added to the per-sample normal equations.
    pub ridge: f64,
    pub gains: DmpGains,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_kernels: DEFAULT_KERNEL_COUNT,
            tau_scale: 1.0,
            ridge: 1e-8,
            gains: DmpGains::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if self.n_kernels < 2 {
            return Err(Error::invalid("need at least 2 kernels"));
        }
        if !(self.tau_scale > 0.0 && self.tau_scale.is_finite()) {
            return Err(Error::invalid("tau_scale must be positive"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid("ridge penalty must be non-negative"));
        }
        Ok(())
    }

    /// Canonical system and kernel bank for a motion lasting `duration` seconds.
    pub(crate) fn timing(&self, duration: f64) -> Result<(CanonicalParams, PhaseKernelBank)> {
        self.validate()?;
        let canonical = CanonicalParams::new(self.tau_scale * duration)?;
        let bank = PhaseKernelBank::equal_time_over(self.n_kernels, &canonical, duration)?;
        Ok((canonical, bank))
    }
}

/// Regressors `ψ̄(p)·u` of the forcing term.
pub(crate) fn forcing_basis(bank: &PhaseKernelBank, phase: PhaseState) -> Vec<f64> {
    bank.modulation(phase)
}

/// Solves `(ΦᵀΦ/n + λI) W = ΦᵀF/n` for `W`.
///
/// Scaling by the sample count keeps the solution unchanged when the data
/// are duplicated.
pub(crate) fn ridge_solve(
    phi: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    let n = phi.nrows();
    if n == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    crate::error::check_dim("regression targets", n, targets.nrows())?;
    let inv_n = 1.0 / n as f64;
    let mut gram = phi.tr_mul(phi) * inv_n;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = phi.tr_mul(targets) * inv_n;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("normal equations are not positive definite".into()))?;
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "regression produced non-finite weights".into(),
        ));
    }
    Ok(w)
}

/// Pooled NMSE between two equally long vector sequences:
/// `Σ‖pred − target‖² / Σ‖target − mean‖²`.
pub fn pooled_nmse<V: AsRef<[f64]>>(pred: &[V], target: &[V]) -> Result<f64> {
    crate::error::check_dim("nmse series", target.len(), pred.len())?;
    let Some(first) = target.first() else {
        return Err(Error::TooShort { needed: 1, got: 0 });
    };
    let dim = first.as_ref().len();
    let mut mean = vec![0.0; dim];
    for t in target {
        crate::error::check_dim("nmse sample", dim, t.as_ref().len())?;
        mean.iter_mut().zip(t.as_ref()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= target.len() as f64);
    let mut err = 0.0;
    let mut var = 0.0;
    for (p, t) in pred.iter().zip(target) {
        crate::error::check_dim("nmse sample", dim, p.as_ref().len())?;
        for ((pv, tv), m) in p.as_ref().iter().zip(t.as_ref()).zip(&mean) {
            err += (pv - tv).powi(2);
            var += (tv - m).powi(2);
        }
    }
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(err / var)
}

/// Row-major nested vectors, the on-disk layout of weight matrices.
pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for r in rows {
        check_dim("matrix row length", cols, r.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_recovers_exact_weights() {
        let phi = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let w = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, -1.5, 0.25]);
        let f = &phi * &w;
        let est = ridge_solve(&phi, &f, 0.0).unwrap();
        assert!((est - w).abs().max() < 1e-9);
    }

    #[test]
    fn ridge_is_duplication_invariant() {
        let phi = DMatrix::from_fn(10, 2, |i, j| (i as f64 + 1.0).powi(j as i32 + 1));
        let f = DMatrix::from_fn(10, 1, |i, _| (i as f64).sin());
        let once = ridge_solve(&phi, &f, 1e-3).unwrap();
        let phi2 = DMatrix::from_fn(20, 2, |i, j| phi[(i % 10, j)]);
        let f2 = DMatrix::from_fn(20, 1, |i, _| f[(i % 10, 0)]);
        let twice = ridge_solve(&phi2, &f2, 1e-3).unwrap();
        assert!((once - twice).abs().max() < 1e-12);
    }

    #[test]
    fn pooled_nmse_basics() {
        let t = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        assert_eq!(pooled_nmse(&t, &t).unwrap(), 0.0);
        let mean = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        assert!((pooled_nmse(&mean, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            pooled_nmse(&mean, &mean),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn gains_follow_alpha() {
        let g = DmpGains::new(25.0).unwrap();
        assert_eq!(g, DmpGains::default());
        assert!(DmpGains::new(-1.0).is_err());
    }
}
