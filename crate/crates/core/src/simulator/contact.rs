//! Surrogate tactile response of the electrodes to tool-board roll
//! misalignment.
//!
//! ```text
//! e_k = base_k(t) + c(t)·[S_k0·δ + S_k1·δ̇ + S_k2·χ(φ_b) + g_k·tanh(δ/δ_s)] + noise
//! χ(φ_b) = φ_s·tanh(φ_b/φ_s)
//! ```
//!
//! `δ` is the board roll minus the tool roll, `c(t) ∈ [0, 1]` the contact
//! level and `χ` a saturating shear load that depends on the board roll
//! itself, so an aligned tool on a tilted board still reads differently from
//! one on a level board.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::primitives::{matrix_from_rows, matrix_rows};

pub const DEFAULT_NOISE_STD: f64 = 0.02;
/// Misalignment at which the nonlinear electrode term saturates, radians.
pub const MISALIGNMENT_SATURATION: f64 = 0.1;
/// Board roll at which the shear load saturates, radians.
pub const SHEAR_SATURATION: f64 = 0.1;

/// Inputs of one electrode reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactState {
    /// Contact level in `[0, 1]`.
    pub contact: f64,
    /// Fraction of the in-contact part of the task elapsed, `[0, 1]`.
    pub progress: f64,
    /// Board roll minus tool roll, radians.
    pub misalignment: f64,
    /// Time derivative of `misalignment`.
    pub misalignment_rate: f64,
    /// Board roll, radians.
    pub board_roll: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContactDoc", into = "ContactDoc")]
pub struct ContactModel {
    /// `K × 3`: misalignment, misalignment rate, shear.
    sensitivity: DMatrix<f64>,
    gain: DVector<f64>,
    baseline: DVector<f64>,
    ripple: DVector<f64>,
    ripple_phase: DVector<f64>,
    noise_std: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ContactDoc {
    seed: u64,
    noise_std: f64,
    sensitivity: Vec<Vec<f64>>,
    gain: Vec<f64>,
    baseline: Vec<f64>,
    ripple: Vec<f64>,
    ripple_phase: Vec<f64>,
}

impl TryFrom<ContactDoc> for ContactModel {
    type Error = Error;

    fn try_from(d: ContactDoc) -> Result<Self> {
        let k = d.gain.len();
        let s = matrix_from_rows(&d.sensitivity, 3)?;
        check_dim("sensitivity rows", k, s.nrows())?;
        for v in [&d.baseline, &d.ripple, &d.ripple_phase] {
            check_dim("electrode parameters", k, v.len())?;
        }
        let m = ContactModel {
            sensitivity: s,
            gain: DVector::from_vec(d.gain),
            baseline: DVector::from_vec(d.baseline),
            ripple: DVector::from_vec(d.ripple),
            ripple_phase: DVector::from_vec(d.ripple_phase),
            noise_std: d.noise_std,
            seed: d.seed,
        };
        m.validate()?;
        Ok(m)
    }
}

impl From<ContactModel> for ContactDoc {
    fn from(m: ContactModel) -> Self {
        let v = |x: &DVector<f64>| x.as_slice().to_vec();
        ContactDoc {
            seed: m.seed,
            noise_std: m.noise_std,
            sensitivity: matrix_rows(&m.sensitivity),
            gain: v(&m.gain),
            baseline: v(&m.baseline),
            ripple: v(&m.ripple),
            ripple_phase: v(&m.ripple_phase),
        }
    }
}

/// Pseudo-random electrode model, a pure function of `(dim, seed)`. At
/// least a quarter of the channels respond strongly: their sensitivity norm
/// exceeds half of the largest.
pub fn build_contact_model(dim: usize, seed: u64) -> Result<ContactModel> {
    if dim == 0 {
        return Err(Error::invalid("contact model needs at least one channel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column scales bring δ (~0.2 rad), δ̇ (~0.3 rad/s) and χ (~0.1) to
    // unit-order readings.
    let scales = [6.0, 1.5, 10.0];
    let mut sensitivity = DMatrix::from_fn(dim, 3, |_, j| scales[j] * rng.random_range(-1.0..1.0));
    let norms: Vec<f64> = sensitivity.row_iter().map(|r| r.norm()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let strong = norms.iter().filter(|n| **n > 0.5 * max).count();
    let needed = dim.div_ceil(4);
    if strong < needed {
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
        for &k in order.iter().take(needed) {
            if norms[k] <= 0.5 * max {
                let f = 0.75 * max / norms[k].max(1e-12);
                sensitivity.row_mut(k).scale_mut(f);
            }
        }
    }
    let gain = DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5));
    let baseline = DVector::from_fn(dim, |_, _| rng.random_range(0.5..2.0));
    let ripple = DVector::from_fn(dim, |_, _| rng.random_range(0.0..0.3));
    let ripple_phase = DVector::from_fn(dim, |_, _| rng.random_range(0.0..std::f64::consts::TAU));
    Ok(ContactModel {
        sensitivity,
        gain,
        baseline,
        ripple,
        ripple_phase,
        noise_std: DEFAULT_NOISE_STD,
        seed,
    })
}

/// `φ_s·tanh(φ_b/φ_s)`.
pub fn shear_load(board_roll: f64) -> f64 {
    SHEAR_SATURATION * (board_roll / SHEAR_SATURATION).tanh()
}

impl ContactModel {
    fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise level must be non-negative"));
        }
        if self.sensitivity.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sensitivities must be finite"));
        }
        Ok(())
    }

    pub fn with_noise(mut self, noise_std: f64) -> Result<Self> {
        self.noise_std = noise_std;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn sensitivity(&self) -> &DMatrix<f64> {
        &self.sensitivity
    }

    pub fn gain(&self) -> &DVector<f64> {
        &self.gain
    }

    /// `S·[δ, δ̇, χ(φ_b)]`.
    pub fn linear_response(&self, misalignment: f64, rate: f64, board_roll: f64) -> DVector<f64> {
        &self.sensitivity * nalgebra::Vector3::new(misalignment, rate, shear_load(board_roll))
    }

    /// Noise-free reading at the nominal, aligned condition.
    pub fn nominal_profile(&self, contact: f64, progress: f64) -> DVector<f64> {
        let angle = std::f64::consts::TAU * progress;
        DVector::from_fn(self.dim(), |k, _| {
            contact
                * self.baseline[k]
                * (1.0 + self.ripple[k] * (angle + self.ripple_phase[k]).sin())
        })
    }

    /// Noise-free reading.
    pub fn expected_reading(&self, state: &ContactState) -> DVector<f64> {
        let lin = self.linear_response(
            state.misalignment,
            state.misalignment_rate,
            state.board_roll,
        );
        let sat = (state.misalignment / MISALIGNMENT_SATURATION).tanh();
        self.nominal_profile(state.contact, state.progress)
            + (lin + &self.gain * sat) * state.contact
    }

    /// Reading with additive Gaussian noise.
    pub fn reading<R: Rng + ?Sized>(&self, state: &ContactState, rng: &mut R) -> DVector<f64> {
        let mut e = self.expected_reading(state);
        if self.noise_std > 0.0 {
            let noise = Normal::new(0.0, self.noise_std).expect("validated noise level");
            e.iter_mut().for_each(|v| *v += noise.sample(rng));
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(misalignment: f64, rate: f64, board_roll: f64) -> ContactState {
        ContactState {
            contact: 1.0,
            progress: 0.3,
            misalignment,
            misalignment_rate: rate,
            board_roll,
        }
    }

    #[test]
    fn aligned_on_level_board_is_pure_noise() {
        let m = build_contact_model(38, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = state(0.0, 0.0, 0.0);
        let base = m.nominal_profile(1.0, 0.3);
        let n = 4000;
        let mean = (0..n).fold(DVector::zeros(38), |acc, _| {
            acc + (m.reading(&s, &mut rng) - &base)
        }) / n as f64;
        assert!(mean.amax() < 4.0 * DEFAULT_NOISE_STD / (n as f64).sqrt() * 1.5);
        assert_eq!(m.expected_reading(&s), base);
    }

    #[test]
    fn linear_term_scales_with_misalignment() {
        let m = build_contact_model(12, 3).unwrap();
        let a = m.linear_response(0.05, 0.1, 0.0);
        let b = m.linear_response(0.1, 0.2, 0.0);
        assert!((b - a * 2.0).amax() < 1e-12);
    }

    #[test]
    fn brute_force_oracle() {
        let m = build_contact_model(5, 4).unwrap();
        let s = ContactState {
            contact: 0.7,
            progress: 0.4,
            misalignment: 0.08,
            misalignment_rate: -0.2,
            board_roll: 0.15,
        };
        let r = m.expected_reading(&s);
        for k in 0..5 {
            let sk = m.sensitivity.row(k);
            let chi = 0.1 * (0.15f64 / 0.1).tanh();
            let base = 0.7
                * m.baseline[k]
                * (1.0 + m.ripple[k] * (std::f64::consts::TAU * 0.4 + m.ripple_phase[k]).sin());
            let want = base
                + 0.7 * (sk[0] * 0.08 + sk[1] * -0.2 + sk[2] * chi + m.gain[k] * (0.8f64).tanh());
            assert!((r[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_with_strong_channels() {
        for seed in 0..20 {
            let a = build_contact_model(38, seed).unwrap();
            assert_eq!(a, build_contact_model(38, seed).unwrap());
            let norms: Vec<f64> = a.sensitivity.row_iter().map(|r| r.norm()).collect();
            let max = norms.iter().cloned().fold(0.0, f64::max);
            assert!(norms.iter().filter(|n| **n > 0.5 * max).count() * 4 >= 38);
        }
        let tiny = build_contact_model(1, 0).unwrap();
        assert_eq!(tiny.dim(), 1);
        assert!(build_contact_model(0, 0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = build_contact_model(6, 9).unwrap();
        let back: ContactModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn shear_is_monotone_and_saturating() {
        let v: Vec<f64> = [0.0, 2.5, 5.0, 7.5, 10.0]
            .iter()
            .map(|d: &f64| shear_load(d.to_radians()))
            .collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert!(v[4] < SHEAR_SATURATION);
    }
}
