//! Second-order canonical system and the phase kernels built on it.
//!
//! ```text
//! τ·u̇ = α_u·(β_u·(0 − p) − u)
//! τ·ṗ = u
//! ```
//!
//! Every transformation system of a primitive, its expected sensor traces
//! and its feedback model read the same `(p, u)` pair. `p` starts at 1 and
//! `u` at 0; with `β_u = α_u/4` the pair decays to the origin without
//! overshoot. `u` is negative while `p` decays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA_U: f64 = 25.0;
pub const DEFAULT_KERNEL_COUNT: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub p: f64,
    pub u: f64,
}

impl PhaseState {
    pub fn initial() -> Self {
        PhaseState { p: 1.0, u: 0.0 }
    }
}

impl Default for PhaseState {
    fn default() -> Self {
        Self::initial()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalParams {
    pub alpha_u: f64,
    pub beta_u: f64,
    /// Movement duration scale in seconds.
    pub tau: f64,
}

impl CanonicalParams {
    /// `α_u = 25`, `β_u = α_u/4`.
    pub fn new(tau: f64) -> Result<Self> {
        Self::with_gain(DEFAULT_ALPHA_U, tau)
    }

    pub fn with_gain(alpha_u: f64, tau: f64) -> Result<Self> {
        let p = CanonicalParams {
            alpha_u,
            beta_u: alpha_u / 4.0,
            tau,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_u > 0.0 && self.alpha_u.is_finite()) {
            return Err(Error::invalid("alpha_u must be positive"));
        }
        if (self.beta_u - self.alpha_u / 4.0).abs() > 1e-12 * self.alpha_u {
            return Err(Error::invalid("beta_u must equal alpha_u / 4"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau must be positive"));
        }
        Ok(())
    }

    fn derivative(&self, s: PhaseState) -> (f64, f64) {
        let du = self.alpha_u * (self.beta_u * (0.0 - s.p) - s.u) / self.tau;
        let dp = s.u / self.tau;
        (dp, du)
    }
}

/// One explicit-Euler step; both updates read the pre-step state.
pub fn canonical_step(s: PhaseState, params: &CanonicalParams, dt: f64) -> PhaseState {
    let (dp, du) = params.derivative(s);
    PhaseState {
        p: s.p + dt * dp,
        u: s.u + dt * du,
    }
}

/// `steps + 1` states starting from `(1, 0)`.
pub fn phase_rollout(params: &CanonicalParams, dt: f64, steps: usize) -> Vec<PhaseState> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = PhaseState::initial();
    out.push(s);
    for _ in 0..steps {
        s = canonical_step(s, params, dt);
        out.push(s);
    }
    out
}

/// Gaussian kernels `ψ_i(p) = exp(−h_i (p − c_i)²)` over the phase variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelBankDoc", into = "KernelBankDoc")]
pub struct PhaseKernelBank {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KernelBankDoc {
    n: usize,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl TryFrom<KernelBankDoc> for PhaseKernelBank {
    type Error = Error;

    fn try_from(doc: KernelBankDoc) -> Result<Self> {
        if doc.n != doc.centers.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel bank centers",
                expected: doc.n,
                found: doc.centers.len(),
            });
        }
        PhaseKernelBank::new(doc.centers, doc.widths)
    }
}

impl From<PhaseKernelBank> for KernelBankDoc {
    fn from(b: PhaseKernelBank) -> Self {
        KernelBankDoc {
            n: b.centers.len(),
            centers: b.centers,
            widths: b.widths,
        }
    }
}

impl PhaseKernelBank {
    /// Centers must be strictly ordered (either direction) and widths positive.
    /// A single kernel is accepted; the forcing term then collapses to `w·u`.
    pub fn new(centers: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("kernel bank needs at least one kernel"));
        }
        if centers.len() != widths.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel bank widths",
                expected: centers.len(),
                found: widths.len(),
            });
        }
        if centers.iter().chain(&widths).any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel parameters must be finite"));
        }
        if widths.iter().any(|&h| h <= 0.0) {
            return Err(Error::invalid("kernel widths must be positive"));
        }
        let increasing = centers.windows(2).all(|w| w[1] > w[0]);
        let decreasing = centers.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::invalid("kernel centers must be strictly ordered"));
        }
        Ok(PhaseKernelBank { centers, widths })
    }

    /// `n` kernels whose centers are the phase at `n` equally spaced times
    /// in `[0, τ]`.
    pub fn equal_time(n: usize, params: &CanonicalParams) -> Result<Self> {
        Self::equal_time_over(n, params, params.tau)
    }

    /// Same as [`equal_time`](Self::equal_time) but spread over `[0, horizon]`,
    /// for primitives whose `τ` is a multiple of the motion duration.
    pub fn equal_time_over(n: usize, params: &CanonicalParams, horizon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!(
                "an equally spaced kernel bank needs at least 2 kernels, got {n}"
            )));
        }
        params.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("kernel horizon must be positive"));
        }
        let centers = sample_phase(params, horizon, n);
        let mut widths: Vec<f64> = centers
            .windows(2)
            .map(|w| 1.0 / (2.0 * (w[1] - w[0]).powi(2)))
            .collect();
        widths.push(*widths.last().expect("n >= 2"));
        Self::new(centers, widths)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Raw activations `ψ_i(p)`.
    pub fn activations(&self, p: f64) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, h)| (-h * (p - c) * (p - c)).exp())
            .collect()
    }

    /// `ψ_i(p) / Σ_j ψ_j(p)`.
    pub fn normalized(&self, p: f64) -> Vec<f64> {
        let mut psi = self.activations(p);
        let sum: f64 = psi.iter().sum();
        if sum > 0.0 {
            psi.iter_mut().for_each(|v| *v /= sum);
        } else {
            // Far outside every kernel: fall back to the nearest center.
            let nearest = self
                .centers
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - p).abs().total_cmp(&(b.1 - p).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            psi.iter_mut().enumerate().for_each(|(i, v)| {
                *v = if i == nearest { 1.0 } else { 0.0 };
            });
        }
        psi
    }

    /// Phase modulation vector `G_i = ψ_i(p) / Σψ_j(p) · u`.
    pub fn modulation(&self, phase: PhaseState) -> Vec<f64> {
        let mut g = self.normalized(phase.p);
        g.iter_mut().for_each(|v| *v *= phase.u);
        g
    }
}

/// Phase at `n` equally spaced times in `[0, horizon]`, integrated with RK4
/// on a fine sub-grid.
fn sample_phase(params: &CanonicalParams, horizon: f64, n: usize) -> Vec<f64> {
    const SUBSTEPS: usize = 200;
    let interval = horizon / (n - 1) as f64;
    let h = interval / SUBSTEPS as f64;
    let mut s = PhaseState::initial();
    let mut out = Vec::with_capacity(n);
    out.push(s.p);
    for _ in 1..n {
        for _ in 0..SUBSTEPS {
            s = rk4_step(params, s, h);
        }
        out.push(s.p);
    }
    out
}

fn rk4_step(params: &CanonicalParams, s: PhaseState, h: f64) -> PhaseState {
    let add = |s: PhaseState, k: (f64, f64), f: f64| PhaseState {
        p: s.p + f * k.0,
        u: s.u + f * k.1,
    };
    let k1 = params.derivative(s);
    let k2 = params.derivative(add(s, k1, 0.5 * h));
    let k3 = params.derivative(add(s, k2, 0.5 * h));
    let k4 = params.derivative(add(s, k3, h));
    PhaseState {
        p: s.p + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        u: s.u + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    }
}
