//! Quaternion DMP: transformation system, goal evolution, forcing-term
//! regression and unrolling.
//!
//! ```text
//! τ²ω̇ = α(β·2log(Q_g ∘ Q*) − τω) + f + C
//! τω_g = α_g·2log(Q_G ∘ Q_g*)
//! Q_{t+1} = exp(ωΔt/2) ∘ Q_t
//! ```

use nalgebra::{DMatrix, Vector3};

use super::trajectory::{OrientationSample, OrientationTrajectory};
use super::{forcing_basis, matrix_from_rows, matrix_rows, ridge_solve, DmpGains, FitConfig};
use crate::canonical::{canonical_step, CanonicalParams, PhaseKernelBank, PhaseState};
use crate::error::{check_dim, Error, Result};
use crate::so3::{self, RotVec3, UnitQuaternion};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuaternionPrimitiveDoc", into = "QuaternionPrimitiveDoc")]
pub struct QuaternionPrimitive {
    /// `N × 3`, one column per rotation axis.
    weights: DMatrix<f64>,
    goal: UnitQuaternion,
    canonical: CanonicalParams,
    gains: DmpGains,
    bank: PhaseKernelBank,
    /// Nominal motion length in seconds; the default unroll horizon.
    duration: f64,
}

#[derive(Serialize, Deserialize)]
struct QuaternionPrimitiveDoc {
    goal: UnitQuaternion,
    duration: f64,
    canonical: CanonicalParams,
    gains: DmpGains,
    bank: PhaseKernelBank,
    /// Row per kernel.
    weights: Vec<Vec<f64>>,
}

impl TryFrom<QuaternionPrimitiveDoc> for QuaternionPrimitive {
    type Error = Error;

    fn try_from(d: QuaternionPrimitiveDoc) -> Result<Self> {
        let w = matrix_from_rows(&d.weights, 3)?;
        QuaternionPrimitive::new(w, d.goal, d.canonical, d.gains, d.bank, d.duration)
    }
}

impl From<QuaternionPrimitive> for QuaternionPrimitiveDoc {
    fn from(p: QuaternionPrimitive) -> Self {
        QuaternionPrimitiveDoc {
            weights: matrix_rows(&p.weights),
            goal: p.goal,
            duration: p.duration,
            canonical: p.canonical,
            gains: p.gains,
            bank: p.bank,
        }
    }
}

impl QuaternionPrimitive {
    pub fn new(
        weights: DMatrix<f64>,
        goal: UnitQuaternion,
        canonical: CanonicalParams,
        gains: DmpGains,
        bank: PhaseKernelBank,
        duration: f64,
    ) -> Result<Self> {
        canonical.validate()?;
        gains.validate()?;
        check_dim("quaternion weight rows", bank.len(), weights.nrows())?;
        check_dim("quaternion weight columns", 3, weights.ncols())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("primitive weights must be finite"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid("primitive duration must be positive"));
        }
        Ok(QuaternionPrimitive {
            weights,
            goal: goal.canonical(),
            canonical,
            gains,
            bank,
            duration,
        })
    }

    /// A primitive with zero forcing: a pure point attractor.
    pub fn attractor(
        goal: UnitQuaternion,
        canonical: CanonicalParams,
        bank: PhaseKernelBank,
        duration: f64,
    ) -> Result<Self> {
        let n = bank.len();
        Self::new(
            DMatrix::zeros(n, 3),
            goal,
            canonical,
            DmpGains::default(),
            bank,
            duration,
        )
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn goal(&self) -> UnitQuaternion {
        self.goal
    }

    pub fn canonical(&self) -> &CanonicalParams {
        &self.canonical
    }

    pub fn gains(&self) -> &DmpGains {
        &self.gains
    }

    pub fn bank(&self) -> &PhaseKernelBank {
        &self.bank
    }

    pub fn tau(&self) -> f64 {
        self.canonical.tau
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Number of integration steps covering `horizon_factor · duration`.
    pub fn steps(&self, dt: f64, horizon_factor: f64) -> usize {
        step_count(self.duration * horizon_factor, dt)
    }

    pub fn with_goal(mut self, goal: UnitQuaternion) -> Self {
        self.goal = goal.canonical();
        self
    }

    /// Start state at rest (or moving with `omega`) whose evolving goal
    /// coincides with the start orientation.
    pub fn initial_state(&self, start: UnitQuaternion, omega: RotVec3) -> PrimitiveState {
        PrimitiveState {
            q: start,
            omega,
            goal_q: start,
            phase: PhaseState::initial(),
        }
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveState {
    pub q: UnitQuaternion,
    pub omega: RotVec3,
    /// Evolving goal `Q_g`.
    pub goal_q: UnitQuaternion,
    pub phase: PhaseState,
}

/// `f = Σψ_i w_i / Σψ_j · u` for each rotation axis.
pub fn forcing_term(phase: PhaseState, prim: &QuaternionPrimitive) -> RotVec3 {
    let g = forcing_basis(&prim.bank, phase);
    let mut f = Vector3::zeros();
    for (i, gi) in g.iter().enumerate() {
        for a in 0..3 {
            f[a] += gi * prim.weights[(i, a)];
        }
    }
    f
}

/// `ω̇` of the transformation system at the given state.
pub(crate) fn angular_acceleration(
    s: &PrimitiveState,
    forcing: &RotVec3,
    coupling: &RotVec3,
    prim: &QuaternionPrimitive,
) -> RotVec3 {
    let tau = prim.tau();
    let g = &prim.gains;
    let err = so3::rotation_error(&s.goal_q, &s.q);
    (g.alpha * (g.beta * err - tau * s.omega) + forcing + coupling) / (tau * tau)
}

/// Goal evolution: `Q_g` moves toward `Q_G` at rate `α_g/τ`.
pub fn goal_step(
    goal_q: &UnitQuaternion,
    goal: &UnitQuaternion,
    prim: &QuaternionPrimitive,
    dt: f64,
) -> UnitQuaternion {
    advance_goal(goal_q, goal, prim.gains.alpha_goal, prim.tau(), dt)
}

fn advance_goal(
    goal_q: &UnitQuaternion,
    goal: &UnitQuaternion,
    alpha_goal: f64,
    tau: f64,
    dt: f64,
) -> UnitQuaternion {
    let omega_g = so3::rotation_error(goal, goal_q) * (alpha_goal / tau);
    so3::integrate(goal_q, &omega_g, dt)
}

/// One step of the coupled system: `ω` is updated first and the new `ω`
/// integrates `Q`; goal and phase follow.
pub fn transformation_step(
    s: &PrimitiveState,
    forcing: &RotVec3,
    coupling: &RotVec3,
    prim: &QuaternionPrimitive,
    dt: f64,
) -> PrimitiveState {
    let omega_dot = angular_acceleration(s, forcing, coupling, prim);
    advance(s, &omega_dot, prim, dt)
}

fn advance(
    s: &PrimitiveState,
    omega_dot: &RotVec3,
    prim: &QuaternionPrimitive,
    dt: f64,
) -> PrimitiveState {
    let omega = s.omega + omega_dot * dt;
    PrimitiveState {
        q: so3::integrate(&s.q, &omega, dt),
        omega,
        goal_q: goal_step(&s.goal_q, &prim.goal, prim, dt),
        phase: canonical_step(s.phase, &prim.canonical, dt),
    }
}

/// Phase and evolving goal at each of `n` samples, starting from `(1, 0)` and
/// `Q_g = start`.
pub fn replay_phase_and_goal(
    start: &UnitQuaternion,
    goal: &UnitQuaternion,
    canonical: &CanonicalParams,
    gains: &DmpGains,
    dt: f64,
    n: usize,
) -> Vec<(PhaseState, UnitQuaternion)> {
    let mut out = Vec::with_capacity(n);
    let mut phase = PhaseState::initial();
    let mut goal_q = *start;
    for _ in 0..n {
        out.push((phase, goal_q));
        phase = canonical_step(phase, canonical, dt);
        goal_q = advance_goal(&goal_q, goal, gains.alpha_goal, canonical.tau, dt);
    }
    out
}

/// Regression target of the forcing term for every demo sample:
/// `τ²ω̇ − α(β·2log(Q_g ∘ Q*) − τω)`.
pub fn extract_forcing_target(
    demo: &OrientationTrajectory,
    goal: &UnitQuaternion,
    canonical: &CanonicalParams,
    gains: &DmpGains,
) -> Result<Vec<RotVec3>> {
    if demo.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: demo.len(),
        });
    }
    canonical.validate()?;
    let start = demo.samples()[0].q;
    let replay = replay_phase_and_goal(&start, goal, canonical, gains, demo.dt(), demo.len());
    Ok(demo
        .samples()
        .iter()
        .zip(&replay)
        .map(|(s, (_, goal_q))| acceleration_residual(s, goal_q, canonical.tau, gains))
        .collect())
}

pub(crate) fn acceleration_residual(
    s: &OrientationSample,
    goal_q: &UnitQuaternion,
    tau: f64,
    gains: &DmpGains,
) -> RotVec3 {
    let err = so3::rotation_error(goal_q, &s.q);
    s.omega_dot * (tau * tau) - gains.alpha * (gains.beta * err - tau * s.omega)
}

/// Fits one primitive to the pooled samples of all demos.
///
/// `τ = tau_scale · mean duration`; the goal is the log-mean of the terminal
/// orientations around the first demo's terminal value.
pub fn fit_quaternion_primitive(
    demos: &[OrientationTrajectory],
    config: &FitConfig,
) -> Result<QuaternionPrimitive> {
    let first = demos
        .first()
        .ok_or_else(|| Error::invalid("at least one demonstration is required"))?;
    let dt = first.dt();
    for d in demos {
        if d.len() < 3 {
            return Err(Error::TooShort {
                needed: 3,
                got: d.len(),
            });
        }
        if (d.dt() - dt).abs() > 1e-9 * dt {
            return Err(Error::invalid(
                "demonstrations must share one sample interval",
            ));
        }
    }
    let duration = demos.iter().map(|d| d.duration()).sum::<f64>() / demos.len() as f64;
    let (canonical, bank) = config.timing(duration)?;
    let goal = log_mean(demos.iter().map(|d| d.samples()[d.len() - 1].q))?;

    let rows: usize = demos.iter().map(|d| d.len()).sum();
    let mut phi = DMatrix::zeros(rows, bank.len());
    let mut targets = DMatrix::zeros(rows, 3);
    let mut r = 0;
    for d in demos {
        let f = extract_forcing_target(d, &goal, &canonical, &config.gains)?;
        let replay = replay_phase_and_goal(
            &d.samples()[0].q,
            &goal,
            &canonical,
            &config.gains,
            dt,
            d.len(),
        );
        for (ft, (phase, _)) in f.iter().zip(&replay) {
            for (j, g) in forcing_basis(&bank, *phase).iter().enumerate() {
                phi[(r, j)] = *g;
            }
            for a in 0..3 {
                targets[(r, a)] = ft[a];
            }
            r += 1;
        }
    }
    let weights = ridge_solve(&phi, &targets, config.ridge)?;
    QuaternionPrimitive::new(weights, goal, canonical, config.gains, bank, duration)
}

/// Log-mean of a set of orientations around the first one.
pub(crate) fn log_mean(qs: impl Iterator<Item = UnitQuaternion>) -> Result<UnitQuaternion> {
    let qs: Vec<_> = qs.collect();
    let reference = qs
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty set of orientations"))?
        .canonical();
    let mean = qs
        .iter()
        .map(|q| so3::log_map(&so3::compose(q, &reference.conjugate()).canonical()))
        .sum::<Vector3<f64>>()
        / qs.len() as f64;
    Ok(so3::compose(&so3::exp_map(&mean), &reference).canonical())
}

/// Output of [`unroll`]: recorded kinematics plus the phase, evolving goal,
/// forcing and coupling seen at each sample.
#[derive(Clone, Debug)]
pub struct OrientationRollout {
    pub trajectory: OrientationTrajectory,
    pub phases: Vec<PhaseState>,
    pub goals: Vec<UnitQuaternion>,
    pub forcing: Vec<RotVec3>,
    pub coupling: Vec<RotVec3>,
    /// State at the last recorded sample.
    pub final_state: PrimitiveState,
}

/// Integrates the primitive for `steps` steps from `start`, recording
/// `steps + 1` samples. The coupling source is queried once per sample with
/// the current state and time since start.
pub fn unroll<F>(
    prim: &QuaternionPrimitive,
    start: PrimitiveState,
    dt: f64,
    steps: usize,
    mut coupling: F,
) -> Result<OrientationRollout>
where
    F: FnMut(&PrimitiveState, f64) -> Result<RotVec3>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("unroll step must be positive"));
    }
    let n = steps + 1;
    let mut samples = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    let mut forcing = Vec::with_capacity(n);
    let mut couplings = Vec::with_capacity(n);
    let mut s = start;
    for k in 0..n {
        let f = forcing_term(s.phase, prim);
        let c = coupling(&s, k as f64 * dt)?;
        let omega_dot = angular_acceleration(&s, &f, &c, prim);
        samples.push(OrientationSample {
            q: s.q,
            omega: s.omega,
            omega_dot,
        });
        phases.push(s.phase);
        goals.push(s.goal_q);
        forcing.push(f);
        couplings.push(c);
        if k + 1 < n {
            s = advance(&s, &omega_dot, prim, dt);
        }
    }
    Ok(OrientationRollout {
        trajectory: OrientationTrajectory::new(0.0, dt, samples)?,
        phases,
        goals,
        forcing,
        coupling: couplings,
        final_state: s,
    })
}

/// Coupling source that contributes nothing.
pub(crate) fn no_coupling(_: &PrimitiveState, _: f64) -> Result<RotVec3> {
    Ok(Vector3::zeros())
}
