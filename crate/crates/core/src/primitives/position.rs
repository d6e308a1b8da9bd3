//! DMP in linear space, used for the translational degrees of freedom and
//! for expected sensor traces.
//!
//! Same critically damped structure as the quaternion primitive with plain
//! subtraction in place of `2·log`:
//!
//! ```text
//! τ²ẍ = α(β(g − x) − τẋ) + f + C
//! τġ = α_g(G − g)           (when goal evolution is enabled)
//! ```

use nalgebra::{DMatrix, DVector};

use super::quaternion::step_count;
use super::trajectory::LinearTrajectory;
use super::{forcing_basis, matrix_from_rows, matrix_rows, ridge_solve, DmpGains, FitConfig};
use crate::canonical::{canonical_step, CanonicalParams, PhaseKernelBank, PhaseState};
use crate::error::{check_dim, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PositionPrimitiveDoc", into = "PositionPrimitiveDoc")]
pub struct PositionPrimitive {
    /// `N × D`.
    weights: DMatrix<f64>,
    goal: DVector<f64>,
    canonical: CanonicalParams,
    gains: DmpGains,
    bank: PhaseKernelBank,
    duration: f64,
    goal_evolution: bool,
}

#[derive(Serialize, Deserialize)]
struct PositionPrimitiveDoc {
    goal: Vec<f64>,
    duration: f64,
    goal_evolution: bool,
    canonical: CanonicalParams,
    gains: DmpGains,
    bank: PhaseKernelBank,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<PositionPrimitiveDoc> for PositionPrimitive {
    type Error = Error;

    fn try_from(d: PositionPrimitiveDoc) -> Result<Self> {
        let w = matrix_from_rows(&d.weights, d.goal.len())?;
        let goal = DVector::from_vec(d.goal);
        PositionPrimitive::new(
            w,
            goal,
            d.canonical,
            d.gains,
            d.bank,
            d.duration,
            d.goal_evolution,
        )
    }
}

impl From<PositionPrimitive> for PositionPrimitiveDoc {
    fn from(p: PositionPrimitive) -> Self {
        PositionPrimitiveDoc {
            weights: matrix_rows(&p.weights),
            goal: p.goal.as_slice().to_vec(),
            duration: p.duration,
            goal_evolution: p.goal_evolution,
            canonical: p.canonical,
            gains: p.gains,
            bank: p.bank,
        }
    }
}

impl PositionPrimitive {
    pub fn new(
        weights: DMatrix<f64>,
        goal: DVector<f64>,
        canonical: CanonicalParams,
        gains: DmpGains,
        bank: PhaseKernelBank,
        duration: f64,
        goal_evolution: bool,
    ) -> Result<Self> {
        canonical.validate()?;
        gains.validate()?;
        check_dim("position weight rows", bank.len(), weights.nrows())?;
        check_dim("position weight columns", goal.len(), weights.ncols())?;
        if weights.iter().chain(goal.iter()).any(|w| !w.is_finite()) {
            return Err(Error::invalid("primitive weights and goal must be finite"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid("primitive duration must be positive"));
        }
        Ok(PositionPrimitive {
            weights,
            goal,
            canonical,
            gains,
            bank,
            duration,
            goal_evolution,
        })
    }

    pub fn attractor(
        goal: DVector<f64>,
        canonical: CanonicalParams,
        bank: PhaseKernelBank,
        duration: f64,
        goal_evolution: bool,
    ) -> Result<Self> {
        let w = DMatrix::zeros(bank.len(), goal.len());
        Self::new(
            w,
            goal,
            canonical,
            DmpGains::default(),
            bank,
            duration,
            goal_evolution,
        )
    }

    /// Same primitive steered to another goal.
    pub fn with_goal(mut self, goal: DVector<f64>) -> Result<Self> {
        check_dim("position goal", self.goal.len(), goal.len())?;
        self.goal = goal;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.goal.len()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn goal(&self) -> &DVector<f64> {
        &self.goal
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

    pub fn goal_evolution(&self) -> bool {
        self.goal_evolution
    }

    pub fn steps(&self, dt: f64, horizon_factor: f64) -> usize {
        step_count(self.duration * horizon_factor, dt)
    }

    /// Start state with the evolving goal at `start` (or at `G` when goal
    /// evolution is off).
    pub fn initial_state(&self, start: DVector<f64>, velocity: DVector<f64>) -> PositionState {
        let goal_x = if self.goal_evolution {
            start.clone()
        } else {
            self.goal.clone()
        };
        PositionState {
            x: start,
            v: velocity,
            goal_x,
            phase: PhaseState::initial(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub goal_x: DVector<f64>,
    pub phase: PhaseState,
}

pub fn position_forcing_term(phase: PhaseState, prim: &PositionPrimitive) -> DVector<f64> {
    let g = DVector::from_vec(forcing_basis(&prim.bank, phase));
    prim.weights.tr_mul(&g)
}

fn acceleration(
    s: &PositionState,
    forcing: &DVector<f64>,
    coupling: &DVector<f64>,
    prim: &PositionPrimitive,
) -> DVector<f64> {
    let tau = prim.tau();
    let g = &prim.gains;
    ((&s.goal_x - &s.x) * (g.alpha * g.beta) - &s.v * (g.alpha * tau) + forcing + coupling)
        / (tau * tau)
}

fn advance_goal(
    goal_x: &DVector<f64>,
    goal: &DVector<f64>,
    alpha_goal: f64,
    tau: f64,
    dt: f64,
) -> DVector<f64> {
    goal_x + (goal - goal_x) * (alpha_goal * dt / tau)
}

fn advance(
    s: &PositionState,
    acc: &DVector<f64>,
    prim: &PositionPrimitive,
    dt: f64,
) -> PositionState {
    let v = &s.v + acc * dt;
    let x = &s.x + &v * dt;
    let goal_x = if prim.goal_evolution {
        advance_goal(&s.goal_x, &prim.goal, prim.gains.alpha_goal, prim.tau(), dt)
    } else {
        s.goal_x.clone()
    };
    PositionState {
        x,
        v,
        goal_x,
        phase: canonical_step(s.phase, &prim.canonical, dt),
    }
}

pub fn position_transformation_step(
    s: &PositionState,
    forcing: &DVector<f64>,
    coupling: &DVector<f64>,
    prim: &PositionPrimitive,
    dt: f64,
) -> Result<PositionState> {
    check_dim("position state", prim.dim(), s.x.len())?;
    check_dim("position forcing", prim.dim(), forcing.len())?;
    check_dim("position coupling", prim.dim(), coupling.len())?;
    let acc = acceleration(s, forcing, coupling, prim);
    Ok(advance(s, &acc, prim, dt))
}

fn replay_goal(
    start: &DVector<f64>,
    goal: &DVector<f64>,
    canonical: &CanonicalParams,
    gains: &DmpGains,
    goal_evolution: bool,
    dt: f64,
    n: usize,
) -> Vec<(PhaseState, DVector<f64>)> {
    let mut out = Vec::with_capacity(n);
    let mut phase = PhaseState::initial();
    let mut goal_x = if goal_evolution {
        start.clone()
    } else {
        goal.clone()
    };
    for _ in 0..n {
        out.push((phase, goal_x.clone()));
        phase = canonical_step(phase, canonical, dt);
        if goal_evolution {
            goal_x = advance_goal(&goal_x, goal, gains.alpha_goal, canonical.tau, dt);
        }
    }
    out
}

/// `τ²ẍ − α(β(g − x) − τẋ)` per sample.
pub fn extract_position_forcing_target(
    demo: &LinearTrajectory,
    goal: &DVector<f64>,
    canonical: &CanonicalParams,
    gains: &DmpGains,
    goal_evolution: bool,
) -> Result<Vec<DVector<f64>>> {
    if demo.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: demo.len(),
        });
    }
    check_dim("position goal", demo.dim(), goal.len())?;
    let tau = canonical.tau;
    let replay = replay_goal(
        &demo.positions()[0],
        goal,
        canonical,
        gains,
        goal_evolution,
        demo.dt(),
        demo.len(),
    );
    Ok((0..demo.len())
        .map(|k| {
            let (x, v, a) = (
                &demo.positions()[k],
                &demo.velocities()[k],
                &demo.accelerations()[k],
            );
            a * (tau * tau)
                - ((&replay[k].1 - x) * (gains.alpha * gains.beta) - v * (gains.alpha * tau))
        })
        .collect())
}

/// Pooled ridge fit; the goal is the mean terminal position.
pub fn fit_position_primitive(
    demos: &[LinearTrajectory],
    config: &FitConfig,
    goal_evolution: bool,
) -> Result<PositionPrimitive> {
    let duration = check_demos(demos)?;
    let (canonical, bank) = config.timing(duration)?;
    fit_with_timing(
        demos,
        canonical,
        bank,
        &config.gains,
        config.ridge,
        goal_evolution,
    )
}

/// Mean duration of a non-empty set of equally sampled demos.
fn check_demos(demos: &[LinearTrajectory]) -> Result<f64> {
    let first = demos
        .first()
        .ok_or_else(|| Error::invalid("at least one demonstration is required"))?;
    let dt = first.dt();
    let dim = first.dim();
    for d in demos {
        if d.len() < 3 {
            return Err(Error::TooShort {
                needed: 3,
                got: d.len(),
            });
        }
        check_dim("demonstration dimension", dim, d.dim())?;
        if (d.dt() - dt).abs() > 1e-9 * dt {
            return Err(Error::invalid(
                "demonstrations must share one sample interval",
            ));
        }
    }
    Ok(demos.iter().map(|d| d.duration()).sum::<f64>() / demos.len() as f64)
}

/// Fit against an existing canonical system and kernel bank, so that
/// several primitives can share one phase.
pub(crate) fn fit_with_timing(
    demos: &[LinearTrajectory],
    canonical: CanonicalParams,
    bank: PhaseKernelBank,
    gains: &DmpGains,
    ridge: f64,
    goal_evolution: bool,
) -> Result<PositionPrimitive> {
    let duration = check_demos(demos)?;
    let dt = demos[0].dt();
    let dim = demos[0].dim();
    let goal = demos
        .iter()
        .map(|d| d.positions()[d.len() - 1].clone())
        .fold(DVector::zeros(dim), |acc, g| acc + g)
        / demos.len() as f64;

    let rows: usize = demos.iter().map(|d| d.len()).sum();
    let mut phi = DMatrix::zeros(rows, bank.len());
    let mut targets = DMatrix::zeros(rows, dim);
    let mut r = 0;
    for d in demos {
        let f = extract_position_forcing_target(d, &goal, &canonical, gains, goal_evolution)?;
        let phases = crate::canonical::phase_rollout(&canonical, dt, d.len() - 1);
        for (ft, phase) in f.iter().zip(&phases) {
            for (j, g) in forcing_basis(&bank, *phase).iter().enumerate() {
                phi[(r, j)] = *g;
            }
            targets.row_mut(r).copy_from(&ft.transpose());
            r += 1;
        }
    }
    let weights = ridge_solve(&phi, &targets, ridge)?;
    PositionPrimitive::new(
        weights,
        goal,
        canonical,
        *gains,
        bank,
        duration,
        goal_evolution,
    )
}

#[derive(Clone, Debug)]
pub struct PositionRollout {
    pub trajectory: LinearTrajectory,
    pub phases: Vec<PhaseState>,
    pub forcing: Vec<DVector<f64>>,
    pub final_state: PositionState,
}

/// Records `steps + 1` samples; see the quaternion `unroll` for the step
/// ordering.
pub fn position_unroll<F>(
    prim: &PositionPrimitive,
    start: PositionState,
    dt: f64,
    steps: usize,
    mut coupling: F,
) -> Result<PositionRollout>
where
    F: FnMut(&PositionState, f64) -> Result<DVector<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("unroll step must be positive"));
    }
    check_dim("position start", prim.dim(), start.x.len())?;
    check_dim("position start velocity", prim.dim(), start.v.len())?;
    let n = steps + 1;
    let mut pos = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    let mut accs = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    let mut forcing = Vec::with_capacity(n);
    let mut s = start;
    for k in 0..n {
        let f = position_forcing_term(s.phase, prim);
        let c = coupling(&s, k as f64 * dt)?;
        check_dim("position coupling", prim.dim(), c.len())?;
        let a = acceleration(&s, &f, &c, prim);
        pos.push(s.x.clone());
        vel.push(s.v.clone());
        phases.push(s.phase);
        forcing.push(f);
        if k + 1 < n {
            s = advance(&s, &a, prim, dt);
        }
        accs.push(a);
    }
    Ok(PositionRollout {
        trajectory: LinearTrajectory::new(0.0, dt, pos, vel, accs)?,
        phases,
        forcing,
        final_state: s,
    })
}

pub(crate) fn no_position_coupling(
    dim: usize,
) -> impl FnMut(&PositionState, f64) -> Result<DVector<f64>> {
    move |_, _| Ok(DVector::zeros(dim))
}
