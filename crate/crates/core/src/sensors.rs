//! Expected sensor traces encoded as DMPs that share a primitive's phase,
//! and the deviation features fed to the feedback model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical::{phase_rollout, CanonicalParams, PhaseKernelBank, PhaseState};
use crate::error::{check_dim, Error, Result};
use crate::primitives::{
    fit_position_with_timing, interpolate_series, no_position_coupling, position_unroll, DmpGains,
    LinearTrajectory, PositionPrimitive,
};

pub const DEFAULT_SENSOR_DIM: usize = 38;

/// Tactile samples on a uniform grid, one row per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorTraceSet {
    t0: f64,
    dt: f64,
    values: DMatrix<f64>,
    /// Board roll of the recording, degrees.
    setting_deg: f64,
}

impl SensorTraceSet {
    pub fn new(t0: f64, dt: f64, values: DMatrix<f64>, setting_deg: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("sensor sample interval must be positive"));
        }
        if values.nrows() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: values.nrows(),
            });
        }
        if values.ncols() == 0 {
            return Err(Error::invalid("sensor traces need at least one channel"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sensor traces must be finite"));
        }
        Ok(SensorTraceSet {
            t0,
            dt,
            values,
            setting_deg,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn setting_deg(&self) -> f64 {
        self.setting_deg
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Linear interpolation at absolute times `t0 + k·dt`, `k < n`; samples
    /// outside the recorded span are held at the ends.
    pub fn sample_at(&self, t0: f64, dt: f64, n: usize) -> Result<Self> {
        let times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
        let mut values = DMatrix::zeros(n, self.dim());
        for j in 0..self.dim() {
            let column: Vec<f64> = self.values.column(j).iter().copied().collect();
            let resampled = interpolate_series(self.t0, self.dt, &column, &times);
            values.column_mut(j).copy_from_slice(&resampled);
        }
        Self::new(t0, dt, values, self.setting_deg)
    }

    /// Stretches the trace onto `n` samples spanning the same duration.
    pub fn resample(&self, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooShort { needed: 2, got: n });
        }
        self.sample_at(self.t0, self.duration() / (n - 1) as f64, n)
    }

    /// Inclusive row range.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.len() {
            return Err(Error::invalid(format!(
                "sensor slice [{start}, {end}] out of bounds for {} samples",
                self.len()
            )));
        }
        Self::new(
            self.t0 + start as f64 * self.dt,
            self.dt,
            self.values.rows(start, end - start + 1).into_owned(),
            self.setting_deg,
        )
    }

    fn as_trajectory(&self) -> Result<LinearTrajectory> {
        let rows = (0..self.len())
            .map(|i| self.values.row(i).transpose())
            .collect();
        LinearTrajectory::from_positions(0.0, self.dt, rows)
    }
}

/// One linear-space DMP over all sensor channels, driven by the phase of the
/// motion primitive it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpectedTraceDoc", into = "ExpectedTraceDoc")]
pub struct ExpectedTraceModel {
    primitive: PositionPrimitive,
    start: DVector<f64>,
    dt: f64,
    len: usize,
}

/// Regression settings for [`fit_expected_traces`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceFitConfig {
    pub gains: DmpGains,
    pub ridge: f64,
    /// Let the trace goal drift from the start value toward the final value
    /// instead of holding it fixed.
    pub goal_evolution: bool,
}

impl Default for TraceFitConfig {
    fn default() -> Self {
        TraceFitConfig {
            gains: DmpGains::default(),
            ridge: 1e-8,
            goal_evolution: false,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ExpectedTraceDoc {
    dt: f64,
    len: usize,
    start: Vec<f64>,
    primitive: PositionPrimitive,
}

impl TryFrom<ExpectedTraceDoc> for ExpectedTraceModel {
    type Error = Error;

    fn try_from(d: ExpectedTraceDoc) -> Result<Self> {
        ExpectedTraceModel::new(d.primitive, DVector::from_vec(d.start), d.dt, d.len)
    }
}

impl From<ExpectedTraceModel> for ExpectedTraceDoc {
    fn from(m: ExpectedTraceModel) -> Self {
        ExpectedTraceDoc {
            dt: m.dt,
            len: m.len,
            start: m.start.as_slice().to_vec(),
            primitive: m.primitive,
        }
    }
}

impl ExpectedTraceModel {
    pub fn new(
        primitive: PositionPrimitive,
        start: DVector<f64>,
        dt: f64,
        len: usize,
    ) -> Result<Self> {
        check_dim("expected trace start", primitive.dim(), start.len())?;
        if !(dt > 0.0 && dt.is_finite()) || len < 2 {
            return Err(Error::invalid(
                "expected traces need a positive step and 2+ samples",
            ));
        }
        Ok(ExpectedTraceModel {
            primitive,
            start,
            dt,
            len,
        })
    }

    pub fn primitive(&self) -> &PositionPrimitive {
        &self.primitive
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.primitive.dim()
    }

    /// Phase at each step; identical to the motion primitive's at the same
    /// step because both read the same canonical system.
    pub fn phases(&self) -> Vec<PhaseState> {
        phase_rollout(self.primitive.canonical(), self.dt, self.len - 1)
    }

    /// `len × K` expected trace.
    pub fn expected(&self) -> Result<DMatrix<f64>> {
        self.expected_for(self.len)
    }

    /// Expected trace over `n` steps, extrapolating past the fitted length if
    /// needed.
    pub fn expected_for(&self, n: usize) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::invalid("expected trace length must be positive"));
        }
        let dim = self.dim();
        let start = self
            .primitive
            .initial_state(self.start.clone(), DVector::zeros(dim));
        let roll = position_unroll(
            &self.primitive,
            start,
            self.dt,
            n - 1,
            no_position_coupling(dim),
        )?;
        let pos = roll.trajectory.positions();
        Ok(DMatrix::from_fn(n, dim, |i, j| pos[i][j]))
    }
}

/// Fits one expected-trace model to nominal trials. Each trial is resampled
/// to `len` samples at spacing `dt` (the motion primitive's grid) before the
/// pooled regression.
pub fn fit_expected_traces(
    trials: &[SensorTraceSet],
    canonical: &CanonicalParams,
    bank: &PhaseKernelBank,
    dt: f64,
    len: usize,
    config: &TraceFitConfig,
) -> Result<ExpectedTraceModel> {
    let first = trials
        .first()
        .ok_or_else(|| Error::invalid("at least one nominal trial is required"))?;
    let dim = first.dim();
    let mut demos = Vec::with_capacity(trials.len());
    for trial in trials {
        check_dim("sensor trial channels", dim, trial.dim())?;
        let on_grid = trial.resample(len)?;
        let mut rescaled = on_grid.as_trajectory()?;
        if (rescaled.dt() - dt).abs() > 1e-12 {
            // Same samples, primitive's time base.
            rescaled = LinearTrajectory::from_positions(0.0, dt, rescaled.positions().to_vec())?;
        }
        demos.push(rescaled);
    }
    let start = demos
        .iter()
        .map(|d| d.positions()[0].clone())
        .fold(DVector::zeros(dim), |acc, s| acc + s)
        / demos.len() as f64;
    let primitive = fit_position_with_timing(
        &demos,
        *canonical,
        bank.clone(),
        &config.gains,
        config.ridge,
        config.goal_evolution,
    )?;
    ExpectedTraceModel::new(primitive, start, dt, len)
}

/// `Δs = actual − expected`, row by row.
pub fn deviation(actual: &DMatrix<f64>, expected: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("deviation rows", expected.nrows(), actual.nrows())?;
    check_dim("deviation channels", expected.ncols(), actual.ncols())?;
    Ok(actual - expected)
}
