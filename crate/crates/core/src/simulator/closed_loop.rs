//! Executing the learned skill against the contact model, with or without
//! learned feedback.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector3};

use super::contact::ContactState;
use super::scenario::{tool_roll, tool_roll_rate, BoardSetting, DemoRecord, Simulator, ROLL_AXIS};
use crate::error::{check_dim, Error, Result};
use crate::feedback::FeedbackModel;
use crate::pipeline::{NominalSkill, STAGE_COUNT};
use crate::primitives::{
    no_position_coupling, position_unroll, unroll, LinearTrajectory, OrientationSample,
    OrientationTrajectory,
};
use crate::sensors::SensorTraceSet;

/// One executed episode. Per-sample series share the record's time grid;
/// consecutive stages share their boundary sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub record: DemoRecord,
    pub stage_ranges: [(usize, usize); 3],
    /// Roll component of the applied coupling term.
    pub coupling: Vec<f64>,
    /// Sensor deviation from the expected trace (`None` if the skill has no
    /// expected traces).
    pub deviation: Option<DMatrix<f64>>,
    /// Board roll minus tool roll, degrees.
    pub roll_error_deg: Vec<f64>,
}

impl Episode {
    pub fn final_roll_error_deg(&self) -> f64 {
        self.roll_error_deg
            .last()
            .copied()
            .unwrap_or(f64::NAN)
            .abs()
    }

    fn time(&self, i: usize) -> f64 {
        self.record.tactile.t0() + i as f64 * self.record.tactile.dt()
    }

    pub fn stage_of(&self, sample: usize) -> usize {
        self.stage_ranges
            .iter()
            .position(|&(a, b)| sample >= a && sample <= b)
            .unwrap_or(STAGE_COUNT - 1)
    }

    /// CSV `t,stage,coupling,roll_error_deg`.
    pub fn write_coupling_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "stage", "coupling", "roll_error_deg"])?;
        for (i, (c, e)) in self.coupling.iter().zip(&self.roll_error_deg).enumerate() {
            w.write_record([
                self.time(i).to_string(),
                (self.stage_of(i) + 1).to_string(),
                c.to_string(),
                e.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `t,stage,ds_1..ds_K`.
    pub fn write_deviation_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dev = self
            .deviation
            .as_ref()
            .ok_or_else(|| Error::MissingData("episode has no sensor deviations".into()))?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "stage".to_string()];
        header.extend((1..=dev.ncols()).map(|k| format!("ds_{k}")));
        w.write_record(&header)?;
        for i in 0..dev.nrows() {
            let mut rec = vec![self.time(i).to_string(), (self.stage_of(i) + 1).to_string()];
            rec.extend(dev.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the three stages in sequence at `setting`. Stage `s` receives the
/// coupling predicted by `feedback[s]` from the current sensor deviation
/// and phase; `None` runs it open loop. Sensor noise is drawn from
/// `noise_stream`.
pub fn closed_loop_unroll(
    sim: &Simulator,
    skill: &NominalSkill,
    feedback: &[Option<&FeedbackModel>],
    setting: BoardSetting,
    noise_stream: u64,
) -> Result<Episode> {
    check_dim("skill stages", STAGE_COUNT, skill.stages.len())?;
    check_dim("feedback slots", STAGE_COUNT, feedback.len())?;
    let dt = skill.dt;
    let profile = sim.profile();
    let contact = sim.contact();
    let board = setting.roll_rad();
    let mut rng = sim.noise_rng(noise_stream);
    let has_expected = skill.stages.iter().all(|s| s.expected.is_some());

    let mut q = skill.start_orientation;
    let mut omega = Vector3::zeros();
    let mut x = DVector::from_vec(skill.start_position.clone());
    let mut v = DVector::zeros(x.len());
    let mut t_offset = 0.0;

    let mut pos = Vec::new();
    let mut vel = Vec::new();
    let mut acc = Vec::new();
    let mut orient: Vec<OrientationSample> = Vec::new();
    let mut readings: Vec<DVector<f64>> = Vec::new();
    let mut deviations: Vec<DVector<f64>> = Vec::new();
    let mut coupling = Vec::new();
    let mut roll_error = Vec::new();
    let mut ranges = [(0, 0); 3];

    for (s, stage) in skill.stages.iter().enumerate() {
        let steps = stage.orientation.steps(dt, 1.0);
        let model = feedback[s];
        if let Some(m) = model {
            if m.bank != *stage.orientation.bank() {
                return Err(Error::invalid(format!(
                    "feedback model for stage {} uses a different kernel bank",
                    s + 1
                )));
            }
            check_dim("feedback sensor channels", contact.dim(), m.sensor_dim())?;
            if !matches!(m.coupling_dim(), 1 | 3) {
                return Err(Error::invalid(
                    "feedback models must output the roll or all three axes",
                ));
            }
        }
        let expected = match (&stage.expected, model) {
            (Some(e), _) => Some(e.expected_for(steps + 1)?),
            (None, Some(_)) => {
                return Err(Error::MissingData(format!(
                    "stage {} has no expected traces",
                    s + 1
                )))
            }
            (None, None) => None,
        };

        let mut stage_readings = Vec::with_capacity(steps + 1);
        let mut stage_dev = Vec::with_capacity(steps + 1);
        let mut stage_coupling = Vec::with_capacity(steps + 1);
        let mut stage_error = Vec::with_capacity(steps + 1);
        let roll = unroll(
            &stage.orientation,
            stage.orientation.initial_state(q, omega),
            dt,
            steps,
            |st, tk| {
                let i = stage_readings.len();
                let (level, progress) = profile.contact_at(t_offset + tk);
                let misalignment = board - tool_roll(&st.q);
                let state = ContactState {
                    contact: level,
                    progress,
                    misalignment,
                    misalignment_rate: -tool_roll_rate(&st.q, &st.omega),
                    board_roll: board,
                };
                let reading = contact.reading(&state, &mut rng);
                let dev = expected.as_ref().map(|e| &reading - e.row(i).transpose());
                let c = match (model, &dev) {
                    (Some(m), Some(d)) => {
                        let out = m.predict_coupling(d.as_slice(), st.phase)?;
                        if out.len() == 1 {
                            let mut c = Vector3::zeros();
                            c[ROLL_AXIS] = out[0];
                            c
                        } else {
                            Vector3::new(out[0], out[1], out[2])
                        }
                    }
                    _ => Vector3::zeros(),
                };
                stage_readings.push(reading);
                if let Some(d) = dev {
                    stage_dev.push(d);
                }
                stage_coupling.push(c[ROLL_AXIS]);
                stage_error.push(misalignment.to_degrees());
                Ok(c)
            },
        )?;
        let prim = &stage.position;
        let lin = position_unroll(
            prim,
            prim.initial_state(x.clone(), v.clone()),
            dt,
            steps,
            no_position_coupling(x.len()),
        )?;

        let skip = usize::from(s > 0);
        let start_index = orient.len().saturating_sub(skip);
        ranges[s] = (start_index, start_index + steps);
        orient.extend_from_slice(&roll.trajectory.samples()[skip..]);
        pos.extend_from_slice(&lin.trajectory.positions()[skip..]);
        vel.extend_from_slice(&lin.trajectory.velocities()[skip..]);
        acc.extend_from_slice(&lin.trajectory.accelerations()[skip..]);
        readings.extend(stage_readings.into_iter().skip(skip));
        deviations.extend(stage_dev.into_iter().skip(skip));
        coupling.extend(stage_coupling.into_iter().skip(skip));
        roll_error.extend(stage_error.into_iter().skip(skip));

        q = roll.final_state.q;
        omega = roll.final_state.omega;
        x = lin.final_state.x.clone();
        v = lin.final_state.v.clone();
        t_offset += steps as f64 * dt;
    }

    let n = readings.len();
    let tactile = DMatrix::from_fn(n, contact.dim(), |i, k| readings[i][k]);
    let deviation =
        has_expected.then(|| DMatrix::from_fn(n, contact.dim(), |i, k| deviations[i][k]));
    Ok(Episode {
        record: DemoRecord {
            demo_id: 0,
            setting,
            pose: LinearTrajectory::new(0.0, dt, pos, vel, acc)?,
            orientation: OrientationTrajectory::new(0.0, dt, orient)?,
            tactile: SensorTraceSet::new(0.0, dt, tactile, setting.roll_deg())?,
        },
        stage_ranges: ranges,
        coupling,
        deviation,
        roll_error_deg: roll_error,
    })
}
