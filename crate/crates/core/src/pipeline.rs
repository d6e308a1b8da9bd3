//! The learning pipeline: nominal primitives and expected traces from
//! demonstrations, then coupling-term datasets from corrected ones.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::canonical::phase_rollout;
use crate::error::{check_dim, Error, Result};
use crate::feedback::{extract_coupling_target, CouplingRow, CouplingTargetDataset};
use crate::primitives::{
    fit_position_primitive, fit_quaternion_primitive, log_mean, no_coupling, no_position_coupling,
    position_unroll, segment_zvc, unroll, FitConfig, LinearTrajectory, OrientationTrajectory,
    PositionPrimitive, QuaternionPrimitive, Segmentation, ZvcConfig,
};
use crate::sensors::{fit_expected_traces, ExpectedTraceModel, SensorTraceSet, TraceFitConfig};
use crate::simulator::{closed_loop_unroll, BoardSetting, DemoRecord, Simulator, ROLL_AXIS};
use crate::so3::{rotation_error, UnitQuaternion};

/// Stages (0-based) that receive learned feedback: the reorientation and
/// the slide.
pub const FEEDBACK_STAGES: [usize; 2] = [1, 2];
pub const STAGE_COUNT: usize = 3;
/// Noise streams for trace-acquisition unrolls live above this offset so
/// they never collide with demonstration streams.
const TRACE_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NominalConfig {
    /// A partial table only overrides the keys it names; the rest keep the
    /// pipeline defaults below, not those of [`FitConfig::default`].
    #[serde(deserialize_with = "fit_over_defaults")]
    pub fit: FitConfig,
    pub zvc: ZvcConfig,
    pub traces: TraceFitConfig,
    /// Goal evolution for the position primitives.
    pub position_goal_evolution: bool,
    /// Open-loop unrolls used to record expected traces; zero means one
    /// per nominal demonstration.
    pub trace_trials: usize,
}

impl Default for NominalConfig {
    fn default() -> Self {
        NominalConfig {
            fit: FitConfig {
                tau_scale: 3.0,
                ..FitConfig::default()
            },
            zvc: ZvcConfig::default(),
            traces: TraceFitConfig::default(),
            position_goal_evolution: true,
            trace_trials: 0,
        }
    }
}

fn fit_over_defaults<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<FitConfig, D::Error> {
    use serde::de::Error as _;
    let patch = serde_json::Value::deserialize(d)?;
    let mut base = serde_json::to_value(NominalConfig::default().fit).map_err(D::Error::custom)?;
    overlay(&mut base, patch);
    serde_json::from_value(base).map_err(D::Error::custom)
}

fn overlay(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageModels {
    pub position: PositionPrimitive,
    pub orientation: QuaternionPrimitive,
    pub expected: Option<ExpectedTraceModel>,
}

/// Everything learned from the nominal setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalSkill {
    pub dt: f64,
    pub start_position: Vec<f64>,
    pub start_orientation: UnitQuaternion,
    pub stages: Vec<StageModels>,
}

impl NominalSkill {
    pub fn stage(&self, index: usize) -> Result<&StageModels> {
        self.stages
            .get(index)
            .ok_or_else(|| Error::invalid(format!("skill has no stage {index}")))
    }
}

/// Reproduction quality of one stage's primitives. A modality whose
/// demonstrations do not vary has no NMSE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub samples: usize,
    pub position_nmse: Option<f64>,
    pub orientation_nmse: Option<f64>,
}

impl StageReport {
    /// Worst NMSE over the modalities that have one.
    pub fn reproduction_nmse(&self) -> f64 {
        [self.position_nmse, self.orientation_nmse]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

/// Segments every demo; the error names the first demo that fails.
pub fn segment_demos(demos: &[DemoRecord], zvc: &ZvcConfig) -> Result<Vec<Segmentation>> {
    demos
        .iter()
        .map(|d| {
            segment_zvc(&d.pose, zvc).map_err(|e| {
                Error::Segmentation(format!(
                    "demo {} at {}°: {e}",
                    d.demo_id,
                    d.setting.roll_deg()
                ))
            })
        })
        .collect()
}

fn stage_slices(
    demos: &[DemoRecord],
    segments: &[Segmentation],
    stage: usize,
) -> Result<(
    Vec<LinearTrajectory>,
    Vec<OrientationTrajectory>,
    Vec<SensorTraceSet>,
)> {
    let mut pose = Vec::new();
    let mut orient = Vec::new();
    let mut tactile = Vec::new();
    for (d, seg) in demos.iter().zip(segments) {
        let (a, b) = seg.ranges()[stage];
        pose.push(d.pose.slice(a, b)?);
        orient.push(d.orientation.slice(a, b)?);
        tactile.push(d.tactile.slice(a, b)?);
    }
    Ok((pose, orient, tactile))
}

/// Fits position and orientation primitives per stage. Expected traces are
/// left empty; see [`learn_expected_traces`].
pub fn learn_motion(
    demos: &[DemoRecord],
    config: &NominalConfig,
) -> Result<(NominalSkill, Vec<StageReport>)> {
    let first = demos
        .first()
        .ok_or_else(|| Error::MissingData("no nominal demonstrations".into()))?;
    let dt = first.pose.dt();
    let segments = segment_demos(demos, &config.zvc)?;
    let mut stages = Vec::with_capacity(STAGE_COUNT);
    let mut reports = Vec::with_capacity(STAGE_COUNT);
    for s in 0..STAGE_COUNT {
        let (pose, orient, _) = stage_slices(demos, &segments, s)?;
        let position = fit_position_primitive(&pose, &config.fit, config.position_goal_evolution)?;
        let orientation = fit_quaternion_primitive(&orient, &config.fit)?;
        reports.push(reproduction_report(
            s,
            &position,
            &orientation,
            &pose,
            &orient,
        )?);
        stages.push(StageModels {
            position,
            orientation,
            expected: None,
        });
    }
    let n = demos.len() as f64;
    let start_position = demos
        .iter()
        .fold(DVector::zeros(first.pose.dim()), |acc, d| {
            acc + &d.pose.positions()[0]
        })
        / n;
    let start_orientation = log_mean(demos.iter().map(|d| d.orientation.samples()[0].q))?;
    Ok((
        NominalSkill {
            dt,
            start_position: start_position.as_slice().to_vec(),
            start_orientation,
            stages,
        },
        reports,
    ))
}

/// Replays every demonstration segment from its own start towards its own
/// end point and compares.
fn reproduction_report(
    stage: usize,
    position: &PositionPrimitive,
    orientation: &QuaternionPrimitive,
    pose: &[LinearTrajectory],
    orient: &[OrientationTrajectory],
) -> Result<StageReport> {
    let mut pos_pred: Vec<Vec<f64>> = Vec::new();
    let mut pos_true: Vec<Vec<f64>> = Vec::new();
    let mut rot_pred: Vec<Vec<f64>> = Vec::new();
    let mut rot_true: Vec<Vec<f64>> = Vec::new();
    let reference = orientation.goal();
    let mut samples = 0;
    for (p, o) in pose.iter().zip(orient) {
        let steps = p.len() - 1;
        samples += p.len();
        let prim = position.clone().with_goal(p.positions()[steps].clone())?;
        let start = prim.initial_state(p.positions()[0].clone(), p.velocities()[0].clone());
        let roll = position_unroll(&prim, start, p.dt(), steps, no_position_coupling(p.dim()))?;
        pos_pred.extend(
            roll.trajectory
                .positions()
                .iter()
                .map(|v| v.as_slice().to_vec()),
        );
        pos_true.extend(p.positions().iter().map(|v| v.as_slice().to_vec()));

        let first = o.samples()[0];
        let prim = orientation.clone().with_goal(o.samples()[steps].q);
        let roll = unroll(
            &prim,
            prim.initial_state(first.q, first.omega),
            o.dt(),
            steps,
            no_coupling,
        )?;
        let as_vec = |q: &UnitQuaternion| rotation_error(q, &reference).as_slice().to_vec();
        rot_pred.extend(roll.trajectory.samples().iter().map(|s| as_vec(&s.q)));
        rot_true.extend(o.samples().iter().map(|s| as_vec(&s.q)));
    }
    Ok(StageReport {
        stage,
        samples: samples / pose.len().max(1),
        position_nmse: varying_nmse(&pos_pred, &pos_true),
        orientation_nmse: varying_nmse(&rot_pred, &rot_true),
    })
}

/// Pooled NMSE, or `None` when the targets are (numerically) constant.
fn varying_nmse(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Option<f64> {
    let dim = target.first()?.len();
    let n = target.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| target.iter().map(|t| t[j]).sum::<f64>() / n)
        .collect();
    let var = target
        .iter()
        .map(|t| {
            t.iter()
                .zip(&mean)
                .map(|(v, m)| (v - m).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    if var < 1e-12 {
        return None;
    }
    crate::primitives::pooled_nmse(pred, target).ok()
}

/// Records open-loop unrolls of the skill at the nominal setting and fits
/// one expected-trace model per stage on the recorded tactile traces.
pub fn learn_expected_traces(
    sim: &Simulator,
    skill: &mut NominalSkill,
    trials: usize,
    config: &TraceFitConfig,
) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("expected traces need at least one trial"));
    }
    let open = [None, None, None];
    let episodes = (0..trials)
        .map(|k| {
            closed_loop_unroll(
                sim,
                skill,
                &open,
                BoardSetting::nominal(),
                TRACE_STREAM_BASE + k as u64,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for s in 0..STAGE_COUNT {
        let (a, b) = episodes[0].stage_ranges[s];
        let runs = episodes
            .iter()
            .map(|e| e.record.tactile.slice(a, b))
            .collect::<Result<Vec<_>>>()?;
        let prim = &skill.stages[s].orientation;
        let model = fit_expected_traces(
            &runs,
            prim.canonical(),
            prim.bank(),
            skill.dt,
            b - a + 1,
            config,
        )?;
        skill.stages[s].expected = Some(model);
    }
    Ok(())
}

/// Nominal primitives plus expected traces.
pub fn learn_nominal(
    sim: &Simulator,
    demos: &[DemoRecord],
    config: &NominalConfig,
) -> Result<(NominalSkill, Vec<StageReport>)> {
    if let Some(d) = demos.iter().find(|d| d.setting.roll_deg() != 0.0) {
        return Err(Error::invalid(format!(
            "nominal learning expects 0° demonstrations, got demo {} at {}°",
            d.demo_id,
            d.setting.roll_deg()
        )));
    }
    let (mut skill, reports) = learn_motion(demos, config)?;
    let trials = if config.trace_trials == 0 {
        demos.len()
    } else {
        config.trace_trials
    };
    learn_expected_traces(sim, &mut skill, trials, &config.traces)?;
    Ok((skill, reports))
}

/// One dataset per feedback stage: `(Δs, p, u) → C_roll` for every sample
/// of every demonstration, all settings included.
pub fn extract_coupling_datasets(
    skill: &NominalSkill,
    demos: &[DemoRecord],
    zvc: &ZvcConfig,
) -> Result<Vec<CouplingTargetDataset>> {
    let first = demos
        .first()
        .ok_or_else(|| Error::MissingData("no corrected demonstrations".into()))?;
    let sensor_dim = first.tactile.dim();
    let segments = segment_demos(demos, zvc)?;
    let mut out = Vec::new();
    for &s in &FEEDBACK_STAGES {
        let stage = skill.stage(s)?;
        let expected = stage
            .expected
            .as_ref()
            .ok_or_else(|| Error::MissingData(format!("stage {} has no expected traces", s + 1)))?;
        check_dim("expected trace channels", sensor_dim, expected.dim())?;
        let mut ds = CouplingTargetDataset::new(sensor_dim, 1)?;
        for (d, seg) in demos.iter().zip(&segments) {
            let (a, b) = seg.ranges()[s];
            let orient = d.orientation.slice(a, b)?;
            let tactile = d.tactile.slice(a, b)?;
            let n = orient.len();
            let targets = extract_coupling_target(&orient, &stage.orientation)?;
            let exp = expected.expected_for(n)?;
            let phases = phase_rollout(stage.orientation.canonical(), orient.dt(), n - 1);
            for i in 0..n {
                let deviation = (tactile.values().row(i) - exp.row(i))
                    .iter()
                    .copied()
                    .collect();
                ds.push(CouplingRow {
                    demo_id: d.demo_id,
                    setting_deg: d.setting.roll_deg(),
                    phase: phases[i],
                    deviation,
                    target: vec![targets[i][ROLL_AXIS]],
                })?;
            }
        }
        out.push(ds);
    }
    Ok(out)
}
