//! Demonstration generator for the descend / reorient / slide task.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contact::{build_contact_model, ContactModel, ContactState};
use crate::error::{Error, Result};
use crate::primitives::{LinearTrajectory, OrientationSample, OrientationTrajectory, Segmentation};
use crate::sensors::SensorTraceSet;
use crate::so3::UnitQuaternion;

/// Rotation-vector component carrying the roll correction (spatial y, the
/// slide direction).
pub const ROLL_AXIS: usize = 1;
pub const MAX_BOARD_ROLL_DEG: f64 = 20.0;
/// Largest relative deviation of a demonstrated correction from the board
/// roll.
pub const CORRECTION_JITTER: f64 = 0.04;

/// Stage durations in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub descend: f64,
    pub reorient: f64,
    pub slide: f64,
}

impl Default for StageTiming {
    fn default() -> Self {
        StageTiming {
            descend: 1.0,
            reorient: 1.2,
            slide: 1.5,
        }
    }
}

impl StageTiming {
    pub fn durations(&self) -> [f64; 3] {
        [self.descend, self.reorient, self.slide]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    pub name: String,
    pub settings_deg: Vec<f64>,
    pub demos_per_setting: usize,
    pub sensor_dim: usize,
    pub dt: f64,
    pub timing: StageTiming,
    pub noise_std: f64,
}

impl SimProfile {
    /// Five roll settings, fifteen demonstrations each, 38 electrodes.
    pub fn standard() -> Self {
        SimProfile {
            name: "default".into(),
            settings_deg: vec![0.0, 2.5, 5.0, 7.5, 10.0],
            demos_per_setting: 15,
            sensor_dim: 38,
            dt: 0.01,
            timing: StageTiming::default(),
            noise_std: super::contact::DEFAULT_NOISE_STD,
        }
    }

    /// Three settings, four demonstrations, eight electrodes.
    pub fn tiny() -> Self {
        SimProfile {
            name: "tiny".into(),
            settings_deg: vec![0.0, 5.0, 10.0],
            demos_per_setting: 4,
            sensor_dim: 8,
            ..Self::standard()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::standard()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::invalid(format!(
                "unknown profile `{other}` (expected tiny or default)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("profile step must be positive"));
        }
        if self.demos_per_setting == 0 || self.sensor_dim == 0 {
            return Err(Error::invalid("profile needs demonstrations and channels"));
        }
        if !self.settings_deg.contains(&0.0) {
            return Err(Error::invalid(
                "profile settings must include the nominal 0° setting",
            ));
        }
        for s in &self.settings_deg {
            BoardSetting::new(*s)?;
        }
        for d in self.timing.durations() {
            let steps = (d / self.dt).round();
            if steps < 4.0 || (steps * self.dt - d).abs() > 1e-9 {
                return Err(Error::invalid(
                    "stage durations must be whole multiples (≥ 4) of the step",
                ));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise level must be non-negative"));
        }
        Ok(())
    }

    pub fn stage_steps(&self) -> [usize; 3] {
        self.timing
            .durations()
            .map(|d| (d / self.dt).round() as usize)
    }

    /// Ground-truth stage boundaries (sample indices).
    pub fn boundaries(&self) -> Segmentation {
        let [a, b, c] = self.stage_steps();
        Segmentation {
            approach_end: a,
            slide_start: a + b,
            last: a + b + c,
        }
    }

    pub fn samples(&self) -> usize {
        self.boundaries().last + 1
    }

    /// Contact level and in-contact progress at time `t`.
    pub fn contact_at(&self, t: f64) -> (f64, f64) {
        let [t1, t2, t3] = self.timing.durations();
        let contact = if t <= t1 {
            0.0
        } else if t < t1 + t2 {
            min_jerk((t - t1) / t2)[0]
        } else {
            1.0
        };
        (contact, ((t - t1) / (t2 + t3)).clamp(0.0, 1.0))
    }
}

/// Board roll for one environment setting; pitch is always zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardSetting {
    roll_deg: f64,
}

impl BoardSetting {
    pub fn new(roll_deg: f64) -> Result<Self> {
        if !(roll_deg.abs() <= MAX_BOARD_ROLL_DEG) {
            return Err(Error::invalid(format!(
                "board roll {roll_deg}° outside ±{MAX_BOARD_ROLL_DEG}°"
            )));
        }
        Ok(BoardSetting { roll_deg })
    }

    pub fn nominal() -> Self {
        BoardSetting { roll_deg: 0.0 }
    }

    pub fn roll_deg(&self) -> f64 {
        self.roll_deg
    }

    pub fn roll_rad(&self) -> f64 {
        self.roll_deg.to_radians()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoRecord {
    pub demo_id: usize,
    pub setting: BoardSetting,
    pub pose: LinearTrajectory,
    pub orientation: OrientationTrajectory,
    pub tactile: SensorTraceSet,
}

/// Tool roll: angle of the tool normal `Q·e_z` in the x-z plane.
pub fn tool_roll(q: &UnitQuaternion) -> f64 {
    let n = q.rotate(&Vector3::z());
    n.x.atan2(n.z)
}

/// Time derivative of [`tool_roll`] under spatial angular velocity `omega`.
pub fn tool_roll_rate(q: &UnitQuaternion, omega: &Vector3<f64>) -> f64 {
    let n = q.rotate(&Vector3::z());
    let dn = omega.cross(&n);
    (n.z * dn.x - n.x * dn.z) / (n.x * n.x + n.z * n.z)
}

/// `[s, s', s'']` of the quintic `10τ³ − 15τ⁴ + 6τ⁵`, clamped outside
/// `[0, 1]`.
fn min_jerk(tau: f64) -> [f64; 3] {
    if tau <= 0.0 {
        return [0.0; 3];
    }
    if tau >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let t2 = tau * tau;
    [
        t2 * tau * (10.0 - 15.0 * tau + 6.0 * t2),
        30.0 * t2 * (1.0 - tau) * (1.0 - tau),
        60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau),
    ]
}

/// Per-demonstration variability.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Variation {
    start: Vector3<f64>,
    slide_length: f64,
    /// Initial tilt about x, radians.
    tilt: f64,
    /// Demonstrated correction as a fraction of the board roll.
    correction_gain: f64,
}

impl Variation {
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Variation {
            start: Vector3::new(
                0.45 + rng.random_range(-0.005..0.005),
                rng.random_range(-0.01..0.01),
                0.12 + rng.random_range(-0.01..0.01),
            ),
            slide_length: 0.2 * (1.0 + rng.random_range(-0.05..0.05)),
            tilt: -(20.0 + rng.random_range(-2.0..2.0f64)).to_radians(),
            correction_gain: 1.0 + rng.random_range(-CORRECTION_JITTER..CORRECTION_JITTER),
        }
    }
}

/// Scalar profile `value + amplitude·s((t − start)/duration)` and its rates.
fn staged(t: f64, start: f64, duration: f64, value: f64, amplitude: f64) -> [f64; 3] {
    let [s, ds, dds] = min_jerk((t - start) / duration);
    [
        value + amplitude * s,
        amplitude * ds / duration,
        amplitude * dds / (duration * duration),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulator {
    profile: SimProfile,
    contact: ContactModel,
    seed: u64,
}

impl Simulator {
    pub fn new(profile: SimProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        let contact =
            build_contact_model(profile.sensor_dim, seed)?.with_noise(profile.noise_std)?;
        Ok(Simulator {
            profile,
            contact,
            seed,
        })
    }

    /// Reassembles a simulator from stored parts, e.g. a corpus manifest.
    pub fn from_parts(profile: SimProfile, contact: ContactModel, seed: u64) -> Result<Self> {
        profile.validate()?;
        if contact.dim() != profile.sensor_dim {
            return Err(Error::DimensionMismatch {
                context: "contact model channels",
                expected: profile.sensor_dim,
                found: contact.dim(),
            });
        }
        Ok(Simulator {
            profile,
            contact,
            seed,
        })
    }

    pub fn profile(&self) -> &SimProfile {
        &self.profile
    }

    pub fn contact(&self) -> &ContactModel {
        &self.contact
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent random stream per (setting, demo); the 0° stream of demo
    /// `k` is the nominal demo `k`.
    fn stream(setting: &BoardSetting, demo: usize) -> u64 {
        let key = (setting.roll_deg() * 100.0).round() as i64 as u64 & 0xffff_ffff;
        (key << 32) | demo as u64
    }

    pub(crate) fn noise_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(2));
        rng.set_stream(stream);
        rng
    }

    /// Nominal demonstrations: the 0° setting.
    pub fn nominal_demos(&self, count: usize) -> Result<Vec<DemoRecord>> {
        self.corrected_demos(BoardSetting::nominal(), count)
    }

    /// Demonstrations at `setting`: the nominal motion plus a roll
    /// correction ramped in over the reorientation and held while sliding.
    pub fn corrected_demos(&self, setting: BoardSetting, count: usize) -> Result<Vec<DemoRecord>> {
        if count == 0 {
            return Err(Error::invalid("demo count must be at least 1"));
        }
        (0..count)
            .into_par_iter()
            .map(|k| self.demo(setting, k))
            .collect()
    }

    /// Every configured setting and demonstration.
    pub fn corpus(&self) -> Result<Vec<DemoRecord>> {
        let mut out = Vec::new();
        for &deg in &self.profile.settings_deg {
            out.extend(
                self.corrected_demos(BoardSetting::new(deg)?, self.profile.demos_per_setting)?,
            );
        }
        Ok(out)
    }

    pub fn demo(&self, setting: BoardSetting, demo_id: usize) -> Result<DemoRecord> {
        let stream = Self::stream(&setting, demo_id);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        rng.set_stream(stream);
        let var = Variation::sample(&mut rng);
        let mut noise = self.noise_rng(stream);

        let p = &self.profile;
        let [d1, d2, d3] = p.timing.durations();
        let (t1, t2) = (d1, d1 + d2);
        let board = setting.roll_rad();
        let correction = board * var.correction_gain;
        let n = p.samples();
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        let mut acc = Vec::with_capacity(n);
        let mut samples = Vec::with_capacity(n);
        let mut tactile = DMatrix::zeros(n, p.sensor_dim);
        for i in 0..n {
            let t = i as f64 * p.dt;
            let z = staged(t, 0.0, d1, var.start.z, -var.start.z);
            let y = staged(t, t2, d3, var.start.y, var.slide_length);
            pos.push(DVector::from_vec(vec![var.start.x, y[0], z[0]]));
            vel.push(DVector::from_vec(vec![0.0, y[1], z[1]]));
            acc.push(DVector::from_vec(vec![0.0, y[2], z[2]]));

            let tilt = staged(t, t1, d2, var.tilt, -var.tilt);
            let roll = staged(t, t1, d2, 0.0, correction);
            let q = UnitQuaternion::from_axis_angle(&Vector3::y(), roll[0])?
                .compose(&UnitQuaternion::from_axis_angle(&Vector3::x(), tilt[0])?);
            let ex = Vector3::new(roll[0].cos(), 0.0, -roll[0].sin());
            let omega = Vector3::y() * roll[1] + ex * tilt[1];
            let omega_dot = Vector3::y() * roll[2]
                + ex * tilt[2]
                + Vector3::y().cross(&ex) * (roll[1] * tilt[1]);
            samples.push(OrientationSample {
                q,
                omega,
                omega_dot,
            });

            let (contact, progress) = p.contact_at(t);
            let state = ContactState {
                contact,
                progress,
                misalignment: board - roll[0],
                misalignment_rate: -roll[1],
                board_roll: board,
            };
            tactile.set_row(i, &self.contact.reading(&state, &mut noise).transpose());
        }
        Ok(DemoRecord {
            demo_id,
            setting,
            pose: LinearTrajectory::new(0.0, p.dt, pos, vel, acc)?,
            orientation: OrientationTrajectory::new(0.0, p.dt, samples)?,
            tactile: SensorTraceSet::new(0.0, p.dt, tactile, setting.roll_deg())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{segment_zvc, ZvcConfig};
    use crate::so3::rotation_error;

    fn sim() -> Simulator {
        Simulator::new(SimProfile::tiny(), 11).unwrap()
    }

    #[test]
    fn min_jerk_rates_match_differences() {
        let h = 1e-6;
        for tau in [0.1, 0.37, 0.5, 0.92] {
            let [s, ds, dds] = min_jerk(tau);
            let [sp, dsp, _] = min_jerk(tau + h);
            let [sm, dsm, _] = min_jerk(tau - h);
            assert!(((sp - sm) / (2.0 * h) - ds).abs() < 1e-6);
            assert!(((dsp - dsm) / (2.0 * h) - dds).abs() < 1e-5);
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn zvc_recovers_stage_boundaries() {
        let s = sim();
        let truth = s.profile().boundaries();
        for setting in [0.0, 10.0] {
            for d in s
                .corrected_demos(BoardSetting::new(setting).unwrap(), 4)
                .unwrap()
            {
                let seg = segment_zvc(&d.pose, &ZvcConfig::default()).unwrap();
                assert!(
                    seg.approach_end.abs_diff(truth.approach_end) <= 2,
                    "{seg:?}"
                );
                assert!(seg.slide_start.abs_diff(truth.slide_start) <= 2, "{seg:?}");
                assert_eq!(seg.last, truth.last);
            }
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = sim().nominal_demos(3).unwrap();
        let b = sim().nominal_demos(3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].pose, a[1].pose);
    }

    #[test]
    fn nominal_ends_flat() {
        for d in sim().nominal_demos(4).unwrap() {
            let q = d.orientation.last().unwrap().q;
            assert!(rotation_error(&UnitQuaternion::identity(), &q).norm() < 1e-3);
        }
    }

    #[test]
    fn zero_setting_reduces_to_nominal() {
        let s = sim();
        assert_eq!(
            s.corrected_demos(BoardSetting::new(0.0).unwrap(), 2)
                .unwrap(),
            s.nominal_demos(2).unwrap()
        );
    }

    #[test]
    fn terminal_roll_within_jitter() {
        for d in sim()
            .corrected_demos(BoardSetting::new(10.0).unwrap(), 4)
            .unwrap()
        {
            let roll = tool_roll(&d.orientation.last().unwrap().q).to_degrees();
            assert!(
                (roll - 10.0).abs() <= 10.0 * CORRECTION_JITTER + 1e-9,
                "{roll}"
            );
        }
    }

    #[test]
    fn analytic_rates_match_quaternion_differences() {
        let d = sim().demo(BoardSetting::new(7.5).unwrap(), 1).unwrap();
        let qs: Vec<UnitQuaternion> = d.orientation.samples().iter().map(|s| s.q).collect();
        let dt = d.orientation.dt();
        for i in (105..215).step_by(10) {
            let fd = rotation_error(&qs[i + 1], &qs[i - 1]) / (2.0 * dt);
            assert!(
                (fd - d.orientation.samples()[i].omega).norm() < 1e-3,
                "sample {i}"
            );
            let w = &d.orientation.samples();
            let fdd = (w[i + 1].omega - w[i - 1].omega) / (2.0 * dt);
            assert!((fdd - w[i].omega_dot).norm() < 1e-2, "sample {i}");
        }
    }

    #[test]
    fn tool_roll_and_rate() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::y(), 0.1)
            .unwrap()
            .compose(&UnitQuaternion::from_axis_angle(&Vector3::x(), -0.3).unwrap());
        assert!((tool_roll(&q) - 0.1).abs() < 1e-12);
        let omega = Vector3::new(0.2, -0.5, 0.1);
        let h = 1e-6;
        let ahead = crate::so3::integrate(&q, &omega, h);
        let behind = crate::so3::integrate(&q, &omega, -h);
        let fd = (tool_roll(&ahead) - tool_roll(&behind)) / (2.0 * h);
        assert!((fd - tool_roll_rate(&q, &omega)).abs() < 1e-6);
    }

    #[test]
    fn profile_arithmetic_and_validation() {
        let t = SimProfile::tiny();
        assert_eq!(t.settings_deg.len() * t.demos_per_setting, 12);
        let d = SimProfile::standard();
        assert_eq!(d.settings_deg.len() * d.demos_per_setting, 75);
        assert!(SimProfile::by_name("huge").is_err());
        let bad = SimProfile {
            settings_deg: vec![5.0],
            ..SimProfile::tiny()
        };
        assert!(bad.validate().is_err());
        assert!(BoardSetting::new(25.0).is_err());
    }
}
