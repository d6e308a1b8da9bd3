//! Zero-velocity-crossing segmentation of a descend / reorient / slide
//! demonstration into three primitives.

use serde::{Deserialize, Serialize};

use super::trajectory::LinearTrajectory;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZvcConfig {
    /// A speed counts as zero once it drops below this fraction of the
    /// channel's peak speed.
    pub threshold_fraction: f64,
    /// Channel whose motion ends the first primitive.
    pub approach_axis: usize,
    /// Channel whose motion makes up the last primitive.
    pub slide_axis: usize,
}

impl Default for ZvcConfig {
    fn default() -> Self {
        ZvcConfig {
            threshold_fraction: 0.05,
            approach_axis: 2,
            slide_axis: 1,
        }
    }
}

/// Inclusive sample ranges; neighbouring primitives share their boundary
/// sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub approach_end: usize,
    pub slide_start: usize,
    pub last: usize,
}

impl Segmentation {
    pub fn ranges(&self) -> [(usize, usize); 3] {
        [
            (0, self.approach_end),
            (self.approach_end, self.slide_start),
            (self.slide_start, self.last),
        ]
    }
}

/// Locates the end of the approach from the z-velocity and the start of the
/// slide from the y-velocity. Each boundary is the first sample below the
/// zero threshold on the far side of the velocity peak, pushed on to the
/// adjacent local minimum of the speed.
pub fn segment_zvc(traj: &LinearTrajectory, config: &ZvcConfig) -> Result<Segmentation> {
    if traj.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: traj.len(),
        });
    }
    let dim = traj.dim();
    if config.approach_axis >= dim || config.slide_axis >= dim {
        return Err(Error::invalid(format!(
            "segmentation axes ({}, {}) exceed trajectory dimension {dim}",
            config.approach_axis, config.slide_axis
        )));
    }
    if !(config.threshold_fraction > 0.0 && config.threshold_fraction < 1.0) {
        return Err(Error::invalid("threshold fraction must lie in (0, 1)"));
    }
    let speed = |axis: usize| -> Vec<f64> {
        traj.velocity_channel(axis)
            .iter()
            .map(|v| v.abs())
            .collect()
    };
    let approach = speed(config.approach_axis);
    let slide = speed(config.slide_axis);

    let approach_end = crossing_after_peak(&approach, config.threshold_fraction)
        .ok_or_else(|| Error::Segmentation("no zero crossing after the approach motion".into()))?;
    let mut reversed = slide.clone();
    reversed.reverse();
    let slide_start = crossing_after_peak(&reversed, config.threshold_fraction)
        .map(|i| slide.len() - 1 - i)
        .ok_or_else(|| Error::Segmentation("no zero crossing before the slide motion".into()))?;
    if approach_end > slide_start {
        return Err(Error::Segmentation(format!(
            "approach ends at sample {approach_end} after the slide starts at {slide_start}"
        )));
    }
    Ok(Segmentation {
        approach_end,
        slide_start,
        last: traj.len() - 1,
    })
}

fn crossing_after_peak(speed: &[f64], fraction: f64) -> Option<usize> {
    let (peak_idx, peak) = speed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))?;
    if peak <= 0.0 || !peak.is_finite() {
        return None;
    }
    let threshold = fraction * peak;
    let mut i = (peak_idx..speed.len()).find(|&i| speed[i] <= threshold)?;
    while i + 1 < speed.len() && speed[i + 1] < speed[i] {
        i += 1;
    }
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn min_jerk(s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        let x = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
        let v = 30.0 * s.powi(2) - 60.0 * s.powi(3) + 30.0 * s.powi(4);
        (x, v)
    }

    /// Descend in z over [0, b1], rest until b2, slide in y until the end.
    fn three_phase(b1: usize, b2: usize, n: usize, dt: f64) -> LinearTrajectory {
        let (t1, t2, t3) = (b1 as f64 * dt, b2 as f64 * dt, (n - 1) as f64 * dt);
        let mut pos = Vec::new();
        let mut vel = Vec::new();
        for k in 0..n {
            let t = k as f64 * dt;
            let (zx, zv) = min_jerk(t / t1);
            let (yx, yv) = if t >= t2 {
                min_jerk((t - t2) / (t3 - t2))
            } else {
                (0.0, 0.0)
            };
            pos.push(DVector::from_vec(vec![0.0, 0.2 * yx, 0.1 - 0.1 * zx]));
            vel.push(DVector::from_vec(vec![
                0.0,
                if t >= t2 { 0.2 * yv / (t3 - t2) } else { 0.0 },
                if t <= t1 { -0.1 * zv / t1 } else { 0.0 },
            ]));
        }
        let acc = vec![DVector::zeros(3); n];
        LinearTrajectory::new(0.0, dt, pos, vel, acc).unwrap()
    }

    #[test]
    fn recovers_constructed_boundaries() {
        for (b1, b2, n) in [(100, 180, 300), (80, 200, 320), (120, 121, 250)] {
            let seg = segment_zvc(&three_phase(b1, b2, n, 0.01), &ZvcConfig::default()).unwrap();
            assert!(seg.approach_end.abs_diff(b1) <= 2, "{seg:?}");
            assert!(seg.slide_start.abs_diff(b2) <= 2, "{seg:?}");
            assert!(seg.approach_end <= seg.slide_start);
            assert_eq!(seg.last, n - 1);
        }
    }

    #[test]
    fn monotone_motion_fails() {
        let n = 100;
        let pos: Vec<_> = (0..n)
            .map(|k| DVector::from_vec(vec![0.0, k as f64, -(k as f64)]))
            .collect();
        let vel = vec![DVector::from_vec(vec![0.0, 1.0, -1.0]); n];
        let traj = LinearTrajectory::new(0.0, 0.01, pos, vel, vec![DVector::zeros(3); n]).unwrap();
        assert!(matches!(
            segment_zvc(&traj, &ZvcConfig::default()),
            Err(Error::Segmentation(_))
        ));
    }

    #[test]
    fn stationary_trajectory_fails() {
        let n = 20;
        let traj = LinearTrajectory::new(
            0.0,
            0.01,
            vec![DVector::zeros(3); n],
            vec![DVector::zeros(3); n],
            vec![DVector::zeros(3); n],
        )
        .unwrap();
        assert!(segment_zvc(&traj, &ZvcConfig::default()).is_err());
    }

    #[test]
    fn ranges_share_boundaries() {
        let seg = Segmentation {
            approach_end: 10,
            slide_start: 20,
            last: 30,
        };
        assert_eq!(seg.ranges(), [(0, 10), (10, 20), (20, 30)]);
    }
}
