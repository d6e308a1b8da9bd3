//! Uniformly sampled orientation and position trajectories.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::so3::{self, RotVec3, UnitQuaternion};

/// Width of the centered moving average applied to finite-difference
/// velocity and acceleration estimates.
pub const SMOOTHING_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationSample {
    pub q: UnitQuaternion,
    /// Angular velocity (rad/s), fixed frame.
    pub omega: RotVec3,
    /// Angular acceleration (rad/s²).
    pub omega_dot: RotVec3,
}

/// Orientation samples on a uniform time grid starting at `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationTrajectory {
    t0: f64,
    dt: f64,
    samples: Vec<OrientationSample>,
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "sample interval must be positive, got {dt}"
        )))
    }
}

impl OrientationTrajectory {
    /// Quaternions are stored sign-canonical (`r ≥ 0`).
    pub fn new(t0: f64, dt: f64, samples: Vec<OrientationSample>) -> Result<Self> {
        check_dt(dt)?;
        let samples = samples
            .into_iter()
            .map(|s| {
                if s.omega
                    .iter()
                    .chain(s.omega_dot.iter())
                    .all(|v| v.is_finite())
                {
                    Ok(OrientationSample {
                        q: s.q.canonical(),
                        ..s
                    })
                } else {
                    Err(Error::invalid(
                        "non-finite angular velocity or acceleration",
                    ))
                }
            })
            .collect::<Result<_>>()?;
        Ok(OrientationTrajectory { t0, dt, samples })
    }

    /// Estimates `ω` and `ω̇` from a quaternion sequence.
    ///
    /// `ω_t = 2·log(Q_{t+1} ∘ Q_t*) / dt`, `ω̇_t = (ω_{t+1} − ω_t) / dt`, each
    /// smoothed by a 5-sample centered moving average. The last sample repeats
    /// the previous difference.
    pub fn from_quaternions(t0: f64, dt: f64, qs: &[UnitQuaternion]) -> Result<Self> {
        check_dt(dt)?;
        if qs.len() < 3 {
            return Err(Error::TooShort {
                needed: 3,
                got: qs.len(),
            });
        }
        let raw_omega: Vec<RotVec3> = forward_difference(
            &qs.windows(2)
                .map(|w| so3::rotation_error(&w[1], &w[0]))
                .collect::<Vec<_>>(),
            1.0 / dt,
        );
        let omega = moving_average(&raw_omega, SMOOTHING_WINDOW);
        let raw_alpha: Vec<RotVec3> = forward_difference(
            &omega.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>(),
            1.0 / dt,
        );
        let omega_dot = moving_average(&raw_alpha, SMOOTHING_WINDOW);
        let samples = qs
            .iter()
            .zip(omega.iter().zip(&omega_dot))
            .map(|(q, (w, a))| OrientationSample {
                q: *q,
                omega: *w,
                omega_dot: *a,
            })
            .collect();
        Self::new(t0, dt, samples)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(len − 1)·dt`.
    pub fn duration(&self) -> f64 {
        self.samples.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn samples(&self) -> &[OrientationSample] {
        &self.samples
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn first(&self) -> Option<&OrientationSample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&OrientationSample> {
        self.samples.last()
    }

    /// Inclusive index range `[start, end]`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.samples.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {end}] out of bounds for {} samples",
                self.samples.len()
            )));
        }
        Ok(OrientationTrajectory {
            t0: self.time(start),
            dt: self.dt,
            samples: self.samples[start..=end].to_vec(),
        })
    }

    /// Resamples onto `n` points spanning the same duration; quaternions are
    /// interpolated along the geodesic, rates linearly.
    pub fn resample(&self, n: usize) -> Result<Self> {
        if n < 2 || self.samples.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: n.min(self.samples.len()),
            });
        }
        if n == self.samples.len() {
            return Ok(self.clone());
        }
        let scale = (self.samples.len() - 1) as f64 / (n - 1) as f64;
        let samples = (0..n)
            .map(|k| {
                let (i, a) = locate(k as f64 * scale, self.samples.len());
                let (s0, s1) = (&self.samples[i], &self.samples[i + 1]);
                let step = so3::log_map(&so3::compose(&s1.q, &s0.q.conjugate()).canonical());
                OrientationSample {
                    q: so3::compose(&so3::exp_map(&(step * a)), &s0.q),
                    omega: s0.omega * (1.0 - a) + s1.omega * a,
                    omega_dot: s0.omega_dot * (1.0 - a) + s1.omega_dot * a,
                }
            })
            .collect();
        Self::new(self.t0, self.duration() / (n - 1) as f64, samples)
    }
}

/// Position, velocity and acceleration of a `dim`-dimensional signal on a
/// uniform grid. Also used for scalar sensor channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTrajectory {
    t0: f64,
    dt: f64,
    pos: Vec<DVector<f64>>,
    vel: Vec<DVector<f64>>,
    acc: Vec<DVector<f64>>,
}

impl LinearTrajectory {
    pub fn new(
        t0: f64,
        dt: f64,
        pos: Vec<DVector<f64>>,
        vel: Vec<DVector<f64>>,
        acc: Vec<DVector<f64>>,
    ) -> Result<Self> {
        check_dt(dt)?;
        if pos.len() != vel.len() || pos.len() != acc.len() {
            return Err(Error::invalid(
                "position, velocity and acceleration lengths differ",
            ));
        }
        let dim = pos.first().map(|p| p.len()).unwrap_or(0);
        for v in pos.iter().chain(&vel).chain(&acc) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "trajectory sample",
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("non-finite trajectory sample"));
            }
        }
        Ok(LinearTrajectory {
            t0,
            dt,
            pos,
            vel,
            acc,
        })
    }

    /// Finite-difference velocity and acceleration, smoothed like
    /// [`OrientationTrajectory::from_quaternions`].
    pub fn from_positions(t0: f64, dt: f64, pos: Vec<DVector<f64>>) -> Result<Self> {
        check_dt(dt)?;
        if pos.len() < 3 {
            return Err(Error::TooShort {
                needed: 3,
                got: pos.len(),
            });
        }
        let vel = moving_average(
            &forward_difference(
                &pos.windows(2).map(|w| &w[1] - &w[0]).collect::<Vec<_>>(),
                1.0 / dt,
            ),
            SMOOTHING_WINDOW,
        );
        let acc = moving_average(
            &forward_difference(
                &vel.windows(2).map(|w| &w[1] - &w[0]).collect::<Vec<_>>(),
                1.0 / dt,
            ),
            SMOOTHING_WINDOW,
        );
        Self::new(t0, dt, pos, vel, acc)
    }

    /// Scalar signal helper.
    pub fn from_scalar(t0: f64, dt: f64, values: &[f64]) -> Result<Self> {
        Self::from_positions(
            t0,
            dt,
            values
                .iter()
                .map(|v| DVector::from_element(1, *v))
                .collect(),
        )
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.pos.first().map(|p| p.len()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.pos.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.pos
    }

    pub fn velocities(&self) -> &[DVector<f64>] {
        &self.vel
    }

    pub fn accelerations(&self) -> &[DVector<f64>] {
        &self.acc
    }

    /// One coordinate over time.
    pub fn channel(&self, d: usize) -> Vec<f64> {
        self.pos.iter().map(|p| p[d]).collect()
    }

    pub fn velocity_channel(&self, d: usize) -> Vec<f64> {
        self.vel.iter().map(|v| v[d]).collect()
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.pos.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {end}] out of bounds for {} samples",
                self.pos.len()
            )));
        }
        Ok(LinearTrajectory {
            t0: self.time(start),
            dt: self.dt,
            pos: self.pos[start..=end].to_vec(),
            vel: self.vel[start..=end].to_vec(),
            acc: self.acc[start..=end].to_vec(),
        })
    }

    pub fn resample(&self, n: usize) -> Result<Self> {
        if n < 2 || self.pos.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: n.min(self.pos.len()),
            });
        }
        if n == self.pos.len() {
            return Ok(self.clone());
        }
        let scale = (self.pos.len() - 1) as f64 / (n - 1) as f64;
        let lerp = |xs: &[DVector<f64>]| -> Vec<DVector<f64>> {
            (0..n)
                .map(|k| {
                    let (i, a) = locate(k as f64 * scale, xs.len());
                    &xs[i] * (1.0 - a) + &xs[i + 1] * a
                })
                .collect()
        };
        Self::new(
            self.t0,
            self.duration() / (n - 1) as f64,
            lerp(&self.pos),
            lerp(&self.vel),
            lerp(&self.acc),
        )
    }
}

/// Linear interpolation of a scalar series sampled at `t0 + k·dt` onto the
/// times `t_j`. Values outside the sampled span are clamped to the ends.
pub fn interpolate_series(t0: f64, dt: f64, values: &[f64], times: &[f64]) -> Vec<f64> {
    let n = values.len();
    times
        .iter()
        .map(|&t| {
            if n == 1 {
                return values[0];
            }
            let x = ((t - t0) / dt).clamp(0.0, (n - 1) as f64);
            let (i, a) = locate(x, n);
            values[i] * (1.0 - a) + values[i + 1] * a
        })
        .collect()
}

/// Splits a fractional index into `(i, a)` with `i + 1 < len`.
fn locate(x: f64, len: usize) -> (usize, f64) {
    let i = (x.floor() as usize).min(len - 2);
    (i, (x - i as f64).clamp(0.0, 1.0))
}

/// Scales a list of `len − 1` increments into `len` rates, repeating the
/// final one.
fn forward_difference<T>(increments: &[T], inv_dt: f64) -> Vec<T>
where
    T: Clone + std::ops::Mul<f64, Output = T>,
{
    let mut out: Vec<T> = increments.iter().map(|d| d.clone() * inv_dt).collect();
    if let Some(last) = out.last().cloned() {
        out.push(last);
    }
    out
}

fn moving_average<T>(xs: &[T], window: usize) -> Vec<T>
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let half = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(xs.len() - 1);
            let mut acc = xs[lo].clone();
            for x in &xs[lo + 1..=hi] {
                acc = acc + x.clone();
            }
            acc * (1.0 / (hi - lo + 1) as f64)
        })
        .collect()
}

#[cfg(test)]
/// Rotation vectors `2·log(Q_t ∘ Q_ref*)` used to compare orientation paths.
pub(crate) fn rotation_vectors(qs: &[UnitQuaternion], reference: &UnitQuaternion) -> Vec<RotVec3> {
    qs.iter()
        .map(|q| so3::rotation_error(q, reference))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn finite_differences_of_constant_rate() {
        let dt = 0.01;
        let w = Vector3::new(0.0, 0.5, 0.0);
        let qs: Vec<_> = (0..50)
            .map(|k| so3::exp_map(&(w * (0.5 * k as f64 * dt))))
            .collect();
        let traj = OrientationTrajectory::from_quaternions(0.0, dt, &qs).unwrap();
        for s in traj.samples() {
            assert!((s.omega - w).norm() < 1e-9);
            assert!(s.omega_dot.norm() < 1e-6);
        }
    }

    #[test]
    fn rejects_short_sequences() {
        let qs = vec![UnitQuaternion::identity(); 2];
        assert!(matches!(
            OrientationTrajectory::from_quaternions(0.0, 0.01, &qs),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn slice_keeps_time_stamps() {
        let traj = LinearTrajectory::from_scalar(1.0, 0.1, &[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = traj.slice(2, 4).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s.t0() - 1.2).abs() < 1e-12);
        assert_eq!(s.channel(0), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn resample_preserves_linear_signal() {
        let values: Vec<f64> = (0..11).map(|k| k as f64 * 0.5).collect();
        let traj = LinearTrajectory::from_scalar(0.0, 0.1, &values).unwrap();
        let r = traj.resample(21).unwrap();
        assert!((r.dt() - 0.05).abs() < 1e-12);
        for (k, v) in r.channel(0).iter().enumerate() {
            assert!((v - k as f64 * 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_resample_follows_geodesic() {
        let dt = 0.1;
        let axis = Vector3::new(1.0, 1.0, 0.0).normalize();
        let samples: Vec<_> = (0..6)
            .map(|k| OrientationSample {
                q: so3::exp_map(&(axis * 0.1 * k as f64)),
                omega: axis * 2.0,
                omega_dot: Vector3::zeros(),
            })
            .collect();
        let traj = OrientationTrajectory::new(0.0, dt, samples).unwrap();
        let r = traj.resample(11).unwrap();
        for (k, s) in r.samples().iter().enumerate() {
            let expected = so3::exp_map(&(axis * 0.05 * k as f64));
            assert!(so3::rotation_error(&s.q, &expected).norm() < 1e-12);
        }
    }

    #[test]
    fn interpolation_clamps() {
        let v = interpolate_series(0.0, 1.0, &[0.0, 10.0], &[-1.0, 0.25, 5.0]);
        assert_eq!(v, vec![0.0, 2.5, 10.0]);
    }
}
