//! Unit quaternions and the maps between SO(3) and so(3).
//!
//! Quaternions are stored as a real part `r` and an imaginary 3-vector `q`
//! and are always serialized as `[r, q1, q2, q3]`.
//!
//! Composition is the Hamilton product. Integration of an angular velocity
//! `ω` over a step `dt` left-multiplies by `exp(ω·dt/2)`, so `ω` is expressed
//! in the fixed (spatial) frame. Note the half-angle convention: `exp_map(v)`
//! is a rotation by `2‖v‖`, hence attractor errors are written `2·log(·)`.
//!
//! Sign handling: the checked constructors return the `r ≥ 0` representative.
//! `compose`, `exp_map` and `integrate` return whatever sign the arithmetic
//! produces so that trajectories stay continuous, and [`rotation_error`]
//! canonicalizes before taking the logarithm so that attractor terms always
//! follow the shortest rotation.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tangent vector: half rotation vector for `log_map`/`exp_map`, angular
/// velocity (rad/s) or angular acceleration elsewhere.
pub type RotVec3 = Vector3<f64>;

/// Above this real part the log map returns `q` directly (first-order series).
const LOG_SERIES_THRESHOLD: f64 = 1.0 - 1e-8;
/// Below this angle `sin θ / θ` is evaluated by its Taylor series.
const EXP_SERIES_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct UnitQuaternion {
    r: f64,
    q: Vector3<f64>,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion {
            r: 1.0,
            q: Vector3::zeros(),
        }
    }

    /// Normalizes `[r, x, y, z]` and returns the `r ≥ 0` representative.
    pub fn new(r: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (r * r + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid(format!(
                "cannot normalize quaternion [{r}, {x}, {y}, {z}]"
            )));
        }
        Ok(UnitQuaternion {
            r: r / n,
            q: Vector3::new(x, y, z) / n,
        }
        .canonical())
    }

    /// Takes already-unit components verbatim (e.g. values read back from
    /// disk), so that stored quaternions round-trip bit for bit.
    pub fn from_unit_components(r: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n2 = r * r + x * x + y * y + z * z;
        if !((n2 - 1.0).abs() < 1e-9) {
            return Err(Error::invalid(format!(
                "[{r}, {x}, {y}, {z}] is not a unit quaternion"
            )));
        }
        Ok(UnitQuaternion {
            r,
            q: Vector3::new(x, y, z),
        })
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("rotation axis must be nonzero and finite"));
        }
        Ok(exp_map(&(axis * (0.5 * angle / n))).canonical())
    }

    /// Renormalizes without touching the sign.
    pub(crate) fn normalized(r: f64, q: Vector3<f64>) -> Self {
        let n = (r * r + q.norm_squared()).sqrt();
        UnitQuaternion { r: r / n, q: q / n }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn q(&self) -> &Vector3<f64> {
        &self.q
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.r, self.q.x, self.q.y, self.q.z]
    }

    pub fn norm(&self) -> f64 {
        (self.r * self.r + self.q.norm_squared()).sqrt()
    }

    /// The representative of the same rotation with `r ≥ 0`.
    pub fn canonical(self) -> Self {
        if self.r < 0.0 {
            UnitQuaternion {
                r: -self.r,
                q: -self.q,
            }
        } else {
            self
        }
    }

    pub fn compose(&self, other: &UnitQuaternion) -> UnitQuaternion {
        compose(self, other)
    }

    pub fn conjugate(&self) -> UnitQuaternion {
        conjugate(self)
    }

    /// Rotates a vector: `Q ∘ [0, v] ∘ Q*`.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let t = 2.0 * self.q.cross(v);
        v + self.r * t + self.q.cross(&t)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(value: UnitQuaternion) -> Self {
        value.to_array()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;

    fn try_from(value: [f64; 4]) -> Result<Self> {
        UnitQuaternion::from_array(value)
    }
}

/// Quaternion product `a ∘ b` in its 4×4 matrix form.
pub fn compose(a: &UnitQuaternion, b: &UnitQuaternion) -> UnitQuaternion {
    let (ra, qa) = (a.r, &a.q);
    let m = [
        [ra, -qa.x, -qa.y, -qa.z],
        [qa.x, ra, -qa.z, qa.y],
        [qa.y, qa.z, ra, -qa.x],
        [qa.z, -qa.y, qa.x, ra],
    ];
    let v = [b.r, b.q.x, b.q.y, b.q.z];
    let row = |i: usize| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2] + m[i][3] * v[3];
    UnitQuaternion::normalized(row(0), Vector3::new(row(1), row(2), row(3)))
}

pub fn conjugate(a: &UnitQuaternion) -> UnitQuaternion {
    UnitQuaternion { r: a.r, q: -a.q }
}

/// `log(Q) = arccos(r) / sin(arccos(r)) · q`.
///
/// The angle is evaluated as `atan2(‖q‖, r)`, which equals `arccos(r)` on
/// the unit sphere but keeps full precision near `r = ±1`.
pub fn log_map(a: &UnitQuaternion) -> RotVec3 {
    let r = a.r.clamp(-1.0, 1.0);
    if r > LOG_SERIES_THRESHOLD {
        return a.q;
    }
    let s = a.q.norm();
    if s == 0.0 {
        // r = -1: a full turn, every axis is equally valid.
        return Vector3::new(PI, 0.0, 0.0);
    }
    a.q * (s.atan2(r) / s)
}

/// `exp(ω) = [cos‖ω‖, sin‖ω‖/‖ω‖ · ω]`.
pub fn exp_map(v: &RotVec3) -> UnitQuaternion {
    let theta = v.norm();
    let (r, k) = if theta < EXP_SERIES_THRESHOLD {
        let t2 = theta * theta;
        (1.0 - 0.5 * t2, 1.0 - t2 / 6.0)
    } else {
        (theta.cos(), theta.sin() / theta)
    };
    UnitQuaternion::normalized(r, v * k)
}

/// One step of `Q ← exp(ω·dt/2) ∘ Q`.
pub fn integrate(q: &UnitQuaternion, omega: &RotVec3, dt: f64) -> UnitQuaternion {
    compose(&exp_map(&(omega * (0.5 * dt))), q)
}

/// `2·log(target ∘ current*)` on the shortest branch: the rotation vector
/// (radians) that carries `current` onto `target`.
pub fn rotation_error(target: &UnitQuaternion, current: &UnitQuaternion) -> RotVec3 {
    2.0 * log_map(&compose(target, &conjugate(current)).canonical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Rodrigues' formula, independent of the quaternion code.
    fn rodrigues(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        let k = axis.normalize();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
    }

    fn to_matrix(q: &UnitQuaternion) -> Matrix3<f64> {
        let (w, x, y, z) = (q.r(), q.q().x, q.q().y, q.q().z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    fn random_unit(rng: &mut impl Rng) -> UnitQuaternion {
        loop {
            let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if let Ok(q) = UnitQuaternion::from_array(v) {
                return q;
            }
        }
    }

    fn max_abs_diff(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
        a.to_array()
            .iter()
            .zip(b.to_array())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_unit(&mut rng);
        assert!(max_abs_diff(&compose(&UnitQuaternion::identity(), &q), &q) < 1e-15);
        let e = compose(&q, &conjugate(&q));
        assert!(max_abs_diff(&e, &UnitQuaternion::identity()) < 1e-15);
    }

    #[test]
    fn compose_matches_rotation_matrices() {
        let qx = UnitQuaternion::from_axis_angle(&Vector3::x(), PI / 2.0).unwrap();
        let qy = UnitQuaternion::from_axis_angle(&Vector3::y(), PI / 2.0).unwrap();
        let rx = rodrigues(Vector3::x(), PI / 2.0);
        let ry = rodrigues(Vector3::y(), PI / 2.0);
        // "x then y" in the fixed frame is Ry·Rx.
        let expected = ry * rx;
        let got = to_matrix(&compose(&qy, &qx));
        assert!((expected - got).abs().max() < 1e-12);
    }

    #[test]
    fn conjugate_cases() {
        let id = UnitQuaternion::identity();
        assert_eq!(conjugate(&id), id);
        let px = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(conjugate(&px).to_array(), [0.0, -1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_unit(&mut rng);
        assert_eq!(conjugate(&conjugate(&q)), q);
    }

    #[test]
    fn log_exp_closed_forms() {
        assert_eq!(log_map(&UnitQuaternion::identity()), Vector3::zeros());
        let px = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert!((log_map(&px) - Vector3::new(PI / 2.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(exp_map(&Vector3::zeros()), UnitQuaternion::identity());
        let e = exp_map(&Vector3::new(PI / 2.0, 0.0, 0.0));
        assert!(max_abs_diff(&e, &px) < 1e-15);
    }

    #[test]
    fn log_near_identity_uses_series() {
        let q = UnitQuaternion::new(1.0, 1e-9, -2e-9, 3e-9).unwrap();
        let v = log_map(&q);
        assert!((v - q.q()).norm() < 1e-20);
        let back = exp_map(&v);
        assert!(max_abs_diff(&back, &q) < 1e-15);
    }

    #[test]
    fn round_trips_over_seeded_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let q = random_unit(&mut rng);
            worst = worst.max(max_abs_diff(&exp_map(&log_map(&q)), &q));
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize()
                * rng.random_range(1e-6..PI - 1e-6);
            worst = worst.max((log_map(&exp_map(&v)) - v).abs().max());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst}");
    }

    #[test]
    fn constant_rate_integration_reaches_half_turn() {
        let omega = Vector3::new(PI, 0.0, 0.0);
        let mut q = UnitQuaternion::identity();
        for _ in 0..1000 {
            q = integrate(&q, &omega, 0.001);
        }
        let target = exp_map(&Vector3::new(PI / 2.0, 0.0, 0.0));
        assert!(max_abs_diff(&q, &target) < 1e-6);
    }

    #[test]
    fn zero_rate_integration_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_unit(&mut rng);
        assert!(max_abs_diff(&integrate(&q, &Vector3::zeros(), 0.01), &q) < 1e-15);
    }

    #[test]
    fn rotation_error_takes_short_branch() {
        let a = UnitQuaternion::from_axis_angle(&Vector3::z(), 0.3).unwrap();
        let b = UnitQuaternion::from_axis_angle(&Vector3::z(), -0.2).unwrap();
        let err = rotation_error(&a, &b);
        assert!((err - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
        // Same rotation written with the opposite sign.
        let a_neg = UnitQuaternion::normalized(-a.r(), -a.q());
        assert!((rotation_error(&a_neg, &b) - err).norm() < 1e-12);
    }

    #[test]
    fn rotate_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_unit(&mut rng);
        let v = Vector3::new(0.3, -1.2, 0.7);
        assert!((q.rotate(&v) - to_matrix(&q) * v).norm() < 1e-12);
    }

    #[test]
    fn serde_order_is_real_first() {
        let q = UnitQuaternion::new(0.5, 0.5, 0.5, 0.5).unwrap();
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, "[0.5,0.5,0.5,0.5]");
        let back: UnitQuaternion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
        assert!(serde_json::from_str::<UnitQuaternion>("[0,0,0,0]").is_err());
    }

    fn unit_strategy() -> impl Strategy<Value = UnitQuaternion> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter_map("degenerate", |a| UnitQuaternion::from_array(a).ok())
    }

    proptest! {
        #[test]
        fn compose_stays_unit(a in unit_strategy(), b in unit_strategy()) {
            prop_assert!((compose(&a, &b).norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in unit_strategy(), b in unit_strategy(), c in unit_strategy()) {
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            prop_assert!(max_abs_diff(&l, &r) < 1e-9);
        }

        #[test]
        fn integrate_stays_unit(a in unit_strategy(), w in prop::array::uniform3(-10.0f64..10.0), dt in 1e-4f64..0.05) {
            let out = integrate(&a, &Vector3::from(w), dt);
            prop_assert!((out.norm() - 1.0).abs() < 1e-9);
        }
    }
}
