//! Coupling-term targets from corrected demonstrations.

use crate::error::{Error, Result};
use crate::primitives::{
    acceleration_residual, forcing_term, replay_phase_and_goal, OrientationTrajectory,
    QuaternionPrimitive,
};
use crate::so3::RotVec3;

/// `C_target = τ²ω̇ − α(β·2log(Q_g ∘ Q*) − τω) − f` per sample, with the
/// phase and evolving goal replayed from the demo start on the demo's grid.
pub fn extract_coupling_target(
    corrected: &OrientationTrajectory,
    prim: &QuaternionPrimitive,
) -> Result<Vec<RotVec3>> {
    if corrected.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: corrected.len(),
        });
    }
    let start = corrected.samples()[0].q;
    let replay = replay_phase_and_goal(
        &start,
        &prim.goal(),
        prim.canonical(),
        prim.gains(),
        corrected.dt(),
        corrected.len(),
    );
    Ok(corrected
        .samples()
        .iter()
        .zip(&replay)
        .map(|(s, (phase, goal_q))| {
            acceleration_residual(s, goal_q, prim.tau(), prim.gains()) - forcing_term(*phase, prim)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{CanonicalParams, PhaseKernelBank};
    use crate::primitives::{unroll, DmpGains};
    use crate::so3::UnitQuaternion;
    use nalgebra::{DMatrix, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn primitive() -> QuaternionPrimitive {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let c = CanonicalParams::new(2.4).unwrap();
        let b = PhaseKernelBank::equal_time_over(25, &c, 0.8).unwrap();
        let w = DMatrix::from_fn(25, 3, |_, _| rng.random_range(-20.0..20.0));
        let goal = UnitQuaternion::from_axis_angle(&Vector3::x(), -0.35).unwrap();
        QuaternionPrimitive::new(w, goal, c, DmpGains::default(), b, 0.8).unwrap()
    }

    fn injected(
        scale: f64,
    ) -> impl FnMut(&crate::primitives::PrimitiveState, f64) -> Result<RotVec3> {
        move |s, _| {
            Ok(Vector3::new(
                0.0,
                scale * s.phase.u * (3.0 * s.phase.p).sin(),
                0.0,
            ))
        }
    }

    #[test]
    fn nominal_unroll_has_zero_target() {
        let prim = primitive();
        let start = UnitQuaternion::from_axis_angle(&Vector3::x(), 0.2).unwrap();
        let roll = unroll(
            &prim,
            prim.initial_state(start, Vector3::zeros()),
            0.01,
            80,
            |_, _| Ok(Vector3::zeros()),
        )
        .unwrap();
        let c = extract_coupling_target(&roll.trajectory, &prim).unwrap();
        assert!(c.iter().all(|v| v.norm() < 1e-6));
    }

    #[test]
    fn recovers_injected_coupling_linearly() {
        let prim = primitive();
        let start = UnitQuaternion::from_axis_angle(&Vector3::x(), 0.2).unwrap();
        let mut recovered = Vec::new();
        for scale in [1.0, 2.0] {
            let roll = unroll(
                &prim,
                prim.initial_state(start, Vector3::zeros()),
                0.01,
                80,
                injected(scale),
            )
            .unwrap();
            let c = extract_coupling_target(&roll.trajectory, &prim).unwrap();
            let rms = (c
                .iter()
                .zip(&roll.coupling)
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                / c.len() as f64)
                .sqrt();
            let amp = roll.coupling.iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(rms < 1e-3 * amp, "rms {rms} amp {amp}");
            recovered.push(c);
        }
        for (a, b) in recovered[0].iter().zip(&recovered[1]) {
            assert!((b - a * 2.0).norm() < 1e-6);
        }
    }
}
