//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything; `-- 3 7` runs only the
//! listed criteria.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use phasefb::canonical::{phase_rollout, CanonicalParams, PhaseKernelBank, PhaseState};
use phasefb::feedback::{
    extract_coupling_target, pmnn_forward, Architecture, CouplingTargetDataset, FfnnParams,
    ParamSet, PmnnParams,
};
use phasefb::pipeline::{
    extract_coupling_datasets, learn_nominal, NominalConfig, NominalSkill, FEEDBACK_STAGES,
};
use phasefb::primitives::{
    fit_quaternion_primitive, pooled_nmse, unroll, DmpGains, FitConfig, OrientationTrajectory,
    QuaternionPrimitive,
};
use phasefb::simulator::{closed_loop_unroll, BoardSetting, SimProfile, Simulator};
use phasefb::so3::{compose, exp_map, log_map, rotation_error, UnitQuaternion};
use phasefb::training::{
    loo_evaluate, split_dataset, split_without_holdout, train_model, EvalReport, TrainConfig,
    TRAIN_FRACTION, VALIDATION_FRACTION,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- fixtures

/// Nominal skill and per-primitive coupling datasets for one profile.
struct Corpus {
    sim: Simulator,
    skill: NominalSkill,
    datasets: Vec<CouplingTargetDataset>,
}

impl Corpus {
    fn build(profile: SimProfile, seed: u64) -> Result<Self, String> {
        let sim = Simulator::new(profile, seed).map_err(fail)?;
        let demos = sim.corpus().map_err(fail)?;
        let nominal: Vec<_> = demos
            .iter()
            .filter(|d| d.setting.roll_deg() == 0.0)
            .cloned()
            .collect();
        let config = NominalConfig::default();
        let (skill, _) = learn_nominal(&sim, &nominal, &config).map_err(fail)?;
        let datasets = extract_coupling_datasets(&skill, &demos, &config.zvc).map_err(fail)?;
        Ok(Corpus {
            sim,
            skill,
            datasets,
        })
    }

    fn bank(&self, i: usize) -> &PhaseKernelBank {
        self.skill.stages[FEEDBACK_STAGES[i]].orientation.bank()
    }
}

#[derive(Default)]
struct Fixtures {
    tiny: Option<Corpus>,
    standard: Option<Corpus>,
}

impl Fixtures {
    fn tiny(&mut self) -> Result<&Corpus, String> {
        if self.tiny.is_none() {
            self.tiny = Some(Corpus::build(SimProfile::tiny(), 21)?);
        }
        Ok(self.tiny.as_ref().unwrap())
    }

    fn standard(&mut self) -> Result<&Corpus, String> {
        if self.standard.is_none() {
            self.standard = Some(Corpus::build(SimProfile::standard(), 22)?);
        }
        Ok(self.standard.as_ref().unwrap())
    }
}

fn generalization(report: &EvalReport) -> f64 {
    report.generalization.map_or(f64::NAN, |m| m.mean)
}

// ---------------------------------------------------------------- criteria

fn random_unit(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if let Ok(q) = UnitQuaternion::from_array(v) {
            return q;
        }
    }
}

fn quat_diff(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// nalgebra's own quaternion code serves as the matrix oracle.
fn oracle_matrix(q: &UnitQuaternion) -> nalgebra::Matrix3<f64> {
    let [w, x, y, z] = q.to_array();
    nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
        .to_rotation_matrix()
        .into_inner()
}

fn so3_algebra(_: &mut Fixtures) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut round, mut product) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = random_unit(&mut rng);
        round = round.max(quat_diff(&exp_map(&log_map(&q)), &q));
        let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
        // The quaternion log has norm at most π/2.
        let v = axis * rng.random_range(0.0..PI / 2.0 - 1e-6);
        round = round.max((log_map(&exp_map(&v)) - v).abs().max());
        let p = random_unit(&mut rng);
        let m = oracle_matrix(&compose(&q, &p));
        product = product.max((m - oracle_matrix(&q) * oracle_matrix(&p)).abs().max());
    }
    Ok((
        round < 1e-9 && product < 1e-9,
        format!("round trip {round:.1e}, compose vs matrices {product:.1e}"),
    ))
}

fn canonical_convergence(_: &mut Fixtures) -> Check {
    let tau = 1.7;
    let params = CanonicalParams::new(tau).map_err(fail)?;
    let traj = phase_rollout(&params, 1e-3 * tau, 10_000);
    let last = traj.last().copied().unwrap_or(PhaseState::initial());
    let min_p = traj.iter().map(|s| s.p).fold(f64::INFINITY, f64::min);
    let start_ok = traj[0] == PhaseState { p: 1.0, u: 0.0 };
    Ok((
        start_ok && last.p.abs() < 1e-3 && last.u.abs() < 1e-3 && min_p >= -1e-6,
        format!(
            "final p {:.1e}, u {:.1e}; min p {min_p:.1e}",
            last.p, last.u
        ),
    ))
}

/// A smooth orientation path that no primitive generated: a minimum-jerk
/// swing about one axis with a bump about another.
fn synthetic_orientation_demo(dt: f64, n: usize) -> Result<OrientationTrajectory, String> {
    let qs: Vec<UnitQuaternion> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let mj = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
            let bump = (PI * s).sin().powi(2);
            let v = Vector3::new(0.3, -0.1, 0.2)
                + Vector3::new(0.0, 0.6, -0.2) * mj
                + Vector3::new(0.15, 0.0, 0.0) * bump;
            exp_map(&v)
        })
        .collect();
    OrientationTrajectory::from_quaternions(0.0, dt, &qs).map_err(fail)
}

fn dmp_round_trip(_: &mut Fixtures) -> Check {
    let dt = 0.004;
    let demo = synthetic_orientation_demo(dt, 401)?;
    let config = FitConfig {
        n_kernels: 25,
        ..FitConfig::default()
    };
    let prim = fit_quaternion_primitive(std::slice::from_ref(&demo), &config).map_err(fail)?;
    let first = demo.samples()[0];
    let steps = demo.len() - 1;
    let roll = unroll(
        &prim,
        prim.initial_state(first.q, first.omega),
        dt,
        steps,
        |_, _| Ok(Vector3::zeros()),
    )
    .map_err(fail)?;
    let goal = demo.samples()[steps].q;
    let rv = |t: &OrientationTrajectory| -> Vec<Vec<f64>> {
        t.samples()
            .iter()
            .map(|s| rotation_error(&s.q, &goal).as_slice().to_vec())
            .collect()
    };
    let nmse = pooled_nmse(&rv(&roll.trajectory), &rv(&demo)).map_err(fail)?;
    let terminal = rotation_error(&goal, &roll.final_state.q).norm();
    Ok((
        nmse < 0.01 && terminal < 1e-2,
        format!("NMSE {nmse:.2e}, terminal error {terminal:.2e} rad"),
    ))
}

fn coupling_self_consistency(_: &mut Fixtures) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let canonical = CanonicalParams::new(2.4).map_err(fail)?;
    let bank = PhaseKernelBank::equal_time_over(25, &canonical, 0.8).map_err(fail)?;
    let weights = DMatrix::from_fn(25, 3, |_, _| rng.random_range(-20.0..20.0));
    let goal =
        UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 0.3, 0.0), -0.35).map_err(fail)?;
    let prim = QuaternionPrimitive::new(weights, goal, canonical, DmpGains::default(), bank, 0.8)
        .map_err(fail)?;
    let start = UnitQuaternion::from_axis_angle(&Vector3::x(), 0.2).map_err(fail)?;
    let roll = unroll(
        &prim,
        prim.initial_state(start, Vector3::zeros()),
        0.005,
        160,
        |s, _| {
            let u = s.phase.u;
            Ok(Vector3::new(0.5 * u, u * (3.0 * s.phase.p).sin(), -u * s.phase.p) * 4.0)
        },
    )
    .map_err(fail)?;
    let extracted = extract_coupling_target(&roll.trajectory, &prim).map_err(fail)?;
    let sq: f64 = extracted
        .iter()
        .zip(&roll.coupling)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let rms = (sq / extracted.len() as f64).sqrt();
    let amp = roll.coupling.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok((
        rms < 1e-3 * amp,
        format!("rms error {rms:.2e}, amplitude {amp:.2}"),
    ))
}

fn pmnn_structure(_: &mut Fixtures) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let canonical = CanonicalParams::new(1.0).map_err(fail)?;
    let bank = PhaseKernelBank::equal_time(25, &canonical).map_err(fail)?;
    let mut nonzero = 0;
    let mut worst_ratio = 0.0f64;
    for trial in 0..100 {
        let hidden: Vec<usize> = (0..trial % 3).map(|_| rng.random_range(1..40)).collect();
        let net = PmnnParams::init(6, &hidden, bank.len(), &mut rng);
        let input: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = rng.random_range(0.0..1.0);
        if pmnn_forward(&net, &input, PhaseState { p, u: 0.0 }, &bank).map_err(fail)? != 0.0 {
            nonzero += 1;
        }
        let rollout = phase_rollout(&canonical, 0.01, 1000);
        let outs = rollout
            .iter()
            .map(|ph| pmnn_forward(&net, &input, *ph, &bank).map(f64::abs))
            .collect::<Result<Vec<_>, _>>()
            .map_err(fail)?;
        let peak = outs.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            worst_ratio = worst_ratio.max(outs.last().unwrap() / peak);
        }
    }
    Ok((
        nonzero == 0 && worst_ratio < 1e-3,
        format!("{nonzero}/100 nonzero at u = 0; worst final/peak {worst_ratio:.1e}"),
    ))
}

/// Worst relative error over tensors between the analytic gradient and
/// central differences with step 1e-6.
fn gradient_error<N: ParamSet + Clone>(net: &N, analytic: &N, loss: impl Fn(&N) -> f64) -> f64 {
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for (ti, g) in analytic.tensors().iter().enumerate() {
        let mut diff = 0.0;
        for (k, gk) in g.iter().enumerate() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti][k] += eps;
            let mut minus = net.clone();
            minus.tensors_mut()[ti][k] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            diff += (numeric - gk).powi(2);
        }
        let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff.sqrt() / scale);
    }
    worst
}

fn gradient_correctness(_: &mut Fixtures) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let (dim, kernels, batch) = (5, 6, 9);
    let x = DMatrix::from_fn(dim, batch, |_, _| rng.random_range(-1.5..1.5));
    let g = DMatrix::from_fn(kernels, batch, |_, _| rng.random_range(-2.0..0.0));
    let t = DVector::from_fn(batch, |_, _| rng.random_range(-1.0..1.0));
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for hidden in [vec![], vec![7]] {
        let net = PmnnParams::init(dim, &hidden, kernels, &mut rng);
        let (_, analytic) = net.loss_and_gradient::<ChaCha8Rng>(&x, &g, &t, None);
        let e = gradient_error(&net, &analytic, |n| {
            n.loss_and_gradient::<ChaCha8Rng>(&x, &g, &t, None).0
        });
        parts.push(format!("PMNN{hidden:?} {e:.1e}"));
        worst = worst.max(e);
    }
    let net = FfnnParams::init(dim, &[7, 4], &mut rng);
    let (_, analytic) = net.loss_and_gradient::<ChaCha8Rng>(&x, &t, None);
    let e = gradient_error(&net, &analytic, |n| {
        n.loss_and_gradient::<ChaCha8Rng>(&x, &t, None).0
    });
    parts.push(format!("FFNN[7, 4] {e:.1e}"));
    worst = worst.max(e);
    Ok((worst < 1e-4, parts.join(", ")))
}

fn teacher_student(fx: &mut Fixtures) -> Check {
    let corpus = fx.tiny()?;
    let config = TrainConfig::default();
    let arch = Architecture::pmnn_default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, ds) in corpus.datasets.iter().enumerate() {
        let prim = FEEDBACK_STAGES[i] + 1;
        let real = generalization(&loo_evaluate(ds, &arch, corpus.bank(i), &config).map_err(fail)?);
        let mut perm: Vec<usize> = (0..ds.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(77 + i as u64));
        let shuffled = ds.with_permuted_targets(&perm).map_err(fail)?;
        let control =
            generalization(&loo_evaluate(&shuffled, &arch, corpus.bank(i), &config).map_err(fail)?);
        ok &= real <= 0.3 && control >= 0.8;
        parts.push(format!("prim {prim}: {real:.3} vs shuffled {control:.3}"));
    }
    Ok((ok, parts.join("; ")))
}

fn model_ordering(fx: &mut Fixtures) -> Check {
    let corpus = fx.standard()?;
    let config = TrainConfig::default();
    let rivals = [
        Architecture::pmnn_linear(),
        Architecture::ffnn_default(),
        Architecture::pca_default(),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, ds) in corpus.datasets.iter().enumerate() {
        let bank = corpus.bank(i);
        let best = generalization(
            &loo_evaluate(ds, &Architecture::pmnn_default(), bank, &config).map_err(fail)?,
        );
        let mut line = format!("prim {}: PMNN-100 {best:.3}", FEEDBACK_STAGES[i] + 1);
        for arch in &rivals {
            let other = generalization(&loo_evaluate(ds, arch, bank, &config).map_err(fail)?);
            ok &= best <= other + 0.02;
            line.push_str(&format!(", {} {other:.3}", arch.label()));
        }
        parts.push(line);
    }
    Ok((ok, parts.join("; ")))
}

fn closed_loop_efficacy(fx: &mut Fixtures) -> Check {
    let corpus = fx.standard()?;
    let config = TrainConfig::default();
    let mut models = Vec::new();
    for (i, ds) in corpus.datasets.iter().enumerate() {
        let split = split_without_holdout(ds, config.seed).map_err(fail)?;
        let trained = train_model(
            ds,
            &split,
            &Architecture::pmnn_default(),
            corpus.bank(i),
            &config,
        )
        .map_err(fail)?;
        models.push(trained.model);
    }
    let mut slots = [None, None, None];
    for (stage, m) in FEEDBACK_STAGES.iter().zip(&models) {
        slots[*stage] = Some(m);
    }
    let open = [None, None, None];
    let run = |deg: f64, fb: &[Option<&phasefb::feedback::FeedbackModel>; 3]| {
        let setting = BoardSetting::new(deg).map_err(fail)?;
        closed_loop_unroll(&corpus.sim, &corpus.skill, fb, setting, 0).map_err(fail)
    };
    let open10 = run(10.0, &open)?.final_roll_error_deg();
    let closed10 = run(10.0, &slots)?.final_roll_error_deg();
    let unseen = run(6.25, &slots)?.final_roll_error_deg();
    let mut magnitudes = Vec::new();
    for deg in [2.5, 5.0, 7.5, 10.0] {
        let ep = run(deg, &slots)?;
        magnitudes
            .push(ep.coupling.iter().map(|c| c.abs()).sum::<f64>() / ep.coupling.len() as f64);
    }
    let ordered = magnitudes.windows(2).all(|w| w[0] < w[1]);
    Ok((
        (open10 - 10.0).abs() < 0.5 && closed10 < 2.0 && unseen < 2.5 && ordered,
        format!(
            "10°: open loop {open10:.2}°, feedback {closed10:.2}°; 6.25°: {unseen:.2}°; mean |C| {:?}",
            magnitudes.iter().map(|m| format!("{m:.2}")).collect::<Vec<_>>()
        ),
    ))
}

fn protocol_fidelity(fx: &mut Fixtures) -> Check {
    let corpus = fx.tiny()?;
    let ds = &corpus.datasets[0];
    let mut ok = true;
    let mut worst_dev = 0.0f64;
    for demo in ds.demo_ids() {
        let split = split_dataset(ds, demo, 5).map_err(fail)?;
        let mut all: Vec<usize> = [
            &split.train,
            &split.validation,
            &split.test,
            &split.generalization,
        ]
        .iter()
        .flat_map(|v| v.iter().copied())
        .collect();
        all.sort_unstable();
        ok &= all == (0..ds.len()).collect::<Vec<_>>();
        ok &= split
            .generalization
            .iter()
            .all(|&r| ds.rows()[r].demo_id == demo);
        ok &= split.generalization.len() == ds.rows().iter().filter(|r| r.demo_id == demo).count();
        let pool = (ds.len() - split.generalization.len()) as f64;
        let test_fraction = 1.0 - TRAIN_FRACTION - VALIDATION_FRACTION;
        for (got, frac) in [
            (split.train.len(), TRAIN_FRACTION),
            (split.validation.len(), VALIDATION_FRACTION),
            (split.test.len(), test_fraction),
        ] {
            worst_dev = worst_dev.max((got as f64 - frac * pool).abs());
        }
    }
    ok &= worst_dev <= 1.0;

    let config = TrainConfig {
        max_steps: 400,
        ..TrainConfig::default()
    };
    let fold = |demo: usize| -> Result<Vec<u8>, String> {
        let split = split_dataset(ds, demo, config.seed + demo as u64).map_err(fail)?;
        let trained = train_model(
            ds,
            &split,
            &Architecture::pmnn_default(),
            corpus.bank(0),
            &config,
        )
        .map_err(fail)?;
        serde_json::to_vec(&trained.model).map_err(fail)
    };
    let first = ds.demo_ids()[0];
    let identical = fold(first)? == fold(first)?;
    ok &= identical;
    Ok((
        ok,
        format!("largest proportion deviation {worst_dev:.2} rows; repeated fold bit-identical: {identical}"),
    ))
}

// ---------------------------------------------------------------- driver

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(&mut Fixtures) -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "SO(3) algebra",
            budget: Duration::from_secs(1),
            run: so3_algebra,
        },
        Criterion {
            id: 2,
            name: "canonical system",
            budget: Duration::from_secs(1),
            run: canonical_convergence,
        },
        Criterion {
            id: 3,
            name: "DMP round trip",
            budget: Duration::from_secs(10),
            run: dmp_round_trip,
        },
        Criterion {
            id: 4,
            name: "coupling-target self-consistency",
            budget: Duration::from_secs(10),
            run: coupling_self_consistency,
        },
        Criterion {
            id: 5,
            name: "PMNN structure",
            budget: Duration::from_secs(5),
            run: pmnn_structure,
        },
        Criterion {
            id: 6,
            name: "gradient correctness",
            budget: Duration::from_secs(30),
            run: gradient_correctness,
        },
        Criterion {
            id: 7,
            name: "teacher-student learning",
            budget: Duration::from_secs(300),
            run: teacher_student,
        },
        Criterion {
            id: 8,
            name: "model ordering",
            budget: Duration::from_secs(1800),
            run: model_ordering,
        },
        Criterion {
            id: 9,
            name: "closed-loop efficacy",
            budget: Duration::from_secs(300),
            run: closed_loop_efficacy,
        },
        Criterion {
            id: 10,
            name: "protocol fidelity",
            budget: Duration::from_secs(60),
            run: protocol_fidelity,
        },
    ];

    // Numeric arguments select criteria; any other filter (from a plain
    // `cargo test <name>`) selects none.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if !args.is_empty() && selected.is_empty() {
        return ExitCode::SUCCESS;
    }

    let mut fixtures = Fixtures::default();
    let mut failures = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)(&mut fixtures);
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && elapsed <= c.budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<34} {}  [{:.2?} / {:?}]  {detail}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed,
            c.budget
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
