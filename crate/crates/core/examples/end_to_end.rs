//! Learns the sliding skill on a synthetic corpus, trains PMNN feedback for
//! the reorientation and slide stages, and executes it at several board
//! rolls with and without feedback.
//!
//! `cargo run --release --example end_to_end -- [tiny|default] [steps]`

use phasefb::feedback::Architecture;
use phasefb::pipeline::{extract_coupling_datasets, learn_nominal, NominalConfig, FEEDBACK_STAGES};
use phasefb::simulator::{closed_loop_unroll, BoardSetting, SimProfile, Simulator};
use phasefb::training::{split_without_holdout, train_model, TrainConfig};

fn main() -> phasefb::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let profile = SimProfile::by_name(args.get(1).map(String::as_str).unwrap_or("tiny"))?;
    let steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);

    let sim = Simulator::new(profile, 7)?;
    let corpus = sim.corpus()?;
    let nominal: Vec<_> = corpus
        .iter()
        .filter(|d| d.setting.roll_deg() == 0.0)
        .cloned()
        .collect();
    let config = NominalConfig::default();
    let (skill, _) = learn_nominal(&sim, &nominal, &config)?;
    let datasets = extract_coupling_datasets(&skill, &corpus, &config.zvc)?;

    let train = TrainConfig {
        max_steps: steps,
        ..TrainConfig::default()
    };
    let mut models = Vec::new();
    for (ds, &stage) in datasets.iter().zip(&FEEDBACK_STAGES) {
        let split = split_without_holdout(ds, train.seed)?;
        let bank = skill.stage(stage)?.orientation.bank();
        let trained = train_model(ds, &split, &Architecture::pmnn_default(), bank, &train)?;
        println!("stage {}: {:?}", stage + 1, trained.scores);
        models.push(trained.model);
    }
    let feedback = [None, Some(&models[0]), Some(&models[1])];
    let open = [None, None, None];
    for deg in [2.5, 5.0, 6.25, 7.5, 10.0] {
        let setting = BoardSetting::new(deg)?;
        let off = closed_loop_unroll(&sim, &skill, &open, setting, 1)?;
        let on = closed_loop_unroll(&sim, &skill, &feedback, setting, 1)?;
        let peak = on.coupling.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        println!(
            "{deg:>5}°  open loop {:6.2}°  feedback {:6.2}°  peak coupling {peak:.3}",
            off.final_roll_error_deg(),
            on.final_roll_error_deg()
        );
    }
    Ok(())
}
