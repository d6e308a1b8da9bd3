//! Leave-one-demonstration-out comparison of feedback architectures on the
//! reorientation stage.
//!
//! `cargo run --release --example compare_models -- [tiny|default] [steps]`

use std::time::Instant;

use phasefb::feedback::Architecture;
use phasefb::pipeline::{extract_coupling_datasets, learn_nominal, NominalConfig, FEEDBACK_STAGES};
use phasefb::simulator::{SimProfile, Simulator};
use phasefb::training::{format_report_table, loo_evaluate, TrainConfig};

fn main() -> phasefb::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let profile = SimProfile::by_name(args.get(1).map(String::as_str).unwrap_or("tiny"))?;
    let steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);

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
    for (ds, &stage) in datasets.iter().zip(&FEEDBACK_STAGES) {
        let bank = skill.stage(stage)?.orientation.bank();
        let mut reports = Vec::new();
        for arch in [
            Architecture::pmnn_default(),
            Architecture::pmnn_linear(),
            Architecture::ffnn_default(),
            Architecture::pca_default(),
        ] {
            let start = Instant::now();
            let report = loo_evaluate(ds, &arch, bank, &train)?;
            eprintln!(
                "{} on {} rows: {:.1?}",
                arch.label(),
                ds.len(),
                start.elapsed()
            );
            reports.push((arch.label(), report));
        }
        let rows: Vec<_> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
        println!("primitive {}\n{}", stage + 1, format_report_table(&rows));
    }
    Ok(())
}
