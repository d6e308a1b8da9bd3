//! One function per subcommand. Every command reads its inputs up front,
//! refuses to clobber existing outputs unless forced, and prints a short
//! summary that is also written as JSON.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use phasefb::feedback::{CouplingTargetDataset, FeedbackModel};
use phasefb::pipeline::{
    extract_coupling_datasets, learn_nominal, NominalSkill, StageModels, StageReport,
    FEEDBACK_STAGES,
};
use phasefb::simulator::{
    closed_loop_unroll, read_corpus, write_corpus, write_demo, BoardSetting, CorpusMeta,
    DemoRecord, SimProfile, Simulator,
};
use phasefb::so3::UnitQuaternion;
use phasefb::training::{
    dominance_analysis, format_report_table, loo_evaluate, split_without_holdout, train_model,
    write_dominance_csv, EvalReport, SplitScores,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub struct Context {
    pub config: PipelineConfig,
    pub force: bool,
}

const SKILL_FILE: &str = "skill.json";

fn primitive_file(p: usize) -> String {
    format!("primitive_{p}.json")
}

fn dataset_file(p: usize) -> String {
    format!("coupling_prim{p}.csv")
}

fn feedback_file(p: usize) -> String {
    format!("feedback_prim{p}.json")
}

/// Primitive numbers (1-based) that carry learned feedback.
pub fn feedback_primitives() -> Vec<usize> {
    FEEDBACK_STAGES.iter().map(|s| s + 1).collect()
}

/// Checks a user-selected primitive list; empty means all feedback
/// primitives.
pub fn select_primitives(requested: &[usize]) -> Result<Vec<usize>, CliError> {
    let all = feedback_primitives();
    if requested.is_empty() {
        return Ok(all);
    }
    for p in requested {
        if !all.contains(p) {
            return Err(CliError::Config(format!(
                "feedback models exist only for primitives {all:?}, not {p}"
            )));
        }
    }
    Ok(requested.to_vec())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Fails if any of `paths` already exists, unless forced.
fn guard(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Exists(p.clone())),
        None => Ok(()),
    }
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{what} not found at {}",
            path.display()
        )))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{} is malformed: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<CouplingTargetDataset, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(CouplingTargetDataset::read_csv(BufReader::new(file))?)
}

fn load_corpus(cfg: &PipelineConfig) -> Result<(CorpusMeta, Vec<DemoRecord>), CliError> {
    require(&cfg.corpus, "corpus")?;
    Ok(read_corpus(&cfg.corpus)?)
}

#[derive(Serialize, Deserialize)]
struct SkillHeader {
    dt: f64,
    start_position: Vec<f64>,
    start_orientation: UnitQuaternion,
    primitives: Vec<String>,
}

fn save_skill(dir: &Path, skill: &NominalSkill) -> Result<(), CliError> {
    let primitives: Vec<String> = (1..=skill.stages.len()).map(primitive_file).collect();
    for (stage, name) in skill.stages.iter().zip(&primitives) {
        write_json(&dir.join(name), stage)?;
    }
    write_json(
        &dir.join(SKILL_FILE),
        &SkillHeader {
            dt: skill.dt,
            start_position: skill.start_position.clone(),
            start_orientation: skill.start_orientation,
            primitives,
        },
    )
}

fn load_skill(dir: &Path) -> Result<NominalSkill, CliError> {
    let path = dir.join(SKILL_FILE);
    require(&path, "nominal skill (run learn-nominal first)")?;
    let header: SkillHeader = read_json(&path)?;
    let stages = header
        .primitives
        .iter()
        .map(|name| read_json::<StageModels>(&dir.join(name)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NominalSkill {
        dt: header.dt,
        start_position: header.start_position,
        start_orientation: header.start_orientation,
        stages,
    })
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let dir = &cfg.corpus;
    if !ctx.force && dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(CliError::Exists(dir.clone()));
    }
    ensure_dir(dir)?;
    let sim = Simulator::new(SimProfile::by_name(&cfg.profile)?, cfg.seed()?)?;
    let demos = sim.corpus()?;
    let meta = write_corpus(dir, &sim, &demos)?;
    for (deg, n) in meta.settings.iter().zip(&meta.counts) {
        println!("{deg:>6}°  {n} demonstrations");
    }
    println!(
        "{} demonstrations written to {}",
        meta.total_demos(),
        dir.display()
    );
    Ok(())
}

pub fn learn_nominal_cmd(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let (meta, demos) = load_corpus(cfg)?;
    let dir = &cfg.models;
    let mut outputs: Vec<PathBuf> = (1..=3).map(|p| dir.join(primitive_file(p))).collect();
    outputs.push(dir.join(SKILL_FILE));
    outputs.push(dir.join("reproduction.json"));
    guard(&outputs, ctx.force)?;

    let nominal: Vec<DemoRecord> = demos
        .into_iter()
        .filter(|d| d.setting.roll_deg() == 0.0)
        .collect();
    if nominal.is_empty() {
        return Err(CliError::Data("corpus has no 0° demonstrations".into()));
    }
    let sim = meta.simulator()?;
    let (skill, reports) = learn_nominal(&sim, &nominal, &cfg.nominal)?;
    ensure_dir(dir)?;
    save_skill(dir, &skill)?;
    write_json(&dir.join("reproduction.json"), &reports)?;
    print_reproduction(&reports);
    Ok(())
}

fn print_reproduction(reports: &[StageReport]) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2e}"));
    println!(
        "{:<10}{:>10}{:>14}{:>14}",
        "primitive", "samples", "position", "orientation"
    );
    for r in reports {
        println!(
            "{:<10}{:>10}{:>14}{:>14}",
            r.stage + 1,
            r.samples,
            fmt(r.position_nmse),
            fmt(r.orientation_nmse)
        );
    }
}

#[derive(Serialize)]
struct DatasetSummary {
    primitive: usize,
    rows: usize,
    file: String,
    per_setting: Vec<SettingRows>,
}

#[derive(Serialize)]
struct SettingRows {
    setting_deg: f64,
    rows: usize,
}

pub fn extract_coupling(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let skill = load_skill(&cfg.models)?;
    let (_, demos) = load_corpus(cfg)?;
    if demos.iter().all(|d| d.setting.roll_deg() == 0.0) {
        return Err(CliError::Data(
            "corpus has no corrected (non-zero) settings".into(),
        ));
    }
    let dir = &cfg.data;
    let prims = feedback_primitives();
    let mut outputs: Vec<PathBuf> = prims.iter().map(|p| dir.join(dataset_file(*p))).collect();
    outputs.push(dir.join("coupling_summary.json"));
    guard(&outputs, ctx.force)?;

    let datasets = extract_coupling_datasets(&skill, &demos, &cfg.nominal.zvc)?;
    ensure_dir(dir)?;
    let mut summary = Vec::new();
    for (ds, p) in datasets.iter().zip(&prims) {
        let file = dataset_file(*p);
        ds.write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
        let mut per_setting: Vec<SettingRows> = Vec::new();
        for r in ds.rows() {
            match per_setting
                .iter_mut()
                .find(|c| c.setting_deg == r.setting_deg)
            {
                Some(c) => c.rows += 1,
                None => per_setting.push(SettingRows {
                    setting_deg: r.setting_deg,
                    rows: 1,
                }),
            }
        }
        println!(
            "primitive {p}: {} rows -> {}",
            ds.len(),
            dir.join(&file).display()
        );
        summary.push(DatasetSummary {
            primitive: *p,
            rows: ds.len(),
            file,
            per_setting,
        });
    }
    write_json(&dir.join("coupling_summary.json"), &summary)
}

#[derive(Serialize)]
struct TrainSummary {
    primitive: usize,
    architecture: String,
    best_steps: Vec<usize>,
    scores: SplitScores,
}

pub fn train(ctx: &Context, primitives: &[usize]) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let prims = select_primitives(primitives)?;
    let arch = cfg.architecture()?;
    let train_cfg = cfg.train_config()?;
    let skill = load_skill(&cfg.models)?;
    let datasets = prims
        .iter()
        .map(|p| read_dataset(&cfg.data.join(dataset_file(*p))))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = &cfg.models;
    let outputs: Vec<PathBuf> = prims
        .iter()
        .flat_map(|p| {
            [
                dir.join(feedback_file(*p)),
                dir.join(format!("curves_prim{p}.csv")),
                dir.join(format!("training_prim{p}.json")),
            ]
        })
        .collect();
    guard(&outputs, ctx.force)?;

    for (p, ds) in prims.iter().zip(&datasets) {
        let bank = skill.stage(p - 1)?.orientation.bank();
        let split = split_without_holdout(ds, train_cfg.seed)?;
        let trained = train_model(ds, &split, &arch, bank, &train_cfg)?;
        write_json(&dir.join(feedback_file(*p)), &trained.model)?;
        trained.curves.write_csv(BufWriter::new(File::create(
            dir.join(format!("curves_prim{p}.csv")),
        )?))?;
        let s = trained.scores;
        println!(
            "primitive {p} {}: train {:.4} validation {:.4} test {:.4} (best step {:?})",
            arch.label(),
            s.train,
            s.validation,
            s.test,
            trained.best_steps
        );
        write_json(
            &dir.join(format!("training_prim{p}.json")),
            &TrainSummary {
                primitive: *p,
                architecture: arch.label(),
                best_steps: trained.best_steps.clone(),
                scores: s,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LooRow<'a> {
    primitive: String,
    report: &'a EvalReport,
}

pub fn loo(ctx: &Context, primitives: &[usize]) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let prims = select_primitives(primitives)?;
    let arch = cfg.architecture()?;
    let train_cfg = cfg.train_config()?;
    let skill = load_skill(&cfg.models)?;
    let datasets = prims
        .iter()
        .map(|p| read_dataset(&cfg.data.join(dataset_file(*p))))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = &cfg.reports;
    let stem = format!("loo_{}", slug(&arch.label()));
    let outputs = [
        dir.join(format!("{stem}.json")),
        dir.join(format!("{stem}.txt")),
    ];
    guard(&outputs, ctx.force)?;

    let mut reports = Vec::new();
    for (p, ds) in prims.iter().zip(&datasets) {
        let bank = skill.stage(p - 1)?.orientation.bank();
        reports.push((
            format!("Prim. {p}"),
            loo_evaluate(ds, &arch, bank, &train_cfg)?,
        ));
    }
    let rows: Vec<(String, &EvalReport)> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let table = format_report_table(&rows);
    println!(
        "{} ({} folds)\n{table}",
        arch.label(),
        reports[0].1.folds.len()
    );
    ensure_dir(dir)?;
    fs::write(&outputs[1], format!("{}\n{table}", arch.label()))?;
    let json: Vec<LooRow> = reports
        .iter()
        .map(|(l, r)| LooRow {
            primitive: l.clone(),
            report: r,
        })
        .collect();
    write_json(&outputs[0], &json)
}

/// File-name friendly architecture label.
fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

#[derive(Serialize)]
struct UnrollSummary {
    setting_deg: f64,
    coupling: bool,
    trial: u64,
    final_roll_error_deg: f64,
    /// Largest |coupling| per primitive.
    peak_coupling: Vec<f64>,
    samples: usize,
}

pub fn unroll(ctx: &Context, setting_deg: f64, coupling: bool, trial: u64) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let setting = BoardSetting::new(setting_deg)?;
    let skill = load_skill(&cfg.models)?;
    let meta_path = cfg.corpus.join(phasefb::simulator::META_FILE);
    require(&meta_path, "corpus manifest")?;
    let sim = phasefb::simulator::read_meta(&cfg.corpus)?.simulator()?;
    let models = if coupling {
        feedback_primitives()
            .iter()
            .map(|p| {
                let path = cfg.models.join(feedback_file(*p));
                require(&path, "feedback model (run train first)")?;
                read_json::<FeedbackModel>(&path)
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let dir = cfg.reports.join(format!(
        "unroll_{setting_deg}deg_{}",
        if coupling { "on" } else { "off" }
    ));
    guard(&[dir.join("summary.json")], ctx.force)?;

    let mut slots: [Option<&FeedbackModel>; 3] = [None, None, None];
    for (stage, m) in FEEDBACK_STAGES.iter().zip(&models) {
        slots[*stage] = Some(m);
    }
    let episode = closed_loop_unroll(&sim, &skill, &slots, setting, trial)?;
    ensure_dir(&dir)?;
    write_demo(&dir, &episode.record)?;
    episode.write_coupling_csv(BufWriter::new(File::create(dir.join("coupling.csv"))?))?;
    if episode.deviation.is_some() {
        episode.write_deviation_csv(BufWriter::new(File::create(dir.join("deviation.csv"))?))?;
    }
    let peak_coupling = episode
        .stage_ranges
        .iter()
        .map(|&(a, b)| {
            episode.coupling[a..=b]
                .iter()
                .fold(0.0f64, |m, c| m.max(c.abs()))
        })
        .collect();
    let summary = UnrollSummary {
        setting_deg,
        coupling,
        trial,
        final_roll_error_deg: episode.final_roll_error_deg(),
        peak_coupling,
        samples: episode.record.tactile.len(),
    };
    println!(
        "{setting_deg}° with feedback {}: final roll error {:.3}° (peak coupling per primitive {:?})",
        if coupling { "on" } else { "off" },
        summary.final_roll_error_deg,
        summary.peak_coupling
    );
    write_json(&dir.join("summary.json"), &summary)
}

pub fn dominance(ctx: &Context, primitives: &[usize]) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let prims = select_primitives(primitives)?;
    let models = prims
        .iter()
        .map(|p| {
            let path = cfg.models.join(feedback_file(*p));
            require(&path, "feedback model (run train first)")?;
            read_json::<FeedbackModel>(&path)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dir = &cfg.reports;
    let outputs: Vec<PathBuf> = prims
        .iter()
        .map(|p| dir.join(format!("dominance_prim{p}.csv")))
        .collect();
    guard(&outputs, ctx.force)?;
    ensure_dir(dir)?;
    for ((p, model), out) in prims.iter().zip(&models).zip(&outputs) {
        let rankings = dominance_analysis(model)?;
        write_dominance_csv(&rankings, BufWriter::new(File::create(out)?))?;
        println!(
            "primitive {p}: {} kernels ranked -> {}",
            rankings.len(),
            out.display()
        );
    }
    Ok(())
}
