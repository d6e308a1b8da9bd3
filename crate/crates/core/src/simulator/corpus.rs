//! On-disk corpus: `<root>/<setting>/demo_<k>/{pose,orientation,tactile}.csv`
//! plus `<root>/meta.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::ContactModel;
use super::scenario::{BoardSetting, DemoRecord, SimProfile, Simulator};
use crate::error::{Error, Result};
use crate::primitives::{LinearTrajectory, OrientationSample, OrientationTrajectory};
use crate::sensors::SensorTraceSet;
use crate::so3::UnitQuaternion;

pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub profile: SimProfile,
    pub seed: u64,
    pub settings: Vec<f64>,
    /// Demonstrations per entry of `settings`.
    pub counts: Vec<usize>,
    pub contact: ContactModel,
}

impl CorpusMeta {
    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::from_parts(self.profile.clone(), self.contact.clone(), self.seed)
    }

    pub fn total_demos(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Directory name of a setting, e.g. `2.5` or `-5`.
pub fn setting_dir(setting: &BoardSetting) -> String {
    format!("{}", setting.roll_deg())
}

pub fn demo_dir(root: &Path, setting: &BoardSetting, demo_id: usize) -> PathBuf {
    root.join(setting_dir(setting))
        .join(format!("demo_{demo_id}"))
}

/// Writes `demos` below `root`, which must already exist.
pub fn write_corpus(root: &Path, sim: &Simulator, demos: &[DemoRecord]) -> Result<CorpusMeta> {
    let mut settings: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for d in demos {
        let deg = d.setting.roll_deg();
        match settings.iter().position(|s| *s == deg) {
            Some(i) => counts[i] += 1,
            None => {
                settings.push(deg);
                counts.push(1);
            }
        }
        write_demo(&demo_dir(root, &d.setting, d.demo_id), d)?;
    }
    let meta = CorpusMeta {
        profile: sim.profile().clone(),
        seed: sim.seed(),
        settings,
        counts,
        contact: sim.contact().clone(),
    };
    let file = BufWriter::new(File::create(root.join(META_FILE))?);
    serde_json::to_writer_pretty(file, &meta)?;
    Ok(meta)
}

pub fn read_meta(root: &Path) -> Result<CorpusMeta> {
    let path = root.join(META_FILE);
    let file = File::open(&path)
        .map_err(|e| Error::MissingData(format!("cannot open {}: {e}", path.display())))?;
    let meta: CorpusMeta = serde_json::from_reader(BufReader::new(file))?;
    if meta.settings.len() != meta.counts.len() {
        return Err(Error::MissingData(
            "corpus manifest lists settings and counts of different lengths".into(),
        ));
    }
    Ok(meta)
}

/// Reads the whole corpus in manifest order.
pub fn read_corpus(root: &Path) -> Result<(CorpusMeta, Vec<DemoRecord>)> {
    let meta = read_meta(root)?;
    let mut demos = Vec::with_capacity(meta.total_demos());
    for (&deg, &count) in meta.settings.iter().zip(&meta.counts) {
        let setting = BoardSetting::new(deg)?;
        for k in 0..count {
            demos.push(read_demo(
                &demo_dir(root, &setting, k),
                setting,
                k,
                meta.profile.sensor_dim,
            )?);
        }
    }
    Ok((meta, demos))
}

/// Writes the three CSV files of one demonstration into `dir`.
pub fn write_demo(dir: &Path, d: &DemoRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    let time = |i: usize| d.pose.time(i).to_string();

    let mut w = csv::Writer::from_path(dir.join("pose.csv"))?;
    w.write_record(["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
    for i in 0..d.pose.len() {
        let mut rec = vec![time(i)];
        for series in [
            d.pose.positions(),
            d.pose.velocities(),
            d.pose.accelerations(),
        ] {
            rec.extend(series[i].iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("orientation.csv"))?;
    w.write_record([
        "t", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "dwx", "dwy", "dwz",
    ])?;
    for (i, s) in d.orientation.samples().iter().enumerate() {
        let mut rec = vec![time(i)];
        rec.extend(s.q.to_array().iter().map(|v| v.to_string()));
        rec.extend(
            s.omega
                .iter()
                .chain(s.omega_dot.iter())
                .map(|v| v.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("tactile.csv"))?;
    let values = d.tactile.values();
    let mut header = vec!["t".to_string()];
    header.extend((1..=values.ncols()).map(|k| format!("e_{k}")));
    w.write_record(&header)?;
    for i in 0..values.nrows() {
        let mut rec = vec![time(i)];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a numeric CSV with exactly `width` columns.
fn read_table(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::MissingData(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::MissingData(format!(
                "{}: expected {width} columns, found {}",
                path.display(),
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::MissingData(format!("{}: bad number `{f}`", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::MissingData(format!(
            "{}: too few rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn grid(rows: &[Vec<f64>]) -> (f64, f64) {
    (rows[0][0], rows[1][0] - rows[0][0])
}

fn read_demo(
    dir: &Path,
    setting: BoardSetting,
    demo_id: usize,
    sensor_dim: usize,
) -> Result<DemoRecord> {
    let pose = read_table(&dir.join("pose.csv"), 10)?;
    let (t0, dt) = grid(&pose);
    let vec3 = |r: &[f64]| DVector::from_column_slice(r);
    let pose = LinearTrajectory::new(
        t0,
        dt,
        pose.iter().map(|r| vec3(&r[1..4])).collect(),
        pose.iter().map(|r| vec3(&r[4..7])).collect(),
        pose.iter().map(|r| vec3(&r[7..10])).collect(),
    )?;

    let orient = read_table(&dir.join("orientation.csv"), 11)?;
    let samples = orient
        .iter()
        .map(|r| {
            Ok(OrientationSample {
                q: UnitQuaternion::from_unit_components(r[1], r[2], r[3], r[4])?,
                omega: Vector3::new(r[5], r[6], r[7]),
                omega_dot: Vector3::new(r[8], r[9], r[10]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let orientation = OrientationTrajectory::new(t0, dt, samples)?;

    let tactile = read_table(&dir.join("tactile.csv"), sensor_dim + 1)?;
    let values = DMatrix::from_fn(tactile.len(), sensor_dim, |i, k| tactile[i][k + 1]);
    let tactile = SensorTraceSet::new(t0, dt, values, setting.roll_deg())?;

    if pose.len() != orientation.len() || pose.len() != tactile.len() {
        return Err(Error::MissingData(format!(
            "{}: modalities have different lengths",
            dir.display()
        )));
    }
    Ok(DemoRecord {
        demo_id,
        setting,
        pose,
        orientation,
        tactile,
    })
}
