//! Supervised pairs `(Δs, p, u) → C_target` grouped by demonstration.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::canonical::PhaseState;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRow {
    pub demo_id: usize,
    /// Board roll, degrees.
    pub setting_deg: f64,
    pub phase: PhaseState,
    pub deviation: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTargetDataset {
    sensor_dim: usize,
    coupling_dim: usize,
    rows: Vec<CouplingRow>,
}

impl CouplingTargetDataset {
    pub fn new(sensor_dim: usize, coupling_dim: usize) -> Result<Self> {
        if sensor_dim == 0 || coupling_dim == 0 {
            return Err(Error::invalid("dataset dimensions must be positive"));
        }
        Ok(CouplingTargetDataset {
            sensor_dim,
            coupling_dim,
            rows: Vec::new(),
        })
    }

    pub fn from_rows(
        sensor_dim: usize,
        coupling_dim: usize,
        rows: Vec<CouplingRow>,
    ) -> Result<Self> {
        let mut ds = Self::new(sensor_dim, coupling_dim)?;
        for r in rows {
            ds.push(r)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, row: CouplingRow) -> Result<()> {
        check_dim("dataset deviation", self.sensor_dim, row.deviation.len())?;
        check_dim("dataset target", self.coupling_dim, row.target.len())?;
        let finite = [row.setting_deg, row.phase.p, row.phase.u]
            .iter()
            .chain(&row.deviation)
            .chain(&row.target)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("dataset rows must be finite"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: CouplingTargetDataset) -> Result<()> {
        check_dim(
            "dataset sensor dimension",
            self.sensor_dim,
            other.sensor_dim,
        )?;
        check_dim(
            "dataset coupling dimension",
            self.coupling_dim,
            other.coupling_dim,
        )?;
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn sensor_dim(&self) -> usize {
        self.sensor_dim
    }

    pub fn coupling_dim(&self) -> usize {
        self.coupling_dim
    }

    pub fn rows(&self) -> &[CouplingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn demo_ids(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| r.demo_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Distinct settings in ascending order.
    pub fn settings(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.rows.iter().map(|r| r.setting_deg).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        CouplingTargetDataset {
            sensor_dim: self.sensor_dim,
            coupling_dim: self.coupling_dim,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Copy with targets reassigned by `perm` (row `i` gets the target of
    /// row `perm[i]`).
    pub fn with_permuted_targets(&self, perm: &[usize]) -> Result<Self> {
        check_dim("target permutation", self.rows.len(), perm.len())?;
        let mut out = self.clone();
        for (row, &j) in out.rows.iter_mut().zip(perm) {
            row.target = self.rows[j].target.clone();
        }
        Ok(out)
    }

    /// Target column `dim` of every row.
    pub fn targets(&self, dim: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.target[dim]).collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["demo_id", "setting", "p", "u"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=self.sensor_dim).map(|k| format!("ds_{k}")));
        h.extend((1..=self.coupling_dim).map(|m| format!("C_{m}")));
        h
    }

    /// CSV with header `demo_id,setting,p,u,ds_1..ds_K,C_1..C_M`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.demo_id.to_string(),
                r.setting_deg.to_string(),
                r.phase.p.to_string(),
                r.phase.u.to_string(),
            ];
            rec.extend(r.deviation.iter().map(|v| v.to_string()));
            rec.extend(r.target.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header = rd.headers()?.clone();
        let sensor_dim = header.iter().filter(|h| h.starts_with("ds_")).count();
        let coupling_dim = header.iter().filter(|h| h.starts_with("C_")).count();
        let mut ds = Self::new(sensor_dim, coupling_dim)
            .map_err(|_| Error::MissingData("dataset header lacks ds_ or C_ columns".into()))?;
        let expected = ds.header();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::MissingData(format!(
                "dataset header does not match {}",
                expected.join(",")
            )));
        }
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::MissingData(format!("row is missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::MissingData(format!("column {i}: {e}")))
            };
            let demo_id = rec
                .get(0)
                .unwrap_or_default()
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::MissingData(format!("demo_id: {e}")))?;
            let deviation = (0..sensor_dim)
                .map(|k| num(4 + k))
                .collect::<Result<Vec<_>>>()?;
            let target = (0..coupling_dim)
                .map(|m| num(4 + sensor_dim + m))
                .collect::<Result<Vec<_>>>()?;
            ds.push(CouplingRow {
                demo_id,
                setting_deg: num(1)?,
                phase: PhaseState {
                    p: num(2)?,
                    u: num(3)?,
                },
                deviation,
                target,
            })?;
        }
        Ok(ds)
    }
}
