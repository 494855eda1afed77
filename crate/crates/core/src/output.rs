//! On-disk formats: trajectory and table CSVs, and the run manifest.
//!
//! Column orders are fixed; see `docs/formats.md`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ValidationReport};
use crate::error::{Error, Result};
use crate::montecarlo::{MomentRow, MomentTable};
use crate::solver::{StepRecord, Trajectory};

pub const MANIFEST_SCHEMA: &str = "massrd-manifest/1";

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Long format, one row per frame, field (`u` or `z`), species and grid point:
/// `step,time,field,species,point,x[,y],value`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let dim = traj.points.first().map_or(1, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step", "time", "field", "species", "point", "x"];
    if dim == 2 {
        header.push("y");
    }
    header.push("value");
    w.write_record(&header).map_err(csv_error)?;
    for frame in &traj.frames {
        for (field, data) in [("u", &frame.u), ("z", &frame.z)] {
            for (i, values) in data.iter().enumerate() {
                for (j, v) in values.iter().enumerate() {
                    let mut rec = vec![
                        frame.step.to_string(),
                        format_f64(frame.time),
                        field.to_string(),
                        traj.labels[i].clone(),
                        j.to_string(),
                    ];
                    rec.extend(traj.points[j].iter().map(|c| format_f64(*c)));
                    rec.push(format_f64(*v));
                    w.write_record(&rec).map_err(csv_error)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// One row per step: `time,mass,u_sup,u_min,z_sup,u_density,z_density,y_u,y_z,y_sigma`.
pub fn write_history_csv<W: Write>(history: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in history {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv<R: Read>(input: R) -> Result<Vec<StepRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(csv_error)).collect()
}

/// `n,paths,p,moment,half_width,blowup,blowup_half_width,markov_bound,markov_ok`.
pub fn write_moment_csv<W: Write>(table: &MomentTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &table.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_moment_csv<R: Read>(input: R) -> Result<Vec<MomentRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(csv_error)).collect()
}

/// Two-column plot data with a header.
pub fn write_xy_csv<W: Write>(x_name: &str, y_name: &str, points: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x_name, y_name]).map_err(csv_error)?;
    for (x, y) in points {
        w.write_record([format_f64(*x), format_f64(*y)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_xy_csv<R: Read>(input: R) -> Result<(String, String, Vec<(f64, f64)>)> {
    let mut r = csv::Reader::from_reader(input);
    let h = r.headers().map_err(csv_error)?.clone();
    let names = (h.get(0).unwrap_or("x").to_string(), h.get(1).unwrap_or("y").to_string());
    let rows = r.deserialize().map(|x| x.map_err(csv_error)).collect::<Result<Vec<(f64, f64)>>>()?;
    Ok((names.0, names.1, rows))
}

/// Everything needed to reproduce a run: effective config (model inlined),
/// command and arguments, seed, generator, version and check reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub arguments: BTreeMap<String, serde_json::Value>,
    pub config: RunConfig,
    pub seed: u64,
    pub rng_algorithm: String,
    pub code_version: String,
    pub checks: Option<ValidationReport>,
    pub forced: bool,
    pub wall_clock_seconds: f64,
    /// Output kind -> file name (relative to the manifest).
    pub outputs: BTreeMap<String, String>,
    /// Command-specific results (stopping record, fitted exponents, ...).
    pub results: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            arguments: BTreeMap::new(),
            seed: config.seed,
            config,
            rng_algorithm: crate::rng::RNG_ALGORITHM.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            checks: None,
            forced: false,
            wall_clock_seconds: 0.0,
            outputs: BTreeMap::new(),
            results: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Config(format!("unsupported manifest schema `{}`", m.schema)));
        }
        Ok(m)
    }
}
