//! CSV, binary dump and report writers.

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::solve::{OracleCheck, Outcome};
use pyragas_core::hierarchy::CorrelatorBlock;
use pyragas_core::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_channel(path: &Path, times: &[f64], values: &[Complex64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "re", "im"])?;
    for (t, z) in times.iter().zip(values) {
        w.write_record([num(*t), num(z.re), num(z.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_wide(path: &Path, times: &[f64], columns: &[(&str, &[f64])]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t"];
    header.extend(columns.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for (k, t) in times.iter().enumerate() {
        let mut row = vec![num(*t)];
        row.extend(columns.iter().map(|(_, v)| num(v[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DumpChannel {
    name: String,
    offset: u64,
}

#[derive(Debug, Serialize)]
struct DumpInterval {
    interval: usize,
    start_time: f64,
    dt: f64,
    samples: usize,
    channels: Vec<DumpChannel>,
}

#[derive(Debug, Serialize)]
struct DumpManifest {
    format: &'static str,
    intervals: Vec<DumpInterval>,
}

/// Every correlator block as little-endian `(re, im)` f64 pairs, one channel
/// after another (`[channel][step]`), intervals in order. The manifest lists
/// byte offsets.
pub fn write_dump(bin: &Path, manifest: &Path, blocks: &[CorrelatorBlock]) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(fs::File::create(bin)?);
    let mut offset = 0u64;
    let mut intervals = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut channels = Vec::new();
        let mut samples = 0;
        for (name, values) in b.channels() {
            channels.push(DumpChannel { name, offset });
            samples = values.len();
            for z in values {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
            offset += 16 * values.len() as u64;
        }
        intervals.push(DumpInterval {
            interval: b.interval,
            start_time: b.start_time,
            dt: b.dt,
            samples,
            channels,
        });
    }
    w.flush()?;
    let m = DumpManifest {
        format: "f64le complex pairs, row-major [channel][step]",
        intervals,
    };
    fs::write(
        manifest,
        serde_json::to_string_pretty(&m).expect("serializable") + "\n",
    )?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub config: &'a ScenarioConfig,
    pub memory_counts: Option<&'a [usize]>,
    pub oracle: &'a [OracleCheck],
    pub stabilization_cv: Option<f64>,
    pub summary: BTreeMap<String, f64>,
    pub passed: Option<bool>,
    /// File name to sha256 of its contents.
    pub files: BTreeMap<String, String>,
    pub timing: Timing,
}

/// Writes every enabled output into `dir` plus `report.json`. Returns the
/// written data files (not the report).
pub fn write_all(
    dir: &Path,
    config: &ScenarioConfig,
    out: &Outcome,
    wall_seconds: f64,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if config.outputs.channels {
        for (name, values) in &out.channels {
            let p = dir.join(format!("{name}.csv"));
            write_channel(&p, &out.times, values)?;
            written.push(p);
        }
    }
    if config.outputs.wide && !out.observables.is_empty() {
        let cols: Vec<(&str, &[f64])> = out
            .observables
            .iter()
            .map(|(n, v)| (n.as_str(), v.as_slice()))
            .collect();
        let p = dir.join("observables.csv");
        write_wide(&p, &out.times, &cols)?;
        written.push(p);
    }
    if config.outputs.dump && !out.blocks.is_empty() {
        let bin = dir.join("blocks.bin");
        let manifest = dir.join("blocks.json");
        write_dump(&bin, &manifest, &out.blocks)?;
        written.push(bin);
        written.push(manifest);
    }
    let mut files = BTreeMap::new();
    for p in &written {
        let name = p.file_name().expect("file").to_string_lossy().into_owned();
        files.insert(name, sha256_file(p)?);
    }
    let report = Report {
        config,
        memory_counts: out.memory_counts.as_deref(),
        oracle: &out.oracle,
        stabilization_cv: out.stabilization_cv,
        summary: out.summary.iter().cloned().collect(),
        passed: out.passed,
        files,
        timing: Timing { wall_seconds },
    };
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("serializable") + "\n",
    )?;
    Ok(written)
}
