//! CSV emission.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::run::RunResult;

pub const RESULT_HEADER: [&str; 15] = [
    "protocol",
    "N",
    "lambda",
    "w_min",
    "seed",
    "replications",
    "total_slots",
    "warmup_slots",
    "aag",
    "aag_std",
    "aaoi",
    "n_aaoi",
    "throughput",
    "complexity_per_slot",
    "stable",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn record(r: &RunResult) -> Vec<String> {
    vec![
        r.protocol.to_string(),
        r.n_nodes.to_string(),
        r.lambda.to_string(),
        r.w_min.map(|w| w.to_string()).unwrap_or_default(),
        r.seed.to_string(),
        r.replications.to_string(),
        r.total_slots.to_string(),
        r.warmup_slots.to_string(),
        r.aag.mean.to_string(),
        r.aag.std.to_string(),
        r.aaoi.mean.to_string(),
        r.n_aaoi.to_string(),
        r.throughput.mean.to_string(),
        r.complexity_per_slot.to_string(),
        r.stable.to_string(),
    ]
}

pub fn write_results<W: Write>(out: W, rows: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(record(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frame_len_pmf<W: Write>(out: W, r: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["length", "frequency"]).map_err(csv_err)?;
    for (len, freq) in &r.frame_len_pmf {
        w.write_record([len.to_string(), freq.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv` and one frame-length file per row into `dir`:
/// `frame_len_pmf.csv` for a single row, `frame_len_pmf_<i>.csv` otherwise.
pub fn write_run_dir(dir: &Path, rows: &[RunResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results(std::fs::File::create(dir.join("results.csv"))?, rows)?;
    if rows.len() == 1 {
        write_frame_len_pmf(
            std::fs::File::create(dir.join("frame_len_pmf.csv"))?,
            &rows[0],
        )?;
    } else {
        for (i, r) in rows.iter().enumerate() {
            let f = std::fs::File::create(dir.join(format!("frame_len_pmf_{i}.csv")))?;
            write_frame_len_pmf(f, r)?;
        }
    }
    Ok(())
}
