pub mod decide;
pub mod index;
pub mod label;
pub mod selfcheck;
pub mod synth;
pub mod verify;

use std::io::Write;

use gridwx_core::ingest::QcSummary;
use gridwx_core::verify::{write_reports_csv, ScoreReport};

use crate::out::OutDir;

pub fn write_qc(out: &mut OutDir, qc: &[QcSummary]) -> anyhow::Result<()> {
    out.json("qc.json", qc)
}

pub fn write_reports(out: &mut OutDir, stem: &str, reports: &[ScoreReport]) -> anyhow::Result<()> {
    out.with(&format!("{stem}.csv"), |w| Ok(write_reports_csv(w, reports)?))?;
    out.json(&format!("{stem}.json"), reports)
}

/// Issue times on the cadence grid covering `[first, last]`.
pub fn cadence_grid(
    first: gridwx_core::HourStamp,
    last: gridwx_core::HourStamp,
    cadence: u32,
) -> Vec<gridwx_core::HourStamp> {
    let c = cadence as i64;
    let start = first.epoch_hours().div_euclid(c) * c + if first.epoch_hours().rem_euclid(c) == 0 { 0 } else { c };
    (start..=last.epoch_hours())
        .step_by(cadence as usize)
        .map(gridwx_core::HourStamp::from_epoch_hours)
        .collect()
}

pub fn line(w: &mut Vec<u8>, fields: &[&str]) -> std::io::Result<()> {
    writeln!(w, "{}", fields.join(","))
}
