//! Strict parsing and canonical writing of the interchange files, the run
//! configuration and the catalog manifest.
//!
//! Every loader checks the header exactly, parses timestamps strictly and
//! reports what it kept and dropped in a [`QcSummary`]. Writers emit the
//! canonical form: fixed column order and numbers at 9 significant digits,
//! so a canonical file survives load-then-write byte for byte. Lines starting
//! with `#` are comments (configuration echoes) and are skipped on load.

mod catalog;
mod config;
mod series;

pub use catalog::{sha256_file, Catalog, FileEntry, FileKind, HASH_ALGORITHM};
pub use config::{load_config, parse_config, RunConfig, RunOptions};
pub use series::{
    load_counters, load_forecasts, load_labels, load_observations, load_power_curve, load_production, load_profiles,
    load_sites, write_counters, write_forecasts, write_labels, write_observations, write_power_curve, write_production,
    write_profiles, write_sites, COUNTER_HEADER, FORECAST_HEADER, LABEL_HEADER, OBSERVATION_HEADER, PRODUCTION_HEADER,
    PROFILE_HEADER, SITE_HEADER,
};

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::timebase::HourStamp;

/// Machine-readable reason a row was not kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Identical to an earlier row.
    Duplicate,
    /// Same key as an earlier row with a different value; the earlier row wins.
    Conflict,
    /// Forecast issue time not on the cadence grid.
    OffCadence,
    /// Forecast lead outside `[0, 120]` h.
    LeadOutOfRange,
    /// Profile failed validation (sanity band, non-finite geopotential).
    InvalidProfile,
    /// Pressure-level rows without a surface row for the same hour.
    MissingSurface,
    /// A physically impossible value in a file without a qc column.
    OutOfRange,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Duplicate => "duplicate",
            DropReason::Conflict => "conflict",
            DropReason::OffCadence => "off_cadence",
            DropReason::LeadOutOfRange => "lead_out_of_range",
            DropReason::InvalidProfile => "invalid_profile",
            DropReason::MissingSurface => "missing_surface",
            DropReason::OutOfRange => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRow {
    /// 1-based line number in the file.
    pub line: usize,
    pub reason: DropReason,
}

/// Per-file accounting. `kept + dropped.len() == total` always holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QcSummary {
    pub path: PathBuf,
    pub total: usize,
    pub kept: usize,
    pub dropped: Vec<DroppedRow>,
    /// Kept rows flagged `suspect`.
    pub suspect: usize,
    /// Valid fraction per `site_id/variable` series.
    pub coverage: BTreeMap<String, f64>,
}

impl QcSummary {
    fn new(path: &Path) -> Self {
        QcSummary {
            path: path.to_path_buf(),
            ..Default::default()
        }
    }

    fn keep(&mut self) {
        self.total += 1;
        self.kept += 1;
    }

    fn drop_row(&mut self, line: usize, reason: DropReason) {
        self.total += 1;
        self.dropped.push(DroppedRow { line, reason });
    }

    pub fn dropped_by_reason(&self) -> BTreeMap<DropReason, usize> {
        let mut out = BTreeMap::new();
        for d in &self.dropped {
            *out.entry(d.reason).or_insert(0) += 1;
        }
        out
    }

    pub fn is_consistent(&self) -> bool {
        self.kept + self.dropped.len() == self.total
    }
}

/// A CSV body with the header already checked, read one record at a time.
pub(crate) struct Table {
    pub path: PathBuf,
    rdr: csv::Reader<Box<dyn std::io::Read>>,
}

impl Table {
    pub(crate) fn read(path: &Path, header: &str) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            msg: e.to_string(),
        })?;
        Self::from_reader(path, header, std::io::BufReader::with_capacity(1 << 16, file))
    }

    pub(crate) fn from_reader(path: &Path, header: &str, r: impl std::io::Read + 'static) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .comment(Some(b'#'))
            .from_reader(Box::new(r) as Box<dyn std::io::Read>);
        let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if found != header {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                msg: format!("header `{found}` does not match `{header}`"),
            });
        }
        Ok(Table {
            path: path.to_path_buf(),
            rdr,
        })
    }

    /// Read the next record into `rec`; returns its 1-based line number.
    pub(crate) fn next(&mut self, rec: &mut csv::StringRecord) -> Result<Option<usize>> {
        match self.rdr.read_record(rec) {
            Ok(true) => Ok(Some(rec.position().map_or(0, |p| p.line() as usize))),
            Ok(false) => Ok(None),
            Err(e) => Err(Error::Parse {
                path: self.path.clone(),
                row: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            }),
        }
    }

    pub(crate) fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            row: line,
            msg: msg.into(),
        }
    }

    pub(crate) fn hour(&self, line: usize, s: &str) -> Result<HourStamp> {
        s.parse().map_err(|e: String| self.err(line, e))
    }

    pub(crate) fn num(&self, line: usize, col: &str, s: &str) -> Result<f64> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, format!("{col}: `{s}` is not a finite number"))),
        }
    }

    pub(crate) fn opt_num(&self, line: usize, col: &str, s: &str) -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            self.num(line, col, s).map(Some)
        }
    }

    pub(crate) fn id(&self, line: usize, col: &str, s: &str) -> Result<String> {
        if s.is_empty() || s.trim() != s {
            return Err(self.err(line, format!("{col}: empty or padded identifier `{s}`")));
        }
        Ok(s.to_string())
    }
}

pub(crate) fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}
