//! Icing analytics for power-grid assets: a reanalysis-driven rime-icing
//! index, binary labels from utility sensors, forecast verification, and
//! cost-loss de-icing dispatch with relative economic value.

// `!(x > 0.0)` is how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decide;
pub mod error;
pub mod format;
pub mod ingest;
pub mod labels;
pub mod makkonen;
pub mod synth;
pub mod timebase;
pub mod verify;

pub use decide::{CostModel, Decision, DecisionParams, EpisodeLedger, PolicyState};
pub use error::{Error, Result};
pub use ingest::{Catalog, QcSummary, RunConfig};
pub use labels::{CycleCounterSeries, PowerCurve, ProductionRecord};
pub use makkonen::{IcingProxyParams, Site, SiteKind, SiteProfile};
pub use timebase::{ForecastMatrix, HourStamp, ObservationSeries, QcFlag, Sample, Variable, WindowSpec};
pub use verify::{ConfusionCounts, CurvePoint, ScoreReport};
