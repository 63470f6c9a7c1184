//! Verification metrics over aligned forecast/observation pairs.
//!
//! Continuous variables are scored with MAE and fractional skill against a
//! baseline. Icing probabilities are scored as alerts (confusion counts,
//! precision/recall/F1/CSI) and as rankings (PR curve with step-wise average
//! precision, ROC with tie-grouped trapezoids).

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::timebase::{align, window_any, window_prob, ForecastMatrix, HourStamp, ObservationSeries, WindowSpec};

/// Mean absolute error of `(forecast, observed)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Undefined("mae of empty pair set".into()));
    }
    let sum: f64 = pairs.iter().map(|(f, o)| (f - o).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

/// `1 - e_model / e_base`; positive means the model beats the baseline.
pub fn fractional_skill(e_model: f64, e_base: f64) -> Result<f64> {
    if !(e_base > 0.0) {
        return Err(Error::Undefined(format!(
            "fractional skill with baseline error {e_base}"
        )));
    }
    Ok(1.0 - e_model / e_base)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Alert when `p >= tau`.
    pub fn at_threshold(probabilities: &[f64], labels: &[bool], tau: f64) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &y) in probabilities.iter().zip(labels) {
            match (p >= tau, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    /// `None` when nothing was alerted.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there are no events.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// Harmonic mean of precision and recall, `2tp / (2tp + fp + fn)`.
    /// Zero when both are zero; `None` only with no alerts and no events.
    pub fn f1(&self) -> Option<f64> {
        let d = 2 * self.tp + self.fp + self.fn_;
        (d > 0).then(|| 2.0 * self.tp as f64 / d as f64)
    }

    /// Critical success index (threat score).
    pub fn csi(&self) -> Option<f64> {
        let d = self.tp + self.fp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// Per distinct score (descending): cumulative true and false positives.
fn tie_groups(probabilities: &[f64], labels: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<(f64, bool)> = probabilities.iter().copied().zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (i, &(s, y)) in order.iter().enumerate() {
        if y {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(i + 1).is_none_or(|next| next.0 != s);
        if last_of_group {
            groups.push((s, tp, fp));
        }
    }
    groups
}

/// Precision-recall curve (x = recall, y = precision) and step-wise average precision.
pub fn pr_curve_and_ap(probabilities: &[f64], labels: &[bool]) -> Result<(Vec<CurvePoint>, f64)> {
    let positives = labels.iter().filter(|&&y| y).count() as u64;
    if positives == 0 {
        return Err(Error::Undefined("average precision without positive labels".into()));
    }
    let mut curve = Vec::new();
    let mut ap = 0.0;
    let mut prev_tp = 0u64;
    for (s, tp, fp) in tie_groups(probabilities, labels) {
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (tp - prev_tp) as f64 / positives as f64 * precision;
        prev_tp = tp;
        curve.push(CurvePoint {
            threshold: s,
            x: tp as f64 / positives as f64,
            y: precision,
        });
    }
    Ok((curve, ap))
}

/// ROC curve (x = FPR, y = TPR) starting at the origin, and trapezoidal AUC.
///
/// The area is accumulated in integer half-units so that tied groups get
/// exactly half credit.
pub fn roc_and_auc(probabilities: &[f64], labels: &[bool]) -> Result<(Vec<CurvePoint>, f64)> {
    let positives = labels.iter().filter(|&&y| y).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Undefined("roc auc needs both classes".into()));
    }
    let mut curve = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let mut area2 = 0u64;
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for (s, tp, fp) in tie_groups(probabilities, labels) {
        area2 += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
        curve.push(CurvePoint {
            threshold: s,
            x: fp as f64 / negatives as f64,
            y: tp as f64 / positives as f64,
        });
    }
    Ok((curve, area2 as f64 / (2 * positives * negatives) as f64))
}

pub fn lift(ap: f64, base_rate: f64) -> Result<f64> {
    if !(base_rate > 0.0) {
        return Err(Error::Undefined(format!("lift with base rate {base_rate}")));
    }
    Ok(ap / base_rate)
}

/// Empirical CDF of per-station F1: one point per distinct value, `y = P(F1 <= x)`.
pub fn station_f1_cdf(f1: &[f64]) -> Result<Vec<CurvePoint>> {
    if f1.is_empty() {
        return Err(Error::Undefined("cdf of empty station set".into()));
    }
    let mut v = f1.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CurvePoint> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let y = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.x == x => last.y = y,
            _ => out.push(CurvePoint { threshold: x, x, y }),
        }
    }
    Ok(out)
}

/// Right-continuous step lookup into a CDF built by [`station_f1_cdf`].
pub fn cdf_at(cdf: &[CurvePoint], x: f64) -> f64 {
    cdf.iter().take_while(|p| p.x <= x).last().map_or(0.0, |p| p.y)
}

/// Fraction of stations whose model error is strictly below the baseline's.
pub fn fraction_beating_baseline(model: &[f64], baseline: &[f64]) -> Option<f64> {
    if model.is_empty() || model.len() != baseline.len() {
        return None;
    }
    let wins = model.iter().zip(baseline).filter(|(m, b)| m < b).count();
    Some(wins as f64 / model.len() as f64)
}

/// Filter on valid time: an hour-of-day range and/or a month set, evaluated
/// at a fixed UTC offset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice {
    pub name: String,
    /// Inclusive local-hour range; wraps past midnight when start > end.
    pub local_hours: Option<(u32, u32)>,
    pub months: Option<Vec<u32>>,
    pub utc_offset: i32,
}

impl Slice {
    pub fn all() -> Self {
        Slice {
            name: "all".into(),
            local_hours: None,
            months: None,
            utc_offset: 0,
        }
    }

    pub fn hours(name: &str, start: u32, end: u32, utc_offset: i32) -> Self {
        Slice {
            name: name.into(),
            local_hours: Some((start, end)),
            months: None,
            utc_offset,
        }
    }

    pub fn months(name: &str, months: &[u32], utc_offset: i32) -> Self {
        Slice {
            name: name.into(),
            local_hours: None,
            months: Some(months.to_vec()),
            utc_offset,
        }
    }

    /// The all-hours slice, four dayparts and four seasons.
    pub fn standard_set(utc_offset: i32) -> Vec<Slice> {
        vec![
            Slice::all(),
            Slice::hours("morning", 6, 11, utc_offset),
            Slice::hours("afternoon", 12, 17, utc_offset),
            Slice::hours("evening", 18, 23, utc_offset),
            Slice::hours("night", 0, 5, utc_offset),
            Slice::months("winter", &[12, 1, 2], utc_offset),
            Slice::months("spring", &[3, 4, 5], utc_offset),
            Slice::months("summer", &[6, 7, 8], utc_offset),
            Slice::months("fall", &[9, 10, 11], utc_offset),
        ]
    }

    pub fn contains(&self, valid: HourStamp) -> bool {
        if let Some((a, b)) = self.local_hours {
            let h = valid.local_hour(self.utc_offset);
            let inside = if a <= b { a <= h && h <= b } else { h >= a || h <= b };
            if !inside {
                return false;
            }
        }
        if let Some(months) = &self.months {
            if !months.contains(&valid.local_month(self.utc_offset)) {
                return false;
            }
        }
        true
    }
}

/// Metric evaluated per lead by [`lead_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Mae,
    AveragePrecision,
    RocAuc,
    F1 { tau: f64 },
    Csi { tau: f64 },
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::AveragePrecision => "ap",
            Metric::RocAuc => "roc_auc",
            Metric::F1 { .. } => "f1",
            Metric::Csi { .. } => "csi",
        }
    }

    pub fn evaluate(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        let probs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1 >= 0.5).collect();
        let undefined = |what: &str| Error::Undefined(what.to_string());
        match *self {
            Metric::Mae => mae(pairs),
            Metric::AveragePrecision => pr_curve_and_ap(&probs, &labels).map(|r| r.1),
            Metric::RocAuc => roc_and_auc(&probs, &labels).map(|r| r.1),
            Metric::F1 { tau } => ConfusionCounts::at_threshold(&probs, &labels, tau)
                .f1()
                .ok_or_else(|| undefined("f1 with no alerts and no events")),
            Metric::Csi { tau } => ConfusionCounts::at_threshold(&probs, &labels, tau)
                .csi()
                .ok_or_else(|| undefined("csi with no alerts and no events")),
        }
    }
}

/// Scores for one (model, site, variable, lead or window, slice) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub model_id: String,
    /// Site id, or `pooled`.
    pub site_id: String,
    pub variable: String,
    pub lead_h: Option<u32>,
    pub window_h: Option<u32>,
    pub slice: String,
    pub metrics: BTreeMap<String, f64>,
    pub n_pairs: usize,
    pub n_dropped: usize,
    /// Metrics that had no defined value on this cell.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl ScoreReport {
    pub fn new(model_id: &str, site_id: &str, variable: &str, slice: &str) -> Self {
        ScoreReport {
            model_id: model_id.into(),
            site_id: site_id.into(),
            variable: variable.into(),
            lead_h: None,
            window_h: None,
            slice: slice.into(),
            metrics: BTreeMap::new(),
            n_pairs: 0,
            n_dropped: 0,
            undefined: Vec::new(),
        }
    }

    /// Record a metric result; undefined or non-finite values are listed, not stored.
    pub fn record(&mut self, name: &str, value: Result<f64>) -> Result<()> {
        match value {
            Ok(v) if v.is_finite() => {
                self.metrics.insert(name.into(), v);
                Ok(())
            }
            Ok(_) => {
                self.undefined.push(name.into());
                Ok(())
            }
            Err(e) if e.is_undefined() => {
                self.undefined.push(name.into());
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

/// Score one metric at each lead after applying `slice` to valid times.
pub fn lead_profile(
    fc: &ForecastMatrix,
    obs: &ObservationSeries,
    metric: Metric,
    leads: &[u32],
    slice: &Slice,
) -> Result<Vec<ScoreReport>> {
    if leads.is_empty() {
        return Err(Error::Schema("lead profile needs at least one lead".into()));
    }
    let mut out = Vec::with_capacity(leads.len());
    for &lead in leads {
        let aligned = align(fc, obs, lead)?;
        let pairs: Vec<(f64, f64)> = aligned
            .pairs
            .iter()
            .filter(|p| slice.contains(p.valid))
            .map(|p| (p.forecast, p.observed))
            .collect();
        let mut r = ScoreReport::new(&fc.model_id, &fc.site_id, fc.variable.name(), &slice.name);
        r.lead_h = Some(lead);
        r.n_pairs = pairs.len();
        r.n_dropped = aligned.dropped;
        r.record(metric.name(), metric.evaluate(&pairs))?;
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowedPairs {
    pub issues: Vec<HourStamp>,
    /// `(window probability, event occurred)` per issue.
    pub pairs: Vec<(f64, bool)>,
    /// Issues skipped for incomplete forecasts or insufficient label coverage.
    pub undefined: usize,
}

/// "Any event in the next window" pairs: forecast leads `[0, len)` combined
/// with [`window_prob`], outcome from [`window_any`] over the same hours.
pub fn windowed_pairs(fc: &ForecastMatrix, labels: &ObservationSeries, spec: WindowSpec) -> Result<WindowedPairs> {
    if fc.site_id != labels.site_id || fc.variable.verified_by() != labels.variable {
        return Err(Error::Schema(format!(
            "cannot window {}/{} forecast against {}/{} labels",
            fc.site_id, fc.variable, labels.site_id, labels.variable
        )));
    }
    let mut out = WindowedPairs::default();
    for issue in fc.issues() {
        let probs = fc.lead_slice(issue, 0, spec.length_hours);
        let outcome = window_any(labels, issue, spec);
        match (probs, outcome) {
            (Some(p), Some(y)) => {
                out.issues.push(issue);
                out.pairs.push((window_prob(&p)?, y));
            }
            _ => out.undefined += 1,
        }
    }
    Ok(out)
}

pub const REPORT_CSV_HEADER: &str = "model_id,site_id,variable,lead_h,window_h,slice,metric,value,n_pairs,n_dropped";

/// Long-format report CSV: one row per metric.
pub fn write_reports_csv<W: Write>(mut w: W, reports: &[ScoreReport]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        let lead = r.lead_h.map(|x| x.to_string()).unwrap_or_default();
        let window = r.window_h.map(|x| x.to_string()).unwrap_or_default();
        for (name, value) in &r.metrics {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.model_id,
                r.site_id,
                r.variable,
                lead,
                window,
                r.slice,
                name,
                fmt_num(*value),
                r.n_pairs,
                r.n_dropped
            )?;
        }
    }
    Ok(())
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(w, "threshold,x,y")?;
    for p in curve {
        writeln!(w, "{},{},{}", fmt_num(p.threshold), fmt_num(p.x), fmt_num(p.y))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::{Sample, Variable};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
        assert_eq!(mae(&[(0.0, 1.0), (2.0, 0.0)]).unwrap(), 1.5);
        assert_eq!(mae(&[(3.5, 1.0), (4.5, 2.0)]).unwrap(), 2.5);
        assert!(mae(&[]).unwrap_err().is_undefined());
    }

    #[test]
    fn skill_examples() {
        assert_abs_diff_eq!(fractional_skill(0.8, 1.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(fractional_skill(1.3, 1.3).unwrap(), 0.0);
        assert_eq!(fractional_skill(0.0, 2.0).unwrap(), 1.0);
        assert!(fractional_skill(1.0, 0.0).unwrap_err().is_undefined());
    }

    #[test]
    fn confusion_examples() {
        let c = ConfusionCounts {
            tp: 3,
            fp: 1,
            fn_: 2,
            tn: 10,
        };
        assert_eq!(c.csi(), Some(0.5));
        let probs = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        let c = ConfusionCounts::at_threshold(&probs, &labels, 0.5);
        assert_eq!(
            (c.precision(), c.recall(), c.f1(), c.csi()),
            (Some(1.0), Some(1.0), Some(1.0), Some(1.0))
        );
        let c = ConfusionCounts::at_threshold(&probs, &labels, 0.0);
        assert_eq!(c.recall(), Some(1.0));
        let none = ConfusionCounts::at_threshold(&probs, &labels, 0.95);
        assert_eq!(none.precision(), None);
        assert_eq!(none.f1(), Some(0.0));
    }

    #[test]
    fn ap_examples() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let l = [true, false, true, false];
        let (curve, ap) = pr_curve_and_ap(&s, &l).unwrap();
        assert_abs_diff_eq!(ap, 0.833_333_333_333_333_4, epsilon = 1e-12);
        assert_eq!(curve.len(), 4);
        assert_eq!(pr_curve_and_ap(&s, &[true, true, false, false]).unwrap().1, 1.0);
        let flat = [0.4; 10];
        let base: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let (curve, ap) = pr_curve_and_ap(&flat, &base).unwrap();
        assert_abs_diff_eq!(ap, 0.3, epsilon = 1e-15);
        assert_eq!(curve.len(), 1);
        assert!(pr_curve_and_ap(&s, &[false; 4]).unwrap_err().is_undefined());
    }

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.8, 0.7, 0.6];
        assert_eq!(roc_and_auc(&s, &[true, false, true, false]).unwrap().1, 0.75);
        assert_eq!(roc_and_auc(&s, &[true, true, false, false]).unwrap().1, 1.0);
        assert_eq!(roc_and_auc(&[0.5; 4], &[true, false, true, false]).unwrap().1, 0.5);
        assert!(roc_and_auc(&s, &[true; 4]).unwrap_err().is_undefined());
        let (curve, _) = roc_and_auc(&s, &[true, false, true, false]).unwrap();
        assert_eq!((curve[0].x, curve[0].y), (0.0, 0.0));
        assert_eq!((curve.last().unwrap().x, curve.last().unwrap().y), (1.0, 1.0));
    }

    #[test]
    fn lift_examples() {
        assert_abs_diff_eq!(lift(0.5, 0.1).unwrap(), 5.0, epsilon = 1e-12);
        assert_eq!(lift(0.087, 0.087).unwrap(), 1.0);
        let l = lift(0.72, 0.087).unwrap();
        assert_abs_diff_eq!(l, 8.275_862_068_965_518, epsilon = 1e-12);
        assert_eq!(l.round(), 8.0);
        assert!(lift(0.5, 0.0).is_err());
    }

    #[test]
    fn cdf_examples() {
        let c = station_f1_cdf(&[0.4]).unwrap();
        assert_eq!(cdf_at(&c, 0.39), 0.0);
        assert_eq!(cdf_at(&c, 0.4), 1.0);
        let c = station_f1_cdf(&[0.3, 0.3]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].y, 1.0);
        let c = station_f1_cdf(&[0.6, 0.2]).unwrap();
        assert_eq!(cdf_at(&c, 0.4), 0.5);
    }

    #[test]
    fn evening_slice_hand_mapping() {
        let evening = Slice::hours("evening", 18, 23, -5);
        let selected: Vec<u32> = (0..24)
            .filter(|&h| evening.contains(HourStamp::from_epoch_hours(h as i64)))
            .collect();
        assert_eq!(selected, vec![0, 1, 2, 3, 4, 23]);
    }

    fn hourly_temp_fc(leads: &[u32]) -> ForecastMatrix {
        let cells = (0..4).flat_map(|i| {
            leads.iter().map(move |&l| {
                let issue = HourStamp::from_epoch_hours(i * 6);
                ((issue, issue.add_hours(l as i64)), 270.0 + l as f64 * 0.1)
            })
        });
        ForecastMatrix::new("m", "s", Variable::Temperature, 6, cells).unwrap()
    }

    #[test]
    fn lead_profile_cases() {
        let obs = ObservationSeries::new(
            "s",
            Variable::Temperature,
            (0..60).map(|i| (HourStamp::from_epoch_hours(i), Sample::valid(270.0))),
        )
        .unwrap();
        let fc = ForecastMatrix::new(
            "m",
            "s",
            Variable::Temperature,
            6,
            [((HourStamp::from_epoch_hours(0), HourStamp::from_epoch_hours(6)), 271.0)],
        )
        .unwrap();
        let r = lead_profile(&fc, &obs, Metric::Mae, &[6], &Slice::all()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].metrics["mae"], 1.0);
        assert_eq!(r[0].n_pairs, 1);

        let fc = hourly_temp_fc(&[0, 12, 24]);
        let r = lead_profile(&fc, &obs, Metric::Mae, &[0, 12, 24], &Slice::all()).unwrap();
        assert_eq!(r.iter().map(|x| x.lead_h.unwrap()).collect::<Vec<_>>(), vec![0, 12, 24]);
        assert_abs_diff_eq!(r[1].metrics["mae"], 1.2, epsilon = 1e-9);

        // a slice with no pairs marks the metric undefined rather than failing
        let empty = Slice::months("july", &[7], 0);
        let r = lead_profile(&fc, &obs, Metric::Mae, &[0], &empty).unwrap();
        assert!(r[0].metrics.is_empty());
        assert_eq!(r[0].undefined, vec!["mae".to_string()]);
        assert!(lead_profile(&fc, &obs, Metric::Mae, &[], &Slice::all()).is_err());
    }

    #[test]
    fn beating_baseline() {
        assert_eq!(fraction_beating_baseline(&[1.0, 2.0], &[1.5, 2.5]), Some(1.0));
        assert_eq!(fraction_beating_baseline(&[1.0, 2.0], &[1.0, 2.5]), Some(0.5));
        assert_eq!(fraction_beating_baseline(&[], &[]), None);
    }

    #[test]
    fn windowed_pairs_basic() {
        let spec = WindowSpec::new(4, 0.75).unwrap();
        let cells = (0..3).flat_map(|i| {
            (0..4).map(move |l| {
                let issue = HourStamp::from_epoch_hours(i * 4);
                ((issue, issue.add_hours(l)), 0.1)
            })
        });
        let fc = ForecastMatrix::new("m", "s", Variable::IcingProbability, 4, cells).unwrap();
        let y = ObservationSeries::new(
            "s",
            Variable::Icing,
            (0..8).map(|i| {
                (
                    HourStamp::from_epoch_hours(i),
                    Sample::valid(if i == 5 { 1.0 } else { 0.0 }),
                )
            }),
        )
        .unwrap();
        let w = windowed_pairs(&fc, &y, spec).unwrap();
        assert_eq!(w.pairs.len(), 2);
        assert!(!w.pairs[0].1 && w.pairs[1].1);
        assert_abs_diff_eq!(w.pairs[0].0, 1.0 - 0.9f64.powi(4), epsilon = 1e-15);
        assert_eq!(w.undefined, 1);
    }

    #[test]
    fn report_csv_shape() {
        let mut r = ScoreReport::new("m", "pooled", "icing_probability", "all");
        r.window_h = Some(24);
        r.record("ap", Ok(0.5)).unwrap();
        r.record("roc_auc", Err(Error::Undefined("x".into()))).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[r]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            format!("{REPORT_CSV_HEADER}\nm,pooled,icing_probability,,24,all,ap,0.5,0,0\n")
        );
    }

    proptest! {
        #[test]
        fn mae_translation(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40), c in -100.0f64..100.0) {
            let shifted: Vec<(f64, f64)> = pairs.iter().map(|(f, o)| (f + c, o + c)).collect();
            prop_assert!((mae(&pairs).unwrap() - mae(&shifted).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn skill_decreasing(e1 in 0.0f64..10.0, e2 in 0.0f64..10.0, b in 0.01f64..10.0) {
            prop_assume!(e1 < e2);
            prop_assert!(fractional_skill(e1, b).unwrap() > fractional_skill(e2, b).unwrap());
        }

        #[test]
        fn csi_is_iou(probs in prop::collection::vec(0.0f64..1.0, 1..60), seed in prop::collection::vec(any::<bool>(), 60), tau in 0.0f64..1.0) {
            let labels = &seed[..probs.len()];
            let c = ConfusionCounts::at_threshold(&probs, labels, tau);
            let alerts: Vec<bool> = probs.iter().map(|&p| p >= tau).collect();
            prop_assert_eq!(c.csi(), gridwx_oracle::alert_event_iou(&alerts, labels));
        }

        #[test]
        fn ranking_metrics_order_invariant(items in prop::collection::vec((0u8..6, any::<bool>()), 2..30), rot in 0usize..30) {
            let probs: Vec<f64> = items.iter().map(|x| x.0 as f64 / 5.0).collect();
            let labels: Vec<bool> = items.iter().map(|x| x.1).collect();
            let k = rot % probs.len();
            let mut p2 = probs.clone();
            let mut l2 = labels.clone();
            p2.rotate_left(k);
            l2.rotate_left(k);
            prop_assert_eq!(pr_curve_and_ap(&probs, &labels).ok().map(|r| r.1), pr_curve_and_ap(&p2, &l2).ok().map(|r| r.1));
            prop_assert_eq!(roc_and_auc(&probs, &labels).ok().map(|r| r.1), roc_and_auc(&p2, &l2).ok().map(|r| r.1));
            prop_assert_eq!(ConfusionCounts::at_threshold(&probs, &labels, 0.5), ConfusionCounts::at_threshold(&p2, &l2, 0.5));
        }

        #[test]
        fn ranking_matches_oracle(items in prop::collection::vec((0u8..8, any::<bool>()), 1..12)) {
            let probs: Vec<f64> = items.iter().map(|x| x.0 as f64 / 7.0).collect();
            let labels: Vec<bool> = items.iter().map(|x| x.1).collect();
            let (ap, auc) = gridwx_oracle::rank_metrics(&probs, &labels);
            prop_assert_eq!(pr_curve_and_ap(&probs, &labels).ok().map(|r| r.1), ap);
            prop_assert_eq!(roc_and_auc(&probs, &labels).ok().map(|r| r.1), auc);
        }
    }
}
