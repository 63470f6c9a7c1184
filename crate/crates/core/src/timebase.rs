//! Hourly UTC time base: stamps, observation series, forecast matrices,
//! lead-time alignment and decision-window aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest lead a forecast matrix may carry.
pub const MAX_LEAD_HOURS: i64 = 120;

/// A UTC instant truncated to the hour, stored as whole hours since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourStamp(i64);

impl HourStamp {
    pub const fn from_epoch_hours(hours: i64) -> Self {
        HourStamp(hours)
    }

    pub fn from_ymdh(year: i32, month: u32, day: u32, hour: u32) -> Option<Self> {
        let days = days_from_civil(year as i64, month, day);
        if hour > 23 || civil_from_days(days) != (year as i64, month, day) {
            return None;
        }
        Some(HourStamp(days * 24 + hour as i64))
    }

    pub const fn epoch_hours(self) -> i64 {
        self.0
    }

    pub const fn add_hours(self, h: i64) -> Self {
        HourStamp(self.0 + h)
    }

    /// Signed hour difference `self - earlier`.
    pub const fn hours_since(self, earlier: HourStamp) -> i64 {
        self.0 - earlier.0
    }

    /// `(year, month, day)` in the proleptic Gregorian calendar.
    pub fn date(self) -> (i64, u32, u32) {
        civil_from_days(self.0.div_euclid(24))
    }

    pub fn hour_of_day(self) -> u32 {
        self.0.rem_euclid(24) as u32
    }

    /// Hour of day after applying a fixed offset from UTC (e.g. -5).
    pub fn local_hour(self, utc_offset_hours: i32) -> u32 {
        (self.0 + utc_offset_hours as i64).rem_euclid(24) as u32
    }

    /// Calendar month, 1-12.
    pub fn month(self) -> u32 {
        self.date().1
    }

    /// Month after applying a fixed UTC offset.
    pub fn local_month(self, utc_offset_hours: i32) -> u32 {
        self.add_hours(utc_offset_hours as i64).month()
    }

    pub fn is_on_cadence(self, cadence_hours: u32) -> bool {
        cadence_hours > 0 && self.0.rem_euclid(cadence_hours as i64) == 0
    }
}

/// Days since 1970-01-01 (Hinnant's `days_from_civil`).
const fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m as i64 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

const fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + if m <= 2 { 1 } else { 0 };
    (y, m, d)
}

impl fmt::Display for HourStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d) = self.date();
        write!(f, "{y:04}-{m:02}-{d:02}T{:02}:00:00Z", self.hour_of_day())
    }
}

impl FromStr for HourStamp {
    type Err = String;

    /// Accepts exactly `YYYY-MM-DDTHH:00:00Z`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("`{s}` is not an hourly ISO 8601 UTC stamp");
        let b = s.as_bytes();
        if b.len() != 20 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' || &b[13..] != b":00:00Z" {
            return Err(bad());
        }
        let num = |r: std::ops::Range<usize>| {
            b[r].iter()
                .try_fold(0u32, |acc, &c| c.is_ascii_digit().then(|| acc * 10 + (c - b'0') as u32))
        };
        match (num(0..4), num(5..7), num(8..10), num(11..13)) {
            (Some(y), Some(m), Some(d), Some(h)) => {
                HourStamp::from_ymdh(y as i32, m, d, h).ok_or_else(|| format!("`{s}`: no such date or hour"))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcFlag {
    Valid,
    Missing,
    Suspect,
}

impl QcFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            QcFlag::Valid => "valid",
            QcFlag::Missing => "missing",
            QcFlag::Suspect => "suspect",
        }
    }
}

impl FromStr for QcFlag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "valid" => Ok(QcFlag::Valid),
            "missing" => Ok(QcFlag::Missing),
            "suspect" => Ok(QcFlag::Suspect),
            other => Err(format!("unknown qc flag `{other}`")),
        }
    }
}

/// Observed or forecast quantity, each with fixed units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    /// Kelvin.
    Temperature,
    /// mm/h.
    Precipitation,
    /// m/s.
    WindSpeed,
    /// Hourly icing probability in [0, 1].
    IcingProbability,
    /// Binary icing indicator.
    Icing,
    /// Icing proxy rate, g m^-2 s^-1.
    IcingRate,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::Temperature,
        Variable::Precipitation,
        Variable::WindSpeed,
        Variable::IcingProbability,
        Variable::Icing,
        Variable::IcingRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Temperature => "temperature",
            Variable::Precipitation => "precipitation",
            Variable::WindSpeed => "wind_speed",
            Variable::IcingProbability => "icing_probability",
            Variable::Icing => "icing",
            Variable::IcingRate => "icing_rate",
        }
    }

    /// Default physical sanity band `[lo, hi]`.
    pub fn sanity_band(self) -> (f64, f64) {
        match self {
            Variable::Temperature => (180.0, 340.0),
            Variable::Precipitation => (0.0, 200.0),
            Variable::WindSpeed => (0.0, 120.0),
            Variable::IcingProbability | Variable::Icing => (0.0, 1.0),
            Variable::IcingRate => (0.0, f64::INFINITY),
        }
    }

    pub fn is_binary(self) -> bool {
        self == Variable::Icing
    }

    /// Variable that verifies a forecast of `self`: probabilities verify against binary events.
    pub fn verified_by(self) -> Variable {
        match self {
            Variable::IcingProbability => Variable::Icing,
            v => v,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variable `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub value: f64,
    pub qc: QcFlag,
}

impl Sample {
    pub fn valid(value: f64) -> Self {
        Sample {
            value,
            qc: QcFlag::Valid,
        }
    }
}

/// Hourly observations of one variable at one site.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub site_id: String,
    pub variable: Variable,
    samples: BTreeMap<HourStamp, Sample>,
}

impl ObservationSeries {
    /// Build from samples that must already be strictly increasing in time.
    pub fn new(
        site_id: impl Into<String>,
        variable: Variable,
        samples: impl IntoIterator<Item = (HourStamp, Sample)>,
    ) -> Result<Self> {
        let site_id = site_id.into();
        let mut map = BTreeMap::new();
        let mut last: Option<HourStamp> = None;
        for (h, s) in samples {
            if let Some(prev) = last {
                if h <= prev {
                    return Err(Error::Schema(format!(
                        "{site_id}/{variable}: timestamps not strictly increasing at {h}"
                    )));
                }
            }
            last = Some(h);
            map.insert(h, s);
        }
        Ok(ObservationSeries {
            site_id,
            variable,
            samples: map,
        })
    }

    pub fn get(&self, hour: HourStamp) -> Option<&Sample> {
        self.samples.get(&hour)
    }

    pub fn iter(&self) -> impl Iterator<Item = (HourStamp, &Sample)> {
        self.samples.iter().map(|(h, s)| (*h, s))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_hour(&self) -> Option<HourStamp> {
        self.samples.keys().next().copied()
    }

    pub fn last_hour(&self) -> Option<HourStamp> {
        self.samples.keys().next_back().copied()
    }

    /// Valid values in `[start, start + len)`, or `None` when fewer than
    /// `coverage_min * len` hours are valid.
    pub fn window_values(&self, start: HourStamp, spec: WindowSpec) -> Option<Vec<f64>> {
        let end = start.add_hours(spec.length_hours as i64);
        let values: Vec<f64> = self
            .samples
            .range(start..end)
            .filter(|(_, s)| s.qc == QcFlag::Valid)
            .map(|(_, s)| s.value)
            .collect();
        let coverage = values.len() as f64 / spec.length_hours as f64;
        (coverage >= spec.coverage_min).then_some(values)
    }

    /// Fraction of valid samples among all stored hours.
    pub fn valid_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let valid = self.samples.values().filter(|s| s.qc == QcFlag::Valid).count();
        valid as f64 / self.samples.len() as f64
    }
}

/// Forecast values for one model, site and variable keyed by (issue, valid).
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMatrix {
    pub model_id: String,
    pub site_id: String,
    pub variable: Variable,
    pub cadence_hours: u32,
    cells: BTreeMap<(HourStamp, HourStamp), f64>,
}

impl ForecastMatrix {
    pub fn new(
        model_id: impl Into<String>,
        site_id: impl Into<String>,
        variable: Variable,
        cadence_hours: u32,
        cells: impl IntoIterator<Item = ((HourStamp, HourStamp), f64)>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        let site_id = site_id.into();
        if cadence_hours == 0 {
            return Err(Error::Schema("cadence must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for ((issue, valid), v) in cells {
            let lead = valid.hours_since(issue);
            if !(0..=MAX_LEAD_HOURS).contains(&lead) {
                return Err(Error::Schema(format!(
                    "{model_id}/{site_id}: lead {lead} h at issue {issue} outside [0, {MAX_LEAD_HOURS}]"
                )));
            }
            if !issue.is_on_cadence(cadence_hours) {
                return Err(Error::Schema(format!(
                    "{model_id}/{site_id}: issue {issue} is off the {cadence_hours} h cadence grid"
                )));
            }
            if map.insert((issue, valid), v).is_some() {
                return Err(Error::Schema(format!(
                    "{model_id}/{site_id}: duplicate cell ({issue}, {valid})"
                )));
            }
        }
        Ok(ForecastMatrix {
            model_id,
            site_id,
            variable,
            cadence_hours,
            cells: map,
        })
    }

    pub fn get(&self, issue: HourStamp, valid: HourStamp) -> Option<f64> {
        self.cells.get(&(issue, valid)).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = (HourStamp, HourStamp, f64)> + '_ {
        self.cells.iter().map(|((i, v), x)| (*i, *v, *x))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Distinct issue times in ascending order.
    pub fn issues(&self) -> Vec<HourStamp> {
        let mut out: Vec<HourStamp> = Vec::new();
        for (issue, _) in self.cells.keys() {
            if out.last() != Some(issue) {
                out.push(*issue);
            }
        }
        out
    }

    /// Values for leads `lead_start..lead_end` from one issue, or `None` if any is absent.
    pub fn lead_slice(&self, issue: HourStamp, lead_start: u32, lead_end: u32) -> Option<Vec<f64>> {
        (lead_start..lead_end)
            .map(|h| self.get(issue, issue.add_hours(h as i64)))
            .collect()
    }
}

/// Decision window: `[t, t + length_hours)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length_hours: u32,
    pub coverage_min: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            length_hours: 24,
            coverage_min: 0.75,
        }
    }
}

impl WindowSpec {
    pub fn new(length_hours: u32, coverage_min: f64) -> Result<Self> {
        if length_hours == 0 {
            return Err(Error::domain("length_hours", 0.0, ">= 1"));
        }
        if !(coverage_min > 0.0 && coverage_min <= 1.0) {
            return Err(Error::domain("coverage_min", coverage_min, "(0, 1]"));
        }
        Ok(WindowSpec {
            length_hours,
            coverage_min,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub issue: HourStamp,
    pub valid: HourStamp,
    pub forecast: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    pub pairs: Vec<AlignedPair>,
    /// Forecast cells at this lead whose observation was missing, suspect or absent.
    pub dropped: usize,
}

/// Pair every forecast at `lead` hours with the observation at its valid time.
pub fn align(fc: &ForecastMatrix, obs: &ObservationSeries, lead: u32) -> Result<Alignment> {
    if fc.site_id != obs.site_id || fc.variable.verified_by() != obs.variable {
        return Err(Error::Schema(format!(
            "cannot align {}/{} forecast with {}/{} observations",
            fc.site_id, fc.variable, obs.site_id, obs.variable
        )));
    }
    let mut out = Alignment::default();
    for (issue, valid, value) in fc.cells() {
        if valid.hours_since(issue) != lead as i64 {
            continue;
        }
        match obs.get(valid) {
            Some(s) if s.qc == QcFlag::Valid => out.pairs.push(AlignedPair {
                issue,
                valid,
                forecast: value,
                observed: s.value,
            }),
            _ => out.dropped += 1,
        }
    }
    Ok(out)
}

/// Whether any hour in `[t, t + len)` is an event; `None` on insufficient coverage.
pub fn window_any(y: &ObservationSeries, t: HourStamp, spec: WindowSpec) -> Option<bool> {
    y.window_values(t, spec).map(|vals| vals.iter().any(|&v| v >= 0.5))
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(name, p, "[0, 1]"))
    }
}

/// Probability of at least one event across independent hourly probabilities.
pub fn window_prob(p: &[f64]) -> Result<f64> {
    // union update q <- q + p (1 - q); exact when a single p is nonzero
    let mut q: f64 = 0.0;
    for &x in p {
        check_probability("p", x)?;
        q += x * (1.0 - q);
    }
    Ok(q.min(1.0))
}

/// Poisson approximation `1 - exp(-H * mean_p)` of the window probability.
pub fn window_prob_poisson(p_bar: f64, hours: u32) -> Result<f64> {
    check_probability("p_bar", p_bar)?;
    if hours == 0 {
        return Err(Error::domain("hours", 0.0, ">= 1"));
    }
    Ok(-(-(hours as f64) * p_bar).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn h(n: i64) -> HourStamp {
        HourStamp::from_epoch_hours(n)
    }

    proptest! {
        #[test]
        fn calendar_matches_chrono(n in -200_000i64..2_000_000) {
            use chrono::{DateTime, Datelike, Timelike};
            let dt = DateTime::from_timestamp(n * 3600, 0).unwrap();
            let stamp = h(n);
            prop_assert_eq!(stamp.to_string(), dt.format("%Y-%m-%dT%H:00:00Z").to_string());
            prop_assert_eq!(stamp.month(), dt.month());
            prop_assert_eq!(stamp.hour_of_day(), dt.hour());
            prop_assert_eq!(stamp.to_string().parse::<HourStamp>(), Ok(stamp));
        }
    }

    #[test]
    fn rejects_impossible_dates() {
        for s in [
            "2023-02-29T00:00:00Z",
            "2024-13-01T00:00:00Z",
            "2024-01-01T24:00:00Z",
            "2024-1-01T00:00:00Z",
        ] {
            assert!(s.parse::<HourStamp>().is_err(), "{s}");
        }
        assert!("2024-02-29T23:00:00Z".parse::<HourStamp>().is_ok());
    }

    fn binary(vals: &[Option<f64>]) -> ObservationSeries {
        ObservationSeries::new(
            "s1",
            Variable::Icing,
            vals.iter().enumerate().map(|(i, v)| {
                let s = match v {
                    Some(x) => Sample::valid(*x),
                    None => Sample {
                        value: 0.0,
                        qc: QcFlag::Missing,
                    },
                };
                (h(i as i64), s)
            }),
        )
        .unwrap()
    }

    #[test]
    fn stamp_roundtrip_and_strictness() {
        let s: HourStamp = "2024-01-15T06:00:00Z".parse().unwrap();
        assert_eq!(s.to_string(), "2024-01-15T06:00:00Z");
        assert_eq!(s.hour_of_day(), 6);
        assert_eq!(s.month(), 1);
        assert!(s.is_on_cadence(6));
        assert!("2024-01-15T06:30:00Z".parse::<HourStamp>().is_err());
        assert!("2024-01-15 06:00:00".parse::<HourStamp>().is_err());
        assert!("2024-01-15T06:00:00+00:00".parse::<HourStamp>().is_err());
        let later = HourStamp::from_ymdh(2024, 1, 16, 6).unwrap();
        assert_eq!(later.hours_since(s), 24);
    }

    #[test]
    fn series_rejects_unsorted() {
        let r = ObservationSeries::new(
            "a",
            Variable::Temperature,
            [(h(2), Sample::valid(1.0)), (h(1), Sample::valid(1.0))],
        );
        assert!(r.is_err());
    }

    #[test]
    fn forecast_matrix_invariants() {
        let ok = ForecastMatrix::new("m", "s", Variable::Temperature, 6, [((h(6), h(12)), 1.0)]);
        assert!(ok.is_ok());
        let off_grid = ForecastMatrix::new("m", "s", Variable::Temperature, 6, [((h(5), h(6)), 1.0)]);
        assert!(off_grid.is_err());
        let negative = ForecastMatrix::new("m", "s", Variable::Temperature, 6, [((h(6), h(5)), 1.0)]);
        assert!(negative.is_err());
        let too_long = ForecastMatrix::new("m", "s", Variable::Temperature, 6, [((h(6), h(127)), 1.0)]);
        assert!(too_long.is_err());
    }

    fn temp_fc(cells: Vec<((HourStamp, HourStamp), f64)>) -> ForecastMatrix {
        ForecastMatrix::new("m", "s", Variable::Temperature, 6, cells).unwrap()
    }

    #[test]
    fn align_two_leads() {
        let fc = temp_fc(vec![
            ((h(0), h(6)), 270.0),
            ((h(0), h(12)), 271.0),
            ((h(6), h(12)), 272.0),
        ]);
        let obs = ObservationSeries::new(
            "s",
            Variable::Temperature,
            (0..24).map(|i| (h(i), Sample::valid(260.0 + i as f64))),
        )
        .unwrap();
        let a = align(&fc, &obs, 6).unwrap();
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(a.pairs[0].issue, h(0));
        assert_eq!(a.pairs[1].observed, 272.0);
        assert_eq!(a.dropped, 0);
    }

    #[test]
    fn align_drops_missing() {
        let fc = temp_fc(vec![((h(0), h(6)), 270.0), ((h(6), h(12)), 272.0)]);
        let obs = ObservationSeries::new(
            "s",
            Variable::Temperature,
            [
                (
                    h(6),
                    Sample {
                        value: 0.0,
                        qc: QcFlag::Missing,
                    },
                ),
                (h(12), Sample::valid(270.0)),
            ],
        )
        .unwrap();
        let a = align(&fc, &obs, 6).unwrap();
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn align_empty_intersection_and_mismatch() {
        let fc = temp_fc(vec![((h(0), h(6)), 270.0)]);
        let obs = ObservationSeries::new("s", Variable::Temperature, [(h(1000), Sample::valid(1.0))]).unwrap();
        assert!(align(&fc, &obs, 12).unwrap().pairs.is_empty());
        let other = ObservationSeries::new("t", Variable::Temperature, []).unwrap();
        assert!(matches!(align(&fc, &other, 6), Err(Error::Schema(_))));
    }

    #[test]
    fn window_any_cases() {
        let spec4 = WindowSpec::new(4, 0.75).unwrap();
        let y = binary(&[Some(0.0), Some(0.0), Some(1.0), Some(0.0)]);
        assert_eq!(window_any(&y, h(0), spec4), Some(true));
        let zeros = binary(&[Some(0.0); 24]);
        assert_eq!(window_any(&zeros, h(0), WindowSpec::default()), Some(false));
        // 16 of 24 present: 0.667 < 0.75
        let mut partial = vec![Some(0.0); 16];
        partial.extend(vec![None; 8]);
        assert_eq!(window_any(&binary(&partial), h(0), WindowSpec::default()), None);
        // half-open: hour t+len is outside
        let y = binary(&[Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(1.0)]);
        assert_eq!(window_any(&y, h(0), spec4), Some(false));
    }

    #[test]
    fn window_prob_examples() {
        assert_abs_diff_eq!(window_prob(&[0.5, 0.5]).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(window_prob(&[0.1, 0.2, 0.3]).unwrap(), 0.496, epsilon = 1e-12);
        assert_eq!(window_prob(&[0.0; 24]).unwrap(), 0.0);
        assert_eq!(window_prob(&[]).unwrap(), 0.0);
        assert!(window_prob(&[0.2, 1.5]).is_err());
        assert!(window_prob(&[-0.1]).is_err());
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(window_prob_poisson(0.0, 24).unwrap(), 0.0);
        assert_abs_diff_eq!(window_prob_poisson(0.009734, 24).unwrap(), 0.20833, epsilon = 1e-5);
        assert_abs_diff_eq!(
            window_prob_poisson(1.0, 1).unwrap(),
            0.632_120_558_828_557_7,
            epsilon = 1e-12
        );
        assert!(window_prob_poisson(1.1, 3).is_err());
    }

    #[test]
    fn evening_local_hours() {
        // 23:00 UTC is 18:00 at UTC-5
        assert_eq!(h(23).local_hour(-5), 18);
        assert_eq!(h(4).local_hour(-5), 23);
    }

    proptest! {
        #[test]
        fn window_prob_bounded_and_monotone(p in prop::collection::vec(0.0f64..=1.0, 0..48), i in 0usize..48, bump in 0.0f64..1.0) {
            let q = window_prob(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
            if !p.is_empty() {
                let i = i % p.len();
                let mut p2 = p.clone();
                p2[i] = (p2[i] + bump).min(1.0);
                prop_assert!(window_prob(&p2).unwrap() >= q - 1e-15);
            }
        }

        #[test]
        fn window_prob_single_nonzero(n in 1usize..48, i in 0usize..48, x in 0.0f64..=1.0) {
            let mut p = vec![0.0; n];
            p[i % n] = x;
            prop_assert_eq!(window_prob(&p).unwrap(), x);
        }

        #[test]
        fn window_prob_concatenation(a in prop::collection::vec(0.0f64..=1.0, 0..24), b in prop::collection::vec(0.0f64..=1.0, 0..24)) {
            let qa = window_prob(&a).unwrap();
            let qb = window_prob(&b).unwrap();
            let ab: Vec<f64> = a.iter().chain(&b).copied().collect();
            let q = window_prob(&ab).unwrap();
            prop_assert!((q - (1.0 - (1.0 - qa) * (1.0 - qb))).abs() <= 1e-12);
        }

        #[test]
        fn poisson_second_order(p in 0.0f64..=0.01, n in 1u32..=48) {
            let v = vec![p; n as usize];
            let exact = window_prob(&v).unwrap();
            let approx = window_prob_poisson(p, n).unwrap();
            prop_assert!((exact - approx).abs() <= n as f64 * p * p + 1e-15);
        }

        #[test]
        fn align_order_invariant(seed in 0u64..1000) {
            let mut cells: Vec<((HourStamp, HourStamp), f64)> = (0..8)
                .flat_map(|i| (0..3).map(move |l| ((h(i * 6), h(i * 6 + l * 6)), (i * 10 + l) as f64)))
                .collect();
            let obs = ObservationSeries::new("s", Variable::Temperature, (0..80).map(|i| (h(i), Sample::valid(i as f64)))).unwrap();
            let base = align(&temp_fc(cells.clone()), &obs, 6).unwrap();
            // deterministic shuffle
            let n = cells.len();
            for k in 0..n {
                let j = ((seed as usize).wrapping_mul(31).wrapping_add(k * 17)) % n;
                cells.swap(k, j);
            }
            prop_assert_eq!(align(&temp_fc(cells), &obs, 6).unwrap(), base);
        }
    }
}
