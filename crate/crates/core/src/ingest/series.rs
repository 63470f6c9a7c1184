use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{csv_writer, DropReason, QcSummary, Table};
use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::labels::{CycleCounterSeries, PowerCurve, ProductionRecord};
use crate::makkonen::{PressureLevel, Site, SiteKind, SiteProfile};
use crate::timebase::{ForecastMatrix, HourStamp, ObservationSeries, QcFlag, Sample, Variable, MAX_LEAD_HOURS};

pub const SITE_HEADER: &str = "site_id,lat,lon,elevation_asl_m,sensor_height_agl_m,kind,helicopter_access";
pub const OBSERVATION_HEADER: &str = "site_id,variable,hour_utc,value";
pub const FORECAST_HEADER: &str = "model_id,site_id,variable,issue_utc,valid_utc,value";
pub const LABEL_HEADER: &str = "site_id,hour_utc,icing,qc";
pub const PROFILE_HEADER: &str =
    "site_id,hour_utc,p_hpa,z_geopot,clwc_kg_per_kg,t2m_k,d2m_k,u10,v10,u100,v100,sp_pa,z_sfc_geopot";
pub const COUNTER_HEADER: &str = "site_id,hour_utc,cycle_count";
pub const PRODUCTION_HEADER: &str = "farm_id,hour_utc,observed_kw,hub_wind_ms,hub_temp_k";
const POWER_CURVE_HEADER: &str = "wind_ms,power_kw";

/// Series keyed by an identity tuple, in order of first appearance.
type SeriesKey = (String, Variable);
/// model, site, variable
type MatrixKey = (String, String, Variable);

struct Grouped<K, V> {
    index: HashMap<K, usize>,
    groups: Vec<(K, Vec<V>)>,
}

impl<K: std::hash::Hash + Eq + Clone, V> Grouped<K, V> {
    fn new() -> Self {
        Grouped {
            index: HashMap::new(),
            groups: Vec::new(),
        }
    }

    fn position(&mut self, key: &K) -> usize {
        match self.index.get(key) {
            Some(&i) => i,
            None => {
                self.groups.push((key.clone(), Vec::new()));
                self.index.insert(key.clone(), self.groups.len() - 1);
                self.groups.len() - 1
            }
        }
    }

    fn slot(&mut self, key: &K) -> &mut Vec<V> {
        let i = self.position(key);
        &mut self.groups[i].1
    }
}

/// Outcome of appending a timestamped row to a series that must be sorted.
enum Append {
    New,
    Duplicate,
    Conflict,
}

fn append_sorted<T: PartialEq>(
    t: &Table,
    line: usize,
    series: &mut Vec<(HourStamp, T)>,
    hour: HourStamp,
    value: T,
) -> Result<Append> {
    match series.last() {
        Some((last, _)) if hour < *last => Err(t.err(line, format!("time goes backwards: {hour} after {last}"))),
        Some((last, v)) if hour == *last => Ok(if *v == value {
            Append::Duplicate
        } else {
            Append::Conflict
        }),
        _ => {
            series.push((hour, value));
            Ok(Append::New)
        }
    }
}

fn tally(qc: &mut QcSummary, line: usize, a: Append) {
    match a {
        Append::New => qc.keep(),
        Append::Duplicate => qc.drop_row(line, DropReason::Duplicate),
        Append::Conflict => qc.drop_row(line, DropReason::Conflict),
    }
}

fn parse_bool(t: &Table, line: usize, col: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(t.err(line, format!("{col}: `{s}` is not a boolean"))),
    }
}

pub fn load_sites(path: &Path) -> Result<Vec<Site>> {
    let mut t = Table::read(path, SITE_HEADER)?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let site_id = t.id(line, "site_id", &r[0])?;
        if let Some(first) = seen.get(&site_id) {
            return Err(t.err(
                line,
                format!("duplicate site_id `{site_id}` (first defined on line {first})"),
            ));
        }
        seen.insert(site_id.clone(), line);
        let kind: SiteKind = r[5].parse().map_err(|e: String| t.err(line, e))?;
        let height = t.opt_num(line, "sensor_height_agl_m", &r[4])?;
        let site = Site {
            site_id,
            lat: t.num(line, "lat", &r[1])?,
            lon: t.num(line, "lon", &r[2])?,
            elevation_asl: t.num(line, "elevation_asl_m", &r[3])?,
            sensor_height_agl: height.unwrap_or_else(|| kind.default_height_agl()),
            kind,
            helicopter_access: parse_bool(&t, line, "helicopter_access", &r[6])?,
            height_defaulted: height.is_none(),
        };
        site.validate().map_err(|e| t.err(line, e.to_string()))?;
        out.push(site);
    }
    Ok(out)
}

pub fn write_sites<W: Write>(w: W, sites: &[Site]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(SITE_HEADER.split(','))?;
    for s in sites {
        w.write_record([
            s.site_id.clone(),
            fmt_num(s.lat),
            fmt_num(s.lon),
            fmt_num(s.elevation_asl),
            fmt_num(s.sensor_height_agl),
            s.kind.as_str().to_string(),
            s.helicopter_access.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn finish_series(
    qc: &mut QcSummary,
    groups: Vec<(SeriesKey, Vec<(HourStamp, Sample)>)>,
) -> Result<Vec<ObservationSeries>> {
    groups
        .into_iter()
        .map(|((site, var), samples)| {
            let s = ObservationSeries::new(site, var, samples)?;
            qc.coverage
                .insert(format!("{}/{}", s.site_id, s.variable), s.valid_fraction());
            Ok(s)
        })
        .collect()
}

/// Hourly observations; an empty value is `missing`, a value outside the
/// variable's sanity band is kept as `suspect`.
pub fn load_observations(path: &Path) -> Result<(Vec<ObservationSeries>, QcSummary)> {
    let mut t = Table::read(path, OBSERVATION_HEADER)?;
    let mut qc = QcSummary::new(path);
    let mut g: Grouped<(String, Variable), (HourStamp, Sample)> = Grouped::new();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let site = t.id(line, "site_id", &r[0])?;
        let var: Variable = r[1].parse().map_err(|e: String| t.err(line, e))?;
        let hour = t.hour(line, &r[2])?;
        let sample = match t.opt_num(line, "value", &r[3])? {
            None => Sample {
                value: 0.0,
                qc: QcFlag::Missing,
            },
            Some(v) => {
                let (lo, hi) = var.sanity_band();
                Sample {
                    value: v,
                    qc: if (lo..=hi).contains(&v) {
                        QcFlag::Valid
                    } else {
                        QcFlag::Suspect
                    },
                }
            }
        };
        let a = append_sorted(&t, line, g.slot(&(site, var)), hour, sample)?;
        if matches!(a, Append::New) && sample.qc == QcFlag::Suspect {
            qc.suspect += 1;
        }
        tally(&mut qc, line, a);
    }
    let series = finish_series(&mut qc, g.groups)?;
    Ok((series, qc))
}

pub fn write_observations<W: Write>(w: W, series: &[ObservationSeries]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(OBSERVATION_HEADER.split(','))?;
    for s in series {
        for (h, x) in s.iter() {
            let v = if x.qc == QcFlag::Missing {
                String::new()
            } else {
                fmt_num(x.value)
            };
            w.write_record([s.site_id.as_str(), s.variable.name(), &h.to_string(), &v])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Forecast matrices keyed by (model, site, variable). Rows off the cadence
/// grid, outside the lead range or outside the variable's band are dropped.
pub fn load_forecasts(path: &Path, cadence_hours: u32) -> Result<(Vec<ForecastMatrix>, QcSummary)> {
    let mut t = Table::read(path, FORECAST_HEADER)?;
    let mut qc = QcSummary::new(path);
    let mut g: Grouped<MatrixKey, ((HourStamp, HourStamp), f64)> = Grouped::new();
    let mut current: Option<usize> = None;
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        // Rows of one matrix are usually contiguous; skip the lookup while the key repeats.
        let gi = match current {
            Some(i)
                if {
                    let k = &g.groups[i].0;
                    k.0 == r[0] && k.1 == r[1] && k.2.name() == &r[2]
                } =>
            {
                i
            }
            _ => {
                let model = t.id(line, "model_id", &r[0])?;
                let site = t.id(line, "site_id", &r[1])?;
                let var: Variable = r[2].parse().map_err(|e: String| t.err(line, e))?;
                let i = g.position(&(model, site, var));
                current = Some(i);
                i
            }
        };
        let issue = t.hour(line, &r[3])?;
        let valid = t.hour(line, &r[4])?;
        let value = t.num(line, "value", &r[5])?;
        let var = g.groups[gi].0 .2;
        let cells = &mut g.groups[gi].1;
        let key = (issue, valid);
        match cells.last() {
            Some((last, _)) if key < *last => {
                return Err(t.err(line, format!("rows not sorted by (issue, valid) at ({issue}, {valid})")));
            }
            Some((last, v)) if key == *last => {
                qc.drop_row(
                    line,
                    if *v == value {
                        DropReason::Duplicate
                    } else {
                        DropReason::Conflict
                    },
                );
                continue;
            }
            _ => {}
        }
        let lead = valid.hours_since(issue);
        let (lo, hi) = var.sanity_band();
        if !(0..=MAX_LEAD_HOURS).contains(&lead) {
            qc.drop_row(line, DropReason::LeadOutOfRange);
        } else if !issue.is_on_cadence(cadence_hours) {
            qc.drop_row(line, DropReason::OffCadence);
        } else if !(lo..=hi).contains(&value) {
            qc.drop_row(line, DropReason::OutOfRange);
        } else {
            cells.push((key, value));
            qc.keep();
        }
    }
    let out = g
        .groups
        .into_iter()
        .map(|((m, s, v), cells)| ForecastMatrix::new(m, s, v, cadence_hours, cells))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, qc))
}

pub fn write_forecasts<W: Write>(w: W, matrices: &[ForecastMatrix]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(FORECAST_HEADER.split(','))?;
    for m in matrices {
        for (issue, valid, v) in m.cells() {
            w.write_record([
                m.model_id.as_str(),
                m.site_id.as_str(),
                m.variable.name(),
                &issue.to_string(),
                &valid.to_string(),
                &fmt_num(v),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Binary label files as written by the labelers.
pub fn load_labels(path: &Path) -> Result<(Vec<ObservationSeries>, QcSummary)> {
    let mut t = Table::read(path, LABEL_HEADER)?;
    let mut qc = QcSummary::new(path);
    let mut g: Grouped<(String, Variable), (HourStamp, Sample)> = Grouped::new();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let site = t.id(line, "site_id", &r[0])?;
        let hour = t.hour(line, &r[1])?;
        let flag: QcFlag = r[3].parse().map_err(|e: String| t.err(line, e))?;
        let value = match (&r[2], flag) {
            ("", QcFlag::Missing) => 0.0,
            ("0", _) => 0.0,
            ("1", _) => 1.0,
            (other, _) => return Err(t.err(line, format!("icing: `{other}` is not 0, 1 or empty-with-missing"))),
        };
        let sample = Sample { value, qc: flag };
        let a = append_sorted(&t, line, g.slot(&(site, Variable::Icing)), hour, sample)?;
        if matches!(a, Append::New) && flag == QcFlag::Suspect {
            qc.suspect += 1;
        }
        tally(&mut qc, line, a);
    }
    let series = finish_series(&mut qc, g.groups)?;
    Ok((series, qc))
}

pub fn write_labels<W: Write>(w: W, series: &[ObservationSeries]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(LABEL_HEADER.split(','))?;
    for s in series {
        for (h, x) in s.iter() {
            let v = match x.qc {
                QcFlag::Missing => "",
                _ if x.value >= 0.5 => "1",
                _ => "0",
            };
            w.write_record([s.site_id.as_str(), &h.to_string(), v, x.qc.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, PartialEq)]
struct Surface {
    t2m: f64,
    d2m: f64,
    u10: f64,
    v10: f64,
    u100: f64,
    v100: f64,
    sp: f64,
    z_sfc: f64,
}

#[derive(Default)]
struct PartialProfile {
    surface: Option<Surface>,
    levels: Vec<PressureLevel>,
    lines: Vec<usize>,
}

/// One profile per (site, hour): a surface row (empty `p_hpa`) plus one row
/// per pressure level. Profiles that fail validation are dropped whole.
pub fn load_profiles(path: &Path) -> Result<(Vec<SiteProfile>, QcSummary)> {
    let mut t = Table::read(path, PROFILE_HEADER)?;
    let mut qc = QcSummary::new(path);
    let mut g: Grouped<String, (HourStamp, PartialProfile)> = Grouped::new();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let site = t.id(line, "site_id", &r[0])?;
        let hour = t.hour(line, &r[1])?;
        let series = g.slot(&site);
        match series.last() {
            Some((last, _)) if hour < *last => {
                return Err(t.err(line, format!("time goes backwards: {hour} after {last}")));
            }
            Some((last, _)) if hour == *last => {}
            _ => series.push((hour, PartialProfile::default())),
        }
        let p = &mut series.last_mut().expect("pushed above").1;
        if r[2].is_empty() {
            if !(r[3].is_empty() && r[4].is_empty()) {
                return Err(t.err(line, "surface row must leave z_geopot and clwc_kg_per_kg empty"));
            }
            let f = |i: usize, c: &str| t.num(line, c, &r[i]);
            let s = Surface {
                t2m: f(5, "t2m_k")?,
                d2m: f(6, "d2m_k")?,
                u10: f(7, "u10")?,
                v10: f(8, "v10")?,
                u100: f(9, "u100")?,
                v100: f(10, "v100")?,
                sp: f(11, "sp_pa")?,
                z_sfc: f(12, "z_sfc_geopot")?,
            };
            match &p.surface {
                None => {
                    p.surface = Some(s);
                    p.lines.push(line);
                }
                Some(prev) if *prev == s => qc.drop_row(line, DropReason::Duplicate),
                Some(_) => qc.drop_row(line, DropReason::Conflict),
            }
        } else {
            if (5..13).any(|i| !r[i].is_empty()) {
                return Err(t.err(line, "pressure-level row must leave surface columns empty"));
            }
            let level = PressureLevel {
                p_hpa: t.num(line, "p_hpa", &r[2])?,
                z_geopot: t.num(line, "z_geopot", &r[3])?,
                clwc: t.num(line, "clwc_kg_per_kg", &r[4])?,
            };
            match p.levels.iter().find(|l| l.p_hpa == level.p_hpa) {
                None => {
                    p.levels.push(level);
                    p.lines.push(line);
                }
                Some(prev) if *prev == level => qc.drop_row(line, DropReason::Duplicate),
                Some(_) => qc.drop_row(line, DropReason::Conflict),
            }
        }
    }

    let mut out = Vec::new();
    for (site_id, hours) in g.groups {
        for (hour, mut p) in hours {
            let Some(s) = p.surface else {
                for l in p.lines {
                    qc.drop_row(l, DropReason::MissingSurface);
                }
                continue;
            };
            p.levels.sort_by(|a, b| b.p_hpa.total_cmp(&a.p_hpa));
            let profile = SiteProfile {
                site_id: site_id.clone(),
                hour,
                t2m: s.t2m,
                d2m: s.d2m,
                u10: s.u10,
                v10: s.v10,
                u100: s.u100,
                v100: s.v100,
                sp: s.sp,
                z_sfc: s.z_sfc,
                levels: p.levels,
            };
            if profile.levels.is_empty() || profile.validate().is_err() {
                for l in p.lines {
                    qc.drop_row(l, DropReason::InvalidProfile);
                }
                continue;
            }
            for _ in &p.lines {
                qc.keep();
            }
            out.push(profile);
        }
    }
    qc.dropped.sort_by_key(|d| d.line);
    Ok((out, qc))
}

pub fn write_profiles<W: Write>(w: W, profiles: &[SiteProfile]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(PROFILE_HEADER.split(','))?;
    for p in profiles {
        let hour = p.hour.to_string();
        let mut rec = vec![
            p.site_id.clone(),
            hour.clone(),
            String::new(),
            String::new(),
            String::new(),
        ];
        rec.extend([p.t2m, p.d2m, p.u10, p.v10, p.u100, p.v100, p.sp, p.z_sfc].map(fmt_num));
        w.write_record(&rec)?;
        for l in &p.levels {
            let mut rec = vec![
                p.site_id.clone(),
                hour.clone(),
                fmt_num(l.p_hpa),
                fmt_num(l.z_geopot),
                fmt_num(l.clwc),
            ];
            rec.extend(std::iter::repeat_n(String::new(), 8));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_counters(path: &Path) -> Result<(Vec<CycleCounterSeries>, QcSummary)> {
    let mut t = Table::read(path, COUNTER_HEADER)?;
    let mut qc = QcSummary::new(path);
    let mut g: Grouped<String, (HourStamp, u64)> = Grouped::new();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let site = t.id(line, "site_id", &r[0])?;
        let hour = t.hour(line, &r[1])?;
        let count: u64 = r[2]
            .parse()
            .map_err(|_| t.err(line, format!("cycle_count: `{}` is not a nonnegative integer", &r[2])))?;
        let a = append_sorted(&t, line, g.slot(&site), hour, count)?;
        tally(&mut qc, line, a);
    }
    let out = g
        .groups
        .into_iter()
        .map(|(site, samples)| CycleCounterSeries::new(site, samples))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, qc))
}

pub fn write_counters<W: Write>(w: W, series: &[CycleCounterSeries]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(COUNTER_HEADER.split(','))?;
    for s in series {
        for (h, c) in s.samples() {
            w.write_record([s.site_id.as_str(), &h.to_string(), &c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Production records per farm. Negative power or wind, or a hub
/// temperature outside the sanity band, drops the row.
pub fn load_production(path: &Path) -> Result<(BTreeMap<String, Vec<ProductionRecord>>, QcSummary)> {
    let mut t = Table::read(path, PRODUCTION_HEADER)?;
    let mut qc = QcSummary::new(path);
    let mut g: Grouped<String, (HourStamp, (f64, f64, f64))> = Grouped::new();
    let (t_lo, t_hi) = Variable::Temperature.sanity_band();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let farm = t.id(line, "farm_id", &r[0])?;
        let hour = t.hour(line, &r[1])?;
        let obs = t.num(line, "observed_kw", &r[2])?;
        let wind = t.num(line, "hub_wind_ms", &r[3])?;
        let temp = t.num(line, "hub_temp_k", &r[4])?;
        let series = g.slot(&farm);
        if obs < 0.0 || wind < 0.0 || !(t_lo..=t_hi).contains(&temp) {
            if series.last().is_some_and(|(last, _)| hour < *last) {
                return Err(t.err(line, format!("time goes backwards at {hour}")));
            }
            qc.drop_row(line, DropReason::OutOfRange);
            continue;
        }
        let a = append_sorted(&t, line, series, hour, (obs, wind, temp))?;
        tally(&mut qc, line, a);
    }
    let out = g
        .groups
        .into_iter()
        .map(|(farm, rows)| {
            let recs = rows
                .into_iter()
                .map(|(hour, (observed_power, hub_wind, hub_temp))| ProductionRecord {
                    farm_id: farm.clone(),
                    hour,
                    observed_power,
                    hub_wind,
                    hub_temp,
                })
                .collect();
            (farm, recs)
        })
        .collect();
    Ok((out, qc))
}

pub fn write_production<W: Write>(w: W, records: &[ProductionRecord]) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(PRODUCTION_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.farm_id.clone(),
            r.hour.to_string(),
            fmt_num(r.observed_power),
            fmt_num(r.hub_wind),
            fmt_num(r.hub_temp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `#cut_in=` and `#cut_out=` metadata lines, then `wind_ms,power_kw`.
/// `cut_out` defaults to 25 m/s.
pub fn load_power_curve(path: &Path) -> Result<PowerCurve> {
    let file = std::fs::File::open(path)?;
    let mut meta: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut body = String::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if let Some(m) = line.strip_prefix('#') {
            let (k, v) = m.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                msg: format!("metadata line `{line}` is not #key=value"),
            })?;
            meta.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let n_meta = meta.len();
    let mut t = Table::from_reader(path, POWER_CURVE_HEADER, std::io::Cursor::new(body.into_bytes()))?;
    let meta_num = |key: &str| -> Result<Option<f64>> {
        match meta.get(key) {
            None => Ok(None),
            Some((line, v)) => t.num(*line, key, v).map(Some),
        }
    };
    if let Some(k) = meta.keys().find(|k| *k != "cut_in" && *k != "cut_out") {
        return Err(t.err(meta[k].0, format!("unknown power curve metadata `{k}`")));
    }
    let cut_in = meta_num("cut_in")?.ok_or_else(|| t.err(1, "missing #cut_in= metadata"))?;
    let cut_out = meta_num("cut_out")?.unwrap_or(25.0);
    let mut points = Vec::new();
    let mut r = csv::StringRecord::new();
    while let Some(line) = t.next(&mut r)? {
        let line = line + n_meta;
        points.push((t.num(line, "wind_ms", &r[0])?, t.num(line, "power_kw", &r[1])?));
    }
    PowerCurve::new(points, cut_in, cut_out).map_err(|e| t.err(0, e.to_string()))
}

pub fn write_power_curve<W: Write>(mut w: W, curve: &PowerCurve) -> Result<()> {
    writeln!(w, "#cut_in={}", fmt_num(curve.cut_in))?;
    writeln!(w, "#cut_out={}", fmt_num(curve.cut_out))?;
    let mut w = csv_writer(w);
    w.write_record(POWER_CURVE_HEADER.split(','))?;
    for &(s, p) in curve.points() {
        w.write_record([fmt_num(s), fmt_num(p)])?;
    }
    w.flush()?;
    Ok(())
}
