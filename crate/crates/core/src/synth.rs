//! Seeded synthetic scenarios: persistent icing events, sensor streams that
//! encode them, reanalysis-like profiles correlated with them, and forecast
//! families of controlled skill.
//!
//! Hourly forecast probability for skill weight `lambda` is
//! `lambda * y_h + (1 - lambda) * base_rate`, optionally jittered on the
//! logit scale. `lambda = 0` is the climatology member.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::ingest::{
    write_counters, write_forecasts, write_power_curve, write_production, write_profiles, write_sites, Catalog,
    FileKind,
};
use crate::labels::{potential_power, CycleCounterSeries, PowerCurve, ProductionRecord};
use crate::makkonen::{PressureLevel, Site, SiteKind, SiteProfile, G0};
use crate::timebase::{ForecastMatrix, HourStamp, Variable};

/// Generator identifier recorded in every catalog this module writes.
pub const RNG_NAME: &str = "ChaCha8";
pub const CLIMATOLOGY_MODEL: &str = "climatology";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// Transmission sites with de-icing cycle counters.
    pub n_sites: usize,
    /// Wind farms labeled from production.
    pub n_windfarms: usize,
    pub start: HourStamp,
    pub hours: u32,
    pub base_rate: f64,
    /// Skill weights; one forecast model per value.
    pub lambdas: Vec<f64>,
    /// Mean event run length, hours.
    pub persistence: f64,
    /// Standard deviation of logit-scale noise; 0 disables it.
    pub jitter: f64,
    pub cadence: u32,
    /// Leads `0..=max_lead` per issuance.
    pub max_lead: u32,
    /// Probability per non-event hour that a counter resets to zero.
    pub reset_rate: f64,
    pub profiles: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            n_sites: 12,
            n_windfarms: 2,
            start: HourStamp::from_ymdh(2023, 10, 1, 0).expect("valid date"),
            hours: 8760,
            base_rate: 0.0368,
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            persistence: 6.0,
            jitter: 0.0,
            cadence: 6,
            max_lead: 23,
            reset_rate: 1.0 / 3000.0,
            profiles: true,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(Error::domain("base_rate", self.base_rate, "(0, 1)"));
        }
        if let Some(&l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::domain("lambda", l, "[0, 1]"));
        }
        if !(self.persistence >= 1.0) {
            return Err(Error::domain("persistence", self.persistence, ">= 1"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::domain("jitter", self.jitter, ">= 0"));
        }
        if self.cadence == 0 || !self.start.is_on_cadence(self.cadence) {
            return Err(Error::domain(
                "cadence",
                self.cadence as f64,
                "positive, with start on the grid",
            ));
        }
        if self.max_lead as i64 > crate::timebase::MAX_LEAD_HOURS || self.hours <= self.max_lead {
            return Err(Error::domain(
                "max_lead",
                self.max_lead as f64,
                "[0, 120] and below hours",
            ));
        }
        if !(0.0..1.0).contains(&self.reset_rate) {
            return Err(Error::domain("reset_rate", self.reset_rate, "[0, 1)"));
        }
        if self.n_sites + self.n_windfarms == 0 {
            return Err(Error::domain("n_sites", 0.0, "at least one site or farm"));
        }
        Ok(())
    }

    pub fn model_id(lambda: f64) -> String {
        format!("lambda_{}", fmt_num(lambda))
    }

    /// Every field as text, for the catalog's generator block. Floats use
    /// the shortest round-trip form so the spec can be rebuilt exactly.
    pub fn to_metadata(&self) -> BTreeMap<String, String> {
        let lambdas = self.lambdas.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        [
            ("seed", self.seed.to_string()),
            ("n_sites", self.n_sites.to_string()),
            ("n_windfarms", self.n_windfarms.to_string()),
            ("start", self.start.to_string()),
            ("hours", self.hours.to_string()),
            ("base_rate", self.base_rate.to_string()),
            ("lambdas", lambdas),
            ("persistence", self.persistence.to_string()),
            ("jitter", self.jitter.to_string()),
            ("cadence", self.cadence.to_string()),
            ("max_lead", self.max_lead.to_string()),
            ("reset_rate", self.reset_rate.to_string()),
            ("profiles", self.profiles.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Inverse of [`to_metadata`](Self::to_metadata); extra keys are ignored.
    pub fn from_metadata(meta: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = meta
                .get(key)
                .ok_or_else(|| Error::Schema(format!("generator metadata lacks `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::Schema(format!("generator metadata `{key}`: cannot parse `{raw}`")))
        }
        let lambdas = meta
            .get("lambdas")
            .ok_or_else(|| Error::Schema("generator metadata lacks `lambdas`".into()))?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::Schema(format!("bad lambda `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let spec = ScenarioSpec {
            seed: get(meta, "seed")?,
            n_sites: get(meta, "n_sites")?,
            n_windfarms: get(meta, "n_windfarms")?,
            start: get(meta, "start")?,
            hours: get(meta, "hours")?,
            base_rate: get(meta, "base_rate")?,
            lambdas,
            persistence: get(meta, "persistence")?,
            jitter: get(meta, "jitter")?,
            cadence: get(meta, "cadence")?,
            max_lead: get(meta, "max_lead")?,
            reset_rate: get(meta, "reset_rate")?,
            profiles: get(meta, "profiles")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Exactly `round(base_rate * hours)` event hours, in runs with geometric
/// lengths of mean `persistence`, separated by at least one quiet hour and
/// never at hour 0.
pub fn event_hours<R: Rng>(rng: &mut R, hours: usize, base_rate: f64, persistence: f64) -> Result<Vec<bool>> {
    let n_events = (base_rate * hours as f64).round() as usize;
    let geo = Geometric::new(1.0 / persistence).map_err(|_| Error::domain("persistence", persistence, ">= 1"))?;
    let mut runs = Vec::new();
    let mut total = 0usize;
    while total < n_events {
        let len = (1 + geo.sample(rng) as usize).min(n_events - total);
        runs.push(len);
        total += len;
    }
    // one mandatory quiet hour before each run
    let spare = (hours - n_events)
        .checked_sub(runs.len())
        .ok_or_else(|| Error::domain("base_rate", base_rate, "too high for the requested persistence"))?;
    let mut bars = index::sample(rng, spare + runs.len(), runs.len()).into_vec();
    bars.sort_unstable();
    let mut out = vec![false; hours];
    let mut pos = 0usize;
    let mut prev_bar: Option<usize> = None;
    for (len, bar) in runs.iter().zip(bars) {
        let extra = bar - prev_bar.map_or(0, |b| b + 1);
        prev_bar = Some(bar);
        pos += 1 + extra;
        out[pos..pos + len].fill(true);
        pos += len;
    }
    Ok(out)
}

/// A 50 MW farm curve used for every synthetic farm.
pub fn reference_power_curve() -> PowerCurve {
    PowerCurve::new(
        vec![
            (3.0, 0.0),
            (5.0, 3000.0),
            (7.0, 12000.0),
            (9.0, 28000.0),
            (11.0, 42000.0),
            (13.0, 50000.0),
            (25.0, 50000.0),
        ],
        3.0,
        25.0,
    )
    .expect("reference curve is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub sites: Vec<Site>,
    /// Per site, in `sites` order.
    pub events: Vec<Vec<bool>>,
    pub counters: Vec<CycleCounterSeries>,
    pub production: Vec<ProductionRecord>,
    pub power_curve: PowerCurve,
    pub profiles: Vec<SiteProfile>,
    /// `(model_id, one matrix per site)`, climatology first.
    pub forecasts: Vec<(String, Vec<ForecastMatrix>)>,
}

impl Scenario {
    /// Fraction of event hours across all sites.
    pub fn realized_base_rate(&self) -> f64 {
        let n: usize = self.events.iter().map(Vec::len).sum();
        let e: usize = self.events.iter().map(|v| v.iter().filter(|&&x| x).count()).sum();
        e as f64 / n as f64
    }
}

fn site_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn make_sites<R: Rng>(rng: &mut R, spec: &ScenarioSpec) -> Vec<Site> {
    let mut sites = Vec::new();
    let mut push = |id: String, kind: SiteKind, heli: bool, rng: &mut R| {
        sites.push(Site {
            site_id: id,
            lat: fmt_num(rng.random_range(45.0..50.0)).parse().expect("number"),
            lon: fmt_num(rng.random_range(-75.0..-65.0)).parse().expect("number"),
            elevation_asl: rng.random_range(300.0..1000.0f64).round(),
            sensor_height_agl: kind.default_height_agl(),
            kind,
            helicopter_access: heli,
            height_defaulted: false,
        })
    };
    for i in 0..spec.n_sites {
        push(format!("T{:02}", i + 1), SiteKind::Transmission, i % 4 == 3, rng);
    }
    for i in 0..spec.n_windfarms {
        push(format!("W{:02}", i + 1), SiteKind::Windfarm, false, rng);
    }
    sites
}

fn round9(x: f64) -> f64 {
    fmt_num(x).parse().expect("formatted number parses")
}

fn profile<R: Rng>(rng: &mut R, site: &Site, hour: HourStamp, event: bool) -> SiteProfile {
    let elev = site.elevation_asl;
    let (t2m, clwc) = if event {
        (rng.random_range(263.0..272.0), rng.random_range(1e-4..4e-4))
    } else {
        let t = rng.random_range(255.0..292.0);
        let c = if rng.random_bool(0.15) {
            rng.random_range(1e-6..5e-5)
        } else {
            0.0
        };
        (t, c)
    };
    let speed10 = rng.random_range(if event { 4.0..12.0 } else { 0.5..12.0 });
    let shear = rng.random_range(1.1..1.6);
    let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let sp = 101_325.0 * (-elev / 8400.0).exp();
    let levels = [(1000.0, elev - 300.0), (925.0, elev + 350.0), (850.0, elev + 1100.0)]
        .map(|(p, z)| PressureLevel {
            p_hpa: p,
            z_geopot: round9(z * G0),
            clwc: round9(clwc * rng.random_range(0.8..1.2)),
        })
        .to_vec();
    SiteProfile {
        site_id: site.site_id.clone(),
        hour,
        t2m: round9(t2m),
        d2m: round9(t2m - rng.random_range(0.5..3.0)),
        u10: round9(speed10 * dir.cos()),
        v10: round9(speed10 * dir.sin()),
        u100: round9(speed10 * shear * dir.cos()),
        v100: round9(speed10 * shear * dir.sin()),
        sp: round9(sp),
        z_sfc: round9(elev * G0),
        levels,
    }
}

fn forecast_matrix<R: Rng>(
    rng: &mut R,
    spec: &ScenarioSpec,
    model: &str,
    site_id: &str,
    events: &[bool],
    lambda: f64,
    noise: Option<Normal<f64>>,
) -> Result<ForecastMatrix> {
    let mut cells = Vec::new();
    let last_issue = spec.hours - spec.max_lead - 1;
    for off in (0..=last_issue).step_by(spec.cadence as usize) {
        let issue = spec.start.add_hours(off as i64);
        for lead in 0..=spec.max_lead {
            let y = if events[(off + lead) as usize] { 1.0 } else { 0.0 };
            let mut p = lambda * y + (1.0 - lambda) * spec.base_rate;
            if let Some(n) = noise {
                if p > 0.0 && p < 1.0 {
                    let z = (p / (1.0 - p)).ln() + n.sample(rng);
                    p = 1.0 / (1.0 + (-z).exp());
                }
            }
            cells.push(((issue, issue.add_hours(lead as i64)), round9(p).clamp(0.0, 1.0)));
        }
    }
    ForecastMatrix::new(model, site_id, Variable::IcingProbability, spec.cadence, cells)
}

/// Generate the full scenario. Each site draws from its own ChaCha8 stream,
/// so adding sites leaves earlier sites unchanged.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let sites = make_sites(&mut site_rng(spec.seed, 0), spec);
    let curve = reference_power_curve();
    let noise = (spec.jitter > 0.0).then(|| Normal::new(0.0, spec.jitter).expect("finite sd"));
    let hours = spec.hours as usize;

    let mut events = Vec::with_capacity(sites.len());
    let mut counters = Vec::new();
    let mut production = Vec::new();
    let mut profiles = Vec::new();
    let mut models: Vec<(String, Vec<ForecastMatrix>)> = std::iter::once(CLIMATOLOGY_MODEL.to_string())
        .chain(spec.lambdas.iter().map(|&l| ScenarioSpec::model_id(l)))
        .map(|m| (m, Vec::new()))
        .collect();

    for (i, site) in sites.iter().enumerate() {
        let mut rng = site_rng(spec.seed, 1 + i as u64);
        let y = event_hours(&mut rng, hours, spec.base_rate, spec.persistence)?;

        match site.kind {
            SiteKind::Windfarm => {
                for (h, &e) in y.iter().enumerate() {
                    let wind = round9(rng.random_range(6.0..20.0));
                    let potential = potential_power(&curve, wind);
                    let (ratio, temp) = if e {
                        (rng.random_range(0.2..0.6), rng.random_range(266.0..273.5))
                    } else {
                        (rng.random_range(0.93..1.0), rng.random_range(262.0..292.0))
                    };
                    production.push(ProductionRecord {
                        farm_id: site.site_id.clone(),
                        hour: spec.start.add_hours(h as i64),
                        observed_power: round9(potential * ratio),
                        hub_wind: wind,
                        hub_temp: round9(temp),
                    });
                }
            }
            _ => {
                let mut count: u64 = rng.random_range(0..1000);
                let mut samples = Vec::with_capacity(hours);
                for (h, &e) in y.iter().enumerate() {
                    if e {
                        count += 1 + u64::from(rng.random_bool(0.3));
                    } else if h > 0 && rng.random_bool(spec.reset_rate) {
                        count = 0;
                    }
                    samples.push((spec.start.add_hours(h as i64), count));
                }
                counters.push(CycleCounterSeries::new(site.site_id.clone(), samples)?);
            }
        }

        if spec.profiles {
            for (h, &e) in y.iter().enumerate() {
                profiles.push(profile(&mut rng, site, spec.start.add_hours(h as i64), e));
            }
        }

        let clim = forecast_matrix(&mut rng, spec, CLIMATOLOGY_MODEL, &site.site_id, &y, 0.0, None)?;
        models[0].1.push(clim);
        for (k, &lambda) in spec.lambdas.iter().enumerate() {
            let id = models[k + 1].0.clone();
            let m = forecast_matrix(&mut rng, spec, &id, &site.site_id, &y, lambda, noise)?;
            models[k + 1].1.push(m);
        }
        events.push(y);
    }

    Ok(Scenario {
        spec: spec.clone(),
        sites,
        events,
        counters,
        production,
        power_curve: curve,
        profiles,
        forecasts: models,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Write every interchange file plus `catalog.json` into `dir`.
pub fn write_scenario(s: &Scenario, dir: &Path) -> Result<Catalog> {
    std::fs::create_dir_all(dir)?;
    let sites = dir.join("sites.csv");
    write_sites(create(&sites)?, &s.sites)?;
    let mut files: Vec<(FileKind, PathBuf, Option<String>)> = Vec::new();

    if !s.counters.is_empty() {
        let p = dir.join("sygivre.csv");
        write_counters(create(&p)?, &s.counters)?;
        files.push((FileKind::Sygivre, p, None));
    }
    if !s.production.is_empty() {
        let p = dir.join("production.csv");
        write_production(create(&p)?, &s.production)?;
        files.push((FileKind::Production, p, None));
        let p = dir.join("power_curve.csv");
        write_power_curve(create(&p)?, &s.power_curve)?;
        files.push((FileKind::PowerCurve, p, None));
    }
    if !s.profiles.is_empty() {
        let p = dir.join("profiles.csv");
        write_profiles(create(&p)?, &s.profiles)?;
        files.push((FileKind::Profiles, p, None));
    }
    for (model, matrices) in &s.forecasts {
        let p = dir.join(format!("forecasts_{model}.csv"));
        write_forecasts(create(&p)?, matrices)?;
        files.push((FileKind::Forecasts, p, None));
    }

    let mut cat = Catalog::build(dir, &sites, &files, s.spec.cadence)?;
    let mid = s.spec.start.add_hours((s.spec.hours / 2 / 24 * 24) as i64);
    cat.train_end_utc = Some(mid.to_string());
    cat.generator = s.spec.to_metadata();
    cat.generator.insert("generator".into(), "gridwx-synth".into());
    cat.generator.insert("rng".into(), RNG_NAME.into());
    cat.write(&dir.join("catalog.json"))?;
    Ok(cat)
}
