//! Catalog loading shared by the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gridwx_core::ingest::{
    load_config, load_counters, load_forecasts, load_labels, load_observations, load_power_curve, load_production,
    load_profiles, load_sites, sha256_file, FileEntry, FileKind,
};
use gridwx_core::labels::{production_to_binary, sygivre_to_binary, CounterQc, ProductionLabelParams};
use gridwx_core::{
    Catalog, ForecastMatrix, ObservationSeries, PowerCurve, QcSummary, RunConfig, Site, SiteProfile, Variable,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::RunArgs;

/// Config file (or defaults), then flags, then the catalog's training split
/// when the config leaves it open.
pub fn resolve_config(args: &RunArgs, catalog: &Catalog) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(l) = &args.lead_hours {
        cfg.set("lead_hours", l)?;
    }
    if let Some(w) = args.window_hours {
        cfg.set("window", &w.to_string())?;
    }
    if let Some(o) = args.utc_offset {
        cfg.set("utc_offset", &o.to_string())?;
    }
    if let Some(p) = &args.policy {
        cfg.set("policy", p)?;
    }
    if cfg.options.train_end.is_none() {
        cfg.options.train_end = catalog.train_end()?;
    }
    if let Some(w) = cfg.validate()? {
        log::warn!("{w}");
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterLabelQc {
    pub site_id: String,
    pub hours: usize,
    pub valid: usize,
    #[serde(flatten)]
    pub counter: CounterQc,
}

#[derive(Debug, Clone, Serialize)]
pub struct FarmLabelQc {
    pub farm_id: String,
    pub hours: usize,
    pub valid: usize,
    pub events: usize,
    pub cut_in: f64,
    pub cut_out: f64,
    pub rated_power_kw: f64,
    #[serde(flatten)]
    pub params: ProductionLabelParams,
}

pub struct Inputs {
    pub catalog: Catalog,
    pub sites: Vec<Site>,
    catalog_name: String,
    catalog_hash: String,
    /// Files read so far, with their verified hashes.
    used: BTreeMap<String, String>,
    qc: Vec<QcSummary>,
}

fn valid_count(s: &ObservationSeries) -> usize {
    s.iter().filter(|(_, x)| x.qc == gridwx_core::QcFlag::Valid).count()
}

impl Inputs {
    pub fn open(path: &Path) -> anyhow::Result<Self> {
        let catalog = Catalog::load_unverified(path).with_context(|| format!("catalog {}", path.display()))?;
        catalog.verify_file(&catalog.sites.path, &catalog.sites.hash)?;
        let sites = load_sites(&catalog.sites_path())?;
        let used = [(catalog.sites.path.clone(), catalog.sites.hash.clone())].into();
        Ok(Inputs {
            catalog_name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            catalog_hash: sha256_file(path)?,
            catalog,
            sites,
            used,
            qc: Vec::new(),
        })
    }

    pub fn site(&self, id: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.site_id == id)
    }

    /// Catalog file plus every listed file this run has read.
    pub fn input_hashes(&self) -> BTreeMap<String, String> {
        let mut m = self.used.clone();
        m.insert(self.catalog_name.clone(), self.catalog_hash.clone());
        m
    }

    pub fn qc(&self) -> &[QcSummary] {
        &self.qc
    }

    fn entries(&self, kind: FileKind) -> Vec<FileEntry> {
        self.catalog.files_of(kind).cloned().collect()
    }

    /// Load every file of one kind in parallel, keeping catalog order.
    fn load_all<T, F>(&mut self, kind: FileKind, f: F) -> anyhow::Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Path) -> gridwx_core::Result<(T, QcSummary)> + Sync,
    {
        let entries = self.entries(kind);
        let loaded: Vec<anyhow::Result<(T, QcSummary)>> = entries
            .par_iter()
            .map(|e| {
                self.catalog.verify_file(&e.path, &e.hash)?;
                let p = self.catalog.resolve(e);
                let (data, mut qc) = f(&p).with_context(|| format!("loading {}", e.path))?;
                qc.path = PathBuf::from(&e.path);
                Ok((data, qc))
            })
            .collect();
        let mut out = Vec::with_capacity(loaded.len());
        for e in &entries {
            self.used.insert(e.path.clone(), e.hash.clone());
        }
        for r in loaded {
            let (data, qc) = r?;
            self.qc.push(qc);
            out.push(data);
        }
        Ok(out)
    }

    fn check<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> anyhow::Result<()> {
        Catalog::check_sites(&self.sites, ids)?;
        Ok(())
    }

    pub fn forecasts(&mut self) -> anyhow::Result<Vec<ForecastMatrix>> {
        let cadence = self.catalog.cadence_hours;
        let all: Vec<ForecastMatrix> = self
            .load_all(FileKind::Forecasts, |p| load_forecasts(p, cadence))?
            .into_iter()
            .flatten()
            .collect();
        self.check(all.iter().map(|m| m.site_id.as_str()))?;
        Ok(all)
    }

    pub fn observations(&mut self) -> anyhow::Result<Vec<ObservationSeries>> {
        let all: Vec<ObservationSeries> = self
            .load_all(FileKind::Observations, load_observations)?
            .into_iter()
            .flatten()
            .collect();
        self.check(all.iter().map(|s| s.site_id.as_str()))?;
        Ok(all)
    }

    pub fn profiles(&mut self) -> anyhow::Result<Vec<SiteProfile>> {
        let all: Vec<SiteProfile> = self
            .load_all(FileKind::Profiles, load_profiles)?
            .into_iter()
            .flatten()
            .collect();
        self.check(all.iter().map(|s| s.site_id.as_str()))?;
        Ok(all)
    }

    pub fn has_label_source(&self) -> bool {
        [FileKind::Labels, FileKind::Sygivre, FileKind::Production]
            .into_iter()
            .any(|k| self.catalog.files_of(k).next().is_some())
    }

    pub fn sygivre_labels(&mut self) -> anyhow::Result<Vec<(ObservationSeries, CounterLabelQc)>> {
        let counters: Vec<_> = self
            .load_all(FileKind::Sygivre, load_counters)?
            .into_iter()
            .flatten()
            .collect();
        self.check(counters.iter().map(|c| c.site_id.as_str()))?;
        Ok(counters
            .par_iter()
            .map(|c| {
                let (series, counter) = sygivre_to_binary(c);
                let qc = CounterLabelQc {
                    site_id: c.site_id.clone(),
                    hours: series.len(),
                    valid: valid_count(&series),
                    counter,
                };
                (series, qc)
            })
            .collect())
    }

    /// Curves keyed by farm; an entry without `farm_id` applies to every farm
    /// that has no curve of its own.
    fn power_curves(&mut self) -> anyhow::Result<(Option<PowerCurve>, BTreeMap<String, PowerCurve>)> {
        let mut shared = None;
        let mut by_farm = BTreeMap::new();
        for e in self.entries(FileKind::PowerCurve) {
            self.catalog.verify_file(&e.path, &e.hash)?;
            self.used.insert(e.path.clone(), e.hash.clone());
            let curve = load_power_curve(&self.catalog.resolve(&e)).with_context(|| format!("loading {}", e.path))?;
            match &e.farm_id {
                Some(f) => {
                    if by_farm.insert(f.clone(), curve).is_some() {
                        bail!("two power curves for farm {f}");
                    }
                }
                None => {
                    if shared.replace(curve).is_some() {
                        bail!("more than one power curve without a farm_id");
                    }
                }
            }
        }
        Ok((shared, by_farm))
    }

    pub fn windfarm_labels(&mut self, cfg: &RunConfig) -> anyhow::Result<Vec<(ObservationSeries, FarmLabelQc)>> {
        let (shared, by_farm) = self.power_curves()?;
        let farms: BTreeMap<String, Vec<_>> = self
            .load_all(FileKind::Production, load_production)?
            .into_iter()
            .flatten()
            .collect();
        self.check(farms.keys().map(String::as_str))?;
        let o = &cfg.options;
        farms
            .par_iter()
            .map(|(farm, records)| {
                let curve = by_farm
                    .get(farm)
                    .or(shared.as_ref())
                    .with_context(|| format!("no power curve for farm {farm}"))?;
                let params = ProductionLabelParams {
                    theta_loss: o.theta_loss,
                    t_guard: o.t_guard,
                    p_min: o.p_min_fraction * curve.rated_power(),
                };
                let series = production_to_binary(farm, records, curve, &params)?;
                let events = series
                    .iter()
                    .filter(|(_, s)| s.qc == gridwx_core::QcFlag::Valid && s.value >= 0.5)
                    .count();
                let qc = FarmLabelQc {
                    farm_id: farm.clone(),
                    hours: series.len(),
                    valid: valid_count(&series),
                    events,
                    cut_in: curve.cut_in,
                    cut_out: curve.cut_out,
                    rated_power_kw: curve.rated_power(),
                    params,
                };
                Ok((series, qc))
            })
            .collect()
    }

    /// Binary icing labels by site: label files when the catalog has them,
    /// otherwise derived from counters and production.
    pub fn icing_labels(&mut self, cfg: &RunConfig) -> anyhow::Result<BTreeMap<String, ObservationSeries>> {
        let mut out = BTreeMap::new();
        let mut put = |s: ObservationSeries| -> anyhow::Result<()> {
            let id = s.site_id.clone();
            if out.insert(id.clone(), s).is_some() {
                bail!("icing labels for {id} appear more than once");
            }
            Ok(())
        };
        if self.catalog.files_of(FileKind::Labels).next().is_some() {
            let series: Vec<_> = self
                .load_all(FileKind::Labels, load_labels)?
                .into_iter()
                .flatten()
                .filter(|s| s.variable == Variable::Icing)
                .collect();
            self.check(series.iter().map(|s| s.site_id.as_str()))?;
            for s in series {
                put(s)?;
            }
        } else {
            for (s, _) in self.sygivre_labels()? {
                put(s)?;
            }
            if self.catalog.files_of(FileKind::Production).next().is_some() {
                for (s, _) in self.windfarm_labels(cfg)? {
                    put(s)?;
                }
            }
        }
        Ok(out)
    }
}
