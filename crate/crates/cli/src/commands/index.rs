use std::collections::BTreeMap;

use anyhow::{bail, Context};
use gridwx_core::format::fmt_num;
use gridwx_core::makkonen::{hourly_icing, resolve_threshold, HourlyIcing};
use gridwx_core::timebase::window_any;
use gridwx_core::verify::{Metric, ScoreReport};
use gridwx_core::{HourStamp, ObservationSeries, Sample, SiteProfile, Variable, WindowSpec};
use rayon::prelude::*;

use super::{cadence_grid, line, write_qc, write_reports};
use crate::data::{resolve_config, Inputs};
use crate::out::{config_map, OutDir};
use crate::{RunArgs, Status};

const MODEL_ID: &str = "icing_index";

struct SiteIndex {
    site_id: String,
    hourly: Vec<HourlyIcing>,
    /// `(window start, score)`; `None` on insufficient coverage.
    windows: Vec<(HourStamp, Option<f64>)>,
    threshold: f64,
    n_training: usize,
}

fn index_site(
    site_id: &str,
    profiles: &[&SiteProfile],
    inputs: &Inputs,
    params: &gridwx_core::IcingProxyParams,
    cadence: u32,
    train_end: Option<HourStamp>,
) -> anyhow::Result<SiteIndex> {
    let site = inputs
        .site(site_id)
        .with_context(|| format!("profiles reference unknown site {site_id}"))?;
    let hourly = profiles
        .iter()
        .map(|p| hourly_icing(p, site, params).with_context(|| format!("{site_id} at {}", p.hour)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rates = ObservationSeries::new(
        site_id,
        Variable::IcingRate,
        hourly.iter().map(|h| (h.hour, Sample::valid(h.rate))),
    )?;
    let (first, last) = (hourly[0].hour, hourly[hourly.len() - 1].hour);
    let windows: Vec<(HourStamp, Option<f64>)> = cadence_grid(first, last, cadence)
        .into_iter()
        .map(|t| (t, rates.window_values(t, params.window).map(|v| v.iter().sum())))
        .collect();
    let len = params.window.length_hours as i64;
    let fits = |t: HourStamp| train_end.is_none_or(|e| t.add_hours(len) <= e);
    let mut training: Vec<f64> = windows.iter().filter(|w| fits(w.0)).filter_map(|w| w.1).collect();
    if training.is_empty() {
        log::warn!("{site_id}: no complete training windows; fitting the threshold on all windows");
        training = windows.iter().filter_map(|w| w.1).collect();
    }
    let threshold = resolve_threshold(params.score_threshold, &training)?;
    Ok(SiteIndex {
        site_id: site_id.to_string(),
        hourly,
        windows,
        threshold,
        n_training: training.len(),
    })
}

type Pairs = Vec<(f64, f64)>;

/// Skill of the windowed flags against observed icing on held-out windows.
fn skill(
    idx: &SiteIndex,
    labels: &ObservationSeries,
    spec: WindowSpec,
    train_end: Option<HourStamp>,
) -> (Pairs, Pairs) {
    let mut scores = Vec::new();
    let mut flags = Vec::new();
    for &(t, score) in &idx.windows {
        if train_end.is_some_and(|e| t < e) {
            continue;
        }
        if let (Some(s), Some(y)) = (score, window_any(labels, t, spec)) {
            let y = if y { 1.0 } else { 0.0 };
            scores.push((s, y));
            flags.push((if s > idx.threshold { 1.0 } else { 0.0 }, y));
        }
    }
    (scores, flags)
}

fn report(
    site: &str,
    spec: WindowSpec,
    slice: &str,
    scores: &[(f64, f64)],
    flags: &[(f64, f64)],
) -> anyhow::Result<ScoreReport> {
    let mut r = ScoreReport::new(MODEL_ID, site, Variable::Icing.name(), slice);
    r.window_h = Some(spec.length_hours);
    r.n_pairs = scores.len();
    r.record("ap", Metric::AveragePrecision.evaluate(scores))?;
    r.record("roc_auc", Metric::RocAuc.evaluate(scores))?;
    r.record("f1", Metric::F1 { tau: 0.5 }.evaluate(flags))?;
    r.record("csi", Metric::Csi { tau: 0.5 }.evaluate(flags))?;
    if !flags.is_empty() {
        let n = flags.len() as f64;
        r.record("base_rate", Ok(flags.iter().map(|f| f.1).sum::<f64>() / n))?;
        r.record("flag_rate", Ok(flags.iter().map(|f| f.0).sum::<f64>() / n))?;
    }
    Ok(r)
}

pub fn run(args: &RunArgs) -> anyhow::Result<Status> {
    let mut inputs = Inputs::open(&args.catalog)?;
    let cfg = resolve_config(args, &inputs.catalog)?;
    let params = cfg.icing_params()?;
    let train_end = cfg.options.train_end;
    let profiles = inputs.profiles()?;
    if profiles.is_empty() {
        bail!("the catalog lists no profiles to index");
    }
    let mut by_site: BTreeMap<&str, Vec<&SiteProfile>> = BTreeMap::new();
    for p in &profiles {
        by_site.entry(p.site_id.as_str()).or_default().push(p);
    }
    let sites: Vec<SiteIndex> = by_site
        .par_iter()
        .map(|(id, ps)| index_site(id, ps, &inputs, &params, cfg.params.cadence, train_end))
        .collect::<anyhow::Result<_>>()?;

    let mut out = OutDir::create(&args.out)?;
    out.with("index_hourly.csv", |w| {
        line(w, &["site_id", "hour_utc", "wind_ms", "temp_k", "lwc_kg_m3", "rate"])?;
        for s in &sites {
            for h in &s.hourly {
                let hour = h.hour.to_string();
                line(
                    w,
                    &[
                        &s.site_id,
                        &hour,
                        &fmt_num(h.wind),
                        &fmt_num(h.temp),
                        &fmt_num(h.lwc),
                        &fmt_num(h.rate),
                    ],
                )?;
            }
        }
        Ok(())
    })?;
    out.with("index_windows.csv", |w| {
        line(w, &["site_id", "window_start_utc", "score", "flag"])?;
        for s in &sites {
            for (t, score) in &s.windows {
                let (score, flag) = match score {
                    Some(x) => (fmt_num(*x), u8::from(*x > s.threshold).to_string()),
                    None => (String::new(), String::new()),
                };
                line(w, &[&s.site_id, &t.to_string(), &score, &flag])?;
            }
        }
        Ok(())
    })?;
    out.with("index_thresholds.csv", |w| {
        line(
            w,
            &[
                "site_id",
                "threshold",
                "n_training",
                "n_windows",
                "n_undefined",
                "n_flagged",
            ],
        )?;
        for s in &sites {
            let undefined = s.windows.iter().filter(|w| w.1.is_none()).count();
            let flagged = s
                .windows
                .iter()
                .filter(|w| w.1.is_some_and(|x| x > s.threshold))
                .count();
            line(
                w,
                &[
                    &s.site_id,
                    &fmt_num(s.threshold),
                    &s.n_training.to_string(),
                    &s.windows.len().to_string(),
                    &undefined.to_string(),
                    &flagged.to_string(),
                ],
            )?;
        }
        Ok(())
    })?;

    if inputs.has_label_source() {
        let labels = inputs.icing_labels(&cfg)?;
        let spec = params.window;
        let slice = if train_end.is_some() { "holdout" } else { "all" };
        let mut reports = Vec::new();
        let (mut all_scores, mut all_flags) = (Vec::new(), Vec::new());
        for s in &sites {
            if let Some(y) = labels.get(&s.site_id) {
                let (scores, flags) = skill(s, y, spec, train_end);
                reports.push(report(&s.site_id, spec, slice, &scores, &flags)?);
                all_scores.extend(scores);
                all_flags.extend(flags);
            }
        }
        if !reports.is_empty() {
            reports.push(report("pooled", spec, slice, &all_scores, &all_flags)?);
            write_reports(&mut out, "index_report", &reports)?;
        }
    }
    write_qc(&mut out, inputs.qc())?;
    out.config(&cfg)?;
    out.finish("index", config_map(&cfg), inputs.input_hashes())?;
    Ok(Status::Ok)
}
