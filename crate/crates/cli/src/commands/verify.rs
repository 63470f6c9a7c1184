use std::collections::BTreeMap;

use anyhow::bail;
use gridwx_core::decide::mean_prob_threshold;
use gridwx_core::timebase::align;
use gridwx_core::verify::{
    fraction_beating_baseline, fractional_skill, lift, pr_curve_and_ap, roc_and_auc, station_f1_cdf, windowed_pairs,
    write_curve_csv, Metric, ScoreReport, Slice,
};
use gridwx_core::{ForecastMatrix, ObservationSeries, Variable, WindowSpec};
use rayon::prelude::*;

use super::{write_qc, write_reports};
use crate::data::{resolve_config, Inputs};
use crate::out::{config_map, OutDir};
use crate::{RunArgs, Status};

const POOLED: &str = "pooled";

/// Pooling key: model, variable, lead, slice index.
type PoolKey = (String, Variable, u32, usize);
type Pairs = Vec<(f64, f64)>;

struct MatrixScores {
    reports: Vec<ScoreReport>,
    pooled: Vec<(PoolKey, Pairs, usize)>,
    windowed: Option<(ScoreReport, Vec<(f64, f64)>)>,
}

fn score(r: &mut ScoreReport, variable: Variable, pairs: &[(f64, f64)], tau: f64) -> anyhow::Result<()> {
    r.n_pairs = pairs.len();
    if variable != Variable::IcingProbability {
        r.record("mae", Metric::Mae.evaluate(pairs))?;
        return Ok(());
    }
    r.record("mae", Metric::Mae.evaluate(pairs))?;
    let ap = Metric::AveragePrecision.evaluate(pairs);
    r.record("roc_auc", Metric::RocAuc.evaluate(pairs))?;
    r.record("f1", Metric::F1 { tau }.evaluate(pairs))?;
    r.record("csi", Metric::Csi { tau }.evaluate(pairs))?;
    if !pairs.is_empty() {
        let base = pairs.iter().filter(|p| p.1 >= 0.5).count() as f64 / pairs.len() as f64;
        r.record("base_rate", Ok(base))?;
        if let Ok(ap) = &ap {
            r.record("lift", lift(*ap, base))?;
        }
    }
    r.record("ap", ap)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn score_matrix(
    fc: &ForecastMatrix,
    truth: &ObservationSeries,
    leads: &[u32],
    slices: &[Slice],
    spec: WindowSpec,
    tau_hourly: f64,
    p_star: f64,
) -> anyhow::Result<MatrixScores> {
    let mut out = MatrixScores {
        reports: Vec::new(),
        pooled: Vec::new(),
        windowed: None,
    };
    for &lead in leads {
        let aligned = align(fc, truth, lead)?;
        for (si, slice) in slices.iter().enumerate() {
            let pairs: Vec<(f64, f64)> = aligned
                .pairs
                .iter()
                .filter(|p| slice.contains(p.valid))
                .map(|p| (p.forecast, p.observed))
                .collect();
            let mut r = ScoreReport::new(&fc.model_id, &fc.site_id, fc.variable.name(), &slice.name);
            r.lead_h = Some(lead);
            r.n_dropped = aligned.dropped;
            score(&mut r, fc.variable, &pairs, tau_hourly)?;
            out.reports.push(r);
            out.pooled
                .push(((fc.model_id.clone(), fc.variable, lead, si), pairs, aligned.dropped));
        }
    }
    if fc.variable == Variable::IcingProbability {
        let w = windowed_pairs(fc, truth, spec)?;
        let pairs: Vec<(f64, f64)> = w.pairs.iter().map(|&(q, y)| (q, if y { 1.0 } else { 0.0 })).collect();
        let mut r = ScoreReport::new(&fc.model_id, &fc.site_id, fc.variable.name(), "all");
        r.window_h = Some(spec.length_hours);
        r.n_dropped = w.undefined;
        score(&mut r, fc.variable, &pairs, p_star)?;
        out.windowed = Some((r, pairs));
    }
    Ok(out)
}

fn curves(out: &mut OutDir, model: &str, pairs: &[(f64, f64)], station_f1: &[f64]) -> anyhow::Result<()> {
    let probs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let labels: Vec<bool> = pairs.iter().map(|p| p.1 >= 0.5).collect();
    if let Ok((pr, _)) = pr_curve_and_ap(&probs, &labels) {
        out.with(&format!("curves/pr_{model}.csv"), |w| Ok(write_curve_csv(w, &pr)?))?;
    }
    if let Ok((roc, _)) = roc_and_auc(&probs, &labels) {
        out.with(&format!("curves/roc_{model}.csv"), |w| Ok(write_curve_csv(w, &roc)?))?;
    }
    if let Ok(cdf) = station_f1_cdf(station_f1) {
        out.with(&format!("curves/f1_cdf_{model}.csv"), |w| Ok(write_curve_csv(w, &cdf)?))?;
    }
    Ok(())
}

type CellKey = (String, String, Option<u32>, Option<u32>, String);

fn cell_key(r: &ScoreReport) -> CellKey {
    (
        r.site_id.clone(),
        r.variable.clone(),
        r.lead_h,
        r.window_h,
        r.slice.clone(),
    )
}

/// Fractional MAE skill against the baseline model, cell by cell.
fn add_skill(reports: &mut [ScoreReport], baseline: &str) -> anyhow::Result<()> {
    let base: BTreeMap<CellKey, f64> = reports
        .iter()
        .filter(|r| r.model_id == baseline)
        .filter_map(|r| r.metrics.get("mae").map(|&m| (cell_key(r), m)))
        .collect();
    for r in reports.iter_mut().filter(|r| r.model_id != baseline) {
        if let (Some(&m), Some(&b)) = (r.metrics.get("mae"), base.get(&cell_key(r))) {
            r.record("skill", fractional_skill(m, b))?;
        }
    }
    Ok(())
}

/// Share of sites where the model's MAE beats the baseline's, stored on the
/// model's pooled row for the same variable, lead and slice.
fn add_fraction_beating(reports: &mut [ScoreReport], baseline: &str) {
    type Key = (String, Option<u32>, String);
    let mut base: BTreeMap<(String, Key), f64> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.model_id == baseline && r.site_id != POOLED) {
        if let Some(&m) = r.metrics.get("mae") {
            base.insert((r.site_id.clone(), (r.variable.clone(), r.lead_h, r.slice.clone())), m);
        }
    }
    let mut per_cell: BTreeMap<(String, Key), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in reports
        .iter()
        .filter(|r| r.model_id != baseline && r.site_id != POOLED && r.lead_h.is_some())
    {
        let key = (r.variable.clone(), r.lead_h, r.slice.clone());
        if let (Some(&m), Some(&b)) = (r.metrics.get("mae"), base.get(&(r.site_id.clone(), key.clone()))) {
            let slot = per_cell.entry((r.model_id.clone(), key)).or_default();
            slot.0.push(m);
            slot.1.push(b);
        }
    }
    for r in reports.iter_mut().filter(|r| r.site_id == POOLED && r.lead_h.is_some()) {
        let key = (r.model_id.clone(), (r.variable.clone(), r.lead_h, r.slice.clone()));
        if let Some((m, b)) = per_cell.get(&key) {
            if let Some(f) = fraction_beating_baseline(m, b) {
                r.metrics.insert("frac_beating_baseline".into(), f);
            }
        }
    }
}

pub fn run(args: &RunArgs) -> anyhow::Result<Status> {
    let mut inputs = Inputs::open(&args.catalog)?;
    let cfg = resolve_config(args, &inputs.catalog)?;
    let spec = cfg.window_spec()?;
    let p_star = cfg.params.p_star()?;
    let tau_hourly = mean_prob_threshold(p_star, spec.length_hours)?;
    let slices = Slice::standard_set(cfg.options.utc_offset);
    let leads = cfg.options.lead_hours.clone();

    let forecasts = inputs.forecasts()?;
    if forecasts.is_empty() {
        bail!("the catalog lists no forecasts to verify");
    }
    let labels = if forecasts.iter().any(|f| f.variable == Variable::IcingProbability) {
        inputs.icing_labels(&cfg)?
    } else {
        BTreeMap::new()
    };
    let observations: BTreeMap<(String, Variable), ObservationSeries> = inputs
        .observations()?
        .into_iter()
        .map(|s| ((s.site_id.clone(), s.variable), s))
        .collect();
    let truth = |fc: &ForecastMatrix| match fc.variable.verified_by() {
        Variable::Icing => labels.get(&fc.site_id),
        v => observations.get(&(fc.site_id.clone(), v)),
    };
    let jobs: Vec<(&ForecastMatrix, &ObservationSeries)> = forecasts
        .iter()
        .filter_map(|fc| match truth(fc) {
            Some(t) => Some((fc, t)),
            None => {
                log::warn!(
                    "{}/{}/{}: nothing to verify against",
                    fc.model_id,
                    fc.site_id,
                    fc.variable
                );
                None
            }
        })
        .collect();
    if jobs.is_empty() {
        bail!("no forecast has matching labels or observations");
    }
    let scored: Vec<MatrixScores> = jobs
        .par_iter()
        .map(|(fc, t)| score_matrix(fc, t, &leads, &slices, spec, tau_hourly, p_star))
        .collect::<anyhow::Result<_>>()?;

    let mut reports = Vec::new();
    let mut pooled: BTreeMap<PoolKey, (Vec<(f64, f64)>, usize)> = BTreeMap::new();
    let mut windowed: BTreeMap<String, (Pairs, usize, Vec<f64>)> = BTreeMap::new();
    let mut windowed_reports = Vec::new();
    for m in scored {
        reports.extend(m.reports);
        for (key, pairs, dropped) in m.pooled {
            let slot = pooled.entry(key).or_default();
            slot.0.extend(pairs);
            slot.1 += dropped;
        }
        if let Some((r, pairs)) = m.windowed {
            let slot = windowed.entry(r.model_id.clone()).or_default();
            slot.0.extend(pairs);
            slot.1 += r.n_dropped;
            if let Some(&f1) = r.metrics.get("f1") {
                slot.2.push(f1);
            }
            windowed_reports.push(r);
        }
    }
    for ((model, variable, lead, si), (pairs, dropped)) in &pooled {
        let mut r = ScoreReport::new(model, POOLED, variable.name(), &slices[*si].name);
        r.lead_h = Some(*lead);
        r.n_dropped = *dropped;
        score(&mut r, *variable, pairs, tau_hourly)?;
        reports.push(r);
    }
    reports.extend(windowed_reports);
    let mut out = OutDir::create(&args.out)?;
    for (model, (pairs, dropped, station_f1)) in &windowed {
        let mut r = ScoreReport::new(model, POOLED, Variable::IcingProbability.name(), "all");
        r.window_h = Some(spec.length_hours);
        r.n_dropped = *dropped;
        score(&mut r, Variable::IcingProbability, pairs, p_star)?;
        reports.push(r);
        curves(&mut out, model, pairs, station_f1)?;
    }
    add_skill(&mut reports, &cfg.options.baseline_model)?;
    add_fraction_beating(&mut reports, &cfg.options.baseline_model);

    write_reports(&mut out, "report", &reports)?;
    write_qc(&mut out, inputs.qc())?;
    out.config(&cfg)?;
    out.finish("verify", config_map(&cfg), inputs.input_hashes())?;
    if reports.iter().all(|r| r.metrics.is_empty()) {
        return Ok(Status::UndefinedOnly);
    }
    Ok(Status::Ok)
}
