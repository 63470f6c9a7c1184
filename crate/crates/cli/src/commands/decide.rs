use std::collections::BTreeMap;

use anyhow::{bail, Context};
use gridwx_core::decide::{
    evaluate_policies, mean_cost_by_site, parse_grid, sensitivity_sweep, write_ledger_csv, write_sweep_csv, AssetInput,
    ClimSource, InstanceSet, PolicyComparison, SimOptions, SweepAxis,
};
use gridwx_core::format::{fmt_num, fmt_opt};
use gridwx_core::{ForecastMatrix, ObservationSeries, QcFlag, RunConfig, Variable};
use rayon::prelude::*;

use super::{line, write_qc};
use crate::data::{resolve_config, Inputs};
use crate::out::{config_map, OutDir};
use crate::{RunArgs, Status};

struct ModelInstances {
    model: String,
    set: InstanceSet,
}

/// Pooled hourly event frequency over valid labels before `before`, or over
/// all labels when the training split is empty.
fn pooled_rate(labels: &BTreeMap<String, ObservationSeries>, before: Option<gridwx_core::HourStamp>) -> f64 {
    let count = |cut: Option<gridwx_core::HourStamp>| {
        let (mut hits, mut n) = (0usize, 0usize);
        for s in labels.values() {
            for (h, x) in s.iter() {
                if x.qc == QcFlag::Valid && cut.is_none_or(|b| h < b) {
                    n += 1;
                    hits += usize::from(x.value >= 0.5);
                }
            }
        }
        (hits, n)
    };
    let (hits, n) = match count(before) {
        (_, 0) => count(None),
        c => c,
    };
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Decision instances per forecast model. Climatology comes from the
/// baseline model when the catalog carries it, otherwise from monthly label
/// frequencies on the training split, in which case only issuances after
/// the split are scored.
fn instance_sets(inputs: &mut Inputs, cfg: &RunConfig) -> anyhow::Result<Vec<ModelInstances>> {
    let forecasts: Vec<ForecastMatrix> = inputs
        .forecasts()?
        .into_iter()
        .filter(|f| f.variable == Variable::IcingProbability)
        .collect();
    let labels = inputs.icing_labels(cfg)?;
    let baseline = cfg.options.baseline_model.as_str();
    let train_end = cfg.options.train_end;

    let clim_matrices: BTreeMap<&str, &ForecastMatrix> = forecasts
        .iter()
        .filter(|f| f.model_id == baseline)
        .map(|f| (f.site_id.as_str(), f))
        .collect();
    let from_labels = clim_matrices.is_empty();
    let pooled = pooled_rate(&labels, train_end);
    if from_labels {
        log::info!("no `{baseline}` forecasts; climatology from monthly label frequencies (pooled {pooled})");
    }

    let mut models: Vec<&str> = Vec::new();
    for f in &forecasts {
        if f.model_id != baseline && !models.contains(&f.model_id.as_str()) {
            models.push(&f.model_id);
        }
    }
    if models.is_empty() {
        bail!("no icing-probability forecasts other than the `{baseline}` baseline");
    }

    models
        .par_iter()
        .map(|&model| {
            let mut assets = Vec::new();
            for site in &inputs.sites {
                let id = site.site_id.as_str();
                let Some(fc) = forecasts.iter().find(|f| f.model_id == model && f.site_id == id) else {
                    continue;
                };
                let Some(y) = labels.get(id) else {
                    log::warn!("{model}/{id}: no icing labels; asset skipped");
                    continue;
                };
                let climatology = if from_labels {
                    ClimSource::monthly_from_labels(y, train_end, pooled)
                } else if let Some(m) = clim_matrices.get(id) {
                    ClimSource::Matrix((*m).clone())
                } else {
                    log::warn!("{model}/{id}: no `{baseline}` forecast; asset skipped");
                    continue;
                };
                assets.push(AssetInput {
                    site_id: id.to_string(),
                    helicopter_access: site.helicopter_access,
                    forecast: fc.clone(),
                    climatology,
                    labels: y.clone(),
                });
            }
            if assets.is_empty() {
                bail!("{model}: no asset has both forecasts and labels");
            }
            let mut set = gridwx_core::decide::build_instances(&assets, &cfg.params, cfg.options.coverage_min)
                .with_context(|| format!("building instances for {model}"))?;
            if let (true, Some(e)) = (from_labels, train_end) {
                set.instances.retain(|i| i.issue >= e);
            }
            Ok(ModelInstances {
                model: model.to_string(),
                set,
            })
        })
        .collect()
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions {
        capacity: cfg.options.capacity,
        accounting: cfg.options.accounting,
    }
}

pub fn run(args: &RunArgs) -> anyhow::Result<Status> {
    let mut inputs = Inputs::open(&args.catalog)?;
    let cfg = resolve_config(args, &inputs.catalog)?;
    let sets = instance_sets(&mut inputs, &cfg)?;
    let opts = sim_options(&cfg);
    let results: Vec<PolicyComparison> = sets
        .par_iter()
        .map(|m| evaluate_policies(&m.set, &cfg.params, &opts, cfg.options.policy))
        .collect::<gridwx_core::Result<_>>()?;
    let p_star = cfg.params.p_star()?;
    let rule = match cfg.options.policy {
        gridwx_core::decide::Rule::Threshold => "threshold",
        gridwx_core::decide::Rule::Hysteresis => "hysteresis",
    };

    let mut out = OutDir::create(&args.out)?;
    out.with("rev.csv", |w| {
        line(
            w,
            &[
                "model_id",
                "rule",
                "p_star",
                "n_instances",
                "n_undefined",
                "n_dispatch",
                "c_fcst",
                "c_clim",
                "c_perf",
                "rev",
                "note",
            ],
        )?;
        for (m, r) in sets.iter().zip(&results) {
            let (rev, note) = match &r.rev {
                Ok(o) => (
                    fmt_num(o.rev),
                    if o.out_of_range {
                        "out_of_range".to_string()
                    } else {
                        String::new()
                    },
                ),
                Err(e) => (String::new(), format!("undefined: {e}")),
            };
            line(
                w,
                &[
                    &m.model,
                    rule,
                    &fmt_num(p_star),
                    &m.set.instances.len().to_string(),
                    &m.set.undefined.to_string(),
                    &r.forecast.dispatches().to_string(),
                    &fmt_num(r.forecast.mean_cost()),
                    &fmt_num(r.climatology.mean_cost()),
                    &fmt_num(r.perfect.mean_cost()),
                    &rev,
                    &note,
                ],
            )?;
        }
        Ok(())
    })?;
    out.with("rev_sites.csv", |w| {
        line(w, &["model_id", "site_id", "c_fcst", "c_clim", "c_perf", "rev"])?;
        for (m, r) in sets.iter().zip(&results) {
            let (f, c, p) = (
                mean_cost_by_site(&r.forecast),
                mean_cost_by_site(&r.climatology),
                mean_cost_by_site(&r.perfect),
            );
            for (site, cf) in &f {
                let (cc, cp) = (c[site], p[site]);
                let rev = gridwx_core::decide::rev_from_costs(*cf, cc, cp).ok().map(|o| o.rev);
                line(
                    w,
                    &[&m.model, site, &fmt_num(*cf), &fmt_num(cc), &fmt_num(cp), &fmt_opt(rev)],
                )?;
            }
        }
        Ok(())
    })?;
    for (m, r) in sets.iter().zip(&results) {
        out.with(&format!("ledger_{}.csv", m.model), |w| {
            Ok(write_ledger_csv(w, &[&r.forecast, &r.climatology, &r.perfect])?)
        })?;
    }
    write_qc(&mut out, inputs.qc())?;
    out.config(&cfg)?;
    out.finish("decide", config_map(&cfg), inputs.input_hashes())?;
    if results.iter().all(|r| r.rev.is_err()) {
        return Ok(Status::UndefinedOnly);
    }
    Ok(Status::Ok)
}

pub fn sweep(args: &RunArgs, axis: &str, grid: &str) -> anyhow::Result<Status> {
    let axis: SweepAxis = axis.parse()?;
    let values = parse_grid(grid)?;
    let mut inputs = Inputs::open(&args.catalog)?;
    let cfg = resolve_config(args, &inputs.catalog)?;
    let sets = instance_sets(&mut inputs, &cfg)?;
    let opts = sim_options(&cfg);
    let rows: Vec<_> = sets
        .par_iter()
        .map(|m| sensitivity_sweep(&m.set, &cfg.params, &opts, cfg.options.policy, axis, &values))
        .collect::<gridwx_core::Result<_>>()?;

    let mut out = OutDir::create(&args.out)?;
    for (m, r) in sets.iter().zip(&rows) {
        out.with(&format!("sweep_{}.csv", m.model), |w| Ok(write_sweep_csv(w, r)?))?;
    }
    write_qc(&mut out, inputs.qc())?;
    out.config(&cfg)?;
    let mut config = config_map(&cfg);
    config.insert("sweep_axis".into(), axis.as_str().into());
    config.insert("sweep_grid".into(), grid.into());
    out.finish("sweep", config, inputs.input_hashes())?;
    if rows.iter().flatten().all(|r| r.rev.is_none()) {
        return Ok(Status::UndefinedOnly);
    }
    Ok(Status::Ok)
}
