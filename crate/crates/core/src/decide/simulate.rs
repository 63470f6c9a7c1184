//! Issuance-by-issuance policy simulation, realized costs and REV.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::policy::{policy_step, Decision, PolicyState};
use super::{expected_costs, optimal_threshold, Action, CostModel, DecisionParams};
use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::timebase::{window_any, window_prob, ForecastMatrix, HourStamp, ObservationSeries, WindowSpec};

/// Where an asset's climatological hourly probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClimSource {
    /// A forecast matrix (e.g. a `climatology` model in the catalog).
    Matrix(ForecastMatrix),
    /// Hourly event frequency per calendar month (index 0 = January).
    Monthly([f64; 12]),
}

impl ClimSource {
    /// Per-month hourly frequency from training labels, falling back to
    /// `pooled` for months without valid training hours.
    pub fn monthly_from_labels(labels: &ObservationSeries, before: Option<HourStamp>, pooled: f64) -> Self {
        let mut hits = [0usize; 12];
        let mut n = [0usize; 12];
        for (h, s) in labels.iter() {
            if before.is_some_and(|b| h >= b) || s.qc != crate::timebase::QcFlag::Valid {
                continue;
            }
            let m = h.month() as usize - 1;
            n[m] += 1;
            if s.value >= 0.5 {
                hits[m] += 1;
            }
        }
        let mut freq = [pooled; 12];
        for m in 0..12 {
            if n[m] > 0 {
                freq[m] = hits[m] as f64 / n[m] as f64;
            }
        }
        ClimSource::Monthly(freq)
    }

    fn window_q(&self, issue: HourStamp, start: u32, end: u32) -> Result<Option<f64>> {
        match self {
            ClimSource::Matrix(m) => m.lead_slice(issue, start, end).map(|p| window_prob(&p)).transpose(),
            ClimSource::Monthly(freq) => {
                let p: Vec<f64> = (start..end)
                    .map(|h| freq[issue.add_hours(h as i64).month() as usize - 1])
                    .collect();
                window_prob(&p).map(Some)
            }
        }
    }
}

/// Everything the simulator needs for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetInput {
    pub site_id: String,
    pub helicopter_access: bool,
    /// Hourly icing probabilities.
    pub forecast: ForecastMatrix,
    pub climatology: ClimSource,
    /// Binary icing labels.
    pub labels: ObservationSeries,
}

/// One (issuance, asset) decision problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Instance {
    pub issue: HourStamp,
    /// Index into the asset list.
    pub asset: usize,
    pub q_forecast: f64,
    pub q_climatology: f64,
    pub outcome: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    pub site_ids: Vec<String>,
    pub helicopter: Vec<bool>,
    /// Sorted by (issue, asset).
    pub instances: Vec<Instance>,
    /// Issuances skipped for missing forecast leads or insufficient label coverage.
    pub undefined: usize,
}

/// Compute window probabilities over `[t + tau, t + window)` and outcomes
/// over the same hours for every forecast issuance.
pub fn build_instances(assets: &[AssetInput], params: &DecisionParams, coverage_min: f64) -> Result<InstanceSet> {
    let span = params.window - params.tau;
    let spec = WindowSpec::new(span, coverage_min)?;
    let mut instances = Vec::new();
    let mut undefined = 0;
    for (idx, a) in assets.iter().enumerate() {
        if a.forecast.cadence_hours != params.cadence {
            return Err(Error::Schema(format!(
                "{}: forecast cadence {} h does not match decision cadence {} h",
                a.site_id, a.forecast.cadence_hours, params.cadence
            )));
        }
        for issue in a.forecast.issues() {
            let q_f = a
                .forecast
                .lead_slice(issue, params.tau, params.window)
                .map(|p| window_prob(&p))
                .transpose()?;
            let q_c = a.climatology.window_q(issue, params.tau, params.window)?;
            let y = window_any(&a.labels, issue.add_hours(params.tau as i64), spec);
            match (q_f, q_c, y) {
                (Some(q_forecast), Some(q_climatology), Some(outcome)) => instances.push(Instance {
                    issue,
                    asset: idx,
                    q_forecast,
                    q_climatology,
                    outcome,
                }),
                _ => undefined += 1,
            }
        }
    }
    instances.sort_by_key(|i| (i.issue, i.asset));
    Ok(InstanceSet {
        site_ids: assets.iter().map(|a| a.site_id.clone()).collect(),
        helicopter: assets.iter().map(|a| a.helicopter_access).collect(),
        instances,
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Dispatch iff the expected cost of dispatch does not exceed holding.
    Threshold,
    /// Watch/dispatch tiers with two thresholds and persistence.
    Hysteresis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Policy {
    Forecast(Rule),
    /// The same rule applied to climatological probabilities.
    Climatology(Rule),
    /// Acts with knowledge of the outcome.
    Perfect,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Forecast(Rule::Threshold) => "threshold",
            Policy::Forecast(Rule::Hysteresis) => "hysteresis",
            Policy::Climatology(_) => "climatology",
            Policy::Perfect => "perfect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Every dispatching issuance pays the dispatch cost.
    Instance,
    /// Consecutive dispatches of one asset pay the dispatch cost once.
    Episode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Enforce the per-issuance crew-hour budget.
    pub capacity: bool,
    pub accounting: Accounting,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            capacity: false,
            accounting: Accounting::Instance,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostComponents {
    pub dispatch: f64,
    /// Unmitigated share `(1 - alpha) L` of an event after dispatch.
    pub residual: f64,
    /// Full loss of an event without dispatch.
    pub loss: f64,
}

impl CostComponents {
    pub fn total(&self) -> f64 {
        self.dispatch + self.residual + self.loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub issue: HourStamp,
    pub site_id: String,
    pub q: f64,
    pub decision: Decision,
    pub outcome: bool,
    pub cost: CostComponents,
    /// Dispatch wanted but refused for lack of crew hours.
    pub capacity_denied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLedger {
    pub policy: Policy,
    pub entries: Vec<LedgerEntry>,
}

impl EpisodeLedger {
    pub fn total_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.cost.total()).sum()
    }

    /// Mean realized cost per instance.
    pub fn mean_cost(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.total_cost() / self.entries.len() as f64
        }
    }

    pub fn dispatches(&self) -> usize {
        self.entries.iter().filter(|e| e.decision.is_dispatch()).count()
    }
}

fn realized(dispatch: bool, outcome: bool, cost: &CostModel) -> CostComponents {
    match (dispatch, outcome) {
        (true, true) => CostComponents {
            dispatch: cost.c_d,
            residual: (1.0 - cost.alpha) * cost.loss,
            loss: 0.0,
        },
        (true, false) => CostComponents {
            dispatch: cost.c_d,
            ..Default::default()
        },
        (false, true) => CostComponents {
            loss: cost.loss,
            ..Default::default()
        },
        (false, false) => CostComponents::default(),
    }
}

/// Run one policy over every instance.
pub fn simulate(
    set: &InstanceSet,
    params: &DecisionParams,
    opts: &SimOptions,
    policy: Policy,
) -> Result<EpisodeLedger> {
    let costs: Vec<CostModel> = set.helicopter.iter().map(|&h| params.cost_model(h)).collect();
    let p_stars: Vec<f64> = costs
        .iter()
        .map(|c| optimal_threshold(c).map(|t| t.p_star))
        .collect::<Result<_>>()?;
    let mut states = vec![PolicyState::default(); set.site_ids.len()];
    let mut last_dispatched = vec![false; set.site_ids.len()];
    let mut entries = Vec::with_capacity(set.instances.len());

    let mut start = 0;
    while start < set.instances.len() {
        let issue = set.instances[start].issue;
        let end = start + set.instances[start..].iter().take_while(|i| i.issue == issue).count();
        let group = &set.instances[start..end];

        let mut wanted: Vec<(usize, f64, Decision)> = Vec::with_capacity(group.len());
        for inst in group {
            let cost = &costs[inst.asset];
            let (q, decision) = match policy {
                Policy::Perfect => {
                    let dispatch =
                        realized(true, inst.outcome, cost).total() <= realized(false, inst.outcome, cost).total();
                    let q = if inst.outcome { 1.0 } else { 0.0 };
                    (
                        q,
                        if dispatch && inst.outcome {
                            Decision::Dispatch
                        } else {
                            Decision::None
                        },
                    )
                }
                Policy::Forecast(rule) | Policy::Climatology(rule) => {
                    let q = if matches!(policy, Policy::Forecast(_)) {
                        inst.q_forecast
                    } else {
                        inst.q_climatology
                    };
                    let d = match rule {
                        Rule::Threshold => match expected_costs(q, cost)?.action {
                            Action::Dispatch => Decision::Dispatch,
                            Action::Hold if q >= params.eta * p_stars[inst.asset] => Decision::Watch,
                            Action::Hold => Decision::None,
                        },
                        Rule::Hysteresis => {
                            let (s, d) = policy_step(states[inst.asset], q, p_stars[inst.asset], params, issue);
                            states[inst.asset] = s;
                            d
                        }
                    };
                    (q, d)
                }
            };
            wanted.push((inst.asset, q, decision));
        }

        let mut denied = vec![false; group.len()];
        if opts.capacity && policy != Policy::Perfect {
            let mut candidates: Vec<(usize, f64)> = wanted
                .iter()
                .enumerate()
                .filter(|(_, w)| w.2.is_dispatch())
                .map(|(i, w)| {
                    let c = &costs[w.0];
                    (i, w.1 * c.alpha * c.loss - c.c_d)
                })
                .collect();
            candidates.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| set.site_ids[wanted[a.0].0].cmp(&set.site_ids[wanted[b.0].0]))
            });
            let budget = params.crew_budget();
            let mut used = 0.0;
            for (i, _) in candidates {
                if used + params.crew_hours <= budget {
                    used += params.crew_hours;
                } else {
                    denied[i] = true;
                }
            }
        }

        for (k, inst) in group.iter().enumerate() {
            let (asset, q, mut decision) = wanted[k];
            if denied[k] {
                decision = Decision::Watch;
            }
            let dispatch = decision.is_dispatch();
            let mut cost = realized(dispatch, inst.outcome, &costs[asset]);
            if opts.accounting == Accounting::Episode && dispatch && last_dispatched[asset] {
                cost.dispatch = 0.0;
            }
            last_dispatched[asset] = dispatch;
            entries.push(LedgerEntry {
                issue,
                site_id: set.site_ids[asset].clone(),
                q,
                decision,
                outcome: inst.outcome,
                cost,
                capacity_denied: denied[k],
            });
        }
        start = end;
    }
    Ok(EpisodeLedger { policy, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RevOutcome {
    pub c_forecast: f64,
    pub c_climatology: f64,
    pub c_perfect: f64,
    pub rev: f64,
    /// REV fell outside [0, 1].
    pub out_of_range: bool,
}

pub fn rev_from_costs(c_forecast: f64, c_climatology: f64, c_perfect: f64) -> Result<RevOutcome> {
    let gap = c_climatology - c_perfect;
    if gap == 0.0 {
        return Err(Error::Undefined(
            "REV with climatology cost equal to perfect cost".into(),
        ));
    }
    let rev = (c_climatology - c_forecast) / gap;
    let out_of_range = !(0.0..=1.0).contains(&rev);
    if out_of_range {
        log::warn!("REV {rev} outside [0, 1]");
    }
    Ok(RevOutcome {
        c_forecast,
        c_climatology,
        c_perfect,
        rev,
        out_of_range,
    })
}

/// Relative economic value from mean realized costs.
pub fn rev(forecast: &EpisodeLedger, climatology: &EpisodeLedger, perfect: &EpisodeLedger) -> Result<RevOutcome> {
    rev_from_costs(forecast.mean_cost(), climatology.mean_cost(), perfect.mean_cost())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyComparison {
    pub forecast: EpisodeLedger,
    pub climatology: EpisodeLedger,
    pub perfect: EpisodeLedger,
    pub rev: std::result::Result<RevOutcome, String>,
}

/// Forecast, climatology and perfect ledgers plus REV for one rule.
pub fn evaluate_policies(
    set: &InstanceSet,
    params: &DecisionParams,
    opts: &SimOptions,
    rule: Rule,
) -> Result<PolicyComparison> {
    let forecast = simulate(set, params, opts, Policy::Forecast(rule))?;
    let climatology = simulate(set, params, opts, Policy::Climatology(rule))?;
    let perfect = simulate(set, params, opts, Policy::Perfect)?;
    let rev = rev(&forecast, &climatology, &perfect).map_err(|e| e.to_string());
    Ok(PolicyComparison {
        forecast,
        climatology,
        perfect,
        rev,
    })
}

pub const LEDGER_CSV_HEADER: &str = "issue_utc,site_id,policy,q,decision,outcome,cost_usd,components";

pub fn write_ledger_csv<W: Write>(mut w: W, ledgers: &[&EpisodeLedger]) -> std::io::Result<()> {
    writeln!(w, "{LEDGER_CSV_HEADER}")?;
    for l in ledgers {
        for e in &l.entries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},dispatch={};residual={};loss={}{}",
                e.issue,
                e.site_id,
                l.policy.name(),
                fmt_num(e.q),
                e.decision.as_str(),
                u8::from(e.outcome),
                fmt_num(e.cost.total()),
                fmt_num(e.cost.dispatch),
                fmt_num(e.cost.residual),
                fmt_num(e.cost.loss),
                if e.capacity_denied { ";capacity_denied" } else { "" },
            )?;
        }
    }
    Ok(())
}

/// Mean realized cost per site, for per-asset breakdowns.
pub fn mean_cost_by_site(ledger: &EpisodeLedger) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for e in &ledger.entries {
        let slot = acc.entry(e.site_id.clone()).or_default();
        slot.0 += e.cost.total();
        slot.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
