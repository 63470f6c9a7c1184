//! Cost-loss de-icing decisions.
//!
//! Dispatching costs `C_d` regardless of outcome; an event without dispatch
//! costs `L`; with dispatch only `(1 - alpha) L` remains. Dispatch is optimal
//! at `p >= p* = C_d / (alpha L)`.

mod policy;
mod simulate;
mod sweep;

pub use policy::{policy_step, Decision, PolicyState, Tier};
pub use simulate::{
    build_instances, evaluate_policies, mean_cost_by_site, rev, rev_from_costs, simulate, write_ledger_csv, Accounting,
    AssetInput, ClimSource, CostComponents, EpisodeLedger, Instance, InstanceSet, LedgerEntry, Policy,
    PolicyComparison, RevOutcome, Rule, SimOptions, LEDGER_CSV_HEADER,
};
pub use sweep::{parse_grid, sensitivity_sweep, write_sweep_csv, SweepAxis, SweepRow, SWEEP_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defaults follow the reference parameter table: $50k ground dispatch,
/// $75k helicopter adder, 60% mitigation, $400k avoidable loss, 24 h window
/// at a 6 h cadence, no mobilization lead, watch at 0.7 p*, hysteresis
/// `p_on = p*`, `p_off = 0.6 p*`, `k = 2`, three crews at 12 crew-hours each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    pub c_d: f64,
    pub heli_adder: f64,
    pub alpha: f64,
    pub loss: f64,
    pub window: u32,
    pub cadence: u32,
    pub tau: u32,
    pub eta: f64,
    pub p_on_factor: f64,
    pub p_off_factor: f64,
    pub persistence: u32,
    pub crews: u32,
    pub crew_hours: f64,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            c_d: 50_000.0,
            heli_adder: 75_000.0,
            alpha: 0.6,
            loss: 400_000.0,
            window: 24,
            cadence: 6,
            tau: 0,
            eta: 0.7,
            p_on_factor: 1.0,
            p_off_factor: 0.6,
            persistence: 2,
            crews: 3,
            crew_hours: 12.0,
        }
    }
}

impl DecisionParams {
    /// Hard domain checks. Returns a warning string when dispatch can never pay off.
    pub fn validate(&self) -> Result<Option<String>> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain("alpha", self.alpha, "(0, 1]"));
        }
        if !(self.c_d >= 0.0) {
            return Err(Error::domain("c_d", self.c_d, ">= 0"));
        }
        if !(self.heli_adder >= 0.0) {
            return Err(Error::domain("heli_adder", self.heli_adder, ">= 0"));
        }
        if !(self.loss > 0.0) {
            return Err(Error::domain("loss", self.loss, "> 0"));
        }
        if self.window == 0 {
            return Err(Error::domain("window", 0.0, ">= 1"));
        }
        if self.cadence == 0 {
            return Err(Error::domain("cadence", 0.0, ">= 1"));
        }
        if self.tau >= self.window {
            return Err(Error::domain("tau", self.tau as f64, "< window"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::domain("eta", self.eta, "(0, 1)"));
        }
        if !(self.p_off_factor >= 0.0 && self.p_off_factor < self.p_on_factor) {
            return Err(Error::domain("p_off_factor", self.p_off_factor, "[0, p_on_factor)"));
        }
        if self.persistence == 0 {
            return Err(Error::domain("persistence", 0.0, ">= 1"));
        }
        if !(self.crew_hours > 0.0) {
            return Err(Error::domain("crew_hours", self.crew_hours, "> 0"));
        }
        let warning = (self.c_d >= self.alpha * self.loss).then(|| {
            format!(
                "c_d={} >= alpha*loss={}: dispatch is never cost-effective",
                self.c_d,
                self.alpha * self.loss
            )
        });
        Ok(warning)
    }

    pub fn cost_model(&self, helicopter_access: bool) -> CostModel {
        CostModel {
            c_d: self.c_d + if helicopter_access { self.heli_adder } else { 0.0 },
            alpha: self.alpha,
            loss: self.loss,
        }
    }

    /// Ground-access optimal threshold.
    pub fn p_star(&self) -> Result<f64> {
        optimal_threshold(&self.cost_model(false)).map(|t| t.p_star)
    }

    /// Crew-hours available per issuance.
    pub fn crew_budget(&self) -> f64 {
        self.crews as f64 * self.cadence as f64
    }

    /// Key/value pairs in field order, as accepted by the config loader.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        use crate::format::fmt_num;
        vec![
            ("c_d", fmt_num(self.c_d)),
            ("heli_adder", fmt_num(self.heli_adder)),
            ("alpha", fmt_num(self.alpha)),
            ("loss", fmt_num(self.loss)),
            ("window", self.window.to_string()),
            ("cadence", self.cadence.to_string()),
            ("tau", self.tau.to_string()),
            ("eta", fmt_num(self.eta)),
            ("p_on_factor", fmt_num(self.p_on_factor)),
            ("p_off_factor", fmt_num(self.p_off_factor)),
            ("persistence", self.persistence.to_string()),
            ("crews", self.crews.to_string()),
            ("crew_hours", fmt_num(self.crew_hours)),
        ]
    }
}

/// Per-asset dispatch cost, mitigation effectiveness and avoidable loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub c_d: f64,
    pub alpha: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub p_star: f64,
    /// The raw ratio exceeded 1 and was clamped.
    pub clamped: bool,
}

pub fn optimal_threshold(cost: &CostModel) -> Result<Threshold> {
    let avoidable = cost.alpha * cost.loss;
    if !(avoidable > 0.0) {
        return Err(Error::domain("alpha*loss", avoidable, "> 0"));
    }
    let raw = cost.c_d / avoidable;
    if raw > 1.0 {
        // Sweeps and simulations call this per asset; say it once per ratio.
        static LAST: std::sync::Mutex<Option<u64>> = std::sync::Mutex::new(None);
        let mut last = LAST.lock().unwrap_or_else(|e| e.into_inner());
        if *last != Some(raw.to_bits()) {
            log::warn!("p* = {raw} exceeds 1; clamped");
            *last = Some(raw.to_bits());
        }
        return Ok(Threshold {
            p_star: 1.0,
            clamped: true,
        });
    }
    Ok(Threshold {
        p_star: raw.max(0.0),
        clamped: false,
    })
}

/// Threshold on the window-mean hourly probability equivalent to `p_star`
/// on the window probability, under the Poisson approximation.
pub fn mean_prob_threshold(p_star: f64, hours: u32) -> Result<f64> {
    if p_star >= 1.0 {
        return Err(Error::UnreachableThreshold(p_star));
    }
    if !(p_star >= 0.0) {
        return Err(Error::domain("p_star", p_star, "[0, 1)"));
    }
    if hours == 0 {
        return Err(Error::domain("hours", 0.0, ">= 1"));
    }
    Ok(-(-p_star).ln_1p() / hours as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Dispatch,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedCosts {
    pub dispatch: f64,
    pub hold: f64,
    pub action: Action,
}

/// Expected cost of each action under event probability `p`; ties dispatch.
pub fn expected_costs(p: f64, cost: &CostModel) -> Result<ExpectedCosts> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p", p, "[0, 1]"));
    }
    let dispatch = cost.c_d + p * (1.0 - cost.alpha) * cost.loss;
    let hold = p * cost.loss;
    Ok(ExpectedCosts {
        dispatch,
        hold,
        action: if dispatch <= hold {
            Action::Dispatch
        } else {
            Action::Hold
        },
    })
}
