//! Two-threshold alert state machine with a persistence requirement.

use serde::Serialize;

use super::DecisionParams;
use crate::timebase::HourStamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Idle,
    Watch,
    Dispatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    None,
    Watch,
    Dispatch,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::None => "none",
            Decision::Watch => "watch",
            Decision::Dispatch => "dispatch",
        }
    }

    pub fn is_dispatch(self) -> bool {
        self == Decision::Dispatch
    }
}

/// Per-asset alert state, advanced once per issuance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyState {
    pub tier: Tier,
    /// Consecutive issuances with `q >= p_on`, capped at `k`.
    pub counter: u32,
    pub last_transition: Option<HourStamp>,
}

impl Default for PolicyState {
    fn default() -> Self {
        PolicyState {
            tier: Tier::Idle,
            counter: 0,
            last_transition: None,
        }
    }
}

/// Advance the state machine with window probability `q` issued at `issue`.
///
/// * `q >= eta p*` raises a watch.
/// * `q >= p_on` increments the exceedance counter; `q < p_off` resets it;
///   values in between hold it.
/// * Dispatch fires when the counter reaches `k` and persists until `q < p_off`.
pub fn policy_step(
    state: PolicyState,
    q: f64,
    p_star: f64,
    params: &DecisionParams,
    issue: HourStamp,
) -> (PolicyState, Decision) {
    let p_on = params.p_on_factor * p_star;
    let p_off = params.p_off_factor * p_star;
    let k = params.persistence;
    let watch = q >= params.eta * p_star;

    let mut counter = state.counter;
    if q >= p_on {
        counter = (counter + 1).min(k);
    } else if q < p_off {
        counter = 0;
    }

    let tier = match state.tier {
        Tier::Dispatched if q >= p_off => Tier::Dispatched,
        Tier::Dispatched => {
            counter = 0;
            if watch {
                Tier::Watch
            } else {
                Tier::Idle
            }
        }
        _ if counter >= k => Tier::Dispatched,
        _ if watch => Tier::Watch,
        _ => Tier::Idle,
    };

    let decision = match tier {
        Tier::Dispatched => Decision::Dispatch,
        Tier::Watch => Decision::Watch,
        Tier::Idle => Decision::None,
    };
    let last_transition = if tier != state.tier {
        Some(issue)
    } else {
        state.last_transition
    };
    (
        PolicyState {
            tier,
            counter,
            last_transition,
        },
        decision,
    )
}
