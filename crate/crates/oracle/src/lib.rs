//! Brute-force reference computations.
//!
//! Everything here is written directly from the metric and cost definitions,
//! with no code shared with `gridwx-core`. The functions are deliberately
//! naive (quadratic scans, explicit enumeration) so that they can serve as
//! independent ground truth for the optimized paths.

/// Union probability of a window of hourly probabilities, as a direct product.
pub fn window_union(p: &[f64]) -> f64 {
    let mut none = 1.0;
    for &x in p {
        none *= 1.0 - x;
    }
    1.0 - none
}

/// Average precision by explicit threshold enumeration.
///
/// For each distinct score taken as a threshold (highest first), every item is
/// re-counted from scratch. Each step contributes `(delta tp / positives) *
/// precision`. Returns `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for &t in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (tp - prev_tp) as f64 / positives as f64 * precision;
        prev_tp = tp;
    }
    Some(ap)
}

/// ROC AUC as the probability that a positive outranks a negative, with half
/// credit for ties, over all positive/negative pairs.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins2 = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins2 += 2;
            } else if scores[i] == scores[j] {
                wins2 += 1;
            }
        }
    }
    if pairs == 0 {
        None
    } else {
        Some(wins2 as f64 / (2 * pairs) as f64)
    }
}

/// `(ap, auc)` by brute force.
pub fn rank_metrics(scores: &[f64], labels: &[bool]) -> (Option<f64>, Option<f64>) {
    (average_precision(scores, labels), pairwise_auc(scores, labels))
}

/// Intersection over union of the alert index set and the event index set.
pub fn alert_event_iou(alerts: &[bool], events: &[bool]) -> Option<f64> {
    let a: std::collections::BTreeSet<usize> = alerts.iter().enumerate().filter_map(|(i, &x)| x.then_some(i)).collect();
    let b: std::collections::BTreeSet<usize> = events.iter().enumerate().filter_map(|(i, &x)| x.then_some(i)).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return None;
    }
    Some(a.intersection(&b).count() as f64 / union as f64)
}

/// One decision instance for the cost oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostInstance {
    /// Forecast window probability.
    pub q_forecast: f64,
    /// Climatology window probability.
    pub q_climatology: f64,
    /// Whether the event occurred.
    pub outcome: bool,
    pub dispatch_cost: f64,
    pub effectiveness: f64,
    pub loss: f64,
}

impl CostInstance {
    fn realized(&self, dispatch: bool) -> f64 {
        match (dispatch, self.outcome) {
            (true, true) => self.dispatch_cost + (1.0 - self.effectiveness) * self.loss,
            (true, false) => self.dispatch_cost,
            (false, true) => self.loss,
            (false, false) => 0.0,
        }
    }

    fn expected(&self, dispatch: bool, p: f64) -> f64 {
        if dispatch {
            self.dispatch_cost + p * (1.0 - self.effectiveness) * self.loss
        } else {
            p * self.loss
        }
    }

    /// Choose the action with the lower expected cost under `p`; ties dispatch.
    fn decide(&self, p: f64) -> bool {
        self.expected(true, p) <= self.expected(false, p)
    }
}

/// Mean realized costs and the resulting relative economic value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevOracle {
    pub c_forecast: f64,
    pub c_climatology: f64,
    pub c_perfect: f64,
    pub rev: Option<f64>,
}

/// Evaluate the expected-cost rule on forecast and climatology probabilities
/// and the per-instance minimum for the perfect policy.
pub fn brute_force_rev(instances: &[CostInstance]) -> RevOracle {
    let n = instances.len().max(1) as f64;
    let mut fc = 0.0;
    let mut cl = 0.0;
    let mut pf = 0.0;
    for inst in instances {
        fc += inst.realized(inst.decide(inst.q_forecast));
        cl += inst.realized(inst.decide(inst.q_climatology));
        pf += inst.realized(true).min(inst.realized(false));
    }
    let (fc, cl, pf) = (fc / n, cl / n, pf / n);
    RevOracle {
        c_forecast: fc,
        c_climatology: cl,
        c_perfect: pf,
        rev: rev_from_costs(fc, cl, pf),
    }
}

/// REV from three mean costs; `None` when climatology already equals perfect.
pub fn rev_from_costs(c_forecast: f64, c_climatology: f64, c_perfect: f64) -> Option<f64> {
    let gap = c_climatology - c_perfect;
    if gap == 0.0 {
        None
    } else {
        Some((c_climatology - c_forecast) / gap)
    }
}

/// Lowest total expected cost (under each instance's own forecast
/// probability) reachable by any single probability threshold applied to all
/// instances. Candidate thresholds are every observed probability plus one
/// above the maximum (never act).
pub fn best_threshold_expected_cost(instances: &[CostInstance]) -> f64 {
    let mut candidates: Vec<f64> = instances.iter().map(|i| i.q_forecast).collect();
    candidates.push(f64::INFINITY);
    let mut best = f64::INFINITY;
    for &theta in &candidates {
        let total: f64 = instances
            .iter()
            .map(|i| i.expected(i.q_forecast >= theta, i.q_forecast))
            .sum();
        best = best.min(total);
    }
    best
}

/// Total expected cost when each instance acts on its own expected-cost rule.
pub fn rule_expected_cost(instances: &[CostInstance]) -> f64 {
    instances
        .iter()
        .map(|i| i.expected(i.decide(i.q_forecast), i.q_forecast))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_example() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let l = [true, false, true, false];
        let (ap, auc) = rank_metrics(&s, &l);
        assert!((ap.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(auc, Some(0.75));
    }

    #[test]
    fn degenerate_labels() {
        let s = [0.3, 0.2];
        assert_eq!(rank_metrics(&s, &[true, true]), (Some(1.0), None));
        assert_eq!(pairwise_auc(&[0.1, 0.9], &[true, false]), Some(0.0));
    }

    #[test]
    fn single_dispatch_instance() {
        let inst = CostInstance {
            q_forecast: 0.3,
            q_climatology: 0.0,
            outcome: true,
            dispatch_cost: 50_000.0,
            effectiveness: 0.6,
            loss: 400_000.0,
        };
        let r = brute_force_rev(&[inst]);
        assert!((r.c_forecast - 210_000.0).abs() < 1e-9);
        assert_eq!(r.c_climatology, 400_000.0);
        assert!((r.c_perfect - 210_000.0).abs() < 1e-9);
        assert_eq!(r.rev, Some(1.0));

        let quiet = CostInstance {
            outcome: false,
            q_forecast: 0.1,
            ..inst
        };
        assert_eq!(brute_force_rev(&[quiet]).c_forecast, 0.0);
    }

    #[test]
    fn published_triplet() {
        let rev = rev_from_costs(51_913.0, 69_064.0, 39_055.0).unwrap();
        assert!((rev - 0.5715).abs() < 5e-4);
    }
}
