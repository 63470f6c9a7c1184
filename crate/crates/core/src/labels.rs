//! Binary icing targets from utility sensors: cumulative de-icing cycle
//! counters and wind-farm production against the farm power curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timebase::{HourStamp, ObservationSeries, QcFlag, Sample, Variable};

/// Cumulative de-icing cycle count per hour at one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleCounterSeries {
    pub site_id: String,
    samples: Vec<(HourStamp, u64)>,
}

impl CycleCounterSeries {
    pub fn new(site_id: impl Into<String>, samples: Vec<(HourStamp, u64)>) -> Result<Self> {
        let site_id = site_id.into();
        if let Some(w) = samples.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::Schema(format!(
                "{site_id}: cycle counter timestamps not strictly increasing at {}",
                w[1].0
            )));
        }
        Ok(CycleCounterSeries { site_id, samples })
    }

    pub fn samples(&self) -> &[(HourStamp, u64)] {
        &self.samples
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CounterQc {
    /// Hours at which the counter decreased.
    pub resets: Vec<HourStamp>,
    pub events: usize,
}

/// Hour `t` is an event when the count rose since the previous sample.
///
/// The first hour has no predecessor and is emitted as `0` flagged `missing`.
/// A decrease is a counter reset: the hour is `suspect` and carries no event.
pub fn sygivre_to_binary(c: &CycleCounterSeries) -> (ObservationSeries, CounterQc) {
    let mut qc = CounterQc::default();
    let mut out = Vec::with_capacity(c.samples.len());
    let mut prev: Option<u64> = None;
    for &(hour, count) in &c.samples {
        let sample = match prev {
            None => Sample {
                value: 0.0,
                qc: QcFlag::Missing,
            },
            Some(p) if count > p => {
                qc.events += 1;
                Sample::valid(1.0)
            }
            Some(p) if count < p => {
                qc.resets.push(hour);
                Sample {
                    value: 0.0,
                    qc: QcFlag::Suspect,
                }
            }
            Some(_) => Sample::valid(0.0),
        };
        out.push((hour, sample));
        prev = Some(count);
    }
    let series =
        ObservationSeries::new(c.site_id.clone(), Variable::Icing, out).expect("counter series is strictly increasing");
    (series, qc)
}

/// Farm power curve: piecewise linear between points, zero outside `[cut_in, cut_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    points: Vec<(f64, f64)>,
    pub cut_in: f64,
    pub cut_out: f64,
}

impl PowerCurve {
    pub fn new(points: Vec<(f64, f64)>, cut_in: f64, cut_out: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Schema("power curve has no points".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Schema("power curve speeds must be strictly increasing".into()));
        }
        if let Some(&(_, p)) = points.iter().find(|(_, p)| *p < 0.0 || !p.is_finite()) {
            return Err(Error::domain("power_kw", p, ">= 0"));
        }
        if !(cut_in >= 0.0 && cut_in < cut_out) {
            return Err(Error::domain("cut_in", cut_in, "[0, cut_out)"));
        }
        if let Some(&(_, p)) = points.iter().find(|(w, p)| *w < cut_in && *p != 0.0) {
            return Err(Error::domain("power_kw below cut_in", p, "0"));
        }
        Ok(PowerCurve {
            points,
            cut_in,
            cut_out,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn rated_power(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Potential farm output at hub wind `wind`, kW.
pub fn potential_power(curve: &PowerCurve, wind: f64) -> f64 {
    if !(wind >= curve.cut_in) || wind >= curve.cut_out {
        return 0.0;
    }
    let pts = &curve.points;
    if wind <= pts[0].0 {
        return pts[0].1;
    }
    let i = pts.partition_point(|p| p.0 <= wind);
    if i >= pts.len() {
        return pts[pts.len() - 1].1;
    }
    let (a, b) = (pts[i - 1], pts[i]);
    a.1 + (b.1 - a.1) * (wind - a.0) / (b.0 - a.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionRecord {
    pub farm_id: String,
    pub hour: HourStamp,
    /// kW.
    pub observed_power: f64,
    pub hub_wind: f64,
    /// K.
    pub hub_temp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductionLabelParams {
    /// Loss fraction at or above which an hour counts as iced.
    pub theta_loss: f64,
    /// Hub temperature at or below which icing is possible, K.
    pub t_guard: f64,
    /// Potential output below which no label is derived, kW.
    pub p_min: f64,
}

impl ProductionLabelParams {
    /// Defaults with `p_min` at 5% of the curve's rated power.
    pub fn for_curve(curve: &PowerCurve) -> Self {
        ProductionLabelParams {
            theta_loss: 0.2,
            t_guard: 275.15,
            p_min: 0.05 * curve.rated_power(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductionLabel {
    pub potential: f64,
    pub loss_fraction: Option<f64>,
    pub icing: Option<bool>,
}

pub fn icing_from_production(
    rec: &ProductionRecord,
    curve: &PowerCurve,
    params: &ProductionLabelParams,
) -> ProductionLabel {
    let potential = potential_power(curve, rec.hub_wind);
    if !(potential >= params.p_min) || potential <= 0.0 {
        return ProductionLabel {
            potential,
            loss_fraction: None,
            icing: None,
        };
    }
    let loss = (1.0 - rec.observed_power / potential).clamp(0.0, 1.0);
    ProductionLabel {
        potential,
        loss_fraction: Some(loss),
        icing: Some(loss >= params.theta_loss && rec.hub_temp <= params.t_guard),
    }
}

/// Label a farm's hourly production records; undefined hours are `missing`.
pub fn production_to_binary(
    farm_id: &str,
    records: &[ProductionRecord],
    curve: &PowerCurve,
    params: &ProductionLabelParams,
) -> Result<ObservationSeries> {
    let samples = records.iter().map(|r| {
        let label = icing_from_production(r, curve, params);
        let sample = match label.icing {
            Some(y) => Sample::valid(if y { 1.0 } else { 0.0 }),
            None => Sample {
                value: 0.0,
                qc: QcFlag::Missing,
            },
        };
        (r.hour, sample)
    });
    ObservationSeries::new(farm_id, Variable::Icing, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(n: i64) -> HourStamp {
        HourStamp::from_epoch_hours(n)
    }

    fn counter(counts: &[u64]) -> CycleCounterSeries {
        CycleCounterSeries::new("s", counts.iter().enumerate().map(|(i, c)| (h(i as i64), *c)).collect()).unwrap()
    }

    fn values(s: &ObservationSeries) -> Vec<f64> {
        s.iter().map(|(_, x)| x.value).collect()
    }

    #[test]
    fn counter_examples() {
        let (y, qc) = sygivre_to_binary(&counter(&[0, 0, 1, 1, 3]));
        assert_eq!(values(&y), vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(qc.events, 2);
        assert_eq!(y.get(h(0)).unwrap().qc, QcFlag::Missing);

        let (y, _) = sygivre_to_binary(&counter(&[4, 4, 4]));
        assert!(values(&y).iter().all(|&v| v == 0.0));

        let (y, qc) = sygivre_to_binary(&counter(&[5, 2]));
        assert_eq!(y.get(h(1)).unwrap().qc, QcFlag::Suspect);
        assert_eq!(y.get(h(1)).unwrap().value, 0.0);
        assert_eq!(qc.resets, vec![h(1)]);
    }

    fn curve() -> PowerCurve {
        PowerCurve::new(
            vec![
                (0.0, 0.0),
                (3.0, 0.0),
                (5.0, 100.0),
                (7.0, 300.0),
                (12.0, 1000.0),
                (25.0, 1000.0),
            ],
            3.0,
            25.0,
        )
        .unwrap()
    }

    #[test]
    fn power_curve_examples() {
        let c = curve();
        assert_eq!(potential_power(&c, 2.0), 0.0);
        assert_eq!(potential_power(&c, 25.0), 0.0);
        assert_eq!(potential_power(&c, 30.0), 0.0);
        assert_eq!(potential_power(&c, 6.0), 200.0);
        assert_eq!(potential_power(&c, 15.0), 1000.0);
        assert!(PowerCurve::new(vec![(1.0, 5.0)], 3.0, 25.0).is_err());
        assert!(PowerCurve::new(vec![(4.0, 5.0), (4.0, 6.0)], 3.0, 25.0).is_err());
    }

    fn rec(observed: f64, wind: f64, temp: f64) -> ProductionRecord {
        ProductionRecord {
            farm_id: "f".into(),
            hour: h(0),
            observed_power: observed,
            hub_wind: wind,
            hub_temp: temp,
        }
    }

    #[test]
    fn production_examples() {
        let c = curve();
        let p = ProductionLabelParams::for_curve(&c);
        assert_eq!(p.p_min, 50.0);
        let l = icing_from_production(&rec(1000.0, 13.0, 268.0), &c, &p);
        assert_eq!((l.loss_fraction, l.icing), (Some(0.0), Some(false)));
        let l = icing_from_production(&rec(0.0, 13.0, 268.0), &c, &p);
        assert_eq!((l.loss_fraction, l.icing), (Some(1.0), Some(true)));
        // warm hour: loss without icing
        let l = icing_from_production(&rec(0.0, 13.0, 285.0), &c, &p);
        assert_eq!(l.icing, Some(false));
        let l = icing_from_production(&rec(0.0, 3.5, 268.0), &c, &p);
        assert_eq!((l.loss_fraction, l.icing), (None, None));
    }

    proptest! {
        #[test]
        fn counter_event_count(counts in prop::collection::vec(0u64..20, 1..60)) {
            let (y, qc) = sygivre_to_binary(&counter(&counts));
            let steps = counts.windows(2).filter(|w| w[1] > w[0]).count();
            let ones = y.iter().filter(|(_, s)| s.value == 1.0).count();
            prop_assert_eq!(ones, steps);
            prop_assert_eq!(qc.events, steps);
            let valid_or_suspect = y.iter().filter(|(_, s)| s.qc != QcFlag::Missing).count();
            prop_assert_eq!(valid_or_suspect, counts.len() - 1);
        }

        #[test]
        fn loss_monotone(a in 0.0f64..2000.0, b in 0.0f64..2000.0, wind in 3.0f64..25.0, temp in 250.0f64..290.0) {
            let c = curve();
            let p = ProductionLabelParams::for_curve(&c);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let la = icing_from_production(&rec(lo, wind, temp), &c, &p);
            let lb = icing_from_production(&rec(hi, wind, temp), &c, &p);
            if let (Some(x), Some(y)) = (la.loss_fraction, lb.loss_fraction) {
                prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
                prop_assert!(x >= y);
                prop_assert!(la.icing.unwrap() >= lb.icing.unwrap());
            }
        }

        #[test]
        fn curve_continuous_inside(w in 3.0f64..24.99) {
            let c = curve();
            let d = 1e-7;
            prop_assert!((potential_power(&c, w) - potential_power(&c, w + d)).abs() < 1e-3);
        }
    }
}
