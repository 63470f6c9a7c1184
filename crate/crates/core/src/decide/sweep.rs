//! One-at-a-time sensitivity of REV to the cost parameters.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use super::simulate::{evaluate_policies, InstanceSet, Rule, SimOptions};
use super::DecisionParams;
use crate::error::{Error, Result};
use crate::format::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CD,
    Alpha,
    Loss,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::CD => "c_d",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Loss => "loss",
        }
    }

    fn get(self, p: &DecisionParams) -> f64 {
        match self {
            SweepAxis::CD => p.c_d,
            SweepAxis::Alpha => p.alpha,
            SweepAxis::Loss => p.loss,
        }
    }

    fn with(self, p: &DecisionParams, v: f64) -> DecisionParams {
        let mut out = p.clone();
        match self {
            SweepAxis::CD => out.c_d = v,
            SweepAxis::Alpha => out.alpha = v,
            SweepAxis::Loss => out.loss = v,
        }
        out
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c_d" => Ok(SweepAxis::CD),
            "alpha" => Ok(SweepAxis::Alpha),
            "loss" => Ok(SweepAxis::Loss),
            _ => Err(Error::Config {
                key: "axis".into(),
                msg: format!("unknown sweep axis {s:?}; expected c_d, alpha or loss"),
            }),
        }
    }
}

/// `start:stop:step` (inclusive of `stop` within half a step) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::Config {
        key: "grid".into(),
        msg,
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {t:?}")));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [a, b, c] => {
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
                return Err(bad(format!("invalid range {s:?}")));
            }
            let n = ((stop - start) / step + 0.5).floor() as usize;
            if n > 100_000 {
                return Err(bad(format!("range {s:?} has too many points")));
            }
            // round away accumulated step error at 12 significant digits
            (0..=n)
                .map(|i| {
                    let v = start + i as f64 * step;
                    format!("{v:.11e}").parse::<f64>().unwrap_or(v)
                })
                .collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad(format!("unrecognized grid {s:?}"))),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad(format!("empty or non-finite grid {s:?}")));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub p_star: f64,
    /// `None` where REV is undefined at this grid point.
    pub rev: Option<f64>,
    pub c_forecast: f64,
    pub c_climatology: f64,
    pub c_perfect: f64,
    pub is_base: bool,
}

pub fn sensitivity_sweep(
    set: &InstanceSet,
    base: &DecisionParams,
    opts: &SimOptions,
    rule: Rule,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    let base_value = axis.get(base);
    grid.iter()
        .map(|&v| {
            let params = axis.with(base, v);
            params.validate()?;
            let cmp = evaluate_policies(set, &params, opts, rule)?;
            Ok(SweepRow {
                axis,
                value: v,
                p_star: params.p_star()?,
                rev: cmp.rev.as_ref().ok().map(|r| r.rev),
                c_forecast: cmp.forecast.mean_cost(),
                c_climatology: cmp.climatology.mean_cost(),
                c_perfect: cmp.perfect.mean_cost(),
                is_base: v == base_value,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,p_star,rev,c_fcst,c_clim,c_perf";

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    if let Some(b) = rows.iter().find(|r| r.is_base) {
        writeln!(w, "# base {}={}", b.axis.as_str(), fmt_num(b.value))?;
    }
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.axis.as_str(),
            fmt_num(r.value),
            fmt_num(r.p_star),
            r.rev.map(fmt_num).unwrap_or_default(),
            fmt_num(r.c_forecast),
            fmt_num(r.c_climatology),
            fmt_num(r.c_perfect),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decide::Instance;
    use crate::timebase::HourStamp;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.3:0.9:0.1").unwrap();
        assert_eq!(g, vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(parse_grid("1,2.5").unwrap(), vec![1.0, 2.5]);
        assert_eq!(parse_grid("5").unwrap(), vec![5.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    fn sample_set() -> InstanceSet {
        let rows = [
            (0.9, true),
            (0.3, false),
            (0.1, true),
            (0.05, false),
            (0.6, true),
            (0.25, false),
        ];
        InstanceSet {
            site_ids: vec!["a".into()],
            helicopter: vec![false],
            instances: rows
                .iter()
                .enumerate()
                .map(|(i, &(q, y))| Instance {
                    issue: HourStamp::from_epoch_hours(6 * i as i64),
                    asset: 0,
                    q_forecast: q,
                    q_climatology: 0.4,
                    outcome: y,
                })
                .collect(),
            undefined: 0,
        }
    }

    #[test]
    fn identity_sweep_matches_base() {
        let set = sample_set();
        let base = DecisionParams::default();
        let rows = sensitivity_sweep(
            &set,
            &base,
            &SimOptions::default(),
            Rule::Threshold,
            SweepAxis::CD,
            &[50_000.0],
        )
        .unwrap();
        let direct = evaluate_policies(&set, &base, &SimOptions::default(), Rule::Threshold).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].is_base);
        assert_eq!(rows[0].rev, Some(direct.rev.unwrap().rev));
    }

    #[test]
    fn p_star_falls_with_alpha() {
        let set = sample_set();
        let base = DecisionParams::default();
        let grid = parse_grid("0.3:0.9:0.1").unwrap();
        let rows = sensitivity_sweep(
            &set,
            &base,
            &SimOptions::default(),
            Rule::Threshold,
            SweepAxis::Alpha,
            &grid,
        )
        .unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.windows(2).all(|w| w[1].p_star < w[0].p_star));
        assert_eq!(rows.iter().filter(|r| r.is_base).count(), 1);
    }

    #[test]
    fn invalid_point_errors() {
        let set = sample_set();
        let r = sensitivity_sweep(
            &set,
            &DecisionParams::default(),
            &SimOptions::default(),
            Rule::Threshold,
            SweepAxis::Alpha,
            &[1.5],
        );
        assert!(r.is_err());
    }
}
