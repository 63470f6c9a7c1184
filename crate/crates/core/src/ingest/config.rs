use std::path::Path;

use serde::Serialize;

use crate::decide::{Accounting, DecisionParams, Rule};
use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::makkonen::{IcingProxyParams, ScoreThreshold};
use crate::timebase::{HourStamp, WindowSpec};

/// Run options that sit beside the decision parameters in a config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    pub policy: Rule,
    pub capacity: bool,
    pub accounting: Accounting,
    /// Fixed offset used for diurnal slices.
    pub utc_offset: i32,
    pub coverage_min: f64,
    /// Leads scored by `verify`.
    pub lead_hours: Vec<u32>,
    /// Model whose errors define fractional skill; absent models are skipped.
    pub baseline_model: String,
    /// Training data ends here (exclusive); defaults to the catalog value.
    pub train_end: Option<HourStamp>,
    pub theta_loss: f64,
    pub t_guard: f64,
    /// Production label guard as a fraction of rated power.
    pub p_min_fraction: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub lwc_min: f64,
    pub lapse: f64,
    /// `None` selects percentile matching.
    pub score_threshold: Option<f64>,
    pub train_base_rate: f64,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: Rule::Threshold,
            capacity: false,
            accounting: Accounting::Instance,
            utc_offset: -5,
            coverage_min: 0.75,
            lead_hours: vec![0, 6, 12, 18],
            baseline_model: "climatology".into(),
            train_end: None,
            theta_loss: 0.2,
            t_guard: 275.15,
            p_min_fraction: 0.05,
            t_min: 260.0,
            t_max: 275.0,
            lwc_min: 0.001,
            lapse: 6.5,
            score_threshold: None,
            train_base_rate: 0.087,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: DecisionParams,
    pub options: RunOptions,
}

fn rule_name(r: Rule) -> &'static str {
    match r {
        Rule::Threshold => "threshold",
        Rule::Hysteresis => "hysteresis",
    }
}

impl RunConfig {
    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.params.window, self.options.coverage_min)
    }

    pub fn icing_params(&self) -> Result<IcingProxyParams> {
        let o = &self.options;
        let p = IcingProxyParams {
            t_min: o.t_min,
            t_max: o.t_max,
            lwc_min: o.lwc_min,
            lapse: o.lapse,
            window: self.window_spec()?,
            score_threshold: match o.score_threshold {
                Some(x) => ScoreThreshold::Fixed(x),
                None => ScoreThreshold::PercentileMatched {
                    train_base_rate: o.train_base_rate,
                },
            },
        };
        p.validate()?;
        Ok(p)
    }

    /// Every effective key in file order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let o = &self.options;
        let mut out = self.params.to_pairs();
        out.extend([
            ("policy", rule_name(o.policy).to_string()),
            ("capacity", o.capacity.to_string()),
            (
                "accounting",
                match o.accounting {
                    Accounting::Instance => "instance",
                    Accounting::Episode => "episode",
                }
                .to_string(),
            ),
            ("utc_offset", o.utc_offset.to_string()),
            ("coverage_min", fmt_num(o.coverage_min)),
            (
                "lead_hours",
                o.lead_hours.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
            ),
            ("baseline_model", o.baseline_model.clone()),
            ("train_end", o.train_end.map(|h| h.to_string()).unwrap_or_default()),
            ("theta_loss", fmt_num(o.theta_loss)),
            ("t_guard", fmt_num(o.t_guard)),
            ("p_min_fraction", fmt_num(o.p_min_fraction)),
            ("t_min", fmt_num(o.t_min)),
            ("t_max", fmt_num(o.t_max)),
            ("lwc_min", fmt_num(o.lwc_min)),
            ("lapse", fmt_num(o.lapse)),
            (
                "score_threshold",
                o.score_threshold.map(fmt_num).unwrap_or_else(|| "percentile".into()),
            ),
            ("train_base_rate", fmt_num(o.train_base_rate)),
            ("seed", o.seed.to_string()),
        ]);
        out
    }

    /// `# key=value` lines for output headers.
    pub fn echo(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }

    /// Apply one `key=value` override with the same checks as the file loader.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |msg: String| Error::Config {
            key: key.to_string(),
            msg,
        };
        let f = || {
            value
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("expected a number, got `{value}`")))
        };
        let u = || {
            value
                .parse::<u32>()
                .map_err(|_| bad(format!("expected a nonnegative integer, got `{value}`")))
        };
        let b = || match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad(format!("expected true or false, got `{value}`"))),
        };
        let p = &mut self.params;
        let o = &mut self.options;
        match key {
            "c_d" => p.c_d = f()?,
            "heli_adder" => p.heli_adder = f()?,
            "alpha" => p.alpha = f()?,
            "loss" => p.loss = f()?,
            "window" => p.window = u()?,
            "cadence" => p.cadence = u()?,
            "tau" => p.tau = u()?,
            "eta" => p.eta = f()?,
            "p_on_factor" => p.p_on_factor = f()?,
            "p_off_factor" => p.p_off_factor = f()?,
            "persistence" => p.persistence = u()?,
            "crews" => p.crews = u()?,
            "crew_hours" => p.crew_hours = f()?,
            "policy" => {
                o.policy = match value {
                    "threshold" => Rule::Threshold,
                    "hysteresis" => Rule::Hysteresis,
                    _ => return Err(bad(format!("expected threshold or hysteresis, got `{value}`"))),
                }
            }
            "capacity" => o.capacity = b()?,
            "accounting" => {
                o.accounting = match value {
                    "instance" => Accounting::Instance,
                    "episode" => Accounting::Episode,
                    _ => return Err(bad(format!("expected instance or episode, got `{value}`"))),
                }
            }
            "utc_offset" => {
                o.utc_offset = value
                    .parse::<i32>()
                    .ok()
                    .filter(|x| (-12..=14).contains(x))
                    .ok_or_else(|| bad(format!("expected an integer hour offset in [-12, 14], got `{value}`")))?
            }
            "coverage_min" => o.coverage_min = f()?,
            "lead_hours" => {
                o.lead_hours = value
                    .split(',')
                    .map(|s| s.trim().parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("expected comma-separated hours, got `{value}`")))?
            }
            "baseline_model" => o.baseline_model = value.to_string(),
            "train_end" => {
                o.train_end = if value.is_empty() {
                    None
                } else {
                    Some(value.parse().map_err(bad)?)
                }
            }
            "theta_loss" => o.theta_loss = f()?,
            "t_guard" => o.t_guard = f()?,
            "p_min_fraction" => o.p_min_fraction = f()?,
            "t_min" => o.t_min = f()?,
            "t_max" => o.t_max = f()?,
            "lwc_min" => o.lwc_min = f()?,
            "lapse" => o.lapse = f()?,
            "score_threshold" => o.score_threshold = if value == "percentile" { None } else { Some(f()?) },
            "train_base_rate" => o.train_base_rate = f()?,
            "seed" => {
                o.seed = value
                    .parse()
                    .map_err(|_| bad(format!("expected an integer seed, got `{value}`")))?
            }
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }

    /// Domain checks across all keys. Returns the decision-parameter warning, if any.
    pub fn validate(&self) -> Result<Option<String>> {
        let warn = self.params.validate()?;
        let o = &self.options;
        let unit = |key: &str, x: f64, lo_open: bool| {
            let ok = if lo_open {
                x > 0.0 && x <= 1.0
            } else {
                (0.0..=1.0).contains(&x)
            };
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: key.into(),
                    msg: format!("{x} outside {}", if lo_open { "(0, 1]" } else { "[0, 1]" }),
                })
            }
        };
        unit("coverage_min", o.coverage_min, true)?;
        unit("theta_loss", o.theta_loss, false)?;
        unit("p_min_fraction", o.p_min_fraction, false)?;
        if !(o.train_base_rate > 0.0 && o.train_base_rate < 1.0) {
            return Err(Error::Config {
                key: "train_base_rate".into(),
                msg: format!("{} outside (0, 1)", o.train_base_rate),
            });
        }
        if let Some(l) = o
            .lead_hours
            .iter()
            .find(|&&l| l as i64 > crate::timebase::MAX_LEAD_HOURS)
        {
            return Err(Error::Config {
                key: "lead_hours".into(),
                msg: format!("lead {l} exceeds {}", crate::timebase::MAX_LEAD_HOURS),
            });
        }
        if o.lead_hours.is_empty() {
            return Err(Error::Config {
                key: "lead_hours".into(),
                msg: "no leads".into(),
            });
        }
        self.icing_params().map_err(|e| Error::Config {
            key: "icing".into(),
            msg: e.to_string(),
        })?;
        Ok(warn)
    }
}

/// Parse `key=value` lines; `#` starts a comment line. Unknown or repeated
/// keys are rejected and omitted keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            key: line.to_string(),
            msg: format!("line {} is not key=value", i + 1),
        })?;
        let k = k.trim();
        if !seen.insert(k.to_string()) {
            return Err(Error::Config {
                key: k.to_string(),
                msg: format!("repeated on line {}", i + 1),
            });
        }
        cfg.set(k, v.trim())?;
    }
    if let Some(w) = cfg.validate()? {
        log::warn!("{w}");
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
