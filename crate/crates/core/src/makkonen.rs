//! Reanalysis-driven rime-icing reference index.
//!
//! Wind is carried to sensor height with a power law fitted between 10 m and
//! 100 m, temperature with a fixed lapse rate, and cloud liquid water is
//! interpolated between pressure levels in geopotential height and converted
//! to a volumetric content with dry-air density. The hourly proxy rate is
//! `v * LWC` when all feasibility clauses hold and zero otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timebase::{HourStamp, ObservationSeries, WindowSpec};

/// Standard gravity, m s^-2.
pub const G0: f64 = 9.80665;
/// Gas constant for dry air, J kg^-1 K^-1.
pub const R_DRY: f64 = 287.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Transmission,
    Windfarm,
    Station,
}

impl SiteKind {
    /// Sensor height used when a site record omits it.
    pub fn default_height_agl(self) -> f64 {
        match self {
            SiteKind::Windfarm => 80.0,
            SiteKind::Transmission => 50.0,
            SiteKind::Station => 2.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SiteKind::Transmission => "transmission",
            SiteKind::Windfarm => "windfarm",
            SiteKind::Station => "station",
        }
    }
}

impl fmt::Display for SiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SiteKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "transmission" => Ok(SiteKind::Transmission),
            "windfarm" => Ok(SiteKind::Windfarm),
            "station" => Ok(SiteKind::Station),
            other => Err(format!("unknown site kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub site_id: String,
    pub lat: f64,
    pub lon: f64,
    pub elevation_asl: f64,
    pub sensor_height_agl: f64,
    pub kind: SiteKind,
    pub helicopter_access: bool,
    /// Set when `sensor_height_agl` came from the kind default.
    pub height_defaulted: bool,
}

impl Site {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::domain("lat", self.lat, "[-90, 90]"));
        }
        if !(-180.0..180.0).contains(&self.lon) {
            return Err(Error::domain("lon", self.lon, "[-180, 180)"));
        }
        if !(self.sensor_height_agl > 0.0) {
            return Err(Error::domain("sensor_height_agl", self.sensor_height_agl, "> 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureLevel {
    pub p_hpa: f64,
    /// Geopotential, m^2 s^-2.
    pub z_geopot: f64,
    /// Specific cloud liquid water content, kg/kg.
    pub clwc: f64,
}

/// Surface fields and pressure-level column at one site and hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteProfile {
    pub site_id: String,
    pub hour: HourStamp,
    pub t2m: f64,
    pub d2m: f64,
    pub u10: f64,
    pub v10: f64,
    pub u100: f64,
    pub v100: f64,
    /// Surface pressure, Pa.
    pub sp: f64,
    /// Surface geopotential, m^2 s^-2.
    pub z_sfc: f64,
    /// Sorted by decreasing pressure.
    pub levels: Vec<PressureLevel>,
}

impl SiteProfile {
    pub fn validate(&self) -> Result<()> {
        if !(180.0..=340.0).contains(&self.t2m) {
            return Err(Error::domain("t2m", self.t2m, "[180, 340] K"));
        }
        if !(180.0..=340.0).contains(&self.d2m) {
            return Err(Error::domain("d2m", self.d2m, "[180, 340] K"));
        }
        if !self.z_sfc.is_finite() {
            return Err(Error::domain("z_sfc", self.z_sfc, "finite"));
        }
        for w in self.levels.windows(2) {
            if w[1].p_hpa >= w[0].p_hpa {
                return Err(Error::Schema(format!(
                    "{} {}: levels not sorted by decreasing pressure",
                    self.site_id, self.hour
                )));
            }
        }
        for l in &self.levels {
            if !l.z_geopot.is_finite() {
                return Err(Error::domain("z_geopot", l.z_geopot, "finite"));
            }
            if !(800.0..=1000.0).contains(&l.p_hpa) {
                return Err(Error::domain("p_hpa", l.p_hpa, "[800, 1000] hPa"));
            }
        }
        Ok(())
    }

    pub fn speed10(&self) -> f64 {
        self.u10.hypot(self.v10)
    }

    pub fn speed100(&self) -> f64 {
        self.u100.hypot(self.v100)
    }
}

/// How a windowed score is turned into a binary flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreThreshold {
    Fixed(f64),
    /// Threshold at the `(1 - base_rate)` quantile of training-window scores.
    PercentileMatched {
        train_base_rate: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcingProxyParams {
    pub t_min: f64,
    pub t_max: f64,
    /// g/m^3.
    pub lwc_min: f64,
    /// K/km.
    pub lapse: f64,
    pub window: WindowSpec,
    pub score_threshold: ScoreThreshold,
}

impl Default for IcingProxyParams {
    fn default() -> Self {
        IcingProxyParams {
            t_min: 260.0,
            t_max: 275.0,
            lwc_min: 0.001,
            lapse: 6.5,
            window: WindowSpec::default(),
            score_threshold: ScoreThreshold::PercentileMatched { train_base_rate: 0.087 },
        }
    }
}

impl IcingProxyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min < self.t_max) {
            return Err(Error::domain("t_min", self.t_min, "< t_max"));
        }
        if !(self.lwc_min > 0.0) {
            return Err(Error::domain("lwc_min", self.lwc_min, "> 0"));
        }
        if !(self.lapse > 0.0) {
            return Err(Error::domain("lapse", self.lapse, "> 0"));
        }
        Ok(())
    }
}

/// Power-law shear exponent between 10 m and 100 m.
pub fn shear_exponent(v10: f64, v100: f64) -> Result<f64> {
    if !(v10 > 0.0 && v100 > 0.0) {
        return Err(Error::DegenerateProfile { v10, v100 });
    }
    Ok((v100 / v10).ln() / 10f64.ln())
}

/// Wind speed at `z_agl` meters from the 10 m / 100 m power law.
pub fn wind_at_height(v10: f64, v100: f64, z_agl: f64) -> Result<f64> {
    if !(z_agl > 0.0) {
        return Err(Error::domain("z_agl", z_agl, "> 0"));
    }
    let alpha = shear_exponent(v10, v100)?;
    Ok((v10 * (alpha * (z_agl / 10.0).ln()).exp()).max(0.0))
}

/// Like [`wind_at_height`] but a degenerate profile falls back to `max(v10, 0)`.
pub fn wind_at_height_or_constant(v10: f64, v100: f64, z_agl: f64) -> Result<f64> {
    match wind_at_height(v10, v100, z_agl) {
        Err(Error::DegenerateProfile { .. }) => Ok(v10.max(0.0)),
        other => other,
    }
}

pub fn temp_at_height(t2m: f64, z_agl: f64, lapse_k_per_km: f64) -> f64 {
    t2m - lapse_k_per_km * z_agl / 1000.0
}

/// Dry-air density at sensor height, kg/m^3.
pub fn air_density(sp: f64, t2m: f64, z_agl: f64, lapse: f64) -> f64 {
    let t = temp_at_height(t2m, z_agl, lapse);
    let t_mean = 0.5 * (t2m + t);
    let p = sp * (-G0 * z_agl / (R_DRY * t_mean)).exp();
    p / (R_DRY * t)
}

/// Specific cloud water linearly interpolated in height, clamped at the ends.
fn interpolate_clwc(levels: &[PressureLevel], height_m: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = levels.iter().map(|l| (l.z_geopot / G0, l.clwc)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    if height_m <= lo.0 {
        return lo.1;
    }
    if height_m >= hi.0 {
        return hi.1;
    }
    let i = pts.partition_point(|p| p.0 <= height_m);
    let (a, b) = (pts[i - 1], pts[i]);
    if b.0 == a.0 {
        return a.1;
    }
    a.1 + (b.1 - a.1) * (height_m - a.0) / (b.0 - a.0)
}

/// Volumetric liquid water content at the sensor, kg/m^3.
pub fn lwc_at_height(profile: &SiteProfile, site: &Site, lapse: f64) -> Result<f64> {
    if profile.levels.is_empty() {
        return Err(Error::Schema(format!(
            "{} {}: profile has no pressure levels",
            profile.site_id, profile.hour
        )));
    }
    let height_asl = profile.z_sfc / G0 + site.sensor_height_agl;
    let clwc = interpolate_clwc(&profile.levels, height_asl);
    let rho = air_density(profile.sp, profile.t2m, site.sensor_height_agl, lapse);
    Ok(clwc * rho)
}

/// `lwc` is in kg/m^3; `params.lwc_min` is in g/m^3.
pub fn feasible(v: f64, t: f64, lwc: f64, params: &IcingProxyParams) -> bool {
    v > 0.0 && t >= params.t_min && t <= params.t_max && lwc > params.lwc_min * 1e-3
}

/// Icing proxy rate in g m^-2 s^-1 (`lwc` in kg/m^3).
pub fn proxy_rate(v: f64, t: f64, lwc: f64, params: &IcingProxyParams) -> f64 {
    if feasible(v, t, lwc, params) {
        v * lwc * 1e3
    } else {
        0.0
    }
}

/// Per-hour quantities derived for one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyIcing {
    pub hour: HourStamp,
    pub wind: f64,
    pub temp: f64,
    pub lwc: f64,
    pub rate: f64,
}

/// Evaluate the proxy for one profile at one site.
pub fn hourly_icing(profile: &SiteProfile, site: &Site, params: &IcingProxyParams) -> Result<HourlyIcing> {
    let z = site.sensor_height_agl;
    let wind = wind_at_height_or_constant(profile.speed10(), profile.speed100(), z)?;
    let temp = temp_at_height(profile.t2m, z, params.lapse);
    let lwc = lwc_at_height(profile, site, params.lapse)?;
    Ok(HourlyIcing {
        hour: profile.hour,
        wind,
        temp,
        lwc,
        rate: proxy_rate(wind, temp, lwc, params),
    })
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(values: &[f64], prob: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&prob) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = prob * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= v.len() {
        return Some(v[v.len() - 1]);
    }
    Some(v[i] + frac * (v[i + 1] - v[i]))
}

/// Resolve a threshold; percentile matching needs the training-window scores.
pub fn resolve_threshold(mode: ScoreThreshold, training_scores: &[f64]) -> Result<f64> {
    match mode {
        ScoreThreshold::Fixed(x) => Ok(x),
        ScoreThreshold::PercentileMatched { train_base_rate } => {
            if !(train_base_rate > 0.0 && train_base_rate < 1.0) {
                return Err(Error::domain("train_base_rate", train_base_rate, "(0, 1)"));
            }
            quantile(training_scores, 1.0 - train_base_rate)
                .ok_or_else(|| Error::Undefined("no training scores for percentile threshold".into()))
        }
    }
}

/// Sum of rates over `[t, t + len)` and whether it exceeds `threshold`.
/// `None` on insufficient coverage.
pub fn windowed_index(
    rates: &ObservationSeries,
    t: HourStamp,
    spec: WindowSpec,
    threshold: f64,
) -> Option<(f64, bool)> {
    let vals = rates.window_values(t, spec)?;
    let score: f64 = vals.iter().sum();
    Some((score, score > threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::{Sample, Variable};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn site(height: f64) -> Site {
        Site {
            site_id: "s".into(),
            lat: 47.0,
            lon: -71.0,
            elevation_asl: 900.0,
            sensor_height_agl: height,
            kind: SiteKind::Transmission,
            helicopter_access: false,
            height_defaulted: false,
        }
    }

    fn profile(levels: Vec<PressureLevel>) -> SiteProfile {
        SiteProfile {
            site_id: "s".into(),
            hour: HourStamp::from_epoch_hours(0),
            t2m: 270.0,
            d2m: 268.0,
            u10: 3.0,
            v10: 4.0,
            u100: 6.0,
            v100: 8.0,
            sp: 90_000.0,
            z_sfc: 900.0 * G0,
            levels,
        }
    }

    #[test]
    fn shear_examples() {
        assert_abs_diff_eq!(
            shear_exponent(5.0, 10.0).unwrap(),
            0.301_029_995_663_981_1,
            epsilon = 1e-12
        );
        assert_eq!(shear_exponent(7.0, 7.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            shear_exponent(10.0, 5.0).unwrap(),
            -0.301_029_995_663_981_1,
            epsilon = 1e-12
        );
        assert!(matches!(shear_exponent(0.0, 5.0), Err(Error::DegenerateProfile { .. })));
    }

    #[test]
    fn wind_examples() {
        assert_abs_diff_eq!(
            wind_at_height(5.0, 10.0, 80.0).unwrap(),
            9.350_335_179_280_72,
            epsilon = 1e-9
        );
        assert_eq!(wind_at_height(5.0, 10.0, 10.0).unwrap(), 5.0);
        assert_abs_diff_eq!(wind_at_height(5.0, 10.0, 100.0).unwrap(), 10.0, epsilon = 1e-9);
        assert!(wind_at_height(5.0, 10.0, 0.0).is_err());
        assert_eq!(wind_at_height_or_constant(-1.0, 4.0, 50.0).unwrap(), 0.0);
        assert_eq!(wind_at_height_or_constant(3.0, 0.0, 50.0).unwrap(), 3.0);
    }

    #[test]
    fn temperature_examples() {
        assert_abs_diff_eq!(temp_at_height(271.0, 50.0, 6.5), 270.675, epsilon = 1e-12);
        assert_eq!(temp_at_height(271.0, 0.0, 6.5), 271.0);
        assert_abs_diff_eq!(temp_at_height(275.0, 1000.0, 6.5), 268.5, epsilon = 1e-12);
    }

    #[test]
    fn lwc_examples() {
        let zero = profile(vec![
            PressureLevel {
                p_hpa: 1000.0,
                z_geopot: 100.0 * G0,
                clwc: 0.0,
            },
            PressureLevel {
                p_hpa: 900.0,
                z_geopot: 1000.0 * G0,
                clwc: 0.0,
            },
        ]);
        assert_eq!(lwc_at_height(&zero, &site(50.0), 6.5).unwrap(), 0.0);

        let rho = air_density(90_000.0, 270.0, 50.0, 6.5);
        // independent evaluation of the density formula
        assert_abs_diff_eq!(rho, 1.155_300_643_178_053_5, epsilon = 1e-12);

        let single = profile(vec![PressureLevel {
            p_hpa: 850.0,
            z_geopot: 1500.0 * G0,
            clwc: 3e-6,
        }]);
        assert_abs_diff_eq!(
            lwc_at_height(&single, &site(50.0), 6.5).unwrap(),
            3e-6 * rho,
            epsilon = 1e-18
        );

        // sensor at 900 + 50 = 950 m, midway between 900 and 1000 m
        let mid = profile(vec![
            PressureLevel {
                p_hpa: 950.0,
                z_geopot: 900.0 * G0,
                clwc: 0.0,
            },
            PressureLevel {
                p_hpa: 900.0,
                z_geopot: 1000.0 * G0,
                clwc: 2e-6,
            },
        ]);
        assert_abs_diff_eq!(
            lwc_at_height(&mid, &site(50.0), 6.5).unwrap(),
            1e-6 * rho,
            epsilon = 1e-15
        );

        assert!(matches!(
            lwc_at_height(&profile(vec![]), &site(50.0), 6.5),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn feasibility_boundaries() {
        let p = IcingProxyParams::default();
        assert!(feasible(5.0, 270.0, 2e-6, &p));
        assert!(feasible(5.0, 275.0, 2e-6, &p));
        assert!(feasible(5.0, 260.0, 2e-6, &p));
        assert!(!feasible(5.0, 270.0, 1e-6, &p));
        assert!(!feasible(0.0, 270.0, 2e-6, &p));
        assert!(!feasible(5.0, 275.000_001, 2e-6, &p));
    }

    #[test]
    fn proxy_rate_examples() {
        let p = IcingProxyParams::default();
        assert_abs_diff_eq!(proxy_rate(10.0, 270.0, 0.002e-3, &p), 0.02, epsilon = 1e-15);
        assert_eq!(proxy_rate(10.0, 280.0, 0.002e-3, &p), 0.0);
        assert_eq!(proxy_rate(0.0, 270.0, 0.002e-3, &p), 0.0);
    }

    fn rates(vals: &[f64]) -> ObservationSeries {
        ObservationSeries::new(
            "s",
            Variable::IcingRate,
            vals.iter()
                .enumerate()
                .map(|(i, v)| (HourStamp::from_epoch_hours(i as i64), Sample::valid(*v))),
        )
        .unwrap()
    }

    #[test]
    fn windowed_index_examples() {
        let t0 = HourStamp::from_epoch_hours(0);
        let spec = WindowSpec::default();
        assert_eq!(windowed_index(&rates(&[0.0; 24]), t0, spec, 0.1), Some((0.0, false)));
        let (score, flag) = windowed_index(&rates(&[0.01; 24]), t0, spec, 0.2).unwrap();
        assert_abs_diff_eq!(score, 0.24, epsilon = 1e-12);
        assert!(flag);
        assert_eq!(windowed_index(&rates(&[0.01; 10]), t0, spec, 0.2), None);
    }

    #[test]
    fn percentile_matched_splits_two_values() {
        let pop = [0.0, 0.0, 1.0, 1.0];
        let thr = resolve_threshold(ScoreThreshold::PercentileMatched { train_base_rate: 0.5 }, &pop).unwrap();
        assert!((0.0..1.0).contains(&thr));
        let flagged = pop.iter().filter(|&&s| s > thr).count();
        assert_eq!(flagged, 2);
        assert!(resolve_threshold(ScoreThreshold::PercentileMatched { train_base_rate: 0.5 }, &[]).is_err());
        assert_eq!(resolve_threshold(ScoreThreshold::Fixed(0.3), &[]).unwrap(), 0.3);
    }

    proptest! {
        #[test]
        fn anchors_hold(v10 in 0.01f64..60.0, v100 in 0.01f64..60.0) {
            prop_assert_eq!(wind_at_height(v10, v100, 10.0).unwrap(), v10);
            prop_assert!((wind_at_height(v10, v100, 100.0).unwrap() - v100).abs() <= 1e-9);
        }

        #[test]
        fn rate_nonnegative(v in -5.0f64..40.0, t in 240.0f64..290.0, lwc in -1e-6f64..1e-3) {
            let p = IcingProxyParams::default();
            let r = proxy_rate(v, t, lwc, &p);
            prop_assert!(r >= 0.0);
            if !feasible(v, t, lwc, &p) {
                prop_assert_eq!(r, 0.0);
            }
        }

        #[test]
        fn lwc_scales_with_clwc(c in 0.0f64..10.0, a in 0.0f64..1e-5, b in 0.0f64..1e-5) {
            let base = profile(vec![
                PressureLevel { p_hpa: 950.0, z_geopot: 800.0 * G0, clwc: a },
                PressureLevel { p_hpa: 900.0, z_geopot: 1200.0 * G0, clwc: b },
            ]);
            let mut scaled = base.clone();
            for l in &mut scaled.levels {
                l.clwc *= c;
            }
            let s = site(50.0);
            let x = lwc_at_height(&base, &s, 6.5).unwrap();
            let y = lwc_at_height(&scaled, &s, 6.5).unwrap();
            prop_assert!((y - c * x).abs() <= 1e-12 * (1.0 + c * x));
        }

        #[test]
        fn window_score_additive(v in prop::collection::vec(0.0f64..0.1, 24), split in 1u32..24) {
            let r = rates(&v);
            let t0 = HourStamp::from_epoch_hours(0);
            let full = windowed_index(&r, t0, WindowSpec::new(24, 1.0).unwrap(), 0.0).unwrap().0;
            let a = windowed_index(&r, t0, WindowSpec::new(split, 1.0).unwrap(), 0.0).unwrap().0;
            let b = windowed_index(&r, t0.add_hours(split as i64), WindowSpec::new(24 - split, 1.0).unwrap(), 0.0).unwrap().0;
            prop_assert!((full - a - b).abs() <= 1e-12);
        }
    }
}
