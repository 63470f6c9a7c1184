//! Core routines against the reference oracles on seeded random inputs,
//! plus regeneration of golden fixtures when `GRIDWX_FIXTURES` is set.

use std::path::Path;

use gridwx_core::decide::{
    expected_costs, mean_prob_threshold, optimal_threshold, policy_step, simulate, Instance, InstanceSet, Policy,
    PolicyState, Rule, SimOptions,
};
use gridwx_core::ingest::sha256_file;
use gridwx_core::makkonen::wind_at_height;
use gridwx_core::synth::{gen_scenario, write_scenario, ScenarioSpec};
use gridwx_core::timebase::{window_prob, window_prob_poisson};
use gridwx_core::verify::{pr_curve_and_ap, roc_and_auc, ConfusionCounts};
use gridwx_core::{Catalog, CostModel, DecisionParams, HourStamp};
use gridwx_oracle as oracle;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::line;
use crate::out::OutDir;
use crate::Status;

pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    /// First failing case, if any.
    pub failure: Option<String>,
}

fn check(name: &'static str, cases: usize, mut f: impl FnMut(usize) -> Option<String>) -> Check {
    let failure = (0..cases).find_map(&mut f);
    Check { name, cases, failure }
}

fn threshold(rng: &mut ChaCha8Rng) -> Check {
    check("cost_threshold_indifference", 1000, |_| {
        let cost = CostModel {
            c_d: rng.random_range(1.0..1e6),
            alpha: rng.random_range(0.01..=1.0),
            loss: rng.random_range(1.0..2e6),
        };
        let t = match optimal_threshold(&cost) {
            Ok(t) => t,
            Err(_) => return (cost.c_d < cost.alpha * cost.loss).then(|| format!("{cost:?}: no threshold")),
        };
        let e = expected_costs(t.p_star, &cost).ok()?;
        if t.clamped {
            // no indifference point below 1; holding must stay at least as cheap
            return (e.dispatch < e.hold).then(|| format!("{cost:?}: clamped but {e:?}"));
        }
        let scale = cost.c_d.max(cost.loss);
        ((e.dispatch - e.hold).abs() > 1e-9 * scale).then(|| format!("{cost:?}: {e:?}"))
    })
}

fn window(rng: &mut ChaCha8Rng) -> Check {
    check("window_prob_vs_product", 10_000, |_| {
        let n = rng.random_range(0..=48);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let got = window_prob(&p).ok()?;
        let want = oracle::window_union(&p);
        ((got - want).abs() > 1e-12).then(|| format!("{p:?}: {got} vs {want}"))
    })
}

fn poisson(rng: &mut ChaCha8Rng) -> Check {
    check("poisson_round_trip", 1000, |_| {
        let h = rng.random_range(1..=72);
        let p = rng.random::<f64>() * (1.0 - (-(h as f64)).exp());
        let back = window_prob_poisson(mean_prob_threshold(p, h).ok()?, h).ok()?;
        ((back - p).abs() > 1e-12).then(|| format!("p={p} H={h}: {back}"))
    })
}

fn rank_case(scores: &[f64], labels: &[bool]) -> Option<String> {
    let (ap, auc) = oracle::rank_metrics(scores, labels);
    let got_ap = pr_curve_and_ap(scores, labels).ok().map(|r| r.1);
    let got_auc = roc_and_auc(scores, labels).ok().map(|r| r.1);
    (got_ap != ap || got_auc != auc)
        .then(|| format!("{scores:?} {labels:?}: ({got_ap:?}, {got_auc:?}) vs ({ap:?}, {auc:?})"))
}

fn rank_exhaustive(rng: &mut ChaCha8Rng) -> Check {
    let patterns: Vec<Vec<bool>> = (1..=10usize)
        .flat_map(|n| (0..1u32 << n).map(move |bits| (0..n).map(|i| bits >> i & 1 == 1).collect()))
        .collect();
    check("rank_metrics_all_patterns", patterns.len(), |i| {
        let labels = &patterns[i];
        let mut scores: Vec<f64> = (0..labels.len())
            .map(|k| (k as f64 + 0.5) / labels.len() as f64)
            .collect();
        scores.shuffle(rng);
        rank_case(&scores, labels)
    })
}

fn rank_ties(rng: &mut ChaCha8Rng) -> Check {
    check("rank_metrics_ties", 1000, |_| {
        let n = rng.random_range(2..=30);
        let levels = rng.random_range(1..=4);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 4.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        rank_case(&scores, &labels)
    })
}

fn csi(rng: &mut ChaCha8Rng) -> Check {
    check("csi_vs_iou", 1000, |_| {
        let n = rng.random_range(1..=40);
        let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let tau = rng.random::<f64>();
        let alerts: Vec<bool> = probs.iter().map(|&p| p >= tau).collect();
        let got = ConfusionCounts::at_threshold(&probs, &labels, tau).csi();
        let want = oracle::alert_event_iou(&alerts, &labels);
        (got != want).then(|| format!("tau={tau}: {got:?} vs {want:?}"))
    })
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> InstanceSet {
    let instances = (0..n)
        .map(|i| Instance {
            issue: HourStamp::from_epoch_hours(6 * i as i64),
            asset: 0,
            q_forecast: rng.random(),
            q_climatology: rng.random_range(0.0..0.3),
            outcome: rng.random_bool(0.3),
        })
        .collect();
    InstanceSet {
        site_ids: vec!["a".into()],
        helicopter: vec![false],
        instances,
        undefined: 0,
    }
}

fn to_oracle(set: &InstanceSet, p: &DecisionParams) -> Vec<oracle::CostInstance> {
    let cost = p.cost_model(false);
    set.instances
        .iter()
        .map(|i| oracle::CostInstance {
            q_forecast: i.q_forecast,
            q_climatology: i.q_climatology,
            outcome: i.outcome,
            dispatch_cost: cost.c_d,
            effectiveness: cost.alpha,
            loss: cost.loss,
        })
        .collect()
}

fn rev(rng: &mut ChaCha8Rng) -> Check {
    check("rev_vs_brute_force", 500, |_| {
        let n = rng.random_range(1..=12);
        let set = random_set(rng, n);
        let params = DecisionParams {
            c_d: rng.random_range(1e3..2e5),
            ..DecisionParams::default()
        };
        let opts = SimOptions::default();
        let run = |policy| simulate(&set, &params, &opts, policy).map(|l| l.mean_cost());
        let (f, c, pf) = (
            run(Policy::Forecast(Rule::Threshold)).ok()?,
            run(Policy::Climatology(Rule::Threshold)).ok()?,
            run(Policy::Perfect).ok()?,
        );
        let inst = to_oracle(&set, &params);
        let o = oracle::brute_force_rev(&inst);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        let optimal = close(
            oracle::rule_expected_cost(&inst),
            oracle::best_threshold_expected_cost(&inst),
        );
        (!(close(f, o.c_forecast) && close(c, o.c_climatology) && close(pf, o.c_perfect) && optimal))
            .then(|| format!("({f}, {c}, {pf}) vs {o:?}"))
    })
}

/// No dispatch, release, dispatch inside `k` issuances.
fn hysteresis() -> Check {
    let params = DecisionParams::default();
    let p_star = params.p_star().unwrap_or(0.2);
    let p_off = params.p_off_factor * p_star;
    let levels = [0.0, 0.5 * p_off, p_off, params.p_on_factor * p_star, 1.0];
    let k = params.persistence as usize;
    check("hysteresis_exhaustive", 5usize.pow(6), |code| {
        let mut state = PolicyState::default();
        let mut c = code;
        let mut dispatched = Vec::with_capacity(6);
        for step in 0..6 {
            let q = levels[c % 5];
            c /= 5;
            let (next, d) = policy_step(state, q, p_star, &params, HourStamp::from_epoch_hours(6 * step));
            state = next;
            dispatched.push(d.is_dispatch());
        }
        let mut last_release: Option<usize> = None;
        for i in 1..dispatched.len() {
            if dispatched[i - 1] && !dispatched[i] {
                last_release = Some(i);
            }
            if dispatched[i] && !dispatched[i - 1] {
                if let Some(r) = last_release {
                    if i - r < k {
                        return Some(format!("sequence {code}: {dispatched:?}"));
                    }
                }
            }
        }
        None
    })
}

fn anchors(rng: &mut ChaCha8Rng) -> Check {
    check("wind_anchor_heights", 10_000, |_| {
        let v10 = rng.random_range(0.1..30.0);
        let v100 = rng.random_range(0.1..40.0);
        let a = wind_at_height(v10, v100, 10.0).ok()?;
        let b = wind_at_height(v10, v100, 100.0).ok()?;
        ((a - v10).abs() > 1e-9 || (b - v100).abs() > 1e-9).then(|| format!("({v10}, {v100}) -> ({a}, {b})"))
    })
}

/// Each `<dir>/catalog.json` under the fixture root must regenerate byte for byte.
fn fixtures(root: &Path) -> anyhow::Result<Check> {
    let mut dirs: Vec<_> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("catalog.json").is_file())
        .collect();
    dirs.sort();
    let scratch = tempfile::tempdir()?;
    let mut failure = None;
    for (i, dir) in dirs.iter().enumerate() {
        let golden = Catalog::load(&dir.join("catalog.json"))?;
        let spec = ScenarioSpec::from_metadata(&golden.generator)?;
        let target = scratch.path().join(i.to_string());
        write_scenario(&gen_scenario(&spec)?, &target)?;
        for (path, hash) in golden.hashes() {
            let fresh = target.join(&path);
            if !fresh.is_file() || sha256_file(&fresh)? != hash {
                failure.get_or_insert_with(|| format!("{}: {path} differs", dir.display()));
            }
        }
    }
    Ok(Check {
        name: "golden_fixtures",
        cases: dirs.len(),
        failure,
    })
}

pub fn suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        threshold(&mut rng),
        window(&mut rng),
        poisson(&mut rng),
        rank_exhaustive(&mut rng),
        rank_ties(&mut rng),
        csi(&mut rng),
        rev(&mut rng),
        hysteresis(),
        anchors(&mut rng),
    ]
}

pub fn run(out: Option<&Path>, seed: u64) -> anyhow::Result<Status> {
    let mut checks = suite(seed);
    if let Some(root) = std::env::var_os("GRIDWX_FIXTURES") {
        checks.push(fixtures(Path::new(&root))?);
    }
    for c in &checks {
        match &c.failure {
            None => println!("PASS {} ({} cases)", c.name, c.cases),
            Some(f) => println!("FAIL {} ({} cases): {f}", c.name, c.cases),
        }
    }
    if let Some(dir) = out {
        let mut o = OutDir::create(dir)?;
        o.with("selfcheck.csv", |w| {
            line(w, &["check", "cases", "pass"])?;
            for c in &checks {
                line(w, &[c.name, &c.cases.to_string(), &c.failure.is_none().to_string()])?;
            }
            Ok(())
        })?;
        let config = [("seed".to_string(), seed.to_string())].into_iter().collect();
        o.finish("selfcheck", config, Default::default())?;
    }
    let failed = checks.iter().filter(|c| c.failure.is_some()).count();
    if failed > 0 {
        anyhow::bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(Status::Ok)
}
