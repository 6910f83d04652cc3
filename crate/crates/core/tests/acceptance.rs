//! Acceptance criteria, one test per criterion. Each writes a single
//! `criterion N PASS|FAIL: ...` line to stderr, visible without `--nocapture`.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cogrelay::experiment::{compare_point, judge, load_spec, parse_spec, run_sweep, ExperimentSpec, Method, Tolerance, Verdict};
use cogrelay::optimizer::{evaluate, maximize_secondary_throughput, OptimizerConfig, QosSpec};
use cogrelay::rates::{apply_sensing_errors, max_service_rates, RateReport, SlotRates};
use cogrelay::sim::{run, run_replications, RelayMode, SimConfig};
use cogrelay::{
    Decoding, OrderDistribution, OutageMatrix, SensingErrorParams, Strategy, StrategyParams, TrafficParams,
};
use common::{oracle_rates, random_outages, random_params, random_sensing, table1_two};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes past the test harness's output capture so the report shows up in
/// plain `cargo test` runs too.
fn say(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn verdict(criterion: u32, pass: bool, detail: &str) {
    say(&format!("criterion {criterion} {}: {detail}", if pass { "PASS" } else { "FAIL" }));
}

fn bundled(name: &str) -> ExperimentSpec {
    load_spec(Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(name)).unwrap()
}

fn analytic(o: &OutageMatrix, p: &StrategyParams, t: TrafficParams, se: Option<&SensingErrorParams>) -> RateReport {
    let slot = SlotRates::new(o, p).unwrap();
    let slot = match se {
        Some(se) => slot.with_sensing_errors(&p.omega, se),
        None => slot,
    };
    RateReport::from_slot_rates(slot, t, 1e-6)
}

#[test]
fn criterion_01_closed_form_bounds() {
    let o = table1_two();
    // hand-derived: 1 - P_pd * prod P_p,k ; 1 - P_pd * min P_p,k ; 1 - P_pd * mean P_p,k
    let expected = [
        (Strategy::OrderedAcceptance, 1.0 - 0.1 * 0.1 * 0.02),
        (Strategy::RandomAssignment, 1.0 - 0.1 * 0.02),
        (Strategy::RoundRobin, 1.0 - 0.1 * (0.1 + 0.02) / 2.0),
    ];
    let start = Instant::now();
    let got: Vec<f64> = expected
        .iter()
        .map(|(s, _)| max_service_rates(&o, TrafficParams::new(0.0, 0.0), *s).unwrap().0)
        .collect();
    let elapsed = start.elapsed();
    let mut pass = elapsed.as_secs_f64() < 1e-3;
    let mut detail = Vec::new();
    for ((s, want), got) in expected.iter().zip(&got) {
        pass &= (got - want).abs() <= 1e-12;
        detail.push(format!("{s} {got}"));
    }
    for (want, (_, exact)) in [0.9998, 0.998, 0.994].iter().zip(&expected) {
        pass &= (want - exact).abs() <= 1e-12;
    }
    verdict(1, pass, &format!("{} in {:?}", detail.join(", "), elapsed));
    assert!(pass);
}

/// Random configuration whose every queue is comfortably stable.
fn stable_config(rng: &mut ChaCha8Rng) -> (OutageMatrix, StrategyParams, TrafficParams) {
    loop {
        let n = rng.random_range(1..=3);
        let s = Strategy::ALL[rng.random_range(0..3)];
        let o = random_outages(rng, n);
        let p = random_params(rng, s, n);
        let t = TrafficParams::new(rng.random::<f64>() * 0.6, rng.random::<f64>() * 0.4);
        let r = analytic(&o, &p, t, None);
        if r.queues().iter().all(|(_, l, m, _)| *l <= 0.8 * m) {
            return (o, p, t);
        }
    }
}

#[test]
fn criterion_02_analytic_simulation_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tol = Tolerance {
        half_widths: 3.0,
        absolute: 0.01,
    };
    let mut agree: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut failed = Vec::new();
    let mut dominant = (0, 0);
    for i in 0..20 {
        let (o, p, t) = stable_config(&mut rng);
        let cfg = SimConfig {
            slots: 1_000_000,
            seed: 1000 + i,
            ..SimConfig::default()
        };
        let report = analytic(&o, &p, t, None);
        let sim = run(&o, &p, t, None, &cfg).unwrap();
        let sat = run(&o, &p, t, None, &SimConfig { saturated_primary: true, ..cfg.clone() }).unwrap();
        for (name, a, e, v) in compare_point(&report, &sim, &sat, tol) {
            let kind = match name.strip_prefix("lambda_") {
                Some(_) => name.trim_end_matches(char::is_numeric).to_string(),
                None => name.clone(),
            };
            let entry = agree.entry(kind).or_default();
            match v {
                Verdict::Pass => entry.0 += 1,
                Verdict::NoSamples => {}
                Verdict::Fail => {
                    entry.1 += 1;
                    failed.push(format!("#{i} {name} {a:.4} vs {:.4}", e.mean.unwrap()));
                }
            }
        }
        // backlogged secondary: its service opportunities no longer cluster
        // in primary busy periods
        let backlogged = run(&o, &p, TrafficParams::new(t.lambda_p, 1.0), None, &cfg).unwrap();
        let v = judge(report.mu_s, backlogged.mu_s_hat, tol);
        dominant.0 += usize::from(v == Verdict::Pass);
        dominant.1 += usize::from(v != Verdict::NoSamples);
    }
    let elapsed = start.elapsed();
    let pass = failed.is_empty() && elapsed.as_secs() < 300;
    let counts: Vec<String> = agree.iter().map(|(k, (a, d))| format!("{k} {a}/{}", a + d)).collect();
    verdict(
        2,
        pass,
        &format!("20 configs in {elapsed:.1?}, agreeing per quantity: {}; disagreements {failed:?}", counts.join(", ")),
    );
    say(&format!(
        "criterion 2 supplementary: mu_s with a backlogged secondary agrees in {}/{} configs",
        dominant.0, dominant.1
    ));
    assert!(
        pass,
        "secondary queue statistics differ from the decoupled closed forms; see the acceptance notes in README.md"
    );
}

#[test]
fn criterion_03_geo_geo_1_delay() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (lambda, mu) in [(0.2, 0.5), (0.1, 0.9), (0.4, 0.5)] {
        let o = OutageMatrix::direct_only(1.0 - mu, 1.0);
        let p = StrategyParams::uniform(Strategy::RoundRobin, 0);
        let cfg = SimConfig {
            slots: 1_000_000,
            seed: 3,
            ..SimConfig::default()
        };
        let est = run_replications(&o, &p, TrafficParams::new(lambda, 0.0), None, &cfg, 10).unwrap();
        let want = (1.0 - lambda) / (mu - lambda);
        let got = est.d_p_hat.value();
        let rel = (got - want).abs() / want;
        pass &= rel <= 0.02;
        detail.push(format!("({lambda},{mu}) {got:.4} vs {want:.4} ({:.2}%)", 100.0 * rel));
    }
    verdict(3, pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_04_ordered_acceptance_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let cases = 1000;
    for _ in 0..cases {
        let n = rng.random_range(1..=5);
        let o = random_outages(&mut rng, n);
        let rd = random_params(&mut rng, Strategy::RandomAssignment, n);
        let Decoding::Assigned { beta } = &rd.decoding else { unreachable!() };
        let first = OrderDistribution::from_first_rank_profile(beta).unwrap();
        let od = StrategyParams {
            decoding: Decoding::Ordered {
                primary: first.clone(),
                secondary: first,
            },
            ..rd.clone()
        };
        let t = TrafficParams::new(rng.random::<f64>() * 0.95, rng.random::<f64>() * 0.95);
        let se = random_sensing(&mut rng, n);
        for sensing in [None, Some(&se)] {
            let a = analytic(&o, &od, t, sensing).queues();
            let b = analytic(&o, &rd, t, sensing).queues();
            violations += a.iter().zip(&b).filter(|(x, y)| x.2 < y.2 - 1e-12).count();
        }
    }
    verdict(
        4,
        violations == 0,
        &format!("{cases} configurations x {{perfect, sensing errors}}, {violations} violations"),
    );
    assert_eq!(violations, 0);
}

#[test]
fn criterion_05_secondary_cap() {
    let mut violations = 0;
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let n = rng.random_range(0..=4);
        let s = Strategy::ALL[rng.random_range(0..3)];
        let o = random_outages(&mut rng, n);
        let p = random_params(&mut rng, s, n);
        let t = TrafficParams::new(rng.random::<f64>(), rng.random::<f64>());
        let se = random_sensing(&mut rng, n);
        for sensing in [None, Some(&se)] {
            let e = evaluate(&o, &p, &QosSpec::stability_only(t), sensing, 1e-6).unwrap();
            checked += 1;
            violations += usize::from(e.report.mu_s > 1.0 - t.lambda_p);
        }
    }
    let mut optimized = 0;
    for name in ["fig3.cfg", "fig6_7.cfg", "fig10.cfg", "fig_sensing.cfg"] {
        for row in run_sweep(&bundled(name), &[Method::Optimized]) {
            let lambda_p = row.sweep_value.unwrap();
            if let Some(mu_s) = row.mu_s {
                optimized += 1;
                violations += usize::from(mu_s > 1.0 - lambda_p);
            }
        }
    }
    verdict(
        5,
        violations == 0,
        &format!("{checked} random evaluations, {optimized} optimizer outputs, {violations} violations"),
    );
    assert_eq!(violations, 0);
}

#[test]
fn criterion_06_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 0..=3 {
        for s in Strategy::ALL {
            for _ in 0..100 {
                let o = random_outages(&mut rng, n);
                let p = random_params(&mut rng, s, n);
                let t = TrafficParams::new(rng.random::<f64>() * 0.9, 0.1);
                let se = random_sensing(&mut rng, n);
                for sensing in [None, Some(&se)] {
                    let r = analytic(&o, &p, t, sensing);
                    let (mu_p, mu_s) = oracle_rates(&o, &p, t.lambda_p, sensing);
                    worst = worst.max((r.mu_p - mu_p).abs()).max((r.mu_s - mu_s).abs());
                    cases += 1;
                }
            }
        }
    }
    let pass = worst <= 1e-10;
    verdict(6, pass, &format!("{cases} cases with N <= 3, max |analytic - enumeration| = {worst:e}"));
    assert!(pass);
}

fn fig3_spec(lambda_s: f64) -> ExperimentSpec {
    let mut s = bundled("fig3.cfg");
    s.strategies = vec![Strategy::OrderedAcceptance];
    s.qos.traffic.lambda_s = lambda_s;
    s
}

#[test]
fn criterion_07_fig3_near_bound() {
    let start = Instant::now();
    let rows = run_sweep(&fig3_spec(0.2), &[Method::Optimized]);
    let elapsed = start.elapsed();
    let mut pass = elapsed.as_secs() < 600;
    let mut detail = Vec::new();
    for r in &rows {
        let lp = r.sweep_value.unwrap();
        let bound = 1.0 - lp;
        let ratio = r.mu_s.map_or(0.0, |m| m / bound);
        pass &= ratio >= 0.95;
        let shown = r.mu_s.map_or_else(|| r.status.clone(), |m| format!("{m:.4}"));
        detail.push(format!("lambda_p {lp}: {shown} ({:.1}% of bound)", 100.0 * ratio));
    }
    verdict(7, pass, &format!("lambda_s 0.2, {}; {elapsed:.1?}", detail.join(", ")));

    // the text also quotes lambda_s = 0.1 for this figure
    let rows = run_sweep(&fig3_spec(0.1), &[Method::Optimized]);
    let extra: Vec<String> = rows
        .iter()
        .map(|r| {
            let lp = r.sweep_value.unwrap();
            format!("{lp}: {:.1}%", 100.0 * r.mu_s.map_or(0.0, |m| m / (1.0 - lp)))
        })
        .collect();
    say(&format!("criterion 7 supplementary (lambda_s 0.1): {}", extra.join(", ")));
    assert!(
        pass,
        "optimized S_OD mu_s is not within 5% of 1 - lambda_p at every point; see the acceptance notes in README.md"
    );
}

fn optimum(spec: &ExperimentSpec) -> Vec<(f64, Strategy, f64)> {
    run_sweep(spec, &[Method::Optimized])
        .into_iter()
        .map(|r| (r.sweep_value.unwrap(), r.strategy, r.mu_s.unwrap_or(0.0)))
        .collect()
}

/// Smallest margin of `lead` over the other strategy across the sweep.
fn min_margin(tau_f: f64, sensing: bool, lead: Strategy) -> f64 {
    let mut s = bundled("fig10.cfg");
    if let cogrelay::channel::ChannelSpec::Physical(p) = &mut s.network.channel {
        p.timing.tau_f = tau_f * p.timing.slot;
    }
    if !sensing {
        s.sensing = None;
    }
    optimum(&s)
        .chunks(2)
        .map(|pair| {
            let (od, rd) = (pair[0], pair[1]);
            assert_eq!((od.1, rd.1), (Strategy::OrderedAcceptance, Strategy::RandomAssignment));
            if lead == Strategy::OrderedAcceptance {
                od.2 - rd.2
            } else {
                rd.2 - od.2
            }
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_08_feedback_crossover() {
    // the figure's own setting carries sensing errors
    let large = min_margin(0.24, true, Strategy::RandomAssignment);
    let none = min_margin(0.0, true, Strategy::OrderedAcceptance);
    let pass = large >= 0.0 && none >= -1e-6;
    verdict(
        8,
        pass,
        &format!("tau_f 0.24T: min RD - OD = {large:.5}; tau_f 0: min OD - RD = {none:.5}"),
    );
    say(&format!(
        "criterion 8 supplementary (perfect sensing): tau_f 0.24T min RD - OD = {:.5}; tau_f 0 min OD - RD = {:.5}",
        min_margin(0.24, false, Strategy::RandomAssignment),
        min_margin(0.0, false, Strategy::OrderedAcceptance)
    ));
    assert!(pass);
}

#[test]
fn criterion_09_sensing_error_bound_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut configs = 0;
    let mut backlogged = (0, 0);
    while configs < 10 {
        let n = rng.random_range(1..=3);
        let s = Strategy::ALL[rng.random_range(0..3)];
        let o = random_outages(&mut rng, n);
        let p = random_params(&mut rng, s, n);
        let t = TrafficParams::new(rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.3);
        let se = random_sensing(&mut rng, n);
        let bound = apply_sensing_errors(&analytic(&o, &p, t, None), &p, &se);
        if !bound.queues().iter().all(|(_, l, m, _)| *l <= 0.8 * m) {
            continue;
        }
        configs += 1;
        let cfg = SimConfig {
            slots: 1_000_000,
            seed: 900 + configs,
            mode: RelayMode::TrueQueues,
            ..SimConfig::default()
        };
        let est = run(&o, &p, t, Some(&se), &cfg).unwrap();
        let mut pairs = vec![("mu_p", bound.mu_p, est.mu_p_hat), ("mu_s", bound.mu_s, est.mu_s_hat)];
        for k in 0..n {
            pairs.push(("mu_pk", bound.mu_pk[k], est.mu_pk_hat[k]));
            pairs.push(("mu_sk", bound.mu_sk[k], est.mu_sk_hat[k]));
        }
        let sat_p = run(&o, &p, t, Some(&se), &SimConfig { saturated_primary: true, ..cfg.clone() }).unwrap();
        let sat_s = run(&o, &p, TrafficParams::new(t.lambda_p, 1.0), Some(&se), &cfg).unwrap();
        for (b, e) in [(bound.mu_p, sat_p.mu_p_hat), (bound.mu_s, sat_s.mu_s_hat)] {
            backlogged.1 += 1;
            backlogged.0 += usize::from(e.mean.unwrap() >= b - 3.0 * e.half_width - 1e-12);
        }
        for (name, b, e) in pairs {
            let Some(m) = e.mean else { continue };
            checked += 1;
            // one-sided: the estimate may not sit significantly below the bound
            if m < b - 3.0 * e.half_width - 1e-12 {
                failures.push(format!("config {configs} {name}: sim {m:.5} ± {:.5} < bound {b:.5}", e.half_width));
            }
        }
    }
    let pass = failures.is_empty();
    verdict(
        9,
        pass,
        &format!("10 error configurations, {checked} service rates, {} below the bound {failures:?}", failures.len()),
    );
    say(&format!(
        "criterion 9 supplementary: backlogged-source mu_p and mu_s at or above the bound in {}/{} cases",
        backlogged.0, backlogged.1
    ));
    assert!(
        pass,
        "conditional true-queue service rates fall below the saturated-relay closed forms; see the acceptance notes in README.md"
    );
}

const POOR_RELAY_LINKS: &str = "
[experiment]
name = ceilings
strategies = od
sweep = d_p_max
values = 2, 2.5, 3, 4, 5, 7, 10, 20, 50
[network]
p_pd = 0.8
s_sd = 0.3
p_relay  = 0.5, 0.5, 0.5
s_relay  = 0.5, 0.5, 0.5
relay_pd = 0.1, 0.1, 0.1
relay_sd = 0.1, 0.1, 0.1
[qos]
d_s_max = 50
[optimizer]
n_max = 3
";

const TABLE2_SENSING: &str = "[sensing]
p_md_p = 0.1, 0.09, 0.12
p_md_s = 0.1, 0.068, 0.09
p_fa = 0.05, 0.04, 0.03
";

/// Minimum relay counts along the sweep; `usize::MAX` when none suffices.
fn min_n(spec: &ExperimentSpec) -> Vec<usize> {
    run_sweep(spec, &[Method::MinRelays])
        .into_iter()
        .map(|r| r.min_relays.unwrap_or(usize::MAX))
        .collect()
}

fn show(v: &[usize]) -> String {
    let s: Vec<String> = v
        .iter()
        .map(|&n| if n == usize::MAX { "-".into() } else { n.to_string() })
        .collect();
    s.join(" ")
}

#[test]
fn criterion_10_relay_count_monotonicity() {
    let mut pass = true;
    let mut detail = Vec::new();
    for lambda_p in [0.2, 0.3] {
        let base = format!("{POOR_RELAY_LINKS}[traffic]\nlambda_p = {lambda_p}\nlambda_s = 0.1\n");
        let perfect = min_n(&parse_spec(&base).unwrap());
        let noisy = min_n(&parse_spec(&format!("{base}{TABLE2_SENSING}")).unwrap());
        let monotone = |v: &[usize]| v.windows(2).all(|w| w[1] <= w[0]);
        let dominated = perfect.iter().zip(&noisy).all(|(p, e)| e >= p);
        pass &= monotone(&perfect) && monotone(&noisy) && dominated;
        detail.push(format!(
            "D_p sweep at lambda_p {lambda_p}: perfect [{}], sensing errors [{}]",
            show(&perfect),
            show(&noisy)
        ));
    }
    let perfect = min_n(&bundled("fig11_min_relays_perfect.cfg"));
    let noisy = min_n(&bundled("fig11_min_relays_se.cfg"));
    pass &= perfect.iter().zip(&noisy).all(|(p, e)| e >= p);
    detail.push(format!(
        "lambda_p sweep (Table 2): perfect [{}], sensing errors [{}]",
        show(&perfect),
        show(&noisy)
    ));
    verdict(10, pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn optimizer_defaults_are_the_documented_ones() {
    let c = OptimizerConfig::default();
    assert_eq!((c.budget, c.restarts), (40_000, 12));
    // keeps the optimizer referenced from this target even if criteria change
    let qos = QosSpec::new(1.6, 3.0, TrafficParams::new(0.1, 0.2));
    let r = maximize_secondary_throughput(&table1_two(), Strategy::OrderedAcceptance, &qos, None, &c).unwrap();
    assert!(r.feasible);
}
