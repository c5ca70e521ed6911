//! Acceptance suite: one line per criterion, `PASS` or `FAIL`.
//!
//! Runs as a plain binary (`harness = false`) so the lines come out in order
//! and unbuffered. The process fails on any `FAIL` that is not listed in
//! `KNOWN_FAILURES`; those still print `FAIL`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use exfront::auxiliary::{dominated_coupling_run, estimate_alpha};
use exfront::labeled::{coupled_split_simulate, LabeledState};
use exfront::lattice::{InitialCondition, SimConfig};
use exfront::map_check::{bijection_check, commutation_check, degenerate_check};
use exfront::regen::demo::rw_regeneration_demo;
use exfront::regen::tails::tail_report;
use exfront::regen::{regen_replicas, RegenMode, RegenParams, RegenRun};
use exfront::rng;
use exfront::stats::diagnostics::{iid_diagnostics, limit_diagnostics, sample_fronts};
use exfront::stats::estimates::{cycle_estimates, slope_estimates, EstimateOptions, EstimateReport};
use exfront::stats::front_law::{empty_is_absorbing, front_law, FrontEngine, FrontLawOptions};
use exfront::stats::nondegeneracy::nondegeneracy_probe;

const SEED: u64 = 20_240_601;

/// Criteria that cannot hold for the model as specified; see the README.
const KNOWN_FAILURES: &[&str] = &["domination"];

struct Suite {
    lines: Vec<(String, bool)>,
    start: Instant,
}

impl Suite {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail} [{:.0}s]", self.start.elapsed().as_secs_f64());
        self.lines.push((name.to_string(), pass));
    }

    fn info(&self, name: &str, detail: String) {
        println!("INFO {name}: {detail}");
    }
}

struct Bundle {
    params: RegenParams,
    runs: Vec<RegenRun>,
    est: EstimateReport,
}

fn bundle(params: RegenParams, replicas: usize, seed: u64) -> Bundle {
    let runs = regen_replicas(&params, replicas, seed).expect("regeneration runs");
    let records: Vec<_> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let est = cycle_estimates(&records, &EstimateOptions { seed, ..Default::default() }).expect("cycle estimates");
    Bundle { params, runs, est }
}

fn map_checks(s: &mut Suite) {
    let rows = bijection_check(100_000, 64, SEED).unwrap();
    let detail = rows
        .iter()
        .map(|r| format!("{} {} trials, {} failures, {} without an empty site", r.check, r.trials, r.failures, r.skipped))
        .collect::<Vec<_>>()
        .join("; ");
    s.report("bijection", rows.iter().all(|r| r.passed() && r.trials == 100_000), detail);

    let c = commutation_check(100, 1000, 64, 0.5, SEED).unwrap();
    s.report(
        "commutation",
        c.passed() && c.trials == 100_000,
        format!("{} events over 100 trajectories, {} failures, {} skipped", c.trials, c.failures, c.skipped),
    );

    let one = degenerate_check(1.0, 64, 500.0, 50, SEED).unwrap();
    let zero = degenerate_check(0.0, 64, 500.0, 50, SEED ^ 1).unwrap();
    s.report(
        "degenerate",
        one.passed() && zero.passed() && one.trials > 0 && zero.trials > 0,
        format!(
            "rho=1: {} events, {} with p != r; rho=0: {} events, {} with p != 0",
            one.trials, one.failures, zero.trials, zero.failures
        ),
    );
}

fn lln(s: &mut Suite, zr: &Bundle) {
    let slope = slope_estimates(&zr.runs).unwrap();
    let e = &zr.est;
    let pass = slope.v_hat.agrees_with(&e.v_hat, 3.0)
        && slope.w_hat.agrees_with(&e.w_hat, 3.0)
        && e.v_hat.ci.lo > 0.0
        && e.w_hat.ci.lo > 0.0
        && slope.v_hat.ci.lo > 0.0
        && slope.w_hat.ci.lo > 0.0;
    s.report(
        "lln",
        pass,
        format!(
            "v ratio {:.4}±{:.4} slope {:.4}±{:.4}; w ratio {:.4}±{:.4} slope {:.4}±{:.4}; {} cycles",
            e.v_hat.value,
            e.v_hat.se,
            slope.v_hat.value,
            slope.v_hat.se,
            e.w_hat.value,
            e.w_hat.se,
            slope.w_hat.value,
            slope.w_hat.se,
            e.cycles
        ),
    );
}

fn clt(s: &mut Suite) {
    let grid = [250.0, 500.0, 1000.0, 2000.0];
    let cfg = SimConfig { rho: 0.5, window: 64, initial: InitialCondition::Bernoulli(0.5), ..Default::default() };
    let d = limit_diagnostics(&cfg, FrontEngine::Lattice, 1000, &grid, SEED).unwrap();
    s.report(
        "clt",
        d.linear_variance(0.98) && d.gaussian_endpoints(),
        format!(
            "R2 r {:.4} p {:.4}; var slope r {:.3} p {:.3}; AD r {:.3} p {:.3} (1% critical {:.3}); boundary runs {}",
            d.fit_r.r2,
            d.fit_p.r2,
            d.fit_r.slope,
            d.fit_p.slope,
            d.ad_r.statistic,
            d.ad_p.statistic,
            d.ad_r.critical_1pct,
            d.runs_with_boundary_events
        ),
    );
    let single = SimConfig { initial: InitialCondition::Single, ..cfg };
    let d = limit_diagnostics(&single, FrontEngine::Lattice, 1000, &grid, SEED).unwrap();
    s.info(
        "clt_single_particle_start",
        format!(
            "Var r_t {:?}, R2 {:.4}, AD r {:.1} p {:.1}",
            d.rows.iter().map(|r| r.var_r.round()).collect::<Vec<_>>(),
            d.fit_r.r2,
            d.ad_r.statistic,
            d.ad_p.statistic
        ),
    );
}

fn tails_and_nondegeneracy(s: &mut Suite, zr: &Bundle, alpha_hat: f64) {
    let mut grid: Vec<f64> = (0..=50).map(f64::from).collect();
    let mut t = 64.0;
    while t < zr.params.horizon {
        grid.push(t);
        t *= 1.25;
    }
    let tr = tail_report(&zr.runs, &grid, &[]);
    let v_r2 = tr.v_log_fit.map_or(f64::NAN, |f| f.r2);
    let hill = tr.kappa_tail;
    s.report(
        "tails",
        v_r2 > 0.9
            && hill.is_some_and(|h| h.exponent > 2.0)
            && tr.delta1_ci.lo > 0.0
            && tr.delta2_ci.lo > 0.0,
        format!(
            "V log-survival R2 {:.3} (from t=0: {:.3}); kappa tail exponent {} ; delta1 {:.3} [{:.3}, {:.3}]; delta2 {:.5} [{:.5}, {:.5}]",
            v_r2,
            tr.v_log_fit_full.map_or(f64::NAN, |f| f.r2),
            hill.map_or("n/a".into(), |h| format!("{:.2}±{:.2} over top {}", h.exponent, h.se, h.k)),
            tr.delta1,
            tr.delta1_ci.lo,
            tr.delta1_ci.hi,
            tr.delta2,
            tr.delta2_ci.lo,
            tr.delta2_ci.hi
        ),
    );

    let e = &zr.est;
    let mut probe = zr.params.clone();
    probe.horizon = 2000.0;
    probe.guard = 0.0;
    let beta = 0.2;
    let nd = nondegeneracy_probe(&probe, beta, alpha_hat, e.v2_hat.value, (tr.delta1, tr.delta1_ci), 50_000, SEED);
    let (pass, detail) = match nd {
        Ok(nd) => (
            e.sigma_r_hat.ci.lo > 0.0 && e.sigma_p_hat.ci.lo > 0.0 && nd.positive(),
            format!(
                "sigma_r {:.3} [{:.3}, {:.3}], sigma_p {:.3} [{:.3}, {:.3}]; probe beta={beta}: {} of {} runs, joint [{:.5}, {:.5}], conditional {:.4} [{:.4}, {:.4}]",
                e.sigma_r_hat.value,
                e.sigma_r_hat.ci.lo,
                e.sigma_r_hat.ci.hi,
                e.sigma_p_hat.value,
                e.sigma_p_hat.ci.lo,
                e.sigma_p_hat.ci.hi,
                nd.hits,
                nd.runs,
                nd.joint_ci.lo,
                nd.joint_ci.hi,
                nd.conditional,
                nd.conditional_ci.lo,
                nd.conditional_ci.hi
            ),
        ),
        Err(err) => (false, format!("probe failed: {err}")),
    };
    s.report("nondegeneracy", pass, detail);
}

fn iid(s: &mut Suite, zr: &Bundle) {
    match iid_diagnostics(&zr.runs) {
        Ok(r) => s.report(
            "iid",
            r.passes(),
            format!(
                "{} cycles, lag1 {:.4} (bound {:.4}); KS first vs rest {:.3} (1% critical {:.3}, {} vs {})",
                r.cycles, r.lag1, r.lag1_bound, r.ks_first_rest.statistic, r.ks_first_rest.critical_1pct, r.first, r.rest
            ),
        ),
        Err(e) => s.report("iid", false, e.to_string()),
    }
}

fn domination(s: &mut Suite) -> f64 {
    let est = estimate_alpha(3, 500.0, 1000, SEED).unwrap();
    let runs: Vec<_> = (0..1000u64)
        .into_par_iter()
        .map(|i| dominated_coupling_run(3, 0.5, 500.0, rng::replica_seed(SEED ^ 0xd0, i)).unwrap())
        .collect();
    let bad = runs.iter().filter(|r| !r.holds()).count();
    let levels: usize = runs.iter().map(|r| r.levels_checked).sum();
    let violations: usize = runs.iter().map(|r| r.violations).sum();
    let ci = est.ci.unwrap();
    s.report(
        "domination",
        bad == 0 && est.alpha_hat > 0.0 && ci.lo > 0.0,
        format!(
            "{bad} of 1000 runs violate (levels {violations} of {levels}); alpha_hat(n=3) {:.4} [{:.4}, {:.4}]",
            est.alpha_hat, ci.lo, ci.hi
        ),
    );
    est.alpha_hat
}

fn coupling(s: &mut Suite) {
    let out: Vec<_> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(SEED ^ 0xc0, i);
            let old = r.random_range(0..8);
            let mut particles: BTreeMap<i64, i64> = (0..old).map(|l| (l, -r.random_range(0..10i64))).collect();
            particles.insert(old, 0);
            let init = LabeledState { particles, zfront: 0, counter: old };
            coupled_split_simulate(&init, 0.5, 200.0, rng::replica_seed(SEED, i), 256).unwrap()
        })
        .collect();
    let violations: u64 = out.iter().map(|r| r.violations).sum();
    let reached = out.iter().filter(|r| r.vprime.is_some()).count();
    let events: u64 = out.iter().map(|r| r.events).sum();
    s.report(
        "coupling",
        violations == 0,
        format!("1000 runs, {events} events compared, {violations} violations; V' reached in {reached} runs"),
    );
}

fn front_law_line(s: &mut Suite, alpha_hat: f64) {
    let mut p = RegenParams::new(0.5, 0.05, 0.12, 4000.0).unwrap();
    p.mode = RegenMode::AltHoles;
    let ok_alpha = p.check_against(alpha_hat).is_ok();
    let cfg = SimConfig { rho: 0.5, window: 32, ..Default::default() };
    let opts = FrontLawOptions {
        times: vec![1e2, 1e3, 1e4],
        replicas: 10_000,
        engine: FrontEngine::Holes,
        cycle_replicas: 256,
        ..Default::default()
    };
    let rep = front_law(&cfg, &p, &opts, SEED).unwrap();
    let tv: Vec<f64> = rep.tv.iter().map(|r| r.tv).collect();
    let decreasing = tv.windows(2).all(|w| w[1] < w[0]);
    let absorbing = empty_is_absorbing(32, 0.5) && empty_is_absorbing(64, 0.3);
    s.report(
        "front_law",
        ok_alpha && decreasing && tv.last().is_some_and(|&x| x < 0.05) && absorbing,
        format!(
            "TV {} ; cycle average over {} cycles (N_min {}); empty state absorbing: {absorbing}",
            rep.tv.iter().map(|r| format!("t={}: {:.4}±{:.4}", r.t, r.tv, r.se)).collect::<Vec<_>>().join(", "),
            rep.cycles_used,
            rep.n_min
        ),
    );
}

fn rw_demo(s: &mut Suite) {
    let d = rw_regeneration_demo(1.0 / 3.0, 2.0 / 3.0, 100, 100_000, SEED).unwrap();
    s.report(
        "rw_demo",
        d.kappa_zero_within(3.0) && d.laws_agree(),
        format!(
            "P[kappa=0] {:.4}±{:.4} vs {:.4}; KS end {:.4} mid {:.4} (1% critical {:.4})",
            d.p_kappa_zero,
            d.p_kappa_zero_se,
            d.p_kappa_zero_exact,
            d.ks_end.statistic,
            d.ks_mid.statistic,
            d.ks_end.critical_1pct
        ),
    );
}

fn truncation(s: &mut Suite) {
    let runs = 2000;
    let t = 1000.0;
    let mut v = Vec::new();
    let mut clean = Vec::new();
    for window in [256, 512] {
        let cfg = SimConfig { rho: 0.5, window, initial: InitialCondition::Bernoulli(0.5), ..Default::default() };
        let f = sample_fronts(&cfg, FrontEngine::Lattice, runs, &[t], SEED ^ window as u64).unwrap();
        v.push(f.r[0].iter().sum::<f64>() / (runs as f64 * t));
        clean.push(1.0 - f.runs_with_boundary_events as f64 / runs as f64);
    }
    let change = (v[1] - v[0]).abs() / v[0];
    s.report(
        "truncation",
        change < 0.01 && clean.iter().all(|&c| c >= 0.99),
        format!(
            "v L=256 {:.4}, L=512 {:.4}, change {:.2}%; runs without boundary events {:.1}% / {:.1}%",
            v[0],
            v[1],
            100.0 * change,
            100.0 * clean[0],
            100.0 * clean[1]
        ),
    );
}

fn detectors(s: &mut Suite, zr: &Bundle, alt: &Bundle) {
    let (a, b) = (&zr.est, &alt.est);
    s.report(
        "two_detectors",
        a.v_hat.agrees_with(&b.v_hat, 3.0) && a.w_hat.agrees_with(&b.w_hat, 3.0),
        format!(
            "v zr {:.4}±{:.4} holes {:.4}±{:.4}; w zr {:.4}±{:.4} holes {:.4}±{:.4}; cycles {} / {}",
            a.v_hat.value,
            a.v_hat.se,
            b.v_hat.value,
            b.v_hat.se,
            a.w_hat.value,
            a.w_hat.se,
            b.w_hat.value,
            b.w_hat.se,
            a.cycles,
            b.cycles
        ),
    );
}

fn main() {
    let mut s = Suite { lines: Vec::new(), start: Instant::now() };

    map_checks(&mut s);
    let alpha_hat = domination(&mut s);
    coupling(&mut s);
    rw_demo(&mut s);
    clt(&mut s);

    let mut zp = RegenParams::new(0.5, 0.44 * alpha_hat, 0.9 * alpha_hat, 1e5).unwrap();
    zp.guard = 2000.0;
    let zr = bundle(zp, 12, SEED);
    let mut ap = RegenParams::new(0.5, 0.3 * alpha_hat, 0.8 * alpha_hat, 2000.0).unwrap();
    ap.mode = RegenMode::AltHoles;
    let alt = bundle(ap, 64, SEED ^ 0xa17);
    s.info("bundles", format!("zero-range {} cycles, holes {} cycles", zr.est.cycles, alt.est.cycles));

    lln(&mut s, &zr);
    iid(&mut s, &zr);
    tails_and_nondegeneracy(&mut s, &zr, alpha_hat);
    detectors(&mut s, &zr, &alt);
    front_law_line(&mut s, alpha_hat);
    truncation(&mut s);

    let failed: Vec<&str> = s.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    let unexpected: Vec<&str> = failed.iter().copied().filter(|n| !KNOWN_FAILURES.contains(n)).collect();
    println!(
        "acceptance: {} of {} criteria pass; known failures: {:?}; unexpected failures: {:?}",
        s.lines.len() - failed.len(),
        s.lines.len(),
        failed.iter().filter(|n| KNOWN_FAILURES.contains(n)).collect::<Vec<_>>(),
        unexpected
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
