//! Fluctuation and independence checks on simulated fronts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{SimConfig, Simulation};
use crate::regen::alt::{HoleLabeled, HoleLabeledState};
use crate::regen::RegenRun;
use crate::rng;

use super::basic::{
    anderson_darling_normal, ks_two_sample, linear_fit, mean, std_err, variance, AdResult, KsResult, LinearFit,
};
use super::estimates::Estimate;
use super::front_law::FrontEngine;

/// `(r_t, p_t)` per replica at each grid time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSamples {
    pub t_grid: Vec<f64>,
    /// `r[j][i]` is replica `i` at `t_grid[j]`.
    pub r: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub runs_with_boundary_events: usize,
}

pub fn sample_fronts(config: &SimConfig, engine: FrontEngine, replicas: usize, t_grid: &[f64], seed: u64) -> Result<FrontSamples> {
    config.validate()?;
    let per: Vec<(Vec<(i64, i64)>, bool)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let s = rng::replica_seed(seed, i);
            let mut out = Vec::with_capacity(t_grid.len());
            match engine {
                FrontEngine::Lattice => {
                    let mut c = config.clone();
                    c.seed = s;
                    let mut sim = Simulation::new(&c)?;
                    for &t in t_grid {
                        while sim.step_until(t)?.is_some() {}
                        out.push((sim.state().front(), sim.state().counter()));
                    }
                    Ok((out, sim.state().boundary_events > 0))
                }
                FrontEngine::Holes => {
                    let mut sim = HoleLabeled::new(HoleLabeledState::single(config.window), config.rho, s)?;
                    for &t in t_grid {
                        while sim.step_until(t).is_some() {}
                        out.push((sim.state().front, sim.state().counter));
                    }
                    Ok((out, false))
                }
            }
        })
        .collect::<Result<_>>()?;
    let col = |j: usize, f: fn(&(i64, i64)) -> i64| per.iter().map(|(v, _)| f(&v[j]) as f64).collect::<Vec<_>>();
    Ok(FrontSamples {
        t_grid: t_grid.to_vec(),
        r: (0..t_grid.len()).map(|j| col(j, |x| x.0)).collect(),
        p: (0..t_grid.len()).map(|j| col(j, |x| x.1)).collect(),
        runs_with_boundary_events: per.iter().filter(|x| x.1).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub t: f64,
    pub mean_r: f64,
    pub var_r: f64,
    pub mean_p: f64,
    pub var_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub replicas: usize,
    pub rows: Vec<VarianceRow>,
    /// Variance against `t`, weighted by `1/t^2`.
    pub fit_r: LinearFit,
    pub fit_p: LinearFit,
    /// Standardized endpoints at the last grid time.
    pub ad_r: AdResult,
    pub ad_p: AdResult,
    /// `r_T / T` and `p_T / T` averaged over replicas.
    pub endpoint_v: Estimate,
    pub endpoint_w: Estimate,
    pub runs_with_boundary_events: usize,
}

impl DiagnosticsReport {
    pub fn linear_variance(&self, min_r2: f64) -> bool {
        self.fit_r.r2 > min_r2 && self.fit_p.r2 > min_r2 && self.fit_r.slope > 0.0 && self.fit_p.slope > 0.0
    }

    pub fn gaussian_endpoints(&self) -> bool {
        self.ad_r.passes() && self.ad_p.passes()
    }
}

pub fn diagnostics_from(samples: &FrontSamples) -> Result<DiagnosticsReport> {
    let t = &samples.t_grid;
    if t.len() < 3 || t.windows(2).any(|w| w[1] <= w[0]) || t[0] <= 0.0 {
        return Err(Error::Config("t_grid must be increasing, positive and have at least 3 points".into()));
    }
    let n = samples.r[0].len();
    if n < 8 {
        return Err(Error::Insufficient(format!("{n} replicas, need at least 8")));
    }
    let rows: Vec<VarianceRow> = (0..t.len())
        .map(|j| VarianceRow {
            t: t[j],
            mean_r: mean(&samples.r[j]),
            var_r: variance(&samples.r[j]),
            mean_p: mean(&samples.p[j]),
            var_p: variance(&samples.p[j]),
        })
        .collect();
    // sample variances have standard deviation growing like t
    let w: Vec<f64> = t.iter().map(|x| 1.0 / (x * x)).collect();
    let vr: Vec<f64> = rows.iter().map(|r| r.var_r).collect();
    let vp: Vec<f64> = rows.iter().map(|r| r.var_p).collect();
    let last = t.len() - 1;
    let tt = t[last];
    let speeds = |xs: &[f64]| {
        let s: Vec<f64> = xs.iter().map(|x| x / tt).collect();
        let (m, se) = (mean(&s), std_err(&s));
        Estimate { value: m, se, ci: super::basic::Interval { lo: m - 1.96 * se, hi: m + 1.96 * se } }
    };
    Ok(DiagnosticsReport {
        replicas: n,
        fit_r: linear_fit(t, &vr, Some(&w)),
        fit_p: linear_fit(t, &vp, Some(&w)),
        ad_r: anderson_darling_normal(&samples.r[last]),
        ad_p: anderson_darling_normal(&samples.p[last]),
        endpoint_v: speeds(&samples.r[last]),
        endpoint_w: speeds(&samples.p[last]),
        runs_with_boundary_events: samples.runs_with_boundary_events,
        rows,
    })
}

/// Variance growth and endpoint normality. Only meaningful for `0 < rho < 1`.
pub fn limit_diagnostics(
    config: &SimConfig,
    engine: FrontEngine,
    replicas: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<DiagnosticsReport> {
    if !(config.rho > 0.0 && config.rho < 1.0) {
        return Err(Error::Config(format!(
            "fluctuation diagnostics need 0 < rho < 1, got {}: the front is then degenerate",
            config.rho
        )));
    }
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("t_grid must be increasing with at least 3 points".into()));
    }
    diagnostics_from(&sample_fronts(config, engine, replicas, t_grid, seed)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidReport {
    pub cycles: usize,
    /// Lag-1 autocorrelation of cycle lengths, pooled over pairs within each replica.
    pub lag1: f64,
    pub pairs: usize,
    /// `3 / sqrt(pairs)`.
    pub lag1_bound: f64,
    /// First i.i.d. cycle of each replica against all later ones.
    pub ks_first_rest: KsResult,
    pub first: usize,
    pub rest: usize,
}

impl IidReport {
    pub fn passes(&self) -> bool {
        self.lag1.abs() <= self.lag1_bound && !self.ks_first_rest.rejects()
    }
}

pub fn iid_diagnostics(runs: &[RegenRun]) -> Result<IidReport> {
    let per: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.records.iter().filter(|c| c.confirmed && !c.initial).map(|c| c.kappa).collect())
        .collect();
    let all: Vec<f64> = per.iter().flatten().copied().collect();
    let pairs: usize = per.iter().map(|v| v.len().saturating_sub(1)).sum();
    if pairs < 2 {
        return Err(Error::Insufficient(format!("{pairs} consecutive cycle pairs, need at least 2")));
    }
    let m = mean(&all);
    let den = all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / all.len() as f64;
    let num = per
        .iter()
        .flat_map(|v| v.windows(2).map(|w| (w[0] - m) * (w[1] - m)))
        .sum::<f64>()
        / pairs as f64;
    let first: Vec<f64> = per.iter().filter_map(|v| v.first().copied()).collect();
    let rest: Vec<f64> = per.iter().flat_map(|v| v.iter().skip(1).copied()).collect();
    Ok(IidReport {
        cycles: all.len(),
        lag1: num / den,
        pairs,
        lag1_bound: 3.0 / (pairs as f64).sqrt(),
        ks_first_rest: ks_two_sample(&first, &rest),
        first: first.len(),
        rest: rest.len(),
    })
}

pub fn write_variance_csv<W: std::io::Write>(report: &DiagnosticsReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "mean_r", "var_r", "mean_p", "var_p"])?;
    for r in &report.rows {
        out.write_record([
            r.t.to_string(),
            r.mean_r.to_string(),
            r.var_r.to_string(),
            r.mean_p.to_string(),
            r.var_p.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regen::{RegenMode, RegenRecord};

    #[test]
    fn degenerate_rho_rejected() {
        for rho in [0.0, 1.0] {
            let cfg = SimConfig { rho, window: 16, ..Default::default() };
            assert!(limit_diagnostics(&cfg, FrontEngine::Lattice, 10, &[1.0, 2.0, 3.0], 1).is_err());
        }
    }

    #[test]
    fn brownian_samples_fit_a_line() {
        // exact Gaussian increments: variance 2t, mean t
        use rand::Rng;
        let t = vec![1.0, 2.0, 4.0, 8.0];
        let mut rng = rng::stream(5, 0);
        let mut r = vec![vec![0.0; 2000]; 4];
        for i in 0..2000 {
            let mut x = 0.0;
            let mut prev = 0.0;
            for j in 0..4 {
                let dt: f64 = t[j] - prev;
                let z: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                x += dt + (2.0 * dt).sqrt() * z;
                r[j][i] = x;
                prev = t[j];
            }
        }
        let s = FrontSamples { t_grid: t, r: r.clone(), p: r, runs_with_boundary_events: 0 };
        let d = diagnostics_from(&s).unwrap();
        assert!(d.linear_variance(0.98), "{d:?}");
        assert!((d.fit_r.slope - 2.0).abs() < 0.3);
        assert!((d.endpoint_v.value - 1.0).abs() < 4.0 * d.endpoint_v.se);
    }

    fn run(kappas: &[f64]) -> RegenRun {
        let mut records: Vec<RegenRecord> = kappas
            .iter()
            .enumerate()
            .map(|(i, &k)| RegenRecord {
                replica: 0,
                cycle: i + 1,
                kappa: k,
                dr: 1,
                dp: 1,
                dq: 0,
                confirmed: true,
                initial: i == 0,
                attempt: 1,
                start: 0.0,
            })
            .collect();
        records.push(RegenRecord { confirmed: false, ..records[0].clone() });
        RegenRun {
            replica: 0,
            mode: RegenMode::AltHoles,
            horizon: 1.0,
            attempts: vec![],
            records,
            grid: vec![],
            final_r: 0,
            final_p: 0,
        }
    }

    #[test]
    fn alternating_cycles_have_negative_lag1() {
        let r = iid_diagnostics(&[run(&[9.0, 1.0, 3.0, 1.0, 3.0, 1.0, 3.0])]).unwrap();
        assert_eq!(r.cycles, 6);
        assert_eq!(r.pairs, 5);
        assert!((r.lag1 + 1.0).abs() < 1e-12, "{}", r.lag1);
    }
}
