//! Tail surveys of the attempt clocks and of the cycle length.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::basic::{linear_fit, quantile, wilson, Interval, LinearFit};

use super::{iid_records, regen_replicas, RegenParams, RegenRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    /// `P[t <= U < inf]` for the attempt at time zero.
    pub survival_u: f64,
    /// `P[t <= V < inf]` over branch attempts opened in the first half of the horizon.
    pub survival_v: f64,
    pub survival_d: f64,
    /// `P[kappa > t]` over confirmed cycles.
    pub survival_kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    pub runs: usize,
    pub cycles: usize,
    /// Share of runs whose time-zero attempt never sees `U`.
    pub delta1: f64,
    pub delta1_ci: Interval,
    /// Share of pooled branch attempts that never see `V`.
    pub delta2: f64,
    pub delta2_ci: Interval,
    /// Fit of `log P[t <= V < inf]` against `t` on an even grid from the top-tenth
    /// threshold of the finite values to the observed maximum.
    pub v_log_fit: Option<LinearFit>,
    /// Same fit from `t = 0` (information only: includes the atom of quick failures).
    pub v_log_fit_full: Option<LinearFit>,
    /// Hill estimate of the exponent `g` in `P[kappa > t] ~ t^-g`.
    pub kappa_tail: Option<HillEstimate>,
    /// Fit of `log P[kappa > t]` against `log t` for `t` above the median (information only).
    pub kappa_loglog_fit: Option<LinearFit>,
    pub growth: Vec<GrowthRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t: f64,
    pub m: f64,
    /// `P[p_t >= m t]`.
    pub p_exceed: f64,
    /// `P[q_t >= m t]`.
    pub q_exceed: f64,
}

/// Points of a survival curve with fewer surviving samples are left out of fits.
pub const MIN_TAIL_COUNT: usize = 5;

/// Points of the even grid used for the `V` fit.
pub const V_FIT_POINTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub exponent: f64,
    /// `exponent / sqrt(k)`.
    pub se: f64,
    /// Order statistics used.
    pub k: usize,
    pub threshold: f64,
}

/// Hill estimator over the `k` largest samples.
pub fn hill_estimator(samples: &[f64], k: usize) -> Option<HillEstimate> {
    let mut x: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
    if k < 2 || x.len() <= k {
        return None;
    }
    x.sort_by(|a, b| b.total_cmp(a));
    let threshold = x[k];
    let mean_log = x[..k].iter().map(|v| (v / threshold).ln()).sum::<f64>() / k as f64;
    (mean_log > 0.0).then(|| {
        let exponent = 1.0 / mean_log;
        HillEstimate { exponent, se: exponent / (k as f64).sqrt(), k, threshold }
    })
}

/// Top tenth of the sample, at least ten points.
pub fn hill_k(n: usize) -> usize {
    (n / 10).max(10)
}

fn finite_part(times: &[Option<f64>], t: f64) -> f64 {
    if times.is_empty() {
        return f64::NAN;
    }
    times.iter().filter(|x| x.is_some_and(|x| x >= t)).count() as f64 / times.len() as f64
}

/// Fits `log S` against `x(t)` over points where at least `min_count` samples survive.
fn log_fit(t: &[f64], surv: &[f64], n: usize, min_count: usize, x: impl Fn(f64) -> f64) -> Option<LinearFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &s) in t.iter().zip(surv) {
        if ti >= 0.0 && x(ti).is_finite() && s * n as f64 >= min_count as f64 {
            xs.push(x(ti));
            ys.push(s.ln());
        }
    }
    (xs.len() >= 3).then(|| linear_fit(&xs, &ys, None))
}

pub fn tail_report(runs: &[RegenRun], t_grid: &[f64], growth_at: &[(f64, f64)]) -> TailReport {
    let u0: Vec<Option<f64>> = runs.iter().map(|r| r.attempts[0].u.map(|u| u - r.attempts[0].s)).collect();
    let pooled: Vec<_> =
        runs.iter().flat_map(|r| r.attempts.iter().skip(1).filter(move |a| a.s <= r.horizon / 2.0)).collect();
    let v1: Vec<Option<f64>> = pooled.iter().map(|a| a.v.map(|v| v - a.s)).collect();
    let d1: Vec<Option<f64>> = pooled.iter().map(|a| a.d().map(|d| d - a.s)).collect();
    let cycles = iid_records(runs);
    let kappas: Vec<f64> = cycles.iter().map(|c| c.kappa).collect();

    let rows: Vec<TailRow> = t_grid
        .iter()
        .map(|&t| TailRow {
            t,
            survival_u: finite_part(&u0, t),
            survival_v: finite_part(&v1, t),
            survival_d: finite_part(&d1, t),
            survival_kappa: if kappas.is_empty() {
                f64::NAN
            } else {
                kappas.iter().filter(|&&k| k > t).count() as f64 / kappas.len() as f64
            },
        })
        .collect();

    let never_u = u0.iter().filter(|x| x.is_none()).count() as u64;
    let never_v = v1.iter().filter(|x| x.is_none()).count() as u64;
    let d1ci = wilson(never_u, u0.len() as u64, 1.96);
    let d2ci = wilson(never_v, v1.len() as u64, 1.96);
    let kappa_tail = hill_estimator(&kappas, hill_k(kappas.len()));

    let (v_fit, v_fit_full) = {
        let mut fin: Vec<f64> = v1.iter().flatten().copied().collect();
        fin.sort_by(|a, b| b.total_cmp(a));
        let fit_from = |t0: f64, t_max: f64| {
            let g: Vec<f64> =
                (0..V_FIT_POINTS).map(|i| t0 + (t_max - t0) * i as f64 / (V_FIT_POINTS - 1) as f64).collect();
            let sv: Vec<f64> = g.iter().map(|&t| finite_part(&v1, t)).collect();
            log_fit(&g, &sv, v1.len(), MIN_TAIL_COUNT, |t| t)
        };
        match fin.get(MIN_TAIL_COUNT - 1) {
            Some(&t_max) => {
                let t0 = fin.get(hill_k(fin.len())).copied().unwrap_or(0.0).min(t_max);
                (fit_from(t0, t_max), fit_from(0.0, t_max))
            }
            None => (None, None),
        }
    };
    let sk: Vec<f64> = rows.iter().map(|r| r.survival_kappa).collect();
    let growth = growth_at
        .iter()
        .map(|&(t, m)| {
            let mut pe = 0usize;
            let mut qe = 0usize;
            for r in runs {
                let (_, rt, pt) = value_at(&r.grid, t);
                pe += (pt as f64 >= m * t) as usize;
                qe += ((rt - pt) as f64 >= m * t) as usize;
            }
            GrowthRow { t, m, p_exceed: pe as f64 / runs.len() as f64, q_exceed: qe as f64 / runs.len() as f64 }
        })
        .collect();

    TailReport {
        runs: runs.len(),
        cycles: cycles.len(),
        delta1: never_u as f64 / u0.len().max(1) as f64,
        delta1_ci: d1ci,
        delta2: never_v as f64 / v1.len().max(1) as f64,
        delta2_ci: d2ci,
        v_log_fit: v_fit,
        v_log_fit_full: v_fit_full,
        kappa_tail,
        kappa_loglog_fit: {
            // tail only: the range below the median is flat for any law
            let med = quantile(&kappas, 0.5);
            let keep: Vec<usize> = (0..t_grid.len()).filter(|&i| t_grid[i] >= med).collect();
            let tt: Vec<f64> = keep.iter().map(|&i| t_grid[i]).collect();
            let ss: Vec<f64> = keep.iter().map(|&i| sk[i]).collect();
            log_fit(&tt, &ss, cycles.len(), MIN_TAIL_COUNT, f64::ln)
        },
        rows,
        growth,
    }
}

/// Grid entry at or just before `t`.
pub fn value_at(grid: &[(f64, i64, i64)], t: f64) -> (f64, i64, i64) {
    let i = grid.partition_point(|g| g.0 <= t);
    grid[i.saturating_sub(1)]
}

pub fn attempt_statistics(
    params: &RegenParams,
    replicas: usize,
    t_grid: &[f64],
    growth_at: &[(f64, f64)],
    seed: u64,
) -> Result<TailReport> {
    let runs = regen_replicas(params, replicas, seed)?;
    Ok(tail_report(&runs, t_grid, growth_at))
}

pub fn write_tails_csv<W: std::io::Write>(report: &TailReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "survival_U", "survival_V", "survival_D", "survival_kappa"])?;
    for r in &report.rows {
        out.write_record([
            r.t.to_string(),
            r.survival_u.to_string(),
            r.survival_v.to_string(),
            r.survival_d.to_string(),
            r.survival_kappa.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_part_ignores_untriggered() {
        let x = [Some(1.0), Some(3.0), None, None];
        assert_eq!(finite_part(&x, 0.0), 0.5);
        assert_eq!(finite_part(&x, 2.0), 0.25);
        assert_eq!(finite_part(&x, 5.0), 0.0);
    }

    #[test]
    fn exponential_tail_is_log_linear() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s: Vec<f64> = t.iter().map(|x| (-0.3 * x).exp()).collect();
        let f = log_fit(&t, &s, 100_000, 5, |x| x).unwrap();
        assert!((f.slope + 0.3).abs() < 1e-9 && f.r2 > 0.999);
    }

    #[test]
    fn hill_recovers_pareto_exponent() {
        // inverse CDF of P[X > x] = x^-3 on x >= 1
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-1.0 / 3.0)).collect();
        let h = hill_estimator(&x, 2000).unwrap();
        assert!((h.exponent - 3.0).abs() < 0.1, "{h:?}");
        assert!(hill_estimator(&x[..5], 10).is_none());
    }

    #[test]
    fn grid_lookup() {
        let g = [(0.0, 0, 0), (1.0, 2, 1), (2.0, 3, 1)];
        assert_eq!(value_at(&g, 1.5), (1.0, 2, 1));
        assert_eq!(value_at(&g, 2.0), (2.0, 3, 1));
    }
}
