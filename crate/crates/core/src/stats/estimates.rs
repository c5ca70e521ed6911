//! Renewal-reward estimates of the speeds and variance rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regen::{RegenRecord, RegenRun};

use super::basic::{bootstrap_indices, linear_fit, mean, std_err, Interval};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub ci: Interval,
}

impl Estimate {
    fn normal(value: f64, se: f64) -> Self {
        Self { value, se, ci: Interval { lo: value - 1.96 * se, hi: value + 1.96 * se } }
    }

    /// `|a - b| <= k * sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.se.hypot(other.se)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub method: String,
    pub cycles: usize,
    pub censoring_fraction: f64,
    /// Speed of `r = q + p`.
    pub v_hat: Estimate,
    /// Speed of the zero-range front `q`.
    pub v1_hat: Estimate,
    /// Speed of the counter `p`.
    pub v2_hat: Estimate,
    pub w_hat: Estimate,
    pub sigma_r_hat: Estimate,
    pub sigma_p_hat: Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub min_records: usize,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { min_records: 30, resamples: 1000, level: 0.95, seed: 0 }
    }
}

struct Cycles {
    k: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Cycles {
    fn ratio(num: &[f64], k: &[f64], idx: &[usize]) -> f64 {
        idx.iter().map(|&i| num[i]).sum::<f64>() / idx.iter().map(|&i| k[i]).sum::<f64>()
    }

    /// `E[(x - speed kappa)^2] / E[kappa]` with the speed re-estimated on `idx`.
    fn rate(num: &[f64], k: &[f64], idx: &[usize]) -> f64 {
        let s = Self::ratio(num, k, idx);
        let sq: f64 = idx.iter().map(|&i| (num[i] - s * k[i]).powi(2)).sum();
        sq / idx.iter().map(|&i| k[i]).sum::<f64>()
    }

    /// Delta-method standard error of a ratio of means.
    fn ratio_se(num: &[f64], k: &[f64]) -> f64 {
        let n = k.len() as f64;
        let s = num.iter().sum::<f64>() / k.iter().sum::<f64>();
        let resid: Vec<f64> = num.iter().zip(k).map(|(a, b)| a - s * b).collect();
        let var = resid.iter().map(|x| x * x).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / mean(k)
    }
}

/// Ratio estimators over confirmed, non-initial cycles.
pub fn cycle_estimates(records: &[RegenRecord], opts: &EstimateOptions) -> Result<EstimateReport> {
    let used: Vec<&RegenRecord> = records.iter().filter(|r| r.confirmed && !r.initial).collect();
    if used.len() < opts.min_records.max(2) {
        return Err(Error::Insufficient(format!(
            "{} confirmed cycles, need at least {}",
            used.len(),
            opts.min_records.max(2)
        )));
    }
    let c = Cycles {
        k: used.iter().map(|r| r.kappa).collect(),
        r: used.iter().map(|r| r.dr as f64).collect(),
        p: used.iter().map(|r| r.dp as f64).collect(),
        q: used.iter().map(|r| r.dq as f64).collect(),
    };
    let n = c.k.len();
    let all: Vec<usize> = (0..n).collect();
    let boot = |f: &dyn Fn(&[usize]) -> f64, salt: u64| {
        bootstrap_indices(n, opts.resamples, opts.level, opts.seed ^ salt, |idx| f(idx))
    };
    let ratio = |num: &[f64], salt: u64| {
        let value = Cycles::ratio(num, &c.k, &all);
        let se = Cycles::ratio_se(num, &c.k);
        Estimate { value, se, ci: boot(&|idx| Cycles::ratio(num, &c.k, idx), salt) }
    };
    let rate = |num: &[f64], salt: u64| {
        let value = Cycles::rate(num, &c.k, &all);
        let ci = boot(&|idx| Cycles::rate(num, &c.k, idx), salt);
        // half-width of the percentile interval, read as 1.96 standard errors
        Estimate { value, se: (ci.hi - ci.lo) / (2.0 * 1.96), ci }
    };
    let v2 = ratio(&c.p, 2);
    let censored = records.iter().filter(|r| !r.confirmed).count();
    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        method: "ratio".into(),
        cycles: n,
        censoring_fraction: censored as f64 / records.len() as f64,
        v_hat: ratio(&c.r, 1),
        v1_hat: ratio(&c.q, 3),
        v2_hat: v2,
        w_hat: v2,
        sigma_r_hat: rate(&c.r, 4),
        sigma_p_hat: rate(&c.p, 5),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub replicas: usize,
    pub v_hat: Estimate,
    pub w_hat: Estimate,
}

/// Per-replica least-squares slopes of `r_t` and `p_t`, averaged over replicas.
pub fn slope_estimates(runs: &[RegenRun]) -> Result<SlopeReport> {
    if runs.len() < 2 {
        return Err(Error::Insufficient("slope estimates need at least two replicas".into()));
    }
    let mut vs = Vec::with_capacity(runs.len());
    let mut ws = Vec::with_capacity(runs.len());
    for run in runs {
        let t: Vec<f64> = run.grid.iter().map(|g| g.0).collect();
        let r: Vec<f64> = run.grid.iter().map(|g| g.1 as f64).collect();
        let p: Vec<f64> = run.grid.iter().map(|g| g.2 as f64).collect();
        vs.push(linear_fit(&t, &r, None).slope);
        ws.push(linear_fit(&t, &p, None).slope);
    }
    Ok(SlopeReport {
        replicas: runs.len(),
        v_hat: Estimate::normal(mean(&vs), std_err(&vs)),
        w_hat: Estimate::normal(mean(&ws), std_err(&ws)),
    })
}

pub fn write_estimates_csv<W: std::io::Write>(report: &EstimateReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "value", "se", "ci_lo", "ci_hi", "method", "cycles", "censoring_fraction"])?;
    let rows = [
        ("v", report.v_hat),
        ("v1", report.v1_hat),
        ("v2", report.v2_hat),
        ("w", report.w_hat),
        ("sigma_r", report.sigma_r_hat),
        ("sigma_p", report.sigma_p_hat),
    ];
    for (name, e) in rows {
        out.write_record([
            name.to_string(),
            e.value.to_string(),
            e.se.to_string(),
            e.ci.lo.to_string(),
            e.ci.hi.to_string(),
            report.method.clone(),
            report.cycles.to_string(),
            report.censoring_fraction.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kappa: f64, dr: i64, dp: i64) -> RegenRecord {
        RegenRecord {
            replica: 0,
            cycle: 1,
            kappa,
            dr,
            dp,
            dq: dr - dp,
            confirmed: true,
            initial: false,
            attempt: 1,
            start: 0.0,
        }
    }

    #[test]
    fn ratio_arithmetic() {
        let opts = EstimateOptions { min_records: 2, resamples: 50, ..Default::default() };
        let r = cycle_estimates(&[rec(2.0, 3, 1), rec(2.0, 2, 1)], &opts).unwrap();
        assert_eq!(r.v_hat.value, 1.25);
        assert_eq!(r.w_hat.value, 0.5);
        assert_eq!(r.v1_hat.value + r.v2_hat.value, r.v_hat.value);
        // sigma_p: residuals 1 - 0.5*2 = 0 both
        assert_eq!(r.sigma_p_hat.value, 0.0);
        // sigma_r: residuals 0.5, -0.5
        assert!((r.sigma_r_hat.value - 0.5 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn initial_and_censored_cycles_are_skipped() {
        let mut a = rec(100.0, 100, 100);
        a.initial = true;
        let mut b = rec(100.0, 0, 0);
        b.confirmed = false;
        let opts = EstimateOptions { min_records: 2, resamples: 50, ..Default::default() };
        let r = cycle_estimates(&[a, b, rec(2.0, 3, 1), rec(2.0, 2, 1)], &opts).unwrap();
        assert_eq!(r.cycles, 2);
        assert_eq!(r.v_hat.value, 1.25);
        assert_eq!(r.censoring_fraction, 0.25);
        assert!(cycle_estimates(&[rec(1.0, 1, 1)], &opts).is_err());
    }

    #[test]
    fn full_branching_gives_equal_speeds() {
        let recs: Vec<_> = (1..40).map(|i| rec(i as f64 * 0.5, i, i)).collect();
        let r = cycle_estimates(&recs, &EstimateOptions { resamples: 50, ..Default::default() }).unwrap();
        assert_eq!(r.v_hat.value, r.w_hat.value);
        assert_eq!(r.v1_hat.value, 0.0);
    }

    #[test]
    fn agreement_rule() {
        let a = Estimate::normal(1.0, 0.3);
        let b = Estimate::normal(2.0, 0.4);
        assert!(a.agrees_with(&b, 2.0));
        assert!(!a.agrees_with(&b, 1.9));
    }
}
