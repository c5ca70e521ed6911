//! Regeneration for a discrete-time asymmetric simple random walk.
//!
//! `kappa` is the first time the walk stands on a new maximum that it never
//! drops below again. The walk after `kappa` should have the law of the walk
//! conditioned on `kappa = 0`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::basic::{ks_two_sample, KsResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub p_left: f64,
    pub q_right: f64,
    pub steps: usize,
    pub replicas: usize,
    /// Estimated `P[kappa = 0]` with its standard error.
    pub p_kappa_zero: f64,
    pub p_kappa_zero_se: f64,
    /// `1 - p / q`.
    pub p_kappa_zero_exact: f64,
    pub mean_kappa: f64,
    /// Displacement after `steps` steps: post-kappa sample vs kappa=0 sample.
    pub ks_end: KsResult,
    /// Same at `steps / 2`.
    pub ks_mid: KsResult,
}

impl DemoReport {
    pub fn kappa_zero_within(&self, k: f64) -> bool {
        (self.p_kappa_zero - self.p_kappa_zero_exact).abs() <= k * self.p_kappa_zero_se
    }

    pub fn laws_agree(&self) -> bool {
        !self.ks_end.rejects() && !self.ks_mid.rejects()
    }
}

struct Walk {
    kappa: usize,
    /// `X_{kappa+i} - X_kappa` for `i = 0..=steps`.
    after: Vec<i64>,
}

/// Steps beyond which a return below the current level is treated as impossible.
fn safety_margin(p: f64, q: f64) -> usize {
    if p == 0.0 {
        return 0;
    }
    // a return from height d has probability (p/q)^d; the walk gains (q-p) per step
    let d = 40.0 / (q / p).ln();
    (d / (q - p)).ceil() as usize + 64
}

fn one_walk(p: f64, steps: usize, seed: u64) -> Walk {
    let q = 1.0 - p;
    let margin = safety_margin(p, q);
    let mut r = rng::stream(seed, 0);
    let mut path = vec![0i64];
    let mut len = steps + margin + 256;
    loop {
        while path.len() <= len {
            let x = *path.last().expect("non-empty");
            path.push(if r.random::<f64>() < p { x - 1 } else { x + 1 });
        }
        // suffix minima over the known path stand in for the infinite future
        let n = path.len();
        let mut suffix = vec![0i64; n];
        suffix[n - 1] = path[n - 1];
        for k in (0..n - 1).rev() {
            suffix[k] = suffix[k + 1].min(path[k]);
        }
        let mut prev_max = -1i64;
        for k in 0..n.saturating_sub(steps + margin) {
            if suffix[k] > prev_max {
                let base = path[k];
                return Walk { kappa: k, after: path[k..=k + steps].iter().map(|x| x - base).collect() };
            }
            prev_max = prev_max.max(path[k]);
        }
        len *= 2;
    }
}

pub fn rw_regeneration_demo(p_left: f64, q_right: f64, steps: usize, replicas: usize, seed: u64) -> Result<DemoReport> {
    if !(p_left >= 0.0 && q_right > p_left && (p_left + q_right - 1.0).abs() < 1e-12) {
        return Err(Error::Config(format!("need q > p >= 0 and p + q = 1, got p = {p_left}, q = {q_right}")));
    }
    if steps < 2 || replicas < 4 {
        return Err(Error::Config("need steps >= 2 and replicas >= 4".into()));
    }
    let walks: Vec<Walk> =
        (0..replicas as u64).into_par_iter().map(|i| one_walk(p_left, steps, rng::replica_seed(seed, i))).collect();

    let zero = walks.iter().filter(|w| w.kappa == 0).count() as f64;
    let n = replicas as f64;
    let pk = zero / n;
    let mid = steps / 2;
    // disjoint halves keep the two samples independent
    let post: Vec<&Walk> = walks.iter().step_by(2).collect();
    let cond: Vec<&Walk> = walks.iter().skip(1).step_by(2).filter(|w| w.kappa == 0).collect();
    let at = |ws: &[&Walk], i: usize| ws.iter().map(|w| w.after[i] as f64).collect::<Vec<_>>();
    Ok(DemoReport {
        p_left,
        q_right,
        steps,
        replicas,
        p_kappa_zero: pk,
        p_kappa_zero_se: (pk * (1.0 - pk) / n).sqrt().max(1.0 / n),
        p_kappa_zero_exact: 1.0 - p_left / q_right,
        mean_kappa: walks.iter().map(|w| w.kappa as f64).sum::<f64>() / n,
        ks_end: ks_two_sample(&at(&post, steps), &at(&cond, steps)),
        ks_mid: ks_two_sample(&at(&post, mid), &at(&cond, mid)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `P[kappa = 0]` by summing over all paths of length `n` that stay at or
    /// above zero, with the future after `n` weighted by the escape probability.
    fn brute_kappa_zero(p: f64, n: usize) -> f64 {
        let q = 1.0 - p;
        let escape = |h: i64| 1.0 - (p / q).powi(h as i32 + 1);
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let mut x = 0i64;
            let mut w = 1.0;
            let mut ok = true;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    x += 1;
                    w *= q;
                } else {
                    x -= 1;
                    w *= p;
                }
                if x < 0 {
                    ok = false;
                    break;
                }
            }
            if ok {
                total += w * escape(x);
            }
        }
        total
    }

    #[test]
    fn gambler_ruin_matches_brute_force() {
        let b = brute_kappa_zero(1.0 / 3.0, 16);
        assert!((b - 0.5).abs() < 1e-9, "{b}");
    }

    #[test]
    fn deterministic_walk_regenerates_at_once() {
        let r = rw_regeneration_demo(0.0, 1.0, 10, 50, 1).unwrap();
        assert_eq!(r.p_kappa_zero, 1.0);
        assert_eq!(r.ks_end.statistic, 0.0);
        assert!(r.laws_agree());
    }

    #[test]
    fn kappa_zero_frequency() {
        let r = rw_regeneration_demo(1.0 / 3.0, 2.0 / 3.0, 20, 4000, 3).unwrap();
        assert!(r.kappa_zero_within(4.0), "{r:?}");
        assert!(rw_regeneration_demo(0.5, 0.5, 20, 100, 1).is_err());
    }

    #[test]
    fn post_kappa_path_never_drops_below_start() {
        for s in 0..200 {
            let w = one_walk(0.4, 30, s);
            assert!(w.after.iter().all(|&x| x >= 0));
        }
    }
}
