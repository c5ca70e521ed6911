//! Positivity probe for the first regeneration.
//!
//! The event is `{kappa_1 = S_1 > 1/beta}` with the time-zero attempt never
//! seeing `U`, i.e. the counter equals 1 at `kappa_1`. Runs stop as soon as
//! the event is ruled out, so one run costs little on average.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regen::zr::first_cycle;
use crate::regen::{RegenMode, RegenParams};
use crate::rng;

use super::basic::{wilson, Interval};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub beta: f64,
    pub runs: usize,
    /// Runs with `p = 1` at `kappa_1 > 1/beta` and `U` never triggered.
    pub hits: usize,
    pub joint: f64,
    pub joint_ci: Interval,
    /// Same event with `r = 1` at `kappa_1` in place of `p = 1`.
    pub r_hits: usize,
    /// Runs where the two classifications differ.
    pub disagreements: usize,
    /// Joint probability divided by `P[U = inf]`.
    pub conditional: f64,
    pub conditional_ci: Interval,
}

impl NondegeneracyReport {
    pub fn positive(&self) -> bool {
        self.joint_ci.lo > 0.0 && self.conditional_ci.lo > 0.0
    }
}

/// `delta1` is an estimate of `P[U = inf]` with its interval, for the conditional
/// probability; the conditional interval divides the joint interval by it.
pub fn nondegeneracy_probe(
    params: &RegenParams,
    beta: f64,
    alpha_hat: f64,
    v2_hat: f64,
    delta1: (f64, Interval),
    replicas: usize,
    seed: u64,
) -> Result<NondegeneracyReport> {
    if !(alpha_hat < beta && beta < v2_hat) {
        return Err(Error::Config(format!("need alpha_hat < beta < v2_hat, got {alpha_hat} < {beta} < {v2_hat}")));
    }
    if params.mode != RegenMode::ZrStoppingTimes {
        return Err(Error::Config("the probe runs on the zero-range detector".into()));
    }
    if !(delta1.0 > 0.0 && delta1.1.lo > 0.0) {
        return Err(Error::Config("P[U = inf] estimate must be positive".into()));
    }
    let min_s1 = 1.0 / beta;
    let limit = params.confirm_limit();
    let out: Vec<(bool, bool)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let f = first_cycle(params, rng::replica_seed(seed, i), min_s1)?;
            let p_hit = f.first_is_regeneration(min_s1, limit);
            Ok((p_hit, p_hit && f.r1 == 1))
        })
        .collect::<Result<_>>()?;
    let hits = out.iter().filter(|x| x.0).count();
    let r_hits = out.iter().filter(|x| x.1).count();
    let ci = wilson(hits as u64, replicas as u64, 1.96);
    let joint = hits as f64 / replicas as f64;
    Ok(NondegeneracyReport {
        beta,
        runs: replicas,
        hits,
        joint,
        joint_ci: ci,
        r_hits,
        disagreements: out.iter().filter(|x| x.0 != x.1).count(),
        conditional: (joint / delta1.0).min(1.0),
        conditional_ci: Interval { lo: ci.lo / delta1.1.hi, hi: (ci.hi / delta1.1.lo).min(1.0) },
    })
}
