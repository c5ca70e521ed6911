//! Regeneration times.
//!
//! Two detectors share one output format. The stopping-time detector runs on
//! the labeled zero-range process and opens an attempt at every branch (plus
//! one at time zero). The hole detector runs a labeled stirring version of the
//! exclusion process and opens an attempt at every branch as well. An attempt
//! that is never triggered before the horizon stands for `D = infinity`.

pub mod alt;
pub mod demo;
pub mod tails;
pub mod zr;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeled::DEFAULT_DEPTH;
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenMode {
    #[default]
    ZrStoppingTimes,
    AltHoles,
}

impl FromStr for RegenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zr_stopping_times" | "zr" => Ok(RegenMode::ZrStoppingTimes),
            "alt_holes" | "alt" => Ok(RegenMode::AltHoles),
            _ => Err(Error::Config(format!("unknown mode `{s}` (zr_stopping_times | alt_holes)"))),
        }
    }
}

impl fmt::Display for RegenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegenMode::ZrStoppingTimes => "zr_stopping_times",
            RegenMode::AltHoles => "alt_holes",
        })
    }
}

/// Reading of the clause "no fresh particle at the origin" inside `U`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginClause {
    /// Triggers while the front still sits at the attempt's site and holds no fresh particle.
    #[default]
    Exposure,
    /// Triggers whenever the attempt's site holds no fresh particle.
    AttemptOrigin,
    /// Triggers whenever absolute site 0 holds no fresh particle.
    AbsoluteOrigin,
    Off,
}

impl FromStr for OriginClause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exposure" => Ok(OriginClause::Exposure),
            "attempt_origin" => Ok(OriginClause::AttemptOrigin),
            "absolute_origin" => Ok(OriginClause::AbsoluteOrigin),
            "off" => Ok(OriginClause::Off),
            _ => Err(Error::Config(format!(
                "unknown origin clause `{s}` (exposure | attempt_origin | absolute_origin | off)"
            ))),
        }
    }
}

/// Which front the growth clause of `U` watches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontRule {
    /// The front of the fresh process.
    #[default]
    Fresh,
    /// The attempt's own particle until its first step back, then the fresh front.
    LeadingWalk,
}

impl FromStr for FrontRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(FrontRule::Fresh),
            "leading_walk" => Ok(FrontRule::LeadingWalk),
            _ => Err(Error::Config(format!("unknown front rule `{s}` (fresh | leading_walk)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenParams {
    pub rho: f64,
    /// Slope of the line old mass must stay below.
    pub alpha1: f64,
    /// Slope the fresh front must keep up with.
    pub alpha2: f64,
    pub horizon: f64,
    /// Attempts opened after `horizon - guard` are never confirmed.
    pub guard: f64,
    pub mode: RegenMode,
    pub origin: OriginClause,
    pub front_rule: FrontRule,
    /// Tracked depth of the zero-range engine.
    pub depth: usize,
    /// Window of the hole detector's exclusion engine.
    pub window: usize,
}

/// Fraction of the horizon reserved for confirmation.
pub const DEFAULT_GUARD_FRACTION: f64 = 0.2;

impl RegenParams {
    pub fn new(rho: f64, alpha1: f64, alpha2: f64, horizon: f64) -> Result<Self> {
        let p = Self {
            rho,
            alpha1,
            alpha2,
            horizon,
            guard: DEFAULT_GUARD_FRACTION * horizon,
            mode: RegenMode::default(),
            origin: OriginClause::default(),
            front_rule: FrontRule::default(),
            depth: DEFAULT_DEPTH,
            window: alt::DEFAULT_WINDOW,
        };
        p.validate()?;
        Ok(p)
    }

    /// `alpha1 = 0.3 alpha_hat`, `alpha2 = 0.8 alpha_hat`.
    pub fn from_alpha_hat(rho: f64, alpha_hat: f64, horizon: f64) -> Result<Self> {
        let p = Self::new(rho, 0.3 * alpha_hat, 0.8 * alpha_hat, horizon)?;
        p.check_against(alpha_hat)?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("regeneration needs 0 < rho < 1, got {}", self.rho)));
        }
        if !(0.0 < 2.0 * self.alpha1 && 2.0 * self.alpha1 < self.alpha2) {
            return Err(Error::Config(format!(
                "need 0 < 2*alpha1 < alpha2, got alpha1 = {}, alpha2 = {}",
                self.alpha1, self.alpha2
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("horizon must be positive and finite".into()));
        }
        if !(self.guard >= 0.0 && self.guard < self.horizon) {
            return Err(Error::Config(format!("need 0 <= guard < horizon, got guard = {}", self.guard)));
        }
        if self.depth == 0 || self.window < 2 {
            return Err(Error::Config("depth and window must be positive".into()));
        }
        Ok(())
    }

    /// The growth slope must stay below the auxiliary speed.
    pub fn check_against(&self, alpha_hat: f64) -> Result<()> {
        if self.alpha2 < alpha_hat {
            Ok(())
        } else {
            Err(Error::Config(format!("need alpha2 < alpha_hat, got {} >= {alpha_hat}", self.alpha2)))
        }
    }

    pub fn confirm_limit(&self) -> f64 {
        self.horizon - self.guard
    }
}

/// One regeneration attempt and when (if ever) it was spoiled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub index: usize,
    pub s: f64,
    pub p0: i64,
    pub q0: i64,
    /// Absolute trigger time of `U` (or of `D_n` in hole mode).
    pub u: Option<f64>,
    /// Absolute trigger time of `V`; always `None` in hole mode.
    pub v: Option<f64>,
}

impl Attempt {
    pub fn d(&self) -> Option<f64> {
        match (self.u, self.v) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn r0(&self) -> i64 {
        self.q0 + self.p0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenRecord {
    pub replica: u64,
    pub cycle: usize,
    /// Cycle length.
    pub kappa: f64,
    pub dr: i64,
    pub dp: i64,
    pub dq: i64,
    pub confirmed: bool,
    /// The cycle starting at time zero, whose law differs from the others.
    pub initial: bool,
    /// Number of chain steps (zero-range mode) or the branch index (hole mode).
    pub attempt: usize,
    pub start: f64,
}

/// Everything one replica produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenRun {
    pub replica: u64,
    pub mode: RegenMode,
    pub horizon: f64,
    pub attempts: Vec<Attempt>,
    pub records: Vec<RegenRecord>,
    /// `(t, r_t, p_t)` on a uniform grid of the horizon.
    pub grid: Vec<(f64, i64, i64)>,
    pub final_r: i64,
    pub final_p: i64,
}

impl RegenRun {
    pub fn confirmed(&self) -> impl Iterator<Item = &RegenRecord> {
        self.records.iter().filter(|r| r.confirmed)
    }

    pub fn regeneration_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in self.confirmed() {
            out.push(r.start + r.kappa);
        }
        out
    }
}

/// Points of the uniform grid on `[0, horizon]`.
pub const GRID_POINTS: usize = 1000;

/// Turns regeneration times into cycle records, closing with a censored one.
pub(crate) fn cycles(
    replica: u64,
    horizon: f64,
    kappas: &[(f64, i64, i64, usize)],
    end: (i64, i64),
) -> Vec<RegenRecord> {
    let mut out = Vec::with_capacity(kappas.len() + 1);
    let (mut t0, mut r0, mut p0) = (0.0, 0i64, 0i64);
    for (i, &(k, r, p, attempt)) in kappas.iter().enumerate() {
        out.push(RegenRecord {
            replica,
            cycle: i,
            kappa: k - t0,
            dr: r - r0,
            dp: p - p0,
            dq: (r - p) - (r0 - p0),
            confirmed: true,
            initial: i == 0,
            attempt,
            start: t0,
        });
        (t0, r0, p0) = (k, r, p);
    }
    let (r, p) = end;
    out.push(RegenRecord {
        replica,
        cycle: kappas.len(),
        kappa: horizon - t0,
        dr: r - r0,
        dp: p - p0,
        dq: (r - p) - (r0 - p0),
        confirmed: false,
        initial: kappas.is_empty(),
        attempt: 0,
        start: t0,
    });
    out
}

/// Runs one replica of the configured detector from the single-particle start.
pub fn regen_run(params: &RegenParams, seed: u64, replica: u64) -> Result<RegenRun> {
    params.validate()?;
    match params.mode {
        RegenMode::ZrStoppingTimes => zr::detect_kappa_zr(params, seed, replica),
        RegenMode::AltHoles => alt::detect_kappa_alt(params, seed, replica),
    }
}

/// Replicas on independent streams derived from the master seed.
pub fn regen_replicas(params: &RegenParams, replicas: usize, seed: u64) -> Result<Vec<RegenRun>> {
    (0..replicas as u64).into_par_iter().map(|i| regen_run(params, rng::replica_seed(seed, i), i)).collect()
}

/// Confirmed, non-initial records: the ones with the stationary cycle law.
pub fn iid_records(runs: &[RegenRun]) -> Vec<RegenRecord> {
    runs.iter().flat_map(|r| r.records.iter().filter(|c| c.confirmed && !c.initial).cloned()).collect()
}

/// Fraction of records that are censored.
pub fn censoring_fraction(runs: &[RegenRun]) -> f64 {
    let total: usize = runs.iter().map(|r| r.records.len()).sum();
    let censored: usize = runs.iter().map(|r| r.records.iter().filter(|c| !c.confirmed).count()).sum();
    if total == 0 {
        0.0
    } else {
        censored as f64 / total as f64
    }
}

pub fn write_records_csv<W: std::io::Write>(records: &[RegenRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replica", "cycle", "kappa", "dr", "dp", "dq", "confirmed", "initial", "attempt", "start"])?;
    for r in records {
        out.write_record([
            r.replica.to_string(),
            r.cycle.to_string(),
            r.kappa.to_string(),
            r.dr.to_string(),
            r.dp.to_string(),
            r.dq.to_string(),
            r.confirmed.to_string(),
            r.initial.to_string(),
            r.attempt.to_string(),
            r.start.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_ordering_enforced() {
        assert!(RegenParams::new(0.5, 0.5, 0.6, 100.0).is_err());
        assert!(RegenParams::new(0.5, 0.0, 0.6, 100.0).is_err());
        assert!(RegenParams::new(0.5, 0.04, 0.1, 100.0).is_ok());
        let p = RegenParams::from_alpha_hat(0.5, 0.15, 100.0).unwrap();
        assert!(2.0 * p.alpha1 < p.alpha2 && p.alpha2 < 0.15);
        assert!(p.check_against(0.1).is_err());
        let mut g = p.clone();
        g.guard = 100.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn cycle_bookkeeping() {
        let recs = cycles(3, 50.0, &[(2.0, 3, 1, 1), (4.0, 5, 2, 2)], (9, 4));
        assert_eq!(recs.len(), 3);
        assert!(recs[0].initial && !recs[1].initial);
        assert_eq!((recs[1].kappa, recs[1].dr, recs[1].dp, recs[1].dq), (2.0, 2, 1, 1));
        assert!(!recs[2].confirmed);
        assert_eq!(recs[2].kappa, 46.0);
        for r in &recs {
            assert_eq!(r.dr, r.dp + r.dq);
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [RegenMode::ZrStoppingTimes, RegenMode::AltHoles] {
            assert_eq!(m.to_string().parse::<RegenMode>().unwrap(), m);
        }
        assert!("x".parse::<RegenMode>().is_err());
    }
}
