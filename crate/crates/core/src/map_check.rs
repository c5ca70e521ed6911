//! Exact checks of the zero-range recoding and of the degenerate branching rates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{simulate, BoundaryPolicy, FrontState, RecorderSpec, SimConfig};
use crate::rng;
use crate::zero_range::{commutes, to_exclusion_in, to_zero_range, ZeroRangeState};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub trials: u64,
    pub failures: u64,
    /// Trials where one side is undefined (no empty site in the window).
    pub skipped: u64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Exclusion -> zero-range -> exclusion agrees on the tracked region and the front pair.
pub fn round_trip(state: &FrontState) -> Result<Option<bool>> {
    let z = match to_zero_range(state) {
        Ok(z) => z,
        Err(Error::NoEmptySite) => return Ok(None),
        Err(e) => return Err(e),
    };
    let back = to_exclusion_in(&z, state.front(), state.counter(), state.window(), state.policy())?;
    let deepest = state.front() - z.stacks.iter().map(|&h| h as i64 + 1).sum::<i64>() + 1;
    let same = back.front() == state.front()
        && back.counter() == state.counter()
        && (deepest..=state.front()).all(|x| back.get(x) == state.get(x));
    Ok(Some(same))
}

/// Zero-range -> exclusion -> zero-range is the identity.
pub fn round_trip_zr(z: &ZeroRangeState, front: i64, window: usize) -> Result<bool> {
    let s = to_exclusion_in(z, front, front - z.zfront, window, BoundaryPolicy::Frozen)?;
    Ok(to_zero_range(&s)? == *z)
}

fn random_state<R: Rng>(r: &mut R, max_window: usize) -> FrontState {
    let window = r.random_range(1..=max_window);
    let density: f64 = r.random();
    let word: Vec<u8> = (0..=window).map(|_| u8::from(r.random::<f64>() < density)).collect();
    let front = r.random_range(-50..50);
    let counter = r.random_range(0..50);
    FrontState::from_word_at(front, counter, &word, window, BoundaryPolicy::Frozen)
}

fn random_zr<R: Rng>(r: &mut R, max_window: usize) -> (ZeroRangeState, i64, usize) {
    let depth = r.random_range(2..=(max_window / 2).max(2));
    let stacks: Vec<u32> = (0..depth).map(|_| r.random_range(0..4)).collect();
    // smallest window holding the tracked word; a larger one would track extra empty sites
    let window = stacks.iter().map(|&h| h as usize + 1).sum::<usize>() - 1;
    let front = r.random_range(-50..50);
    let counter = r.random_range(0..50);
    (ZeroRangeState { zfront: front - counter, counter, stacks }, front, window)
}

/// Round trips in both directions over `trials` random configurations each.
pub fn bijection_check(trials: u64, max_window: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let chunk = 1000u64;
    let blocks = trials.div_ceil(chunk);
    let parts: Vec<(u64, u64, u64, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b);
            let n = chunk.min(trials - b * chunk);
            let (mut f1, mut s1, mut f2) = (0, 0, 0);
            for _ in 0..n {
                match round_trip(&random_state(&mut r, max_window))? {
                    Some(true) => {}
                    Some(false) => f1 += 1,
                    None => s1 += 1,
                }
                let (z, front, window) = random_zr(&mut r, max_window);
                if !round_trip_zr(&z, front, window)? {
                    f2 += 1;
                }
            }
            Ok((n, f1, s1, f2))
        })
        .collect::<Result<_>>()?;
    let sum = |f: fn(&(u64, u64, u64, u64)) -> u64| parts.iter().map(f).sum::<u64>();
    Ok(vec![
        CheckRow { check: "exclusion_round_trip".into(), trials: sum(|p| p.0), failures: sum(|p| p.1), skipped: sum(|p| p.2) },
        CheckRow { check: "zero_range_round_trip".into(), trials: sum(|p| p.0), failures: sum(|p| p.3), skipped: 0 },
    ])
}

/// The translated event applied to the image equals the image of the new state,
/// for every event along `trajectories` runs of `events` events.
pub fn commutation_check(trajectories: u64, events: u64, window: usize, rho: f64, seed: u64) -> Result<CheckRow> {
    let parts: Vec<(u64, u64, u64)> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng::replica_seed(seed, i), 0);
            let mut state = FrontState::from_word(&[1], window, BoundaryPolicy::Frozen);
            let (mut n, mut fail, mut skip) = (0, 0, 0);
            while n < events {
                let Some(ev) = state.sample_event(rho, &mut r) else { break };
                match commutes(&state, ev)? {
                    Some(true) => {}
                    Some(false) => fail += 1,
                    None => skip += 1,
                }
                state.apply(ev)?;
                n += 1;
            }
            Ok((n, fail, skip))
        })
        .collect::<Result<_>>()?;
    Ok(CheckRow {
        check: "commutation".into(),
        trials: parts.iter().map(|p| p.0).sum(),
        failures: parts.iter().map(|p| p.1).sum(),
        skipped: parts.iter().map(|p| p.2).sum(),
    })
}

/// `rho = 1`: `p = r` (so `q = 0`) at every event; `rho = 0`: `p = 0` at every event.
pub fn degenerate_check(rho: f64, window: usize, horizon: f64, replicas: u64, seed: u64) -> Result<CheckRow> {
    if rho != 0.0 && rho != 1.0 {
        return Err(Error::Config(format!("degenerate check needs rho = 0 or 1, got {rho}")));
    }
    let parts: Vec<(u64, u64)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                rho,
                window,
                horizon,
                seed: rng::replica_seed(seed, i),
                degenerate: true,
                ..Default::default()
            };
            let rec = RecorderSpec { every_event: true, ..RecorderSpec::front_only() };
            let traj = simulate(&cfg, &rec)?;
            let bad = traj
                .records
                .iter()
                .filter(|e| if rho == 1.0 { e.p != e.r } else { e.p != 0 })
                .count() as u64;
            Ok((traj.records.len() as u64, bad))
        })
        .collect::<Result<_>>()?;
    Ok(CheckRow {
        check: format!("degenerate_rho_{rho}"),
        trials: parts.iter().map(|p| p.0).sum(),
        failures: parts.iter().map(|p| p.1).sum(),
        skipped: 0,
    })
}

pub fn write_checks_csv<W: std::io::Write>(rows: &[CheckRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["check", "trials", "failures", "skipped"])?;
    for r in rows {
        out.write_record([r.check.clone(), r.trials.to_string(), r.failures.to_string(), r.skipped.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batches_pass() {
        for row in bijection_check(2000, 24, 1).unwrap() {
            assert!(row.passed(), "{row:?}");
        }
        let c = commutation_check(4, 300, 16, 0.5, 2).unwrap();
        assert!(c.passed() && c.trials == 1200, "{c:?}");
    }

    #[test]
    fn degenerate_rates() {
        assert!(degenerate_check(1.0, 32, 50.0, 3, 1).unwrap().passed());
        assert!(degenerate_check(0.0, 32, 50.0, 3, 1).unwrap().passed());
        assert!(degenerate_check(0.5, 32, 50.0, 3, 1).is_err());
    }

    #[test]
    fn a_broken_image_is_caught() {
        let s = FrontState::from_word(&[0, 1, 1, 0, 1], 6, BoundaryPolicy::Frozen);
        assert_eq!(round_trip(&s).unwrap(), Some(true));
        let full = FrontState::from_word(&[1, 1, 1], 2, BoundaryPolicy::Frozen);
        assert_eq!(round_trip(&full).unwrap(), None);
    }
}
