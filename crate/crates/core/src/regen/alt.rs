//! Hole-labeled regeneration on the exclusion process.
//!
//! Holes are filled in as second-class particles: every bond ring exchanges
//! the contents of its two sites, whatever they are, and only a true particle
//! at the front can advance it. The particle born at the `n`-th branch carries
//! label `n`; holes left behind by the front take the label of the latest
//! branch. `D_n` is the first time after the `n`-th branch that the front
//! holds something with a label below `n`, and the regeneration times are the
//! branch times whose `D_n` never comes.
//!
//! Only the `window + 1` sites below the front are tracked. The content that
//! last left the window is kept frozen just outside and still exchanges with
//! the edge site.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::{cycles, Attempt, RegenMode, RegenParams, RegenRun, GRID_POINTS};

pub const DEFAULT_WINDOW: usize = 256;

/// Stream id of the hole engine's clock.
const HOLE_STREAM: u64 = rng::AUX_STREAM_BASE + 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Content {
    Particle(i64),
    Hole(i64),
}

impl Content {
    pub fn label(self) -> i64 {
        match self {
            Content::Particle(l) | Content::Hole(l) => l,
        }
    }

    pub fn is_particle(self) -> bool {
        matches!(self, Content::Particle(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoleLabeledState {
    /// `contents[k]` sits at `front - k`.
    pub contents: VecDeque<Content>,
    /// Content just outside the window.
    pub outside: Content,
    pub front: i64,
    /// Number of branches so far.
    pub counter: i64,
    /// Label given to new holes.
    pub epoch: i64,
}

impl HoleLabeledState {
    /// A particle at the origin with label-0 holes behind it.
    pub fn single(window: usize) -> Self {
        let mut contents = VecDeque::from(vec![Content::Hole(0); window + 1]);
        contents[0] = Content::Particle(0);
        Self { contents, outside: Content::Hole(0), front: 0, counter: 0, epoch: 0 }
    }

    pub fn window(&self) -> usize {
        self.contents.len() - 1
    }

    pub fn get(&self, x: i64) -> Option<Content> {
        let k = self.front - x;
        if k < 0 {
            None
        } else {
            Some(self.contents.get(k as usize).copied().unwrap_or(self.outside))
        }
    }

    pub fn front_content(&self) -> Content {
        self.contents[0]
    }

    pub fn particles(&self) -> usize {
        self.contents.iter().filter(|c| c.is_particle()).count()
    }
}

/// A bond of the tracked window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bond {
    /// `(front, front + 1)`.
    Front,
    /// `(front - k - 1, front - k)`.
    Inner(usize),
    /// Edge site and the frozen site outside.
    Edge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HoleEvent {
    Swap(usize),
    Edge,
    Move,
    Branch { label: i64 },
    /// Front ring with a hole at the front.
    Idle,
}

#[derive(Clone, Debug)]
pub struct HoleLabeled {
    state: HoleLabeledState,
    rho: f64,
    time: f64,
    rng: ChaCha8Rng,
}

impl HoleLabeled {
    pub fn new(state: HoleLabeledState, rho: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("rho must lie in [0,1], got {rho}")));
        }
        if state.contents.len() < 2 || !state.front_content().is_particle() {
            return Err(Error::Config("hole engine needs a window of at least 1 and a particle at the front".into()));
        }
        Ok(Self { state, rho, time: 0.0, rng: rng::stream(seed, HOLE_STREAM) })
    }

    pub fn state(&self) -> &HoleLabeledState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn bonds(&self) -> usize {
        self.state.contents.len() + 1
    }

    /// Deterministic effect of a ring of `bond`; `branch` only matters at the front.
    pub fn apply(&mut self, bond: Bond, branch: bool) -> HoleEvent {
        let s = &mut self.state;
        match bond {
            Bond::Inner(k) => {
                s.contents.swap(k, k + 1);
                HoleEvent::Swap(k)
            }
            Bond::Edge => {
                let last = s.contents.len() - 1;
                std::mem::swap(&mut s.contents[last], &mut s.outside);
                HoleEvent::Edge
            }
            Bond::Front => {
                let Content::Particle(label) = s.contents[0] else {
                    return HoleEvent::Idle;
                };
                let ev = if branch {
                    s.counter += 1;
                    s.epoch = s.counter;
                    s.contents.push_front(Content::Particle(s.counter));
                    HoleEvent::Branch { label: s.counter }
                } else {
                    s.contents[0] = Content::Hole(s.epoch);
                    s.contents.push_front(Content::Particle(label));
                    HoleEvent::Move
                };
                s.front += 1;
                s.outside = s.contents.pop_back().expect("non-empty window");
                ev
            }
        }
    }

    /// Draws the next ring without applying it; `None` past `limit`.
    fn draw(&mut self, limit: f64) -> Option<(f64, Bond, bool)> {
        let n = self.bonds();
        let t = self.time + rng::exp(&mut self.rng, n as f64);
        if t > limit {
            // memoryless clock: redraw on the next call
            self.time = self.time.max(limit);
            return None;
        }
        let b = self.rng.random_range(0..n);
        let bond = match b {
            0 => Bond::Front,
            b if b == n - 1 => Bond::Edge,
            b => Bond::Inner(b - 1),
        };
        let branch = bond == Bond::Front && self.rng.random::<f64>() < self.rho;
        Some((t, bond, branch))
    }

    /// Performs the next ring if it happens no later than `limit`.
    pub fn step_until(&mut self, limit: f64) -> Option<HoleEvent> {
        let (t, bond, branch) = self.draw(limit)?;
        self.time = t;
        Some(self.apply(bond, branch))
    }
}

/// Tracks the live `D_n` clocks of one run.
#[derive(Clone, Debug, Default)]
struct HoleWatch {
    /// Branch labels whose `D` has not fired, ascending.
    live: Vec<i64>,
}

impl HoleWatch {
    fn check(&mut self, front_label: i64, t: f64, attempts: &mut [Attempt]) {
        while let Some(&m) = self.live.last() {
            if m <= front_label {
                break;
            }
            self.live.pop();
            attempts[(m - 1) as usize].u = Some(t);
        }
    }
}

pub fn detect_kappa_alt(params: &RegenParams, seed: u64, replica: u64) -> Result<RegenRun> {
    detect_kappa_alt_with(params, seed, replica, None)
}

/// Runs the detector, calling `observe(t0, t1, state)` for every holding
/// interval `[t0, t1)` up to the horizon.
pub fn detect_kappa_alt_with(
    params: &RegenParams,
    seed: u64,
    replica: u64,
    mut observe: Option<&mut dyn FnMut(f64, f64, &HoleLabeledState)>,
) -> Result<RegenRun> {
    params.validate()?;
    let h = params.horizon;
    let mut eng = HoleLabeled::new(HoleLabeledState::single(params.window), params.rho, seed)?;
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut watch = HoleWatch::default();
    let mut grid = Vec::with_capacity(GRID_POINTS + 1);
    let mut next_grid = 0usize;
    loop {
        let t0 = eng.time;
        let drawn = eng.draw(h);
        let t = drawn.map_or(h, |d| d.0);
        while next_grid <= GRID_POINTS {
            let tg = h * next_grid as f64 / GRID_POINTS as f64;
            if tg >= t && drawn.is_some() {
                break;
            }
            grid.push((tg, eng.state.front, eng.state.counter));
            next_grid += 1;
        }
        if let Some(obs) = observe.as_deref_mut() {
            if t > t0 {
                obs(t0, t, &eng.state);
            }
        }
        let Some((t, bond, branch)) = drawn else { break };
        eng.time = t;
        match eng.apply(bond, branch) {
            HoleEvent::Branch { label } => {
                let s = eng.state();
                attempts.push(Attempt { index: label as usize, s: t, p0: label, q0: s.front - label, u: None, v: None });
                watch.live.push(label);
            }
            HoleEvent::Swap(0) => watch.check(eng.state.front_content().label(), t, &mut attempts),
            _ => {}
        }
    }

    let limit = params.confirm_limit();
    let kappas: Vec<(f64, i64, i64, usize)> = attempts
        .iter()
        .filter(|a| a.u.is_none() && a.s <= limit)
        .map(|a| (a.s, a.r0(), a.p0, a.index))
        .collect();
    let s = eng.state();
    let end = (s.front, s.counter);
    Ok(RegenRun {
        replica,
        mode: RegenMode::AltHoles,
        horizon: h,
        records: cycles(replica, h, &kappas, end),
        attempts,
        grid,
        final_r: end.0,
        final_p: end.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_trace_of_first_spoil() {
        let mut e = HoleLabeled::new(HoleLabeledState::single(4), 0.5, 1).unwrap();
        assert_eq!(e.apply(Bond::Front, true), HoleEvent::Branch { label: 1 });
        let s = e.state();
        assert_eq!((s.front, s.counter), (1, 1));
        assert_eq!(s.get(0), Some(Content::Particle(0)));
        assert_eq!(s.get(-1), Some(Content::Hole(0)));
        // bring the old hole up to 0, then to the front
        e.apply(Bond::Inner(1), false);
        assert_eq!(e.state().get(0), Some(Content::Hole(0)));
        e.apply(Bond::Inner(0), false);
        assert_eq!(e.state().front_content(), Content::Hole(0));
        assert_eq!(e.apply(Bond::Front, true), HoleEvent::Idle);
    }

    #[test]
    fn moves_leave_holes_of_the_current_epoch() {
        let mut e = HoleLabeled::new(HoleLabeledState::single(4), 0.5, 1).unwrap();
        e.apply(Bond::Front, false);
        assert_eq!(e.state().get(0), Some(Content::Hole(0)));
        e.apply(Bond::Front, true);
        e.apply(Bond::Front, false);
        let s = e.state();
        assert_eq!(s.front, 3);
        assert_eq!(s.get(2), Some(Content::Hole(1)));
        assert_eq!(s.front_content(), Content::Particle(1));
        assert_eq!(s.particles(), 2);
        assert_eq!(s.contents.len(), 5);
    }

    #[test]
    fn no_branch_without_rho() {
        let mut e = HoleLabeled::new(HoleLabeledState::single(16), 0.0, 5).unwrap();
        while let Some(ev) = e.step_until(200.0) {
            assert!(!matches!(ev, HoleEvent::Branch { .. }));
        }
        assert_eq!(e.state().counter, 0);
    }

    #[test]
    fn confirmed_branches_keep_their_label_at_the_front() {
        let mut p = RegenParams::new(0.5, 0.045, 0.12, 300.0).unwrap();
        p.mode = RegenMode::AltHoles;
        p.window = 64;
        let run = detect_kappa_alt(&p, 9, 0).unwrap();
        for w in run.attempts.windows(2) {
            assert!(w[0].s < w[1].s);
        }
        assert_eq!(run.attempts.len() as i64, run.final_p);
        assert_eq!(run.grid.len(), GRID_POINTS + 1);
        let times = run.regeneration_times();
        for k in &times {
            assert!(run.attempts.iter().any(|a| a.s == *k && a.u.is_none()));
        }
    }
}
