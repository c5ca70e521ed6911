//! Stopping-time detector on the labeled zero-range process.
//!
//! Attempt `p` opens when label `p` is born (attempt 0 at time zero). It is
//! spoiled by
//! * `V`: a particle older than `p` reaches a site strictly above the line
//!   `q0 + alpha1 (t - s)`;
//! * `U`: the watched front falls below `q0 + floor(alpha2 (t - s))`, or the
//!   origin clause fires.
//!
//! The chain then takes the first branch after each spoiled attempt; the first
//! attempt that is never spoiled is a regeneration time.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use crate::error::Result;
use crate::labeled::{LabeledEvent, LabeledState, LabeledZr};

use super::{cycles, Attempt, FrontRule, OriginClause, RegenMode, RegenParams, RegenRun, GRID_POINTS};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Growable min segment tree over attempt indices.
#[derive(Clone, Debug)]
struct MinTree {
    cap: usize,
    node: Vec<f64>,
}

impl MinTree {
    fn new() -> Self {
        Self { cap: 64, node: vec![f64::INFINITY; 128] }
    }

    fn set(&mut self, i: usize, v: f64) {
        if i >= self.cap {
            let mut cap = self.cap;
            while cap <= i {
                cap *= 2;
            }
            let mut grown = vec![f64::INFINITY; 2 * cap];
            grown[cap..cap + self.cap].copy_from_slice(&self.node[self.cap..]);
            for k in (1..cap).rev() {
                grown[k] = grown[2 * k].min(grown[2 * k + 1]);
            }
            self.cap = cap;
            self.node = grown;
        }
        let mut k = i + self.cap;
        self.node[k] = v;
        while k > 1 {
            k /= 2;
            self.node[k] = self.node[2 * k].min(self.node[2 * k + 1]);
        }
    }

    /// Indices in `[lo, hi)` whose value is below `thr`.
    fn below(&self, lo: usize, hi: usize, thr: f64, out: &mut Vec<usize>) {
        let hi = hi.min(self.cap);
        if lo < hi {
            self.descend(1, 0, self.cap, lo, hi, thr, out);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(&self, k: usize, a: usize, b: usize, lo: usize, hi: usize, thr: f64, out: &mut Vec<usize>) {
        if b <= lo || hi <= a || self.node[k] >= thr {
            return;
        }
        if b - a == 1 {
            out.push(a);
            return;
        }
        let m = (a + b) / 2;
        self.descend(2 * k, a, m, lo, hi, thr, out);
        self.descend(2 * k + 1, m, b, lo, hi, thr, out);
    }
}

struct Detector<'a> {
    params: &'a RegenParams,
    attempts: Vec<Attempt>,
    /// `s - q0 / alpha2` of attempts watching the fresh front.
    fresh: BinaryHeap<Reverse<Key>>,
    /// Deadlines of attempts still following their own particle.
    walk: BinaryHeap<Reverse<Key>>,
    walking: Vec<bool>,
    /// Current deadline per walking attempt; older heap entries are stale.
    walk_due: Vec<f64>,
    /// `q0 - alpha1 s` of attempts still exposed to `V`.
    old_line: MinTree,
    /// Attempts opened at the current front level (exposure clause).
    exposed: Vec<usize>,
    /// Site -> attempts, ascending (origin-site clauses).
    watch: HashMap<i64, Vec<usize>>,
    hits: Vec<usize>,
}

impl<'a> Detector<'a> {
    fn new(params: &'a RegenParams) -> Self {
        Self {
            params,
            attempts: Vec::new(),
            fresh: BinaryHeap::new(),
            walk: BinaryHeap::new(),
            walking: Vec::new(),
            walk_due: Vec::new(),
            old_line: MinTree::new(),
            exposed: Vec::new(),
            watch: HashMap::new(),
            hits: Vec::new(),
        }
    }

    fn open(&mut self, s: f64, p0: i64, q0: i64) {
        let a2 = self.params.alpha2;
        let i = self.attempts.len();
        debug_assert_eq!(i as i64, p0);
        self.attempts.push(Attempt { index: i, s, p0, q0, u: None, v: None });
        let o2 = s - q0 as f64 / a2;
        match self.params.front_rule {
            FrontRule::Fresh => {
                self.fresh.push(Reverse(Key(o2, i)));
                self.walking.push(false);
                self.walk_due.push(f64::INFINITY);
            }
            FrontRule::LeadingWalk => {
                let due = (q0 + 1) as f64 / a2 + o2;
                self.walk.push(Reverse(Key(due, i)));
                self.walking.push(true);
                self.walk_due.push(due);
            }
        }
        if i > 0 {
            self.old_line.set(i, q0 as f64 - self.params.alpha1 * s);
        }
        match self.params.origin {
            OriginClause::Exposure => self.exposed.push(i),
            OriginClause::AttemptOrigin => self.watch.entry(q0).or_default().push(i),
            OriginClause::AbsoluteOrigin => self.watch.entry(0).or_default().push(i),
            OriginClause::Off => {}
        }
    }

    fn spoil_u(&mut self, i: usize, t: f64) {
        let a = &mut self.attempts[i];
        if a.u.is_none() {
            a.u = Some(t);
        }
        self.walking[i] = false;
    }

    /// Fires every growth deadline that falls at or before `until`.
    fn deadlines(&mut self, q: i64, until: f64) {
        let a2 = self.params.alpha2;
        while let Some(&Reverse(Key(o2, i))) = self.fresh.peek() {
            let due = (q + 1) as f64 / a2 + o2;
            if due > until {
                break;
            }
            self.fresh.pop();
            self.spoil_u(i, due);
        }
        while let Some(&Reverse(Key(due, i))) = self.walk.peek() {
            if due > until {
                break;
            }
            self.walk.pop();
            if self.walking[i] && self.walk_due[i] == due {
                self.spoil_u(i, due);
            }
        }
    }

    fn on_ring(&mut self, zr: &LabeledZr, from: i64, event: LabeledEvent) {
        let t = zr.time();
        let a1 = self.params.alpha1;
        let a2 = self.params.alpha2;
        match event {
            LabeledEvent::Branch { label, at, .. } => {
                self.open(t, label, at);
                return;
            }
            LabeledEvent::Right { label, to } | LabeledEvent::FrontMove { label, to } => {
                self.hits.clear();
                let lo = (label + 1).max(1) as usize;
                self.old_line.below(lo, self.attempts.len(), to as f64 - a1 * t, &mut self.hits);
                for k in 0..self.hits.len() {
                    let i = self.hits[k];
                    self.old_line.set(i, f64::INFINITY);
                    self.attempts[i].v = Some(t);
                }
                if label >= 0 && (label as usize) < self.walking.len() && self.walking[label as usize] {
                    let i = label as usize;
                    let o2 = self.attempts[i].s - self.attempts[i].q0 as f64 / a2;
                    let due = (to + 1) as f64 / a2 + o2;
                    self.walk_due[i] = due;
                    self.walk.push(Reverse(Key(due, i)));
                }
                if matches!(event, LabeledEvent::FrontMove { .. }) {
                    self.exposed.clear();
                }
            }
            LabeledEvent::Left { label, .. } => {
                if label >= 0 && (label as usize) < self.walking.len() && self.walking[label as usize] {
                    let i = label as usize;
                    self.walking[i] = false;
                    if self.attempts[i].u.is_none() {
                        let o2 = self.attempts[i].s - self.attempts[i].q0 as f64 / a2;
                        self.fresh.push(Reverse(Key(o2, i)));
                    }
                }
                if from == zr.zfront() && !self.exposed.is_empty() {
                    let top = zr.top_label_at(from).unwrap_or(-1);
                    while let Some(&i) = self.exposed.last() {
                        if self.attempts[i].p0 <= top {
                            break;
                        }
                        self.exposed.pop();
                        if self.attempts[i].u.is_none() {
                            self.spoil_u(i, t);
                        }
                    }
                }
            }
        }
        if let Some(list) = self.watch.get_mut(&from) {
            let top = zr.top_label_at(from).unwrap_or(-1);
            let mut fired = Vec::new();
            while let Some(&i) = list.last() {
                if self.attempts[i].p0 <= top {
                    break;
                }
                list.pop();
                fired.push(i);
            }
            for i in fired {
                self.spoil_u(i, t);
            }
        }
    }
}

struct Finished<'a> {
    det: Detector<'a>,
    zr: LabeledZr,
    grid: Vec<(f64, i64, i64)>,
}

fn drive<'a>(
    params: &'a RegenParams,
    seed: u64,
    mut observe: Option<&mut dyn FnMut(f64, f64, &LabeledZr)>,
    stop: &dyn Fn(&[Attempt]) -> bool,
) -> Result<Finished<'a>> {
    params.validate()?;
    let h = params.horizon;
    let mut zr = LabeledZr::new(&LabeledState::single(), params.rho, seed, params.depth)?;
    let mut det = Detector::new(params);
    det.open(0.0, 0, 0);

    let mut grid = Vec::with_capacity(GRID_POINTS + 1);
    let mut next_grid = 0usize;
    loop {
        let t0 = zr.time();
        let next = zr.peek_time().min(h);
        det.deadlines(zr.zfront(), next);
        if stop(&det.attempts) {
            break;
        }
        while next_grid <= GRID_POINTS {
            let tg = h * next_grid as f64 / GRID_POINTS as f64;
            if tg >= next && next < h {
                break;
            }
            grid.push((tg, zr.zfront() + zr.counter(), zr.counter()));
            next_grid += 1;
        }
        if let Some(obs) = observe.as_deref_mut() {
            if next > t0 {
                obs(t0, next, &zr);
            }
        }
        let Some(ring) = zr.ring_until(h) else { break };
        det.on_ring(&zr, ring.from, ring.event);
    }
    Ok(Finished { det, zr, grid })
}

/// Runs the detector, calling `observe(t0, t1, engine)` for every holding
/// interval `[t0, t1)` of the process up to the horizon.
pub fn detect_kappa_zr_with(
    params: &RegenParams,
    seed: u64,
    replica: u64,
    observe: Option<&mut dyn FnMut(f64, f64, &LabeledZr)>,
) -> Result<RegenRun> {
    let h = params.horizon;
    let Finished { det, zr, grid } = drive(params, seed, observe, &|_| false)?;
    let attempts = det.attempts;
    let kappas = chain(params, &attempts);
    let end = (zr.zfront() + zr.counter(), zr.counter());
    Ok(RegenRun {
        replica,
        mode: RegenMode::ZrStoppingTimes,
        horizon: h,
        records: cycles(replica, h, &kappas, end),
        attempts,
        grid,
        final_r: end.0,
        final_p: end.1,
    })
}

/// Fate of the time-zero attempt and of the first branch attempt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstCycle {
    pub u0_never: bool,
    /// First branch time, if any branch happened.
    pub s1: Option<f64>,
    pub r1: i64,
    pub d1_never: bool,
}

impl FirstCycle {
    /// `kappa_1 = S_1 > min_s1` with `U` never triggered (counter is then 1 at `kappa_1`).
    pub fn first_is_regeneration(&self, min_s1: f64, limit: f64) -> bool {
        self.u0_never && self.d1_never && self.s1.is_some_and(|s| s > min_s1 && s <= limit)
    }
}

/// Runs only as long as the first regeneration can still be `S_1` with
/// `S_1 > min_s1` and `U` untriggered.
pub fn first_cycle(params: &RegenParams, seed: u64, min_s1: f64) -> Result<FirstCycle> {
    let stop = |a: &[Attempt]| {
        a[0].u.is_some() || a.get(1).is_some_and(|b| b.s <= min_s1 || b.d().is_some())
    };
    let Finished { det, .. } = drive(params, seed, None, &stop)?;
    let a = &det.attempts;
    Ok(FirstCycle {
        u0_never: a[0].u.is_none(),
        s1: a.get(1).map(|b| b.s),
        r1: a.get(1).map_or(0, |b| b.r0()),
        d1_never: a.get(1).is_some_and(|b| b.d().is_none()),
    })
}

pub fn detect_kappa_zr(params: &RegenParams, seed: u64, replica: u64) -> Result<RegenRun> {
    detect_kappa_zr_with(params, seed, replica, None)
}

/// Walks the spoiled-attempt chain. Returns `(kappa, r, p, steps)` for every
/// confirmed regeneration time.
pub(crate) fn chain(params: &RegenParams, attempts: &[Attempt]) -> Vec<(f64, i64, i64, usize)> {
    let limit = params.confirm_limit();
    let mut out = Vec::new();
    let mut base = 0.0;
    let mut steps = 0usize;
    loop {
        // attempts are sorted by opening time; attempt 0 is never part of the chain
        let from = attempts.partition_point(|a| a.s <= base).max(1);
        let Some(a) = attempts.get(from) else { break };
        if a.s > limit {
            break;
        }
        steps += 1;
        match a.d() {
            Some(d) => base = d,
            None => {
                out.push((a.s, a.r0(), a.p0, steps));
                steps = 0;
                base = a.s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attempt(i: usize, s: f64, u: Option<f64>, v: Option<f64>) -> Attempt {
        Attempt { index: i, s, p0: i as i64, q0: i as i64, u, v }
    }

    #[test]
    fn min_tree_finds_all_below() {
        let mut t = MinTree::new();
        for i in 0..200 {
            t.set(i, (i % 7) as f64);
        }
        let mut out = Vec::new();
        t.below(10, 150, 1.0, &mut out);
        let want: Vec<usize> = (10..150).filter(|i| i % 7 == 0).collect();
        assert_eq!(out, want);
    }

    #[test]
    fn chain_skips_past_spoiled_attempts() {
        let p = RegenParams::new(0.5, 0.04, 0.1, 100.0).unwrap();
        let a = vec![
            attempt(0, 0.0, None, None),
            attempt(1, 1.0, Some(5.0), None),
            attempt(2, 3.0, None, None),
            attempt(3, 6.0, None, Some(9.0)),
            attempt(4, 10.0, None, None),
            attempt(5, 12.0, None, None),
            attempt(6, 90.0, None, None),
        ];
        let k = chain(&p, &a);
        // 1 spoiled at 5 -> next after 5 is 3, spoiled at 9 -> 4 confirmed; then 5; 6 is past the guard
        assert_eq!(k, vec![(10.0, 8, 4, 3), (12.0, 10, 5, 1)]);
    }

    #[test]
    fn detector_is_reproducible_and_consistent() {
        let p = RegenParams::new(0.5, 0.045, 0.12, 400.0).unwrap();
        let a = detect_kappa_zr(&p, 11, 0).unwrap();
        let b = detect_kappa_zr(&p, 11, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grid.len(), GRID_POINTS + 1);
        assert_eq!(a.attempts.len() as i64, a.final_p + 1);
        assert!(a.attempts[0].v.is_none());
        for at in &a.attempts {
            if let Some(u) = at.u {
                assert!(u > at.s);
            }
            if let Some(v) = at.v {
                assert!(v > at.s);
            }
        }
        let total: f64 = a.records.iter().map(|r| r.kappa).sum();
        assert!((total - 400.0).abs() < 1e-9);
    }
}
