//! Labeled zero-range process.
//!
//! Every particle carries an integer label. On each occupied site only the
//! particle with the largest label is active; it rings at rate 2 and jumps
//! to a fair random neighbour. At the front a right jump becomes a branch
//! (new particle with the next label at the front, counter + 1) with
//! probability `rho`, otherwise the particle moves the front one step.
//! Larger labels are therefore never influenced by smaller ones.
//!
//! Each label owns a random stream keyed by `(seed, label)`; its ring times,
//! directions and branching marks come only from that stream. Two engines
//! started from different sets of labels but the same seed therefore agree on
//! every label whose history is not affected by the difference.
//!
//! Sites more than `depth - 1` below the front are dropped together with
//! their particles.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::zero_range::ZeroRangeState;

pub const DEFAULT_DEPTH: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledState {
    /// label -> position
    pub particles: BTreeMap<i64, i64>,
    pub zfront: i64,
    /// Largest label; counts activations.
    pub counter: i64,
}

impl LabeledState {
    /// One particle with label 0 at the origin.
    pub fn single() -> Self {
        Self::single_at(0, 0)
    }

    pub fn single_at(label: i64, pos: i64) -> Self {
        Self { particles: BTreeMap::from([(label, pos)]), zfront: pos, counter: label }
    }

    pub fn validate(&self) -> Result<()> {
        let Some((&top, &top_pos)) = self.particles.iter().next_back() else {
            return Err(Error::Config("labeled state has no particles".into()));
        };
        if top != self.counter {
            return Err(Error::Config(format!("counter {} differs from the largest label {top}", self.counter)));
        }
        if let Some((l, y)) = self.particles.iter().find(|(_, &y)| y > self.zfront) {
            return Err(Error::Config(format!("label {l} at {y} lies ahead of the front {}", self.zfront)));
        }
        let _ = top_pos;
        Ok(())
    }

    /// Heights per site, front first, over `depth` sites.
    pub fn heights(&self, depth: usize) -> ZeroRangeState {
        let mut stacks = vec![0u32; depth];
        for &y in self.particles.values() {
            let k = (self.zfront - y) as usize;
            if k < depth {
                stacks[k] += 1;
            }
        }
        ZeroRangeState { zfront: self.zfront, counter: self.counter, stacks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabeledEvent {
    Left { label: i64, to: i64 },
    Right { label: i64, to: i64 },
    FrontMove { label: i64, to: i64 },
    Branch { parent: i64, label: i64, at: i64 },
}

impl LabeledEvent {
    /// Label that changed position (or was created) and its new site.
    pub fn moved(&self) -> (i64, i64) {
        match *self {
            LabeledEvent::Left { label, to }
            | LabeledEvent::Right { label, to }
            | LabeledEvent::FrontMove { label, to } => (label, to),
            LabeledEvent::Branch { label, at, .. } => (label, at),
        }
    }

    pub fn is_rightward(&self) -> bool {
        matches!(self, LabeledEvent::Right { .. } | LabeledEvent::FrontMove { .. })
    }
}

/// One ring with its raw direction and branching-mark draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    pub label: i64,
    pub from: i64,
    pub at_front: bool,
    pub right: bool,
    /// Uniform mark; a right ring at the front branches iff `mark < rho`.
    pub mark: f64,
    pub event: LabeledEvent,
}

#[derive(Clone, Debug)]
struct Particle {
    pos: i64,
    gen: u32,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Clock {
    time: f64,
    label: i64,
    gen: u32,
}

impl Eq for Clock {}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.label.cmp(&other.label)).then(self.gen.cmp(&other.gen))
    }
}

#[derive(Clone, Debug)]
pub struct LabeledZr {
    rho: f64,
    seed: u64,
    time: f64,
    q: i64,
    p: i64,
    /// `sites[k]` holds the labels at `q - k`, ascending; the last one is active.
    sites: VecDeque<Vec<i64>>,
    base: i64,
    particles: Vec<Option<Particle>>,
    clocks: BinaryHeap<Reverse<Clock>>,
    dropped: u64,
}

impl LabeledZr {
    pub fn new(initial: &LabeledState, rho: f64, seed: u64, depth: usize) -> Result<Self> {
        initial.validate()?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("rho must lie in [0,1], got {rho}")));
        }
        if depth == 0 {
            return Err(Error::Config("depth must be positive".into()));
        }
        let base = *initial.particles.keys().next().expect("validated non-empty");
        let mut e = LabeledZr {
            rho,
            seed,
            time: 0.0,
            q: initial.zfront,
            p: initial.counter,
            sites: VecDeque::from(vec![Vec::new(); depth]),
            base,
            particles: Vec::new(),
            clocks: BinaryHeap::new(),
            dropped: 0,
        };
        for (&label, &pos) in &initial.particles {
            let k = (e.q - pos) as usize;
            if k >= depth {
                return Err(Error::Config(format!("label {label} at {pos} lies below the tracked depth")));
            }
            e.insert_particle(label, pos);
            e.sites[k].push(label);
        }
        for k in 0..depth {
            if let Some(&top) = e.sites[k].last() {
                e.activate(top);
            }
        }
        Ok(e)
    }

    fn insert_particle(&mut self, label: i64, pos: i64) {
        let idx = (label - self.base) as usize;
        if self.particles.len() <= idx {
            self.particles.resize(idx + 1, None);
        }
        self.particles[idx] = Some(Particle { pos, gen: 0, rng: rng::label_stream(self.seed, label) });
    }

    fn particle_mut(&mut self, label: i64) -> &mut Particle {
        self.particles[(label - self.base) as usize].as_mut().expect("live label")
    }

    pub fn position(&self, label: i64) -> Option<i64> {
        let idx = label - self.base;
        if idx < 0 {
            return None;
        }
        self.particles.get(idx as usize).and_then(|p| p.as_ref()).map(|p| p.pos)
    }

    fn activate(&mut self, label: i64) {
        let now = self.time;
        let p = self.particle_mut(label);
        p.gen = p.gen.wrapping_add(1);
        let gen = p.gen;
        let t = now + rng::exp(&mut p.rng, 2.0);
        self.clocks.push(Reverse(Clock { time: t, label, gen }));
    }

    fn deactivate(&mut self, label: i64) {
        let p = self.particle_mut(label);
        p.gen = p.gen.wrapping_add(1);
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn zfront(&self) -> i64 {
        self.q
    }

    pub fn counter(&self) -> i64 {
        self.p
    }

    pub fn depth(&self) -> usize {
        self.sites.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Particles removed because they fell below the tracked depth.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Labels at site `x`, ascending.
    pub fn labels_at(&self, x: i64) -> &[i64] {
        let k = self.q - x;
        if k < 0 || k as usize >= self.sites.len() {
            &[]
        } else {
            &self.sites[k as usize]
        }
    }

    pub fn top_label_at(&self, x: i64) -> Option<i64> {
        self.labels_at(x).last().copied()
    }

    pub fn is_active(&self, label: i64) -> bool {
        self.position(label).is_some_and(|x| self.top_label_at(x) == Some(label))
    }

    pub fn state(&self) -> LabeledState {
        let mut particles = BTreeMap::new();
        for (k, site) in self.sites.iter().enumerate() {
            for &l in site {
                particles.insert(l, self.q - k as i64);
            }
        }
        LabeledState { particles, zfront: self.q, counter: self.p }
    }

    /// Height function over the tracked depth (labels forgotten).
    pub fn heights(&self) -> ZeroRangeState {
        ZeroRangeState {
            zfront: self.q,
            counter: self.p,
            stacks: self.sites.iter().map(|s| s.len() as u32).collect(),
        }
    }

    /// Height function of the labels `>= min_label`.
    pub fn heights_from(&self, min_label: i64) -> Vec<u32> {
        self.sites.iter().map(|s| s.iter().filter(|&&l| l >= min_label).count() as u32).collect()
    }

    fn discard_stale(&mut self) {
        while let Some(Reverse(c)) = self.clocks.peek() {
            let idx = c.label - self.base;
            let valid = idx >= 0
                && self.particles.get(idx as usize).and_then(|p| p.as_ref()).is_some_and(|p| p.gen == c.gen);
            if valid {
                break;
            }
            self.clocks.pop();
        }
    }

    /// Time of the next ring (infinite when nothing can move).
    pub fn peek_time(&mut self) -> f64 {
        self.discard_stale();
        self.clocks.peek().map_or(f64::INFINITY, |c| c.0.time)
    }

    /// Performs the next ring if it happens no later than `limit`.
    pub fn step_until(&mut self, limit: f64) -> Option<LabeledEvent> {
        self.ring_until(limit).map(|r| r.event)
    }

    /// Like [`step_until`](Self::step_until) but also reports the raw draws.
    pub fn ring_until(&mut self, limit: f64) -> Option<Ring> {
        if self.peek_time() > limit {
            self.time = self.time.max(limit);
            return None;
        }
        let Reverse(c) = self.clocks.pop().expect("peeked");
        self.time = c.time;
        let from = self.position(c.label).expect("active");
        let p = self.particle_mut(c.label);
        let right = p.rng.random::<f64>() >= 0.5;
        let mark = p.rng.random::<f64>();
        let at_front = from == self.q;
        let event = self.ring(c.label, right, mark < self.rho).expect("clock belongs to an active label");
        Some(Ring { label: c.label, from, at_front, right, mark, event })
    }

    /// Deterministic effect of a ring of the active `label`: jump right when
    /// `right`, and at the front branch instead when `branch`.
    pub fn ring(&mut self, label: i64, right: bool, branch: bool) -> Result<LabeledEvent> {
        if !self.is_active(label) {
            return Err(Error::DisabledEvent { event: format!("ring of inactive label {label}") });
        }
        let x = self.position(label).expect("active");
        let k = (self.q - x) as usize;
        if !right {
            self.sites[k].pop();
            if let Some(&top) = self.sites[k].last() {
                self.activate(top);
            }
            if k + 1 >= self.sites.len() {
                self.particles[(label - self.base) as usize] = None;
                self.dropped += 1;
            } else {
                self.land(label, k + 1);
            }
            return Ok(LabeledEvent::Left { label, to: x - 1 });
        }
        if k > 0 {
            self.sites[k].pop();
            if let Some(&top) = self.sites[k].last() {
                self.activate(top);
            }
            self.land(label, k - 1);
            return Ok(LabeledEvent::Right { label, to: x + 1 });
        }
        if branch {
            self.p += 1;
            let new = self.p;
            self.deactivate(label);
            self.insert_particle(new, self.q);
            self.sites[0].push(new);
            self.activate(new);
            return Ok(LabeledEvent::Branch { parent: label, label: new, at: self.q });
        }
        self.sites[0].pop();
        if let Some(&top) = self.sites[0].last() {
            self.activate(top);
        }
        self.q += 1;
        self.sites.push_front(Vec::new());
        if let Some(gone) = self.sites.pop_back() {
            for l in gone {
                self.particles[(l - self.base) as usize] = None;
                self.dropped += 1;
            }
        }
        self.land(label, 0);
        Ok(LabeledEvent::FrontMove { label, to: self.q })
    }

    /// Puts `label` on site index `k`, updating which particle is active.
    fn land(&mut self, label: i64, k: usize) {
        let pos = self.q - k as i64;
        self.particle_mut(label).pos = pos;
        let site = &mut self.sites[k];
        match site.last().copied() {
            Some(top) if top > label => {
                let i = site.partition_point(|&l| l < label);
                site.insert(i, label);
                self.deactivate(label);
            }
            top => {
                site.push(label);
                if let Some(t) = top {
                    self.deactivate(t);
                }
                self.activate(label);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub t: f64,
    pub label: i64,
    pub pos: i64,
    pub q: i64,
    pub p: i64,
}

pub fn labeled_simulate(
    initial: &LabeledState,
    rho: f64,
    horizon: f64,
    seed: u64,
    depth: usize,
) -> Result<Vec<LabeledRecord>> {
    let mut e = LabeledZr::new(initial, rho, seed, depth)?;
    let mut out = Vec::new();
    while let Some(ev) = e.step_until(horizon) {
        let (label, pos) = ev.moved();
        out.push(LabeledRecord { t: e.time(), label, pos, q: e.zfront(), p: e.counter() });
    }
    Ok(out)
}

pub fn write_labeled_jsonl<W: std::io::Write>(records: &[LabeledRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub depths: Vec<usize>,
    /// `first_disagreement[i]`: first time the run truncated at `depths[i]`
    /// differs from the deepest one, `None` when they agree up to the horizon.
    pub first_disagreement: Vec<Option<f64>>,
    /// Smallest depth from which every deeper truncation agrees with the deepest.
    pub stable_depth: Option<usize>,
}

/// Keeps the particles within `n` sites of the front.
pub fn truncate(initial: &LabeledState, n: usize) -> LabeledState {
    let particles: BTreeMap<i64, i64> =
        initial.particles.iter().filter(|(_, &y)| initial.zfront - y <= n as i64).map(|(&l, &y)| (l, y)).collect();
    let counter = particles.keys().next_back().copied().unwrap_or(initial.counter);
    LabeledState { particles, zfront: initial.zfront, counter }
}

fn run_observed(initial: &LabeledState, rho: f64, horizon: f64, seed: u64, depth: usize) -> Result<Vec<(f64, i64, i64, i64, i64)>> {
    Ok(labeled_simulate(initial, rho, horizon, seed, depth)?
        .into_iter()
        .map(|r| (r.t, r.label, r.pos, r.q, r.p))
        .collect())
}

/// Runs the truncations of `initial` at each depth with shared randomness and
/// compares the front, counter and the labels' moves with the deepest one.
pub fn finite_approximation_check(
    initial: &LabeledState,
    depths: &[usize],
    rho: f64,
    horizon: f64,
    seed: u64,
) -> Result<StabilityReport> {
    let mut depths = depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    let deepest = *depths.last().ok_or_else(|| Error::Config("no depths given".into()))?;
    let engine_depth = deepest.max(DEFAULT_DEPTH) + 1;
    let reference = run_observed(&truncate(initial, deepest), rho, horizon, seed, engine_depth)?;
    let mut first = Vec::with_capacity(depths.len());
    for &n in &depths {
        let run = run_observed(&truncate(initial, n), rho, horizon, seed, engine_depth)?;
        first.push(first_difference(&reference, &run));
    }
    let mut stable_depth = None;
    for (i, &n) in depths.iter().enumerate().rev() {
        if first[i].is_none() {
            stable_depth = Some(n);
        } else {
            break;
        }
    }
    Ok(StabilityReport { depths, first_disagreement: first, stable_depth })
}

/// First time the two runs differ in front, counter or the moves of labels
/// present in both.
fn first_difference(a: &[(f64, i64, i64, i64, i64)], b: &[(f64, i64, i64, i64, i64)]) -> Option<f64> {
    // Moves of labels present in only one run (deep particles) are ignored
    // as long as they do not change the front or counter.
    let labels_b: std::collections::HashSet<i64> = b.iter().map(|e| e.1).collect();
    let labels_a: std::collections::HashSet<i64> = a.iter().map(|e| e.1).collect();
    let fa: Vec<_> = a.iter().filter(|e| labels_b.contains(&e.1)).collect();
    let fb: Vec<_> = b.iter().filter(|e| labels_a.contains(&e.1)).collect();
    for (x, y) in fa.iter().zip(fb.iter()) {
        if x != y {
            return Some(x.0.min(y.0));
        }
    }
    if fa.len() != fb.len() {
        let t = if fa.len() > fb.len() { fa[fb.len()].0 } else { fb[fa.len()].0 };
        return Some(t);
    }
    // Front and counter along both runs.
    let mut ia = a.iter().map(|e| (e.0, e.3, e.4)).peekable();
    let mut ib = b.iter().map(|e| (e.0, e.3, e.4)).peekable();
    let (mut qa, mut qb) = ((0, 0), (0, 0));
    let (mut init_a, mut init_b) = (true, true);
    loop {
        let next = match (ia.peek(), ib.peek()) {
            (None, None) => return None,
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (Some(x), Some(y)) => x.0.min(y.0),
        };
        while let Some(&(t, q, p)) = ia.peek() {
            if t <= next {
                qa = (q, p);
                init_a = false;
                ia.next();
            } else {
                break;
            }
        }
        while let Some(&(t, q, p)) = ib.peek() {
            if t <= next {
                qb = (q, p);
                init_b = false;
                ib.next();
            } else {
                break;
            }
        }
        if !init_a && !init_b && qa != qb {
            return Some(next);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledSplitReport {
    pub p0: i64,
    pub q0: i64,
    /// First time an old particle sits at the front with no fresh particle there.
    pub vprime: Option<f64>,
    pub events: u64,
    /// Disagreements between the fresh process and the fresh part of the full
    /// process strictly before `vprime`.
    pub violations: u64,
}

/// Tracks the fresh/old split of a full run against a run of the fresh labels alone.
pub struct SplitMonitor {
    pub p0: i64,
    pub q0: i64,
}

impl SplitMonitor {
    pub fn new(initial: &LabeledState) -> Result<Self> {
        initial.validate()?;
        let p0 = initial.counter;
        let q0 = initial.zfront;
        if initial.particles.get(&p0) != Some(&q0) {
            return Err(Error::Config("the largest label must sit at the front".into()));
        }
        Ok(Self { p0, q0 })
    }

    /// Old mass (labels below `p0`) at the full process's front while the
    /// fresh process has nothing there.
    pub fn exposed(&self, full: &LabeledZr, fresh: &LabeledZr) -> bool {
        let q = full.zfront();
        let old = full.labels_at(q).iter().any(|&l| l < self.p0);
        old && fresh.labels_at(q).is_empty()
    }

    /// Lemma-style equalities: same front and counter, and the fresh heights of
    /// the full process equal the heights of the fresh process.
    pub fn consistent(&self, full: &LabeledZr, fresh: &LabeledZr) -> bool {
        full.zfront() == fresh.zfront()
            && full.counter() == fresh.counter()
            && full.heights_from(self.p0) == fresh.heights().stacks
    }
}

pub fn fresh_part(initial: &LabeledState) -> LabeledState {
    LabeledState::single_at(initial.counter, initial.zfront)
}

/// Runs the full process and the process of the front label alone with
/// shared per-label randomness and checks they agree up to `vprime`.
pub fn coupled_split_simulate(
    initial: &LabeledState,
    rho: f64,
    horizon: f64,
    seed: u64,
    depth: usize,
) -> Result<CoupledSplitReport> {
    let monitor = SplitMonitor::new(initial)?;
    let mut full = LabeledZr::new(initial, rho, seed, depth)?;
    let mut fresh = LabeledZr::new(&fresh_part(initial), rho, seed, depth)?;
    let mut report =
        CoupledSplitReport { p0: monitor.p0, q0: monitor.q0, vprime: None, events: 0, violations: 0 };
    loop {
        let tw = full.peek_time();
        let tf = fresh.peek_time();
        let t = tw.min(tf);
        if t > horizon {
            break;
        }
        if tw <= tf {
            let ev = full.step_until(t).expect("due");
            let (label, _) = ev.moved();
            let fresh_label = matches!(ev, LabeledEvent::Branch { parent, .. } if parent >= monitor.p0)
                || (!matches!(ev, LabeledEvent::Branch { .. }) && label >= monitor.p0);
            if fresh_label {
                if tf == tw {
                    let fev = fresh.step_until(t).expect("due");
                    if fev != ev {
                        report.violations += 1;
                    }
                } else {
                    report.violations += 1;
                }
            }
        } else {
            // A fresh ring with no counterpart in the full process.
            fresh.step_until(t);
            report.violations += 1;
        }
        report.events += 1;
        if monitor.exposed(&full, &fresh) {
            report.vprime = Some(t);
            break;
        }
        if !monitor.consistent(&full, &fresh) {
            report.violations += 1;
        }
    }
    Ok(report)
}
