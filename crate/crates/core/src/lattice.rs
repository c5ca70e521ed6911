//! Exclusion reactive process on a window that slides with the front.
//!
//! First-class particles perform symmetric simple exclusion on the sites
//! `..= front`. When the particle at the front jumps right, with probability
//! `rho` it activates a dormant particle (the front advances and a new
//! particle appears at `front + 1`), otherwise it moves onto `front + 1`.
//!
//! Only the sites `[front - L, front]` are tracked. Everything further left is
//! frozen. Under [`BoundaryPolicy::Frozen`] the site just outside the window
//! keeps the content it had when it left the window and still exchanges with
//! the edge site; under [`BoundaryPolicy::Reflecting`] the edge bond is inert.
//!
//! The truncation diagnostic follows the stirring representation (every bond
//! carries a rate-1 clock that exchanges the contents of its endpoints). Under
//! the coupling that shares those clocks with the untruncated process,
//! discrepancies enter only through the edge bond and are then transported by
//! the clocks. `FrontState` keeps the set of sites that may differ
//! ("tainted" sites); `boundary_events` counts how often that set reached the
//! front site. Rings of bonds whose endpoints agree are no-ops for the
//! dynamics and are only sampled, from a separate stream, when they can move a
//! tainted site.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    #[default]
    Frozen,
    Reflecting,
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(Self::Frozen),
            "reflecting" => Ok(Self::Reflecting),
            other => Err(Error::Config(format!("unknown boundary policy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// One particle at the origin, every other tracked site empty.
    Single,
    /// Explicit occupancies of the sites `-(len-1) ..= 0`, leftmost first.
    Word(Vec<u8>),
    /// Occupied origin, i.i.d. Bernoulli(density) on the rest of the window.
    Bernoulli(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rho: f64,
    pub window: usize,
    pub horizon: f64,
    pub seed: u64,
    pub initial: InitialCondition,
    #[serde(default)]
    pub boundary: BoundaryPolicy,
    /// Accept `rho` in `{0, 1}`.
    #[serde(default)]
    pub degenerate: bool,
    /// Accept an initial configuration without a particle at the front.
    #[serde(default)]
    pub allow_empty: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            window: 512,
            horizon: 1e4,
            seed: 0,
            initial: InitialCondition::Single,
            boundary: BoundaryPolicy::Frozen,
            degenerate: false,
            allow_empty: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let rho_ok = if self.degenerate {
            (0.0..=1.0).contains(&self.rho)
        } else {
            self.rho > 0.0 && self.rho < 1.0
        };
        if !rho_ok {
            return Err(Error::Config(format!(
                "rho must lie in (0,1) (or [0,1] in degenerate mode), got {}",
                self.rho
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        match &self.initial {
            InitialCondition::Word(w) => {
                if w.is_empty() || w.len() > self.window + 1 {
                    return Err(Error::Config(format!(
                        "initial word length {} must be in 1..={}",
                        w.len(),
                        self.window + 1
                    )));
                }
                if w.iter().any(|&b| b > 1) {
                    return Err(Error::Config("initial word must be 0/1".into()));
                }
                if !self.allow_empty && w.last() != Some(&1) {
                    return Err(Error::Config(
                        "initial word must have a particle at the front (nontrivial start)".into(),
                    ));
                }
            }
            InitialCondition::Bernoulli(d) => {
                if !(0.0..=1.0).contains(d) {
                    return Err(Error::Config(format!("Bernoulli density must be in [0,1], got {d}")));
                }
            }
            InitialCondition::Single => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Event {
    /// Particle at `x` jumps to `x + 1`.
    SwapRight(i64),
    /// Particle at `x` jumps to `x - 1`.
    SwapLeft(i64),
    FrontBranch,
    FrontMove,
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::SwapRight(_) => "swap_right",
            Event::SwapLeft(_) => "swap_left",
            Event::FrontBranch => "branch",
            Event::FrontMove => "move",
        }
    }

    pub fn is_front(&self) -> bool {
        matches!(self, Event::FrontBranch | Event::FrontMove)
    }

    fn order_key(&self) -> (u8, i64) {
        match *self {
            Event::SwapRight(x) => (0, x),
            Event::SwapLeft(x) => (1, x),
            Event::FrontBranch => (2, 0),
            Event::FrontMove => (3, 0),
        }
    }
}

impl std::fmt::Display for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Event::SwapRight(x) => write!(f, "SwapRight({x})"),
            Event::SwapLeft(x) => write!(f, "SwapLeft({x})"),
            Event::FrontBranch => write!(f, "FrontBranch"),
            Event::FrontMove => write!(f, "FrontMove"),
        }
    }
}

const NO_SLOT: u32 = u32::MAX;

/// Set of sites inside a ring of `modulus` consecutive sites, with O(1)
/// insert, remove, membership and uniform indexing.
#[derive(Clone, Debug)]
struct SiteSet {
    items: Vec<i64>,
    index: Vec<u32>,
}

impl SiteSet {
    fn new(modulus: usize) -> Self {
        Self { items: Vec::new(), index: vec![NO_SLOT; modulus] }
    }

    #[inline]
    fn slot(&self, x: i64) -> usize {
        x.rem_euclid(self.index.len() as i64) as usize
    }

    #[inline]
    fn contains(&self, x: i64) -> bool {
        let i = self.index[self.slot(x)];
        i != NO_SLOT && self.items[i as usize] == x
    }

    fn insert(&mut self, x: i64) {
        let slot = self.slot(x);
        if self.index[slot] == NO_SLOT {
            self.index[slot] = self.items.len() as u32;
            self.items.push(x);
        }
    }

    fn remove(&mut self, x: i64) {
        let slot = self.slot(x);
        let idx = self.index[slot];
        if idx == NO_SLOT || self.items[idx as usize] != x {
            return;
        }
        let last = *self.items.last().expect("indexed set is non-empty");
        self.items.swap_remove(idx as usize);
        if (idx as usize) < self.items.len() {
            let moved = self.slot(last);
            self.index[moved] = idx;
        }
        self.index[slot] = NO_SLOT;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

#[derive(Clone, Debug)]
pub struct FrontState {
    front: i64,
    counter: i64,
    window: usize,
    policy: BoundaryPolicy,
    /// Ring buffer over `[front - window, front]`, indexed by `site mod (window + 1)`.
    cells: Vec<u8>,
    /// Content of the frozen site `front - window - 1`.
    outside: u8,
    /// Left endpoints of discordant bonds; the edge bond has left endpoint
    /// `front - window - 1`, which shares its slot with `front`.
    bonds: SiteSet,
    tainted: SiteSet,
    front_tainted: bool,
    pub boundary_events: u64,
    pub inflow: u64,
    pub outflow: u64,
}

impl PartialEq for FrontState {
    fn eq(&self, other: &Self) -> bool {
        self.front == other.front
            && self.counter == other.counter
            && self.window == other.window
            && self.occupancy() == other.occupancy()
    }
}

impl FrontState {
    /// Builds a state with `front = counter = 0` from a leftmost-first word
    /// ending at the origin; sites not covered by the word are empty.
    pub fn from_word(word: &[u8], window: usize, policy: BoundaryPolicy) -> Self {
        Self::from_word_at(0, 0, word, window, policy)
    }

    pub fn from_word_at(front: i64, counter: i64, word: &[u8], window: usize, policy: BoundaryPolicy) -> Self {
        assert!(window >= 1 && word.len() <= window + 1);
        let mut s = FrontState {
            front,
            counter,
            window,
            policy,
            cells: vec![0; window + 1],
            outside: 0,
            bonds: SiteSet::new(window + 1),
            tainted: SiteSet::new(window + 1),
            front_tainted: false,
            boundary_events: 0,
            inflow: 0,
            outflow: 0,
        };
        let start = front - word.len() as i64 + 1;
        for (i, &b) in word.iter().enumerate() {
            s.set(start + i as i64, b.min(1));
        }
        for x in s.edge() - 1..front {
            s.refresh_bond(x);
        }
        s
    }

    /// Same occupancies with the frozen outside cell set to `outside`.
    pub fn with_outside(mut self, outside: u8) -> Self {
        self.outside = outside.min(1);
        let e = self.edge() - 1;
        self.refresh_bond(e);
        self
    }

    pub fn front(&self) -> i64 {
        self.front
    }

    pub fn counter(&self) -> i64 {
        self.counter
    }

    /// `front - counter`, the position of the zero-range front.
    pub fn zfront(&self) -> i64 {
        self.front - self.counter
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn policy(&self) -> BoundaryPolicy {
        self.policy
    }

    /// Leftmost tracked site.
    pub fn edge(&self) -> i64 {
        self.front - self.window as i64
    }

    pub fn outside(&self) -> u8 {
        self.outside
    }

    #[inline]
    fn slot(&self, x: i64) -> usize {
        x.rem_euclid(self.window as i64 + 1) as usize
    }

    /// Occupancy of `x`; sites right of the front are empty, sites left of the
    /// window read as the frozen outside cell.
    #[inline]
    pub fn get(&self, x: i64) -> u8 {
        if x > self.front {
            0
        } else if x >= self.edge() {
            self.cells[self.slot(x)]
        } else if x == self.edge() - 1 && self.policy == BoundaryPolicy::Frozen {
            self.outside
        } else {
            0
        }
    }

    /// Leftmost-first occupancies of `[front - L, front]`.
    pub fn occupancy(&self) -> Vec<u8> {
        (self.edge()..=self.front).map(|x| self.get(x)).collect()
    }

    pub fn particles(&self) -> usize {
        self.cells.iter().map(|&b| b as usize).sum()
    }

    /// Sites whose content may differ from the untruncated process.
    pub fn tainted(&self) -> Vec<i64> {
        let mut v = self.tainted.items.clone();
        v.sort_unstable();
        v
    }

    #[inline]
    fn set(&mut self, x: i64, v: u8) {
        let slot = self.slot(x);
        self.cells[slot] = v;
    }

    /// Re-evaluates whether bond `(x, x + 1)` is discordant.
    fn refresh_bond(&mut self, x: i64) {
        let edge_bond = self.edge() - 1;
        if x < edge_bond || x >= self.front {
            return;
        }
        let active = if x == edge_bond {
            self.policy == BoundaryPolicy::Frozen && self.outside != self.get(x + 1)
        } else {
            self.get(x) != self.get(x + 1)
        };
        if active {
            self.bonds.insert(x);
        } else {
            self.bonds.remove(x);
        }
    }

    /// Sum of all generator rates.
    pub fn total_rate(&self) -> f64 {
        self.bonds.len() as f64 + if self.get(self.front) == 1 { 1.0 } else { 0.0 }
    }

    fn bond_event(&self, x: i64) -> Event {
        if self.get(x) == 1 {
            Event::SwapRight(x)
        } else {
            Event::SwapLeft(x + 1)
        }
    }

    /// Draws the next event with probability proportional to its rate.
    pub fn sample_event<R: Rng + ?Sized>(&self, rho: f64, rng: &mut R) -> Option<Event> {
        let nb = self.bonds.len() as f64;
        let total = self.total_rate();
        if total <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * total;
        if u < nb {
            let i = (u as usize).min(self.bonds.len() - 1);
            Some(self.bond_event(self.bonds.items[i]))
        } else if u - nb < rho {
            Some(Event::FrontBranch)
        } else {
            Some(Event::FrontMove)
        }
    }

    pub fn is_enabled(&self, event: &Event) -> bool {
        let edge_bond = self.edge() - 1;
        match *event {
            Event::SwapRight(x) => x >= edge_bond && x < self.front && self.bonds.contains(x) && self.get(x) == 1,
            Event::SwapLeft(x) => {
                x > edge_bond && x <= self.front && self.bonds.contains(x - 1) && self.get(x) == 1
            }
            Event::FrontBranch | Event::FrontMove => self.get(self.front) == 1,
        }
    }

    fn exchange_taint(&mut self, x: i64) {
        let a = self.tainted.contains(x);
        let b = self.tainted.contains(x + 1);
        if a && !b {
            self.tainted.remove(x);
            self.tainted.insert(x + 1);
        } else if b && !a {
            self.tainted.remove(x + 1);
            self.tainted.insert(x);
        }
    }

    fn check_front_taint(&mut self) {
        let now = self.tainted.contains(self.front);
        if now && !self.front_tainted {
            self.boundary_events += 1;
        }
        self.front_tainted = now;
    }

    /// Applies an enabled event in place.
    pub fn apply(&mut self, event: Event) -> Result<()> {
        if !self.is_enabled(&event) {
            return Err(Error::DisabledEvent { event: event.to_string() });
        }
        match event {
            Event::SwapRight(x) => self.exchange(x),
            Event::SwapLeft(x) => self.exchange(x - 1),
            Event::FrontBranch => self.advance(true),
            Event::FrontMove => self.advance(false),
        }
        self.check_front_taint();
        Ok(())
    }

    /// Exchanges the contents of `x` and `x + 1`.
    fn exchange(&mut self, x: i64) {
        if x == self.edge() - 1 {
            let inner = self.get(x + 1);
            if self.outside == 1 {
                self.inflow += 1;
            } else {
                self.outflow += 1;
            }
            self.set(x + 1, self.outside);
            self.outside = inner;
            self.tainted.insert(x + 1);
        } else {
            let a = self.get(x);
            let b = self.get(x + 1);
            self.set(x, b);
            self.set(x + 1, a);
            self.exchange_taint(x);
        }
        for y in x - 1..=x + 1 {
            self.refresh_bond(y);
        }
    }

    fn advance(&mut self, branch: bool) {
        let old_front = self.front;
        let edge = self.edge();
        // Bonds whose slots are about to be reused leave the active set first.
        self.bonds.remove(edge - 1);
        if self.policy == BoundaryPolicy::Reflecting {
            self.bonds.remove(edge);
        }
        self.tainted.remove(edge);
        let dropped = self.get(edge);
        self.outflow += dropped as u64;
        if self.policy == BoundaryPolicy::Frozen {
            self.outside = dropped;
        }
        self.front += 1;
        self.set(self.front, 1);
        if branch {
            self.counter += 1;
        } else {
            self.set(old_front, 0);
        }
        if self.tainted.contains(old_front) {
            self.tainted.insert(self.front);
        }
        for y in old_front - 1..self.front {
            self.refresh_bond(y);
        }
        let e = self.edge() - 1;
        self.refresh_bond(e);
    }

    /// Upper bound on the rate of no-op bond rings relevant to the taint set:
    /// the edge bond plus both bonds of every tainted site.
    fn diag_rate(&self) -> f64 {
        (1 + 2 * self.tainted.len()) as f64
    }

    /// Thinned no-op ring: candidate `k` in `0..diag_rate()`.
    fn diag_ring(&mut self, k: usize) {
        let edge_bond = self.edge() - 1;
        let x = if k == 0 {
            edge_bond
        } else {
            let d = self.tainted.items[(k - 1) / 2];
            if (k - 1) % 2 == 0 {
                d - 1
            } else {
                d
            }
        };
        if x == edge_bond {
            let silent = match self.policy {
                BoundaryPolicy::Reflecting => true,
                BoundaryPolicy::Frozen => self.outside == self.get(self.edge()),
            };
            if silent && k == 0 {
                let e = self.edge();
                self.tainted.insert(e);
            }
        } else if x < self.front && self.get(x) == self.get(x + 1) {
            // Bonds shared by two tainted sites are drawn twice but the
            // exchange is then a no-op, so every bond is effectively rate 1.
            self.exchange_taint(x);
        }
        self.check_front_taint();
    }
}

/// All nonzero generator terms of the current state, ordered by (kind, site).
pub fn enabled_events(state: &FrontState, rho: f64) -> Vec<(Event, f64)> {
    let mut out: Vec<(Event, f64)> = state.bonds.items.iter().map(|&x| (state.bond_event(x), 1.0)).collect();
    if state.get(state.front) == 1 {
        if rho > 0.0 {
            out.push((Event::FrontBranch, rho));
        }
        if rho < 1.0 {
            out.push((Event::FrontMove, 1.0 - rho));
        }
    }
    out.sort_by_key(|(e, _)| e.order_key());
    out
}

pub fn apply_event(state: &FrontState, event: Event) -> Result<FrontState> {
    let mut next = state.clone();
    next.apply(event)?;
    Ok(next)
}

/// Occupancies at `front, front - 1, ..., front - width + 1`.
pub fn front_window(state: &FrontState, width: usize) -> Result<Vec<u8>> {
    if width > state.window {
        return Err(Error::WidthTooLarge { width, window: state.window });
    }
    Ok((0..width as i64).map(|k| state.get(state.front - k)).collect())
}

pub fn init_state(config: &SimConfig) -> Result<FrontState> {
    config.validate()?;
    let l = config.window;
    let word = match &config.initial {
        InitialCondition::Single => vec![1],
        InitialCondition::Word(w) => w.clone(),
        InitialCondition::Bernoulli(d) => {
            let mut r = rng::stream(config.seed, rng::AUX_STREAM_BASE + 1);
            let mut w: Vec<u8> = (0..l).map(|_| u8::from(r.random::<f64>() < *d)).collect();
            w.push(1);
            w
        }
    };
    if !config.allow_empty && !word.contains(&1) {
        return Err(Error::Config("empty initial configuration".into()));
    }
    Ok(FrontState::from_word(&word, l, config.boundary))
}

/// Exact continuous-time simulation driven by one main stream (dynamics) and
/// one diagnostic stream (no-op bond rings used by the truncation diagnostic).
pub struct Simulation {
    state: FrontState,
    rho: f64,
    time: f64,
    main: ChaCha8Rng,
    diag: ChaCha8Rng,
    next_main: f64,
    next_diag: f64,
    events: u64,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let state = init_state(config)?;
        Ok(Self::from_state(state, config.rho, config.seed))
    }

    pub fn from_state(state: FrontState, rho: f64, seed: u64) -> Self {
        let mut sim = Simulation {
            state,
            rho,
            time: 0.0,
            main: rng::stream(seed, 0),
            diag: rng::stream(seed, rng::AUX_STREAM_BASE),
            next_main: f64::INFINITY,
            next_diag: f64::INFINITY,
            events: 0,
        };
        sim.redraw_main();
        sim.redraw_diag();
        sim
    }

    pub fn state(&self) -> &FrontState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    fn redraw_main(&mut self) {
        let rate = self.state.total_rate();
        self.next_main = if rate > 0.0 { self.time + rng::exp(&mut self.main, rate) } else { f64::INFINITY };
    }

    fn redraw_diag(&mut self) {
        let rate = self.state.diag_rate();
        self.next_diag = self.time + rng::exp(&mut self.diag, rate);
    }

    /// Advances to the next dynamical event if it happens no later than
    /// `limit`; otherwise moves the clock to `limit` and returns `None`.
    pub fn step_until(&mut self, limit: f64) -> Result<Option<Event>> {
        loop {
            if self.next_main == f64::INFINITY && self.time < limit {
                return Err(Error::WindowUnderflow {
                    time: self.time,
                    boundary_events: self.state.boundary_events,
                });
            }
            let next = self.next_main.min(self.next_diag);
            if next > limit {
                self.time = limit;
                return Ok(None);
            }
            if self.next_main <= self.next_diag {
                self.time = self.next_main;
                let ev = self
                    .state
                    .sample_event(self.rho, &mut self.main)
                    .expect("finite clock implies an enabled event");
                self.state.apply(ev)?;
                self.events += 1;
                self.redraw_main();
                self.redraw_diag();
                return Ok(Some(ev));
            }
            self.time = self.next_diag;
            let n = self.state.diag_rate() as usize;
            let k = self.diag.random_range(0..n);
            self.state.diag_ring(k);
            self.redraw_diag();
        }
    }

    /// Runs to `t_end`, calling `observe` after every dynamical event.
    pub fn run_until<F>(&mut self, t_end: f64, mut observe: F) -> Result<()>
    where
        F: FnMut(f64, Event, &FrontState),
    {
        while let Some(ev) = self.step_until(t_end)? {
            observe(self.time, ev, &self.state);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecorderSpec {
    /// Record every event rather than only front events.
    pub every_event: bool,
    pub snapshot_times: Vec<f64>,
    pub snapshot_width: usize,
}

impl RecorderSpec {
    /// Front events plus snapshots on a geometric grid `1, 2, 4, ...` up to `horizon`.
    pub fn standard(horizon: f64, width: usize) -> Self {
        let mut times = Vec::new();
        let mut t = 1.0;
        while t <= horizon {
            times.push(t);
            t *= 2.0;
        }
        Self { every_event: false, snapshot_times: times, snapshot_width: width }
    }

    pub fn front_only() -> Self {
        Self { every_event: false, snapshot_times: Vec::new(), snapshot_width: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: String,
    pub r: i64,
    pub p: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub window: String,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<EventRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: FrontState,
    pub events: u64,
    pub horizon: f64,
}

impl Trajectory {
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut snaps = self.snapshots.iter().peekable();
        for rec in &self.records {
            while let Some(s) = snaps.peek() {
                if s.t <= rec.t {
                    serde_json::to_writer(&mut w, s)?;
                    writeln!(w)?;
                    snaps.next();
                } else {
                    break;
                }
            }
            serde_json::to_writer(&mut w, rec)?;
            writeln!(w)?;
        }
        for s in snaps {
            serde_json::to_writer(&mut w, s)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn word_string(word: &[u8]) -> String {
    word.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

pub fn simulate(config: &SimConfig, recorder: &RecorderSpec) -> Result<Trajectory> {
    let mut sim = Simulation::new(config)?;
    let mut records = vec![EventRecord {
        t: 0.0,
        kind: "init".into(),
        r: sim.state.front,
        p: sim.state.counter,
    }];
    let mut snapshots = Vec::new();
    let width = recorder.snapshot_width.min(config.window);
    let mut snap_times = recorder.snapshot_times.iter().copied().filter(|&t| t <= config.horizon).peekable();
    loop {
        let limit = snap_times.peek().copied().unwrap_or(config.horizon);
        match sim.step_until(limit)? {
            Some(ev) => {
                if recorder.every_event || ev.is_front() {
                    records.push(EventRecord {
                        t: sim.time,
                        kind: ev.kind().into(),
                        r: sim.state.front,
                        p: sim.state.counter,
                    });
                }
            }
            None => {
                if let Some(t) = snap_times.next() {
                    snapshots.push(Snapshot { t, window: word_string(&front_window(&sim.state, width)?) });
                } else {
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        records,
        snapshots,
        events: sim.events,
        final_state: sim.state,
        horizon: config.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rho: f64, horizon: f64) -> SimConfig {
        SimConfig { rho, window: 64, horizon, seed: 11, ..SimConfig::default() }
    }

    #[test]
    fn single_start() {
        let s = init_state(&cfg(0.5, 1.0)).unwrap();
        assert_eq!((s.front(), s.counter()), (0, 0));
        assert_eq!(s.get(0), 1);
        assert_eq!(s.particles(), 1);
    }

    #[test]
    fn explicit_word_is_kept() {
        let mut c = cfg(0.5, 1.0);
        c.initial = InitialCondition::Word(vec![1, 1, 0, 1]);
        let s = init_state(&c).unwrap();
        assert_eq!((-3..=0).map(|x| s.get(x)).collect::<Vec<_>>(), vec![1, 1, 0, 1]);
        assert_eq!(s.particles(), 3);
    }

    #[test]
    fn bernoulli_word_is_deterministic() {
        let mut c = cfg(0.5, 1.0);
        c.initial = InitialCondition::Bernoulli(0.5);
        let a = init_state(&c).unwrap();
        let b = init_state(&c).unwrap();
        assert_eq!(a.occupancy(), b.occupancy());
        assert_eq!(a.get(0), 1);
        assert!(a.particles() > 10);
    }

    #[test]
    fn empty_start_rejected_unless_allowed() {
        let mut c = cfg(0.5, 1.0);
        c.initial = InitialCondition::Word(vec![0, 0]);
        assert!(init_state(&c).is_err());
        c.allow_empty = true;
        assert!(init_state(&c).is_ok());
    }

    #[test]
    fn rho_bounds() {
        assert!(cfg(0.0, 1.0).validate().is_err());
        assert!(cfg(1.0, 1.0).validate().is_err());
        let mut c = cfg(1.0, 1.0);
        c.degenerate = true;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn enabled_events_hand_enumeration() {
        // sites -3..=0 : 0 1 0 1
        let s = FrontState::from_word(&[0, 1, 0, 1], 8, BoundaryPolicy::Frozen);
        let ev = enabled_events(&s, 0.5);
        let expected = vec![
            (Event::SwapRight(-2), 1.0),
            (Event::SwapLeft(-2), 1.0),
            (Event::SwapLeft(0), 1.0),
            (Event::FrontBranch, 0.5),
            (Event::FrontMove, 0.5),
        ];
        assert_eq!(ev, expected);
        let total: f64 = ev.iter().map(|e| e.1).sum();
        assert_eq!(total, 4.0);
    }

    #[test]
    fn empty_front_has_no_front_events() {
        let s = FrontState::from_word(&[1, 1, 0], 8, BoundaryPolicy::Frozen);
        let ev = enabled_events(&s, 0.5);
        assert!(ev.iter().all(|(e, _)| !e.is_front()));
    }

    #[test]
    fn full_window_only_front_events() {
        let s = FrontState::from_word(&[1; 5], 4, BoundaryPolicy::Reflecting);
        let ev = enabled_events(&s, 0.3);
        assert_eq!(ev.len(), 2);
        assert!((ev.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn branch_and_move() {
        let s = FrontState::from_word(&[1], 8, BoundaryPolicy::Frozen);
        let b = apply_event(&s, Event::FrontBranch).unwrap();
        assert_eq!((b.front(), b.counter(), b.get(0), b.get(1)), (1, 1, 1, 1));
        let m = apply_event(&s, Event::FrontMove).unwrap();
        assert_eq!((m.front(), m.counter(), m.get(0), m.get(1)), (1, 0, 0, 1));
    }

    #[test]
    fn swap_left_exchange() {
        let s = FrontState::from_word(&[0, 1], 8, BoundaryPolicy::Frozen);
        let n = apply_event(&s, Event::SwapLeft(0)).unwrap();
        assert_eq!((n.get(0), n.get(-1), n.front(), n.counter()), (0, 1, 0, 0));
    }

    #[test]
    fn disabled_event_is_an_error() {
        let s = FrontState::from_word(&[1, 1], 8, BoundaryPolicy::Frozen);
        assert!(matches!(apply_event(&s, Event::SwapLeft(0)), Err(Error::DisabledEvent { .. })));
        let e = FrontState::from_word(&[1, 0], 8, BoundaryPolicy::Frozen);
        assert!(apply_event(&e, Event::FrontMove).is_err());
    }

    #[test]
    fn front_window_reads_from_front() {
        let s = FrontState::from_word(&[1, 0, 1], 8, BoundaryPolicy::Frozen);
        assert_eq!(front_window(&s, 1).unwrap(), vec![1]);
        assert_eq!(front_window(&s, 3).unwrap(), vec![1, 0, 1]);
        assert!(front_window(&s, 9).is_err());
    }

    #[test]
    fn front_window_ignores_deep_swaps() {
        let s = FrontState::from_word(&[1, 0, 0, 0, 1, 0, 1], 8, BoundaryPolicy::Frozen);
        let n = apply_event(&s, Event::SwapLeft(-6)).unwrap();
        assert_eq!(front_window(&s, 3).unwrap(), front_window(&n, 3).unwrap());
    }

    #[test]
    fn edge_exchange_with_frozen_cell() {
        // window 2: sites -2..=0 = [1, 0, 1]; outside empty
        let s = FrontState::from_word(&[1, 0, 1], 2, BoundaryPolicy::Frozen);
        assert!(s.is_enabled(&Event::SwapLeft(-2)));
        let n = apply_event(&s, Event::SwapLeft(-2)).unwrap();
        assert_eq!((n.get(-2), n.outside(), n.outflow), (0, 1, 1));
        assert!(n.is_enabled(&Event::SwapRight(-3)));
        let r = FrontState::from_word(&[1, 0, 1], 2, BoundaryPolicy::Reflecting);
        assert!(!r.is_enabled(&Event::SwapLeft(-2)));
    }

    #[test]
    fn horizon_zero_is_initial_state_only() {
        let t = simulate(&cfg(0.5, 0.0), &RecorderSpec::front_only()).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.events, 0);
    }

    #[test]
    fn degenerate_rates() {
        let mut c = cfg(0.0, 200.0);
        c.degenerate = true;
        let mut sim = Simulation::new(&c).unwrap();
        sim.run_until(200.0, |_, _, s| {
            assert_eq!(s.counter(), 0);
            assert_eq!(s.particles(), 1);
        })
        .unwrap();
        c.rho = 1.0;
        let mut sim = Simulation::new(&c).unwrap();
        sim.run_until(200.0, |_, _, s| assert_eq!(s.zfront(), 0)).unwrap();
        assert!(sim.state().front() > 0);
    }

    #[test]
    fn bookkeeping_and_monotonicity() {
        let mut c = cfg(0.5, 2000.0);
        c.window = 16;
        let mut sim = Simulation::new(&c).unwrap();
        let (mut r, mut p) = (0, 0);
        sim.run_until(c.horizon, |_, _, s| {
            assert!(s.front() >= r && s.counter() >= p);
            assert!(s.front() - r >= s.counter() - p);
            r = s.front();
            p = s.counter();
            let expected = 1 + s.counter() + s.inflow as i64 - s.outflow as i64;
            assert_eq!(s.particles() as i64, expected);
        })
        .unwrap();
        assert!(sim.state().outflow > 0);
    }

    #[test]
    fn small_window_registers_boundary_events() {
        let c = SimConfig { window: 3, horizon: 500.0, seed: 5, ..SimConfig::default() };
        let mut sim = Simulation::new(&c).unwrap();
        sim.run_until(c.horizon, |_, _, _| {}).unwrap();
        assert!(sim.state().boundary_events > 0);
    }

    #[test]
    fn incremental_bond_set_matches_scan() {
        for policy in [BoundaryPolicy::Frozen, BoundaryPolicy::Reflecting] {
            let c = SimConfig { window: 7, horizon: 300.0, seed: 3, boundary: policy, ..SimConfig::default() };
            let mut sim = Simulation::new(&c).unwrap();
            sim.run_until(c.horizon, |_, _, s| {
                let fresh = FrontState::from_word_at(s.front(), s.counter(), &s.occupancy(), s.window(), policy);
                let mut a: Vec<_> = enabled_events(s, 0.5);
                let mut b = enabled_events(&fresh.with_outside(s.outside()), 0.5);
                a.sort_by_key(|e| e.0.order_key());
                b.sort_by_key(|e| e.0.order_key());
                assert_eq!(a, b);
            })
            .unwrap();
        }
    }
}
