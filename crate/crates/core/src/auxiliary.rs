//! Auxiliary comparison front.
//!
//! Walkers `Z_x`, `x >= 0`, are independent continuous-time simple symmetric
//! walks of rate `2/n` with `Z_x(0) = x`. Stage `m` ends at the first time
//! `nu_m` (measured from time zero) that one of the trailing walkers
//! `Z_{max(0, m-n)} .. Z_{m-1}` reaches level `m`, and the auxiliary front
//! jumps from `m - 1` to `m` at `nu_1 + ... + nu_m`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::labeled::{LabeledEvent, LabeledState, LabeledZr, DEFAULT_DEPTH};
use crate::rng;
use crate::stats::basic::{bootstrap_ci, mean, Interval};

const WALKER_STREAM_BASE: u64 = rng::AUX_STREAM_BASE + (1 << 40);

/// Walker path generated on demand; keeps the times at which each new
/// maximum was first reached.
#[derive(Clone, Debug)]
struct Walker {
    start: i64,
    rate: f64,
    time: f64,
    pos: i64,
    /// `record_times[k]`: first time the walker reached `start + k + 1`.
    record_times: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Walker {
    fn new(seed: u64, start: i64, rate: f64) -> Self {
        Self {
            start,
            rate,
            time: 0.0,
            pos: start,
            record_times: Vec::new(),
            rng: rng::stream(seed, WALKER_STREAM_BASE + start as u64),
        }
    }

    fn max(&self) -> i64 {
        self.start + self.record_times.len() as i64
    }

    /// First time the walker reaches `level`, if that happens no later than `cap`.
    fn hit(&mut self, level: i64, cap: f64) -> Option<f64> {
        if level <= self.start {
            return Some(0.0);
        }
        while self.max() < level {
            if self.time > cap {
                return None;
            }
            self.time += rng::exp(&mut self.rng, self.rate);
            if self.rng.random::<f64>() < 0.5 {
                self.pos -= 1;
            } else {
                self.pos += 1;
                if self.pos > self.max() {
                    self.record_times.push(self.time);
                }
            }
        }
        let t = self.record_times[(level - self.start - 1) as usize];
        (t <= cap).then_some(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxTrajectory {
    pub n: usize,
    pub horizon: f64,
    /// Stage lengths `nu_1, nu_2, ...` completed within the horizon.
    pub stages: Vec<f64>,
    /// Jump times `nu_1 + ... + nu_m` of the auxiliary front.
    pub jump_times: Vec<f64>,
}

impl AuxTrajectory {
    /// Auxiliary front at time `t`.
    pub fn front_at(&self, t: f64) -> i64 {
        self.jump_times.partition_point(|&s| s <= t) as i64
    }

    pub fn final_front(&self) -> i64 {
        self.jump_times.len() as i64
    }
}

pub fn aux_simulate(n: usize, horizon: f64, seed: u64) -> Result<AuxTrajectory> {
    if n < 2 {
        return Err(Error::Config(format!("group size n must be >= 2, got {n}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Config("horizon must be >= 0".into()));
    }
    let rate = 2.0 / n as f64;
    let mut walkers: std::collections::VecDeque<Walker> = std::collections::VecDeque::new();
    let mut stages = Vec::new();
    let mut jump_times = Vec::new();
    let mut elapsed = 0.0;
    let mut m: i64 = 1;
    loop {
        // walkers Z_{m-n} .. Z_{m-1}
        while walkers.back().is_none_or(|w| w.start < m - 1) {
            let next = walkers.back().map_or(0, |w| w.start + 1);
            walkers.push_back(Walker::new(seed, next, rate));
        }
        while walkers.front().is_some_and(|w| w.start < m - n as i64) {
            walkers.pop_front();
        }
        let budget = horizon - elapsed;
        let mut best: Option<f64> = None;
        for w in walkers.iter_mut() {
            let cap = best.unwrap_or(budget);
            if let Some(t) = w.hit(m, cap) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
        match best {
            Some(nu) if elapsed + nu <= horizon => {
                elapsed += nu;
                stages.push(nu);
                jump_times.push(elapsed);
                m += 1;
            }
            _ => break,
        }
    }
    Ok(AuxTrajectory { n, horizon, stages, jump_times })
}

/// Survival function of the first hitting time of level 1 by a rate-`lambda`
/// symmetric walk from 0: `P[S_N in {0,-1}]` mixed over `N ~ Poisson(lambda t)`.
pub fn first_passage_survival(lambda: f64, t: f64) -> f64 {
    let mu = lambda * t;
    if mu == 0.0 {
        return 1.0;
    }
    // P[S_N in {0,-1}] = C(N, floor(N/2)) / 2^N for either parity.
    let n_max = (mu + 40.0 * mu.sqrt() + 50.0) as u64;
    let mut total = 0.0;
    let mut log_pois = -mu; // log P[N = 0]
    for n in 0..=n_max {
        if n > 0 {
            log_pois += mu.ln() - (n as f64).ln();
        }
        let k = n / 2;
        let log_central = ln_choose(n, k) - n as f64 * std::f64::consts::LN_2;
        total += (log_pois + log_central).exp();
    }
    total.min(1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub n: usize,
    pub horizon: f64,
    pub replicas: usize,
    pub alpha_hat: f64,
    /// Bootstrap 95% interval; `None` with fewer than two replicas.
    pub ci: Option<Interval>,
}

pub fn estimate_alpha(n: usize, horizon: f64, replicas: usize, seed: u64) -> Result<AlphaEstimate> {
    if n < 3 {
        return Err(Error::Config(format!("speed estimation needs n >= 3, got {n}")));
    }
    if replicas == 0 || !(horizon > 0.0) {
        return Err(Error::Config("need replicas >= 1 and horizon > 0".into()));
    }
    let speeds: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| aux_simulate(n, horizon, rng::replica_seed(seed, i)).map(|a| a.final_front() as f64 / horizon))
        .collect::<Result<_>>()?;
    let alpha_hat = mean(&speeds);
    let ci = (replicas >= 2).then(|| bootstrap_ci(&speeds, mean, 2000, 0.95, seed ^ 0xa1fa));
    Ok(AlphaEstimate { n, horizon, replicas, alpha_hat, ci })
}

/// Outcome of one run of the front coupled with its auxiliary front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub n: usize,
    pub rho: f64,
    pub horizon: f64,
    pub real_front: i64,
    pub aux_front: i64,
    /// Levels `m` reached by the auxiliary front within the horizon.
    pub levels_checked: usize,
    /// Levels the auxiliary front reached strictly before the real one.
    pub violations: usize,
    /// `(level, real time, auxiliary time)` of the first violation.
    pub first_violation: Option<(i64, f64, f64)>,
    /// Driving-walk steps that went above the real front.
    pub overshoots: u64,
    /// Times the real front first reaches `1, 2, ...` within the horizon.
    pub real_hits: Vec<f64>,
    /// Times the auxiliary front first reaches `1, 2, ...`.
    pub aux_hits: Vec<f64>,
}

impl DominationReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }

    /// `(t, q, q_aux)` after every jump of either front.
    pub fn path(&self) -> Vec<(f64, i64, i64)> {
        let mut out = vec![(0.0, 0, 0)];
        let (mut i, mut j) = (0, 0);
        while i < self.real_hits.len() || j < self.aux_hits.len() {
            let a = self.real_hits.get(i).copied().unwrap_or(f64::INFINITY);
            let b = self.aux_hits.get(j).copied().unwrap_or(f64::INFINITY);
            let t = a.min(b);
            if a <= t {
                i += 1;
            }
            if b <= t {
                j += 1;
            }
            out.push((t, i as i64, j as i64));
        }
        out
    }
}

pub fn write_coupling_csv<W: std::io::Write>(report: &DominationReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "q_delta", "q_tilde"])?;
    for (t, q, qt) in report.path() {
        out.write_record([t.to_string(), q.to_string(), qt.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Rate-2 driving walk of one auxiliary walker, living in real time.
#[derive(Clone, Debug)]
struct Driver {
    birth: f64,
    start: i64,
    pos: i64,
    /// Real times of the first visits to `start + k + 1`.
    records: Vec<f64>,
    rng: ChaCha8Rng,
    gen: u32,
    glued: bool,
    retired: bool,
}

impl Driver {
    fn step(&mut self, up: bool, now: f64) {
        if up {
            self.pos += 1;
            if self.pos > self.start + self.records.len() as i64 {
                self.records.push(now);
            }
        } else {
            self.pos -= 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Due(f64, usize, u32);

impl Eq for Due {}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1)).then(self.2.cmp(&other.2))
    }
}

struct Coupler {
    n: usize,
    horizon: f64,
    drivers: Vec<Driver>,
    /// site -> driver using the rings of that site's active particle
    owner: HashMap<i64, usize>,
    /// site -> drivers running on their own stream there
    loose: HashMap<i64, Vec<usize>>,
    heap: BinaryHeap<Reverse<Due>>,
    seed: u64,
}

impl Coupler {
    fn retire_age(&self) -> f64 {
        self.horizon / self.n as f64
    }

    fn born(&mut self, x: i64, now: f64, zr: &LabeledZr) {
        let i = self.drivers.len();
        self.drivers.push(Driver {
            birth: now,
            start: x,
            pos: x,
            records: Vec::new(),
            rng: rng::stream(self.seed, WALKER_STREAM_BASE + x as u64),
            gen: 0,
            glued: false,
            retired: false,
        });
        self.place(i, now, zr, true);
    }

    /// Seats driver `i` at its position: glued when the site is occupied and
    /// unowned (or `claim` and the owner is older), loose otherwise.
    fn place(&mut self, i: usize, now: f64, zr: &LabeledZr, claim: bool) {
        let pos = self.drivers[i].pos;
        let occupied = zr.top_label_at(pos).is_some();
        let mut take = occupied && !self.owner.contains_key(&pos);
        if occupied && claim {
            if let Some(&j) = self.owner.get(&pos) {
                if j < i {
                    self.owner.remove(&pos);
                    self.loosen(j, now);
                    take = true;
                }
            }
        }
        if take {
            self.owner.insert(pos, i);
            let d = &mut self.drivers[i];
            d.glued = true;
            d.gen = d.gen.wrapping_add(1);
        } else {
            self.loosen(i, now);
        }
    }

    fn loosen(&mut self, i: usize, now: f64) {
        let d = &mut self.drivers[i];
        d.glued = false;
        d.gen = d.gen.wrapping_add(1);
        let t = now + rng::exp(&mut d.rng, 2.0);
        self.heap.push(Reverse(Due(t, i, d.gen)));
        self.loose.entry(d.pos).or_default().push(i);
    }

    fn unlist_loose(&mut self, i: usize, pos: i64) {
        if let Some(v) = self.loose.get_mut(&pos) {
            v.retain(|&j| j != i);
            if v.is_empty() {
                self.loose.remove(&pos);
            }
        }
    }

    fn should_retire(&self, i: usize, now: f64) -> bool {
        let d = &self.drivers[i];
        d.records.len() >= self.n || now - d.birth > self.retire_age()
    }

    /// Loose drivers sitting on `site` try to glue to it.
    fn refresh(&mut self, site: i64, now: f64, zr: &LabeledZr) {
        if self.owner.contains_key(&site) || zr.top_label_at(site).is_none() {
            return;
        }
        let Some(v) = self.loose.get(&site) else { return };
        let &i = v.iter().max().expect("non-empty list");
        self.unlist_loose(i, site);
        self.place(i, now, zr, false);
    }

    fn next_own(&mut self) -> f64 {
        while let Some(Reverse(Due(_, i, g))) = self.heap.peek() {
            let d = &self.drivers[*i];
            if d.gen == *g && !d.glued && !d.retired {
                break;
            }
            self.heap.pop();
        }
        self.heap.peek().map_or(f64::INFINITY, |d| d.0 .0)
    }
}

/// Runs the zero-range front from a single particle together with an
/// auxiliary front built on the same probability space, and checks
/// `q_t >= q~_t` at every jump of either front.
///
/// Walker `Z_x` is `W_x(sigma_x + u/n)` where `sigma_x` is the time the real
/// front first reaches `x` and `W_x` is a rate-2 symmetric walk started there.
/// `W_x` rides on the active particle of its site, using that particle's
/// rings, whenever no other driver holds the site; otherwise it uses its own
/// stream. Drivers never share a jump, so the walkers are independent with
/// the right law. A hit of level `m` by `Z_x` at age `u` is a hit by `W_x` at
/// real time `sigma_x + u/n`, which the real front has matched unless `W_x`
/// was above it. The check is made on the realised paths.
pub fn dominated_coupling_run(n: usize, rho: f64, horizon: f64, seed: u64) -> Result<DominationReport> {
    if n < 3 {
        return Err(Error::Config(format!("domination runs need n >= 3, got {n}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("domination runs need 0 <= rho < 1 (q is identically 0 at rho = 1), got {rho}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Config("horizon must be >= 0".into()));
    }
    let mut zr = LabeledZr::new(&LabeledState::single(), rho, seed, DEFAULT_DEPTH)?;
    let mut c = Coupler {
        n,
        horizon,
        drivers: Vec::new(),
        owner: HashMap::new(),
        loose: HashMap::new(),
        heap: BinaryHeap::new(),
        seed,
    };
    let mut sigma = vec![0.0];
    let mut overshoots = 0u64;
    c.born(0, 0.0, &zr);
    let real_end = horizon;
    loop {
        let own = c.next_own();
        let real = zr.peek_time();
        let next = own.min(real);
        if next > real_end {
            break;
        }
        if own < real {
            let Reverse(Due(t, i, _)) = c.heap.pop().expect("peeked");
            let from = c.drivers[i].pos;
            c.unlist_loose(i, from);
            let up = c.drivers[i].rng.random::<f64>() >= 0.5;
            c.drivers[i].step(up, t);
            if up && c.drivers[i].pos > zr.zfront() {
                overshoots += 1;
            }
            if c.should_retire(i, t) {
                c.drivers[i].retired = true;
                continue;
            }
            c.place(i, t, &zr, false);
            continue;
        }
        let ring = zr.ring_until(real_end).expect("ring due before the end");
        let now = zr.time();
        let from = ring.from;
        if let Some(i) = c.owner.remove(&from) {
            c.drivers[i].step(ring.right, now);
            if c.drivers[i].pos > zr.zfront() {
                overshoots += 1;
            }
            if c.should_retire(i, now) {
                c.drivers[i].retired = true;
            } else {
                c.place(i, now, &zr, false);
            }
        }
        if let LabeledEvent::FrontMove { to, .. } = ring.event {
            sigma.push(now);
            c.born(to, now, &zr);
        }
        let to = ring.event.moved().1;
        c.refresh(to, now, &zr);
        c.refresh(from, now, &zr);
    }
    let real_front = zr.zfront();

    // Aux hit time of `x + k + 1` by walker `x`, within aux age `horizon`.
    let age_cap = horizon / n as f64;
    let mut extra: Vec<Walker> = Vec::new();
    let rate = 2.0 / n as f64;
    let mut hit = |x: i64, k: usize, c: &mut Coupler| -> Option<f64> {
        if let Some(d) = c.drivers.get_mut(x as usize) {
            // continue on the own stream past the end of the real run
            let mut t = real_end.max(d.birth);
            while d.records.len() <= k && d.records.len() < n {
                t += rng::exp(&mut d.rng, 2.0);
                if t - d.birth > age_cap {
                    break;
                }
                let up = d.rng.random::<f64>() >= 0.5;
                d.step(up, t);
            }
            return d.records.get(k).map(|&r| (r - d.birth) * n as f64);
        }
        let i = (x - real_front - 1) as usize;
        while extra.len() <= i {
            let start = real_front + 1 + extra.len() as i64;
            extra.push(Walker::new(seed, start, rate));
        }
        extra[i].hit(x + k as i64 + 1, horizon)
    };

    let mut aux = 0.0;
    let mut aux_hits = Vec::new();
    let mut levels = 0usize;
    let mut violations = 0usize;
    let mut first = None;
    let mut m: i64 = 1;
    loop {
        let lo = (m - n as i64).max(0);
        let mut best = f64::INFINITY;
        for x in lo..m {
            if let Some(t) = hit(x, (m - x - 1) as usize, &mut c) {
                best = best.min(t);
            }
        }
        if !(aux + best <= horizon) {
            break;
        }
        aux += best;
        aux_hits.push(aux);
        levels += 1;
        let real = sigma.get(m as usize).copied().unwrap_or(f64::INFINITY);
        if real > aux {
            violations += 1;
            first.get_or_insert((m, real, aux));
        }
        m += 1;
    }
    Ok(DominationReport {
        n,
        rho,
        horizon,
        real_front,
        aux_front: levels as i64,
        levels_checked: levels,
        violations,
        first_violation: first,
        overshoots,
        real_hits: sigma[1..].to_vec(),
        aux_hits,
    })
}
