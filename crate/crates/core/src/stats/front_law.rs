//! Law of the configuration seen from the front.
//!
//! `mu_t` is the across-replica law of the width-`l` front word at time `t`
//! (front site first). `mu_inf` is the time average of the same word over
//! regeneration cycles `N >= n_min`, pooled over replicas.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeled::LabeledZr;
use crate::lattice::{self, front_window, word_string, FrontState, InitialCondition, SimConfig, Simulation};
use crate::regen::alt::{detect_kappa_alt_with, HoleLabeled, HoleLabeledState};
use crate::regen::zr::detect_kappa_zr_with;
use crate::regen::{regen_run, RegenMode, RegenParams};
use crate::rng;
use crate::zero_range::{zr_enabled_events, ZeroRangeState};

use super::basic::{bootstrap_indices, tv_distance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontLawHistogram {
    pub width: usize,
    /// `t=...` or `cycles>=...`.
    pub tag: String,
    /// Probability per word, front site first.
    pub weights: BTreeMap<String, f64>,
    /// Replicas (for `mu_t`) or total averaging time (for `mu_inf`).
    pub mass: f64,
}

impl FrontLawHistogram {
    fn from_counts(width: usize, tag: String, counts: BTreeMap<String, f64>) -> Self {
        let mass: f64 = counts.values().sum();
        let weights = counts.into_iter().map(|(k, v)| (k, v / mass)).collect();
        Self { width, tag, weights, mass }
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn tv(&self, other: &FrontLawHistogram) -> f64 {
        tv_distance(&self.weights, &other.weights)
    }
}

/// Width-`l` front word of the zero-range engine, read back through the bijection.
pub fn zr_front_word(zr: &LabeledZr, width: usize) -> Vec<u8> {
    let mut word = Vec::with_capacity(width);
    let q = zr.zfront();
    let mut k = 0;
    while word.len() < width {
        let h = zr.labels_at(q - k).len();
        word.extend(std::iter::repeat_n(1u8, h.min(width - word.len())));
        if word.len() < width {
            word.push(0);
        }
        k += 1;
    }
    word
}

pub fn hole_front_word(state: &HoleLabeledState, width: usize) -> Vec<u8> {
    state.contents.iter().take(width).map(|c| u8::from(c.is_particle())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeLaw {
    pub histograms: Vec<FrontLawHistogram>,
    /// Words per replica and time, kept for resampling.
    pub words: Vec<Vec<String>>,
    /// Runs in which taint reached the front at least once.
    pub runs_with_boundary_events: usize,
}

fn reject_empty(config: &SimConfig) -> Result<()> {
    let empty = match &config.initial {
        InitialCondition::Word(w) => !w.contains(&1),
        InitialCondition::Single | InitialCondition::Bernoulli(_) => false,
    };
    if empty {
        return Err(Error::Config(
            "empty start: the only law reachable from it is the trivial invariant measure supported on the \
             configuration with no particles"
                .into(),
        ));
    }
    Ok(())
}

/// Engine used for the fixed-time snapshots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrontEngine {
    /// Exclusion lattice with taint tracking.
    #[default]
    Lattice,
    /// Hole engine: same exclusion dynamics, no taint tracking, about four times faster.
    Holes,
}

impl std::str::FromStr for FrontEngine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" => Ok(Self::Lattice),
            "holes" => Ok(Self::Holes),
            _ => Err(Error::Config(format!("unknown front engine {s:?} (lattice | holes)"))),
        }
    }
}

/// Across-replica law of the front word at each of `times`.
pub fn mu_t(
    config: &SimConfig,
    width: usize,
    times: &[f64],
    replicas: usize,
    engine: FrontEngine,
    seed: u64,
) -> Result<TimeLaw> {
    reject_empty(config)?;
    config.validate()?;
    if width > config.window {
        return Err(Error::WidthTooLarge { width, window: config.window });
    }
    if engine == FrontEngine::Holes && config.initial != InitialCondition::Single {
        return Err(Error::Config("the hole engine starts from a single particle only".into()));
    }
    let runs: Vec<(Vec<String>, bool)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let s = rng::replica_seed(seed, i);
            let mut words = Vec::with_capacity(times.len());
            match engine {
                FrontEngine::Lattice => {
                    let mut c = config.clone();
                    c.seed = s;
                    let mut sim = Simulation::new(&c)?;
                    for &t in times {
                        while sim.step_until(t)?.is_some() {}
                        words.push(word_string(&front_window(sim.state(), width)?));
                    }
                    Ok((words, sim.state().boundary_events > 0))
                }
                FrontEngine::Holes => {
                    let mut sim = HoleLabeled::new(HoleLabeledState::single(config.window), config.rho, s)?;
                    for &t in times {
                        while sim.step_until(t).is_some() {}
                        words.push(word_string(&hole_front_word(sim.state(), width)));
                    }
                    Ok((words, false))
                }
            }
        })
        .collect::<Result<_>>()?;
    let histograms = times
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let mut counts = BTreeMap::new();
            for (w, _) in &runs {
                *counts.entry(w[j].clone()).or_insert(0.0) += 1.0;
            }
            FrontLawHistogram::from_counts(width, format!("t={t}"), counts)
        })
        .collect();
    Ok(TimeLaw {
        histograms,
        runs_with_boundary_events: runs.iter().filter(|r| r.1).count(),
        words: runs.into_iter().map(|r| r.0).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLaw {
    pub histogram: FrontLawHistogram,
    pub n_min: usize,
    /// Replicas that reached cycle `n_min` and another regeneration after it.
    pub replicas_used: usize,
    pub cycles_used: usize,
}

/// `N_min = ceil(width / (alpha2 - alpha1))`.
pub fn default_n_min(params: &RegenParams, width: usize) -> usize {
    (width as f64 / (params.alpha2 - params.alpha1)).ceil() as usize
}

/// Time average of the front word over cycles `[kappa_N, kappa_{N+1})`, `N >= n_min`.
/// Each replica is run twice with the same seed: once to find the
/// regeneration times, once to integrate between them.
pub fn mu_inf(params: &RegenParams, width: usize, replicas: usize, n_min: usize, seed: u64) -> Result<CycleLaw> {
    let per: Vec<(BTreeMap<String, f64>, usize)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let s = rng::replica_seed(seed, i);
            let times = regen_run(params, s, i)?.regeneration_times();
            // kappa_N is times[N - 1]
            let from_idx = n_min.max(1) - 1;
            if times.len() < from_idx + 2 {
                return Ok((BTreeMap::new(), 0));
            }
            let (a, b) = (times[from_idx], *times.last().expect("non-empty"));
            let mut acc: BTreeMap<String, f64> = BTreeMap::new();
            let mut add = |t0: f64, t1: f64, word: Vec<u8>| {
                let dt = t1.min(b) - t0.max(a);
                if dt > 0.0 {
                    *acc.entry(word_string(&word)).or_insert(0.0) += dt;
                }
            };
            match params.mode {
                RegenMode::ZrStoppingTimes => {
                    let mut obs = |t0: f64, t1: f64, zr: &LabeledZr| {
                        if t1 > a && t0 < b {
                            add(t0, t1, zr_front_word(zr, width));
                        }
                    };
                    detect_kappa_zr_with(params, s, i, Some(&mut obs))?;
                }
                RegenMode::AltHoles => {
                    let mut obs = |t0: f64, t1: f64, st: &HoleLabeledState| {
                        if t1 > a && t0 < b {
                            add(t0, t1, hole_front_word(st, width));
                        }
                    };
                    detect_kappa_alt_with(params, s, i, Some(&mut obs))?;
                }
            }
            Ok((acc, times.len() - 1 - from_idx))
        })
        .collect::<Result<_>>()?;
    let mut counts = BTreeMap::new();
    for (acc, _) in &per {
        for (k, v) in acc {
            *counts.entry(k.clone()).or_insert(0.0) += v;
        }
    }
    if counts.is_empty() {
        return Err(Error::Insufficient(format!("no replica completed a cycle after cycle {n_min}")));
    }
    Ok(CycleLaw {
        histogram: FrontLawHistogram::from_counts(width, format!("cycles>={n_min}"), counts),
        n_min,
        replicas_used: per.iter().filter(|p| p.1 > 0).count(),
        cycles_used: per.iter().map(|p| p.1).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvRow {
    pub t: f64,
    pub tv: f64,
    /// Bootstrap standard error over replicas.
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontLawReport {
    pub width: usize,
    pub mu_t: Vec<FrontLawHistogram>,
    pub mu_inf: FrontLawHistogram,
    pub tv: Vec<TvRow>,
    pub runs_with_boundary_events: usize,
    pub replicas: usize,
    pub cycles_used: usize,
    pub n_min: usize,
}

impl FrontLawReport {
    /// Each step may rise by at most `k` combined standard errors.
    pub fn decreasing_within(&self, k: f64) -> bool {
        self.tv.windows(2).all(|w| w[1].tv <= w[0].tv + k * w[0].se.hypot(w[1].se))
    }
}

pub fn tv_table(law: &TimeLaw, inf: &FrontLawHistogram, times: &[f64], resamples: usize, seed: u64) -> Vec<TvRow> {
    let n = law.words.len();
    times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let tv = law.histograms[j].tv(inf);
            let ci = bootstrap_indices(n, resamples, 0.6827, seed ^ j as u64, |idx| {
                let mut counts = BTreeMap::new();
                for &i in idx {
                    *counts.entry(law.words[i][j].clone()).or_insert(0.0) += 1.0;
                }
                FrontLawHistogram::from_counts(inf.width, String::new(), counts).tv(inf)
            });
            TvRow { t, tv, se: (ci.hi - ci.lo) / 2.0 }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontLawOptions {
    pub width: usize,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub engine: FrontEngine,
    pub cycle_replicas: usize,
    /// `None` means [`default_n_min`].
    pub n_min: Option<usize>,
    pub resamples: usize,
}

impl Default for FrontLawOptions {
    fn default() -> Self {
        Self {
            width: 6,
            times: vec![1e2, 1e3, 1e4],
            replicas: 1000,
            engine: FrontEngine::Lattice,
            cycle_replicas: 64,
            n_min: None,
            resamples: 200,
        }
    }
}

/// Fixed-time snapshots against the cycle average.
pub fn front_law(config: &SimConfig, params: &RegenParams, opts: &FrontLawOptions, seed: u64) -> Result<FrontLawReport> {
    let n_min = opts.n_min.unwrap_or_else(|| default_n_min(params, opts.width));
    let law = mu_t(config, opts.width, &opts.times, opts.replicas, opts.engine, seed)?;
    let inf = mu_inf(params, opts.width, opts.cycle_replicas, n_min, seed ^ 0x5eed)?;
    let tv = tv_table(&law, &inf.histogram, &opts.times, opts.resamples, seed);
    Ok(FrontLawReport {
        width: opts.width,
        tv,
        mu_t: law.histograms,
        mu_inf: inf.histogram,
        runs_with_boundary_events: law.runs_with_boundary_events,
        replicas: opts.replicas,
        cycles_used: inf.cycles_used,
        n_min,
    })
}

/// The configuration with no particles admits no transition in either picture.
pub fn empty_is_absorbing(window: usize, rho: f64) -> bool {
    let empty = FrontState::from_word(&vec![0; window + 1], window, lattice::BoundaryPolicy::Frozen);
    let zr = ZeroRangeState { zfront: 0, counter: 0, stacks: vec![0; window] };
    lattice::enabled_events(&empty, rho).is_empty() && zr_enabled_events(&zr, rho).is_empty()
}

pub fn write_histograms_csv<W: std::io::Write>(hists: &[&FrontLawHistogram], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tag", "width", "word", "weight"])?;
    for h in hists {
        for (k, v) in &h.weights {
            out.write_record([h.tag.clone(), h.width.to_string(), k.clone(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeled::LabeledState;

    #[test]
    fn histograms_normalise_and_tv_is_zero_on_itself() {
        let h = FrontLawHistogram::from_counts(
            2,
            "x".into(),
            BTreeMap::from([("10".into(), 3.0), ("11".into(), 1.0)]),
        );
        assert!((h.total() - 1.0).abs() < 1e-12);
        assert_eq!(h.tv(&h), 0.0);
    }

    #[test]
    fn zr_word_matches_lattice_word() {
        // one particle: word is 1 then zeros
        let zr = LabeledZr::new(&LabeledState::single(), 0.5, 1, 16).unwrap();
        assert_eq!(zr_front_word(&zr, 4), vec![1, 0, 0, 0]);
        let mut st = LabeledState::single();
        st.particles.insert(1, 0);
        st.particles.insert(2, -1);
        st.counter = 2;
        let zr = LabeledZr::new(&st, 0.5, 1, 16).unwrap();
        assert_eq!(zr_front_word(&zr, 5), vec![1, 1, 0, 1, 0]);
    }

    #[test]
    fn engines_agree_at_short_times() {
        // 1 - P[front site empty at t] has no closed form, so compare the two engines
        let cfg = SimConfig { window: 16, ..Default::default() };
        let a = mu_t(&cfg, 3, &[2.0], 3000, FrontEngine::Lattice, 1).unwrap();
        let b = mu_t(&cfg, 3, &[2.0], 3000, FrontEngine::Holes, 2).unwrap();
        assert!(a.histograms[0].tv(&b.histograms[0]) < 0.06);
    }

    #[test]
    fn empty_start_rejected_and_absorbing() {
        let cfg = SimConfig {
            initial: InitialCondition::Word(vec![0, 0, 0]),
            allow_empty: true,
            window: 8,
            ..Default::default()
        };
        let err = mu_t(&cfg, 3, &[1.0], 2, FrontEngine::Lattice, 1).unwrap_err();
        assert!(err.to_string().contains("no particles"));
        assert!(empty_is_absorbing(8, 0.5));
    }
}
