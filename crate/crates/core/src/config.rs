//! Flat `key = value` run configuration and the run manifest.
//!
//! Every key can also be given as a command-line flag (`alpha1` as
//! `--alpha1`, `out_dir` as `--out-dir`); flags win over the file. Optional
//! keys take the value `auto`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryPolicy, InitialCondition, SimConfig};
use crate::regen::{FrontRule, OriginClause, RegenMode, RegenParams};
use crate::stats::front_law::FrontEngine;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub rho: f64,
    pub window: usize,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    /// Auxiliary speed used to derive unset `alpha1`, `alpha2`; estimated when `auto`.
    pub alpha_hat: Option<f64>,
    pub guard: Option<f64>,
    pub mode: RegenMode,
    pub origin: OriginClause,
    pub front_rule: FrontRule,
    pub depth: usize,
    pub format: Format,
    pub out_dir: String,
    pub width: usize,
    pub times: Vec<f64>,
    pub engine: FrontEngine,
    pub n_min: Option<usize>,
    pub cycle_replicas: usize,
    pub initial: InitialCondition,
    pub boundary: BoundaryPolicy,
    pub aux_n: usize,
    pub aux_horizon: f64,
    pub aux_replicas: usize,
    pub p_left: f64,
    pub steps: usize,
    pub every_event: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            window: 512,
            horizon: 1e4,
            replicas: 100,
            seed: 0,
            alpha1: None,
            alpha2: None,
            alpha_hat: None,
            guard: None,
            mode: RegenMode::ZrStoppingTimes,
            origin: OriginClause::Exposure,
            front_rule: FrontRule::Fresh,
            depth: crate::labeled::DEFAULT_DEPTH,
            format: Format::Csv,
            out_dir: "out".into(),
            width: 6,
            times: vec![1e2, 1e3, 1e4],
            engine: FrontEngine::Lattice,
            n_min: None,
            cycle_replicas: 64,
            initial: InitialCondition::Single,
            boundary: BoundaryPolicy::Frozen,
            aux_n: 3,
            aux_horizon: 500.0,
            aux_replicas: 200,
            p_left: 1.0 / 3.0,
            steps: 100,
            every_event: false,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".into(), T::to_string)
}

pub fn parse_initial(v: &str) -> Result<InitialCondition> {
    match v.split_once(':') {
        None if v == "single" => Ok(InitialCondition::Single),
        Some(("bernoulli", d)) => Ok(InitialCondition::Bernoulli(num("initial", d)?)),
        Some(("word", w)) => w
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Config(format!("initial word must be 0/1, got `{w}`"))),
            })
            .collect::<Result<_>>()
            .map(InitialCondition::Word),
        _ => Err(Error::Config(format!("unknown initial condition `{v}` (single | bernoulli:D | word:0101)"))),
    }
}

fn show_initial(i: &InitialCondition) -> String {
    match i {
        InitialCondition::Single => "single".into(),
        InitialCondition::Bernoulli(d) => format!("bernoulli:{d}"),
        InitialCondition::Word(w) => format!("word:{}", crate::lattice::word_string(w)),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got `{line}`", i + 1)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "rho" => self.rho = num(key, v)?,
            "window" => self.window = num(key, v)?,
            "horizon" => self.horizon = num(key, v)?,
            "replicas" => self.replicas = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "alpha1" => self.alpha1 = opt(key, v)?,
            "alpha2" => self.alpha2 = opt(key, v)?,
            "alpha_hat" => self.alpha_hat = opt(key, v)?,
            "guard" => self.guard = opt(key, v)?,
            "mode" => self.mode = v.parse()?,
            "origin" => self.origin = v.parse()?,
            "front_rule" => self.front_rule = v.parse()?,
            "depth" => self.depth = num(key, v)?,
            "format" => {
                self.format = match v {
                    "csv" => Format::Csv,
                    "jsonl" => Format::Jsonl,
                    _ => return Err(Error::Config(format!("unknown format `{v}` (csv | jsonl)"))),
                }
            }
            "out_dir" => self.out_dir = v.to_string(),
            "width" => self.width = num(key, v)?,
            "times" => self.times = v.split(',').map(|x| num(key, x.trim())).collect::<Result<_>>()?,
            "engine" => self.engine = v.parse()?,
            "n_min" => self.n_min = opt(key, v)?,
            "cycle_replicas" => self.cycle_replicas = num(key, v)?,
            "initial" => self.initial = parse_initial(v)?,
            "boundary" => self.boundary = v.parse()?,
            "aux_n" => self.aux_n = num(key, v)?,
            "aux_horizon" => self.aux_horizon = num(key, v)?,
            "aux_replicas" => self.aux_replicas = num(key, v)?,
            "p_left" => self.p_left = num(key, v)?,
            "steps" => self.steps = num(key, v)?,
            "every_event" => self.every_event = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Every key with its resolved value, in the file syntax.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let name = |s: &str| s.to_string();
        let pairs: Vec<(&str, String)> = vec![
            ("rho", self.rho.to_string()),
            ("window", self.window.to_string()),
            ("horizon", self.horizon.to_string()),
            ("replicas", self.replicas.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha1", show(&self.alpha1)),
            ("alpha2", show(&self.alpha2)),
            ("alpha_hat", show(&self.alpha_hat)),
            ("guard", show(&self.guard)),
            ("mode", self.mode.to_string()),
            (
                "origin",
                name(match self.origin {
                    OriginClause::Exposure => "exposure",
                    OriginClause::AttemptOrigin => "attempt_origin",
                    OriginClause::AbsoluteOrigin => "absolute_origin",
                    OriginClause::Off => "off",
                }),
            ),
            (
                "front_rule",
                name(match self.front_rule {
                    FrontRule::Fresh => "fresh",
                    FrontRule::LeadingWalk => "leading_walk",
                }),
            ),
            ("depth", self.depth.to_string()),
            (
                "format",
                name(match self.format {
                    Format::Csv => "csv",
                    Format::Jsonl => "jsonl",
                }),
            ),
            ("out_dir", self.out_dir.clone()),
            ("width", self.width.to_string()),
            ("times", self.times.iter().map(f64::to_string).collect::<Vec<_>>().join(",")),
            (
                "engine",
                name(match self.engine {
                    FrontEngine::Lattice => "lattice",
                    FrontEngine::Holes => "holes",
                }),
            ),
            ("n_min", show(&self.n_min)),
            ("cycle_replicas", self.cycle_replicas.to_string()),
            ("initial", show_initial(&self.initial)),
            (
                "boundary",
                name(match self.boundary {
                    BoundaryPolicy::Frozen => "frozen",
                    BoundaryPolicy::Reflecting => "reflecting",
                }),
            ),
            ("aux_n", self.aux_n.to_string()),
            ("aux_horizon", self.aux_horizon.to_string()),
            ("aux_replicas", self.aux_replicas.to_string()),
            ("p_left", self.p_left.to_string()),
            ("steps", self.steps.to_string()),
            ("every_event", self.every_event.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            rho: self.rho,
            window: self.window,
            horizon: self.horizon,
            seed: self.seed,
            initial: self.initial.clone(),
            boundary: self.boundary,
            degenerate: self.rho == 0.0 || self.rho == 1.0,
            allow_empty: false,
        }
    }

    /// Detector parameters; `alpha_hat` must be known when either slope is unset.
    pub fn regen_params(&self, alpha_hat: Option<f64>) -> Result<RegenParams> {
        let (a1, a2) = match (self.alpha1, self.alpha2, alpha_hat.or(self.alpha_hat)) {
            (Some(a1), Some(a2), _) => (a1, a2),
            (a1, a2, Some(ah)) => (a1.unwrap_or(0.3 * ah), a2.unwrap_or(0.8 * ah)),
            _ => return Err(Error::Config("alpha1 and alpha2 need alpha_hat".into())),
        };
        let mut p = RegenParams::new(self.rho, a1, a2, self.horizon)?;
        if let Some(g) = self.guard {
            p.guard = g;
        }
        p.mode = self.mode;
        p.origin = self.origin;
        p.front_rule = self.front_rule;
        p.depth = self.depth;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<OutputDigest>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn digest_file(dir: &Path, name: &str) -> Result<OutputDigest> {
    let bytes = std::fs::read(dir.join(name))?;
    Ok(OutputDigest { path: name.to_string(), sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 })
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, dir: &Path, files: &[String]) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: config.to_map(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: files.iter().map(|f| digest_file(dir, f)).collect::<Result<_>>()?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let f = std::fs::File::create(dir.join(MANIFEST_FILE))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }

    /// Config pairs for a re-run, without the output directory.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.config.iter().filter(|(k, _)| k.as_str() != "out_dir").map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}
