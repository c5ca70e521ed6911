//! Command-line driver. Exit codes: 0 success, 1 I/O failure, 2 configuration
//! error, 3 runtime diagnostic failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::auxiliary::{dominated_coupling_run, estimate_alpha, write_coupling_csv};
use crate::config::{parse_kv, Format, RunConfig, RunManifest};
use crate::error::{Error, Result};
use crate::lattice::{simulate, RecorderSpec};
use crate::map_check::{bijection_check, commutation_check, degenerate_check, write_checks_csv};
use crate::regen::demo::rw_regeneration_demo;
use crate::regen::tails::{tail_report, write_tails_csv};
use crate::regen::{regen_replicas, write_records_csv, RegenParams, RegenRun};
use crate::rng;
use crate::stats::diagnostics::{iid_diagnostics, limit_diagnostics, write_variance_csv};
use crate::stats::estimates::{cycle_estimates, slope_estimates, write_estimates_csv, EstimateOptions};
use crate::stats::front_law::{front_law, mu_inf, write_histograms_csv, FrontLawOptions};

#[derive(Parser, Debug)]
#[command(name = "exfront", version, about = "Exact simulation and regeneration statistics for an exclusion-driven front")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lattice trajectories: front events and front-window snapshots.
    Simulate(Flags),
    /// Round trips of the zero-range recoding, event commutation, degenerate rates.
    MapCheck(Flags),
    /// Regeneration records from the chosen detector.
    Regen(Flags),
    /// Ratio and slope estimates of the speeds and variance rates.
    Estimate(Flags),
    /// Law of the front window at fixed times against the cycle average.
    Frontlaw(Flags),
    /// Auxiliary front speed and the domination coupling.
    Aux(Flags),
    /// Survival curves of the attempt clocks and of the cycle length.
    Tails(Flags),
    /// Regeneration demo for a biased random walk.
    Rwdemo(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::MapCheck(_) => "map-check",
            Command::Regen(_) => "regen",
            Command::Estimate(_) => "estimate",
            Command::Frontlaw(_) => "frontlaw",
            Command::Aux(_) => "aux",
            Command::Tails(_) => "tails",
            Command::Rwdemo(_) => "rwdemo",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Simulate(f)
            | Command::MapCheck(f)
            | Command::Regen(f)
            | Command::Estimate(f)
            | Command::Frontlaw(f)
            | Command::Aux(f)
            | Command::Tails(f)
            | Command::Rwdemo(f) => f,
        }
    }
}

/// Values are parsed by the same code as the config file.
#[derive(Args, Debug, Default)]
struct Flags {
    /// `key = value` file, or a manifest to re-run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    alpha1: Option<String>,
    #[arg(long)]
    alpha2: Option<String>,
    #[arg(long)]
    alpha_hat: Option<String>,
    #[arg(long)]
    guard: Option<String>,
    /// zr_stopping_times | alt_holes
    #[arg(long)]
    mode: Option<String>,
    /// exposure | attempt_origin | absolute_origin | off
    #[arg(long)]
    origin: Option<String>,
    /// fresh | leading_walk
    #[arg(long)]
    front_rule: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    /// csv | jsonl
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    width: Option<String>,
    /// Comma-separated times.
    #[arg(long)]
    times: Option<String>,
    /// lattice | holes
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    n_min: Option<String>,
    #[arg(long)]
    cycle_replicas: Option<String>,
    /// single | bernoulli:D | word:0101
    #[arg(long)]
    initial: Option<String>,
    /// frozen | reflecting
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    aux_n: Option<String>,
    #[arg(long)]
    aux_horizon: Option<String>,
    #[arg(long)]
    aux_replicas: Option<String>,
    #[arg(long)]
    p_left: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    every_event: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(String, String)> {
        let all = [
            ("rho", &self.rho),
            ("window", &self.window),
            ("horizon", &self.horizon),
            ("replicas", &self.replicas),
            ("seed", &self.seed),
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
            ("alpha_hat", &self.alpha_hat),
            ("guard", &self.guard),
            ("mode", &self.mode),
            ("origin", &self.origin),
            ("front_rule", &self.front_rule),
            ("depth", &self.depth),
            ("format", &self.format),
            ("out_dir", &self.out_dir),
            ("width", &self.width),
            ("times", &self.times),
            ("engine", &self.engine),
            ("n_min", &self.n_min),
            ("cycle_replicas", &self.cycle_replicas),
            ("initial", &self.initial),
            ("boundary", &self.boundary),
            ("aux_n", &self.aux_n),
            ("aux_horizon", &self.aux_horizon),
            ("aux_replicas", &self.aux_replicas),
            ("p_left", &self.p_left),
            ("steps", &self.steps),
            ("every_event", &self.every_event),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

fn resolve(cmd: &Command) -> Result<RunConfig> {
    let flags = cmd.flags();
    let mut cfg = RunConfig::default();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let m: RunManifest = serde_json::from_str(&text)?;
            if m.command != cmd.name() {
                return Err(Error::Config(format!("manifest is for `{}`, not `{}`", m.command, cmd.name())));
            }
            cfg.apply(&m.pairs())?;
        } else {
            cfg.apply(&parse_kv(&text)?)?;
        }
    }
    cfg.apply(&flags.pairs())?;
    Ok(cfg)
}

/// Files written by a command, plus a diagnostic failure message if any.
struct Outcome {
    files: Vec<String>,
    failure: Option<String>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, v)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn done(self, failure: Option<String>) -> Outcome {
        Outcome { files: self.files, failure }
    }
}

fn alpha_hat(cfg: &mut RunConfig) -> Result<f64> {
    if let Some(a) = cfg.alpha_hat {
        return Ok(a);
    }
    let est = estimate_alpha(cfg.aux_n, cfg.aux_horizon, cfg.aux_replicas, cfg.seed ^ 0xa1)?;
    cfg.alpha_hat = Some(est.alpha_hat);
    Ok(est.alpha_hat)
}

fn params(cfg: &mut RunConfig) -> Result<RegenParams> {
    if cfg.alpha1.is_some() && cfg.alpha2.is_some() {
        return cfg.regen_params(None);
    }
    let ah = alpha_hat(cfg)?;
    let p = cfg.regen_params(Some(ah))?;
    p.check_against(ah)?;
    Ok(p)
}

fn write_records(out: &mut Out, cfg: &RunConfig, runs: &[RegenRun]) -> Result<()> {
    let records: Vec<_> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
    match cfg.format {
        Format::Csv => write_records_csv(&records, out.create("records.csv")?),
        Format::Jsonl => {
            let mut w = out.create("records.jsonl")?;
            for r in &records {
                serde_json::to_writer(&mut w, r)?;
                writeln!(w)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_simulate(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let sim = cfg.sim_config();
    let rec = RecorderSpec { every_event: cfg.every_event, ..RecorderSpec::standard(cfg.horizon, cfg.width) };
    let trajs: Vec<_> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = sim.clone();
            c.seed = rng::replica_seed(cfg.seed, i);
            simulate(&c, &rec)
        })
        .collect::<Result<_>>()?;
    match cfg.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out.create("trajectory.csv")?);
            w.write_record(["replica", "t", "kind", "r", "p"])?;
            for (i, tr) in trajs.iter().enumerate() {
                for e in &tr.records {
                    w.write_record([i.to_string(), e.t.to_string(), e.kind.clone(), e.r.to_string(), e.p.to_string()])?;
                }
            }
            w.flush()?;
            let mut w = csv::Writer::from_writer(out.create("snapshots.csv")?);
            w.write_record(["replica", "t", "window"])?;
            for (i, tr) in trajs.iter().enumerate() {
                for s in &tr.snapshots {
                    w.write_record([i.to_string(), s.t.to_string(), s.window.clone()])?;
                }
            }
            w.flush()?;
        }
        Format::Jsonl => {
            for (i, tr) in trajs.iter().enumerate() {
                let mut w = out.create(&format!("trajectory_{i:04}.jsonl"))?;
                tr.write_jsonl(&mut w)?;
                w.flush()?;
            }
        }
    }
    let boundary: u64 = trajs.iter().map(|t| t.final_state.boundary_events).sum();
    out.json(
        "simulate_summary.json",
        &serde_json::json!({
            "replicas": trajs.len(),
            "events": trajs.iter().map(|t| t.events).sum::<u64>(),
            "boundary_events": boundary,
            "runs_with_boundary_events": trajs.iter().filter(|t| t.final_state.boundary_events > 0).count(),
        }),
    )?;
    Ok(out.done(None))
}

fn cmd_map_check(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let mut rows = bijection_check(cfg.replicas as u64 * 1000, cfg.window.min(64), cfg.seed)?;
    rows.push(commutation_check(cfg.replicas as u64, 1000, cfg.window.min(64), cfg.rho, cfg.seed ^ 1)?);
    let h = cfg.horizon.min(200.0);
    let reps = (cfg.replicas as u64).clamp(1, 20);
    rows.push(degenerate_check(1.0, cfg.window.min(64), h, reps, cfg.seed ^ 2)?);
    rows.push(degenerate_check(0.0, cfg.window.min(64), h, reps, cfg.seed ^ 3)?);
    write_checks_csv(&rows, out.create("map_check.csv")?)?;
    let failed: Vec<String> = rows.iter().filter(|r| !r.passed()).map(|r| format!("{} ({} failures)", r.check, r.failures)).collect();
    Ok(out.done((!failed.is_empty()).then(|| format!("map checks failed: {}", failed.join(", ")))))
}

fn cmd_regen(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let p = params(cfg)?;
    let runs = regen_replicas(&p, cfg.replicas, cfg.seed)?;
    write_records(&mut out, cfg, &runs)?;
    out.json(
        "regen_summary.json",
        &serde_json::json!({
            "mode": p.mode.to_string(),
            "alpha1": p.alpha1,
            "alpha2": p.alpha2,
            "guard": p.guard,
            "replicas": runs.len(),
            "confirmed_iid_cycles": crate::regen::iid_records(&runs).len(),
            "censoring_fraction": crate::regen::censoring_fraction(&runs),
        }),
    )?;
    Ok(out.done(None))
}

fn cmd_estimate(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let p = params(cfg)?;
    let runs = regen_replicas(&p, cfg.replicas, cfg.seed)?;
    write_records(&mut out, cfg, &runs)?;
    let records: Vec<_> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let est = cycle_estimates(&records, &EstimateOptions { seed: cfg.seed, ..Default::default() })?;
    write_estimates_csv(&est, out.create("estimates.csv")?)?;
    let slope = slope_estimates(&runs)?;
    let iid = iid_diagnostics(&runs).ok();
    let grid: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|d| cfg.horizon / d).collect();
    let lim = limit_diagnostics(&cfg.sim_config(), cfg.engine, cfg.replicas, &grid, cfg.seed ^ 7).ok();
    if let Some(l) = &lim {
        write_variance_csv(l, out.create("variance.csv")?)?;
    }
    let agree_v = slope.v_hat.agrees_with(&est.v_hat, 3.0);
    let agree_w = slope.w_hat.agrees_with(&est.w_hat, 3.0);
    out.json("estimates.json", &serde_json::json!({ "ratio": est, "slope": slope, "iid": iid, "limit": lim }))?;
    Ok(out.done((!(agree_v && agree_w)).then(|| "slope and ratio estimates disagree by more than 3 SE".to_string())))
}

fn cmd_frontlaw(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let p = params(cfg)?;
    let opts = FrontLawOptions {
        width: cfg.width,
        times: cfg.times.clone(),
        replicas: cfg.replicas,
        engine: cfg.engine,
        cycle_replicas: cfg.cycle_replicas,
        n_min: cfg.n_min,
        ..Default::default()
    };
    let rep = front_law(&cfg.sim_config(), &p, &opts, cfg.seed)?;
    let loose = mu_inf(&p, cfg.width, cfg.cycle_replicas, 1, cfg.seed ^ 0x5eed)?;
    let mut hists: Vec<_> = rep.mu_t.iter().collect();
    hists.push(&rep.mu_inf);
    write_histograms_csv(&hists, out.create("frontlaw_hist.csv")?)?;
    let mut w = csv::Writer::from_writer(out.create("tv.csv")?);
    w.write_record(["t", "tv", "se", "tv_n_min_1"])?;
    for (row, h) in rep.tv.iter().zip(&rep.mu_t) {
        w.write_record([row.t.to_string(), row.tv.to_string(), row.se.to_string(), h.tv(&loose.histogram).to_string()])?;
    }
    w.flush()?;
    drop(w);
    out.json("frontlaw.json", &rep)?;
    Ok(out.done(None))
}

fn cmd_aux(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let est = estimate_alpha(cfg.aux_n, cfg.aux_horizon, cfg.aux_replicas, cfg.seed ^ 0xa1)?;
    let runs: Vec<_> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| dominated_coupling_run(cfg.aux_n, cfg.rho, cfg.aux_horizon, rng::replica_seed(cfg.seed, i)))
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(out.create("alpha.csv")?);
    w.write_record(["n", "horizon", "replicas", "alpha_hat", "ci_lo", "ci_hi"])?;
    let (lo, hi) = est.ci.map_or((f64::NAN, f64::NAN), |c| (c.lo, c.hi));
    w.write_record([
        est.n.to_string(),
        est.horizon.to_string(),
        est.replicas.to_string(),
        est.alpha_hat.to_string(),
        lo.to_string(),
        hi.to_string(),
    ])?;
    w.flush()?;
    drop(w);
    let mut w = csv::Writer::from_writer(out.create("domination.csv")?);
    w.write_record(["replica", "levels_checked", "violations", "real_front", "aux_front"])?;
    for (i, r) in runs.iter().enumerate() {
        w.write_record([
            i.to_string(),
            r.levels_checked.to_string(),
            r.violations.to_string(),
            r.real_front.to_string(),
            r.aux_front.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    if let Some(first) = runs.first() {
        write_coupling_csv(first, out.create("coupling.csv")?)?;
    }
    let bad = runs.iter().filter(|r| !r.holds()).count();
    Ok(out.done((bad > 0).then(|| format!("domination violated in {bad} of {} runs", runs.len()))))
}

/// Unit steps up to 50, then a geometric grid up to the horizon.
fn tail_grid(horizon: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=50).map(f64::from).collect();
    let mut t = 64.0;
    while t < horizon {
        g.push(t);
        t *= 1.25;
    }
    g
}

fn cmd_tails(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let p = params(cfg)?;
    let runs = regen_replicas(&p, cfg.replicas, cfg.seed)?;
    let rep = tail_report(&runs, &tail_grid(cfg.horizon), &[]);
    write_tails_csv(&rep, out.create("tails.csv")?)?;
    out.json("tails.json", &rep)?;
    Ok(out.done(None))
}

fn cmd_rwdemo(cfg: &mut RunConfig, mut out: Out) -> Result<Outcome> {
    let rep = rw_regeneration_demo(cfg.p_left, 1.0 - cfg.p_left, cfg.steps, cfg.replicas, cfg.seed)?;
    out.json("rwdemo.json", &rep)?;
    let mut w = csv::Writer::from_writer(out.create("rwdemo.csv")?);
    w.write_record(["quantity", "value"])?;
    for (k, v) in [
        ("p_kappa_zero", rep.p_kappa_zero),
        ("p_kappa_zero_se", rep.p_kappa_zero_se),
        ("p_kappa_zero_exact", rep.p_kappa_zero_exact),
        ("mean_kappa", rep.mean_kappa),
        ("ks_end", rep.ks_end.statistic),
        ("ks_end_critical_1pct", rep.ks_end.critical_1pct),
        ("ks_mid", rep.ks_mid.statistic),
        ("ks_mid_critical_1pct", rep.ks_mid.critical_1pct),
    ] {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(out.done(None))
}

fn execute(cmd: &Command) -> Result<(Option<String>, PathBuf)> {
    let mut cfg = resolve(cmd)?;
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    let out = Out { dir: &dir, files: Vec::new() };
    let outcome = match cmd {
        Command::Simulate(_) => cmd_simulate(&mut cfg, out),
        Command::MapCheck(_) => cmd_map_check(&mut cfg, out),
        Command::Regen(_) => cmd_regen(&mut cfg, out),
        Command::Estimate(_) => cmd_estimate(&mut cfg, out),
        Command::Frontlaw(_) => cmd_frontlaw(&mut cfg, out),
        Command::Aux(_) => cmd_aux(&mut cfg, out),
        Command::Tails(_) => cmd_tails(&mut cfg, out),
        Command::Rwdemo(_) => cmd_rwdemo(&mut cfg, out),
    }?;
    RunManifest::new(cmd.name(), &cfg, &dir, &outcome.files)?.write(&dir)?;
    Ok((outcome.failure, dir))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok((None, dir)) => {
            eprintln!("{}: wrote {}", cli.command.name(), dir.join(crate::config::MANIFEST_FILE).display());
            0
        }
        Ok((Some(msg), _)) => {
            eprintln!("{}: diagnostic failure: {msg}", cli.command.name());
            3
        }
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}
