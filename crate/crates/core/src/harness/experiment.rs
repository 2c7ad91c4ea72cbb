//! The (policy, temperature, seed) grid and its CSV output.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::agent::{self, weights, QPolicy, TrainingOutcome, ValueNetwork};
use crate::error::{Error, Result};
use crate::lm::{ModelPair, SyntheticModels};
use crate::policy::{heuristic_policy, static_policy, Action, Policy};

use super::config::{Config, PolicySpec};
use super::episode::{run_episode, DecodeEnv, RunRecord, Simulator};

pub const RUNS_HEADER: &str =
    "policy,temperature,seed,tau_star,tokens,total_s,throughput,accept_rate,mean_entropy,mean_L,mean_b";
pub const CELLS_HEADER: &str =
    "policy,temperature,episodes,mean_throughput,stderr_throughput,mean_accept_rate,mean_entropy,mean_tokens,mean_total_s";

/// Formats like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    trim_zeros(&format!("{:.*}", (8 - exp) as usize, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A concrete policy of the roster, before instantiation.
#[derive(Debug, Clone)]
enum Entry {
    Static(Action, crate::engine::DraftMode),
    Heuristic { initial_len: u32, ell: u32 },
    Ddqn(Option<ValueNetwork>),
}

fn expand(cfg: &Config, sim: &Simulator<SyntheticModels>) -> Result<Vec<Entry>> {
    let vocab = sim.models.vocab();
    let mut out = Vec::new();
    for spec in &cfg.policy.policies {
        match spec {
            PolicySpec::Static { draft_len, ell, mode } => {
                out.push(Entry::Static(Action::new(*draft_len, *ell, vocab)?, mode.unwrap_or(cfg.run.mode)));
            }
            PolicySpec::AllStatic { mode } => {
                for &a in sim.space.actions() {
                    out.push(Entry::Static(a, mode.unwrap_or(cfg.run.mode)));
                }
            }
            PolicySpec::Heuristic { initial_len, ell } => out.push(Entry::Heuristic {
                initial_len: *initial_len,
                ell: *ell,
            }),
            PolicySpec::Ddqn { weights: Some(path) } => out.push(Entry::Ddqn(Some(weights::load(path)?))),
            PolicySpec::Ddqn { weights: None } => out.push(Entry::Ddqn(None)),
        }
    }
    Ok(out)
}

/// Trains a DQN controller on decode episodes at `temperature`.
pub fn train_ddqn(cfg: &Config, temperature: f64) -> Result<TrainingOutcome> {
    let sim = Simulator::from_config(cfg, temperature)?;
    let mut env = DecodeEnv::new(sim, cfg.run.train_seed_base);
    agent::train(&mut env, &cfg.agent)
}

fn labelled(label: String, mode: crate::engine::DraftMode) -> String {
    match mode {
        crate::engine::DraftMode::QuantizeSample => label,
        other => format!("{label}_{}", other.label()),
    }
}

fn run_entry(
    cfg: &Config,
    sim: &Simulator<SyntheticModels>,
    entry: &Entry,
    trained: Option<&ValueNetwork>,
    temperature: f64,
) -> Result<Vec<RunRecord>> {
    let seeds = &cfg.run.seeds;
    let run_all = |make: &(dyn Fn() -> Result<Box<dyn Policy>> + Sync), sim: &Simulator<SyntheticModels>| {
        seeds
            .par_iter()
            .map(|&seed| run_episode(sim, make()?.as_mut(), seed, temperature))
            .collect::<Result<Vec<_>>>()
    };
    match entry {
        Entry::Static(action, mode) => {
            let sim = Simulator {
                mode: *mode,
                ..sim.clone()
            };
            let mut runs = run_all(&|| Ok(Box::new(static_policy(*action))), &sim)?;
            for r in &mut runs {
                r.policy = labelled(std::mem::take(&mut r.policy), *mode);
            }
            Ok(runs)
        }
        Entry::Heuristic { initial_len, ell } => {
            let vocab = sim.models.vocab();
            let max_len = sim.space.max_draft_len();
            run_all(
                &|| Ok(Box::new(heuristic_policy(*initial_len, max_len, *ell, vocab)?)),
                sim,
            )
        }
        Entry::Ddqn(net) => {
            let net = net.as_ref().or(trained).expect("trained network supplied for ddqn entries");
            run_all(&|| Ok(Box::new(QPolicy::new(net.clone(), sim.space.clone())?)), sim)
        }
    }
}

/// Per-run rows and per-(policy, temperature) aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    /// Training curve of each DQN trained here, by temperature.
    pub training_curves: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub policy: String,
    pub temperature: f64,
    pub episodes: usize,
    pub mean_throughput: f64,
    pub stderr_throughput: f64,
    pub mean_accept_rate: f64,
    pub mean_entropy: f64,
    pub mean_tokens: f64,
    pub mean_total_s: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn summarize(runs: &[RunRecord]) -> CellSummary {
    let n = runs.len();
    let m = mean(runs.iter().map(|r| r.throughput));
    let stderr = if n > 1 {
        let var = runs.iter().map(|r| (r.throughput - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    CellSummary {
        policy: runs.first().map(|r| r.policy.clone()).unwrap_or_default(),
        temperature: runs.first().map(|r| r.temperature).unwrap_or(0.0),
        episodes: n,
        mean_throughput: m,
        stderr_throughput: stderr,
        mean_accept_rate: mean(runs.iter().map(|r| r.accept_rate)),
        mean_entropy: mean(runs.iter().map(|r| r.mean_entropy)),
        mean_tokens: mean(runs.iter().map(|r| r.tokens as f64)),
        mean_total_s: mean(runs.iter().map(|r| r.total_s)),
    }
}

pub fn run_experiment(cfg: &Config) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let needs_training = cfg
        .policy
        .policies
        .iter()
        .any(|p| matches!(p, PolicySpec::Ddqn { weights: None }));
    let trained: Vec<Option<TrainingOutcome>> = cfg
        .run
        .temperatures
        .par_iter()
        .map(|&t| needs_training.then(|| train_ddqn(cfg, t)).transpose())
        .collect::<Result<_>>()?;

    let mut out = ExperimentOutput {
        runs: Vec::new(),
        cells: Vec::new(),
        training_curves: Vec::new(),
    };
    for (&temperature, trained) in cfg.run.temperatures.iter().zip(&trained) {
        let sim = Simulator::from_config(cfg, temperature)?;
        for entry in expand(cfg, &sim)? {
            let runs = run_entry(cfg, &sim, &entry, trained.as_ref().map(|t| &t.network), temperature)?;
            out.cells.push(summarize(&runs));
            out.runs.extend(runs);
        }
        if let Some(t) = trained {
            out.training_curves.push((temperature, t.curve.clone()));
        }
    }
    Ok(out)
}

pub fn runs_csv(runs: &[RunRecord]) -> String {
    let mut s = String::from(RUNS_HEADER);
    s.push('\n');
    for r in runs {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            fmt_g9(r.temperature),
            r.seed,
            r.tau_star,
            r.tokens,
            fmt_g9(r.total_s),
            fmt_g9(r.throughput),
            fmt_g9(r.accept_rate),
            fmt_g9(r.mean_entropy),
            fmt_g9(r.mean_draft_len),
            fmt_g9(r.mean_bits),
        )
        .unwrap();
    }
    s
}

pub fn cells_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from(CELLS_HEADER);
    s.push('\n');
    for c in cells {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.policy,
            fmt_g9(c.temperature),
            c.episodes,
            fmt_g9(c.mean_throughput),
            fmt_g9(c.stderr_throughput),
            fmt_g9(c.mean_accept_rate),
            fmt_g9(c.mean_entropy),
            fmt_g9(c.mean_tokens),
            fmt_g9(c.mean_total_s),
        )
        .unwrap();
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `runs.csv`, `cells.csv` and, when a network was trained,
/// `training.csv` under `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("runs.csv"), &runs_csv(&out.runs))?;
    write(&dir.join("cells.csv"), &cells_csv(&out.cells))?;
    if !out.training_curves.is_empty() {
        let mut s = String::from("temperature,episode,mean_reward\n");
        for (t, curve) in &out.training_curves {
            for (i, r) in curve.iter().enumerate() {
                writeln!(s, "{},{},{}", fmt_g9(*t), i, fmt_g9(*r)).unwrap();
            }
        }
        write(&dir.join("training.csv"), &s)?;
    }
    Ok(())
}
