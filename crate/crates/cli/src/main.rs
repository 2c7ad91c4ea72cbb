use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use qsd_core::agent::weights;
use qsd_core::harness::{run_experiment, train_ddqn, verify_prop1, write_outputs, Config};
use qsd_core::lattice::{bit_cost, lattice_size, quantize, rank, unrank};
use qsd_core::ProbVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Edge-cloud speculative decoding simulator.
#[derive(Parser)]
#[command(name = "qsd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (policy, temperature, seed) grid and write CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a DQN controller at the configured model temperature.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Check quantize-sample exactness on the small-vocabulary grid.
    VerifyProp1 {
        #[arg(long)]
        config: PathBuf,
        /// Grid seeds 0..n; each contributes 18 configurations.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Time quantization and lattice indexing on random distributions.
    QuantizeBench {
        #[arg(long = "V")]
        vocab: u32,
        #[arg(long)]
        ell: u32,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> qsd_core::Result<ExitCode> {
    match command {
        Command::Run { config, out } => {
            let cfg = Config::load(&config)?;
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &out)?;
            for c in &result.cells {
                println!(
                    "{:<24} T={:<4} throughput {:>9.3} ± {:.3} tok/s  accept {:.3}  entropy {:.3}",
                    c.policy, c.temperature, c.mean_throughput, c.stderr_throughput, c.mean_accept_rate, c.mean_entropy
                );
            }
            println!("wrote {} runs to {}", result.runs.len(), out.display());
        }
        Command::Train { config, weights: path } => {
            let cfg = Config::load(&config)?;
            let start = Instant::now();
            let outcome = train_ddqn(&cfg, cfg.model.temperature)?;
            weights::save(&outcome.network, &path)?;
            let tenth = (outcome.curve.len() / 10).max(1);
            let avg = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            println!(
                "trained {} episodes ({} steps, {} updates) in {:.1}s; mean reward first {:.3}, last {:.3}",
                outcome.curve.len(),
                outcome.env_steps,
                outcome.updates,
                start.elapsed().as_secs_f64(),
                avg(&outcome.curve[..tenth.min(outcome.curve.len())]),
                avg(&outcome.curve[outcome.curve.len().saturating_sub(tenth)..]),
            );
            println!("weights written to {}", path.display());
        }
        Command::VerifyProp1 { config, seeds } => {
            let cfg = Config::load(&config)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = verify_prop1(&cfg.model, &seeds)?;
            println!("configurations: {}", report.rows.len());
            println!("max first-token deviation:  {:.3e}", report.max_first_dev);
            println!("max second-token deviation: {:.3e}", report.max_second_dev);
            println!("max deviation: {:.3e}", report.max_deviation());
            if let Some(w) = report.worst_sq_at_ell1() {
                println!(
                    "sample-quantize at ell=1 (seed {}, L={}, eps={}): TV {:.3e} vs quantize-sample {:.3e}",
                    w.seed, w.draft_len, w.perturbation, w.sq_tv, w.qs_tv
                );
            }
            println!("elapsed: {:.2}s", report.elapsed_s);
            if report.max_deviation() >= 1e-10 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::QuantizeBench { vocab, ell, count, seed } => quantize_bench(vocab, ell, count, seed)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn quantize_bench(vocab: u32, ell: u32, count: usize, seed: u64) -> qsd_core::Result<()> {
    let budget = bit_cost(ell, vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs: Vec<ProbVector> = (0..count)
        .map(|_| {
            let w: Vec<f64> = (0..vocab).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            ProbVector::from_weights(w)
        })
        .collect::<qsd_core::Result<_>>()?;

    let start = Instant::now();
    let points = probs.iter().map(|p| quantize(p, ell)).collect::<qsd_core::Result<Vec<_>>>()?;
    let t_quantize = start.elapsed().as_secs_f64();

    let start = Instant::now();
    for pt in &points {
        let back = unrank(&rank(pt), ell, vocab)?;
        assert_eq!(&back, pt, "rank/unrank roundtrip");
    }
    let t_codec = start.elapsed().as_secs_f64();

    let l1: f64 = probs
        .iter()
        .zip(&points)
        .map(|(p, q)| p.as_slice().iter().zip(q.dequantize().as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum::<f64>()
        / count as f64;

    println!("V={vocab} ell={ell}: lattice size {} points, {} bits", lattice_size(ell, vocab), budget.bits);
    println!("mean l1 error: {l1:.6}");
    println!("quantize:    {:.3} us/vector", 1e6 * t_quantize / count as f64);
    println!("rank+unrank: {:.3} us/vector", 1e6 * t_codec / count as f64);
    Ok(())
}
