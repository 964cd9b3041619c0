use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mrfm_sim::cli::{self, parse_config, render, Mode, RunConfig};
use mrfm_sim::model::{schedule_adiabaticity, Adiabaticity};
use mrfm_sim::quantum::init_state;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "mrfm-sim", version, about = "Spin-cantilever dynamics under cyclic adiabatic inversion")]
struct Args {
    #[command(subcommand)]
    verb: Verb,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep runs.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Time step override.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Snapshot times override, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the mode named in the configuration.
    Run { config: PathBuf },
    /// Run the configured sweep.
    Sweep { config: PathBuf },
    /// Re-analyze a directory of snapshot files.
    Analyze { snapshot_dir: PathBuf },
    /// Check a configuration and print its effective form.
    Validate { config: PathBuf },
}

fn load(path: &Path, args: &Args) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(dt) = args.dt {
        cfg.run.dt = dt;
    }
    if let Some(s) = &args.snapshots {
        cfg.run.snapshots = s.clone();
    }
    cfg.validate().context("after command-line overrides")?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match &args.verb {
        Verb::Run { config } => {
            let cfg = load(config, &args)?;
            let out = cli::run(&cfg, args.workers)?;
            for s in out {
                println!("{} {} final_envelope={:e}", s.label, s.hash, s.final_envelope);
            }
            println!("outputs in {}", cfg.output.dir.display());
        }
        Verb::Sweep { config } => {
            let mut cfg = load(config, &args)?;
            cfg.run.mode = Mode::Sweep;
            cfg.validate()?;
            let out = cli::run(&cfg, args.workers)?;
            println!("{} runs; table in {}", out.len(), cfg.output.dir.join("summary.tsv").display());
        }
        Verb::Analyze { snapshot_dir } => {
            let out = args.out.clone().unwrap_or_else(|| snapshot_dir.join("analysis"));
            let records = cli::analyze(snapshot_dir, &out, mrfm_sim::analysis::DEFAULT_PEAK_THRESHOLD)?;
            for r in &records {
                match r.split() {
                    Some(sp) => println!(
                        "tau={:.4} peaks={} ratio={:.3e} kappa={:.4e} residual={:.2e}",
                        r.tau,
                        r.peaks.len(),
                        sp.w_small / sp.w_big,
                        sp.kappa.re,
                        sp.kappa_residual
                    ),
                    None => println!("tau={:.4} peaks={}", r.tau, r.peaks.len()),
                }
            }
            println!("analysis in {}", out.display());
        }
        Verb::Validate { config } => {
            let cfg = load(config, &args)?;
            print!("{}", render(&cfg));
            let p = cfg.sim_params()?;
            if matches!(cfg.run.mode, Mode::Quantum | Mode::Correspondence) {
                init_state(&p.grid, &cfg.coherent(), &cfg.spin_init(), &p)?;
            }
            if cfg.run.mode == Mode::Sweep {
                println!("# {} sweep runs", cfg.expand_sweep()?.len());
            }
            match schedule_adiabaticity(&p.schedule, 0.0)? {
                Adiabaticity::Margin(m) if m >= 1.0 => {
                    bail!("not adiabatic at tau = 0 (margin {m:e})")
                }
                Adiabaticity::Margin(m) => println!("# adiabaticity margin at tau = 0: {m:e}"),
                Adiabaticity::NoRfField => println!("# no rf field at tau = 0"),
            }
            println!("# valid; hash {}", cfg.param_hash());
        }
    }
    Ok(())
}
