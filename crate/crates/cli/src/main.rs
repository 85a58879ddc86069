//! `magic-mps`: run the bond-dimension and time sweeps, cross-check against
//! the statevector oracle, dump Pauli samples, refit and plot bundles.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use magic_mps::config::{Defaults, ExperimentConfig, ExperimentKind};
use magic_mps::harness::{evolve_trajectory, oracle_check, trajectory_key, RunSpec};
use magic_mps::magic::PauliSampler;
use magic_mps::output::{self, parse_cap, Trace};
use magic_mps::{plot, BondCap, MpsState, SeedTree};

#[derive(Parser, Debug)]
#[command(name = "magic-mps", version, about = "Stabilizer Renyi entropy of Haar-random circuits with MPS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Final-state SRE and entanglement against the bond cap.
    Exp1(RunArgs),
    /// SRE and entanglement time series under fixed caps.
    Exp2(RunArgs),
    /// Compare an infinite-mode MPS trajectory with the exact statevector.
    OracleCheck(OracleArgs),
    /// Dump individual Pauli samples of one trajectory's final state.
    Sample(SampleArgs),
    /// Recompute deviations, fits and saturation tables of a bundle.
    Fit(BundleArgs),
    /// Render SVG figures of a bundle.
    Plot(BundleArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config file.
    #[arg(long, env = "MAGIC_MPS_OUT")]
    out: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Fill missing keys with desk-scale defaults and reject N > 20.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    /// Also write the report as JSON into this directory.
    #[arg(long, env = "MAGIC_MPS_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 40)]
    depth: usize,
    /// Bond cap, a positive integer or `inf`.
    #[arg(long, default_value = "16")]
    chi: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    trajectory: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Sample this MPS snapshot instead of simulating a trajectory.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long, env = "MAGIC_MPS_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BundleArgs {
    /// Bundle directory written by exp1 or exp2.
    #[arg(long, env = "MAGIC_MPS_OUT")]
    bundle: PathBuf,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load_config(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let defaults = if args.desk_scale { Defaults::Desk } else { Defaults::Full };
    let mut cfg = ExperimentConfig::parse(&text, kind, defaults)
        .with_context(|| format!("invalid config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if args.desk_scale {
        cfg.check_desk_scale()?;
    }
    Ok(cfg)
}

fn run(args: &RunArgs, kind: ExperimentKind) -> Result<()> {
    let cfg = load_config(args, kind)?;
    let threads = args.threads.unwrap_or_else(default_threads);
    let dir = cfg.output.clone();
    log::info!("{} -> {} ({threads} threads)", kind.section(), dir.display());
    let bundle = match kind {
        ExperimentKind::One => output::run_exp1_bundle(&cfg, threads, &dir)?,
        ExperimentKind::Two => output::run_exp2_bundle(&cfg, threads, &dir)?,
    };
    for f in &bundle.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<bool> {
    let r = oracle_check(args.n, args.depth, args.seed, args.samples)?;
    println!("N={} depth={} seed={}", r.n_sites, r.depth, r.master_seed);
    println!("fidelity           {:.12}", r.fidelity);
    println!("M1 exact / sampled {:.6} / {:.6} (se {:.6})", r.m1_exact, r.m1_sampled, r.se1);
    println!("M2 exact / sampled {:.6} / {:.6} (se {:.6})", r.m2_exact, r.m2_sampled, r.se2);
    println!("max entropy error  {:.3e} bits", r.max_entropy_error);
    println!("{}", if r.pass { "PASS" } else { "FAIL" });
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        output::write_json(&dir.join("oracle_check.json"), &r)?;
    }
    Ok(r.pass)
}

fn sample(args: &SampleArgs) -> Result<()> {
    let mut state = match &args.snapshot {
        Some(path) => {
            let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            MpsState::read_snapshot(std::io::BufReader::new(file))?
        }
        None => {
            let Some(cap) = parse_cap(&args.chi).filter(|c| *c != BondCap::Finite(0)) else {
                bail!("--chi must be a positive integer or `inf`, got {:?}", args.chi);
            };
            let spec = RunSpec {
                n_sites: args.n,
                cap,
                depth: args.depth,
                n_samples: args.samples,
                master_seed: args.seed,
                svd_tol: magic_mps::mps::DEFAULT_SVD_TOL,
            };
            evolve_trajectory(&spec, args.trajectory)?
        }
    };
    state.move_center(0);
    let key = trajectory_key(state.len(), args.trajectory);
    let mut rng = SeedTree::sampling(args.seed, key, args.depth as u64).derive_stream();
    let mut sampler = PauliSampler::new(&state)?;
    let records = (0..args.samples)
        .map(|_| sampler.sample(&mut rng).map(|r| (args.trajectory, r)))
        .collect::<magic_mps::Result<Vec<_>>>()?;
    let trace = Trace { master_seed: args.seed, traj_first: args.trajectory, traj_last: args.trajectory };
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out/sample"));
    fs::create_dir_all(&dir)?;
    let path = dir.join("samples.csv");
    output::write_samples(&path, &records, trace)?;
    println!("{}", path.display());
    Ok(())
}

fn require_dir(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!("bundle directory {} does not exist", dir.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Exp1(args) => run(&args, ExperimentKind::One)?,
        Command::Exp2(args) => run(&args, ExperimentKind::Two)?,
        Command::OracleCheck(args) => return oracle(&args),
        Command::Sample(args) => sample(&args)?,
        Command::Fit(args) => {
            require_dir(&args.bundle)?;
            for f in output::refit_bundle(&args.bundle)? {
                println!("{}", f.display());
            }
        }
        Command::Plot(args) => {
            require_dir(&args.bundle)?;
            let written = plot::plot_bundle(&args.bundle)?;
            if written.is_empty() {
                log::warn!("no figures written");
            }
            for f in written {
                println!("{}", f.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
