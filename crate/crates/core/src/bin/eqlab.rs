//! Command-line driver: verification suite, deterministic flows, SGD
//! experiments, γ sweeps, and basis diagnostics. All outputs are CSV.
//!
//! Exit codes: 0 success, 1 check/assertion failure, 2 usage or config
//! error, 3 numerical divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eqlab::config::RunConfig;
use eqlab::dynamics::{integrate, sgd_train, FlowMode, RiskContext, RunStatus, Trajectory};
use eqlab::net::ParamPoint;
use eqlab::report::{checks_to_csv, fmt_e12, trajectory_to_csv};
use eqlab::setup::{build_asym_control, build_context, build_dynamics_config};
use eqlab::verify::run_suite;
use eqlab::{EqError, Result};

#[derive(Parser)]
#[command(name = "eqlab", version, about = "equivariance dynamics laboratory")]
struct Cli {
    /// path to the TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides the config's output_dir; default ".")
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// concurrent run limit for sweeps
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// overrides every seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// run the full certification suite and write checks.csv
    Verify,
    /// integrate the configured gradient flow and write a trajectory CSV
    Flow,
    /// run SGD with the configured mode/γ for every seed
    Sgd,
    /// γ grid × seeds × {augmented, nominal} SGD runs plus medians.csv
    Sweep,
    /// print tangent-space dimensions and the compatibility commutator norm
    Basis,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                EqError::Diverged { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| EqError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::from_path(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.flow.seed = seed;
        cfg.dataset.seed = seed;
        cfg.train.seeds = vec![seed];
    }
    let out_dir = cli
        .output
        .clone()
        .or_else(|| cfg.output.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;

    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .map_err(|e| EqError::InvalidArgument(format!("thread pool: {e}")))?;

    match cli.command {
        Command::Verify => cmd_verify(&cfg, &out_dir),
        Command::Flow => cmd_flow(&cfg, &out_dir),
        Command::Sgd => cmd_sgd(&cfg, &out_dir),
        Command::Sweep => cmd_sweep(&cfg, &out_dir),
        Command::Basis => cmd_basis(&cfg),
    }
}

fn gamma_tag(gamma: f64) -> String {
    if gamma == 0.0 {
        "0".into()
    } else {
        format!("{gamma:e}")
    }
}

/// §4-style initialization: equivariant Gaussian draw with 1/√fan_in scaling
/// shared per seed, plus independent T E⊥ noise for non-equivariant runs.
fn init_point(ctx: &RiskContext, seed: u64, perturb_scale: f64) -> Result<ParamPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fan = |i: usize| 1.0 / (ctx.arch.layer_shape(i).1 as f64).sqrt();
    let base = ctx.structure.sample_in_e(&mut rng, fan)?;
    if perturb_scale == 0.0 {
        return Ok(base);
    }
    let noise = ctx.structure.sample_in_e_perp(&mut rng, |i| perturb_scale * fan(i))?;
    Ok(base.add(&noise))
}

fn cmd_verify(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode> {
    let ctx = build_context(cfg)?;
    let ctx_asym = build_asym_control(cfg)?;
    let reports = run_suite(&ctx, &ctx_asym, cfg.flow.seed)?;
    let mut all_ok = true;
    for r in &reports {
        all_ok &= r.passed;
        println!(
            "{} {:<32} residual {:>20} tolerance {:>20}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            fmt_e12(r.residual),
            fmt_e12(r.tolerance),
            r.details
        );
    }
    std::fs::write(out_dir.join("checks.csv"), checks_to_csv(&reports))?;
    println!(
        "{}/{} checks passed; wrote {}",
        reports.iter().filter(|r| r.passed).count(),
        reports.len(),
        out_dir.join("checks.csv").display()
    );
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn write_run(
    out_dir: &Path,
    prefix: &str,
    mode: FlowMode,
    gamma: f64,
    seed: u64,
    traj: &Trajectory,
) -> Result<PathBuf> {
    let name = format!("{prefix}_{}_g{}_s{seed}.csv", mode.name(), gamma_tag(gamma));
    let path = out_dir.join(name);
    std::fs::write(&path, trajectory_to_csv(traj))?;
    Ok(path)
}

fn cmd_flow(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode> {
    let ctx = build_context(cfg)?;
    let dc = build_dynamics_config(cfg)?;
    if dc.step_size * cfg.flow.gamma >= 1.0 {
        eprintln!(
            "warning: h·γ = {} ≥ 1; explicit integration may be unstable",
            dc.step_size * cfg.flow.gamma
        );
    }
    let perturb = if dc.mode == FlowMode::Equivariant { 0.0 } else { cfg.train.perturb_scale };
    let a0 = init_point(&ctx, dc.seed, perturb)?;
    let traj = integrate(&ctx, &dc, &a0)?;
    let path = write_run(out_dir, "flow", dc.mode, cfg.flow.gamma, dc.seed, &traj)?;
    println!("wrote {}", path.display());
    if let RunStatus::Diverged { step } = traj.status {
        eprintln!("run diverged at step {step}");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sgd(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode> {
    let ctx = build_context(cfg)?;
    let mode = FlowMode::parse(&cfg.flow.mode)?;
    let gamma = cfg.flow.gamma;
    if cfg.train.lr * gamma >= 1.0 {
        eprintln!("warning: lr·γ = {} ≥ 1; SGD may oscillate or diverge", cfg.train.lr * gamma);
    }
    let gctx = ctx.with_gamma(gamma);
    let mut diverged = false;
    for &seed in &cfg.train.seeds {
        let perturb = if mode == FlowMode::Equivariant { 0.0 } else { cfg.train.perturb_scale };
        let a0 = init_point(&gctx, seed, perturb)?;
        let traj = sgd_train(
            &gctx,
            mode,
            cfg.train.lr,
            cfg.train.batch_size,
            cfg.train.epochs,
            seed,
            &a0,
        )?;
        diverged |= traj.status != RunStatus::Completed;
        let path = write_run(out_dir, "sgd", mode, gamma, seed, &traj)?;
        println!("wrote {}", path.display());
    }
    Ok(if diverged { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

struct SweepRun {
    mode: FlowMode,
    gamma: f64,
    seed: u64,
}

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode> {
    use rayon::prelude::*;
    let ctx = build_context(cfg)?;
    let mut runs = Vec::new();
    for &gamma in &cfg.train.gamma_list {
        for &seed in &cfg.train.seeds {
            for mode in [FlowMode::Augmented, FlowMode::Nominal] {
                runs.push(SweepRun { mode, gamma, seed });
            }
        }
    }
    if cfg.train.lr * cfg.train.gamma_list.iter().fold(0.0, |a: f64, &b| a.max(b)) >= 1.0 {
        eprintln!("warning: lr·γ ≥ 1 for the largest γ; SGD may oscillate");
    }
    let results: Vec<Result<(SweepRun, Trajectory)>> = runs
        .into_par_iter()
        .map(|run| {
            let gctx = ctx.with_gamma(run.gamma);
            // same seed ⇒ same A0 across modes and γ (weights are copied,
            // then each run evolves independently)
            let a0 = init_point(&gctx, run.seed, cfg.train.perturb_scale)?;
            let traj = sgd_train(
                &gctx,
                run.mode,
                cfg.train.lr,
                cfg.train.batch_size,
                cfg.train.epochs,
                run.seed,
                &a0,
            )?;
            Ok((run, traj))
        })
        .collect();

    let mut diverged = false;
    // (mode name, γ) → per-step dist_E for each seed
    let mut groups: BTreeMap<(String, String), Vec<Vec<(usize, f64)>>> = BTreeMap::new();
    for res in results {
        let (run, traj) = res?;
        diverged |= traj.status != RunStatus::Completed;
        write_run(out_dir, "sweep", run.mode, run.gamma, run.seed, &traj)?;
        groups
            .entry((run.mode.name().to_string(), gamma_tag(run.gamma)))
            .or_default()
            .push(traj.records.iter().map(|r| (r.step, r.dist_e)).collect());
    }

    let mut medians = String::from("mode,gamma,step,median_dist_E\n");
    for ((mode, gamma), seeds) in &groups {
        let steps = seeds.iter().map(Vec::len).min().unwrap_or(0);
        for i in 0..steps {
            let mut vals: Vec<f64> = seeds.iter().map(|s| s[i].1).collect();
            vals.sort_by(|a, b| a.total_cmp(b));
            let m = if vals.len() % 2 == 1 {
                vals[vals.len() / 2]
            } else {
                0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
            };
            medians.push_str(&format!("{mode},{gamma},{},{}\n", seeds[0][i].0, fmt_e12(m)));
        }
    }
    let mpath = out_dir.join("medians.csv");
    std::fs::write(&mpath, medians)?;
    println!("wrote {} and {} per-run CSVs", mpath.display(), groups.values().map(Vec::len).sum::<usize>());
    Ok(if diverged { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn cmd_basis(cfg: &RunConfig) -> Result<ExitCode> {
    let ctx = build_context(cfg)?;
    let s = &ctx.structure;
    let dim_l = s.subspace.tangent_dim();
    println!("dim T L  = {dim_l}");
    match s.dims_e() {
        Ok(dims) => {
            let dim_e: usize = dims.iter().sum();
            println!("dim T E  = {dim_e}");
            println!("dim T E⊥ = {}", dim_l - dim_e);
        }
        Err(_) => {
            println!("dim T E  = undefined (incompatible)");
            println!("dim T E⊥ = undefined (incompatible)");
        }
    }
    println!("commutator norm = {}", fmt_e12(s.commutator_norm));
    Ok(if s.compat_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
