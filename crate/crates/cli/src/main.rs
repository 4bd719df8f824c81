//! `qtorus`: run measured-trajectory experiments on the quantized torus.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 a numerical
//! check failed, 3 a resource cap was exceeded.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qtorus::analysis::{derivative_growth_probe, lyapunov_comparison, probe_horizon, oracle_comparison, run_marginal_experiment, sweep_n_experiment};
use qtorus::config::RunConfig;
use qtorus::output::{self, Provenance};
use qtorus::propagators::{
    ehrenfest_time, hamiltonian_egorov_residual, hamiltonian_propagator, metaplectic_egorov_residual, quantize_cat, quantize_symplectic, FlowDescriptor,
    SymplecticMatrix,
};
use qtorus::rng::trial_rng;
use qtorus::selfcheck::{random_trig_symbol, run_selfcheck, SelfCheckOptions};
use qtorus::torus_ops::{GridSize, Symbol};
use qtorus::trajectory::Experiment;
use qtorus::Error;

const THREADS_ENV: &str = "QTORUS_THREADS";

#[derive(Parser)]
#[command(name = "qtorus", version, about = "Measured quantum trajectories on the quantized torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant checks at small grid sizes.
    Selfcheck {
        /// Swap in a cat propagator with a wrong phase (must fail).
        #[arg(long, hide = true)]
        corrupt_cat_phase: bool,
    },
    /// Sample trajectories and compare per-step marginals with the classical law.
    Simulate {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the experiment for every N in `n_list`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment under each matrix in `matrices` and report breakdown steps.
    Lyapunov {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the Egorov residual of a propagator.
    EgorovCheck {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, value_enum, default_value_t = FlowArg::Cat)]
        flow: FlowArg,
        /// Evolution time for the Hamiltonian flow.
        #[arg(long, default_value_t = 0.05)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Compare the sampled joint law with the exact density (small N only).
    OracleCompare {
        config: PathBuf,
        /// Oracle grid points per coordinate.
        #[arg(long, default_value_t = 128)]
        q: usize,
        /// Histogram bins per coordinate.
        #[arg(long, default_value_t = 32)]
        bins: usize,
        /// Fail above this TV (default: three times the expected sampling noise).
        #[arg(long)]
        max_tv: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlowArg {
    Cat,
    Elliptic,
    M2,
    M3,
    /// `cos 2πx + cos 2πξ`
    Hamiltonian,
}

enum Failure {
    Input(String),
    Check(String),
    Resource(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::OracleTooLarge(_) => Failure::Resource(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Selfcheck { corrupt_cat_phase } => cmd_selfcheck(corrupt_cat_phase),
        Command::Simulate { config, out } => cmd_simulate(&config, out),
        Command::Sweep { config, out } => cmd_sweep(&config, out),
        Command::Lyapunov { config, out } => cmd_lyapunov(&config, out),
        Command::EgorovCheck { n, flow, t, seed } => cmd_egorov(n, flow, t, seed),
        Command::OracleCompare { config, q, bins, max_tv, out } => cmd_oracle(&config, q, bins, max_tv, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Resource(msg)) => {
            eprintln!("resource limit: {msg}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    if threads == 0 {
        return Err(format!("{THREADS_ENV} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn cmd_selfcheck(corrupt_cat_phase: bool) -> CmdResult {
    let report = run_selfcheck(SelfCheckOptions { corrupt_cat_phase });
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.all_passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Check(format!("{failed} of {} checks failed", report.checks.len())))
    }
}

fn cmd_simulate(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let cfg = RunConfig::load(path)?;
    let exp = Experiment::new(cfg.experiment_config(None)?)?;
    let run = run_marginal_experiment(&exp, cfg.bins)?;
    let dir = output_dir(&cfg, out)?;
    let prov = Provenance::new(cfg.seed, &cfg);
    let mut w = create(&dir, "trajectories.csv")?;
    output::write_trajectories(&mut w, &prov, &run.trajectories)?;
    w.flush()?;
    let mut w = create(&dir, "marginals.csv")?;
    output::write_marginals(&mut w, &prov, &run.reports)?;
    w.flush()?;
    let gamma = exp.config().flow.lyapunov();
    let t_e = ehrenfest_time(exp.config().grid, gamma);
    let summary = output::marginal_summary(&prov, &run.reports, gamma, t_e);
    fs::write(dir.join("summary.txt"), &summary)?;
    fs::write(dir.join("marginals.gp"), output::marginal_plot_script("marginals.csv", run.reports.len()))?;
    print!("{summary}");
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let cfg = RunConfig::load(path)?;
    let base = cfg.experiment_config(None)?;
    let sizes = cfg.sweep_sizes();
    let report = sweep_n_experiment(&base, &sizes, cfg.bins)?;
    let dir = output_dir(&cfg, out)?;
    let prov = Provenance::new(cfg.seed, &cfg);
    let mut w = create(&dir, "convergence.csv")?;
    output::write_convergence(&mut w, &prov, &report)?;
    w.flush()?;
    fs::write(dir.join("convergence.gp"), output::convergence_plot_script("convergence.csv", &report))?;
    println!("lyapunov {:.4}", report.gamma);
    for (i, n) in report.n_values.iter().enumerate() {
        let tvs: Vec<String> = report.tv[i].iter().map(|v| format!("{v:.3}")).collect();
        println!("N={n} ehrenfest={:.2} tv=[{}]", report.ehrenfest[i], tvs.join(", "));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_lyapunov(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let cfg = RunConfig::load(path)?;
    let matrices = cfg.matrices.clone().unwrap_or_else(|| vec![SymplecticMatrix::cat(), SymplecticMatrix::m2(), SymplecticMatrix::m3()]);
    let base = cfg.experiment_config(None)?;
    let entries = lyapunov_comparison(&matrices, &base, cfg.bins)?;
    let dir = output_dir(&cfg, out)?;
    let prov = Provenance::new(cfg.seed, &cfg);
    let mut w = create(&dir, "lyapunov.csv")?;
    output::write_lyapunov(&mut w, &prov, &entries)?;
    w.flush()?;
    for e in &entries {
        let probe = derivative_growth_probe(&Symbol::cos_mode(1, 0), &FlowDescriptor::linear(e.matrix), probe_horizon(e.gamma, 8));
        let censored = if e.breakdown.censored { " (no breakdown within horizon)" } else { "" };
        println!(
            "{} gamma={:.4} ehrenfest={:.2} breakdown_step={}{censored} growth_slope={:.3}",
            e.matrix, e.gamma, e.ehrenfest, e.breakdown.step, probe.slope
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_egorov(n: usize, flow: FlowArg, t: f64, seed: u64) -> CmdResult {
    let grid = GridSize::new(n)?;
    let matrix = match flow {
        FlowArg::Cat => SymplecticMatrix::cat(),
        FlowArg::Elliptic => SymplecticMatrix::elliptic(),
        FlowArg::M2 => SymplecticMatrix::m2(),
        FlowArg::M3 => SymplecticMatrix::m3(),
        FlowArg::Hamiltonian => {
            let a = Symbol::cos_mode(1, 0);
            let small = hamiltonian_egorov_residual(&hamiltonian_propagator(&Symbol::cos_sum(), grid, t)?, &a)?;
            let large = hamiltonian_egorov_residual(&hamiltonian_propagator(&Symbol::cos_sum(), GridSize::new(2 * n)?, t)?, &a)?;
            let ratio = small.max_entry / large.max_entry;
            println!("N={n} max_entry={:.3e} operator_norm={:.3e}", small.max_entry, small.operator_norm);
            println!("N={} max_entry={:.3e} operator_norm={:.3e}", 2 * n, large.max_entry, large.operator_norm);
            println!("ratio {ratio:.3}");
            return if ratio > 1.0 { Ok(()) } else { Err(Failure::Check(format!("residual did not decrease (ratio {ratio:.3})"))) };
        }
    };
    let u = if matrix == SymplecticMatrix::cat() { quantize_cat(grid)? } else { quantize_symplectic(&matrix, grid)? };
    let mut rng = trial_rng(seed, 0);
    let k_max = ((n / 4) as i64 - 1).clamp(0, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        worst = worst.max(metaplectic_egorov_residual(&u, &random_trig_symbol(&mut rng, k_max))?);
    }
    println!("{matrix} N={n} max residual over 10 symbols (K={k_max}): {worst:.3e}");
    if worst <= 1e-9 {
        Ok(())
    } else {
        Err(Failure::Check(format!("residual {worst:.3e} exceeds 1e-9")))
    }
}

fn cmd_oracle(path: &Path, q: usize, bins: usize, max_tv: Option<f64>, out: Option<PathBuf>) -> CmdResult {
    let cfg = RunConfig::load(path)?;
    let exp = Experiment::new(cfg.experiment_config(None)?)?;
    let cmp = oracle_comparison(&exp, q, bins)?;
    let limit = max_tv.unwrap_or(3.0 * cmp.noise_tv);
    let dir = output_dir(&cfg, out)?;
    let mut w = create(&dir, "density.csv")?;
    output::write_density(&mut w, &Provenance::new(cfg.seed, &cfg), &cmp.table)?;
    w.flush()?;
    println!(
        "cells={} trials={} tv={:.4} expected_noise={:.4} riemann_sum={:.6}",
        cmp.cells,
        cmp.trials,
        cmp.tv,
        cmp.noise_tv,
        cmp.table.riemann_sum()
    );
    if cmp.tv <= limit {
        Ok(())
    } else {
        Err(Failure::Check(format!("tv {:.4} exceeds {limit:.4}", cmp.tv)))
    }
}
