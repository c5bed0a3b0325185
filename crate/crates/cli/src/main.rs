//! Command-line front end: config ingestion, experiment orchestration and
//! report emission for the degenerate-diffusion laboratory.
//!
//! Exit codes: 0 = pass, 1 = verification failure (a numerical assertion did
//! not hold), 2 = usage or configuration error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use degenflow_core::config::{config_hash, RunConfig};
use degenflow_core::error::Error;
use degenflow_core::estimates::{
    caccioppoli_report, comparison_report, diffquot_estimate_report, higher_integrability_report,
    uniform_estimate_report, EstimateReport,
};
use degenflow_core::grid::ScalarField;
use degenflow_core::inequality::run_lemma_suite;
use degenflow_core::report::{
    convergence_csv_columns, convergence_csv_row, ensure_writable, estimate_summary,
    lemma_csv_columns, lemma_csv_row, write_csv, RunManifest,
};
use degenflow_core::solver::{self, manufactured, Solution};
use degenflow_core::ExecMode;

#[derive(Parser)]
#[command(
    name = "degenflow",
    about = "Numerical laboratory for a widely degenerate parabolic diffusion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the TOML run configuration
    #[arg(long, global = true, default_value = "degenflow.toml")]
    config: PathBuf,

    /// Output directory for CSV reports and snapshots
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for the randomized suites (recorded in every output)
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads (0 = library default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized structural-inequality suites and write lemmas.csv
    VerifyLemmas,
    /// Run the regularized solve; write snapshots and the convergence log
    Solve,
    /// Solve and emit all five energy-estimate reports
    Estimates,
    /// Run a halving epsilon ladder and check the comparison distances
    EpsSweep,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DEGENFLOW_LOG")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failure: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    /// a numerical assertion did not hold (exit 1)
    Verification(String),
    /// bad invocation, config or geometry (exit 2)
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            // a stalled Newton iteration is a run outcome, not a misuse
            Error::SolverStall { .. } | Error::SolveStep { .. } => {
                Failure::Verification(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        configure_threads(cli.threads)?;
    }
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", cli.config.display())))?;
    let cfg = RunConfig::from_toml(&text)?;
    ensure_writable(&cli.out)?;
    let command_name = match cli.command {
        Command::VerifyLemmas => "verify-lemmas",
        Command::Solve => "solve",
        Command::Estimates => "estimates",
        Command::EpsSweep => "eps-sweep",
    };
    let manifest = RunManifest::new(
        command_name,
        &cli.config,
        &cli.out,
        cli.seed,
        config_hash(&text),
    );
    match cli.command {
        Command::VerifyLemmas => cmd_verify_lemmas(&cfg, &manifest),
        Command::Solve => cmd_solve(&cfg, &manifest),
        Command::Estimates => cmd_estimates(&cfg, &manifest),
        Command::EpsSweep => cmd_eps_sweep(&cfg, &manifest),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: usize) -> Result<(), Failure> {
    // sequential build: the flag is accepted but has no effect
    Ok(())
}

fn exec_mode() -> ExecMode {
    if cfg!(feature = "parallel") {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

fn cmd_verify_lemmas(cfg: &RunConfig, manifest: &RunManifest) -> Result<(), Failure> {
    let suite = cfg.lemmas.suite(manifest.seed);
    if suite.p_values.is_empty() || suite.delta_values.is_empty() || suite.n_values.is_empty() {
        return Err(Failure::Usage("empty lemma parameter grid".into()));
    }
    let reports = run_lemma_suite(&suite, exec_mode())?;
    let rows: Vec<String> = reports.iter().map(lemma_csv_row).collect();
    let path = write_csv(manifest, "lemmas.csv", lemma_csv_columns(), &rows)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    let failures: Vec<&_> = reports
        .iter()
        .filter(|r| !r.passes(suite.tolerance))
        .collect();
    if failures.is_empty() {
        println!("all {} lemma cells pass (tolerance {:.1e})", reports.len(), suite.tolerance);
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "{} lemma cells below tolerance; worst min_gap {:.3e}",
            failures.len(),
            failures
                .iter()
                .map(|r| r.min_gap)
                .fold(f64::INFINITY, f64::min)
        )))
    }
}

fn solve_configured(cfg: &RunConfig, eps: Option<f64>) -> Result<(Solution, ScalarField), Failure> {
    let spec = cfg.build_problem(eps)?;
    let f = spec.f.clone();
    let sol = solver::solve(&spec)?;
    Ok((sol, f))
}

fn cmd_solve(cfg: &RunConfig, manifest: &RunManifest) -> Result<(), Failure> {
    let (sol, _) = solve_configured(cfg, None)?;
    let snap = manifest.out_dir.join("u.bin");
    sol.u.write_snapshot(&snap)?;
    let mut csv = Vec::new();
    sol.u.write_csv(&mut csv)?;
    fs::write(manifest.out_dir.join("u.csv"), csv).map_err(Error::from)?;
    let rows: Vec<String> = sol.logs.iter().map(convergence_csv_row).collect();
    write_csv(manifest, "convergence.csv", convergence_csv_columns(), &rows)?;
    println!(
        "wrote {} and convergence.csv ({} steps)",
        snap.display(),
        sol.logs.len()
    );
    if cfg.data.profile == "manufactured" {
        let grid = sol.u.grid().clone();
        let vol = grid.cell_volume();
        let mut rows = Vec::with_capacity(grid.nt);
        for it in 0..grid.nt {
            let t = grid.time(it);
            let slice = sol.u.slice(it);
            let mut l2 = 0.0;
            let mut sup = 0.0_f64;
            for i in 0..grid.spatial_len() {
                let e = slice[i] - manufactured::exact(&grid.coords(i), t);
                l2 += vol * e * e;
                sup = sup.max(e.abs());
            }
            rows.push(format!("{it},{t},{:.6e},{:.6e}", l2.sqrt(), sup));
        }
        write_csv(manifest, "errors.csv", "step,t,l2_error,sup_error", &rows)?;
        println!("wrote errors.csv (exact-profile comparison)");
    }
    Ok(())
}

fn cmd_estimates(cfg: &RunConfig, manifest: &RunManifest) -> Result<(), Failure> {
    let est = cfg
        .estimates
        .as_ref()
        .ok_or_else(|| Failure::Usage("the estimates command needs an [estimates] section".into()))?;
    let (sol, f) = solve_configured(cfg, None)?;
    let params = cfg.model_params()?;
    let grid = sol.u.grid().clone();
    let t_vertex = grid.time(grid.nt - 1);
    let z0 = (est.center.as_slice(), t_vertex);
    let big_r = est.radius;
    let rho = big_r / 2.0;

    let mut reports = vec![
        caccioppoli_report(&sol.u, &f, &params, big_r, z0)?,
        uniform_estimate_report(&sol.u, &f, &params, rho, z0)?,
        diffquot_estimate_report(&sol.u, &f, &params, rho, z0, est.diff_axis, est.diff_h)?,
        higher_integrability_report(&sol.u, &f, &params, rho, z0)?,
    ];
    // comparison rung: a second solve at half the configured eps
    let (sol_fine, f_fine) = solve_configured(cfg, Some(params.eps / 2.0))?;
    reports.push(comparison_report(
        &sol.u, &sol_fine.u, &f, &f_fine, &params, params.eps, big_r, z0,
    )?);

    let rows: Vec<String> = reports.iter().map(EstimateReport::csv_row).collect();
    let path = write_csv(manifest, "estimates.csv", EstimateReport::csv_header(), &rows)?;
    fs::write(
        manifest.out_dir.join("estimates.txt"),
        manifest.header() + &estimate_summary(&reports),
    )
    .map_err(Error::from)?;
    println!("wrote {} and estimates.txt ({} reports)", path.display(), reports.len());
    Ok(())
}

fn cmd_eps_sweep(cfg: &RunConfig, manifest: &RunManifest) -> Result<(), Failure> {
    let ladder = cfg.eps_ladder();
    let params = cfg.model_params()?;
    let grid = cfg.build_grid()?;
    let t_vertex = grid.time(grid.nt - 1);
    let (center, big_r) = match &cfg.estimates {
        Some(e) => (e.center.clone(), e.radius),
        None => {
            // default geometry: a centered cylinder filling half the box,
            // capped so its time window stays inside the grid
            let center: Vec<f64> = grid.extent.iter().map(|(a, b)| 0.5 * (a + b)).collect();
            let r_space = grid
                .extent
                .iter()
                .map(|(a, b)| 0.5 * (b - a))
                .fold(f64::INFINITY, f64::min);
            let span = t_vertex - grid.t0;
            (center, r_space.min((0.75 * span).sqrt()))
        }
    };
    let z0 = (center.as_slice(), t_vertex);

    // the rungs are independent solves; run them as parallel jobs
    let solves: Vec<Result<(Solution, ScalarField), Error>> = run_rungs(cfg, &ladder);
    let mut rungs = Vec::with_capacity(ladder.len());
    for r in solves {
        rungs.push(r?);
    }

    let mut rows = Vec::new();
    let mut distances = Vec::new();
    for k in 0..rungs.len().saturating_sub(1) {
        let (coarse, f_c) = &rungs[k];
        let (fine, f_f) = &rungs[k + 1];
        let rep = comparison_report(
            &coarse.u, &fine.u, f_c, f_f, &params, ladder[k], big_r, z0,
        )?;
        distances.push(rep.lhs);
        rows.push(rep.csv_row());
    }
    let path = write_csv(manifest, "eps_sweep.csv", EstimateReport::csv_header(), &rows)?;
    println!("wrote {} ({} ladder gaps)", path.display(), rows.len());

    if ladder.len() < 2 {
        println!("single rung: report-only mode, no monotonicity to check");
        return Ok(());
    }
    let halving = ladder
        .windows(2)
        .all(|w| (w[1] - w[0] / 2.0).abs() <= 1e-12 * w[0]);
    if !halving {
        println!("non-halving ladder: distances reported, monotonicity not asserted");
        return Ok(());
    }
    for k in 1..distances.len() {
        if distances[k] > 1.1 * distances[k - 1] {
            return Err(Failure::Verification(format!(
                "ladder distance increased at rung {k}: {:.3e} -> {:.3e}",
                distances[k - 1],
                distances[k]
            )));
        }
    }
    println!("ladder distances nonincreasing across {} gaps", distances.len());
    Ok(())
}

#[cfg(feature = "parallel")]
fn run_rungs(cfg: &RunConfig, ladder: &[f64]) -> Vec<Result<(Solution, ScalarField), Error>> {
    use rayon::prelude::*;
    ladder
        .par_iter()
        .map(|eps| {
            let spec = cfg.build_problem(Some(*eps))?;
            let f = spec.f.clone();
            Ok((solver::solve(&spec)?, f))
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_rungs(cfg: &RunConfig, ladder: &[f64]) -> Vec<Result<(Solution, ScalarField), Error>> {
    ladder
        .iter()
        .map(|eps| {
            let spec = cfg.build_problem(Some(*eps))?;
            let f = spec.f.clone();
            Ok((solver::solve(&spec)?, f))
        })
        .collect()
}
