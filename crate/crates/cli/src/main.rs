//! The `orps` tool: solve, certify and verify (omega, rho)-periodic solutions of
//! impulsive integro-differential systems from JSON problem configurations.
//!
//! Subcommands: `solve`, `bounds`, `verify`, `sweep`. Outputs are flat
//! files (`trajectory.csv`, `report.json`, `bounds.json`, `sweep.csv`)
//! written to `--out`. Logging level comes from the `ORPS_LOG` environment
//! variable.

mod catalog;
mod config;
mod expr;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use serde::Serialize;

use orps_core::{
    certificate_with_growth, check_assumptions, estimate_growth, kernel_grid_lhs,
    solve_linear_periodic, solve_semilinear_picard, validate_solution, AssumptionReport,
    Certificate, ConvergenceLog, Error as CoreError, KernelVariant, PicardWorkspace,
    ValidationReport, ValidationTolerances,
};

use config::ProblemConfig;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_ASSUMPTIONS: u8 = 3;
const EXIT_SINGULAR_GAP: u8 = 4;

#[derive(Parser)]
#[command(name = "orps", version, about = "periodic solutions of impulsive integro-differential systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to a JSON problem configuration, or a catalog name.
    #[arg(long)]
    config: String,
    /// Output directory for generated files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the configuration's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent jobs (used by sweep).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Proceed even when assumption checks fail (used by solve).
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the periodic solution and write trajectory + report.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Run exactly N fixed-point iterations instead of solving to tolerance.
        #[arg(long)]
        iterate_only: Option<usize>,
    },
    /// Evaluate the closed-form kernel bounds and their numeric left-hand sides.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-validate an externally supplied trajectory.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectory CSV to verify (defaults to <out>/trajectory.csv).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Solve over a parameter grid and tabulate certificates.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORPS_LOG", "error")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve {
            common,
            iterate_only,
        } => cmd_solve(&common, iterate_only),
        Command::Bounds { common } => cmd_bounds(&common),
        Command::Verify { common, trajectory } => cmd_verify(&common, trajectory),
        Command::Sweep { common } => cmd_sweep(&common),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("orps: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn load_config(arg: &str, seed_override: Option<u64>) -> Result<ProblemConfig> {
    let name = arg.strip_prefix("catalog:").unwrap_or(arg);
    let mut cfg = if Path::new(arg).exists() {
        let text = fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
        ProblemConfig::from_json(&text)?
    } else if let Some(cfg) = catalog::lookup(name) {
        cfg
    } else {
        return Err(anyhow!(
            "config {arg:?} is neither a readable file nor a catalog name (known: {})",
            catalog::NAMES.join(", ")
        ));
    };
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    schema: u64,
    command: &'static str,
    name: &'a str,
    dimension: usize,
    omega: f64,
    seed: u64,
    forced: bool,
    status: &'a str,
    exit_code: u8,
    assumptions: &'a AssumptionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<&'a Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_stale_nu: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<&'a ConvergenceLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a ValidationReport>,
}

fn cmd_solve(common: &CommonArgs, iterate_only: Option<usize>) -> Result<u8> {
    let force = common.force;
    let cfg = load_config(&common.config, common.seed)?;
    let sys = cfg.build_system()?;
    fs::create_dir_all(&common.out)?;
    info!("solving {:?} (n = {}, omega = {})", cfg.name, sys.dim(), sys.omega());

    let assumptions = check_assumptions(&sys, 1e-8, 64, cfg.seed);
    if !assumptions.overall && !force {
        let report = SolveReport {
            schema: config::SCHEMA_VERSION,
            command: "solve",
            name: &cfg.name,
            dimension: sys.dim(),
            omega: sys.omega(),
            seed: cfg.seed,
            forced: force,
            status: "assumption-failure",
            exit_code: EXIT_ASSUMPTIONS,
            assumptions: &assumptions,
            certificate: None,
            certificate_stale_nu: None,
            convergence: None,
            validation: None,
        };
        output::write_json(&common.out.join("report.json"), &report)?;
        eprintln!(
            "assumption check failed: {:?} (use --force to solve anyway)",
            assumptions.failed_ids()
        );
        return Ok(EXIT_ASSUMPTIONS);
    }

    let picard = cfg.picard_config();
    let quad = picard.quad;

    if let Some(iters) = iterate_only {
        let ws = PicardWorkspace::new(&sys, picard.grid, quad).map_err(core_to_anyhow)?;
        let mut y = ws.zero_trajectory();
        for _ in 0..iters {
            y = ws.apply(&y).map_err(core_to_anyhow)?;
        }
        output::write_trajectory_csv(&common.out.join("trajectory.csv"), &y)?;
        let report = SolveReport {
            schema: config::SCHEMA_VERSION,
            command: "solve",
            name: &cfg.name,
            dimension: sys.dim(),
            omega: sys.omega(),
            seed: cfg.seed,
            forced: force,
            status: "iterated",
            exit_code: EXIT_OK,
            assumptions: &assumptions,
            certificate: None,
            certificate_stale_nu: None,
            convergence: None,
            validation: None,
        };
        output::write_json(&common.out.join("report.json"), &report)?;
        return Ok(EXIT_OK);
    }

    // certificate (with nu-doubling when estimated constants go stale)
    let growth = estimate_growth(&sys.a, 2.0 * sys.omega(), 64).map_err(core_to_anyhow)?;
    let mut nu = cfg.nu;
    let mut stale = false;
    let (trajectory, log, certificate) = loop {
        let cert = match certificate_with_growth(&sys, nu, cfg.seed, &growth) {
            Ok(c) => c,
            Err(CoreError::SingularGap { .. }) => {
                let report = SolveReport {
                    schema: config::SCHEMA_VERSION,
                    command: "solve",
                    name: &cfg.name,
                    dimension: sys.dim(),
                    omega: sys.omega(),
                    seed: cfg.seed,
                    forced: force,
                    status: "singular-gap",
                    exit_code: EXIT_ASSUMPTIONS,
                    assumptions: &assumptions,
                    certificate: None,
                    certificate_stale_nu: None,
                    convergence: None,
                    validation: None,
                };
                output::write_json(&common.out.join("report.json"), &report)?;
                return Ok(EXIT_ASSUMPTIONS);
            }
            Err(e) => return Err(core_to_anyhow(e)),
        };
        let supplied = cert.lipschitz_supplied;
        let solved = if sys.is_linear() {
            solve_linear_periodic(&sys, &quad).map(|trajectory| (trajectory, ConvergenceLog {
                converged: true,
                iterations: 1,
                ..Default::default()
            }))
        } else {
            solve_semilinear_picard(&sys, &picard).map(|s| (s.trajectory, s.log))
        };
        match solved {
            Ok((trajectory, log)) => {
                let escaped = log.sup_norm_max > nu;
                if escaped && !supplied && nu < 1e12 {
                    debug!("iterates left the nu-ball ({nu}); re-estimating with nu doubled");
                    stale = true;
                    nu *= 2.0;
                    continue;
                }
                break (trajectory, log, Some(cert));
            }
            Err(CoreError::NoConvergence {
                iterations,
                last_distance,
                log,
            }) => {
                let report = SolveReport {
                    schema: config::SCHEMA_VERSION,
                    command: "solve",
                    name: &cfg.name,
                    dimension: sys.dim(),
                    omega: sys.omega(),
                    seed: cfg.seed,
                    forced: force,
                    status: "no-convergence",
                    exit_code: EXIT_NO_CONVERGENCE,
                    assumptions: &assumptions,
                    certificate: Some(&cert),
                    certificate_stale_nu: Some(stale),
                    convergence: Some(&log),
                    validation: None,
                };
                output::write_json(&common.out.join("report.json"), &report)?;
                eprintln!(
                    "no convergence after {iterations} iterations (last distance {last_distance:.3e})"
                );
                return Ok(EXIT_NO_CONVERGENCE);
            }
            Err(e) => return Err(core_to_anyhow(e)),
        }
    };

    let tols = ValidationTolerances {
        periodicity: (100.0 * picard.tol).max(1e-7),
        ode: 1e-3,
        jump: 1e-10,
    };
    let validation =
        validate_solution(&sys, &trajectory, &tols, &cfg.step_config()).map_err(core_to_anyhow)?;
    output::write_trajectory_csv(&common.out.join("trajectory.csv"), &trajectory)?;
    let ok = log.converged && validation.pass;
    let report = SolveReport {
        schema: config::SCHEMA_VERSION,
        command: "solve",
        name: &cfg.name,
        dimension: sys.dim(),
        omega: sys.omega(),
        seed: cfg.seed,
        forced: force,
        status: if ok { "converged" } else { "validation-failure" },
        exit_code: if ok { EXIT_OK } else { EXIT_NO_CONVERGENCE },
        assumptions: &assumptions,
        certificate: certificate.as_ref(),
        certificate_stale_nu: Some(stale),
        convergence: Some(&log),
        validation: Some(&validation),
    };
    output::write_json(&common.out.join("report.json"), &report)?;
    println!(
        "{}: periodicity residual {:.3e}, |y| = {:.6}",
        if ok { "converged" } else { "NOT validated" },
        validation.periodicity_residual,
        trajectory.sup_norm()
    );
    Ok(if ok { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

#[derive(Serialize)]
struct NumericLhs {
    t_grid_points: usize,
    max_integral: f64,
    max_impulse_sum: f64,
    /// C2 - max integral (nonnegative when the bound dominates).
    margin_c2: f64,
    margin_c1: f64,
}

#[derive(Serialize)]
struct BoundsReportOut<'a> {
    schema: u64,
    command: &'static str,
    name: &'a str,
    growth: &'a orps_core::GrowthEstimate,
    general: &'a orps_core::BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    commuting: Option<&'a orps_core::BoundReport>,
    numeric_general: &'a NumericLhs,
    #[serde(skip_serializing_if = "Option::is_none")]
    numeric_commuting: Option<&'a NumericLhs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    commuting_note: Option<String>,
}

fn cmd_bounds(common: &CommonArgs) -> Result<u8> {
    let cfg = load_config(&common.config, common.seed)?;
    let sys = cfg.build_system()?;
    fs::create_dir_all(&common.out)?;
    let growth = estimate_growth(&sys.a, 2.0 * sys.omega(), 64).map_err(core_to_anyhow)?;
    let general = match orps_core::bound_report(&sys, &growth, KernelVariant::General) {
        Ok(r) => r,
        Err(CoreError::SingularGap { cond }) => {
            eprintln!("gap operator singular (cond {cond:.3e}); bounds undefined");
            return Ok(EXIT_SINGULAR_GAP);
        }
        Err(e) => return Err(core_to_anyhow(e)),
    };
    let commuting = orps_core::bound_report(&sys, &growth, KernelVariant::Commuting).ok();

    let quad = cfg.picard_config().quad;
    let ts: Vec<f64> = (0..64).map(|k| sys.omega() * (k as f64 / 63.0)).collect();
    let lhs_general =
        kernel_grid_lhs(&sys, &ts, &quad, KernelVariant::General).map_err(core_to_anyhow)?;
    let numeric_general = summarize_lhs(&ts, &lhs_general, &general);
    let (numeric_commuting, commuting_note) =
        match kernel_grid_lhs(&sys, &ts, &quad, KernelVariant::Commuting) {
            Ok(lhs) => (
                commuting.as_ref().map(|rep| summarize_lhs(&ts, &lhs, rep)),
                None,
            ),
            Err(e) => (None, Some(format!("commuting kernel unavailable: {e}"))),
        };

    let out = BoundsReportOut {
        schema: config::SCHEMA_VERSION,
        command: "bounds",
        name: &cfg.name,
        growth: &growth,
        general: &general,
        commuting: commuting.as_ref(),
        numeric_general: &numeric_general,
        numeric_commuting: numeric_commuting.as_ref(),
        commuting_note,
    };
    output::write_json(&common.out.join("bounds.json"), &out)?;
    println!(
        "C1 = {}, C2 = {}, numeric maxima {} / {}",
        general.c1, general.c2, numeric_general.max_impulse_sum, numeric_general.max_integral
    );
    Ok(EXIT_OK)
}

fn summarize_lhs(ts: &[f64], lhs: &[(f64, f64)], report: &orps_core::BoundReport) -> NumericLhs {
    let max_integral = lhs.iter().map(|x| x.0).fold(0.0, f64::max);
    let max_impulse_sum = lhs.iter().map(|x| x.1).fold(0.0, f64::max);
    NumericLhs {
        t_grid_points: ts.len(),
        max_integral,
        max_impulse_sum,
        margin_c2: report.c2 - max_integral,
        margin_c1: report.c1 - max_impulse_sum,
    }
}

#[derive(Serialize)]
struct VerifyReportOut<'a> {
    schema: u64,
    command: &'static str,
    name: &'a str,
    trajectory: String,
    validation: &'a ValidationReport,
    exit_code: u8,
}

fn cmd_verify(common: &CommonArgs, trajectory: Option<PathBuf>) -> Result<u8> {
    let cfg = load_config(&common.config, common.seed)?;
    let sys = cfg.build_system()?;
    fs::create_dir_all(&common.out)?;
    let path = trajectory.unwrap_or_else(|| common.out.join("trajectory.csv"));
    let traj = output::read_trajectory_csv(&path, &sys.schedule)?;
    if traj.dim != sys.dim() {
        return Err(anyhow!(
            "trajectory dimension {} does not match the configured system ({})",
            traj.dim,
            sys.dim()
        ));
    }
    let tols = ValidationTolerances {
        periodicity: (100.0 * cfg.solver.tol).max(1e-7),
        ode: 1e-3,
        jump: 1e-10,
    };
    let validation =
        validate_solution(&sys, &traj, &tols, &cfg.step_config()).map_err(core_to_anyhow)?;
    let code = if validation.pass { EXIT_OK } else { EXIT_NO_CONVERGENCE };
    let out = VerifyReportOut {
        schema: config::SCHEMA_VERSION,
        command: "verify",
        name: &cfg.name,
        trajectory: path.display().to_string(),
        validation: &validation,
        exit_code: code,
    };
    output::write_json(&common.out.join("verify.json"), &out)?;
    if validation.pass {
        println!("verification passed (periodicity {:.3e})", validation.periodicity_residual);
    } else {
        println!(
            "verification FAILED: periodicity {:.3e}, ode {:.3e}, jump failures {:?}",
            validation.periodicity_residual, validation.ode_residual, validation.jump_failures
        );
    }
    Ok(code)
}

fn cmd_sweep(common: &CommonArgs) -> Result<u8> {
    let jobs = common.jobs.max(1);
    let cfg = load_config(&common.config, common.seed)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| anyhow!("config has no sweep section"))?;
    if sweep.params.is_empty() {
        return Err(anyhow!("sweep section lists no parameters"));
    }
    fs::create_dir_all(&common.out)?;
    let base = serde_json::to_value(&cfg).context("re-serializing config")?;

    // cartesian product of all parameter values
    let mut grid: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for param in &sweep.params {
        let mut next = Vec::new();
        for point in &grid {
            for &v in &param.values {
                let mut p = point.clone();
                p.push((param.pointer.clone(), v));
                next.push(p);
            }
        }
        grid = next;
    }
    info!("sweep over {} grid points with {jobs} jobs", grid.len());

    let run_point = |point: &Vec<(String, f64)>| -> Vec<String> {
        let mut value = base.clone();
        for (pointer, v) in point {
            if let Some(slot) = value.pointer_mut(pointer) {
                *slot = serde_json::json!(v);
            }
        }
        let mut row: Vec<String> = point.iter().map(|(_, v)| format!("{v}")).collect();
        let outcome = (|| -> Result<(f64, f64, bool, usize, f64)> {
            let cfg: ProblemConfig = serde_json::from_value(value).context("sweep config")?;
            cfg.validate()?;
            let sys = cfg.build_system()?;
            let cert = orps_core::contraction_certificate(&sys, cfg.nu, cfg.seed)
                .map_err(core_to_anyhow)?;
            let picard = cfg.picard_config();
            match if sys.is_linear() {
                solve_linear_periodic(&sys, &picard.quad).map(|t| (t, 1usize, 0.0))
            } else {
                solve_semilinear_picard(&sys, &picard).map(|s| {
                    let final_d = s.log.distances.last().copied().unwrap_or(0.0);
                    (s.trajectory, s.log.iterations, final_d)
                })
            } {
                Ok((_traj, iterations, final_d)) => {
                    Ok((cert.lc2, cert.beta_c2, true, iterations, final_d))
                }
                Err(CoreError::NoConvergence {
                    iterations,
                    last_distance,
                    ..
                }) => Ok((cert.lc2, cert.beta_c2, false, iterations, last_distance)),
                Err(e) => Err(core_to_anyhow(e)),
            }
        })();
        match outcome {
            Ok((lc2, beta_c2, converged, iterations, final_residual)) => {
                row.extend([
                    format!("{lc2}"),
                    format!("{beta_c2}"),
                    format!("{converged}"),
                    format!("{iterations}"),
                    format!("{final_residual}"),
                ]);
            }
            Err(e) => {
                debug!("sweep point failed: {e:#}");
                row.extend([
                    "nan".into(),
                    "nan".into(),
                    "false".into(),
                    "0".into(),
                    "nan".into(),
                ]);
            }
        }
        row
    };

    let rows: Vec<Vec<String>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("thread pool")?;
        pool.install(|| {
            use rayon::prelude::*;
            grid.par_iter().map(run_point).collect()
        })
    } else {
        grid.iter().map(run_point).collect()
    };

    let mut text = String::new();
    for param in &sweep.params {
        text.push_str(&format!("param:{},", param.pointer));
    }
    text.push_str("lc2,beta_c2,converged,iterations,final_residual\n");
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(common.out.join("sweep.csv"), text)?;
    println!("sweep complete: {} grid points", grid.len());
    Ok(EXIT_OK)
}

fn core_to_anyhow(e: CoreError) -> anyhow::Error {
    anyhow!("{e}")
}
