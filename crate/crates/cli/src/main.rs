//! Command-line driver: configuration ingestion, subcommand dispatch, report
//! and CSV emission.
//!
//! Exit codes: 0 success, 1 computational error (typed error printed with
//! context), 2 configuration or parse error.

mod config;
mod render;

use clap::{Parser, Subcommand};
use config::AnalysisConfig;
use cycledeg::adjoint::{periodic_adjoint, perron_residual, AdjointCycle};
use cycledeg::cycle::{find_cycle, least_period_divisor, period_solve, LimitCycle};
use cycledeg::degree::aggregate_degree;
use cycledeg::malkin::{sample_f, BifurcationFunction};
use cycledeg::selftest::run_selftest;
use cycledeg::system::SystemSpec;
use cycledeg::verify::{check_existence_conditions, epsilon_sweep, find_perturbed_orbit};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cycledeg", version, about = "Limit cycles, bifurcation functions and degree predictions for periodically perturbed autonomous systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the limit cycle and report its initial point and least period.
    FindCycle { config: PathBuf },
    /// Monodromy matrix, characteristic multipliers, beta, nondegeneracy.
    Floquet { config: PathBuf },
    /// Periodic adjoint solution and the Perron constant.
    Adjoint { config: PathBuf },
    /// Sample the bifurcation function, write a (theta, f) CSV, list zeros.
    Bifurcation {
        config: PathBuf,
        /// Grid size override (defaults to numerics.samples).
        #[arg(long)]
        samples: Option<usize>,
        /// CSV output path.
        #[arg(long, default_value = "bifurcation.csv")]
        out: PathBuf,
    },
    /// Full degree report for the configured region plus existence verdicts.
    Predict {
        config: PathBuf,
        /// Optional CSV of the per-contact degree contributions.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve for a perturbed periodic orbit at a given eps.
    Verify {
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Seed phase; defaults to the first sign-change zero of f.
        #[arg(long)]
        theta0: Option<f64>,
    },
    /// Run the eps-halving sweep and fit the convergence slope.
    Sweep {
        config: PathBuf,
        /// CSV output path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Run the bundled-example invariant suite.
    Selftest,
}

enum Failure {
    /// Exit 2: configuration or parse problems.
    Config(String),
    /// Exit 1: typed computational error.
    Compute(cycledeg::Error),
    /// Exit 1: failed checks in the selftest suite.
    Selftest(usize),
}

impl From<cycledeg::Error> for Failure {
    fn from(e: cycledeg::Error) -> Self {
        Failure::Compute(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(1)
        }
        Err(Failure::Selftest(count)) => {
            eprintln!("selftest: {count} check(s) failed");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Path) -> Result<AnalysisConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: AnalysisConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|m| Failure::Config(format!("{}: {m}", path.display())))?;
    Ok(cfg)
}

struct Analysis {
    cfg: AnalysisConfig,
    spec: SystemSpec,
    cycle: LimitCycle,
}

/// Build the system and locate its cycle; `"period": "solve"` runs the
/// augmented shooting first and rebuilds the spec with the solved period.
fn analyze(path: &Path) -> Result<Analysis, Failure> {
    let cfg = load_config(path)?;
    let spec = cfg.system().map_err(|e| Failure::Config(e.to_string()))?;
    let nm = &cfg.numerics;
    let (spec, cycle) = if cfg.solve_period() {
        let cycle = period_solve(&spec, &cfg.seed, cfg.section(), nm.tol, nm.mult_tol)?;
        let spec = spec.with_period(cycle.period)?;
        (spec, cycle)
    } else {
        let cycle = find_cycle(&spec, &cfg.seed, cfg.section(), nm.tol, nm.mult_tol)?;
        (spec, cycle)
    };
    Ok(Analysis { cfg, spec, cycle })
}

fn adjoint_of(a: &Analysis) -> Result<AdjointCycle, Failure> {
    Ok(periodic_adjoint(&a.spec, &a.cycle, a.cfg.numerics.tol)?)
}

fn bifurcation_of(
    a: &Analysis,
    adj: &AdjointCycle,
    samples: usize,
) -> Result<BifurcationFunction, Failure> {
    Ok(sample_f(&a.cycle, adj, &a.spec, samples, a.cfg.numerics.panels)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::FindCycle { config } => {
            let a = analyze(&config)?;
            println!("xi0 = {}", render::vector(&a.cycle.xi0));
            println!("T = {}", render::num(a.cycle.period));
            println!("p = {}", a.cycle.p);
            println!(
                "T/p (least period) = {}",
                render::num(a.cycle.period / a.cycle.p as f64)
            );
            Ok(())
        }
        Command::Floquet { config } => {
            let a = analyze(&config)?;
            println!("monodromy =");
            render::print_matrix(&a.cycle.monodromy);
            println!("multipliers:");
            for (i, l) in a.cycle.multipliers.iter().enumerate() {
                let tag = if i == a.cycle.trivial_index {
                    "  (trivial)"
                } else {
                    ""
                };
                println!("  {}{tag}", render::complex(*l));
            }
            println!("beta = {}", a.cycle.beta);
            println!("nondegenerate = {}", a.cycle.nondegenerate);
            let p = least_period_divisor(&a.cycle, 1e-8);
            println!("least period divisor p = {p}");
            Ok(())
        }
        Command::Adjoint { config } => {
            let a = analyze(&config)?;
            let adj = adjoint_of(&a)?;
            println!("z0(0) = {}", render::vector(&adj.z(0.0)));
            println!("perron constant = {}", render::num(adj.perron_constant));
            println!("sign factor = {}", adj.sign_factor);
            println!(
                "perron residual = {}",
                render::num(perron_residual(&a.cycle, &adj))
            );
            Ok(())
        }
        Command::Bifurcation {
            config,
            samples,
            out,
        } => {
            let a = analyze(&config)?;
            let adj = adjoint_of(&a)?;
            let m = samples.unwrap_or(a.cfg.numerics.samples);
            if m < 16 {
                return Err(Failure::Config(format!("samples must be >= 16, got {m}")));
            }
            let bf = bifurcation_of(&a, &adj, m)?;
            let mut csv = String::from("theta,f\n");
            for (th, v) in bf.thetas().iter().zip(bf.values()) {
                csv.push_str(&format!("{},{}\n", render::csv_num(*th), render::csv_num(*v)));
            }
            write_file(&out, &csv)?;
            println!("wrote {} rows to {}", bf.thetas().len(), out.display());
            if bf.identically_zero_suspect() {
                println!("IdenticallyZeroSuspect: |f| below noise threshold on the whole grid");
            }
            render::print_zero_table(&bf);
            Ok(())
        }
        Command::Predict { config, csv } => {
            let a = analyze(&config)?;
            let adj = adjoint_of(&a)?;
            let bf = bifurcation_of(&a, &adj, a.cfg.numerics.samples)?;
            let region = a.cfg.region();
            let report = aggregate_degree(&a.spec, &a.cycle, &adj, &bf, &region)?;
            render::print_degree_report(&report);
            let summary = check_existence_conditions(&bf, &report)?;
            render::print_condition_summary(&summary);
            if let Some(path) = csv {
                write_file(&path, &render::degree_csv(&report))?;
                println!("wrote contributions to {}", path.display());
            }
            Ok(())
        }
        Command::Verify {
            config,
            eps,
            theta0,
        } => {
            let a = analyze(&config)?;
            if !(0.0..=0.1).contains(&eps) {
                return Err(Failure::Config(format!("--eps must be in [0, 0.1], got {eps}")));
            }
            let theta0 = match theta0 {
                Some(t) => t,
                None => {
                    let adj = adjoint_of(&a)?;
                    let bf = bifurcation_of(&a, &adj, a.cfg.numerics.samples)?;
                    bf.zeros()
                        .iter()
                        .find(|z| z.kind == cycledeg::malkin::ZeroKind::SignChange)
                        .map(|z| z.theta_star)
                        .unwrap_or(0.0)
                }
            };
            let orbit = find_perturbed_orbit(&a.spec, &a.cycle, theta0, eps, a.cfg.numerics.tol)?;
            println!("eps = {}", render::num(eps));
            println!("seed phase theta0 = {}", render::num(theta0));
            println!("xi_eps = {}", render::vector(&orbit.xi));
            println!("residual = {}", render::num(orbit.residual));
            println!("theta_hat = {}", render::num(orbit.theta_hat));
            println!("sup distance to cycle = {}", render::num(orbit.sup_distance));
            Ok(())
        }
        Command::Sweep { config, out } => {
            let a = analyze(&config)?;
            let nm = &a.cfg.numerics;
            let adj = adjoint_of(&a)?;
            let bf = bifurcation_of(&a, &adj, nm.samples)?;
            let theta0 = bf
                .zeros()
                .iter()
                .find(|z| z.kind == cycledeg::malkin::ZeroKind::SignChange)
                .map(|z| z.theta_star)
                .unwrap_or(0.0);
            let sweep = epsilon_sweep(&a.spec, &a.cycle, theta0, nm.eps0, nm.halvings, nm.tol)?;
            let mut csv = String::from("eps,sup_distance\n");
            for (e, s) in sweep.eps.iter().zip(&sweep.sup_distance) {
                csv.push_str(&format!("{},{}\n", render::csv_num(*e), render::csv_num(*s)));
            }
            write_file(&out, &csv)?;
            println!("wrote {} rows to {}", sweep.eps.len(), out.display());
            println!(
                "slope = {} (log-log fit residual {})",
                render::num(sweep.slope),
                render::num(sweep.slope_residual)
            );
            if let Some((eps, err)) = sweep.failed {
                return Err(Failure::Compute(cycledeg::Error::PartialSweep {
                    failed_eps: eps,
                    completed: sweep.eps.len(),
                    source: err,
                }));
            }
            Ok(())
        }
        Command::Selftest => {
            let checks = run_selftest();
            let mut all_ok = true;
            for c in &checks {
                println!(
                    "[{}] {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                all_ok &= c.passed;
            }
            if all_ok {
                println!("selftest: all {} checks passed", checks.len());
                Ok(())
            } else {
                Err(Failure::Selftest(
                    checks.iter().filter(|c| !c.passed).count(),
                ))
            }
        }
    }
}
