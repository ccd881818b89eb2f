mod args;
mod input;

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use consensus_robustness::analysis::{
    flocking_bounds_check, pi_projection_comparison, ratio_constancy, sig12, sweep, verify_theorem_bounds,
    BoundsCheck, FlockingCheck, PiProjectionComparison,
};
use consensus_robustness::convergence::{convergence_time, first_projected_below, simulate_shock};
use consensus_robustness::gramian::{
    flocking_weighted_gramian, observability_gramian_direct_capped, observability_gramian_series,
    solve_lyapunov_direct_capped, solve_lyapunov_series, DEFAULT_DIRECT_CAP, DEFAULT_SERIES_TOL,
};
use consensus_robustness::io::format_matrix;
use consensus_robustness::projection::StabilityCertificate;
use consensus_robustness::stochastic::set_cache_cap_bytes;
use consensus_robustness::{
    project, ConvergenceReport, Error, GramianReport, Projector, ShockResponse, StochasticMatrix,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use args::{Cli, Command, MethodArg, ProjectorArg, VariantArg};
use input::{load, sweep_family, usage, Failure, InputInfo};

const CACHE_ENV: &str = "CONSENSUS_ROBUSTNESS_CACHE_MB";

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    command: &'static str,
    input: InputInfo,
    warnings: Vec<String>,
    report: T,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    n: usize,
    doubly_stochastic: bool,
    pi: &'a [f64],
    pi_residual: f64,
    certificate: StabilityCertificate,
    gramian: GramianReport,
    convergence: ConvergenceReport,
    t_projected_half: u64,
    bounds: BoundsCheck,
    pi_projection: PiProjectionComparison,
}

#[derive(Serialize)]
struct GramianOut {
    certificate: StabilityCertificate,
    gramian: GramianReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda2: Option<f64>,
}

#[derive(Serialize)]
struct VerifyOut {
    bounds: BoundsCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    flocking: Option<FlockingCheck>,
}

#[derive(Serialize)]
struct SimulateOut {
    rho_qa: f64,
    shock: ShockResponse,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Domain(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit<T: Serialize>(
    path: Option<&Path>,
    command: &'static str,
    input: InputInfo,
    warnings: Vec<String>,
    report: T,
) -> Result<(), Failure> {
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let env = Envelope {
        command,
        input,
        warnings,
        report,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("reports serialise");
    text.push('\n');
    write_text(path, &text)
}

fn check_epsilon(epsilon: f64, warnings: &mut Vec<String>) -> Result<(), Failure> {
    if !(epsilon > 0.0 && epsilon < 2.0) {
        return usage(format!("--epsilon must lie in (0, 2), got {epsilon}"));
    }
    if epsilon >= 1.0 {
        warnings.push(format!(
            "epsilon = {epsilon} >= 1: convergence times at this level are not comparable across networks"
        ));
    }
    Ok(())
}

fn check_grid(ns: &[usize], jobs: usize) -> Result<(), Failure> {
    if ns.len() < 3 {
        return usage(format!("--ns needs at least 3 sizes, got {}", ns.len()));
    }
    if jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    Ok(())
}

fn certificate(a: &StochasticMatrix, kind: ProjectorArg) -> Result<StabilityCertificate, Failure> {
    let proj = match kind {
        ProjectorArg::Uniform => Projector::uniform(a.n())?,
        ProjectorArg::Pi => Projector::pi_weighted(&a.invariant_distribution()?),
    };
    Ok(project(a, &proj)?.certificate())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate(args) => {
            let (a, info) = load(&args.source)?;
            let comment = info
                .descriptor
                .clone()
                .or(info.path.clone().map(|p| format!("from {p}")));
            write_text(args.output.as_deref(), &format_matrix(a.matrix(), comment.as_deref()))
        }
        Command::Analyze(args) => {
            let mut warnings = Vec::new();
            check_epsilon(args.epsilon, &mut warnings)?;
            let (a, info) = load(&args.source)?;
            a.require_primitive()?;
            let pi = a.invariant_distribution()?;
            let net = project(&a, &Projector::uniform(a.n())?)?;
            let gramian = if a.n() <= DEFAULT_DIRECT_CAP {
                solve_lyapunov_direct_capped(&net, DEFAULT_DIRECT_CAP)?
            } else {
                solve_lyapunov_series(&net, DEFAULT_SERIES_TOL)?
            };
            let bounds = verify_theorem_bounds(&a)?;
            if !bounds.all_ok() {
                warnings.extend(bounds.violations());
            }
            let report = AnalyzeReport {
                n: a.n(),
                doubly_stochastic: a.is_doubly_stochastic(1e-12),
                pi: pi.as_slice(),
                pi_residual: pi.residual(),
                certificate: net.certificate(),
                gramian,
                convergence: convergence_time(&a, args.epsilon)?,
                t_projected_half: first_projected_below(&a, 0.5)?,
                bounds,
                pi_projection: pi_projection_comparison(&a)?,
            };
            emit(args.output.as_deref(), "analyze", info, warnings, report)
        }
        Command::Convergence(args) => {
            let mut warnings = Vec::new();
            check_epsilon(args.epsilon, &mut warnings)?;
            let (a, info) = load(&args.source)?;
            let report = convergence_time(&a, args.epsilon)?;
            if !report.monotone_ok {
                warnings.push("probed distances were not monotone in k".into());
            }
            if let Some(path) = &args.curve_csv {
                write_text(Some(path), &report.curve_csv())?;
            }
            emit(args.output.as_deref(), "convergence", info, warnings, report)
        }
        Command::Gramian(args) => {
            if !(args.tol > 0.0) {
                return usage("--tol must be positive");
            }
            let (a, info) = load(&args.source)?;
            let cert = certificate(&a, args.projector)?;
            let (gramian, lambda2) = match args.variant {
                VariantArg::FlockingWeighted => {
                    if args.projector != ProjectorArg::Uniform || args.method == MethodArg::Direct {
                        return usage("flocking-weighted uses the uniform projector and the series method");
                    }
                    let g = flocking_weighted_gramian(&a, args.tol)?;
                    (g.report, Some(g.lambda2))
                }
                variant => {
                    let proj = match args.projector {
                        ProjectorArg::Uniform => Projector::uniform(a.n())?,
                        ProjectorArg::Pi => Projector::pi_weighted(&a.invariant_distribution()?),
                    };
                    let net = project(&a, &proj)?;
                    let direct = match args.method {
                        MethodArg::Auto => a.n() <= args.direct_cap,
                        MethodArg::Direct => true,
                        MethodArg::Series => false,
                    };
                    let report = match (variant, direct) {
                        (VariantArg::Observability, true) => {
                            observability_gramian_direct_capped(&net, args.direct_cap)?
                        }
                        (VariantArg::Observability, false) => observability_gramian_series(&net, args.tol)?,
                        (_, true) => solve_lyapunov_direct_capped(&net, args.direct_cap)?,
                        (_, false) => solve_lyapunov_series(&net, args.tol)?,
                    };
                    (report, None)
                }
            };
            let out = GramianOut {
                certificate: cert,
                gramian,
                lambda2,
            };
            emit(args.output.as_deref(), "gramian", info, Vec::new(), out)
        }
        Command::Sweep(args) => {
            check_grid(&args.ns, args.jobs)?;
            let family = sweep_family(&args.source)?;
            let result = sweep(&family, &args.ns, args.jobs)?;
            if let Some(path) = &args.ratio_plot {
                write_text(Some(path), &ratio_constancy(&family, &args.ns, args.jobs)?.to_csv())?;
            }
            write_text(args.output.as_deref(), &result.to_csv())
        }
        Command::Verify(args) => {
            if let Some(ns) = &args.ns {
                check_grid(ns, args.jobs)?;
                let family = sweep_family(&args.source)?;
                let result = sweep(&family, ns, args.jobs)?;
                let mut csv = result.to_csv();
                for check in result.checks() {
                    let _ = writeln!(
                        csv,
                        "# check n={} trace_bound_ok={} sigma_upper_ok={} sigma_lower_ok={} pi_ratio={}",
                        check.n,
                        check.trace_bound_ok,
                        check.sigma_upper_ok,
                        check.sigma_lower_ok,
                        sig12(check.pi_ratio)
                    );
                    for v in check.violations() {
                        eprintln!("warning: n={}: {v}", check.n);
                    }
                }
                return write_text(args.output.as_deref(), &csv);
            }
            let (a, info) = load(&args.source)?;
            let bounds = verify_theorem_bounds(&a)?;
            let flocking = match flocking_bounds_check(&a) {
                Ok(f) => Some(f),
                Err(Error::NotFlocking) => None,
                Err(e) => return Err(e.into()),
            };
            let mut warnings = bounds.violations();
            if let Some(f) = &flocking {
                if !f.lambda2_ok {
                    warnings.push(format!("lambda2 = {} exceeds 1 - 1/n = {}", f.lambda2, f.lambda2_bound));
                }
            }
            emit(args.output.as_deref(), "verify", info, warnings, VerifyOut { bounds, flocking })
        }
        Command::Simulate(args) => {
            let (a, info) = load(&args.source)?;
            let n = a.n();
            let omega = match (&args.omega, args.shock_seed) {
                (Some(w), _) => w.clone(),
                (None, Some(seed)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
                }
                (None, None) => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            };
            let horizon = match args.horizon {
                Some(h) => h,
                None => 8 * convergence_time(&a, 0.5)?.t as usize,
            };
            let rho_qa = project(&a, &Projector::uniform(n)?)?.spectral_radius();
            let shock = simulate_shock(&a, &omega, horizon)?;
            if let Some(path) = &args.curve_csv {
                let mut csv = String::from("k,state_norm,projected_norm\n");
                for (k, (s, q)) in shock.state_norms.iter().zip(&shock.projected_norms).enumerate() {
                    let _ = writeln!(csv, "{k},{},{}", sig12(*s), sig12(*q));
                }
                write_text(Some(path), &csv)?;
            }
            emit(args.output.as_deref(), "simulate", info, Vec::new(), SimulateOut { rho_qa, shock })
        }
    }
}

fn apply_cache_env() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(CACHE_ENV) else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(mb) if mb > 0 => {
            set_cache_cap_bytes(mb.saturating_mul(1 << 20));
            Ok(())
        }
        _ => usage(format!("{CACHE_ENV} must be a positive integer (MiB), got '{raw}'")),
    }
}

fn error_object(e: &Error) -> serde_json::Value {
    let mut value = serde_json::to_value(e).expect("errors serialise");
    if let Some(obj) = value.as_object_mut() {
        obj.insert("message".into(), e.to_string().into());
    }
    value
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match apply_cache_env().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            println!("{}", error_object(&e));
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
