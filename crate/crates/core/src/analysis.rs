//! Finite-n checks relating Gramian robustness to convergence time, and
//! log-log scaling sweeps over network families.
//!
//! Asymptotic statements are rendered two ways: fitted log-log slopes over a
//! geometric grid of `n`, and inequalities with explicit constants:
//!
//! - `trace(P)/n - 1 <= 8 Var0 t(1/2)`
//! - `sigma1(P) <= 1 + 16 (pi_max/pi_min) t(1/2)`
//! - `sigma1(P) >= 1 + t'/(4n)`, `t'` the first `k` with `||Q A^k||_inf <= 1/4`

use rayon::prelude::*;
use serde::Serialize;

use crate::convergence::{convergence_time_cached, first_projected_below_cached};
use crate::error::{Error, Result};
use crate::gramian::{flocking_weighted_gramian, solve_lyapunov_series, DEFAULT_SERIES_TOL};
use crate::linalg::max_abs;
use crate::projection::{project, Projector};
use crate::stochastic::{cache_cap_bytes, PowerCache, StochasticMatrix};
use crate::topology::{generate, TopologyDescriptor, TopologyKind};

/// Constant in `trace(P)/n - 1 <= C Var0 t(1/2)`.
pub const TRACE_CONSTANT: f64 = 8.0;
/// Constant in `sigma1(P) <= 1 + C (pi_max/pi_min) t(1/2)`.
pub const SIGMA_UPPER_CONSTANT: f64 = 16.0;
/// `Var0` at or below this means every row is already the consensus row.
pub const VAR0_FLOOR: f64 = 1e-14;
/// CSV header for sweep output.
pub const SWEEP_HEADER: &str =
    "family,n,trace_P,sigma1_P,t_half,var0,rho_QA,lower_ratio,upper_ratio,sigma_ratio";

/// Largest deviation of an entry from its column mean, i.e. `max |(QA)_ij|`.
pub fn var0(a: &StochasticMatrix) -> Result<f64> {
    let q = Projector::uniform(a.n())?;
    let v = max_abs(&(q.matrix() * a.matrix()));
    if v <= VAR0_FLOOR {
        return Err(Error::ConsensusAlreadyReached { var0: v });
    }
    Ok(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsCheck {
    pub n: usize,
    pub var0: f64,
    pub trace_p: f64,
    pub sigma1_p: f64,
    pub rho_qa: f64,
    pub t_half: u64,
    /// First `k` with `||Q A^k||_inf <= 1/2`.
    pub t_half_projected: u64,
    /// First `k` with `||Q A^k||_inf <= 1/4`.
    pub t_quarter_projected: u64,
    pub pi_ratio: f64,
    /// `(trace_P/n - 1) / (var0 t_half)`.
    pub lower_ratio: f64,
    /// `(sigma1_P - 1) n / t_half`.
    pub upper_ratio: f64,
    /// `sigma1_P / t_half`.
    pub sigma_ratio: f64,
    pub trace_bound_ok: bool,
    pub sigma_upper_ok: bool,
    pub sigma_lower_ok: bool,
}

impl BoundsCheck {
    pub fn all_ok(&self) -> bool {
        self.trace_bound_ok && self.sigma_upper_ok && self.sigma_lower_ok
    }

    /// Human-readable account of each failed inequality.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.n as f64;
        if !self.trace_bound_ok {
            out.push(format!(
                "trace_P/n - 1 = {:e} > {TRACE_CONSTANT} * var0 * t_half = {:e}",
                self.trace_p / n - 1.0,
                TRACE_CONSTANT * self.var0 * self.t_half as f64
            ));
        }
        if !self.sigma_upper_ok {
            out.push(format!(
                "sigma1_P = {:e} > 1 + {SIGMA_UPPER_CONSTANT} * pi_ratio * t_half = {:e}",
                self.sigma1_p,
                1.0 + SIGMA_UPPER_CONSTANT * self.pi_ratio * self.t_half as f64
            ));
        }
        if !self.sigma_lower_ok {
            out.push(format!(
                "sigma1_P = {:e} < 1 + t_quarter/(4n) = {:e}",
                self.sigma1_p,
                1.0 + self.t_quarter_projected as f64 / (4.0 * n)
            ));
        }
        out
    }
}

/// Computes every metric the bounds need and evaluates the three inequalities.
pub fn verify_theorem_bounds(a: &StochasticMatrix) -> Result<BoundsCheck> {
    let n = a.n();
    let var0 = var0(a)?;
    let pi = a.invariant_distribution()?;
    let q = Projector::uniform(n)?;
    let net = project(a, &q)?;
    let gram = solve_lyapunov_series(&net, DEFAULT_SERIES_TOL)?;
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    let t_half = convergence_time_cached(&mut cache, &pi, 0.5)?.t;
    let t_half_projected = first_projected_below_cached(&mut cache, 0.5)?;
    let t_quarter_projected = first_projected_below_cached(&mut cache, 0.25)?;
    let nf = n as f64;
    let th = t_half as f64;
    let pi_ratio = pi.max() / pi.min();
    let (trace_p, sigma1_p) = (gram.trace, gram.sigma1);
    Ok(BoundsCheck {
        n,
        var0,
        trace_p,
        sigma1_p,
        rho_qa: net.spectral_radius(),
        t_half,
        t_half_projected,
        t_quarter_projected,
        pi_ratio,
        lower_ratio: (trace_p / nf - 1.0) / (var0 * th),
        upper_ratio: (sigma1_p - 1.0) * nf / th,
        sigma_ratio: sigma1_p / th,
        trace_bound_ok: trace_p / nf - 1.0 <= TRACE_CONSTANT * var0 * th,
        sigma_upper_ok: sigma1_p <= 1.0 + SIGMA_UPPER_CONSTANT * pi_ratio * th,
        sigma_lower_ok: sigma1_p >= 1.0 + t_quarter_projected as f64 / (4.0 * nf),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ln value` on `ln n`.
pub fn fit_exponent(ns: &[f64], values: &[f64]) -> Result<ExponentFit> {
    if ns.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: ns.len(),
            found: values.len(),
        });
    }
    if ns.len() < 3 {
        return Err(Error::TooFewPoints {
            required: 3,
            found: ns.len(),
        });
    }
    for (index, &value) in ns.iter().chain(values).enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveValue {
                index: index % ns.len(),
                value,
            });
        }
    }
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Short family label used in CSV output, e.g. `lazy-cycle`.
pub fn family_label(desc: &TopologyDescriptor) -> String {
    let base = match desc.kind {
        TopologyKind::Flocking if desc.p.is_some() => "random-flocking".to_string(),
        kind => kind.name().replace('_', "-"),
    };
    if desc.lazy {
        format!("lazy-{base}")
    } else {
        base
    }
}

fn check_grid(ns: &[usize]) -> Result<()> {
    if ns.len() < 3 {
        return Err(Error::TooFewPoints {
            required: 3,
            found: ns.len(),
        });
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnsortedGrid);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub check: std::result::Result<BoundsCheck, Error>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricFit {
    pub metric: &'static str,
    #[serde(flatten)]
    pub fit: ExponentFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSweep {
    pub family: String,
    pub descriptor: String,
    pub ns: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub fitted_exponents: Vec<MetricFit>,
}

type Metric = fn(&BoundsCheck) -> f64;

const FITTED: [(&str, Metric); 5] = [
    ("trace_P", |b| b.trace_p),
    ("sigma1_P", |b| b.sigma1_p),
    ("t_half", |b| b.t_half as f64),
    ("var0", |b| b.var0),
    ("rho_QA", |b| b.rho_qa),
];

impl ScalingSweep {
    pub fn fit(&self, metric: &str) -> Option<ExponentFit> {
        self.fitted_exponents
            .iter()
            .find(|f| f.metric == metric)
            .map(|f| f.fit)
    }

    pub fn checks(&self) -> impl Iterator<Item = &BoundsCheck> {
        self.rows.iter().filter_map(|r| r.check.as_ref().ok())
    }

    /// Sweep CSV: header, one row per successful `n`, then `#` lines for
    /// failures and fitted exponents.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for row in &self.rows {
            if let Ok(b) = &row.check {
                let fields = [
                    sig12(b.trace_p),
                    sig12(b.sigma1_p),
                    b.t_half.to_string(),
                    sig12(b.var0),
                    sig12(b.rho_qa),
                    sig12(b.lower_ratio),
                    sig12(b.upper_ratio),
                    sig12(b.sigma_ratio),
                ];
                out.push_str(&format!("{},{},{}\n", self.family, b.n, fields.join(",")));
            }
        }
        for row in &self.rows {
            if let Err(e) = &row.check {
                out.push_str(&format!("# failed n={}: {e}\n", row.n));
            }
        }
        out.push_str(&format!("# descriptor {}\n", self.descriptor));
        for f in &self.fitted_exponents {
            out.push_str(&format!(
                "# fit {} slope={} intercept={} r_squared={}\n",
                f.metric,
                sig12(f.fit.slope),
                sig12(f.fit.intercept),
                sig12(f.fit.r_squared)
            ));
        }
        out
    }
}

fn run_grid<T: Send>(
    ns: &[usize],
    jobs: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    let jobs = jobs.max(1);
    if jobs == 1 {
        return ns.iter().map(|&n| f(n)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| ns.par_iter().map(|&n| f(n)).collect()),
        Err(_) => ns.iter().map(|&n| f(n)).collect(),
    }
}

/// Per-`n` bounds and metrics over a family, with log-log fits. Failing grid
/// points are kept as error rows and excluded from the fits.
pub fn sweep(family: &TopologyDescriptor, ns: &[usize], jobs: usize) -> Result<ScalingSweep> {
    check_grid(ns)?;
    let rows: Vec<SweepRow> = run_grid(ns, jobs, |n| SweepRow {
        n,
        check: generate(&family.with_n(n)).and_then(|a| verify_theorem_bounds(&a)),
    });
    let ok: Vec<&BoundsCheck> = rows.iter().filter_map(|r| r.check.as_ref().ok()).collect();
    let xs: Vec<f64> = ok.iter().map(|b| b.n as f64).collect();
    let fitted_exponents = FITTED
        .iter()
        .filter_map(|(metric, get)| {
            let ys: Vec<f64> = ok.iter().map(|b| get(b)).collect();
            fit_exponent(&xs, &ys).ok().map(|fit| MetricFit { metric, fit })
        })
        .collect();
    Ok(ScalingSweep {
        family: family_label(family),
        descriptor: family.to_string(),
        ns: ns.to_vec(),
        rows,
        fitted_exponents,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioConstancy {
    pub family: String,
    pub ns: Vec<usize>,
    /// `sigma1(P(QA)) / t(1/2)` per `n`.
    pub sigma_ratios: Vec<f64>,
    /// `max / min` of the ratios.
    pub spread: f64,
}

impl RatioConstancy {
    /// Two-column `n,sigma_ratio` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sigma_ratio\n");
        for (n, r) in self.ns.iter().zip(&self.sigma_ratios) {
            out.push_str(&format!("{n},{}\n", sig12(*r)));
        }
        out
    }
}

pub fn ratio_constancy(family: &TopologyDescriptor, ns: &[usize], jobs: usize) -> Result<RatioConstancy> {
    check_grid(ns)?;
    let sigma_ratios = run_grid(ns, jobs, |n| {
        generate(&family.with_n(n)).and_then(|a| verify_theorem_bounds(&a))
    })
    .into_iter()
    .map(|r| r.map(|b| b.sigma_ratio))
    .collect::<Result<Vec<f64>>>()?;
    let max = sigma_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = sigma_ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RatioConstancy {
        family: family_label(family),
        ns: ns.to_vec(),
        sigma_ratios,
        spread: max / min,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FlockingCheck {
    pub n: usize,
    /// Second largest eigenvalue modulus of `D^-1/2 Adj D^-1/2`.
    pub lambda2: f64,
    pub lambda2_bound: f64,
    pub lambda2_ok: bool,
    pub sigma1_p: f64,
    pub sigma1_over_n2: f64,
    /// `sigma1` of the weighted Gramian `P = A^T P A + Q`.
    pub weighted_sigma1: f64,
    pub t_half: u64,
    /// `n sigma1(P(QA)) / t(1/2)`.
    pub n_sigma_over_t_half: f64,
}

/// Spectral and Gramian checks for a flocking matrix with self-loops.
pub fn flocking_bounds_check(a: &StochasticMatrix) -> Result<FlockingCheck> {
    let has_loops = a
        .provenance()
        .and_then(|p| p.flocking.as_ref())
        .is_some_and(|f| f.self_loops);
    if !has_loops {
        return Err(Error::NotFlocking);
    }
    let n = a.n();
    let weighted = flocking_weighted_gramian(a, DEFAULT_SERIES_TOL)?;
    let net = project(a, &Projector::uniform(n)?)?;
    let gram = solve_lyapunov_series(&net, DEFAULT_SERIES_TOL)?;
    let pi = a.invariant_distribution()?;
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    let t_half = convergence_time_cached(&mut cache, &pi, 0.5)?.t;
    let nf = n as f64;
    let bound = 1.0 - 1.0 / nf;
    Ok(FlockingCheck {
        n,
        lambda2: weighted.lambda2,
        lambda2_bound: bound,
        lambda2_ok: weighted.lambda2 <= bound,
        sigma1_p: gram.sigma1,
        sigma1_over_n2: gram.sigma1 / (nf * nf),
        weighted_sigma1: weighted.report.sigma1,
        t_half,
        n_sigma_over_t_half: nf * gram.sigma1 / t_half as f64,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PiProjectionComparison {
    pub trace_q: f64,
    pub trace_qpi: f64,
    /// `trace_qpi >= trace_q - 1e-8 trace_q`.
    pub holds: bool,
}

/// Gramian traces under `Q` and `Q_pi`, both by the series solver.
pub fn pi_projection_comparison(a: &StochasticMatrix) -> Result<PiProjectionComparison> {
    let n = a.n();
    let pi = a.invariant_distribution()?;
    let uniform = project(a, &Projector::uniform(n)?)?;
    let weighted = project(a, &Projector::pi_weighted(&pi))?;
    let trace_q = solve_lyapunov_series(&uniform, DEFAULT_SERIES_TOL)?.trace;
    let trace_qpi = solve_lyapunov_series(&weighted, DEFAULT_SERIES_TOL)?.trace;
    Ok(PiProjectionComparison {
        trace_q,
        trace_qpi,
        holds: trace_qpi >= trace_q - 1e-8 * trace_q,
    })
}

/// Formats with 12 significant digits, like C's `%.12g`.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (11 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}
