//! Discrete Lyapunov solutions `M P M^T + I = P` for projected networks.
//!
//! Two independent solvers are provided so each can check the other: a
//! direct linearised solve over the `n(n+1)/2` unknowns of the symmetric `P`,
//! and a squared-doubling accumulation of `sum_k M^k (M^k)^T` with a
//! computable truncation bound.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, spectral_radius, symmetric_eig_bounds, symmetric_eigenvalues_by_modulus};
use crate::projection::{ProjectedNetwork, Projector, STABILITY_MARGIN};
use crate::stochastic::StochasticMatrix;

/// Largest `n` accepted by the direct solver unless overridden.
pub const DEFAULT_DIRECT_CAP: usize = 48;
pub const DEFAULT_SERIES_TOL: f64 = 1e-11;
/// Doubling limit for the series solver.
pub const MAX_DOUBLINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    SeriesDoubling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `M P M^T + I = P`.
    Controllability,
    /// `M^T P M + I = P`.
    Observability,
    /// `P = A^T P A + Q` for a flocking matrix `A`.
    FlockingWeighted,
}

#[derive(Debug, Clone, Serialize)]
pub struct GramianReport {
    pub variant: Variant,
    pub method: Method,
    pub n: usize,
    pub trace: f64,
    /// Largest singular value, equal to the top eigenvalue of symmetric `P`.
    pub sigma1: f64,
    pub lambda_min: f64,
    /// `||fixed-point defect||_F / ||P||_F`.
    pub residual: f64,
    /// Bound on `||P_exact - P||_2` for the series solver.
    pub tail_bound: Option<f64>,
    /// Bound on `trace(P_exact) - trace(P)` for the series solver.
    pub trace_tail_bound: Option<f64>,
    pub doublings: Option<usize>,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub p: DMatrix<f64>,
}

impl GramianReport {
    fn build(
        p: DMatrix<f64>,
        variant: Variant,
        method: Method,
        residual: f64,
        tail: Option<Tail>,
        started: Instant,
    ) -> Self {
        let p = (&p + p.transpose()) * 0.5;
        let (lambda_min, sigma1) = symmetric_eig_bounds(&p);
        Self {
            variant,
            method,
            n: p.nrows(),
            trace: p.trace(),
            sigma1,
            lambda_min,
            residual,
            tail_bound: tail.map(|t| t.norm),
            trace_tail_bound: tail.map(|t| t.trace),
            doublings: tail.map(|t| t.doublings),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            p,
        }
    }

    pub fn metrics(&self) -> RobustnessMetrics {
        robustness_metrics(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessMetrics {
    pub trace: f64,
    pub sigma1: f64,
}

/// Trace and largest singular value of a Gramian.
pub fn robustness_metrics(report: &GramianReport) -> RobustnessMetrics {
    RobustnessMetrics {
        trace: report.trace,
        sigma1: report.sigma1,
    }
}

#[derive(Debug, Clone, Copy)]
struct Tail {
    norm: f64,
    trace: f64,
    doublings: usize,
}

/// Progress callback for long series solves; returning `false` cancels.
pub trait Progress {
    fn step(&mut self, doubling: usize, tail_bound: f64) -> bool;
}

impl<F: FnMut(usize, f64) -> bool> Progress for F {
    fn step(&mut self, doubling: usize, tail_bound: f64) -> bool {
        self(doubling, tail_bound)
    }
}

struct NoProgress;

impl Progress for NoProgress {
    fn step(&mut self, _: usize, _: f64) -> bool {
        true
    }
}

fn lyapunov_residual(m: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let defect = m * p * m.transpose() + DMatrix::<f64>::identity(n, n) - p;
    defect.norm() / p.norm()
}

fn check_stable(m: &ProjectedNetwork) -> Result<()> {
    if m.spectral_radius() >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NotStable {
            spectral_radius: m.spectral_radius(),
        });
    }
    Ok(())
}

/// Index of `(a, b)`, `a <= b`, in the packed upper triangle.
fn packed(n: usize, a: usize, b: usize) -> usize {
    a * n - a * (a + 1) / 2 + b
}

/// Solves `M P M^T + I = P` for the upper triangle of symmetric `P`.
fn linearized_solve(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let size = n * (n + 1) / 2;
    let mut sys = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..n {
        for j in i..n {
            let row = packed(n, i, j);
            sys[(row, row)] += 1.0;
            if i == j {
                rhs[row] = 1.0;
            }
            for a in 0..n {
                let mia = m[(i, a)];
                let mja = m[(j, a)];
                sys[(row, packed(n, a, a))] -= mia * mja;
                for b in a + 1..n {
                    sys[(row, packed(n, a, b))] -= mia * m[(j, b)] + m[(i, b)] * mja;
                }
            }
        }
    }
    let x = sys.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            p[(i, j)] = x[packed(n, i, j)];
            p[(j, i)] = x[packed(n, i, j)];
        }
    }
    Ok(p)
}

fn direct(m: &ProjectedNetwork, variant: Variant, cap: usize) -> Result<GramianReport> {
    let started = Instant::now();
    check_stable(m)?;
    if m.n() > cap {
        return Err(Error::DimensionTooLarge {
            n: m.n(),
            detail: format!("direct Lyapunov solve is capped at n = {cap}"),
        });
    }
    let mat = match variant {
        Variant::Observability => m.matrix().transpose(),
        _ => m.matrix().clone(),
    };
    let p = linearized_solve(&mat)?;
    let residual = lyapunov_residual(&mat, &p);
    if !(residual <= 1e-6) {
        return Err(Error::SingularSystem);
    }
    Ok(GramianReport::build(p, variant, Method::Direct, residual, None, started))
}

/// Direct linearised solve, `n <= 48`.
pub fn solve_lyapunov_direct(m: &ProjectedNetwork) -> Result<GramianReport> {
    direct(m, Variant::Controllability, DEFAULT_DIRECT_CAP)
}

pub fn solve_lyapunov_direct_capped(m: &ProjectedNetwork, cap: usize) -> Result<GramianReport> {
    direct(m, Variant::Controllability, cap)
}

/// Accumulates `P_{j+1} = P_j + T_j P_j T_j^T` with `T_{j+1} = T_j^2`, where
/// `lift(T_j)` is the contracting factor, until the tail bound
/// `||T||^2 sigma1(P) / (1 - ||T||^2)` drops below `tol`.
fn doubling(
    p0: DMatrix<f64>,
    t0: DMatrix<f64>,
    lift: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    tol: f64,
    progress: &mut dyn Progress,
) -> Result<(DMatrix<f64>, Tail)> {
    let mut p = p0;
    let mut t = t0;
    for j in 0..=MAX_DOUBLINGS {
        let factor = lift(&t);
        let norm = spectral_norm(&factor);
        // The remainder is sum_i T^i (T P T^T) (T^i)^T with ||T||_2 < 1.
        let (tail, trace_tail) = if norm < 1.0 {
            let ratio = norm * norm / (1.0 - norm * norm);
            (ratio * symmetric_eig_bounds(&p).1, ratio * p.trace())
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        if !progress.step(j, tail) {
            return Err(Error::Cancelled);
        }
        if tail < tol {
            return Ok((
                p,
                Tail {
                    norm: tail,
                    trace: trace_tail,
                    doublings: j,
                },
            ));
        }
        if j == MAX_DOUBLINGS {
            break;
        }
        p = &p + &factor * &p * factor.transpose();
        t = &t * &t;
    }
    Err(Error::NoConvergence {
        iterations: MAX_DOUBLINGS,
    })
}

fn series(
    m: &ProjectedNetwork,
    variant: Variant,
    tol: f64,
    progress: &mut dyn Progress,
) -> Result<GramianReport> {
    let started = Instant::now();
    check_stable(m)?;
    let mat = match variant {
        Variant::Observability => m.matrix().transpose(),
        _ => m.matrix().clone(),
    };
    let n = m.n();
    let (p, tail) = doubling(
        DMatrix::identity(n, n),
        mat.clone(),
        |t| t.clone(),
        tol,
        progress,
    )?;
    let residual = lyapunov_residual(&mat, &p);
    Ok(GramianReport::build(
        p,
        variant,
        Method::SeriesDoubling,
        residual,
        Some(tail),
        started,
    ))
}

/// Squared-doubling series solve of `M P M^T + I = P`.
pub fn solve_lyapunov_series(m: &ProjectedNetwork, tol: f64) -> Result<GramianReport> {
    series(m, Variant::Controllability, tol, &mut NoProgress)
}

/// As [`solve_lyapunov_series`], reporting each doubling to `progress`.
pub fn solve_lyapunov_series_with(
    m: &ProjectedNetwork,
    tol: f64,
    progress: &mut dyn Progress,
) -> Result<GramianReport> {
    series(m, Variant::Controllability, tol, progress)
}

/// Solves `M^T P M + I = P` directly when `n <= 48`, by series otherwise.
pub fn observability_gramian(m: &ProjectedNetwork) -> Result<GramianReport> {
    if m.n() <= DEFAULT_DIRECT_CAP {
        direct(m, Variant::Observability, DEFAULT_DIRECT_CAP)
    } else {
        series(m, Variant::Observability, DEFAULT_SERIES_TOL, &mut NoProgress)
    }
}

pub fn observability_gramian_direct_capped(m: &ProjectedNetwork, cap: usize) -> Result<GramianReport> {
    direct(m, Variant::Observability, cap)
}

pub fn observability_gramian_series(m: &ProjectedNetwork, tol: f64) -> Result<GramianReport> {
    series(m, Variant::Observability, tol, &mut NoProgress)
}

/// Gramian of `P = A^T P A + Q` plus the symmetrised flocking matrix.
#[derive(Debug, Clone, Serialize)]
pub struct FlockingGramian {
    pub report: GramianReport,
    /// Second largest eigenvalue modulus of `S = D^-1/2 Adj D^-1/2`.
    pub lambda2: f64,
    #[serde(skip)]
    pub symmetrized: DMatrix<f64>,
}

/// Solves `P = A^T P A + Q` as `sum_k (A^k)^T Q A^k` by doubling.
pub fn flocking_weighted_gramian(a: &StochasticMatrix, tol: f64) -> Result<FlockingGramian> {
    let started = Instant::now();
    let structure = a
        .provenance()
        .and_then(|p| p.flocking.as_ref())
        .ok_or(Error::NotFlocking)?;
    let n = a.n();
    let q = Projector::uniform(n)?;
    let qa = q.matrix() * a.matrix();
    let rho = spectral_radius(&qa)?;
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NotStable { spectral_radius: rho });
    }
    let qm = q.matrix().clone();
    let (p, tail) = doubling(
        qm.clone(),
        a.matrix().transpose(),
        // T_j = (A^T)^(2^j); the contracting factor is (Q A^(2^j))^T.
        |t| t * &qm,
        tol,
        &mut NoProgress,
    )?;
    let at = a.matrix().transpose();
    let defect = &at * &p * a.matrix() + &qm - &p;
    let residual = defect.norm() / p.norm();
    let symmetrized = structure.symmetrized();
    let lambda2 = symmetric_eigenvalues_by_modulus(&symmetrized)
        .get(1)
        .map(|v| v.abs())
        .unwrap_or(0.0);
    Ok(FlockingGramian {
        report: GramianReport::build(
            p,
            Variant::FlockingWeighted,
            Method::SeriesDoubling,
            residual,
            Some(tail),
            started,
        ),
        lambda2,
        symmetrized,
    })
}
