//! Epsilon-convergence times, distance-to-consensus curves, the projected
//! norm criterion `||Q A^k||_inf <= 1/2`, and shock-response simulation.
//!
//! Convergence times are located by doubling `k` until the distance drops
//! below `eps`, then binary lifting over the cached dyadic powers. Both steps
//! rely on `||A^k - 1 pi^T||_inf` being non-increasing in `k`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::projection::Projector;
use crate::stochastic::{cache_cap_bytes, InvariantDistribution, PowerCache, StochasticMatrix};

/// Doubling limit when bracketing `t(eps)`: `k < 2^62`.
pub const MAX_BRACKET_DOUBLINGS: usize = 62;
/// Slack allowed when checking monotonicity of probed distances.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub epsilon: f64,
    /// First `k` with `||A^k - 1 pi^T||_inf < epsilon`.
    pub t: u64,
    /// `(k, distance)` for every evaluated `k`, in evaluation order.
    pub probes: Vec<(u64, f64)>,
    pub monotone_ok: bool,
    /// `epsilon >= 1`: the time is not comparable across topologies.
    pub outside_equivalence_class: bool,
}

impl ConvergenceReport {
    /// Probes sorted by `k`.
    pub fn curve(&self) -> Vec<(u64, f64)> {
        let mut c = self.probes.clone();
        c.sort_by_key(|p| p.0);
        c.dedup_by_key(|p| p.0);
        c
    }

    /// Two-column `k,value` CSV of the probe curve.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("k,distance\n");
        for (k, d) in self.curve() {
            out.push_str(&format!("{k},{d:e}\n"));
        }
        out
    }
}

fn consensus_distance(m: &DMatrix<f64>, pi: &[f64]) -> f64 {
    m.row_iter()
        .map(|r| r.iter().zip(pi).map(|(a, p)| (a - p).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `||A^k - 1 pi^T||_inf`.
pub fn distance_to_consensus(a: &StochasticMatrix, k: u64, pi: &InvariantDistribution) -> Result<f64> {
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    Ok(consensus_distance(&cache.power(k)?, pi.as_slice()))
}

/// Smallest `k` with `metric(A^k)` below `threshold` (strictly when `strict`),
/// assuming the metric is non-increasing in `k`.
fn first_below(
    cache: &mut PowerCache,
    metric: impl Fn(&DMatrix<f64>) -> f64,
    threshold: f64,
    strict: bool,
    probes: &mut Vec<(u64, f64)>,
) -> Result<u64> {
    let hit = |v: f64| if strict { v < threshold } else { v <= threshold };
    let n = cache.n();
    let d0 = metric(&DMatrix::identity(n, n));
    probes.push((0, d0));
    if hit(d0) {
        return Ok(0);
    }
    let mut top = None;
    for j in 0..=MAX_BRACKET_DOUBLINGS {
        cache.extend_to(j)?;
        let d = metric(cache.level(j));
        probes.push((1 << j, d));
        if hit(d) {
            top = Some(j);
            break;
        }
    }
    let top = top.ok_or(Error::HorizonExceeded {
        max_doublings: MAX_BRACKET_DOUBLINGS,
    })?;
    if top == 0 {
        return Ok(1);
    }
    // Invariant: metric(A^lo) misses the threshold and metric(A^(2^top)) hits it.
    let mut lo: u64 = 1 << (top - 1);
    let mut at_lo = cache.level(top - 1).clone();
    for i in (0..top - 1).rev() {
        let candidate = &at_lo * cache.level(i);
        let k = lo + (1 << i);
        let d = metric(&candidate);
        probes.push((k, d));
        if !hit(d) {
            lo = k;
            at_lo = candidate;
        }
    }
    Ok(lo + 1)
}

fn monotone(probes: &[(u64, f64)]) -> bool {
    let mut sorted = probes.to_vec();
    sorted.sort_by_key(|p| p.0);
    sorted.windows(2).all(|w| w[1].1 <= w[0].1 + MONOTONE_SLACK)
}

/// `t_A(eps)` with the default cache budget.
pub fn convergence_time(a: &StochasticMatrix, epsilon: f64) -> Result<ConvergenceReport> {
    let pi = a.invariant_distribution()?;
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    convergence_time_cached(&mut cache, &pi, epsilon)
}

/// `t_A(eps)` reusing an existing power cache.
pub fn convergence_time_cached(
    cache: &mut PowerCache,
    pi: &InvariantDistribution,
    epsilon: f64,
) -> Result<ConvergenceReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if pi.len() != cache.n() {
        return Err(Error::DimensionMismatch {
            expected: cache.n(),
            found: pi.len(),
        });
    }
    let mut probes = Vec::new();
    let t = first_below(
        cache,
        |m| consensus_distance(m, pi.as_slice()),
        epsilon,
        true,
        &mut probes,
    )?;
    if !probes.iter().any(|p| p.0 == t) {
        probes.push((t, consensus_distance(&cache.power(t)?, pi.as_slice())));
    }
    Ok(ConvergenceReport {
        epsilon,
        t,
        monotone_ok: monotone(&probes),
        probes,
        outside_equivalence_class: epsilon >= 1.0,
    })
}

/// `||Q A^k||_inf` for each `k` in `ks` (ascending).
pub fn projected_norm_curve(a: &StochasticMatrix, ks: &[u64]) -> Result<Vec<f64>> {
    if ks.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::UnsortedGrid);
    }
    let q = Projector::uniform(a.n())?;
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    ks.iter()
        .map(|&k| Ok(inf_norm(&(q.matrix() * cache.power(k)?))))
        .collect()
}

/// First `k` with `||Q A^k||_inf <= threshold`.
pub fn first_projected_below(a: &StochasticMatrix, threshold: f64) -> Result<u64> {
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    first_projected_below_cached(&mut cache, threshold)
}

pub fn first_projected_below_cached(cache: &mut PowerCache, threshold: f64) -> Result<u64> {
    let q = Projector::uniform(cache.n())?;
    let mut probes = Vec::new();
    first_below(
        cache,
        |m| inf_norm(&(q.matrix() * m)),
        threshold,
        false,
        &mut probes,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ShockResponse {
    pub omega: Vec<f64>,
    pub horizon: usize,
    /// `||x(k)||_inf` for `k = 0..=horizon`, with `x(0) = omega`.
    pub state_norms: Vec<f64>,
    /// `||Q x(k)||_inf` for `k = 0..=horizon`.
    pub projected_norms: Vec<f64>,
    /// `exp` of the least-squares slope of `ln ||Q x(k)||_inf` over the
    /// second half of the horizon.
    pub alpha_estimate: f64,
    #[serde(skip)]
    pub projected_states: Vec<DVector<f64>>,
}

/// Propagates a shock: `x(0) = omega`, `x(k) = A x(k-1)`.
pub fn simulate_shock(a: &StochasticMatrix, omega: &[f64], horizon: usize) -> Result<ShockResponse> {
    if omega.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: omega.len(),
        });
    }
    if let Some(i) = omega.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let horizon = horizon.max(1);
    let q = Projector::uniform(a.n())?;
    let mut x = DVector::from_column_slice(omega);
    let mut state_norms = Vec::with_capacity(horizon + 1);
    let mut projected_norms = Vec::with_capacity(horizon + 1);
    let mut projected_states = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if k > 0 {
            x = a.matrix() * &x;
        }
        let xq = q.matrix() * &x;
        state_norms.push(x.amax());
        projected_norms.push(xq.amax());
        projected_states.push(xq);
    }
    let alpha_estimate = decay_rate(&projected_norms, state_norms[0]);
    Ok(ShockResponse {
        omega: omega.to_vec(),
        horizon,
        state_norms,
        projected_norms,
        alpha_estimate,
        projected_states,
    })
}

/// Geometric rate fitted over the tail half; values that have fallen to the
/// rounding floor relative to `scale` are dropped. Returns 0 when nothing
/// above the floor remains.
fn decay_rate(norms: &[f64], scale: f64) -> f64 {
    let horizon = norms.len() - 1;
    let floor = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = (horizon / 2..=horizon)
        .filter(|&k| norms[k] > floor)
        .map(|k| (k as f64, norms[k].ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRow {
    pub epsilon: f64,
    pub t: u64,
    /// `t(eps) / t(1/2)`.
    pub ratio: f64,
    /// `ceil(log2(1/(2 eps)) + 1) * t(1/2)` for `eps <= 1/2`.
    pub bound: Option<u64>,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceTable {
    pub t_half: u64,
    pub rows: Vec<EquivalenceRow>,
}

/// Convergence times across `eps_list` relative to `t(1/2)`.
pub fn epsilon_equivalence_check(a: &StochasticMatrix, eps_list: &[f64]) -> Result<EquivalenceTable> {
    if let Some(&bad) = eps_list.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidEpsilon(bad));
    }
    let pi = a.invariant_distribution()?;
    let mut cache = PowerCache::new(a, cache_cap_bytes())?;
    let t_half = convergence_time_cached(&mut cache, &pi, 0.5)?.t;
    let rows = eps_list
        .iter()
        .map(|&epsilon| {
            let t = convergence_time_cached(&mut cache, &pi, epsilon)?.t;
            let bound = (epsilon <= 0.5)
                .then(|| ((1.0 / (2.0 * epsilon)).log2() + 1.0).ceil() as u64 * t_half);
            Ok(EquivalenceRow {
                epsilon,
                t,
                ratio: t as f64 / t_half as f64,
                bound,
                within_bound: bound.is_none_or(|b| t <= b),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceTable { t_half, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate, mixing_alpha, mixing_example, TopologyDescriptor, TopologyKind};

    fn lazy(kind: TopologyKind, n: usize) -> StochasticMatrix {
        generate(&TopologyDescriptor::lazy(kind, n)).unwrap()
    }

    fn complete(n: usize) -> StochasticMatrix {
        generate(&TopologyDescriptor::new(TopologyKind::Complete, n)).unwrap()
    }

    /// Oracle: walk k upwards by repeated multiplication.
    fn brute_t(a: &StochasticMatrix, eps: f64) -> u64 {
        let pi = a.invariant_distribution().unwrap();
        let mut m = DMatrix::identity(a.n(), a.n());
        let mut k = 0;
        while consensus_distance(&m, pi.as_slice()) >= eps {
            m *= a.matrix();
            k += 1;
        }
        k
    }

    #[test]
    fn complete_network_is_at_consensus_after_one_step() {
        let a = complete(5);
        let pi = a.invariant_distribution().unwrap();
        assert!(distance_to_consensus(&a, 1, &pi).unwrap() < 1e-15);
        for eps in [0.1, 0.5, 0.9] {
            assert_eq!(convergence_time(&a, eps).unwrap().t, 1);
        }
    }

    #[test]
    fn mixing_example_distance_closed_form() {
        for n in [5, 8, 16] {
            let b = mixing_example(n).unwrap();
            let pi = b.invariant_distribution().unwrap();
            let alpha = mixing_alpha(n);
            for k in 0..40 {
                let d = distance_to_consensus(&b, k, &pi).unwrap();
                let expect = 2.0 * alpha.powi(k as i32) * (1.0 - 1.0 / n as f64);
                assert!((d - expect).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn distance_at_zero_is_two_one_minus_pi_min() {
        let a = lazy(TopologyKind::Star, 7);
        let pi = a.invariant_distribution().unwrap();
        let d = distance_to_consensus(&a, 0, &pi).unwrap();
        assert!((d - 2.0 * (1.0 - pi.min())).abs() < 1e-12);
    }

    #[test]
    fn mixing_example_boundary_epsilon() {
        let b = mixing_example(5).unwrap();
        let r = convergence_time(&b, 1.21).unwrap();
        assert_eq!(r.t, 1);
        // Exactly on the boundary the strict inequality is not met.
        let on_edge = convergence_time(&b, 2.0 - 4.0 / 5.0).unwrap();
        assert!(on_edge.t >= 1);
        assert!(r.outside_equivalence_class);
    }

    #[test]
    fn mixing_example_inverse_e_time_is_linear_in_n() {
        for n in [8u64, 16, 32] {
            let b = mixing_example(n as usize).unwrap();
            let t = convergence_time(&b, (-1f64).exp()).unwrap().t;
            assert!(t >= n - 1 && t <= 2 * (n - 1), "n={n} t={t}");
        }
    }

    #[test]
    fn search_matches_brute_force() {
        let cases = [
            lazy(TopologyKind::Cycle, 9),
            lazy(TopologyKind::Star, 6),
            lazy(TopologyKind::Path, 7),
            lazy(TopologyKind::DirectedCycle, 5),
            mixing_example(10).unwrap(),
        ];
        for a in &cases {
            for eps in [0.9, 0.5, 0.25, 0.01] {
                let r = convergence_time(a, eps).unwrap();
                assert_eq!(r.t, brute_t(a, eps));
                assert!(r.monotone_ok);
                let pi = a.invariant_distribution().unwrap();
                assert!(distance_to_consensus(a, r.t, &pi).unwrap() < eps);
                if r.t > 0 {
                    assert!(distance_to_consensus(a, r.t - 1, &pi).unwrap() >= eps);
                }
            }
        }
    }

    #[test]
    fn errors() {
        let a = generate(&TopologyDescriptor::new(TopologyKind::DirectedCycle, 4)).unwrap();
        assert!(matches!(convergence_time(&a, 0.5), Err(Error::NotPrimitive { .. })));
        let b = mixing_example(4).unwrap();
        assert_eq!(convergence_time(&b, 0.0).unwrap_err(), Error::InvalidEpsilon(0.0));
        assert_eq!(
            epsilon_equivalence_check(&b, &[0.5, 1.0]).unwrap_err(),
            Error::InvalidEpsilon(1.0)
        );
    }

    #[test]
    fn near_periodic_chain_exceeds_horizon() {
        // Tiny self-loop weight on a directed cycle: primitive, but it would
        // take far more than 2^62 steps to mix.
        let n = 4;
        let w = 1e-300;
        let a = StochasticMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                w
            } else if j == (i + 1) % n {
                1.0 - w
            } else {
                0.0
            }
        }))
        .unwrap();
        assert!(a.is_primitive());
        let pi = InvariantDistribution::from_vec(&a, vec![0.25; 4]).unwrap();
        let mut cache = PowerCache::new(&a, cache_cap_bytes()).unwrap();
        assert_eq!(
            convergence_time_cached(&mut cache, &pi, 0.5).unwrap_err(),
            Error::HorizonExceeded {
                max_doublings: MAX_BRACKET_DOUBLINGS
            }
        );
    }

    #[test]
    fn projected_curve_for_mixing_example() {
        let n = 12;
        let b = mixing_example(n).unwrap();
        let ks: Vec<u64> = (0..30).collect();
        let curve = projected_norm_curve(&b, &ks).unwrap();
        let alpha = mixing_alpha(n);
        for (&k, v) in ks.iter().zip(&curve) {
            let expect = alpha.powi(k as i32) * (2.0 - 2.0 / n as f64);
            assert!((v - expect).abs() < 1e-12);
        }
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert_eq!(projected_norm_curve(&complete(4), &[1]).unwrap()[0], 0.0);
        assert!(projected_norm_curve(&b, &[3, 1]).is_err());
    }

    #[test]
    fn projected_criterion_tracks_half_time_on_lazy_cycle() {
        let a = lazy(TopologyKind::Cycle, 16);
        let k = first_projected_below(&a, 0.5).unwrap();
        let t = convergence_time(&a, 0.5).unwrap().t;
        assert!(k * 4 >= t && k <= 4 * t);
        let q = Projector::uniform(16).unwrap();
        let mut m = DMatrix::identity(16, 16);
        for _ in 0..k - 1 {
            m *= a.matrix();
        }
        assert!(inf_norm(&(q.matrix() * &m)) > 0.5);
        m *= a.matrix();
        assert!(inf_norm(&(q.matrix() * &m)) <= 0.5);
    }

    #[test]
    fn constant_shock_never_leaves_consensus() {
        let a = lazy(TopologyKind::Cycle, 6);
        let s = simulate_shock(&a, &[1.0; 6], 20).unwrap();
        assert!(s.state_norms.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(s.projected_norms.iter().all(|&v| v < 1e-14));
        assert_eq!(s.alpha_estimate, 0.0);
    }

    #[test]
    fn mixing_example_shock_decays_at_alpha() {
        let n = 10;
        let b = mixing_example(n).unwrap();
        let mut omega = vec![0.0; n];
        omega[0] = 1.0;
        omega[1] = -1.0;
        let s = simulate_shock(&b, &omega, 40).unwrap();
        let alpha = mixing_alpha(n);
        for w in s.projected_norms.windows(2) {
            assert!((w[1] / w[0] - alpha).abs() < 1e-12);
        }
        assert!((s.alpha_estimate - alpha).abs() < 1e-10);
    }

    #[test]
    fn shock_matches_projected_powers() {
        let a = lazy(TopologyKind::Star, 9);
        let omega: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let s = simulate_shock(&a, &omega, 12).unwrap();
        let q = Projector::uniform(9).unwrap();
        let qa = q.matrix() * a.matrix();
        let mut v = q.matrix() * DVector::from_column_slice(&omega);
        for k in 0..=12 {
            assert!((&s.projected_states[k] - &v).amax() < 1e-12);
            v = &qa * v;
        }
    }

    #[test]
    fn equivalence_table_on_mixing_example() {
        let b = mixing_example(32).unwrap();
        let table = epsilon_equivalence_check(&b, &[0.5, 0.25, 0.75]).unwrap();
        let t = |e: f64| table.rows.iter().find(|r| r.epsilon == e).unwrap().t;
        assert!(t(0.25) <= 2 * t(0.5));
        assert!(t(0.75) <= t(0.5));
        assert!(table.rows.iter().all(|r| r.within_bound));
        let c = epsilon_equivalence_check(&complete(6), &[0.5, 0.25, 0.75]).unwrap();
        assert!(c.rows.iter().all(|r| r.t == 1));
    }

    #[test]
    fn curve_csv_is_sorted() {
        let r = convergence_time(&lazy(TopologyKind::Cycle, 8), 0.5).unwrap();
        let csv = r.curve_csv();
        let ks: Vec<u64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
    }
}
