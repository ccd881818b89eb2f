//! Validated row-stochastic matrices, primitivity and invariant distributions.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Imprimitivity, Result};
use crate::topology::Provenance;

/// Absolute tolerance on each row sum.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Entries in `[-NEGATIVE_CLAMP, 0)` are treated as float noise and zeroed.
pub const NEGATIVE_CLAMP: f64 = 1e-14;
/// Residual accepted for `pi^T A = pi^T`.
pub const PI_RESIDUAL_TOL: f64 = 1e-10;
const POLISH_TOL: f64 = 1e-14;
/// Default memory cap for cached matrix powers (2 GiB).
pub const DEFAULT_CACHE_BYTES: usize = 2 << 30;

static CACHE_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_CACHE_BYTES);

/// Memory cap used by every power cache built inside the library.
pub fn cache_cap_bytes() -> usize {
    CACHE_CAP.load(Ordering::Relaxed)
}

pub fn set_cache_cap_bytes(bytes: usize) {
    CACHE_CAP.store(bytes, Ordering::Relaxed);
}

/// Row-stochastic network matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
    provenance: Option<Provenance>,
}

impl StochasticMatrix {
    /// Validates `raw` as a row-stochastic matrix.
    ///
    /// Negative entries no smaller than `-1e-14` are clamped to zero; anything
    /// more negative is rejected, as is any row whose sum misses 1 by more
    /// than `1e-12`. Rejections list every offending entry or row.
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = raw.shape();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        if rows == 0 {
            return Err(Error::Empty);
        }
        let mut entries = raw;
        let mut negatives = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                let v = entries[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    if v >= -NEGATIVE_CLAMP {
                        entries[(i, j)] = 0.0;
                    } else {
                        negatives.push((i, j, v));
                    }
                }
            }
        }
        if !negatives.is_empty() {
            return Err(Error::NegativeEntry { entries: negatives });
        }
        let bad_rows: Vec<(usize, f64)> = (0..rows)
            .filter_map(|i| {
                let dev = entries.row(i).sum() - 1.0;
                (dev.abs() > ROW_SUM_TOL).then_some((i, dev))
            })
            .collect();
        if !bad_rows.is_empty() {
            return Err(Error::RowSumViolation { rows: bad_rows });
        }
        Ok(Self {
            entries,
            provenance: None,
        })
    }

    /// Builds from nested rows, rejecting ragged input as non-square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NonSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Primitivity of the induced digraph (edge `i -> j` iff `a_ij > 0`).
    pub fn primitivity(&self) -> Primitivity {
        primitivity(&self.entries)
    }

    pub fn is_primitive(&self) -> bool {
        self.primitivity().is_primitive()
    }

    /// Errors with the diagnosis unless the matrix is primitive.
    pub fn require_primitive(&self) -> Result<()> {
        match self.primitivity() {
            Primitivity::Primitive => Ok(()),
            Primitivity::Imprimitive(reason) => Err(Error::NotPrimitive { reason }),
        }
    }

    /// True when every column also sums to 1 within `tol`.
    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        (0..self.n()).all(|j| (self.entries.column(j).sum() - 1.0).abs() <= tol)
    }

    pub fn invariant_distribution(&self) -> Result<InvariantDistribution> {
        InvariantDistribution::of(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitivity {
    Primitive,
    Imprimitive(Imprimitivity),
}

impl Primitivity {
    pub fn is_primitive(self) -> bool {
        matches!(self, Primitivity::Primitive)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Strong connectivity by depth-first search on the graph and its reverse,
/// then the period as the gcd of `level(u) + 1 - level(v)` over all edges of a
/// breadth-first layering.
fn primitivity(a: &DMatrix<f64>) -> Primitivity {
    let n = a.nrows();
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] > 0.0 {
                fwd[i].push(j);
                rev[j].push(i);
            }
        }
    }
    if !reaches_all(&fwd) || !reaches_all(&rev) {
        return Primitivity::Imprimitive(Imprimitivity::Reducible);
    }
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &fwd[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    for (u, targets) in fwd.iter().enumerate() {
        for &v in targets {
            // level(v) <= level(u) + 1 for every edge of a BFS layering.
            period = gcd(period, level[u] + 1 - level[v]);
        }
    }
    if period == 1 {
        Primitivity::Primitive
    } else {
        Primitivity::Imprimitive(Imprimitivity::Periodic { period })
    }
}

/// Left Perron vector of a primitive stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantDistribution {
    pi: Vec<f64>,
    /// `||pi^T A - pi^T||_inf`.
    residual: f64,
}

impl InvariantDistribution {
    /// Power iteration on `A^T` from the uniform vector, falling back to a
    /// dense solve of `(A^T - I) pi = 0` with `sum(pi) = 1` when the residual
    /// has not reached `1e-10` within `10 n ln n` iterations.
    pub fn of(a: &StochasticMatrix) -> Result<Self> {
        a.require_primitive()?;
        let m = a.matrix();
        let n = a.n();
        let budget = ((10.0 * n as f64 * (n as f64).ln()).ceil() as usize).max(10);
        let at = m.transpose();
        let mut pi = DVector::from_element(n, 1.0 / n as f64);
        for _ in 0..budget {
            let next = &at * &pi;
            let next = &next / next.sum();
            let done = residual(m, next.as_slice()) <= PI_RESIDUAL_TOL;
            pi = next;
            if done {
                let out = Self::finish(m, pi);
                if out.residual <= POLISH_TOL {
                    return Ok(out);
                }
                // slow chains stop right at the tolerance; a direct solve is
                // usually several orders more accurate
                return Ok(match dense_stationary(m).map(|p| Self::finish(m, p)) {
                    Some(d) if d.residual < out.residual && d.pi.iter().all(|&p| p >= 0.0) => d,
                    _ => out,
                });
            }
        }
        let solved = dense_stationary(m).ok_or(Error::NoConvergence { iterations: budget })?;
        let out = Self::finish(m, solved);
        if out.residual > PI_RESIDUAL_TOL || out.pi.iter().any(|&p| p < 0.0) {
            return Err(Error::NoConvergence { iterations: budget });
        }
        Ok(out)
    }

    /// Wraps an externally supplied distribution, renormalising it.
    pub fn from_vec(a: &StochasticMatrix, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != a.n() {
            return Err(Error::DimensionMismatch {
                expected: a.n(),
                found: pi.len(),
            });
        }
        Ok(Self::finish(a.matrix(), DVector::from_vec(pi)))
    }

    fn finish(m: &DMatrix<f64>, pi: DVector<f64>) -> Self {
        let s = pi.sum();
        let pi: Vec<f64> = pi.iter().map(|p| p / s).collect();
        let residual = residual(m, &pi);
        Self { pi, residual }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn max(&self) -> f64 {
        self.pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pi.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `1 pi^T`: every row equals `pi`.
    pub fn consensus_matrix(&self) -> DMatrix<f64> {
        let n = self.pi.len();
        DMatrix::from_fn(n, n, |_, j| self.pi[j])
    }
}

fn residual(m: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = m.nrows();
    (0..n)
        .map(|j| ((0..n).map(|i| pi[i] * m[(i, j)]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max)
}

fn dense_stationary(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = m.nrows();
    let mut sys = m.transpose() - DMatrix::identity(n, n);
    sys.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    sys.lu().solve(&rhs)
}

/// Cached dyadic powers `A, A^2, A^4, ...` of a stochastic matrix.
#[derive(Debug, Clone)]
pub struct PowerCache {
    levels: Vec<DMatrix<f64>>,
    cap_bytes: usize,
}

impl PowerCache {
    pub fn new(a: &StochasticMatrix, cap_bytes: usize) -> Result<Self> {
        let cache = Self {
            levels: vec![a.matrix().clone()],
            cap_bytes,
        };
        cache.check_budget(1)?;
        Ok(cache)
    }

    fn check_budget(&self, levels: usize) -> Result<()> {
        let n = self.levels[0].nrows();
        let bytes = (levels as u128) * (n as u128) * (n as u128) * 8;
        if bytes > self.cap_bytes as u128 {
            return Err(Error::DimensionTooLarge {
                n,
                detail: format!(
                    "{levels} cached powers need {bytes} bytes, cap is {}",
                    self.cap_bytes
                ),
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.levels[0].nrows()
    }

    /// Highest `j` for which `A^(2^j)` is cached.
    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// Squares until `A^(2^j)` is available.
    pub fn extend_to(&mut self, j: usize) -> Result<()> {
        if j < self.levels.len() {
            return Ok(());
        }
        self.check_budget(j + 1)?;
        while self.levels.len() <= j {
            let last = self.levels.last().expect("cache is never empty");
            let next = last * last;
            self.levels.push(next);
        }
        Ok(())
    }

    /// `A^(2^j)`; `j` must not exceed [`Self::max_level`].
    pub fn level(&self, j: usize) -> &DMatrix<f64> {
        &self.levels[j]
    }

    pub fn levels(&self) -> &[DMatrix<f64>] {
        &self.levels
    }

    /// `A^k` as a product of cached levels along the binary expansion of `k`.
    pub fn power(&mut self, k: u64) -> Result<DMatrix<f64>> {
        let n = self.n();
        let bits = 64 - k.leading_zeros() as usize;
        if bits > 0 {
            self.extend_to(bits - 1)?;
        }
        let mut acc: Option<DMatrix<f64>> = None;
        for j in 0..bits {
            if k >> j & 1 == 1 {
                acc = Some(match acc {
                    None => self.levels[j].clone(),
                    Some(m) => m * &self.levels[j],
                });
            }
        }
        Ok(acc.unwrap_or_else(|| DMatrix::identity(n, n)))
    }
}

/// `A^(2^j)` for `j = 0..=jmax`.
pub fn matrix_power_cache(a: &StochasticMatrix, jmax: usize, cap_bytes: usize) -> Result<PowerCache> {
    let mut cache = PowerCache::new(a, cap_bytes)?;
    cache.extend_to(jmax)?;
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_lazy(n: usize) -> StochasticMatrix {
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = 0.5;
        for j in 1..n {
            m[(0, j)] = 0.5 / (n - 1) as f64;
            m[(j, 0)] = 0.5;
            m[(j, j)] = 0.5;
        }
        StochasticMatrix::new(m).unwrap()
    }

    fn directed_cycle(n: usize) -> StochasticMatrix {
        StochasticMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            if j == (i + 1) % n {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    #[test]
    fn identity_is_accepted() {
        assert!(StochasticMatrix::new(DMatrix::identity(3, 3)).is_ok());
    }

    #[test]
    fn row_sum_violation_reports_row_and_deviation() {
        let err = StochasticMatrix::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).unwrap_err();
        match err {
            Error::RowSumViolation { rows } => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].0, 0);
                assert!((rows[0].1 - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixing_example_five_is_accepted() {
        let m = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.8 } else { 0.05 });
        assert!(StochasticMatrix::new(m).is_ok());
    }

    #[test]
    fn tiny_negatives_are_clamped_larger_ones_rejected() {
        let a = StochasticMatrix::from_rows(&[vec![1.0 + 5e-15, -5e-15], vec![0.5, 0.5]]).unwrap();
        assert_eq!(a.matrix()[(0, 1)], 0.0);
        let err = StochasticMatrix::from_rows(&[vec![1.1, -0.1], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { ref entries } if entries[0].0 == 0 && entries[0].1 == 1));
    }

    #[test]
    fn non_square_and_non_finite_are_rejected() {
        assert!(matches!(
            StochasticMatrix::new(DMatrix::zeros(2, 3)),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
        assert!(matches!(
            StochasticMatrix::from_rows(&[vec![f64::NAN, 1.0], vec![0.5, 0.5]]),
            Err(Error::NonFinite { row: 0, col: 0 })
        ));
    }

    #[test]
    fn directed_cycle_is_periodic_with_period_n() {
        for n in 3..9 {
            assert_eq!(
                directed_cycle(n).primitivity(),
                Primitivity::Imprimitive(Imprimitivity::Periodic { period: n })
            );
        }
    }

    #[test]
    fn block_diagonal_is_reducible() {
        let a = StochasticMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(
            a.primitivity(),
            Primitivity::Imprimitive(Imprimitivity::Reducible)
        );
        let one_way = StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert_eq!(
            one_way.primitivity(),
            Primitivity::Imprimitive(Imprimitivity::Reducible)
        );
    }

    #[test]
    fn complete_network_is_primitive_with_uniform_pi() {
        let n = 6;
        let a = StochasticMatrix::new(DMatrix::from_element(n, n, 1.0 / n as f64)).unwrap();
        assert!(a.is_primitive());
        let pi = a.invariant_distribution().unwrap();
        for &p in pi.as_slice() {
            assert!((p - 1.0 / n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn invariant_distribution_requires_primitive() {
        let err = directed_cycle(4).invariant_distribution().unwrap_err();
        assert_eq!(
            err,
            Error::NotPrimitive {
                reason: Imprimitivity::Periodic { period: 4 }
            }
        );
    }

    #[test]
    fn lazy_star_pi_matches_dense_solve() {
        // Oracle: solve (A^T - I) pi = 0 with the normalisation row.
        for n in [4, 8, 17] {
            let a = star_lazy(n);
            let oracle = dense_stationary(a.matrix()).unwrap();
            let pi = a.invariant_distribution().unwrap();
            assert!((pi.as_slice()[0] - 0.5).abs() < 1e-10);
            for i in 1..n {
                assert!((pi.as_slice()[i] - 0.5 / (n - 1) as f64).abs() < 1e-10);
            }
            for i in 0..n {
                assert!((pi.as_slice()[i] - oracle[i]).abs() < 1e-10);
            }
            assert!(pi.residual() <= PI_RESIDUAL_TOL);
        }
    }

    #[test]
    fn slow_chain_falls_back_to_dense_solve() {
        // A sticky two-state chain far from uniform mixes too slowly for the
        // power-iteration budget.
        let a = StochasticMatrix::from_rows(&[vec![1.0 - 1e-7, 1e-7], vec![3e-7, 1.0 - 3e-7]]).unwrap();
        let pi = a.invariant_distribution().unwrap();
        assert!((pi.as_slice()[0] - 0.75).abs() < 1e-9);
        assert!(pi.residual() <= PI_RESIDUAL_TOL);
    }

    #[test]
    fn identity_power_cache_stays_identity() {
        let a = StochasticMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let cache = matrix_power_cache(&a, 3, DEFAULT_CACHE_BYTES).unwrap();
        assert_eq!(cache.levels().len(), 4);
        for m in cache.levels() {
            assert_eq!(m, &DMatrix::<f64>::identity(4, 4));
        }
    }

    #[test]
    fn mixing_example_fourth_power_closed_form() {
        let alpha: f64 = 0.75;
        let n = 5;
        let b = StochasticMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            alpha * f64::from(u8::from(i == j)) + (1.0 - alpha) / n as f64
        }))
        .unwrap();
        let cache = matrix_power_cache(&b, 2, DEFAULT_CACHE_BYTES).unwrap();
        let a4 = alpha.powi(4);
        let expect = DMatrix::from_fn(n, n, |i, j| {
            a4 * f64::from(u8::from(i == j)) + (1.0 - a4) / n as f64
        });
        assert!((cache.level(2) - expect).amax() < 1e-14);
    }

    #[test]
    fn power_cache_matches_repeated_multiplication() {
        let n = 8;
        let a = StochasticMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.5
            } else if j == (i + 1) % n || i == (j + 1) % n {
                0.25
            } else {
                0.0
            }
        }))
        .unwrap();
        let mut cache = matrix_power_cache(&a, 4, DEFAULT_CACHE_BYTES).unwrap();
        let mut naive = DMatrix::identity(n, n);
        for k in 1..=16u64 {
            naive *= a.matrix();
            if k.is_power_of_two() {
                let j = k.trailing_zeros() as usize;
                assert!((cache.level(j) - &naive).amax() < 1e-12);
            }
            assert!((cache.power(k).unwrap() - &naive).amax() < 1e-12);
        }
    }

    #[test]
    fn power_cache_respects_memory_cap() {
        let a = StochasticMatrix::new(DMatrix::identity(16, 16)).unwrap();
        let bytes_per = 16 * 16 * 8;
        assert!(matrix_power_cache(&a, 3, 4 * bytes_per).is_ok());
        assert!(matches!(
            matrix_power_cache(&a, 4, 4 * bytes_per),
            Err(Error::DimensionTooLarge { n: 16, .. })
        ));
    }
}
