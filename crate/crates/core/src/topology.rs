//! Network families: star, cycle, directed cycle, complete, path, flocking
//! graphs and the slow-mixing example `B_n`, plus the lazy transform.
//!
//! Undirected families are built as flocking matrices `D^-1 Adj` and keep
//! their adjacency and degrees so later stages can symmetrise them.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stochastic::StochasticMatrix;

/// Connectivity resampling budget for [`random_flocking`].
pub const MAX_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Star,
    Cycle,
    DirectedCycle,
    Complete,
    Path,
    Flocking,
    MixingExample,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 7] = [
        TopologyKind::Star,
        TopologyKind::Cycle,
        TopologyKind::DirectedCycle,
        TopologyKind::Complete,
        TopologyKind::Path,
        TopologyKind::Flocking,
        TopologyKind::MixingExample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Star => "star",
            TopologyKind::Cycle => "cycle",
            TopologyKind::DirectedCycle => "directed_cycle",
            TopologyKind::Complete => "complete",
            TopologyKind::Path => "path",
            TopologyKind::Flocking => "flocking",
            TopologyKind::MixingExample => "mixing_example",
        }
    }

    fn min_n(self) -> usize {
        match self {
            TopologyKind::Cycle | TopologyKind::DirectedCycle | TopologyKind::MixingExample => 3,
            _ => 2,
        }
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidDescriptor(format!("unknown kind '{s}'")))
    }
}

/// Named topology plus the parameters needed to rebuild it.
///
/// Serialises as a single `key=value` line, e.g.
/// `kind=flocking n=32 lazy=false p=0.2 seed=7 self_loops=true`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyDescriptor {
    pub kind: TopologyKind,
    pub n: usize,
    pub lazy: bool,
    /// Flocking only: explicit symmetric edge list (both directions listed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    /// Flocking only: edge probability for random sampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub self_loops: bool,
}

impl TopologyDescriptor {
    pub fn new(kind: TopologyKind, n: usize) -> Self {
        Self {
            kind,
            n,
            lazy: false,
            edges: None,
            p: None,
            seed: None,
            self_loops: true,
        }
    }

    pub fn lazy(kind: TopologyKind, n: usize) -> Self {
        Self {
            lazy: true,
            ..Self::new(kind, n)
        }
    }

    pub fn random_flocking(n: usize, p: f64, seed: u64) -> Self {
        Self {
            p: Some(p),
            seed: Some(seed),
            ..Self::new(TopologyKind::Flocking, n)
        }
    }

    /// Same family at a different dimension.
    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let min = self.kind.min_n();
        if self.n < min {
            return Err(Error::InvalidDimension {
                n: self.n,
                detail: format!("{} needs n >= {min}", self.kind.name()),
            });
        }
        if self.kind == TopologyKind::Flocking && self.edges.is_none() && self.p.is_none() {
            return Err(Error::InvalidDescriptor(
                "flocking needs either edges or p".into(),
            ));
        }
        if self.kind != TopologyKind::Flocking && (self.edges.is_some() || self.p.is_some()) {
            return Err(Error::InvalidDescriptor(format!(
                "edges/p only apply to flocking, not {}",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TopologyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind={} n={} lazy={}", self.kind.name(), self.n, self.lazy)?;
        if let Some(edges) = &self.edges {
            let list: Vec<String> = edges.iter().map(|(i, j)| format!("{i}-{j}")).collect();
            write!(f, " edges={}", list.join(","))?;
        }
        if let Some(p) = self.p {
            write!(f, " p={p}")?;
        }
        if let Some(seed) = self.seed {
            write!(f, " seed={seed}")?;
        }
        if self.kind == TopologyKind::Flocking {
            write!(f, " self_loops={}", self.self_loops)?;
        }
        Ok(())
    }
}

impl FromStr for TopologyDescriptor {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidDescriptor(msg);
        let mut kind = None;
        let mut n = None;
        let mut desc = TopologyDescriptor::new(TopologyKind::Star, 0);
        for token in line.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{token}'")))?;
            let parse_bool = |v: &str| {
                v.parse::<bool>()
                    .map_err(|_| bad(format!("{key}: expected true/false, got '{v}'")))
            };
            match key {
                "kind" => kind = Some(value.parse::<TopologyKind>()?),
                "n" => n = Some(value.parse().map_err(|_| bad(format!("n: '{value}'")))?),
                "lazy" => desc.lazy = parse_bool(value)?,
                "self_loops" => desc.self_loops = parse_bool(value)?,
                "p" => desc.p = Some(value.parse().map_err(|_| bad(format!("p: '{value}'")))?),
                "seed" => {
                    desc.seed = Some(value.parse().map_err(|_| bad(format!("seed: '{value}'")))?)
                }
                "edges" => {
                    let mut edges = Vec::new();
                    for pair in value.split(',').filter(|s| !s.is_empty()) {
                        let (a, b) = pair
                            .split_once('-')
                            .ok_or_else(|| bad(format!("edge '{pair}'")))?;
                        let a = a.parse().map_err(|_| bad(format!("edge '{pair}'")))?;
                        let b = b.parse().map_err(|_| bad(format!("edge '{pair}'")))?;
                        edges.push((a, b));
                    }
                    desc.edges = Some(edges);
                }
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        desc.kind = kind.ok_or_else(|| bad("missing kind".into()))?;
        desc.n = n.ok_or_else(|| bad("missing n".into()))?;
        Ok(desc)
    }
}

/// Adjacency (with any self-loops) and degrees behind `A = D^-1 Adj`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlockingStructure {
    pub adjacency: DMatrix<f64>,
    pub degrees: Vec<f64>,
    pub self_loops: bool,
}

impl FlockingStructure {
    /// `S = D^-1/2 Adj D^-1/2`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.degrees.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.adjacency[(i, j)] / (self.degrees[i] * self.degrees[j]).sqrt()
        })
    }
}

/// Where a generated matrix came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub descriptor: Option<TopologyDescriptor>,
    pub flocking: Option<FlockingStructure>,
}

/// Builds the network described by `desc`, applying the lazy transform last.
pub fn generate(desc: &TopologyDescriptor) -> Result<StochasticMatrix> {
    desc.validate()?;
    let n = desc.n;
    let base = match desc.kind {
        TopologyKind::Star => flocking(&star_edges(n), n, false)?,
        TopologyKind::Cycle => flocking(&cycle_edges(n), n, false)?,
        TopologyKind::Path => flocking(&path_edges(n), n, false)?,
        TopologyKind::Complete => flocking(&complete_edges(n), n, true)?,
        TopologyKind::DirectedCycle => directed_cycle(n)?,
        TopologyKind::MixingExample => mixing_example(n)?,
        TopologyKind::Flocking => match (&desc.edges, desc.p) {
            (Some(edges), _) => flocking(edges, n, desc.self_loops)?,
            (None, Some(p)) => random_flocking(n, p, desc.seed.unwrap_or(0))?,
            (None, None) => unreachable!("rejected by validate"),
        },
    };
    let flocking_part = base.provenance().and_then(|p| p.flocking.clone());
    let mut plain = desc.clone();
    plain.lazy = false;
    let out = base.with_provenance(Provenance {
        descriptor: Some(plain),
        flocking: flocking_part,
    });
    Ok(if desc.lazy { lazy(&out) } else { out })
}

/// `(A + I) / 2`.
///
/// A flocking structure `(Adj, D)` becomes `(Adj + D, 2D)`, which describes the
/// same lazy matrix.
pub fn lazy(a: &StochasticMatrix) -> StochasticMatrix {
    let n = a.n();
    let m = (a.matrix() + DMatrix::<f64>::identity(n, n)) * 0.5;
    let out = StochasticMatrix::new(m).expect("lazy transform preserves stochasticity");
    let Some(prov) = a.provenance() else {
        return out;
    };
    let descriptor = prov
        .descriptor
        .as_ref()
        .filter(|d| !d.lazy)
        .map(|d| TopologyDescriptor {
            lazy: true,
            ..d.clone()
        });
    let flocking = prov.flocking.as_ref().map(|f| FlockingStructure {
        adjacency: &f.adjacency + DMatrix::from_diagonal(&f.degrees.clone().into()),
        degrees: f.degrees.iter().map(|d| 2.0 * d).collect(),
        self_loops: true,
    });
    out.with_provenance(Provenance {
        descriptor,
        flocking,
    })
}

/// `B_n = alpha I + (1 - alpha) 11^T / n` with `alpha = 1 - 1/(n-1)`.
pub fn mixing_example(n: usize) -> Result<StochasticMatrix> {
    if n < 3 {
        return Err(Error::InvalidDimension {
            n,
            detail: "mixing example needs n >= 3".into(),
        });
    }
    let alpha = mixing_alpha(n);
    let off = (1.0 - alpha) / n as f64;
    StochasticMatrix::new(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            alpha + off
        } else {
            off
        }
    }))
}

/// `alpha_n = 1 - 1/(n-1)` for the mixing example.
pub fn mixing_alpha(n: usize) -> f64 {
    1.0 - 1.0 / (n as f64 - 1.0)
}

/// Permutation matrix with `a[i][i+1 mod n] = 1`.
fn directed_cycle(n: usize) -> Result<StochasticMatrix> {
    StochasticMatrix::new(DMatrix::from_fn(n, n, |i, j| {
        if j == (i + 1) % n {
            1.0
        } else {
            0.0
        }
    }))
}

fn star_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).flat_map(|j| [(0, j), (j, 0)]).collect()
}

fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| [(i, (i + 1) % n), ((i + 1) % n, i)])
        .collect()
}

fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n - 1).flat_map(|i| [(i, i + 1), (i + 1, i)]).collect()
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

fn is_connected(adj: &DMatrix<f64>) -> bool {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if adj[(u, v)] > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `A = D^-1 Adj` for an undirected graph given as a symmetric edge list.
pub fn flocking(edges: &[(usize, usize)], n: usize, self_loops: bool) -> Result<StochasticMatrix> {
    if n < 2 {
        return Err(Error::InvalidDimension {
            n,
            detail: "flocking needs n >= 2".into(),
        });
    }
    let mut adjacency = DMatrix::<f64>::zeros(n, n);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::EdgeOutOfRange(i, j));
        }
        adjacency[(i, j)] = 1.0;
    }
    for &(i, j) in edges {
        if adjacency[(j, i)] == 0.0 {
            return Err(Error::AsymmetricEdgeList(i, j));
        }
    }
    if self_loops {
        adjacency.fill_diagonal(1.0);
    }
    let degrees: Vec<f64> = adjacency.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = degrees.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDegreeNode(i));
    }
    if !is_connected(&adjacency) {
        return Err(Error::DisconnectedGraph);
    }
    let m = DMatrix::from_fn(n, n, |i, j| adjacency[(i, j)] / degrees[i]);
    let out = StochasticMatrix::new(m)?;
    Ok(out.with_provenance(Provenance {
        descriptor: Some(TopologyDescriptor {
            edges: Some(edges.to_vec()),
            self_loops,
            ..TopologyDescriptor::new(TopologyKind::Flocking, n)
        }),
        flocking: Some(FlockingStructure {
            adjacency,
            degrees,
            self_loops,
        }),
    }))
}

/// Erdos-Renyi flocking graph with self-loops, resampled until connected.
///
/// Deterministic for a fixed `(n, p, seed)`.
pub fn random_flocking(n: usize, p: f64, seed: u64) -> Result<StochasticMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    if n < 2 {
        return Err(Error::InvalidDimension {
            n,
            detail: "flocking needs n >= 2".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j));
                    edges.push((j, i));
                }
            }
        }
        match flocking(&edges, n, true) {
            Ok(a) => {
                let prov = a.provenance().cloned().unwrap_or_default();
                return Ok(a.with_provenance(Provenance {
                    descriptor: Some(TopologyDescriptor::random_flocking(n, p, seed)),
                    ..prov
                }));
            }
            Err(Error::DisconnectedGraph) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetriesExhausted {
        retries: MAX_RESAMPLES,
    })
}
