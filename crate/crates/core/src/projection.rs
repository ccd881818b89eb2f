//! Consensus projectors `Q = I - 11^T/n` and `Q_pi = I - 1 pi^T`, projected
//! networks `M = Pi A` with a stability certificate, and the commutation
//! identities `(Pi A)^k = Pi A^k`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, inf_norm};
use crate::stochastic::{InvariantDistribution, StochasticMatrix};

/// Spectral radii at or above `1 - STABILITY_MARGIN` are not certified.
pub const STABILITY_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    Uniform,
    PiWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    kind: ProjectorKind,
    matrix: DMatrix<f64>,
}

impl Projector {
    /// `Q = I - 11^T / n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension {
                n,
                detail: "projector needs n >= 2".into(),
            });
        }
        let off = 1.0 / n as f64;
        Ok(Self {
            kind: ProjectorKind::Uniform,
            matrix: DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - off } else { -off }),
        })
    }

    /// `Q_pi = I - 1 pi^T`.
    pub fn pi_weighted(pi: &InvariantDistribution) -> Self {
        let n = pi.len();
        let p = pi.as_slice();
        Self {
            kind: ProjectorKind::PiWeighted,
            matrix: DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - p[j]),
        }
    }

    pub fn kind(&self) -> ProjectorKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.matrix)
    }
}

/// `M = Pi A` together with its certified spectral radius.
#[derive(Debug, Clone)]
pub struct ProjectedNetwork {
    matrix: DMatrix<f64>,
    source: Option<StochasticMatrix>,
    projector_kind: Option<ProjectorKind>,
    spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCertificate {
    pub n: usize,
    pub projector_kind: Option<ProjectorKind>,
    pub spectral_radius: f64,
    pub decay_alpha: f64,
}

impl ProjectedNetwork {
    /// Certifies an arbitrary square matrix as a stable network.
    pub fn certify(matrix: DMatrix<f64>) -> Result<Self> {
        let spectral_radius = linalg::spectral_radius(&matrix)?;
        if spectral_radius >= 1.0 - STABILITY_MARGIN {
            return Err(Error::NotStable { spectral_radius });
        }
        Ok(Self {
            matrix,
            source: None,
            projector_kind: None,
            spectral_radius,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn source(&self) -> Option<&StochasticMatrix> {
        self.source.as_ref()
    }

    pub fn projector_kind(&self) -> Option<ProjectorKind> {
        self.projector_kind
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// Geometric decay rate `lim ||(QA)^k||^(1/k)`, i.e. the spectral radius.
    pub fn decay_alpha(&self) -> f64 {
        self.spectral_radius
    }

    pub fn certificate(&self) -> StabilityCertificate {
        StabilityCertificate {
            n: self.n(),
            projector_kind: self.projector_kind,
            spectral_radius: self.spectral_radius,
            decay_alpha: self.decay_alpha(),
        }
    }
}

/// Builds `Pi A` and certifies `rho(Pi A) < 1 - 1e-12`.
pub fn project(a: &StochasticMatrix, proj: &Projector) -> Result<ProjectedNetwork> {
    if proj.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: proj.n(),
        });
    }
    let mut net = ProjectedNetwork::certify(proj.matrix() * a.matrix())?;
    net.source = Some(a.clone());
    net.projector_kind = Some(proj.kind());
    Ok(net)
}

/// `||(Pi A)^k - Pi A^k||_inf`.
pub fn commutation_check(a: &StochasticMatrix, proj: &Projector, k: usize) -> f64 {
    let k = k.max(1);
    let pa = proj.matrix() * a.matrix();
    let mut lhs = pa.clone();
    let mut ak = a.matrix().clone();
    for _ in 1..k {
        lhs = &lhs * &pa;
        ak = &ak * a.matrix();
    }
    inf_norm(&(lhs - proj.matrix() * ak))
}

/// `||Q_pi A^(m+l) - (Q_pi A^m)(Q_pi A^l)||_inf`.
pub fn semigroup_defect(a: &StochasticMatrix, proj: &Projector, m: u32, l: u32) -> f64 {
    let pow = |e: u32| {
        let mut out = DMatrix::identity(a.n(), a.n());
        for _ in 0..e {
            out *= a.matrix();
        }
        out
    };
    let p = proj.matrix();
    let lhs = p * pow(m + l);
    let rhs = (p * pow(m)) * (p * pow(l));
    inf_norm(&(lhs - rhs))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    linalg::spectral_radius(m)
}
