//! Robustness and convergence analysis for linear consensus networks.
//!
//! A consensus network is a primitive row-stochastic matrix `A`. Projecting
//! out the consensus direction gives a stable matrix `QA`, whose discrete
//! Lyapunov solution `P(QA)` measures how much a shock is amplified before
//! the network settles. This crate builds the standard network families,
//! computes those Gramians and epsilon-convergence times, and checks how the
//! two scale with network size.

pub mod error;
pub mod linalg;
pub mod stochastic;
pub mod topology;
pub mod projection;
pub mod gramian;
pub mod convergence;
pub mod analysis;
pub mod io;

pub use error::{Error, Imprimitivity, Result};
pub use stochastic::{InvariantDistribution, PowerCache, Primitivity, StochasticMatrix};
pub use topology::{TopologyDescriptor, TopologyKind};
pub use projection::{project, ProjectedNetwork, Projector, ProjectorKind};
pub use gramian::{GramianReport, Method, Variant};
pub use convergence::{ConvergenceReport, ShockResponse};
pub use analysis::{BoundsCheck, ExponentFit, ScalingSweep};
