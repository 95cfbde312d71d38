//! Orthogonal (manifold-aware) perturbations for perturbation-based explainers,
//! plus the topological tooling used to measure how much a perturbation scheme
//! distorts a point cloud.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: point clouds, seeds, distance matrices, synthetic shapes, CSV I/O.
//! - [`tda`]: Vietoris-Rips persistence (H0/H1) and bottleneck distance.
//! - [`gh`]: discrete Gromov-Hausdorff distance and its small-radius fast path.
//! - [`manifold`]: mappers to a low-dimensional space and local affine subspaces.
//! - [`perturb`]: Gaussian / projection / orthogonal perturbations and the EMaP sampler.
//! - [`models`]: black-box model interface, L1 logistic regression, subprocess models.
//! - [`explain`]: LIME surrogate and explanation quality metrics.
//! - [`experiments`]: configuration and Monte-Carlo harness behind the `emap` CLI.

// `!(x >= 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod explain;
pub mod geometry;
pub mod gh;
pub mod manifold;
pub mod models;
pub mod perturb;
pub mod tda;

pub use explain::{Explanation, KernelKind, KernelSpec};
pub use geometry::{PointCloud, Seed, Shape};
pub use gh::{Correspondence, GhMode, GhResult};
pub use manifold::{LocalSubspace, Mapper, MapperKind};
pub use models::{BlackBoxModel, LinearModel, LogisticModel};
pub use perturb::{PerturbationKind, PerturbationScheme, PerturbationSet};
pub use tda::{FiltrationParams, PersistenceDiagram, PersistencePair};
