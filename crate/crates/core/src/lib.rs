//! Gaussian collisional models.
//!
//! A system mode collides with a chain of ancillas that also interact with
//! each other. Carrying one ancilla along makes the dynamics a Markovian
//! affine recurrence `γⁿ⁺¹ = XγⁿXᵀ + Y` on covariance matrices. From it the
//! crate derives the exact memory kernel of the reduced dynamics, the
//! CP-divisibility monotone of its intermediate maps, and the stability of
//! its fixed point.
//!
//! Units: `ħ = 1`, vacuum covariance `I/2`, quadrature order `(q₁, p₁, q₂, p₂, …)`.

pub mod cli;
pub mod collision;
pub mod divisibility;
pub mod error;
pub mod kernel;
pub mod observables;
pub mod stability;
pub mod symplectic;

pub use collision::{
    brute_force_chain, brute_force_trajectory, build_embedding, embed_step, evolve, AncillaCoupling, CollisionBlocks, EmbeddedState,
    EmbeddingChannel, ModelSpec, SystemCoupling,
};
pub use divisibility::{
    cptp_test_matrix, cumulative_map, cumulative_maps, divisibility_grid, intermediate_map, non_divisibility,
    DivisibilityGrid, GaussianMap,
};
pub use error::{Error, Result};
pub use kernel::{
    bs_compact_kernel, build_context, kraus_coefficients, mk_matrix, reconstruct_trajectory, tms_qp_kernels,
    KernelSeries, MatrixBasis,
};
pub use observables::{mutual_information, occupation};
pub use stability::{analyze, bs_eigenvalues, fixed_point, is_gas, spectral_radius, tms_critical, tms_eigenvalues};
pub use symplectic::{CovarianceMatrix, SymplecticMatrix};
