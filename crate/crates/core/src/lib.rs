//! Signed edge-set recovery for zero-field Ising models.
//!
//! The crate learns the signed neighbourhood of every spin by regressing it on
//! all other spins with an ℓ1 penalty (neighbourhood Lasso), and pairs the
//! estimator with the machinery needed to check it:
//!
//! - [`graph`]: graph families (random regular, periodic grid, star, trees) and couplings.
//! - [`sampler`]: heat-bath Gibbs sampling and exact enumeration for small `p`.
//! - [`solvers`]: coordinate-descent Lasso, ℓ1-logistic baseline, neighbourhood extraction.
//! - [`bethe`]: closed-form population quantities on trees (covariances, inverse
//!   covariance, rescaled Lasso target, incoherence constants).
//! - [`witness`]: primal-dual witness certificates and empirical checks of the
//!   sample-level conditions.
//! - [`experiment`]: success-probability sweeps over the rescaled sample size β.
//!
//! Couplings are stored once per unordered edge: `P(x) ∝ exp(Σ_{(r,t)∈E} J_rt x_r x_t)`.

pub mod bethe;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod rng;
pub mod sampler;
pub mod solvers;
pub mod witness;

pub use error::{Error, Result};
