//! Parallel MCMC by partitioned recombination.
//!
//! Independent chains are run concurrently, the explored space is split into
//! Voronoi cells, each cell's unnormalized mass is estimated by importance
//! sampling, and per-cell ergodic averages are recombined into whole-space
//! estimates:
//!
//! ```text
//! mu_hat = sum_j w_hat_j * mu_hat_j
//! ```
//!
//! The pieces map onto modules:
//!
//! * [`targets`] unnormalized log densities (Gaussian mixtures, probit
//!   regression, the loss-of-heterozygosity mixture, user closures).
//! * [`samplers`] Langevin, random-walk Metropolis, Albert-Chib Gibbs and
//!   heavy-tailed short trajectories.
//! * [`executor`] deterministic parallel execution of chains and replicates.
//! * [`partition`] adaptive clustering and nearest-center assignment.
//! * [`weights`] importance-sampling cell masses and simplex weights.
//! * [`combine`] within-cell averages and the weighted recombination.
//! * [`diagnostics`] total variation on discretizations, autocorrelation.

pub mod combine;
pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod executor;
pub mod linalg;
pub mod mvt;
pub mod partition;
pub mod samplers;
pub mod special;
pub mod targets;
pub mod weights;

pub use combine::{combine, element_means, weighted_empirical, CombinedEstimate, ElementMeans};
pub use draws::{ChainDraws, DrawStore};
pub use error::{Error, Result};
pub use executor::{run_parallel_chains, run_parallel_replicates, stream_rng, StreamTag};
pub use mvt::MvtDist;
pub use partition::{Partition, Transform};
pub use targets::Target;
pub use weights::{WeightEstimate, WeightMethod};
