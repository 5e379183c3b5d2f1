//! Nonparametric maximum likelihood estimation of Poisson mixing distributions
//! with per-cell read depths, Wasserstein-1 distances between the fitted
//! distributions, and pseudo-F permutation tests for differences between
//! groups of subjects.
//!
//! The crate is organised bottom-up:
//!
//! | module | contents |
//! |--------|----------|
//! | [`measures`] | discrete mixing measures, Poisson smoothing, W1 distances |
//! | [`likelihood`] | count samples, the mixture log-likelihood and its directional derivative |
//! | [`solvers`] | VDM, VEM and ISDM solvers for the NPMLE |
//! | [`anova`] | distance matrices, pseudo-F statistics, permutation tests, Gower centering, BH |
//! | [`simulate`] | simulation designs, truncated-Gamma population models, power studies |
//! | [`cli_io`] | long-table ingestion, bound selection, batch test and simulation commands |

pub mod anova;
pub mod cli_io;
pub mod error;
pub mod likelihood;
pub mod measures;
mod optim;
pub mod rng;
pub mod simulate;
pub mod solvers;

pub use error::{Error, Result};
pub use likelihood::{phi, phi_prime, phi_prime_grid, CountSample};
pub use measures::{point_mass, poisson_smooth, w1_measures, w1_pmfs, DiscreteMeasure, TruncatedPMF};
pub use solvers::{fit, Algorithm, FitResult, SolverConfig};
