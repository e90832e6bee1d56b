//! Exact evaluation and verification of information-theoretic generalization
//! bounds on finite learning problems.
//!
//! Every quantity is computed on finite supports, so expectations over the
//! sample and hypothesis are exact sums. Each bound returns its right-hand
//! side together with the enumerated left-hand side, so domination can be
//! checked directly instead of trusted.
//!
//! Modules:
//!
//! - [`measures`]: finite measures, Markov kernels, KL divergence, (conditional)
//!   mutual information.
//! - [`orlicz`]: the `psi_p` family, Orlicz norms and executable checks of the
//!   change-of-measure inequalities.
//! - [`transport`]: exact optimal transport and displacement geodesics.
//! - [`learning`]: learning problems, algorithms, supersamples and the Monte
//!   Carlo engine.
//! - [`bounds`]: one function per generalization bound.
//! - [`suprema`]: majorizing-measure bounds on expected suprema.
//! - [`suite`] and [`verify`]: seeded random instance generators and the
//!   property suites driven by the CLI.

pub mod bounds;
pub mod error;
pub mod learning;
pub mod mc;
pub mod measures;
pub mod orlicz;
pub mod suite;
pub mod suprema;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
