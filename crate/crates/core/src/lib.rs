//! Imitation-regularized optimal transport on directed networks.
//!
//! The crate solves `min_P sum C P + alpha KL(P || Q)` over path
//! distributions with fixed endpoint marginals by rewriting it as a
//! Schrödinger bridge against the prior `M_Q` and running Sinkhorn.

pub mod approx;
pub mod bridge;
pub mod error;
pub mod fixtures;
pub mod formats;
pub mod imitation;
pub mod network;
pub mod numeric;
pub mod oracle;
pub mod robust;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
