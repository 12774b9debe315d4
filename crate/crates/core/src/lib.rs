//! Generalized mean field (GMF) inference on pairwise binary Markov random
//! fields, with variable clusters chosen by balanced graph partitioning.
//!
//! The pieces:
//!
//! * [`mrf`]: the spin model, random model generation, text serialization.
//! * [`exact`]: brute-force log partition function and marginals.
//! * [`partition`]: affinity matrices, the SDP relaxation of k-equipartition
//!   and the rounding heuristics that turn its solution into clusters.
//! * [`gmf`]: cluster-marginal fixed-point iteration.
//! * [`bounds`]: the cut-weight sandwich on KL(q||p).
//! * [`harness`]: experiment drivers, CSV and plot emission.

pub mod bounds;
pub mod error;
pub mod exact;
pub mod gmf;
pub mod harness;
pub mod mrf;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
pub use mrf::{Coupling, MarkovRandomField, RandomModelSpec};
pub use partition::Partition;
