//! Re-identification risk for users observed through randomized discrete
//! representations: exact accuracies and upper bounds for explicit
//! representation matrices, a Topics-style simulator, linkage attacks, and
//! a reproducible Monte Carlo harness.

pub mod assignment;
pub mod attacks;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod rng;
pub mod topics;

pub use error::{ReidError, Result};
pub use model::{FinitePrior, ObservationVector, PredictionMatrix, PriorComponent, RepresentationMatrix};
pub use rng::{Purpose, SeedSpec, Stream, StreamLabel};
