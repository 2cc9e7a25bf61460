pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod harmonic;
pub mod lattice;
pub mod matcore;
pub mod potential;
pub mod siegel;
pub mod weyl;

pub use error::{Error, Result};
pub use lattice::Side;
pub use matcore::CMatrix;
pub use potential::{Kind, Potential, PotentialSpec, Support};
pub use siegel::SiegelPoint;
pub use harmonic::IntervalUnion;
pub use weyl::{WeylEvaluation, WeylOptions};
