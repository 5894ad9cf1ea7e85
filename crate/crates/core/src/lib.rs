pub mod body;
pub mod decomposition;
pub mod error;
pub mod gaussian;
pub mod gci;
pub mod lattice;
pub mod mixture;
pub mod polaron;
pub mod product;
pub mod qmc;
pub mod recursion;
pub mod spectral;
pub mod stats;

pub use body::{ConvexBody, OscillationCoords, ProjectionOptions};
pub use error::{Error, Result};
pub use gaussian::{GaussianMeasure, QuadraticForm};
pub use lattice::{Lattice, LinearFunctional};
pub use stats::Estimate;
