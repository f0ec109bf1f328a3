pub mod angmom;
pub mod error;
pub mod operator;

pub use error::{Error, Result};
pub mod expm;
pub mod ode;
pub mod coupling;
pub mod lindblad;
pub mod model;
pub mod trajectories;
pub mod vibvalidity;
