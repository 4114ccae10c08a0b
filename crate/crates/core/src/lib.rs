pub mod error;
pub mod plane;
pub mod ode;
pub mod kepler;
pub mod collision;
pub mod chain;
pub mod flow;
pub mod shadow;

/// Version of this library, embedded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
