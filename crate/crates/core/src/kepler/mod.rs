//! Planar Kepler problem: Lambert arcs in closed form and state propagation.

mod lambert;
mod propagate;

pub use lambert::*;
pub use propagate::*;
