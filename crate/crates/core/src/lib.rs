//! Real-time quantum cavity method for networks of linearly coupled harmonic
//! oscillators.
//!
//! Cavity messages are Feynman-Vernon kernels. On a regular network the
//! dissipative (imaginary) kernel obeys a one-dimensional rational map on the
//! Laplace side whose fixed point is available in closed form; this crate
//! evaluates that fixed point, inverts it to the time domain by two
//! independent routes, checks it against exact finite-tree linear algebra,
//! solves the finite-time twinning relation and probes replica-symmetric
//! stability with population dynamics.
//!
//! `model`, `laplace` and `tree_bp` are generic over the scalar type; the
//! quadrature-heavy modules work in `f64`.

pub mod checks;
pub mod error;
pub mod finite_time;
pub mod laplace;
pub mod model;
pub mod num;
pub mod oracle;
pub mod quadrature;
pub mod rs;
pub mod timedomain;
pub mod tree_bp;

pub use error::{Error, ErrorKind, Result};
pub use num::Real;

pub type ModelParams = model::Params<f64>;
pub type CavityKernel = laplace::CavityKernel<f64>;
pub type KernelShape = laplace::KernelShape<f64>;
pub type TreeMessages = tree_bp::Messages<f64>;

pub use finite_time::{ThermalState, TwoTimeKernel};
pub use oracle::TreeMatrix;
pub use rs::Population;
pub use timedomain::{TimeGrid, TimeKernel};
pub use tree_bp::TreeGraph;
