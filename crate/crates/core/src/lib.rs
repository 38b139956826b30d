//! Compositional input-to-state safety verification for interconnected
//! systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`expr`]: a small scalar expression language (parser, evaluator,
//!   symbolic differentiation) used for dynamics, barriers, and gains.
//! - [`field`]: scalar/vector fields over named state and input variables,
//!   gradients, and Lie derivatives.
//! - [`numeric`]: quadrature, bisection, golden-section refinement, and
//!   monotone cubic interpolation.
//! - [`gains`]: comparison-class functions (class-K and friends), class
//!   certification, inversion, composition, and the small-gain test.
//! - [`construct`]: construction of the scaling function used to merge two
//!   subsystem barriers into one barrier for the interconnection, plus the
//!   combined gain and decay rate.
//! - [`verify`]: sampling-based certificate checks, trajectory simulation,
//!   and machine-readable reports.

pub mod construct;
pub mod expr;
pub mod field;
pub mod gains;
pub mod numeric;
pub mod verify;
