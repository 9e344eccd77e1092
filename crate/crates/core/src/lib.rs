//! Partial-integral (PI) operators on the rectangle `[a,b] x [c,d]`.
//!
//! The crate converts linear 2D PDEs written in a standardized form into
//! partial integral equations (PIEs) and searches for Lyapunov certificates
//! of exponential stability by solving a semidefinite program.
//!
//! Modules, bottom up:
//! - [`poly`]: exact multivariate polynomials over `x, y, θ, ν`.
//! - [`op`]: the PI operator algebra (sums, compositions, adjoints).
//! - [`calculus`]: differentiation and the closed-form 011 inverse.
//! - [`ratmat`]: exact rational matrices.
//! - [`pde`]: standardized PDE model, file format and boundary maps.
//! - [`convert`]: PDE to PIE conversion.
//! - [`positivity`]: Gram parameterization of positive operators.
//! - [`sdp`]: interior-point SDP solver and SDPA I/O.
//! - [`lpi`]: stability LPI assembly, certificate checks and bisection.
//! - [`verify`]: quadrature oracles for numerical cross-checks.
//! - [`suite`]: seeded oracle suites run by `pie2d selftest`.

pub mod calculus;
pub mod convert;
pub mod error;
pub mod lpi;
pub mod op;
pub mod pde;
pub mod poly;
pub mod positivity;
pub mod ratmat;
pub mod sdp;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};
pub use poly::{rat, Mono, Poly, PolyMat, Rat, Rect, Var};
