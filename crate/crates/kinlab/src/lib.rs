//! Numerical solver and verification lab for nonlocal kinetic Fokker-Planck
//! equations `(d_t + v . grad_x) f = L f + a`, where `L` is an integro-differential
//! collision operator in velocity with a symmetric coercive kernel of order `2s`.
//!
//! The crate simulates the equation on a spatial torus and evaluates, on the
//! resulting trajectories, the quantitative inequalities of De Giorgi-type
//! regularity theory: energy estimates, level-set recursions, soft cutoffs,
//! kinetic scaling, cone geometry, averaging and mollifier rates.

pub mod conegeom;
pub mod cutoffs;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod fracops;
pub mod kernel;
pub mod kinetic_scaling;
pub mod phase;
pub mod quad;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
