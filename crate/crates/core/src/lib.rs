//! Geometric-optics numerics built around caustics.
//!
//! The crate covers paraxial symplectic transport ([`phase_space`]), exact
//! thick-lens tracing with caustic extraction ([`lens`]), caustic detection on
//! general ray families and surface measures ([`caustic`], [`mesh`]), pupil
//! wavefronts with their generating functions and Strehl ratio
//! ([`wavefront`]), catastrophe normal forms and classification
//! ([`catastrophe`]), and caustic-driven correction loops ([`corrector`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catastrophe;
pub mod cli;
pub mod corrector;
pub mod caustic;
pub mod error;
pub mod io;
pub mod lens;
pub mod mesh;
pub mod phase_space;
pub mod quadrature;
pub mod wavefront;

pub use error::{Error, Result};
