//! Neutral test particles around a Schwarzschild black hole immersed in a
//! uniform Melvin magnetic field.

pub mod dynamics;
pub mod equilibria;
pub mod melnikov;
pub mod cli;
pub mod error;
pub mod ode;
pub mod poincare;
pub mod quadrature;
pub mod spacetime;

pub use error::{Curve, Error, Result};
