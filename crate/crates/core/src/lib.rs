//! Two-phase Stefan model of a screw extruder: closed-form equilibria,
//! a front-fixing finite-difference plant, a boundary PDE observer and
//! backstepping output-feedback control of the melt interface.

pub mod analysis;
pub mod config;
pub mod control;
pub mod error;
pub mod integrator;
pub mod mesh;
pub mod observer;
pub mod params;
pub mod plant;
pub mod quadrature;
pub mod sim;
pub mod steady_state;

pub use error::{Error, Result};
