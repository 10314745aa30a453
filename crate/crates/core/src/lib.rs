pub mod config;
pub mod controllers;
pub mod error;
pub mod harness;
pub mod linear;
pub mod nonlinear;
pub mod observer;
pub mod ode;
pub mod plant;
pub mod rigid_dynamics;
pub mod sim;
pub mod units;

pub use error::{Error, Result};
