//! Coherent-state continuous-variable QKD simulator.
//!
//! The crate is organized bottom-up: [`math`] and [`fock`] hold numerical
//! foundations, [`encoding`] and [`channel`] model what Alice sends and what
//! Bob sees, [`rates`] and [`phase`] turn statistics into key rates and
//! phase-error estimates, [`codes`] does the classical post-processing and
//! [`protocol`] wires everything into a full session. [`table`] rebuilds the
//! published rate table.

pub mod channel;
pub mod codes;
pub mod encoding;
pub mod error;
pub mod fock;
pub mod math;
pub mod phase;
pub mod protocol;
pub mod rates;
pub mod table;

pub use error::{Error, Result};
