//! Analysis, design and simulation of θ-fair non-intrusive adaptive MAC
//! protocols with 1-slot memory on a slotted collision channel where a user
//! may suddenly carry critical traffic.
//!
//! * [`protocol`]: observations, traffic types and decision rules.
//! * [`analysis`]: Markov-chain metrics (`T_s`, `T_c`, `C_norm`, `D_crit`).
//! * [`optimizer`]: maximizing `C_norm` under a delay constraint, and sweeps.
//! * [`sim`]: seeded slot-level Monte Carlo simulation.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod optimizer;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
