//! Matrix-product-state simulation of Haar-random brick-wall circuits, with
//! stabilizer Renyi entropies estimated by perfect Pauli sampling.
//!
//! The crate is organized bottom-up:
//!
//! - [`mps`]: open-boundary MPS with canonical-form bookkeeping, truncated
//!   two-qubit updates and entanglement profiles.
//! - [`haar`]: Haar-random `U(4)` gates, brick-wall schedules and
//!   counter-based random streams.
//! - [`magic`]: perfect Pauli sampling and the `M1` / `M2` estimators.
//! - [`oracle`]: dense statevector reference for small chains.
//! - [`harness`]: quenched trajectory averages, deviations, fits and
//!   saturation times for the bond-dimension and time sweeps.
//! - [`config`], [`output`], [`plot`]: configuration files, CSV/JSON bundles
//!   and SVG figures used by the command-line tool.


pub mod config;
pub mod error;
pub mod gates;

pub mod haar;
pub mod harness;
pub mod linalg;
pub mod magic;
pub mod mps;
pub mod oracle;
pub mod output;

pub mod pauli;
pub mod plot;

pub mod stats;

pub use error::{Error, Result};
pub use haar::{BrickworkSchedule, SeedTree};
pub use magic::{estimate_sre, exact_sre_small, pauli_sample, SampleRecord, SreEstimate};
pub use mps::{BondCap, EntropyProfile, MpsState, TruncationReport};
pub use oracle::{m2_haar, SreRank, Statevector};
pub use pauli::{Pauli, PauliString};
