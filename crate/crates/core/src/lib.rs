//! Simulation and verification tools for a two-body spin-lattice
//! Hamiltonian whose low-energy sector encodes a cluster state.
//!
//! Modules build on each other from the bottom up: [`lattice`] graphs,
//! [`pauli_ops`] operator algebra, [`hamiltonian`] construction, then
//! [`spectra`], [`perturbation`], [`cluster_stabilizer`], [`mbqc`] and
//! [`noise`].

pub mod cluster_stabilizer;
pub mod error;
pub mod hamiltonian;
pub mod lattice;
pub mod mbqc;
pub mod noise;
pub mod pauli_ops;
pub mod perturbation;
pub mod spectra;

pub use error::{Error, Result};
