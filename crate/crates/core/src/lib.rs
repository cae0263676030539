//! Simulation of a heralded hyperparallel photonic CNOT gate built from
//! quantum-dot spins in double-sided optical microcavities.
//!
//! Photons carry polarization and spatial-mode qubits. Each cavity "block"
//! either transmits the photon with a spin-dependent flip or diverts it to a
//! heralding detector, so imperfect coupling lowers the success probability
//! but not the fidelity of the heralded output.

pub mod analysis;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod gates;
pub mod hyperstate;
pub mod scattering;

pub use error::{Error, Result};
pub use gates::{hyper_cnot, hyper_cnot_n, ideal_hyper_cnot_n, GateConfig, GateOutcome, Mode};
pub use hyperstate::{fidelity, HyperState, PhotonSpec, PhotonState, Pol, Spatial, Spin};
pub use scattering::{BlockCoeffs, CavityParams, ScatterCoeffs};
