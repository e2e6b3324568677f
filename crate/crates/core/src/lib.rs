//! Green's functions of Hubbard clusters on a simulated quantum computer.

pub mod circuit;
pub mod greens;
pub mod mapping_local;
pub mod noise;
pub mod oracle;
pub mod pauli;
pub mod report;
pub mod rng;
pub mod statevector;
pub mod vha;

pub use pauli::{CliffordCircuit, CliffordGate, Flavor, JwLayout, Letter, MajoranaIndex, PauliString, Phase, Register, Spin};
pub use statevector::{Counts, Gate, GateOp, StateVector};
