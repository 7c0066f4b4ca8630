//! Recursive compression of quantum circuits over finite gate sets.
//!
//! A circuit is cut into sub-circuits; each sub-circuit is learned from
//! randomized-measurement data by finding one shallow local inversion per
//! qubit, the inversions are sewn into a constant-depth circuit on a doubled
//! register, the result is verified, and verified pieces replace the
//! originals.

pub mod circuit;
pub mod compressor;
pub mod format;
pub mod gates;
pub mod lil;
pub mod pauli;
pub mod shadows;
pub mod sim;
pub mod verify;

pub use circuit::{BinaryLabel, Circuit, CutRatio, Direction, Gate, Program, ProgramStep};
pub use gates::{GateDef, GateId, GateSet};
pub use pauli::{ObservableSum, Pauli, PauliKey, PauliString};
