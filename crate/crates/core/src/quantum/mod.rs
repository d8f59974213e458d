//! Dense statevector substrate: amplitudes, Pauli algebra and gates.

mod gate;
mod pauli;
mod state;

pub use gate::{apply_dense_gate, DenseGate};
pub use pauli::{apply_pauli_rotation, expectation, Pauli, PauliObservable, PauliString};
pub use state::{inner_product, StateVector, MAX_QUBITS};
