//! Seeded generators for states, unitaries and random circuit instances.
//!
//! Every stream is a ChaCha8 generator; sub-streams come from `set_stream`, so
//! the value drawn for item `k` does not depend on how many items are drawn in
//! parallel.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ansatz::{FixedGate, Layer, LayeredAnsatz};
use crate::error::Result;
use crate::quantum::{DenseGate, Pauli, PauliObservable, PauliString, StateVector};

pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator number `stream` under the master `seed`.
pub fn substream(seed: u64, stream: u64) -> Rng64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(gaussian(rng), gaussian(rng))
}

/// Uniformly random pure state.
pub fn haar_state<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<StateVector> {
    let amps = (0..1usize << n_qubits).map(|_| complex_gaussian(rng)).collect();
    StateVector::normalized(n_qubits, amps)
}

/// Haar-random `dim x dim` unitary, row-major.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
            out.push(q[(i, j)] * phase);
        }
    }
    out
}

/// Haar-random two-qubit gate on a random ordered pair of distinct qubits.
pub fn random_two_qubit_gate<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<DenseGate> {
    let pair = sample(rng, n_qubits, 2);
    DenseGate::new("u", vec![pair.index(0), pair.index(1)], haar_unitary(4, rng))
}

pub fn random_pauli<R: Rng + ?Sized>(rng: &mut R) -> Pauli {
    [Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..3)]
}

/// Random non-identity Pauli string with coefficient 1.
pub fn random_pauli_string<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> PauliString {
    loop {
        let letters: Vec<Pauli> = (0..n_qubits).map(|_| Pauli::ALL[rng.random_range(0..4)]).collect();
        if letters.iter().any(|&p| p != Pauli::I) {
            return PauliString::new(letters, 1.0).expect("valid letters");
        }
    }
}

/// Sum of `n_terms` random Pauli strings with standard Gaussian coefficients.
pub fn random_observable<R: Rng + ?Sized>(n_qubits: usize, n_terms: usize, rng: &mut R) -> Result<PauliObservable> {
    let terms = (0..n_terms.max(1))
        .map(|_| random_pauli_string(n_qubits, rng).with_coeff(gaussian(rng)))
        .collect();
    PauliObservable::new(terms)
}

/// Layers of one Haar gate followed by a rotation about a random single-qubit Pauli.
/// From the second layer on the Haar gate touches the previous rotation's qubit,
/// so no two rotations can be merged into one and every angle stays independent.
pub fn random_ansatz<R: Rng + ?Sized>(n_qubits: usize, n_layers: usize, rng: &mut R) -> Result<LayeredAnsatz> {
    let mut prev: Option<usize> = None;
    let layers = (0..n_layers)
        .map(|l| {
            let fixed = match (n_qubits, prev) {
                (1, _) => DenseGate::new("u", vec![0], haar_unitary(2, rng))?,
                (_, None) => random_two_qubit_gate(n_qubits, rng)?,
                (_, Some(p)) => {
                    let partner = (p + rng.random_range(1..n_qubits)) % n_qubits;
                    DenseGate::new("u", vec![p, partner], haar_unitary(4, rng))?
                }
            };
            let q = rng.random_range(0..n_qubits);
            prev = Some(q);
            Ok(Layer::new(vec![FixedGate::Dense(fixed)], PauliString::single(n_qubits, q, random_pauli(rng))?, l))
        })
        .collect::<Result<Vec<_>>>()?;
    LayeredAnsatz::new(n_qubits, layers)
}

pub fn uniform_angles<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

/// A generic circuit, input state, observable and angle vector.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub ansatz: LayeredAnsatz,
    pub input: StateVector,
    pub observable: PauliObservable,
    pub theta: Vec<f64>,
}

pub fn random_instance<R: Rng + ?Sized>(n_qubits: usize, n_layers: usize, rng: &mut R) -> Result<RandomInstance> {
    let ansatz = random_ansatz(n_qubits, n_layers, rng)?;
    let input = haar_state(n_qubits, rng)?;
    let observable = random_observable(n_qubits, 4, rng)?;
    let theta = uniform_angles(n_layers, rng);
    Ok(RandomInstance {
        ansatz,
        input,
        observable,
        theta,
    })
}
