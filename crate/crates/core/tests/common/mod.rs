//! Independent dense-matrix reference implementation used as a test oracle.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qntk_core::ansatz::{FixedGate, LayeredAnsatz};
use qntk_core::quantum::{DenseGate, Pauli, PauliObservable, PauliString, StateVector};

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn local(p: Pauli) -> [[Complex64; 2]; 2] {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    match p {
        Pauli::I => [[l, o], [o, l]],
        Pauli::X => [[o, l], [l, o]],
        Pauli::Y => [[o, -i], [i, o]],
        Pauli::Z => [[l, o], [o, -l]],
    }
}

/// Full matrix of a Pauli string: Kronecker product with qubit 0 as the least significant factor.
pub fn pauli_matrix(p: &PauliString) -> CMat {
    let mut m = CMat::from_element(1, 1, c(p.coeff(), 0.0));
    for &letter in p.letters() {
        let l = local(letter);
        let small = CMat::from_fn(2, 2, |r, k| l[r][k]);
        m = small.kronecker(&m);
    }
    m
}

pub fn observable_matrix(o: &PauliObservable) -> CMat {
    let d = 1 << o.n_qubits();
    o.terms().iter().fold(CMat::zeros(d, d), |acc, t| acc + pauli_matrix(t))
}

/// Embeds a one- or two-qubit gate by enumerating basis states.
pub fn gate_matrix(g: &DenseGate, n: usize) -> CMat {
    let d = 1usize << n;
    let t = g.targets();
    let k = 1usize << t.len();
    let m = g.matrix();
    let local_index = |s: usize| t.iter().enumerate().map(|(i, &q)| ((s >> q) & 1) << i).sum::<usize>();
    let with_local = |s: usize, r: usize| {
        t.iter()
            .enumerate()
            .fold(s, |acc, (i, &q)| (acc & !(1 << q)) | (((r >> i) & 1) << q))
    };
    let mut out = CMat::zeros(d, d);
    for col in 0..d {
        let lc = local_index(col);
        for r in 0..k {
            out[(with_local(col, r), col)] += m[r * k + lc];
        }
    }
    out
}

/// `exp(i a P)` for a Pauli string with `P^2 = I`, from its eigen-decomposition.
pub fn rotation_matrix(p: &PauliString, a: f64) -> CMat {
    let pm = pauli_matrix(p);
    let d = pm.nrows();
    // P is Hermitian with eigenvalues +-|coeff|; use the projector form.
    let id = CMat::identity(d, d);
    let s = p.coeff().abs();
    let unit = pm.map(|v| v / s);
    let plus = (&id + &unit).map(|v| v * 0.5);
    let minus = (&id - &unit).map(|v| v * 0.5);
    plus.map(|v| v * Complex64::from_polar(1.0, a * s)) + minus.map(|v| v * Complex64::from_polar(1.0, -a * s))
}

pub fn fixed_matrix(f: &FixedGate, n: usize) -> CMat {
    match f {
        FixedGate::Dense(g) => gate_matrix(g, n),
        FixedGate::Rotation { generator, angle } => rotation_matrix(generator, *angle),
    }
}

/// Full circuit unitary: layer 0 acts first; within a layer the fixed gates precede the rotation.
pub fn circuit_matrix(ansatz: &LayeredAnsatz, theta: &[f64]) -> CMat {
    let n = ansatz.n_qubits();
    let d = 1 << n;
    let mut u = CMat::identity(d, d);
    for layer in ansatz.layers() {
        for f in &layer.fixed {
            u = fixed_matrix(f, n) * u;
        }
        u = rotation_matrix(&layer.generator, theta[layer.angle_index]) * u;
    }
    u
}

pub fn to_vec(s: &StateVector) -> DVector<Complex64> {
    DVector::from_column_slice(s.amplitudes())
}

pub fn dense_output(ansatz: &LayeredAnsatz, theta: &[f64], input: &StateVector, obs: &PauliObservable) -> f64 {
    let psi = circuit_matrix(ansatz, theta) * to_vec(input);
    let v = psi.adjoint() * observable_matrix(obs) * &psi;
    v[(0, 0)].re
}

/// Central difference of `f` along coordinate `l`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], l: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[l] += h;
    let fp = f(&p);
    p[l] -= 2.0 * h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

/// Relative error with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let d = (a - b).abs();
    d <= abs || d <= rel * a.abs().max(b.abs())
}
