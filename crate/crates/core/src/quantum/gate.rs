use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;

use super::state::StateVector;
use crate::error::{QntkError, Result};

const UNITARY_TOL: f64 = 1e-10;

/// A one- or two-qubit unitary acting on explicit target qubits.
///
/// The matrix is row-major over the local basis `bit(targets[0]) + 2 * bit(targets[1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGate {
    name: String,
    targets: Vec<usize>,
    matrix: Vec<Complex64>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

impl DenseGate {
    /// Validates shape, distinct targets and unitarity (`U^dagger U = I` within 1e-10).
    pub fn new(name: impl Into<String>, targets: Vec<usize>, matrix: Vec<Complex64>) -> Result<Self> {
        let k = targets.len();
        if k == 0 || k > 2 {
            return Err(QntkError::Invalid(format!("gate must act on 1 or 2 qubits, got {k}")));
        }
        if k == 2 && targets[0] == targets[1] {
            return Err(QntkError::Invalid("gate targets must be distinct".into()));
        }
        let dim = 1 << k;
        if matrix.len() != dim * dim {
            return Err(QntkError::DimensionMismatch {
                expected: dim * dim,
                found: matrix.len(),
            });
        }
        let mut deviation: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = c(0.0, 0.0);
                for r in 0..dim {
                    acc += matrix[r * dim + i].conj() * matrix[r * dim + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((acc - target).norm());
            }
        }
        if !(deviation <= UNITARY_TOL) {
            return Err(QntkError::NonUnitary { deviation });
        }
        Ok(Self {
            name: name.into(),
            targets,
            matrix,
        })
    }

    pub fn hadamard(q: usize) -> Self {
        let h = FRAC_1_SQRT_2;
        Self::trusted("h", vec![q], vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])
    }

    /// `diag(1, e^{i angle})`.
    pub fn phase(q: usize, angle: f64) -> Self {
        Self::trusted(
            "p",
            vec![q],
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, angle)],
        )
    }

    pub fn cx(control: usize, target: usize) -> Result<Self> {
        // local index = bit(control) + 2 * bit(target)
        let o = c(0.0, 0.0);
        let l = c(1.0, 0.0);
        #[rustfmt::skip]
        let m = vec![
            l, o, o, o,
            o, o, o, l,
            o, o, l, o,
            o, l, o, o,
        ];
        Self::new("cx", vec![control, target], m)
    }

    pub fn cz(a: usize, b: usize) -> Result<Self> {
        let o = c(0.0, 0.0);
        let l = c(1.0, 0.0);
        #[rustfmt::skip]
        let m = vec![
            l, o, o, o,
            o, l, o, o,
            o, o, l, o,
            o, o, o, -l,
        ];
        Self::new("cz", vec![a, b], m)
    }

    fn trusted(name: &str, targets: Vec<usize>, matrix: Vec<Complex64>) -> Self {
        Self {
            name: name.into(),
            targets,
            matrix,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn dagger(&self) -> Self {
        let dim = 1 << self.targets.len();
        let mut m = vec![c(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                m[j * dim + i] = self.matrix[i * dim + j].conj();
            }
        }
        Self {
            name: format!("{}^dg", self.name),
            targets: self.targets.clone(),
            matrix: m,
        }
    }

    /// Applies the gate in place.
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        let n = state.n_qubits();
        if let Some(&bad) = self.targets.iter().find(|&&t| t >= n) {
            return Err(QntkError::OutOfRange { index: bad, limit: n });
        }
        let amps = state.amplitudes_mut();
        let m = &self.matrix;
        match *self.targets.as_slice() {
            [t] => {
                let bit = 1usize << t;
                for k in 0..amps.len() {
                    if k & bit != 0 {
                        continue;
                    }
                    let (a0, a1) = (amps[k], amps[k | bit]);
                    amps[k] = m[0] * a0 + m[1] * a1;
                    amps[k | bit] = m[2] * a0 + m[3] * a1;
                }
            }
            [t0, t1] => {
                let (b0, b1) = (1usize << t0, 1usize << t1);
                for k in 0..amps.len() {
                    if k & (b0 | b1) != 0 {
                        continue;
                    }
                    let idx = [k, k | b0, k | b1, k | b0 | b1];
                    let a = idx.map(|i| amps[i]);
                    for (r, &i) in idx.iter().enumerate() {
                        amps[i] = m[4 * r] * a[0] + m[4 * r + 1] * a[1] + m[4 * r + 2] * a[2] + m[4 * r + 3] * a[3];
                    }
                }
            }
            _ => unreachable!("validated at construction"),
        }
        Ok(())
    }
}

impl fmt::Display for DenseGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t: Vec<String> = self.targets.iter().map(|t| t.to_string()).collect();
        write!(f, "{}({})", self.name, t.join(","))
    }
}

/// Pure form of [`DenseGate::apply`].
pub fn apply_dense_gate(state: &StateVector, gate: &DenseGate) -> Result<StateVector> {
    let mut out = state.clone();
    gate.apply(&mut out)?;
    Ok(out)
}
