//! Pauli strings and real-weighted sums of them.
//!
//! Letters are written qubit 0 first: `"ZXI"` is Z on qubit 0, X on qubit 1.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::state::StateVector;
use crate::error::{check_dim, QntkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// A tensor product of single-qubit Paulis times a real coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    letters: Vec<Pauli>,
    coeff: f64,
    // bits flipped by X/Y, bits phased by Z/Y
    x_mask: usize,
    z_mask: usize,
    n_y: u32,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>, coeff: f64) -> Result<Self> {
        super::state::check_qubits(letters.len())?;
        if !coeff.is_finite() {
            return Err(QntkError::Invalid("non-finite Pauli coefficient".into()));
        }
        let mut x_mask = 0;
        let mut z_mask = 0;
        let mut n_y = 0;
        for (q, p) in letters.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x_mask |= 1 << q,
                Pauli::Z => z_mask |= 1 << q,
                Pauli::Y => {
                    x_mask |= 1 << q;
                    z_mask |= 1 << q;
                    n_y += 1;
                }
            }
        }
        Ok(Self {
            letters,
            coeff,
            x_mask,
            z_mask,
            n_y,
        })
    }

    /// Parses letters such as `"ZZI"` with unit coefficient.
    pub fn from_letters(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| QntkError::Invalid(format!("bad Pauli letter {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters, 1.0)
    }

    /// Single non-identity letter on `qubit` of an `n_qubits` register.
    pub fn single(n_qubits: usize, qubit: usize, p: Pauli) -> Result<Self> {
        if qubit >= n_qubits {
            return Err(QntkError::OutOfRange {
                index: qubit,
                limit: n_qubits,
            });
        }
        let mut letters = vec![Pauli::I; n_qubits];
        letters[qubit] = p;
        Self::new(letters, 1.0)
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        Self::new(vec![Pauli::I; n_qubits], 1.0)
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn with_coeff(&self, coeff: f64) -> Self {
        let mut out = self.clone();
        out.coeff = coeff;
        out
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    /// Operator norm, which for a Pauli string is `|coeff|`.
    pub fn norm(&self) -> f64 {
        self.coeff.abs()
    }

    pub fn letter_string(&self) -> String {
        self.letters.iter().map(|p| p.as_char()).collect()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let anti = (self.x_mask & other.z_mask).count_ones() + (self.z_mask & other.x_mask).count_ones();
        anti.is_multiple_of(2)
    }

    /// Phase picked up by basis state `k` (times the coefficient), and the index it maps to.
    #[inline]
    fn action(&self, k: usize) -> (usize, Complex64) {
        let sign = if (k & self.z_mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        (k ^ self.x_mask, self.global_phase() * sign)
    }

    #[inline]
    fn global_phase(&self) -> Complex64 {
        let c = self.coeff;
        match self.n_y % 4 {
            0 => Complex64::new(c, 0.0),
            1 => Complex64::new(0.0, c),
            2 => Complex64::new(-c, 0.0),
            _ => Complex64::new(0.0, -c),
        }
    }

    /// `P|state>`.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        check_dim(self.n_qubits(), state.n_qubits())?;
        let mut out = state.zeroed_like();
        self.accumulate(state, Complex64::new(1.0, 0.0), &mut out);
        Ok(out)
    }

    /// `out += scale * P|state>`.
    pub(crate) fn accumulate(&self, state: &StateVector, scale: Complex64, out: &mut StateVector) {
        let src = state.amplitudes();
        let dst = out.amplitudes_mut();
        for (k, a) in src.iter().enumerate() {
            let (j, phase) = self.action(k);
            dst[j] += scale * phase * a;
        }
    }

    /// `<state|P|state>` without materializing `P|state>`.
    pub(crate) fn expectation_raw(&self, state: &StateVector) -> Complex64 {
        let amps = state.amplitudes();
        amps.iter()
            .enumerate()
            .map(|(k, a)| {
                let (j, phase) = self.action(k);
                amps[j].conj() * phase * a
            })
            .sum()
    }

    /// `exp(i * angle * P)` applied in place; requires `coeff = +-1` so that `P^2 = I`.
    pub fn rotate(&self, state: &mut StateVector, angle: f64) -> Result<()> {
        check_dim(self.n_qubits(), state.n_qubits())?;
        if (self.coeff.abs() - 1.0).abs() > 1e-12 {
            return Err(QntkError::Invalid(format!(
                "rotation generator must have coefficient +-1, got {}",
                self.coeff
            )));
        }
        let (c, s) = (angle.cos(), angle.sin());
        let i_sin = Complex64::new(0.0, s);
        let amps = state.amplitudes_mut();
        if self.x_mask == 0 {
            for (k, a) in amps.iter_mut().enumerate() {
                let (_, phase) = self.action(k);
                *a *= c + i_sin * phase;
            }
            return Ok(());
        }
        // P pairs k with k ^ x_mask; update each pair once from its lower index
        let top = 1usize << (usize::BITS - 1 - self.x_mask.leading_zeros());
        for k in 0..amps.len() {
            if k & top != 0 {
                continue;
            }
            let j = k ^ self.x_mask;
            let (_, phase_kj) = self.action(k);
            let (_, phase_jk) = self.action(j);
            let (ak, aj) = (amps[k], amps[j]);
            amps[j] = c * aj + i_sin * phase_kj * ak;
            amps[k] = c * ak + i_sin * phase_jk * aj;
        }
        Ok(())
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeff == 1.0 {
            write!(f, "{}", self.letter_string())
        } else {
            write!(f, "{}*{}", self.coeff, self.letter_string())
        }
    }
}

/// `exp(i * angle * g) |state>` computed as `cos(angle) state + i sin(angle) g|state>`.
pub fn apply_pauli_rotation(state: &StateVector, g: &PauliString, angle: f64) -> Result<StateVector> {
    let mut out = state.clone();
    g.rotate(&mut out, angle)?;
    Ok(out)
}

/// Real-weighted sum of Pauli strings on a common register.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliObservable {
    terms: Vec<PauliString>,
}

impl PauliObservable {
    pub fn new(terms: Vec<PauliString>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| QntkError::Invalid("observable needs at least one term".into()))?;
        let n = first.n_qubits();
        for t in &terms {
            check_dim(n, t.n_qubits())?;
        }
        Ok(Self { terms })
    }

    pub fn single(p: PauliString) -> Self {
        Self { terms: vec![p] }
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        Ok(Self::single(PauliString::identity(n_qubits)?))
    }

    /// `Z` on every qubit.
    pub fn parity(n_qubits: usize) -> Result<Self> {
        Ok(Self::single(PauliString::new(vec![Pauli::Z; n_qubits], 1.0)?))
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    pub fn n_qubits(&self) -> usize {
        self.terms[0].n_qubits()
    }

    /// Sum of `|coeff|`, an upper bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(PauliString::norm).sum()
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        check_dim(self.n_qubits(), state.n_qubits())?;
        let mut out = state.zeroed_like();
        for t in &self.terms {
            t.accumulate(state, Complex64::new(1.0, 0.0), &mut out);
        }
        Ok(out)
    }

    /// Raw `<state|O|state>` including the (numerically zero) imaginary part.
    pub fn expectation_complex(&self, state: &StateVector) -> Result<Complex64> {
        check_dim(self.n_qubits(), state.n_qubits())?;
        Ok(self.terms.iter().map(|t| t.expectation_raw(state)).sum())
    }

    /// `<state|O|state>`; the imaginary part is dropped.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        Ok(self.expectation_complex(state)?.re)
    }
}

pub fn expectation(state: &StateVector, obs: &PauliObservable) -> Result<f64> {
    obs.expectation(state)
}

impl fmt::Display for PauliObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for PauliObservable {
    type Err = QntkError;

    /// Accepts forms like `Z`, `ZZI`, `0.5*ZI - 2*IZ`, `-XX + 1e-3*ZZ`.
    fn from_str(s: &str) -> Result<Self> {
        let mut chunks: Vec<String> = Vec::new();
        let mut cur = String::new();
        for c in s.chars() {
            if c.is_whitespace() {
                continue;
            }
            let boundary = (c == '+' || c == '-')
                && !cur.is_empty()
                && !matches!(cur.chars().last(), Some('e' | 'E' | '*' | '+' | '-'));
            if boundary {
                chunks.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        if !cur.is_empty() {
            chunks.push(cur);
        }
        if chunks.is_empty() {
            return Err(QntkError::Invalid("empty observable".into()));
        }
        let terms = chunks
            .iter()
            .map(|chunk| parse_term(chunk))
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }
}

fn parse_term(chunk: &str) -> Result<PauliString> {
    let chunk = chunk.strip_prefix('+').unwrap_or(chunk);
    let (coeff, letters) = match chunk.split_once('*') {
        Some((c, l)) => (
            c.parse::<f64>()
                .map_err(|_| QntkError::Invalid(format!("bad coefficient {c:?}")))?,
            l,
        ),
        None => match chunk.strip_prefix('-') {
            Some(l) => (-1.0, l),
            None => (1.0, chunk),
        },
    };
    Ok(PauliString::from_letters(letters)?.with_coeff(coeff))
}
