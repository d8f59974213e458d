use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ansatz::{LayeredAnsatz, ReferenceFrame};
use crate::error::{QntkError, Result};
use crate::kernels::{output_and_grad, CompoundIndex, KernelMatrix};
use crate::linalg::pairwise_dot;
use crate::quantum::{PauliObservable, StateVector};

/// Which way the residual points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `eps = z - target`, used when driving an expectation value to a target.
    OutputMinusTarget,
    /// `eps = y - z`, used for supervised learning.
    TargetMinusOutput,
}

impl Orientation {
    /// `d eps / d z`.
    pub fn sign(self) -> f64 {
        match self {
            Orientation::OutputMinusTarget => 1.0,
            Orientation::TargetMinusOutput => -1.0,
        }
    }
}

/// A circuit, inputs, observables and one target per compound index.
///
/// Trainable parameters are the angles themselves, or the reduced angles `phi`
/// when a reference frame is attached (`theta = theta* + delta phi`).
#[derive(Debug, Clone)]
pub struct Problem {
    pub ansatz: LayeredAnsatz,
    pub inputs: Vec<StateVector>,
    pub observables: Vec<PauliObservable>,
    pub targets: Vec<f64>,
    pub orientation: Orientation,
    pub frame: Option<ReferenceFrame>,
}

/// Outputs, residuals and residual Jacobian at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
    /// `jac[k][l] = d eps_k / d param_l`.
    pub jac: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn loss(&self) -> f64 {
        0.5 * pairwise_dot(&self.eps, &self.eps)
    }

    /// `dL/dparam = sum_k eps_k d eps_k / d param`.
    pub fn gradient(&self) -> Vec<f64> {
        let l = self.jac.first().map_or(0, Vec::len);
        (0..l)
            .map(|p| {
                let col: Vec<f64> = self.jac.iter().map(|row| row[p]).collect();
                pairwise_dot(&self.eps, &col)
            })
            .collect()
    }

    pub fn kernel(&self) -> DMatrix<f64> {
        let n = self.jac.len();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = pairwise_dot(&self.jac[a], &self.jac[b]);
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        k
    }
}

impl Problem {
    pub fn new(
        ansatz: LayeredAnsatz,
        inputs: Vec<StateVector>,
        observables: Vec<PauliObservable>,
        targets: Vec<f64>,
        orientation: Orientation,
    ) -> Result<Self> {
        if inputs.is_empty() || observables.is_empty() {
            return Err(QntkError::Invalid("problem needs at least one input and one observable".into()));
        }
        let n = inputs.len() * observables.len();
        if targets.len() != n {
            return Err(QntkError::DimensionMismatch {
                expected: n,
                found: targets.len(),
            });
        }
        for s in &inputs {
            if s.n_qubits() != ansatz.n_qubits() {
                return Err(QntkError::DimensionMismatch {
                    expected: ansatz.n_qubits(),
                    found: s.n_qubits(),
                });
            }
        }
        for o in &observables {
            if o.n_qubits() != ansatz.n_qubits() {
                return Err(QntkError::DimensionMismatch {
                    expected: ansatz.n_qubits(),
                    found: o.n_qubits(),
                });
            }
        }
        Ok(Self {
            ansatz,
            inputs,
            observables,
            targets,
            orientation,
            frame: None,
        })
    }

    /// Single-output optimization problem `eps = <O> - target`.
    pub fn optimization(ansatz: LayeredAnsatz, input: StateVector, obs: PauliObservable, target: f64) -> Result<Self> {
        Self::new(ansatz, vec![input], vec![obs], vec![target], Orientation::OutputMinusTarget)
    }

    /// Supervised problem `eps = y - z`; `labels` are indexed like [`CompoundIndex`].
    pub fn learning(
        ansatz: LayeredAnsatz,
        inputs: Vec<StateVector>,
        observables: Vec<PauliObservable>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        Self::new(ansatz, inputs, observables, labels, Orientation::TargetMinusOutput)
    }

    pub fn with_frame(mut self, frame: ReferenceFrame) -> Result<Self> {
        if frame.theta_star.len() != self.ansatz.n_params() {
            return Err(QntkError::DimensionMismatch {
                expected: self.ansatz.n_params(),
                found: frame.theta_star.len(),
            });
        }
        self.frame = Some(frame);
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.ansatz.n_params()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.len()
    }

    pub fn index(&self) -> Vec<CompoundIndex> {
        CompoundIndex::enumerate(self.inputs.len(), self.observables.len())
    }

    /// Circuit angles for a parameter vector.
    pub fn angles(&self, params: &[f64]) -> Vec<f64> {
        match &self.frame {
            Some(f) => f.theta(params),
            None => params.to_vec(),
        }
    }

    /// Parameter vector for given circuit angles.
    pub fn params_for(&self, theta: &[f64]) -> Vec<f64> {
        match &self.frame {
            Some(f) => f.phi(theta),
            None => theta.to_vec(),
        }
    }

    fn scale(&self) -> f64 {
        self.frame.as_ref().map_or(1.0, |f| f.delta)
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        if params.len() != self.n_params() {
            return Err(QntkError::DimensionMismatch {
                expected: self.n_params(),
                found: params.len(),
            });
        }
        let theta = self.angles(params);
        let sign = self.orientation.sign();
        let scale = self.scale();
        let per: Vec<(f64, Vec<f64>)> = self
            .index()
            .par_iter()
            .map(|ix| output_and_grad(&self.ansatz, &theta, &self.inputs[ix.sample], &self.observables[ix.observable]))
            .collect::<Result<_>>()?;
        let mut z = Vec::with_capacity(per.len());
        let mut eps = Vec::with_capacity(per.len());
        let mut jac = Vec::with_capacity(per.len());
        for ((zk, g), &target) in per.into_iter().zip(&self.targets) {
            z.push(zk);
            eps.push(sign * (zk - target));
            jac.push(g.into_iter().map(|v| sign * scale * v).collect());
        }
        Ok(Evaluation { z, eps, jac })
    }

    pub fn residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(params)?.eps)
    }

    /// Kernel `sum_l (d eps_a/d param_l)(d eps_b/d param_l)` in parameter units.
    pub fn kernel(&self, params: &[f64]) -> Result<KernelMatrix> {
        let e = self.evaluate(params)?;
        Ok(KernelMatrix::new(self.index(), e.kernel(), self.frame.as_ref().map_or(0.0, |f| f.delta)))
    }
}
