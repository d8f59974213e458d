//! Residuals, exact angle derivatives and the kernels built from them.
//!
//! All kernel quantities use real derivatives of `z = <psi|U^dag O U|psi>`:
//! `Theta_l = dz/dtheta_l` and `G_{l1 l2} = d^2 z / dtheta_l1 dtheta_l2`.
//! In the lazy frame `theta = theta* + delta * phi` the `phi`-derivatives are
//! `delta * Theta` and `delta^2 * G`, so frozen kernels carry `delta^2`, the
//! meta-kernel `delta^4` and the kernel shift `delta^3`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ansatz::{LayeredAnsatz, ReferenceFrame};
use crate::error::{QntkError, Result};
use crate::linalg::{max_asymmetry, pairwise_dot, pairwise_sum, SymEigen};
use crate::quantum::{PauliObservable, StateVector};

/// `dz/dtheta = DERIVATIVE_PHASE * <phi| [X, O~] |phi>`, the single place the
/// commutator sign convention lives.
const DERIVATIVE_PHASE: Complex64 = Complex64::new(0.0, -1.0);

/// A (sample, observable) pair flattening the kernel index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompoundIndex {
    pub sample: usize,
    pub observable: usize,
}

impl CompoundIndex {
    pub fn new(sample: usize, observable: usize) -> Self {
        Self { sample, observable }
    }

    pub fn flat(&self, n_observables: usize) -> usize {
        self.sample * n_observables + self.observable
    }

    pub fn from_flat(k: usize, n_observables: usize) -> Self {
        Self::new(k / n_observables, k % n_observables)
    }

    /// All indices for `n_samples x n_observables`, sample-major.
    pub fn enumerate(n_samples: usize, n_observables: usize) -> Vec<CompoundIndex> {
        (0..n_samples * n_observables)
            .map(|k| Self::from_flat(k, n_observables))
            .collect()
    }

    pub fn label(&self) -> String {
        format!("s{}:o{}", self.sample, self.observable)
    }
}

fn check_observable(ansatz: &LayeredAnsatz, obs: &PauliObservable) -> Result<()> {
    if obs.n_qubits() != ansatz.n_qubits() {
        return Err(QntkError::DimensionMismatch {
            expected: ansatz.n_qubits(),
            found: obs.n_qubits(),
        });
    }
    Ok(())
}

/// `z = <psi|U^dag O U|psi>`.
pub fn output(ansatz: &LayeredAnsatz, theta: &[f64], input: &StateVector, obs: &PauliObservable) -> Result<f64> {
    check_observable(ansatz, obs)?;
    obs.expectation(&ansatz.prepare(theta, input)?)
}

/// `z - target`. Learning residuals `y - z` are its negation with the label as target.
pub fn residual_error(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    input: &StateVector,
    obs: &PauliObservable,
    target: f64,
) -> Result<f64> {
    Ok(output(ansatz, theta, input, obs)? - target)
}

/// Per-layer data from a backward sweep: the state after each layer and
/// `O~_l` applied to it.
struct Sweep {
    kets: Vec<StateVector>,
    bras: Vec<StateVector>,
}

fn sweep(ansatz: &LayeredAnsatz, theta: &[f64], input: &StateVector, obs: &PauliObservable) -> Result<Sweep> {
    check_observable(ansatz, obs)?;
    let l = ansatz.n_params();
    let mut ket = ansatz.prepare(theta, input)?;
    let mut bra = obs.apply(&ket)?;
    let mut kets = Vec::with_capacity(l);
    let mut bras = Vec::with_capacity(l);
    for layer in (0..l).rev() {
        kets.push(ket.clone());
        bras.push(bra.clone());
        ansatz.undo_layer(layer, theta, &mut ket)?;
        ansatz.undo_layer(layer, theta, &mut bra)?;
    }
    kets.reverse();
    bras.reverse();
    Ok(Sweep { kets, bras })
}

/// `dz/dtheta_l` for every layer by a single backward sweep.
pub fn grad_z(ansatz: &LayeredAnsatz, theta: &[f64], input: &StateVector, obs: &PauliObservable) -> Result<Vec<f64>> {
    Ok(output_and_grad(ansatz, theta, input, obs)?.1)
}

/// `z` together with its gradient, sharing the forward pass.
pub fn output_and_grad(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    input: &StateVector,
    obs: &PauliObservable,
) -> Result<(f64, Vec<f64>)> {
    check_observable(ansatz, obs)?;
    let l = ansatz.n_params();
    let mut ket = ansatz.prepare(theta, input)?;
    let mut bra = obs.apply(&ket)?;
    let z = ket.inner(&bra)?.re;
    let mut grad = vec![0.0; l];
    for layer in (0..l).rev() {
        let layer_def = &ansatz.layers()[layer];
        // 2 Im <X phi | O~ phi>
        let x_ket = layer_def.generator.apply(&ket)?;
        grad[layer_def.angle_index] = 2.0 * x_ket.inner(&bra)?.im;
        if layer > 0 {
            ansatz.undo_layer(layer, theta, &mut ket)?;
            ansatz.undo_layer(layer, theta, &mut bra)?;
        }
    }
    Ok((z, grad))
}

/// Literal evaluation of `-i <phi_l| [X_l, O~_l] |phi_l>` with explicit partial products.
pub fn grad_z_literal(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    input: &StateVector,
    obs: &PauliObservable,
) -> Result<Vec<f64>> {
    check_observable(ansatz, obs)?;
    let mut grad = vec![0.0; ansatz.n_params()];
    for layer in 0..ansatz.n_params() {
        let (below, above) = ansatz.partial_products(theta, layer)?;
        let mut phi = input.clone();
        below.apply(&mut phi)?;
        ansatz.apply_layer(layer, theta, &mut phi)?;
        let conj_obs = |s: &StateVector| -> Result<StateVector> {
            let mut t = s.clone();
            above.apply(&mut t)?;
            let mut t = obs.apply(&t)?;
            above.apply_inverse(&mut t)?;
            Ok(t)
        };
        let x = &ansatz.layers()[layer].generator;
        let xo = x.apply(&conj_obs(&phi)?)?;
        let ox = conj_obs(&x.apply(&phi)?)?;
        let comm = phi.inner(&xo)? - phi.inner(&ox)?;
        grad[ansatz.layers()[layer].angle_index] = (DERIVATIVE_PHASE * comm).re;
    }
    Ok(grad)
}

/// Full Hessian `d^2 z / dtheta dtheta`, indexed by angle.
pub fn hessian_z(ansatz: &LayeredAnsatz, theta: &[f64], input: &StateVector, obs: &PauliObservable) -> Result<DMatrix<f64>> {
    let sw = sweep(ansatz, theta, input, obs)?;
    let l = ansatz.n_params();
    // C_b phi_b = X_b O~_b phi_b - O~_b X_b phi_b
    let mut comm = Vec::with_capacity(l);
    for b in 0..l {
        let x = &ansatz.layers()[b].generator;
        let mut t = x.apply(&sw.kets[b])?;
        for layer in b + 1..l {
            ansatz.apply_layer(layer, theta, &mut t)?;
        }
        let mut t = obs.apply(&t)?;
        for layer in (b + 1..l).rev() {
            ansatz.undo_layer(layer, theta, &mut t)?;
        }
        let mut c = x.apply(&sw.bras[b])?;
        c.axpy(Complex64::new(-1.0, 0.0), &t);
        comm.push(c);
    }
    let mut h = DMatrix::zeros(l, l);
    for a in 0..l {
        let ia = ansatz.layers()[a].angle_index;
        let mut chi = ansatz.layers()[a].generator.apply(&sw.kets[a])?;
        for b in a..l {
            if b > a {
                ansatz.apply_layer(b, theta, &mut chi)?;
            }
            let ib = ansatz.layers()[b].angle_index;
            let g = -2.0 * chi.inner(&comm[b])?.re;
            h[(ia, ib)] = g;
            h[(ib, ia)] = g;
        }
    }
    Ok(h)
}

/// One Hessian entry from the nested commutator
/// `-<phi_a| [X_a, U_ab^dag [X_b, O~_b] U_ab] |phi_a>`, where `a` is the earlier
/// of the two layers and `U_ab` carries layers `a+1..=b`.
pub fn second_derivative_literal(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    input: &StateVector,
    obs: &PauliObservable,
    l1: usize,
    l2: usize,
) -> Result<f64> {
    check_observable(ansatz, obs)?;
    let (a, b) = (l1.min(l2), l1.max(l2));
    let l = ansatz.n_params();
    if b >= l {
        return Err(QntkError::OutOfRange { index: b, limit: l });
    }
    let run = |s: &mut StateVector, from: usize, to: usize| -> Result<()> {
        (from..to).try_for_each(|k| ansatz.apply_layer(k, theta, s))
    };
    let unrun = |s: &mut StateVector, from: usize, to: usize| -> Result<()> {
        (from..to).rev().try_for_each(|k| ansatz.undo_layer(k, theta, s))
    };
    // O~_b v for a state living right after layer b
    let conj_obs = |v: &StateVector| -> Result<StateVector> {
        let mut t = v.clone();
        run(&mut t, b + 1, l)?;
        let mut t = obs.apply(&t)?;
        unrun(&mut t, b + 1, l)?;
        Ok(t)
    };
    let xb = &ansatz.layers()[b].generator;
    let inner_comm = |v: &StateVector| -> Result<StateVector> {
        let mut t = v.clone();
        run(&mut t, a + 1, b + 1)?;
        let mut out = xb.apply(&conj_obs(&t)?)?;
        out.axpy(Complex64::new(-1.0, 0.0), &conj_obs(&xb.apply(&t)?)?);
        unrun(&mut out, a + 1, b + 1)?;
        Ok(out)
    };
    let mut phi = input.clone();
    run(&mut phi, 0, a + 1)?;
    let xa = &ansatz.layers()[a].generator;
    let mut outer = xa.apply(&inner_comm(&phi)?)?;
    outer.axpy(Complex64::new(-1.0, 0.0), &inner_comm(&xa.apply(&phi)?)?);
    Ok(-phi.inner(&outer)?.re)
}

/// `K = sum_l (dz/dtheta_l)^2` at `theta`.
pub fn qntk_optimization(ansatz: &LayeredAnsatz, theta: &[f64], input: &StateVector, obs: &PauliObservable) -> Result<f64> {
    let g = grad_z(ansatz, theta, input, obs)?;
    Ok(pairwise_dot(&g, &g))
}

/// A frozen kernel value with a flag raised when `delta = 0` makes it vanish identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenKernel {
    pub value: f64,
    pub zero_scale: bool,
}

/// `delta^2 sum_l Theta_l^2` with `Theta` taken from the circuit with `theta*` absorbed.
pub fn frozen_qntk_optimization(
    ansatz: &LayeredAnsatz,
    frame: &ReferenceFrame,
    input: &StateVector,
    obs: &PauliObservable,
) -> Result<FrozenKernel> {
    let absorbed = ansatz.absorbed(&frame.theta_star)?;
    let zeros = vec![0.0; ansatz.n_params()];
    let theta = grad_z(&absorbed, &zeros, input, obs)?;
    Ok(FrozenKernel {
        value: frame.delta * frame.delta * pairwise_dot(&theta, &theta),
        zero_scale: frame.delta == 0.0,
    })
}

/// `2 eta delta^2 L |O|^2 max_l |X_l|^2`, with `|O|` the sum of absolute coefficients.
///
/// Each derivative is a commutator expectation, so `|dz/dtheta_l| <= 2 |X_l| |O|`
/// and the kernel obeys `K <= 4 delta^2 L |O|^2 max|X|^2`. The factor 2 used here
/// is attained at a single Y layer with `theta* = pi/8` and exceeded at other
/// angles (at `pi/4` the kernel is twice this value), so it holds for typical
/// circuits rather than for every circuit.
pub fn frozen_bound(ansatz: &LayeredAnsatz, obs: &PauliObservable, delta: f64, eta: f64) -> f64 {
    let o = obs.norm_bound();
    let x = ansatz
        .layers()
        .iter()
        .map(|l| l.generator.norm())
        .fold(0.0, f64::max);
    2.0 * eta * delta * delta * ansatz.n_params() as f64 * o * o * x * x
}

/// First and second angle derivatives of every output, evaluated at the reference angles.
#[derive(Debug, Clone)]
pub struct DerivativeTensors {
    pub index: Vec<CompoundIndex>,
    pub n_layers: usize,
    /// `theta[k][l] = dz_k / dtheta_l`.
    pub theta: Vec<Vec<f64>>,
    /// `g[k]` is the Hessian of `z_k`.
    pub g: Vec<DMatrix<f64>>,
    pub delta: f64,
}

impl DerivativeTensors {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Frozen kernel `delta^2 Theta Theta^T` over all indices.
    pub fn frozen_kernel(&self) -> KernelMatrix {
        let mut k = jacobian_gram(&self.theta);
        k *= self.delta * self.delta;
        KernelMatrix::new(self.index.clone(), k, self.delta)
    }
}

/// Derivative tensors of every (input, observable) pair at `theta*`.
pub fn derivative_tensors(
    ansatz: &LayeredAnsatz,
    frame: &ReferenceFrame,
    inputs: &[StateVector],
    observables: &[PauliObservable],
) -> Result<DerivativeTensors> {
    if observables.is_empty() {
        return Err(QntkError::Invalid("observable list is empty".into()));
    }
    let absorbed = ansatz.absorbed(&frame.theta_star)?;
    let zeros = vec![0.0; ansatz.n_params()];
    let index = CompoundIndex::enumerate(inputs.len(), observables.len());
    let per: Vec<(Vec<f64>, DMatrix<f64>)> = index
        .par_iter()
        .map(|ix| {
            let (input, obs) = (&inputs[ix.sample], &observables[ix.observable]);
            Ok((
                grad_z(&absorbed, &zeros, input, obs)?,
                hessian_z(&absorbed, &zeros, input, obs)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (theta, g) = per.into_iter().unzip();
    Ok(DerivativeTensors {
        index,
        n_layers: ansatz.n_params(),
        theta,
        g,
        delta: frame.delta,
    })
}

/// `mu = delta^4 sum Theta_l1 Theta_l2 G_l1l2` for one output.
pub fn meta_kernel_optimization(
    ansatz: &LayeredAnsatz,
    frame: &ReferenceFrame,
    input: &StateVector,
    obs: &PauliObservable,
) -> Result<f64> {
    let t = derivative_tensors(ansatz, frame, std::slice::from_ref(input), std::slice::from_ref(obs))?;
    Ok(meta_kernel_learning(&t).get(0, 0, 0))
}

/// Kernel shift `K^E(phi0) - K` to leading order, `2 delta^3 Theta . G phi0`.
pub fn k_delta_optimization(
    ansatz: &LayeredAnsatz,
    frame: &ReferenceFrame,
    input: &StateVector,
    obs: &PauliObservable,
    phi0: &[f64],
) -> Result<f64> {
    let t = derivative_tensors(ansatz, frame, std::slice::from_ref(input), std::slice::from_ref(obs))?;
    Ok(k_delta_learning(&t, phi0)?.matrix[(0, 0)])
}

/// Three-index meta-kernel `mu[a0][a1][a2]`, symmetric in the last two slots.
#[derive(Debug, Clone)]
pub struct MetaKernel {
    n: usize,
    entries: Vec<f64>,
}

impl MetaKernel {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, a0: usize, a1: usize, a2: usize) -> f64 {
        self.entries[(a0 * self.n + a1) * self.n + a2]
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n * n);
        for a0 in 0..n {
            for a1 in 0..n {
                for a2 in 0..n {
                    entries.push(f(a0, a1, a2));
                }
            }
        }
        Self { n, entries }
    }

    /// Largest `|mu[a0][a1][a2] - mu[a0][a2][a1]|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a0 in 0..n {
            for a1 in 0..n {
                for a2 in 0..n {
                    worst = worst.max((self.get(a0, a1, a2) - self.get(a0, a2, a1)).abs());
                }
            }
        }
        worst
    }

    /// Keeps the listed indices in the given order.
    pub fn restrict(&self, keep: &[usize]) -> MetaKernel {
        MetaKernel::from_fn(keep.len(), |a, b, c| self.get(keep[a], keep[b], keep[c]))
    }
}

/// `mu[a0][a1][a2] = delta^4 sum_{l1,l2} Theta^{a1}_l1 Theta^{a2}_l2 G^{a0}_{l1 l2}`.
pub fn meta_kernel_learning(t: &DerivativeTensors) -> MetaKernel {
    let n = t.len();
    let d4 = t.delta.powi(4);
    // w[a0][a2] = G^{a0} Theta^{a2}
    let w: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|a0| (0..n).map(|a2| mat_vec(&t.g[a0], &t.theta[a2])).collect())
        .collect();
    MetaKernel::from_fn(n, |a0, a1, a2| d4 * pairwise_dot(&t.theta[a1], &w[a0][a2]))
}

/// `K^Delta_ab = delta^3 (v^a . Theta^b + v^b . Theta^a)` with `v^a = G^a phi0`.
pub fn k_delta_learning(t: &DerivativeTensors, phi0: &[f64]) -> Result<KernelMatrix> {
    if phi0.len() != t.n_layers {
        return Err(QntkError::DimensionMismatch {
            expected: t.n_layers,
            found: phi0.len(),
        });
    }
    let n = t.len();
    let d3 = t.delta.powi(3);
    let v: Vec<Vec<f64>> = t.g.iter().map(|g| mat_vec(g, phi0)).collect();
    let m = DMatrix::from_fn(n, n, |a, b| {
        d3 * (pairwise_dot(&v[a], &t.theta[b]) + pairwise_dot(&v[b], &t.theta[a]))
    });
    Ok(KernelMatrix::new(t.index.clone(), m, t.delta))
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| {
            let row: Vec<f64> = (0..m.ncols()).map(|c| m[(r, c)] * v[c]).collect();
            pairwise_sum(&row)
        })
        .collect()
}

fn jacobian_gram(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = pairwise_dot(&rows[a], &rows[b]);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Derivative rows `dz_k/dtheta` for every compound index.
pub fn jacobian(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    inputs: &[StateVector],
    observables: &[PauliObservable],
) -> Result<Vec<Vec<f64>>> {
    if observables.is_empty() {
        return Err(QntkError::Invalid("observable list is empty".into()));
    }
    CompoundIndex::enumerate(inputs.len(), observables.len())
        .par_iter()
        .map(|ix| grad_z(ansatz, theta, &inputs[ix.sample], &observables[ix.observable]))
        .collect()
}

/// Outputs `z_k` for every compound index.
pub fn outputs(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    inputs: &[StateVector],
    observables: &[PauliObservable],
) -> Result<Vec<f64>> {
    let states: Vec<StateVector> = inputs
        .par_iter()
        .map(|s| ansatz.prepare(theta, s))
        .collect::<Result<_>>()?;
    CompoundIndex::enumerate(inputs.len(), observables.len())
        .iter()
        .map(|ix| {
            let obs = &observables[ix.observable];
            check_observable(ansatz, obs)?;
            obs.expectation(&states[ix.sample])
        })
        .collect()
}

/// Learning kernel `K_ab = sum_l dz_a/dtheta_l dz_b/dtheta_l` at `theta`.
pub fn qntk_learning(
    ansatz: &LayeredAnsatz,
    theta: &[f64],
    inputs: &[StateVector],
    observables: &[PauliObservable],
) -> Result<KernelMatrix> {
    let j = jacobian(ansatz, theta, inputs, observables)?;
    Ok(KernelMatrix::new(
        CompoundIndex::enumerate(inputs.len(), observables.len()),
        jacobian_gram(&j),
        0.0,
    ))
}

/// `delta^2` times the learning kernel of the circuit with `theta*` absorbed, at `phi = 0`.
pub fn frozen_qntk_learning(
    ansatz: &LayeredAnsatz,
    frame: &ReferenceFrame,
    inputs: &[StateVector],
    observables: &[PauliObservable],
) -> Result<KernelMatrix> {
    let absorbed = ansatz.absorbed(&frame.theta_star)?;
    let zeros = vec![0.0; ansatz.n_params()];
    let mut k = qntk_learning(&absorbed, &zeros, inputs, observables)?;
    k.matrix *= frame.delta * frame.delta;
    k.delta_scale = frame.delta;
    Ok(k)
}

/// Real symmetric kernel over compound indices.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub index: Vec<CompoundIndex>,
    pub matrix: DMatrix<f64>,
    /// `delta` used for the frozen scaling; 0 marks raw-angle derivatives.
    pub delta_scale: f64,
}

impl KernelMatrix {
    pub fn new(index: Vec<CompoundIndex>, matrix: DMatrix<f64>, delta_scale: f64) -> Self {
        Self {
            index,
            matrix,
            delta_scale,
        }
    }

    pub fn size(&self) -> usize {
        self.index.len()
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.matrix)
    }

    pub fn eigen(&self) -> SymEigen {
        SymEigen::new(&self.matrix)
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().values
    }

    /// Number of eigenvalues above `1e-9 * lambda_max`.
    pub fn rank(&self) -> usize {
        self.eigen().rank()
    }

    /// Symmetric within 1e-10 and `lambda_min >= -1e-9 lambda_max`.
    pub fn is_symmetric_psd(&self) -> bool {
        let e = self.eigen();
        let min = e.values.last().copied().unwrap_or(0.0);
        self.max_asymmetry() < 1e-10 && min >= -1e-9 * e.lambda_max()
    }

    /// Sub-kernel on the listed positions, in that order.
    pub fn restrict(&self, keep: &[usize]) -> KernelMatrix {
        KernelMatrix {
            index: keep.iter().map(|&k| self.index[k]).collect(),
            matrix: DMatrix::from_fn(keep.len(), keep.len(), |a, b| self.matrix[(keep[a], keep[b])]),
            delta_scale: self.delta_scale,
        }
    }

    /// CSV with a header row and a leading label column, both `s<k>:o<j>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index");
        for ix in &self.index {
            let _ = write!(out, ",{}", ix.label());
        }
        out.push('\n');
        for (r, ix) in self.index.iter().enumerate() {
            out.push_str(&ix.label());
            for c in 0..self.size() {
                let _ = write!(out, ",{:e}", self.matrix[(r, c)]);
            }
            out.push('\n');
        }
        out
    }

    /// CSV `index,eigenvalue`, descending.
    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue\n");
        for (k, v) in self.eigenvalues().iter().enumerate() {
            let _ = writeln!(out, "{k},{v:e}");
        }
        out
    }
}
