use nalgebra::{DMatrix, DVector};

use super::problem::Orientation;
use crate::error::{check_dim, QntkError, Result};
use crate::kernels::MetaKernel;
use crate::linalg::SymEigen;

/// Dense four-index tensor over training positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n.pow(4)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn at(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.n + b) * self.n + c) * self.n + d
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[self.at(a, b, c, d)]
    }

    fn set(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let k = self.at(a, b, c, d);
        self.data[k] = v;
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// `sum_{c,d} T[a][b][c][d] e_c e_d` as an `n x n` matrix.
    pub fn contract_last_two(&self, e: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| {
            let mut acc = 0.0;
            for c in 0..n {
                for d in 0..n {
                    acc += self.get(a, b, c, d) * e[c] * e[d];
                }
            }
            acc
        })
    }
}

/// Frozen-limit output after infinitely many steps.
#[derive(Debug, Clone)]
pub struct AsymptoticOutput {
    pub z_inf: Vec<f64>,
    /// Training positions whose initial residual has a component outside the kernel's range.
    pub non_convergent: Vec<usize>,
    /// Norm of the part of `eps(0)` the kernel cannot remove.
    pub unreachable_norm: f64,
}

fn frozen_part(
    k_full: &DMatrix<f64>,
    train: &[usize],
    eps0: &[f64],
    z0: &[f64],
    orientation: Orientation,
) -> Result<(AsymptoticOutput, DMatrix<f64>, SymEigen)> {
    check_dim(k_full.nrows(), z0.len())?;
    check_dim(train.len(), eps0.len())?;
    if let Some(&bad) = train.iter().find(|&&i| i >= z0.len()) {
        return Err(QntkError::OutOfRange {
            index: bad,
            limit: z0.len(),
        });
    }
    let n = train.len();
    let kt = DMatrix::from_fn(n, n, |a, b| k_full[(train[a], train[b])]);
    let eig = SymEigen::new(&kt);
    let kinv = eig.pseudo_inverse();
    let e = DVector::from_column_slice(eps0);
    let coef = &kinv * &e;
    let s = orientation.sign();
    let z_inf = (0..z0.len())
        .map(|a| {
            let row: f64 = (0..n).map(|b| k_full[(a, train[b])] * coef[b]).sum();
            z0[a] - s * row
        })
        .collect();
    let outside = &e - eig.range_projector() * &e;
    let tol = 1e-9 * e.amax().max(1e-300);
    let non_convergent = (0..n).filter(|&i| outside[i].abs() > tol).collect();
    Ok((
        AsymptoticOutput {
            z_inf,
            non_convergent,
            unreachable_norm: outside.norm(),
        },
        kinv,
        eig,
    ))
}

/// `z(inf) = z(0) -+ K[:, A] K~^+ eps(0)` for the frozen kernel.
///
/// `train` lists the positions of the training indices inside `k_full`; `eps0`
/// is given on those positions. The sign follows the residual orientation: with
/// `eps = y - z` the output moves by `+K K~^+ eps(0)`.
pub fn asymptotic_output(
    k_full: &DMatrix<f64>,
    train: &[usize],
    eps0: &[f64],
    z0: &[f64],
    orientation: Orientation,
) -> Result<AsymptoticOutput> {
    Ok(frozen_part(k_full, train, eps0, z0, orientation)?.0)
}

/// Second-order projector tensors of a training kernel.
#[derive(Debug, Clone)]
pub struct Projectors {
    pub x_par: Tensor4,
    pub z_a: Tensor4,
    pub z_b: Tensor4,
    /// Pseudo-inverse of the training kernel.
    pub k_inv: DMatrix<f64>,
    /// Max-entry residual of `sum X (K d + d K - eta K K) = P P`, with `P` the range projector.
    pub relation_residual: f64,
    /// Max-entry difference between `Z_A` assembled by index sums and its eigenbasis form.
    pub z_residual: f64,
    pub spectral_radius: f64,
}

/// `X_par`, `Z_A`, `Z_B` for the training kernel `k` and rate `eta`.
///
/// In the eigenbasis `X_par` has entries `1 / (lambda_i + lambda_j - eta lambda_i lambda_j)`,
/// which is `eta` times the summed geometric series of `(1 - eta K)`; this
/// normalization is the one for which `X_par` satisfies the defining relation
/// and for which the second-order output formula is accurate.
pub fn algorithm_projectors(k: &DMatrix<f64>, eta: f64) -> Result<Projectors> {
    let n = k.nrows();
    let eig = SymEigen::new(k);
    let nz = eig.nonzero();
    let spectral_radius = nz.iter().map(|&i| (1.0 - eta * eig.values[i]).abs()).fold(0.0, f64::max);
    if spectral_radius >= 1.0 {
        return Err(QntkError::Unstable { radius: spectral_radius });
    }
    let proj: Vec<DMatrix<f64>> = nz
        .iter()
        .map(|&i| {
            let v = eig.vectors.column(i);
            v * v.transpose()
        })
        .collect();
    let lam: Vec<f64> = nz.iter().map(|&i| eig.values[i]).collect();
    let r = nz.len();
    let x_coef = |i: usize, j: usize| 1.0 / (lam[i] + lam[j] - eta * lam[i] * lam[j]);

    // X[a][b][c][d] = sum_ij x_ij P_i[a][c] P_j[b][d]
    let build = |coef: &dyn Fn(usize, usize) -> f64| {
        let q: Vec<DMatrix<f64>> = (0..r)
            .map(|i| {
                let mut m = DMatrix::zeros(n, n);
                for j in 0..r {
                    m += &proj[j] * coef(i, j);
                }
                m
            })
            .collect();
        let mut t = Tensor4::zeros(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v: f64 = (0..r).map(|i| proj[i][(a, c)] * q[i][(b, d)]).sum();
                        t.set(a, b, c, d, v);
                    }
                }
            }
        }
        t
    };
    let x_par = build(&x_coef);
    let k_inv = eig.pseudo_inverse();

    let mut z_a = Tensor4::zeros(n);
    let mut z_b = Tensor4::zeros(n);
    for a1 in 0..n {
        for a2 in 0..n {
            for a3 in 0..n {
                for a4 in 0..n {
                    let mut v = k_inv[(a1, a3)] * k_inv[(a2, a4)];
                    for a5 in 0..n {
                        v -= k_inv[(a2, a5)] * x_par.get(a1, a5, a3, a4);
                    }
                    z_a.set(a1, a2, a3, a4, v);
                    z_b.set(a1, a2, a3, a4, v + 0.5 * eta * x_par.get(a1, a2, a3, a4));
                }
            }
        }
    }
    let z_a_eigen = build(&|i, j| 1.0 / (lam[i] * lam[j]) - x_coef(i, j) / lam[j]);
    let z_residual = z_a.max_abs_diff(&z_a_eigen);

    // sum_{a3,a4} X[a1][a2][a3][a4] (K[a3][a5] d[a4][a6] + d[a3][a5] K[a4][a6] - eta K[a3][a5] K[a4][a6])
    let p = eig.range_projector();
    let mut y = Tensor4::zeros(n); // y[a1][a2][a5][a4] = sum_a3 X[a1][a2][a3][a4] K[a3][a5]
    for a1 in 0..n {
        for a2 in 0..n {
            for a5 in 0..n {
                for a4 in 0..n {
                    let v: f64 = (0..n).map(|a3| x_par.get(a1, a2, a3, a4) * k[(a3, a5)]).sum();
                    y.set(a1, a2, a5, a4, v);
                }
            }
        }
    }
    let mut relation_residual: f64 = 0.0;
    for a1 in 0..n {
        for a2 in 0..n {
            for a5 in 0..n {
                for a6 in 0..n {
                    let t1 = y.get(a1, a2, a5, a6);
                    let t2: f64 = (0..n).map(|a4| x_par.get(a1, a2, a5, a4) * k[(a4, a6)]).sum();
                    let t3: f64 = (0..n).map(|a4| y.get(a1, a2, a5, a4) * k[(a4, a6)]).sum();
                    let lhs = t1 + t2 - eta * t3;
                    relation_residual = relation_residual.max((lhs - p[(a1, a5)] * p[(a2, a6)]).abs());
                }
            }
        }
    }
    Ok(Projectors {
        x_par,
        z_a,
        z_b,
        k_inv,
        relation_residual,
        z_residual,
        spectral_radius,
    })
}

/// Frozen asymptotic output plus the two meta-kernel corrections contracted with
/// `Z_A` and `Z_B`. `mu` is indexed like `k_full`; all inner sums run over `train`.
pub fn dqntk_asymptotic_output(
    k_full: &DMatrix<f64>,
    train: &[usize],
    mu: &MetaKernel,
    projectors: &Projectors,
    eps0: &[f64],
    z0: &[f64],
    orientation: Orientation,
) -> Result<AsymptoticOutput> {
    check_dim(k_full.nrows(), mu.size())?;
    check_dim(train.len(), projectors.z_a.size())?;
    let (mut out, _, _) = frozen_part(k_full, train, eps0, z0, orientation)?;
    let n = train.len();
    let kinv = &projectors.k_inv;
    let wa = projectors.z_a.contract_last_two(eps0);
    let wb = projectors.z_b.contract_last_two(eps0);
    for (abar, z) in out.z_inf.iter_mut().enumerate() {
        // r[f] = sum_e K[abar][e] K~^+[e][f]
        let r: Vec<f64> = (0..n)
            .map(|f| (0..n).map(|e| k_full[(abar, train[e])] * kinv[(e, f)]).sum())
            .collect();
        let mut corr = 0.0;
        for b in 0..n {
            for c in 0..n {
                let (tb, tc) = (train[b], train[c]);
                let proj_a: f64 = (0..n).map(|f| r[f] * mu.get(tb, train[f], tc)).sum();
                let proj_b: f64 = (0..n).map(|f| r[f] * mu.get(train[f], tb, tc)).sum();
                let t1 = mu.get(tb, abar, tc) - proj_a;
                let t2 = mu.get(abar, tb, tc) - proj_b;
                corr += t1 * wa[(b, c)] + t2 * wb[(b, c)];
            }
        }
        *z += corr;
    }
    Ok(out)
}
