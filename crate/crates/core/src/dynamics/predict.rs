use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::linalg::SymEigen;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionKind {
    Frozen,
    Dqntk,
    Asymptotic,
}

/// Diagnostics describing how far a prediction can be trusted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    /// `eta * lambda_max(K)`.
    pub eta_k_norm: f64,
    /// Largest `|1 - eta lambda|` over the nonzero spectrum.
    pub spectral_radius: f64,
    pub delta: f64,
}

/// Predicted residual trajectory; `values[t]` is the vector at step `t`.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub kind: PredictionKind,
    pub values: Vec<Vec<f64>>,
    /// Interacting part alone, when the prediction has one.
    pub interacting: Option<Vec<Vec<f64>>>,
    pub validity: Validity,
}

/// Scalar frozen-kernel decay `eps(t) = (1 - eta K)^t eps(0)`.
#[derive(Debug, Clone)]
pub struct FrozenScalarPrediction {
    pub values: Vec<f64>,
    /// Convergence rate `-ln(1 - eta K)`; not finite when `eta K >= 1`.
    pub tau_c: f64,
    /// Raised when `eta K >= 1` (oscillating or overshooting steps).
    pub oscillatory: bool,
}

pub fn predict_frozen_optimization(k: f64, eps0: f64, eta: f64, steps: usize) -> FrozenScalarPrediction {
    let a = 1.0 - eta * k;
    let values = (0..=steps).map(|t| eps0 * a.powi(t as i32)).collect();
    FrozenScalarPrediction {
        values,
        tau_c: -a.ln(),
        oscillatory: eta * k >= 1.0,
    }
}

/// `eps^F(t) + eps^I(t)` with `eps^I(t) = -eta t (1 - eta K)^(t-1) K^Delta eps(0)`.
pub fn predict_dqntk_optimization(k: f64, k_delta: f64, eps0: f64, eta: f64, steps: usize) -> Vec<f64> {
    let a = 1.0 - eta * k;
    (0..=steps)
        .map(|t| {
            let free = eps0 * a.powi(t as i32);
            let inter = if t == 0 {
                0.0
            } else {
                -eta * t as f64 * a.powi(t as i32 - 1) * k_delta * eps0
            };
            free + inter
        })
        .collect()
}

struct Modes {
    eig: SymEigen,
    /// `1 - eta lambda`, with numerically-null eigenvalues treated as exactly 0.
    factors: Vec<f64>,
    validity: Validity,
}

fn modes(k: &DMatrix<f64>, eta: f64, delta: f64) -> Modes {
    let eig = SymEigen::new(k);
    let nonzero = eig.nonzero();
    let factors: Vec<f64> = (0..eig.values.len())
        .map(|i| if nonzero.contains(&i) { 1.0 - eta * eig.values[i] } else { 1.0 })
        .collect();
    let spectral_radius = nonzero.iter().map(|&i| factors[i].abs()).fold(0.0, f64::max);
    let validity = Validity {
        eta_k_norm: eta * eig.lambda_max(),
        spectral_radius,
        delta,
    };
    Modes {
        eig,
        factors,
        validity,
    }
}

/// `eps(t) = (1 - eta K)^t eps(0)` in the eigenbasis; nullspace components stay fixed.
pub fn predict_frozen_learning(k: &DMatrix<f64>, eps0: &[f64], eta: f64, steps: usize) -> Result<Prediction> {
    check_dim(k.nrows(), eps0.len())?;
    let m = modes(k, eta, 0.0);
    let c0 = m.eig.to_eigenbasis(&DVector::from_column_slice(eps0));
    let mut c = c0.clone();
    let mut values = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        if t > 0 {
            for (ci, f) in c.iter_mut().zip(&m.factors) {
                *ci *= f;
            }
        }
        values.push((&m.eig.vectors * &c).iter().copied().collect());
    }
    Ok(Prediction {
        kind: PredictionKind::Frozen,
        values,
        interacting: None,
        validity: m.validity,
    })
}

/// Free part plus `eps^I(t) = -eta sum_s (1-eta K)^(t-1-s) K^Delta (1-eta K)^s eps(0)`,
/// evaluated mode by mode with `S_ij(t+1) = a_i S_ij(t) + a_j^t`.
pub fn predict_dqntk_learning(
    k: &DMatrix<f64>,
    k_delta: &DMatrix<f64>,
    eps0: &[f64],
    eta: f64,
    steps: usize,
) -> Result<Prediction> {
    check_dim(k.nrows(), eps0.len())?;
    check_dim(k.nrows(), k_delta.nrows())?;
    let m = modes(k, eta, 0.0);
    let n = eps0.len();
    let v = &m.eig.vectors;
    let c0 = m.eig.to_eigenbasis(&DVector::from_column_slice(eps0));
    let kd = v.transpose() * k_delta * v;
    // coupling[i][j] = kd_ij c0_j
    let coupling = DMatrix::from_fn(n, n, |i, j| kd[(i, j)] * c0[j]);
    let a = &m.factors;
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut a_pow = vec![1.0; n];
    let mut free_c = c0.clone();
    let mut values = Vec::with_capacity(steps + 1);
    let mut interacting = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        if t > 0 {
            for i in 0..n {
                for j in 0..n {
                    s[(i, j)] = a[i] * s[(i, j)] + a_pow[j];
                }
            }
            for j in 0..n {
                a_pow[j] *= a[j];
                free_c[j] *= a[j];
            }
        }
        let inter_c = DVector::from_fn(n, |i, _| {
            -eta * (0..n).map(|j| coupling[(i, j)] * s[(i, j)]).sum::<f64>()
        });
        let inter = v * &inter_c;
        let free = v * &free_c;
        values.push((&free + &inter).iter().copied().collect());
        interacting.push(inter.iter().copied().collect());
    }
    Ok(Prediction {
        kind: PredictionKind::Dqntk,
        values,
        interacting: Some(interacting),
        validity: m.validity,
    })
}

/// `eta t |1 - eta K|^(t-1) |K^Delta| |eps(0)|` with spectral norms.
pub fn interaction_bound(k: &DMatrix<f64>, k_delta: &DMatrix<f64>, eps0: &[f64], eta: f64, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let n = k.nrows();
    let a = DMatrix::<f64>::identity(n, n) - k * eta;
    let norm_a = spectral_norm(&a);
    let norm_kd = spectral_norm(k_delta);
    let e = eps0.iter().map(|x| x * x).sum::<f64>().sqrt();
    eta * t as f64 * norm_a.powi(t as i32 - 1) * norm_kd * e
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymEigen::new(m).values.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Columns `t,pred_loss,pred_eps_<k>...`.
pub fn prediction_csv(values: &[Vec<f64>]) -> String {
    let n = values.first().map_or(0, Vec::len);
    let mut out = String::from("t,pred_loss");
    for k in 0..n {
        let _ = write!(out, ",pred_eps_{k}");
    }
    out.push('\n');
    for (t, v) in values.iter().enumerate() {
        let loss = 0.5 * v.iter().map(|x| x * x).sum::<f64>();
        let _ = write!(out, "{t},{loss:e}");
        for x in v {
            let _ = write!(out, ",{x:e}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_scalar_examples() {
        let p = predict_frozen_optimization(0.0, 1.5, 0.1, 5);
        assert!(p.values.iter().all(|&v| v == 1.5));
        let p = predict_frozen_optimization(10.0, 1.0, 0.1, 3);
        assert!(p.oscillatory);
        assert_eq!(&p.values[1..], &[0.0, 0.0, 0.0]);
        let p = predict_frozen_optimization(1.0, 2.0, 0.1, 10);
        assert!((p.values[10] - 0.697_356_880_2).abs() < 1e-9);
        assert!((p.tau_c + 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dqntk_scalar_reduces_and_starts_free() {
        let a = predict_dqntk_optimization(0.5, 0.0, 1.0, 0.1, 20);
        let b = predict_frozen_optimization(0.5, 1.0, 0.1, 20).values;
        assert_eq!(a, b);
        let c = predict_dqntk_optimization(0.5, 0.3, 1.0, 0.1, 20);
        assert_eq!(c[0], 1.0);
    }

    #[test]
    fn learning_nullspace_is_frozen() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = predict_frozen_learning(&k, &[0.0, 0.7], 0.5, 10).unwrap();
        assert!(p.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.7));
        let p = predict_frozen_learning(&k, &[1.0, 0.0], 0.5, 3).unwrap();
        assert!((p.values[3][0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
        let kd = DMatrix::from_row_slice(3, 3, &[0.05, -0.02, 0.01, -0.02, 0.03, 0.0, 0.01, 0.0, -0.04]);
        let eps0 = [0.3, -0.5, 0.8];
        let eta = 0.2;
        let p = predict_dqntk_learning(&k, &kd, &eps0, eta, 12).unwrap();
        let a = DMatrix::identity(3, 3) - &k * eta;
        let e0 = DVector::from_column_slice(&eps0);
        for t in 0..=12usize {
            let mut inter = DVector::zeros(3);
            for s in 0..t {
                inter += a.pow((t - 1 - s) as u32) * &kd * a.pow(s as u32) * &e0;
            }
            inter *= -eta;
            let free = a.pow(t as u32) * &e0;
            for i in 0..3 {
                assert!((p.values[t][i] - free[i] - inter[i]).abs() < 1e-12);
            }
            let bound = interaction_bound(&k, &kd, &eps0, eta, t);
            assert!(inter.norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn prediction_csv_header() {
        let csv = prediction_csv(&[vec![1.0, 0.0]]);
        assert_eq!(csv, "t,pred_loss,pred_eps_0,pred_eps_1\n0,5e-1,1e0,0e0\n");
    }
}
