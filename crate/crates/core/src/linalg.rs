//! Symmetric matrix helpers built on nalgebra's eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues below `NULL_CUTOFF * lambda_max` count as zero.
pub const NULL_CUTOFF: f64 = 1e-9;

/// Eigendecomposition of a real symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0).max(0.0)
    }

    /// Absolute threshold separating the numerical nullspace.
    pub fn cutoff(&self) -> f64 {
        NULL_CUTOFF * self.lambda_max()
    }

    /// Indices of eigenvalues above the nullspace cutoff.
    pub fn nonzero(&self) -> Vec<usize> {
        let c = self.cutoff();
        (0..self.values.len()).filter(|&k| self.values[k] > c && self.values[k] > 0.0).collect()
    }

    pub fn rank(&self) -> usize {
        self.nonzero().len()
    }

    /// `V f(Lambda) V^T` with `f` applied only to the listed eigenvalues.
    pub fn spectral_fn(&self, keep: &[usize], f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for &k in keep {
            let v = self.vectors.column(k);
            out += f(self.values[k]) * v * v.transpose();
        }
        out
    }

    /// Moore-Penrose inverse restricted to the nonzero eigenspace.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        self.spectral_fn(&self.nonzero(), |l| 1.0 / l)
    }

    /// Orthogonal projector onto the nonzero eigenspace.
    pub fn range_projector(&self) -> DMatrix<f64> {
        self.spectral_fn(&self.nonzero(), |_| 1.0)
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn to_eigenbasis(&self, x: &DVector<f64>) -> DVector<f64> {
        self.vectors.transpose() * x
    }
}

pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    SymEigen::new(m).pseudo_inverse()
}

/// Largest absolute entry of `m - m^T`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Sum with a fixed binary-tree shape, so results do not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2..=8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Dot product using [`pairwise_sum`].
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}
