use std::fmt::Write as _;

use super::problem::Problem;
use crate::error::{QntkError, Result};
use crate::linalg::{pairwise_dot, SymEigen};

/// Plain gradient-descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Record kernel eigenvalues every this many steps; 0 disables snapshots.
    pub record_kernel_every: usize,
    /// Stop once the loss gradient norm drops below this value.
    pub grad_tol: Option<f64>,
    /// Keep every `record_every`-th step in the trace (the final step is always kept).
    pub record_every: usize,
}

impl DescentConfig {
    pub fn new(learning_rate: f64, steps: usize) -> Self {
        Self {
            learning_rate,
            steps,
            record_kernel_every: 0,
            grad_tol: None,
            record_every: 1,
        }
    }
}

/// Recorded trajectory. Entry `k` of every per-step vector belongs to step `t[k]`,
/// where `t` counts completed updates.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub t: Vec<usize>,
    pub params: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub loss: Vec<f64>,
    /// `(t, eigenvalues descending)` of the kernel at that step.
    pub kernel_eigs: Vec<(usize, Vec<f64>)>,
    pub warnings: Vec<String>,
    /// Step at which the gradient tolerance stopped the run.
    pub stopped_at: Option<usize>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_eps(&self) -> &[f64] {
        self.eps.last().map_or(&[], |v| v.as_slice())
    }

    /// Columns `t,loss,eps_<k>...,theta_<l>...`.
    pub fn to_csv(&self) -> String {
        let n_eps = self.eps.first().map_or(0, Vec::len);
        let n_theta = self.theta.first().map_or(0, Vec::len);
        let mut out = String::from("t,loss");
        for k in 0..n_eps {
            let _ = write!(out, ",eps_{k}");
        }
        for l in 0..n_theta {
            let _ = write!(out, ",theta_{l}");
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{},{:e}", self.t[k], self.loss[k]);
            for v in self.eps[k].iter().chain(&self.theta[k]) {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }

    /// Columns `t,lambda_1..lambda_m`.
    pub fn spectrum_csv(&self) -> String {
        let m = self.kernel_eigs.first().map_or(0, |(_, v)| v.len());
        let mut out = String::from("t");
        for k in 1..=m {
            let _ = write!(out, ",lambda_{k}");
        }
        out.push('\n');
        for (t, eigs) in &self.kernel_eigs {
            let _ = write!(out, "{t}");
            for v in eigs {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }
}

/// `param(t+1) = param(t) - eta dL/dparam` with `L = |eps|^2 / 2`.
pub fn gd_step(problem: &Problem, params: &[f64], eta: f64) -> Result<Vec<f64>> {
    let g = problem.evaluate(params)?.gradient();
    Ok(params.iter().zip(&g).map(|(p, d)| p - eta * d).collect())
}

/// Runs `config.steps` updates from `params0`.
///
/// Fails with [`QntkError::Diverged`] once `|eps|` exceeds ten times its initial norm.
pub fn train(problem: &Problem, params0: &[f64], config: &DescentConfig) -> Result<TrainingTrace> {
    let eta = config.learning_rate;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(QntkError::Invalid(format!("learning rate must be finite and >= 0, got {eta}")));
    }
    let stride = config.record_every.max(1);
    let mut trace = TrainingTrace::default();
    let mut params = params0.to_vec();
    let mut eval = problem.evaluate(&params)?;
    let norm0 = pairwise_dot(&eval.eps, &eval.eps).sqrt();
    let lam0 = SymEigen::new(&eval.kernel()).lambda_max();
    if eta * lam0 >= 2.0 {
        trace
            .warnings
            .push(format!("eta * lambda_max = {:.4} >= 2 at t = 0; descent is unstable", eta * lam0));
    }
    let mut monotone_warned = false;
    let mut prev_loss = eval.loss();
    for t in 0..=config.steps {
        let last = t == config.steps;
        let snapshot = config.record_kernel_every > 0 && t % config.record_kernel_every == 0;
        let mut lam_max = None;
        if snapshot {
            let e = SymEigen::new(&eval.kernel());
            lam_max = Some(e.lambda_max());
            trace.kernel_eigs.push((t, e.values));
        }
        let grad = eval.gradient();
        let gnorm = pairwise_dot(&grad, &grad).sqrt();
        let stop = config.grad_tol.is_some_and(|tol| gnorm < tol);
        if t % stride == 0 || last || stop {
            trace.t.push(t);
            trace.params.push(params.clone());
            trace.theta.push(problem.angles(&params));
            trace.eps.push(eval.eps.clone());
            trace.z.push(eval.z.clone());
            trace.loss.push(eval.loss());
        }
        if last {
            break;
        }
        if stop {
            trace.stopped_at = Some(t);
            break;
        }
        params.iter_mut().zip(&grad).for_each(|(p, d)| *p -= eta * d);
        eval = problem.evaluate(&params)?;
        let norm = pairwise_dot(&eval.eps, &eval.eps).sqrt();
        if norm > 10.0 * norm0 && norm0 > 0.0 {
            return Err(QntkError::Diverged {
                step: t + 1,
                norm,
                initial: norm0,
            });
        }
        let loss = eval.loss();
        let stable = lam_max.map_or(eta * lam0 < 1.0, |l| eta * l < 1.0);
        if loss > prev_loss * (1.0 + 1e-12) + 1e-300 && stable && !monotone_warned {
            trace
                .warnings
                .push(format!("loss increased at step {} while eta * lambda_max < 1", t + 1));
            monotone_warned = true;
        }
        prev_loss = loss;
    }
    Ok(trace)
}

/// Kernel eigenvalues (descending) at every recorded step whose index is a multiple of `every`.
pub fn dynamical_kernel_trace(trace: &TrainingTrace, problem: &Problem, every: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let every = every.max(1);
    trace
        .t
        .iter()
        .zip(&trace.params)
        .filter(|(t, _)| *t % every == 0)
        .map(|(&t, p)| Ok((t, problem.kernel(p)?.eigenvalues())))
        .collect()
}
