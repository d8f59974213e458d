//! Turns a resolved config into circuits, datasets, problems and reference angles.

use qntk_core::ansatz::{real_amplitudes, ry_layer, FeatureMap, LayeredAnsatz};
use qntk_core::data::{adhoc_generate, Dataset};
use qntk_core::dynamics::{train, DescentConfig, Problem};
use qntk_core::quantum::{PauliObservable, StateVector};
use qntk_core::random::{gaussian, haar_state, random_ansatz, substream, uniform_angles};

use crate::config::{AnsatzKind, DataSource, ExperimentConfig, InputKind, Phi0Kind, ThetaStarKind};
use crate::error::{LabError, Result};

/// Random streams derived from the global seed, one per consumer.
pub mod streams {
    pub const ANSATZ: u64 = 10;
    pub const THETA: u64 = 11;
    pub const PHI0: u64 = 12;
    pub const INPUT: u64 = 13;
}

/// Reference angles for the expansion `theta = theta* + delta phi`.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaStarPolicy {
    Zeros,
    Explicit(Vec<f64>),
    /// Use the given angles unchanged.
    Start(Vec<f64>),
    /// `steps` plain descent updates at rate `eta` from `start`; the frozen
    /// expansion then sits near the point where training converges.
    Pretrain { start: Vec<f64>, steps: usize, eta: f64 },
}

/// Applies the policy to a problem whose parameters are the circuit angles.
pub fn theta_star(policy: &ThetaStarPolicy, problem: &Problem) -> Result<Vec<f64>> {
    let l = problem.n_params();
    let check = |v: &[f64], what: &str| {
        if v.len() == l {
            Ok(())
        } else {
            Err(LabError::Config(format!("{what} has {} angles, the circuit has {l}", v.len())))
        }
    };
    match policy {
        ThetaStarPolicy::Zeros => Ok(vec![0.0; l]),
        ThetaStarPolicy::Explicit(v) => {
            check(v, "explicit theta*")?;
            Ok(v.clone())
        }
        ThetaStarPolicy::Start(v) => {
            check(v, "start angles")?;
            Ok(v.clone())
        }
        ThetaStarPolicy::Pretrain { start, steps, eta } => {
            check(start, "pretraining start")?;
            let mut plain = problem.clone();
            plain.frame = None;
            let trace = train(&plain, start, &DescentConfig::new(*eta, *steps))?;
            Ok(trace.theta.last().cloned().unwrap_or_else(|| start.clone()))
        }
    }
}

pub fn policy_from_config(cfg: &ExperimentConfig, n_params: usize) -> ThetaStarPolicy {
    let d = &cfg.descent;
    let start = || uniform_angles(n_params, &mut substream(cfg.seed, streams::THETA));
    match d.theta_star {
        ThetaStarKind::Zeros => ThetaStarPolicy::Zeros,
        ThetaStarKind::Explicit => ThetaStarPolicy::Explicit(d.theta_star_values.clone()),
        ThetaStarKind::Random => ThetaStarPolicy::Start(start()),
        ThetaStarKind::Pretrain => ThetaStarPolicy::Pretrain {
            start: start(),
            steps: d.pretrain_steps,
            eta: d.pretrain_eta.unwrap_or(d.eta),
        },
    }
}

pub fn build_ansatz(cfg: &ExperimentConfig) -> Result<LayeredAnsatz> {
    let c = &cfg.circuit;
    Ok(match c.ansatz {
        AnsatzKind::Ry => ry_layer(c.qubits)?,
        AnsatzKind::RealAmplitudes => real_amplitudes(c.qubits, c.reps)?,
        AnsatzKind::Random => random_ansatz(c.qubits, c.layers, &mut substream(cfg.seed, streams::ANSATZ))?,
        AnsatzKind::File => {
            let path = c.file.as_ref().ok_or_else(|| LabError::Config("circuit.file missing".into()))?;
            let text = std::fs::read_to_string(path)?;
            LayeredAnsatz::parse_description(c.qubits, &text)?
        }
    })
}

pub fn build_observables(cfg: &ExperimentConfig) -> Result<Vec<PauliObservable>> {
    cfg.circuit
        .observables
        .iter()
        .map(|s| {
            let o: PauliObservable = s.parse()?;
            if o.n_qubits() != cfg.circuit.qubits {
                return Err(LabError::Config(format!(
                    "observable {s:?} acts on {} qubits, the circuit has {}",
                    o.n_qubits(),
                    cfg.circuit.qubits
                )));
            }
            Ok(o)
        })
        .collect()
}

pub fn optimization_input(cfg: &ExperimentConfig) -> Result<StateVector> {
    Ok(match cfg.circuit.input {
        InputKind::Zero => StateVector::zero(cfg.circuit.qubits)?,
        InputKind::Haar => haar_state(cfg.circuit.qubits, &mut substream(cfg.seed, streams::INPUT))?,
    })
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.data;
    match d.source {
        DataSource::File => {
            let path = d.path.as_ref().ok_or_else(|| LabError::Config("data.path missing".into()))?;
            Ok(Dataset::load(path)?)
        }
        DataSource::Adhoc => {
            let seed = d.seed.unwrap_or(cfg.seed);
            Ok(adhoc_generate(cfg.circuit.qubits, d.n_train, d.n_test, d.gap, seed, d.v_seed)?.0)
        }
    }
}

/// Encoded training inputs, held-out inputs and training labels in compound-index order.
pub struct LearningData {
    pub train_inputs: Vec<StateVector>,
    pub test_inputs: Vec<StateVector>,
    pub train_labels: Vec<f64>,
    pub test_labels: Vec<f64>,
}

pub fn learning_data(cfg: &ExperimentConfig, ds: &Dataset, n_obs: usize) -> Result<LearningData> {
    if ds.n_features() != cfg.circuit.qubits {
        return Err(LabError::Config(format!(
            "dataset has {} features but the feature map uses {} qubits",
            ds.n_features(),
            cfg.circuit.qubits
        )));
    }
    let fm = FeatureMap::new(cfg.circuit.qubits, cfg.circuit.feature_map_reps)?;
    let labels = |idx: &[usize]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(idx.len() * n_obs);
        for &i in idx {
            let y = &ds.samples[i].y;
            match y.len() {
                1 => out.extend(std::iter::repeat_n(y[0], n_obs)),
                n if n == n_obs => out.extend_from_slice(y),
                n => {
                    return Err(LabError::Config(format!(
                        "sample {i} has {n} labels for {n_obs} observables"
                    )))
                }
            }
        }
        Ok(out)
    };
    let encode = |idx: &[usize]| -> Result<Vec<StateVector>> {
        idx.iter().map(|&i| Ok(fm.encode(&ds.samples[i].x)?)).collect()
    };
    Ok(LearningData {
        train_inputs: encode(&ds.train)?,
        test_inputs: encode(&ds.test)?,
        train_labels: labels(&ds.train)?,
        test_labels: labels(&ds.test)?,
    })
}

pub fn initial_phi(cfg: &ExperimentConfig, n_params: usize) -> Vec<f64> {
    match cfg.descent.phi0 {
        Phi0Kind::Zeros => vec![0.0; n_params],
        Phi0Kind::Gaussian => {
            let mut rng = substream(cfg.seed, streams::PHI0);
            (0..n_params).map(|_| gaussian(&mut rng)).collect()
        }
    }
}
