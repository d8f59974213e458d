//! Experiment configuration: TOML file sections, command-line overrides and resolution of defaults.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Optimize,
    Learn,
    Kernel,
    Predict,
    HybridScan,
    DatasetGen,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Optimize => "optimize",
            Mode::Learn => "learn",
            Mode::Kernel => "kernel",
            Mode::Predict => "predict",
            Mode::HybridScan => "hybrid-scan",
            Mode::DatasetGen => "dataset-gen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AnsatzKind {
    /// One Y rotation per qubit.
    Ry,
    /// RY layers separated by linear CX ladders.
    RealAmplitudes,
    /// Random single-qubit generators with Haar two-qubit gates.
    Random,
    /// Circuit description read from `circuit.file`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Zero,
    Haar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Adhoc,
    File,
}

/// How the reference angles `theta*` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaStarKind {
    Zeros,
    /// Seeded uniform angles in `[0, 2pi)`.
    Random,
    /// Random angles followed by `pretrain_steps` plain descent steps.
    Pretrain,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Phi0Kind {
    Zeros,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    RandomAngles,
    RandomPauliLayers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitConfig {
    pub qubits: usize,
    pub ansatz: AnsatzKind,
    pub reps: usize,
    /// Layer count for the random ansatz.
    pub layers: usize,
    pub file: Option<PathBuf>,
    pub observables: Vec<String>,
    /// Input state for `optimize`.
    pub input: InputKind,
    pub feature_map_reps: usize,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            qubits: 1,
            ansatz: AnsatzKind::Ry,
            reps: 1,
            layers: 4,
            file: None,
            observables: vec!["Z".into()],
            input: InputKind::Zero,
            feature_map_reps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub gap: f64,
    /// Sampling seed; the global seed when absent.
    pub seed: Option<u64>,
    /// Seed of the hidden labelling circuit.
    pub v_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Adhoc,
            path: None,
            n_train: 20,
            n_test: 0,
            gap: 0.3,
            seed: None,
            v_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentSection {
    pub eta: f64,
    /// When set, `eta = eta_k / lambda_max(K)` at the start of training.
    pub eta_k: Option<f64>,
    pub steps: usize,
    /// Optimization target.
    pub target: f64,
    pub delta: f64,
    pub theta_star: ThetaStarKind,
    pub theta_star_values: Vec<f64>,
    pub pretrain_steps: usize,
    /// Pretraining rate; `eta` when absent.
    pub pretrain_eta: Option<f64>,
    pub phi0: Phi0Kind,
    pub grad_tol: Option<f64>,
    pub record_kernel_every: usize,
    pub record_every: usize,
}

impl Default for DescentSection {
    fn default() -> Self {
        Self {
            eta: 0.05,
            eta_k: None,
            steps: 200,
            target: -1.0,
            delta: 1.0,
            theta_star: ThetaStarKind::Random,
            theta_star_values: Vec::new(),
            pretrain_steps: 500,
            pretrain_eta: None,
            phi0: Phi0Kind::Zeros,
            grad_tol: Some(1e-8),
            record_kernel_every: 10,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    pub widths: Vec<usize>,
    pub samples: usize,
    pub qubits: usize,
    pub depth: usize,
    pub out_dim: usize,
    pub c_w: f64,
    pub c_b: f64,
    pub distribution: DistributionKind,
    pub gaussian_control: bool,
    /// Data point fed to every slot; `0.3` per qubit when empty.
    pub point: Vec<f64>,
    pub feature_map_reps: usize,
}

impl Default for HybridSection {
    fn default() -> Self {
        Self {
            widths: vec![4, 16, 64, 256],
            samples: 20_000,
            qubits: 6,
            depth: 8,
            out_dim: 64,
            c_w: 1.0,
            c_b: 0.0,
            distribution: DistributionKind::RandomPauliLayers,
            gaussian_control: false,
            point: Vec::new(),
            feature_map_reps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plots: false,
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub circuit: CircuitConfig,
    pub data: DataConfig,
    pub descent: DescentSection,
    pub hybrid: HybridSection,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fills defaults that depend on other fields and validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        if self.data.seed.is_none() {
            self.data.seed = Some(self.seed);
        }
        if self.hybrid.point.is_empty() {
            self.hybrid.point = vec![0.3; self.hybrid.qubits];
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.into()));
        if self.circuit.qubits == 0 {
            return bad("circuit.qubits must be positive");
        }
        if self.circuit.observables.is_empty() {
            return bad("circuit.observables is empty");
        }
        if self.circuit.ansatz == AnsatzKind::File && self.circuit.file.is_none() {
            return bad("circuit.ansatz = \"file\" needs circuit.file");
        }
        if !(self.descent.eta.is_finite() && self.descent.eta >= 0.0) {
            return bad("descent.eta must be finite and non-negative");
        }
        if self.descent.eta_k.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
            return bad("descent.eta_k must be positive");
        }
        if !(self.descent.delta.is_finite() && self.descent.delta >= 0.0) {
            return bad("descent.delta must be finite and non-negative");
        }
        if self.descent.record_every == 0 {
            return bad("descent.record_every must be at least 1");
        }
        if self.data.source == DataSource::File && self.data.path.is_none() {
            return bad("data.source = \"file\" needs data.path");
        }
        if self.hybrid.widths.is_empty() || self.hybrid.widths.contains(&0) {
            return bad("hybrid.widths must be non-empty and positive");
        }
        if self.hybrid.point.len() != self.hybrid.qubits {
            return bad("hybrid.point length must equal hybrid.qubits");
        }
        Ok(())
    }
}

/// Command-line values that replace their config-file counterparts.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long, value_enum)]
    pub ansatz: Option<AnsatzKind>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub circuit_file: Option<PathBuf>,
    /// Observable, e.g. `Z`, `ZZI` or `0.5*ZI - IZ`; repeat for several.
    #[arg(long = "obs")]
    pub observables: Vec<String>,
    #[arg(long, value_enum)]
    pub input: Option<InputKind>,
    #[arg(long)]
    pub feature_map_reps: Option<usize>,

    #[arg(long, value_enum)]
    pub data_source: Option<DataSource>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub v_seed: Option<u64>,

    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eta_k: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub theta_star: Option<ThetaStarKind>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta_star_values: Option<Vec<f64>>,
    #[arg(long)]
    pub pretrain_steps: Option<usize>,
    #[arg(long)]
    pub pretrain_eta: Option<f64>,
    #[arg(long, value_enum)]
    pub phi0: Option<Phi0Kind>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Disable the gradient-norm early stop.
    #[arg(long)]
    pub no_grad_tol: bool,
    #[arg(long)]
    pub record_kernel_every: Option<usize>,
    #[arg(long)]
    pub record_every: Option<usize>,

    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub hybrid_qubits: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub out_dim: Option<usize>,
    #[arg(long)]
    pub c_w: Option<f64>,
    #[arg(long)]
    pub c_b: Option<f64>,
    #[arg(long, value_enum)]
    pub distribution: Option<DistributionKind>,
    #[arg(long)]
    pub gaussian_control: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub point: Option<Vec<f64>>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Overrides {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        let c = &mut cfg.circuit;
        set(&mut c.qubits, self.qubits);
        set(&mut c.ansatz, self.ansatz);
        set(&mut c.reps, self.reps);
        set(&mut c.layers, self.layers);
        if self.circuit_file.is_some() {
            c.file = self.circuit_file;
        }
        if !self.observables.is_empty() {
            c.observables = self.observables;
        }
        set(&mut c.input, self.input);
        set(&mut c.feature_map_reps, self.feature_map_reps);

        let d = &mut cfg.data;
        set(&mut d.source, self.data_source);
        if let Some(p) = self.data {
            d.path = Some(p);
            d.source = DataSource::File;
        }
        set(&mut d.n_train, self.n_train);
        set(&mut d.n_test, self.n_test);
        set(&mut d.gap, self.gap);
        if self.data_seed.is_some() {
            d.seed = self.data_seed;
        }
        set(&mut d.v_seed, self.v_seed);

        let g = &mut cfg.descent;
        set(&mut g.eta, self.eta);
        if self.eta_k.is_some() {
            g.eta_k = self.eta_k;
        }
        set(&mut g.steps, self.steps);
        set(&mut g.target, self.target);
        set(&mut g.delta, self.delta);
        set(&mut g.theta_star, self.theta_star);
        if let Some(v) = self.theta_star_values {
            g.theta_star_values = v;
            if self.theta_star.is_none() {
                g.theta_star = ThetaStarKind::Explicit;
            }
        }
        set(&mut g.pretrain_steps, self.pretrain_steps);
        if self.pretrain_eta.is_some() {
            g.pretrain_eta = self.pretrain_eta;
        }
        set(&mut g.phi0, self.phi0);
        if self.grad_tol.is_some() {
            g.grad_tol = self.grad_tol;
        }
        if self.no_grad_tol {
            g.grad_tol = None;
        }
        set(&mut g.record_kernel_every, self.record_kernel_every);
        set(&mut g.record_every, self.record_every);

        let h = &mut cfg.hybrid;
        set(&mut h.widths, self.widths);
        set(&mut h.samples, self.samples);
        set(&mut h.qubits, self.hybrid_qubits);
        set(&mut h.depth, self.depth);
        set(&mut h.out_dim, self.out_dim);
        set(&mut h.c_w, self.c_w);
        set(&mut h.c_b, self.c_b);
        set(&mut h.distribution, self.distribution);
        h.gaussian_control |= self.gaussian_control;
        set(&mut h.point, self.point);
    }
}
