//! Hybrid quantum-classical layers, LeCun-initialized ensembles and
//! connected four-point statistics of their preactivations.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::ansatz::{FeatureMap, FixedGate, Layer, LayeredAnsatz};
use crate::error::{QntkError, Result};
use crate::quantum::{Pauli, PauliObservable, PauliString, StateVector};
use crate::random::{gaussian, random_pauli, random_two_qubit_gate, seeded, substream, uniform_angles};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

impl FromStr for Activation {
    type Err = QntkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(QntkError::Invalid(format!("unknown activation {s:?}"))),
        }
    }
}

/// How a classical vector is loaded into a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Zz(FeatureMap),
    /// `exp(i x_q Y_q)` on each qubit of |0...0>.
    Angle { n_qubits: usize },
}

impl Encoding {
    pub fn n_qubits(&self) -> usize {
        match self {
            Encoding::Zz(f) => f.n_qubits,
            Encoding::Angle { n_qubits } => *n_qubits,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n_qubits()
    }

    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        match self {
            Encoding::Zz(f) => f.encode(x),
            Encoding::Angle { n_qubits } => {
                if x.len() != *n_qubits {
                    return Err(QntkError::DimensionMismatch {
                        expected: *n_qubits,
                        found: x.len(),
                    });
                }
                let mut s = StateVector::zero(*n_qubits)?;
                for (q, &a) in x.iter().enumerate() {
                    PauliString::single(*n_qubits, q, Pauli::Y)?.rotate(&mut s, a)?;
                }
                Ok(s)
            }
        }
    }
}

/// Encoding, circuit, observables and a classical affine map with activation.
#[derive(Debug, Clone)]
pub struct HybridLayer {
    pub encoding: Encoding,
    pub ansatz: LayeredAnsatz,
    pub angles: Vec<f64>,
    pub observables: Vec<PauliObservable>,
    /// `out_dim x width`.
    pub weights: DMatrix<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl HybridLayer {
    pub fn new(
        encoding: Encoding,
        ansatz: LayeredAnsatz,
        angles: Vec<f64>,
        observables: Vec<PauliObservable>,
        weights: DMatrix<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let n = encoding.n_qubits();
        if ansatz.n_qubits() != n {
            return Err(QntkError::DimensionMismatch {
                expected: n,
                found: ansatz.n_qubits(),
            });
        }
        if angles.len() != ansatz.n_params() {
            return Err(QntkError::DimensionMismatch {
                expected: ansatz.n_params(),
                found: angles.len(),
            });
        }
        let width = observables.len();
        let max_width = 1usize << (2 * n);
        if width == 0 || width > max_width {
            return Err(QntkError::Invalid(format!(
                "layer width {width} must lie in 1..={max_width} for {n} qubits"
            )));
        }
        if let Some(o) = observables.iter().find(|o| o.n_qubits() != n) {
            return Err(QntkError::DimensionMismatch {
                expected: n,
                found: o.n_qubits(),
            });
        }
        if weights.ncols() != width {
            return Err(QntkError::DimensionMismatch {
                expected: width,
                found: weights.ncols(),
            });
        }
        if biases.len() != weights.nrows() {
            return Err(QntkError::DimensionMismatch {
                expected: weights.nrows(),
                found: biases.len(),
            });
        }
        Ok(Self {
            encoding,
            ansatz,
            angles,
            observables,
            weights,
            biases,
            activation,
        })
    }

    pub fn width(&self) -> usize {
        self.observables.len()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Expectation vector `z^Q_j = <O_j>` on the encoded and evolved input.
    pub fn quantum_outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.ansatz.prepare(&self.angles, &self.encoding.encode(x)?)?;
        self.observables.iter().map(|o| o.expectation(&s)).collect()
    }

    /// `z^C = W z^Q + b`.
    pub fn preactivation(&self, x: &[f64]) -> Result<Vec<f64>> {
        let zq = self.quantum_outputs(x)?;
        Ok((0..self.out_dim())
            .map(|r| self.biases[r] + (0..self.width()).map(|c| self.weights[(r, c)] * zq[c]).sum::<f64>())
            .collect())
    }
}

/// Runs the layers in order; each layer's activated output feeds the next
/// encoding. Returns the last layer's preactivation.
pub fn hybrid_forward(layers: &[HybridLayer], x: &[f64]) -> Result<Vec<f64>> {
    if layers.is_empty() {
        return Err(QntkError::Invalid("no hybrid layers".into()));
    }
    let mut input = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        if input.len() != layer.encoding.input_dim() {
            return Err(QntkError::DimensionMismatch {
                expected: layer.encoding.input_dim(),
                found: input.len(),
            });
        }
        let pre = layer.preactivation(&input)?;
        if i + 1 == layers.len() {
            return Ok(pre);
        }
        input = pre.into_iter().map(|v| layer.activation.apply(v)).collect();
    }
    unreachable!()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnsatzDistribution {
    /// One circuit structure shared by the ensemble; only the angles vary.
    RandomAngles,
    /// Generators, entanglers and angles all vary per sample.
    RandomPauliLayers,
}

impl FromStr for AnsatzDistribution {
    type Err = QntkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-angles" => Ok(AnsatzDistribution::RandomAngles),
            "random-pauli-layers" => Ok(AnsatzDistribution::RandomPauliLayers),
            _ => Err(QntkError::Invalid(format!("unknown ansatz distribution {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_samples: usize,
    pub seed: u64,
    pub c_w: f64,
    pub c_b: f64,
    pub ansatz_distribution: AnsatzDistribution,
}

/// LeCun initialization: `W ~ N(0, C_W / width)` of shape `out_dim x width`, `b ~ N(0, C_b)`.
pub fn sample_classical_init<R: Rng + ?Sized>(
    c_w: f64,
    c_b: f64,
    out_dim: usize,
    width: usize,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<f64>) {
    let sw = (c_w / width as f64).sqrt();
    let sb = c_b.sqrt();
    let w = DMatrix::from_fn(out_dim, width, |_, _| sw * gaussian(rng));
    let b = (0..out_dim).map(|_| sb * gaussian(rng)).collect();
    (w, b)
}

/// `depth` blocks, each a random two-qubit entangler followed by one random
/// single-qubit Pauli rotation per qubit, plus angles uniform in `[0, 2 pi)`.
pub fn sample_random_ansatz<R: Rng + ?Sized>(
    n_qubits: usize,
    depth: usize,
    rng: &mut R,
) -> Result<(LayeredAnsatz, Vec<f64>)> {
    if depth == 0 {
        return Err(QntkError::Invalid("random ansatz depth must be >= 1".into()));
    }
    let mut layers = Vec::with_capacity(depth * n_qubits);
    for _ in 0..depth {
        for q in 0..n_qubits {
            let fixed = if q == 0 && n_qubits >= 2 {
                vec![FixedGate::Dense(random_two_qubit_gate(n_qubits, rng)?)]
            } else {
                Vec::new()
            };
            let idx = layers.len();
            layers.push(Layer::new(fixed, PauliString::single(n_qubits, q, random_pauli(rng))?, idx));
        }
    }
    let ansatz = LayeredAnsatz::new(n_qubits, layers)?;
    let angles = uniform_angles(ansatz.n_params(), rng);
    Ok((ansatz, angles))
}

/// Ansatz for ensemble member `sample` under `spec`.
pub fn ensemble_member(spec: &EnsembleSpec, n_qubits: usize, depth: usize, sample: u64) -> Result<(LayeredAnsatz, Vec<f64>)> {
    let mut rng = substream(spec.seed, sample + 1);
    match spec.ansatz_distribution {
        AnsatzDistribution::RandomPauliLayers => sample_random_ansatz(n_qubits, depth, &mut rng),
        AnsatzDistribution::RandomAngles => {
            let (ansatz, _) = sample_random_ansatz(n_qubits, depth, &mut substream(spec.seed, 0))?;
            let angles = uniform_angles(ansatz.n_params(), &mut rng);
            Ok((ansatz, angles))
        }
    }
}

/// Every non-identity Pauli string on `n_qubits`, shuffled by `seed`; the first
/// `width` entries form a trace-orthogonal observable set.
pub fn random_pauli_set(n_qubits: usize, width: usize, seed: u64) -> Result<Vec<PauliObservable>> {
    let total = (1usize << (2 * n_qubits)) - 1;
    if width > total {
        return Err(QntkError::Invalid(format!(
            "{width} distinct non-identity Pauli strings requested, only {total} exist on {n_qubits} qubits"
        )));
    }
    let mut codes: Vec<usize> = (1..=total).collect();
    codes.shuffle(&mut seeded(seed));
    codes
        .into_iter()
        .take(width)
        .map(|code| {
            let letters = (0..n_qubits).map(|q| Pauli::ALL[(code >> (2 * q)) & 3]).collect();
            Ok(PauliObservable::single(PauliString::new(letters, 1.0)?))
        })
        .collect()
}

/// Connected four-point function with jackknife error bars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourPointEstimate {
    pub width: usize,
    pub connected_value: f64,
    pub se: f64,
    /// Wick sum `E12 E34 + E13 E24 + E14 E23`.
    pub two_point_scale: f64,
    /// `connected_value / two_point_scale`.
    pub normalized: f64,
    pub normalized_se: f64,
    pub n_samples: usize,
}

impl FourPointEstimate {
    pub fn is_significant(&self) -> bool {
        self.connected_value.abs() >= 3.0 * self.se
    }
}

pub const MIN_FOUR_POINT_SAMPLES: usize = 1000;
const JACKKNIFE_BLOCKS: usize = 100;

/// Moment sums: fourth moment, then pairs 12, 13, 14, 23, 24, 34.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    m: [f64; 7],
}

impl Moments {
    fn add(&mut self, z: &[f64; 4]) {
        self.n += 1.0;
        self.m[0] += z[0] * z[1] * z[2] * z[3];
        self.m[1] += z[0] * z[1];
        self.m[2] += z[0] * z[2];
        self.m[3] += z[0] * z[3];
        self.m[4] += z[1] * z[2];
        self.m[5] += z[1] * z[3];
        self.m[6] += z[2] * z[3];
    }

    fn minus(&self, other: &Moments) -> Moments {
        let mut out = *self;
        out.n -= other.n;
        for k in 0..7 {
            out.m[k] -= other.m[k];
        }
        out
    }

    fn plus(&self, other: &Moments) -> Moments {
        let mut out = *self;
        out.n += other.n;
        for k in 0..7 {
            out.m[k] += other.m[k];
        }
        out
    }

    /// (connected, wick)
    fn estimate(&self) -> (f64, f64) {
        let e: Vec<f64> = self.m.iter().map(|v| v / self.n).collect();
        let wick = e[1] * e[6] + e[2] * e[5] + e[3] * e[4];
        (e[0] - wick, wick)
    }
}

/// `E(z1 z2 z3 z4) - E(z1 z2)E(z3 z4) - E(z1 z3)E(z2 z4) - E(z1 z4)E(z2 z3)`,
/// with a jackknife over 100 contiguous blocks.
pub fn connected_four_point(samples: &[[f64; 4]]) -> Result<FourPointEstimate> {
    connected_four_point_grouped(samples, 1)
}

/// As [`connected_four_point`] for samples arriving in correlated groups of
/// `group` consecutive tuples; jackknife blocks never split a group.
pub fn connected_four_point_grouped(samples: &[[f64; 4]], group: usize) -> Result<FourPointEstimate> {
    let group = group.max(1);
    if samples.len() < MIN_FOUR_POINT_SAMPLES || !samples.len().is_multiple_of(group) {
        return Err(QntkError::TooFewSamples {
            found: samples.len(),
            required: MIN_FOUR_POINT_SAMPLES,
        });
    }
    let n_groups = samples.len() / group;
    if n_groups < JACKKNIFE_BLOCKS {
        return Err(QntkError::TooFewSamples {
            found: n_groups,
            required: JACKKNIFE_BLOCKS,
        });
    }
    let blocks: Vec<Moments> = (0..JACKKNIFE_BLOCKS)
        .map(|b| {
            let lo = b * n_groups / JACKKNIFE_BLOCKS * group;
            let hi = (b + 1) * n_groups / JACKKNIFE_BLOCKS * group;
            let mut m = Moments::default();
            samples[lo..hi].iter().for_each(|z| m.add(z));
            m
        })
        .collect();
    let total = blocks.iter().fold(Moments::default(), |acc, b| acc.plus(b));
    let (conn, wick) = total.estimate();
    let loo: Vec<(f64, f64)> = blocks.iter().map(|b| total.minus(b).estimate()).collect();
    let nb = JACKKNIFE_BLOCKS as f64;
    let jk = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let vals: Vec<f64> = loo.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / nb;
        ((nb - 1.0) / nb * vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
    };
    Ok(FourPointEstimate {
        width: 0,
        connected_value: conn,
        se: jk(&|(c, _)| *c),
        two_point_scale: wick,
        normalized: conn / wick,
        normalized_se: jk(&|(c, w)| c / w),
        n_samples: samples.len() / group,
    })
}

/// Settings for a width scan over random hybrid layers.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthScanConfig {
    pub widths: Vec<usize>,
    pub n_qubits: usize,
    pub depth: usize,
    pub ensemble: EnsembleSpec,
    /// Output neurons per ensemble member; they share the quantum sample and are pooled.
    pub out_dim: usize,
    /// One data point (used for all four slots) or four.
    pub points: Vec<Vec<f64>>,
    pub feature_map_reps: usize,
    /// Replace the quantum ensemble by Gaussian preactivations of matching variance.
    pub gaussian_control: bool,
}

/// Fitted outcome of a width scan.
#[derive(Debug, Clone)]
pub struct WidthScan {
    pub estimates: Vec<FourPointEstimate>,
    pub slope: f64,
    pub slope_se: f64,
    /// 95% interval.
    pub slope_ci: (f64, f64),
    pub unreliable: bool,
    pub notes: Vec<String>,
}

impl WidthScan {
    /// Columns `width,e_conn,se,e2_norm,n_samples`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("width,e_conn,se,e2_norm,n_samples\n");
        for e in &self.estimates {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{}",
                e.width, e.connected_value, e.se, e.two_point_scale, e.n_samples
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "slope {:.4} +- {:.4} (95% CI [{:.4}, {:.4}]){}",
            self.slope,
            self.slope_se,
            self.slope_ci.0,
            self.slope_ci.1,
            if self.unreliable { " UNRELIABLE" } else { "" }
        )
    }
}

/// Weighted least-squares slope of `log|normalized E_conn|` against `log width`.
pub fn fit_log_slope(estimates: &[FourPointEstimate]) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = estimates
        .iter()
        .map(|e| {
            let sigma = (e.normalized_se / e.normalized.abs()).max(1e-12);
            ((e.width as f64).ln(), e.normalized.abs().ln(), 1.0 / (sigma * sigma))
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// Quantum expectation vectors of one ensemble member at each data point.
fn member_outputs(
    cfg: &WidthScanConfig,
    encoded: &[StateVector],
    observables: &[PauliObservable],
    sample: u64,
) -> Result<Vec<Vec<f64>>> {
    let (ansatz, angles) = ensemble_member(&cfg.ensemble, cfg.n_qubits, cfg.depth, sample)?;
    encoded
        .iter()
        .map(|s| {
            let out = ansatz.prepare(&angles, s)?;
            observables.iter().map(|o| o.expectation(&out)).collect()
        })
        .collect()
}

/// Monte Carlo estimate of the connected four-point function of the
/// preactivations at every width, and the log-log slope across widths.
pub fn width_scan(cfg: &WidthScanConfig) -> Result<WidthScan> {
    let max_w = *cfg
        .widths
        .iter()
        .max()
        .ok_or_else(|| QntkError::Invalid("no widths given".into()))?;
    if cfg.points.len() != 1 && cfg.points.len() != 4 {
        return Err(QntkError::Invalid("width scan needs one or four data points".into()));
    }
    let fm = FeatureMap::new(cfg.n_qubits, cfg.feature_map_reps)?;
    let encoded: Vec<StateVector> = cfg.points.iter().map(|x| fm.encode(x)).collect::<Result<_>>()?;
    let observables = if cfg.gaussian_control {
        Vec::new()
    } else {
        random_pauli_set(cfg.n_qubits, max_w, cfg.ensemble.seed ^ 0x5eed_0b5e)?
    };
    let n = cfg.ensemble.n_samples;
    let quantum: Vec<Vec<Vec<f64>>> = if cfg.gaussian_control {
        Vec::new()
    } else {
        (0..n as u64)
            .into_par_iter()
            .map(|s| member_outputs(cfg, &encoded, &observables, s))
            .collect::<Result<_>>()?
    };
    let slot = |k: usize| if cfg.points.len() == 1 { 0 } else { k };
    let mut estimates = Vec::with_capacity(cfg.widths.len());
    for &w in &cfg.widths {
        let tuples: Vec<[f64; 4]> = (0..n)
            .into_par_iter()
            .flat_map_iter(|s| {
                let mut rng = substream(cfg.ensemble.seed ^ (w as u64).rotate_left(32), s as u64);
                let m = cfg.out_dim;
                if cfg.gaussian_control {
                    let sd = (cfg.ensemble.c_w + cfg.ensemble.c_b).sqrt();
                    (0..m)
                        .map(|_| {
                            let g = sd * gaussian(&mut rng);
                            [g, g, g, g]
                        })
                        .collect::<Vec<_>>()
                } else {
                    let (wm, b) = sample_classical_init(cfg.ensemble.c_w, cfg.ensemble.c_b, m, w, &mut rng);
                    let zq = &quantum[s];
                    (0..m)
                        .map(|r| {
                            let pre = |k: usize| {
                                let v = &zq[slot(k)];
                                b[r] + (0..w).map(|c| wm[(r, c)] * v[c]).sum::<f64>()
                            };
                            if cfg.points.len() == 1 {
                                let p = pre(0);
                                [p, p, p, p]
                            } else {
                                [pre(0), pre(1), pre(2), pre(3)]
                            }
                        })
                        .collect::<Vec<_>>()
                }
            })
            .collect();
        let mut e = connected_four_point_grouped(&tuples, cfg.out_dim)?;
        e.width = w;
        estimates.push(e);
    }
    let (slope, slope_se) = fit_log_slope(&estimates);
    let mut notes = Vec::new();
    for e in &estimates {
        if !e.is_significant() {
            notes.push(format!("width {}: |E_conn| below 3 standard errors", e.width));
        } else if e.se > 0.3 * e.connected_value.abs() {
            notes.push(format!("width {}: standard error above 30% of the estimate", e.width));
        }
    }
    let span = (max_w as f64 / *cfg.widths.iter().min().unwrap() as f64).log10();
    if span < 1.5 {
        notes.push(format!("widths span {span:.2} decades (< 1.5)"));
    }
    let unreliable = !notes.is_empty() || !slope.is_finite();
    Ok(WidthScan {
        estimates,
        slope,
        slope_se,
        slope_ci: (slope - 1.96 * slope_se, slope + 1.96 * slope_se),
        unreliable,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_bound_enforced() {
        let enc = Encoding::Angle { n_qubits: 1 };
        let a = crate::ansatz::ry_layer(1).unwrap();
        let obs = vec![PauliObservable::parity(1).unwrap(); 5];
        let r = HybridLayer::new(enc, a, vec![0.0], obs, DMatrix::zeros(1, 5), vec![0.0], Activation::Identity);
        assert!(r.is_err());
    }

    #[test]
    fn single_z_layer_output() {
        let enc = Encoding::Angle { n_qubits: 1 };
        let a = crate::ansatz::ry_layer(1).unwrap();
        let obs = vec![PauliObservable::parity(1).unwrap()];
        let w = DMatrix::from_row_slice(2, 1, &[0.5, -2.0]);
        let layer = HybridLayer::new(enc, a, vec![0.0], obs, w, vec![0.1, 0.2], Activation::Tanh).unwrap();
        let out = hybrid_forward(&[layer], &[0.0]).unwrap();
        assert_eq!(out, vec![0.6, -1.8]);
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn depth_zero_rejected() {
        assert!(sample_random_ansatz(2, 0, &mut seeded(1)).is_err());
    }

    #[test]
    fn constant_variable_connected_value() {
        let c = 1.5f64;
        let e = connected_four_point(&vec![[c; 4]; 1000]).unwrap();
        assert!((e.connected_value + 2.0 * c.powi(4)).abs() < 1e-12);
        assert!(connected_four_point(&vec![[c; 4]; 999]).is_err());
    }

    #[test]
    fn pauli_sets_are_distinct() {
        let set = random_pauli_set(2, 15, 3).unwrap();
        let mut names: Vec<String> = set.iter().map(|o| o.to_string()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 15);
        assert!(random_pauli_set(2, 16, 3).is_err());
    }
}
