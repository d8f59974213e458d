//! Layered variational circuits `prod_l W_l exp(i theta_l X_l)`, feature maps and
//! the textual ansatz description format.
//!
//! Layer `l` acts on a state by first applying its fixed gates `W_l` (in list
//! order) and then the rotation `exp(i theta_l X_l)`. Layer 0 acts first.
//! There is no half-angle factor on the rotation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{QntkError, Result};
use crate::quantum::{DenseGate, Pauli, PauliString, StateVector};

/// A non-variational gate inside `W_l`.
#[derive(Debug, Clone, PartialEq)]
pub enum FixedGate {
    Dense(DenseGate),
    /// `exp(i angle P)`; produced when a reference angle is absorbed into `W_l`.
    Rotation { generator: PauliString, angle: f64 },
}

impl FixedGate {
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        match self {
            FixedGate::Dense(g) => g.apply(state),
            FixedGate::Rotation { generator, angle } => generator.rotate(state, *angle),
        }
    }

    pub fn apply_inverse(&self, state: &mut StateVector) -> Result<()> {
        match self {
            FixedGate::Dense(g) => g.dagger().apply(state),
            FixedGate::Rotation { generator, angle } => generator.rotate(state, -*angle),
        }
    }
}

impl From<DenseGate> for FixedGate {
    fn from(g: DenseGate) -> Self {
        FixedGate::Dense(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fixed: Vec<FixedGate>,
    pub generator: PauliString,
    pub angle_index: usize,
}

impl Layer {
    pub fn new(fixed: Vec<FixedGate>, generator: PauliString, angle_index: usize) -> Self {
        Self {
            fixed,
            generator,
            angle_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredAnsatz {
    n_qubits: usize,
    layers: Vec<Layer>,
    // inverses of the dense fixed gates, cached for backward sweeps
    inverse_fixed: Vec<Vec<FixedGate>>,
}

impl LayeredAnsatz {
    pub fn new(n_qubits: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(QntkError::Invalid("ansatz needs at least one layer".into()));
        }
        let l = layers.len();
        let mut seen = vec![false; l];
        for layer in &layers {
            if layer.generator.n_qubits() != n_qubits {
                return Err(QntkError::DimensionMismatch {
                    expected: n_qubits,
                    found: layer.generator.n_qubits(),
                });
            }
            if (layer.generator.coeff().abs() - 1.0).abs() > 1e-12 {
                return Err(QntkError::Invalid("layer generators must have coefficient +-1".into()));
            }
            match seen.get_mut(layer.angle_index) {
                Some(s) if !*s => *s = true,
                _ => {
                    return Err(QntkError::Invalid(format!(
                        "angle indices must be a permutation of 0..{l}; bad index {}",
                        layer.angle_index
                    )))
                }
            }
            for g in &layer.fixed {
                match g {
                    FixedGate::Dense(d) => {
                        if let Some(&t) = d.targets().iter().find(|&&t| t >= n_qubits) {
                            return Err(QntkError::OutOfRange { index: t, limit: n_qubits });
                        }
                    }
                    FixedGate::Rotation { generator, .. } => {
                        if generator.n_qubits() != n_qubits {
                            return Err(QntkError::DimensionMismatch {
                                expected: n_qubits,
                                found: generator.n_qubits(),
                            });
                        }
                    }
                }
            }
        }
        let inverse_fixed = layers
            .iter()
            .map(|layer| {
                layer
                    .fixed
                    .iter()
                    .rev()
                    .map(|g| match g {
                        FixedGate::Dense(d) => FixedGate::Dense(d.dagger()),
                        FixedGate::Rotation { generator, angle } => FixedGate::Rotation {
                            generator: generator.clone(),
                            angle: -angle,
                        },
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_qubits,
            layers,
            inverse_fixed,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of layers `L`, equal to the number of angles.
    pub fn n_params(&self) -> usize {
        self.layers.len()
    }

    pub fn generator(&self, layer: usize) -> &PauliString {
        &self.layers[layer].generator
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(QntkError::DimensionMismatch {
                expected: self.n_params(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(QntkError::DimensionMismatch {
                expected: self.n_qubits,
                found: state.n_qubits(),
            });
        }
        Ok(())
    }

    /// Applies `exp(i theta X_l) W_l` in place.
    pub fn apply_layer(&self, layer: usize, theta: &[f64], state: &mut StateVector) -> Result<()> {
        let l = &self.layers[layer];
        for g in &l.fixed {
            g.apply(state)?;
        }
        l.generator.rotate(state, theta[l.angle_index])
    }

    /// Applies `(exp(i theta X_l) W_l)^dagger` in place.
    pub fn undo_layer(&self, layer: usize, theta: &[f64], state: &mut StateVector) -> Result<()> {
        let l = &self.layers[layer];
        l.generator.rotate(state, -theta[l.angle_index])?;
        for g in &self.inverse_fixed[layer] {
            g.apply(state)?;
        }
        Ok(())
    }

    /// `U(theta)|input>` with layer 0 applied first.
    pub fn prepare(&self, theta: &[f64], input: &StateVector) -> Result<StateVector> {
        self.check_params(theta)?;
        self.check_state(input)?;
        let mut s = input.clone();
        for layer in 0..self.layers.len() {
            self.apply_layer(layer, theta, &mut s)?;
        }
        Ok(s)
    }

    /// States after each layer: entry `l` is the state right after layer `l`'s rotation.
    pub fn forward_states(&self, theta: &[f64], input: &StateVector) -> Result<Vec<StateVector>> {
        self.check_params(theta)?;
        self.check_state(input)?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut s = input.clone();
        for layer in 0..self.layers.len() {
            self.apply_layer(layer, theta, &mut s)?;
            out.push(s.clone());
        }
        Ok(out)
    }

    /// Splits the circuit around `layer` into the layers before it and the layers after it.
    pub fn partial_products<'a>(
        &'a self,
        theta: &'a [f64],
        layer: usize,
    ) -> Result<(PartialCircuit<'a>, PartialCircuit<'a>)> {
        self.check_params(theta)?;
        let l = self.layers.len();
        if layer >= l {
            return Err(QntkError::OutOfRange { index: layer, limit: l });
        }
        Ok((
            PartialCircuit {
                ansatz: self,
                theta,
                range: 0..layer,
            },
            PartialCircuit {
                ansatz: self,
                theta,
                range: layer + 1..l,
            },
        ))
    }

    /// Folds `exp(i theta*_l X_l)` into each `W_l`, leaving a circuit whose angles are `delta * phi`.
    pub fn absorbed(&self, theta_star: &[f64]) -> Result<LayeredAnsatz> {
        self.check_params(theta_star)?;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut fixed = l.fixed.clone();
                fixed.push(FixedGate::Rotation {
                    generator: l.generator.clone(),
                    angle: theta_star[l.angle_index],
                });
                Layer::new(fixed, l.generator.clone(), l.angle_index)
            })
            .collect();
        LayeredAnsatz::new(self.n_qubits, layers)
    }

    /// One line per layer: `layer <idx> gen=<letters> fixed=<gate-list> angle=<k>`.
    ///
    /// `gen` may carry a leading `-`. `angle` names the entry of the angle
    /// vector driving the layer and defaults to `idx` when omitted. The gate
    /// list is comma separated (`-` when empty); targets and numbers inside a
    /// gate are separated by `;`:
    /// `h(q)`, `p(q)[angle]`, `cx(c;t)`, `cz(a;b)`, `rot(<letters>)[angle]`,
    /// and `u(q..)[re;im;...]` for any other dense gate (row-major entries).
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let gen = if layer.generator.coeff() < 0.0 {
                format!("-{}", layer.generator.letter_string())
            } else {
                layer.generator.letter_string()
            };
            let fixed: Vec<String> = layer.fixed.iter().map(describe_gate).collect();
            let fixed = if fixed.is_empty() { "-".to_string() } else { fixed.join(",") };
            let _ = writeln!(out, "layer {i} gen={gen} fixed={fixed} angle={}", layer.angle_index);
        }
        out
    }

    /// Inverse of [`describe`](Self::describe).
    pub fn parse_description(n_qubits: usize, text: &str) -> Result<LayeredAnsatz> {
        let mut layers = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: String| QntkError::Parse {
                line: lineno + 1,
                message,
            };
            let mut fields = line.split_whitespace();
            if fields.next() != Some("layer") {
                return Err(perr("expected 'layer'".into()));
            }
            let idx: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr("missing layer index".into()))?;
            if idx != layers.len() {
                return Err(perr(format!("layer index {idx} out of order")));
            }
            let mut gen = None;
            let mut fixed = None;
            let mut angle = idx;
            for f in fields {
                if let Some(g) = f.strip_prefix("gen=") {
                    let (sign, letters) = match g.strip_prefix('-') {
                        Some(rest) => (-1.0, rest),
                        None => (1.0, g),
                    };
                    gen = Some(
                        PauliString::from_letters(letters)
                            .map_err(|e| perr(e.to_string()))?
                            .with_coeff(sign),
                    );
                } else if let Some(list) = f.strip_prefix("fixed=") {
                    fixed = Some(parse_gate_list(list).map_err(perr)?);
                } else if let Some(a) = f.strip_prefix("angle=") {
                    angle = a.parse().map_err(|_| perr(format!("bad angle index {a:?}")))?;
                } else {
                    return Err(perr(format!("unknown field {f:?}")));
                }
            }
            let gen = gen.ok_or_else(|| perr("missing gen=".into()))?;
            layers.push(Layer::new(fixed.unwrap_or_default(), gen, angle));
        }
        LayeredAnsatz::new(n_qubits, layers)
    }
}

fn describe_gate(g: &FixedGate) -> String {
    match g {
        FixedGate::Rotation { generator, angle } => {
            let sign = if generator.coeff() < 0.0 { "-" } else { "" };
            format!("rot({sign}{})[{angle}]", generator.letter_string())
        }
        FixedGate::Dense(d) => {
            let t: Vec<String> = d.targets().iter().map(|t| t.to_string()).collect();
            let t = t.join(";");
            match d.name() {
                "h" | "cx" | "cz" => format!("{}({t})", d.name()),
                "p" => format!("p({t})[{}]", d.matrix()[3].arg()),
                _ => {
                    let entries: Vec<String> = d
                        .matrix()
                        .iter()
                        .flat_map(|z| [z.re.to_string(), z.im.to_string()])
                        .collect();
                    format!("u({t})[{}]", entries.join(";"))
                }
            }
        }
    }
}

fn parse_gate_list(list: &str) -> std::result::Result<Vec<FixedGate>, String> {
    if list == "-" {
        return Ok(Vec::new());
    }
    list.split(',').map(parse_gate).collect()
}

fn parse_gate(tok: &str) -> std::result::Result<FixedGate, String> {
    let open = tok.find('(').ok_or_else(|| format!("bad gate {tok:?}"))?;
    let close = tok.find(')').ok_or_else(|| format!("bad gate {tok:?}"))?;
    let name = &tok[..open];
    let inner = &tok[open + 1..close];
    let params: Vec<f64> = match tok[close + 1..].strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        Some(p) => p
            .split(';')
            .map(|v| v.parse::<f64>().map_err(|_| format!("bad number {v:?}")))
            .collect::<std::result::Result<_, _>>()?,
        None => Vec::new(),
    };
    let targets = || -> std::result::Result<Vec<usize>, String> {
        inner
            .split(';')
            .map(|t| t.parse::<usize>().map_err(|_| format!("bad target {t:?}")))
            .collect()
    };
    let err = |e: QntkError| e.to_string();
    let gate = match (name, params.as_slice()) {
        ("h", []) => DenseGate::hadamard(one(&targets()?)?).into(),
        ("p", [a]) => DenseGate::phase(one(&targets()?)?, *a).into(),
        ("cx", []) => {
            let t = targets()?;
            DenseGate::cx(t[0], *t.get(1).ok_or("cx needs two targets")?).map_err(err)?.into()
        }
        ("cz", []) => {
            let t = targets()?;
            DenseGate::cz(t[0], *t.get(1).ok_or("cz needs two targets")?).map_err(err)?.into()
        }
        ("rot", [a]) => {
            let (sign, letters) = match inner.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, inner),
            };
            FixedGate::Rotation {
                generator: PauliString::from_letters(letters).map_err(err)?.with_coeff(sign),
                angle: *a,
            }
        }
        ("u", entries) => {
            let matrix = entries
                .chunks(2)
                .map(|c| Complex64::new(c[0], *c.get(1).unwrap_or(&0.0)))
                .collect();
            DenseGate::new("u", targets()?, matrix).map_err(err)?.into()
        }
        _ => return Err(format!("unknown gate {tok:?}")),
    };
    Ok(gate)
}

fn one(t: &[usize]) -> std::result::Result<usize, String> {
    match t {
        [q] => Ok(*q),
        _ => Err("expected one target".into()),
    }
}

/// A contiguous run of layers of an ansatz, bound to an angle vector.
#[derive(Debug, Clone)]
pub struct PartialCircuit<'a> {
    ansatz: &'a LayeredAnsatz,
    theta: &'a [f64],
    range: std::ops::Range<usize>,
}

impl PartialCircuit<'_> {
    pub fn is_identity(&self) -> bool {
        self.range.is_empty()
    }

    pub fn layer_range(&self) -> std::ops::Range<usize> {
        self.range.clone()
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        for l in self.range.clone() {
            self.ansatz.apply_layer(l, self.theta, state)?;
        }
        Ok(())
    }

    pub fn apply_inverse(&self, state: &mut StateVector) -> Result<()> {
        for l in self.range.clone().rev() {
            self.ansatz.undo_layer(l, self.theta, state)?;
        }
        Ok(())
    }
}

/// Lazy-training coordinates `theta = theta* + delta * phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrame {
    pub theta_star: Vec<f64>,
    pub delta: f64,
}

impl ReferenceFrame {
    pub fn new(theta_star: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(QntkError::Invalid(format!("delta must be finite and >= 0, got {delta}")));
        }
        Ok(Self { theta_star, delta })
    }

    pub fn theta(&self, phi: &[f64]) -> Vec<f64> {
        self.theta_star
            .iter()
            .zip(phi)
            .map(|(t, p)| t + self.delta * p)
            .collect()
    }

    /// `(theta - theta*) / delta`.
    pub fn phi(&self, theta: &[f64]) -> Vec<f64> {
        self.theta_star
            .iter()
            .zip(theta)
            .map(|(t0, t)| (t - t0) / self.delta)
            .collect()
    }
}

/// Per-qubit Y-rotation blocks separated by linear CX chains.
///
/// There are `reps + 1` blocks of `n_qubits` layers; the CX chain
/// `cx(0,1), cx(1,2), ...` preceding block `b >= 1` sits in the fixed gates of
/// that block's first layer.
pub fn real_amplitudes(n_qubits: usize, reps: usize) -> Result<LayeredAnsatz> {
    if n_qubits < 2 || reps < 1 {
        return Err(QntkError::Invalid(format!(
            "real_amplitudes needs n_qubits >= 2 and reps >= 1 (got {n_qubits}, {reps})"
        )));
    }
    let mut layers = Vec::with_capacity(n_qubits * (reps + 1));
    for block in 0..=reps {
        for q in 0..n_qubits {
            let fixed = if block > 0 && q == 0 {
                (0..n_qubits - 1)
                    .map(|i| DenseGate::cx(i, i + 1).map(FixedGate::Dense))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let gen = PauliString::single(n_qubits, q, Pauli::Y)?;
            layers.push(Layer::new(fixed, gen, block * n_qubits + q));
        }
    }
    LayeredAnsatz::new(n_qubits, layers)
}

/// One Y-rotation layer per qubit and no entanglers.
pub fn ry_layer(n_qubits: usize) -> Result<LayeredAnsatz> {
    let layers = (0..n_qubits)
        .map(|q| Ok(Layer::new(Vec::new(), PauliString::single(n_qubits, q, Pauli::Y)?, q)))
        .collect::<Result<Vec<_>>>()?;
    LayeredAnsatz::new(n_qubits, layers)
}

/// Second-order Pauli-Z evolution feature map with `reps` repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMap {
    pub n_qubits: usize,
    pub reps: usize,
}

impl FeatureMap {
    pub fn new(n_qubits: usize, reps: usize) -> Result<Self> {
        if reps == 0 {
            return Err(QntkError::Invalid("feature map needs reps >= 1".into()));
        }
        crate::quantum::StateVector::zero(n_qubits)?;
        Ok(Self { n_qubits, reps })
    }

    pub fn input_dim(&self) -> usize {
        self.n_qubits
    }

    /// Gate sequence encoding `x`, starting from |0...0>.
    pub fn gates(&self, x: &[f64]) -> Result<Vec<DenseGate>> {
        let n = self.n_qubits;
        if x.len() != n {
            return Err(QntkError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let mut gates = Vec::new();
        for _ in 0..self.reps {
            gates.extend((0..n).map(DenseGate::hadamard));
            gates.extend((0..n).map(|i| DenseGate::phase(i, 2.0 * x[i])));
            for i in 0..n {
                for j in i + 1..n {
                    gates.push(DenseGate::cx(i, j)?);
                    gates.push(DenseGate::phase(j, 2.0 * (PI - x[i]) * (PI - x[j])));
                    gates.push(DenseGate::cx(i, j)?);
                }
            }
        }
        Ok(gates)
    }

    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        let mut s = StateVector::zero(self.n_qubits)?;
        for g in self.gates(x)? {
            g.apply(&mut s)?;
        }
        Ok(s)
    }
}

pub fn zz_feature_map(x: &[f64], reps: usize) -> Result<StateVector> {
    FeatureMap::new(x.len(), reps)?.encode(x)
}
