//! Ad-hoc-style synthetic classification data and its CSV form.
//!
//! File layout:
//! ```text
//! # adhoc d=<d> delta=<gap> seed=<s> v_seed=<s2> reps=<r>
//! # split train=<n_train> test=<n_test>
//! x0,...,x{d-1},y
//! <rows: training rows first, then test rows>
//! ```
//! Both comment lines are optional on load. Several label columns are written
//! as `y0,y1,...`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::ansatz::{FeatureMap, LayeredAnsatz};
use crate::error::{QntkError, Result};
use crate::hybrid::sample_random_ansatz;
use crate::quantum::{PauliObservable, StateVector};
use crate::random::{seeded, substream};

pub const MAX_DRAWS: usize = 1_000_000;
const HIDDEN_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    /// One label per observable.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorMeta {
    pub d: usize,
    pub delta: f64,
    pub seed: u64,
    pub v_seed: u64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub meta: Option<GeneratorMeta>,
}

/// Counters from the rejection loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub draws: usize,
    pub gap_rejections: usize,
}

impl GenerationStats {
    /// Fraction of draws that passed the gap filter.
    pub fn acceptance_rate(&self) -> f64 {
        1.0 - self.gap_rejections as f64 / self.draws.max(1) as f64
    }
}

/// The labelling rule: feature map, hidden circuit and parity observable.
#[derive(Debug, Clone)]
pub struct AdhocLabeler {
    feature_map: FeatureMap,
    hidden: LayeredAnsatz,
    angles: Vec<f64>,
    parity: PauliObservable,
}

impl AdhocLabeler {
    pub fn new(d: usize, reps: usize, v_seed: u64) -> Result<Self> {
        let (hidden, angles) = sample_random_ansatz(d, HIDDEN_DEPTH, &mut seeded(v_seed))?;
        Ok(Self {
            feature_map: FeatureMap::new(d, reps)?,
            hidden,
            angles,
            parity: PauliObservable::parity(d)?,
        })
    }

    /// `<Phi(x)| V^dag Z...Z V |Phi(x)>`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let s: StateVector = self.feature_map.encode(x)?;
        self.parity.expectation(&self.hidden.prepare(&self.angles, &s)?)
    }
}

/// Draws `x` uniformly in `[0, 2 pi)^d`, keeps points with `|score| > gap` and
/// labels them by the sign of the score. Classes are balanced exactly within
/// each split (the odd one out, if any, goes to class +1).
pub fn adhoc_generate(
    n_features: usize,
    n_train: usize,
    n_test: usize,
    gap: f64,
    seed: u64,
    v_seed: u64,
) -> Result<(Dataset, GenerationStats)> {
    adhoc_generate_with_reps(n_features, n_train, n_test, gap, seed, v_seed, 2)
}

pub fn adhoc_generate_with_reps(
    n_features: usize,
    n_train: usize,
    n_test: usize,
    gap: f64,
    seed: u64,
    v_seed: u64,
    reps: usize,
) -> Result<(Dataset, GenerationStats)> {
    if !(gap >= 0.0) {
        return Err(QntkError::Invalid(format!("gap must be >= 0, got {gap}")));
    }
    if n_train == 0 {
        return Err(QntkError::Invalid("training split must be nonempty".into()));
    }
    let labeler = AdhocLabeler::new(n_features, reps, v_seed)?;
    let mut rng = substream(seed, 0);
    let mut stats = GenerationStats {
        draws: 0,
        gap_rejections: 0,
    };
    let mut split = |n: usize, stats: &mut GenerationStats| -> Result<Vec<LabeledSample>> {
        let want_pos = n.div_ceil(2);
        let want_neg = n / 2;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        while pos.len() < want_pos || neg.len() < want_neg {
            if stats.draws >= MAX_DRAWS {
                return Err(QntkError::Invalid(format!(
                    "gap {gap} too large: {MAX_DRAWS} draws did not yield the requested samples"
                )));
            }
            stats.draws += 1;
            let x: Vec<f64> = (0..n_features)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            let s = labeler.score(&x)?;
            if s.abs() <= gap {
                stats.gap_rejections += 1;
                continue;
            }
            if s > 0.0 && pos.len() < want_pos {
                pos.push(LabeledSample { x, y: vec![1.0] });
            } else if s < 0.0 && neg.len() < want_neg {
                neg.push(LabeledSample { x, y: vec![-1.0] });
            }
        }
        // interleave so prefixes stay balanced
        let mut out = Vec::with_capacity(n);
        let mut pi = pos.into_iter();
        let mut ni = neg.into_iter();
        loop {
            match (pi.next(), ni.next()) {
                (None, None) => break,
                (a, b) => out.extend(a.into_iter().chain(b)),
            }
        }
        Ok(out)
    };
    let mut samples = split(n_train, &mut stats)?;
    samples.extend(split(n_test, &mut stats)?);
    Ok((
        Dataset {
            samples,
            train: (0..n_train).collect(),
            test: (n_train..n_train + n_test).collect(),
            meta: Some(GeneratorMeta {
                d: n_features,
                delta: gap,
                seed,
                v_seed,
                reps,
            }),
        },
        stats,
    ))
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn n_labels(&self) -> usize {
        self.samples.first().map_or(0, |s| s.y.len())
    }

    fn check(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(QntkError::Invalid("training split is empty".into()));
        }
        if self.train.iter().any(|i| self.test.contains(i)) {
            return Err(QntkError::Invalid("train and test splits overlap".into()));
        }
        Ok(())
    }

    /// Serializes with 17 significant digits. Rows must be ordered training first.
    pub fn to_csv(&self) -> Result<String> {
        self.check()?;
        let contiguous = self.train.iter().copied().eq(0..self.train.len())
            && self.test.iter().copied().eq(self.train.len()..self.samples.len());
        if !contiguous {
            return Err(QntkError::Invalid("CSV layout needs training rows first, then test rows".into()));
        }
        let mut out = String::new();
        if let Some(m) = &self.meta {
            let _ = writeln!(
                out,
                "# adhoc d={} delta={:.16e} seed={} v_seed={} reps={}",
                m.d, m.delta, m.seed, m.v_seed, m.reps
            );
        }
        let _ = writeln!(out, "# split train={} test={}", self.train.len(), self.test.len());
        let d = self.n_features();
        let cols: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        let ys: Vec<String> = if self.n_labels() == 1 {
            vec!["y".into()]
        } else {
            (0..self.n_labels()).map(|i| format!("y{i}")).collect()
        };
        let _ = writeln!(out, "{},{}", cols.join(","), ys.join(","));
        for s in &self.samples {
            let row: Vec<String> = s.x.iter().chain(&s.y).map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut meta = None;
        let mut split: Option<(usize, usize)> = None;
        let mut header: Option<(usize, usize)> = None;
        let mut samples = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let perr = |message: String| QntkError::Parse { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(kv) = rest.strip_prefix("adhoc") {
                    meta = Some(parse_meta(kv).map_err(perr)?);
                } else if let Some(kv) = rest.strip_prefix("split") {
                    let f = parse_kv(kv).map_err(&perr)?;
                    let get = |key: &str| -> Result<usize> {
                        f.iter()
                            .find(|(k, _)| k == key)
                            .and_then(|(_, v)| v.parse().ok())
                            .ok_or_else(|| perr(format!("split line lacks {key}=")))
                    };
                    split = Some((get("train")?, get("test")?));
                }
                continue;
            }
            match header {
                None => {
                    let names: Vec<&str> = line.split(',').map(str::trim).collect();
                    let n_x = names.iter().take_while(|n| n.starts_with('x')).count();
                    let n_y = names[n_x..].iter().filter(|n| n.starts_with('y')).count();
                    if n_y == 0 || n_x + n_y != names.len() {
                        return Err(perr("header must be x0,...,x{d-1} followed by label columns y".into()));
                    }
                    if n_x == 0 {
                        return Err(perr("header has no feature columns".into()));
                    }
                    header = Some((n_x, n_y));
                }
                Some((n_x, n_y)) => {
                    let vals: Vec<f64> = line
                        .split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|_| perr(format!("bad number {v:?}"))))
                        .collect::<Result<_>>()?;
                    if vals.len() != n_x + n_y {
                        return Err(perr(format!("expected {} columns, found {}", n_x + n_y, vals.len())));
                    }
                    samples.push(LabeledSample {
                        x: vals[..n_x].to_vec(),
                        y: vals[n_x..].to_vec(),
                    });
                }
            }
        }
        if header.is_none() {
            return Err(QntkError::Parse {
                line: text.lines().count().max(1),
                message: "missing column header".into(),
            });
        }
        let n = samples.len();
        let (n_train, n_test) = split.unwrap_or((n, 0));
        if n_train + n_test != n {
            return Err(QntkError::Parse {
                line: 1,
                message: format!("split declares {} rows, file has {n}", n_train + n_test),
            });
        }
        let ds = Dataset {
            samples,
            train: (0..n_train).collect(),
            test: (n_train..n).collect(),
            meta,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn parse_kv(s: &str) -> std::result::Result<Vec<(String, String)>, String> {
    s.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("expected key=value, got {tok:?}"))
        })
        .collect()
}

fn parse_meta(s: &str) -> std::result::Result<GeneratorMeta, String> {
    let kv = parse_kv(s)?;
    let get = |key: &str| {
        kv.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format!("metadata lacks {key}="))
    };
    let num = |key: &str| -> std::result::Result<u64, String> {
        get(key)?.parse().map_err(|_| format!("bad {key}"))
    };
    Ok(GeneratorMeta {
        d: num("d")? as usize,
        delta: get("delta")?.parse().map_err(|_| "bad delta".to_string())?,
        seed: num("seed")?,
        v_seed: num("v_seed")?,
        reps: get("reps").ok().map_or(Ok(2), |v| v.parse().map_err(|_| "bad reps".to_string()))?,
    })
}
