//! One experiment run per mode; every run writes its artifacts plus `manifest.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qntk_core::ansatz::ReferenceFrame;
use qntk_core::data::adhoc_generate;
use qntk_core::dynamics::{
    algorithm_projectors, asymptotic_output, dqntk_asymptotic_output, predict_dqntk_learning, predict_dqntk_optimization,
    predict_frozen_learning, predict_frozen_optimization, prediction_csv, train, DescentConfig, Orientation, Problem,
    TrainingTrace,
};
use qntk_core::hybrid::{width_scan, AnsatzDistribution, EnsembleSpec, WidthScanConfig};
use qntk_core::kernels::{
    derivative_tensors, frozen_qntk_learning, frozen_qntk_optimization, k_delta_learning, k_delta_optimization,
    meta_kernel_learning, outputs, CompoundIndex,
};
use qntk_core::linalg::SymEigen;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{DistributionKind, ExperimentConfig, Mode};
use crate::error::{LabError, Result};
use crate::experiment::*;
use crate::plot::{Chart, Series};

/// Output directory plus the list of files written into it.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    plots: bool,
}

impl Artifacts {
    fn new(dir: &Path, plots: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            plots,
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn plot(&mut self, name: &str, chart: Chart) -> Result<()> {
        if self.plots {
            self.write(name, &chart.to_svg())?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    mode: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    results: Value,
    files: &'a [String],
}

/// Runs one experiment and returns the `results` block of its manifest.
pub fn run(mode: Mode, cfg: &ExperimentConfig) -> Result<Value> {
    let mut art = Artifacts::new(&cfg.output.dir, cfg.output.plots)?;
    let results = match mode {
        Mode::Optimize => optimize(cfg, &mut art)?,
        Mode::Learn => learn(cfg, &mut art, false)?,
        Mode::Predict => learn(cfg, &mut art, true)?,
        Mode::Kernel => kernel(cfg, &mut art)?,
        Mode::HybridScan => hybrid_scan(cfg, &mut art)?,
        Mode::DatasetGen => dataset_gen(cfg, &mut art)?,
    };
    art.files.push("manifest.json".into());
    let manifest = Manifest {
        mode: mode.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        results: results.clone(),
        files: &art.files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Serialize(e.to_string()))?;
    std::fs::write(art.dir.join("manifest.json"), text + "\n")?;
    Ok(results)
}

fn descent_config(cfg: &ExperimentConfig, eta: f64) -> DescentConfig {
    let d = &cfg.descent;
    DescentConfig {
        learning_rate: eta,
        steps: d.steps,
        record_kernel_every: d.record_kernel_every,
        grad_tol: d.grad_tol,
        record_every: d.record_every,
    }
}

/// `eta`, or `eta_k / lambda_max` of the kernel at the starting parameters.
fn resolve_eta(cfg: &ExperimentConfig, problem: &Problem, phi0: &[f64]) -> Result<(f64, f64)> {
    let lam = problem.kernel(phi0)?.eigen().lambda_max();
    let eta = match cfg.descent.eta_k {
        Some(f) if lam > 0.0 => f / lam,
        Some(_) => return Err(LabError::Config("eta_k needs a nonzero kernel at the start".into())),
        None => cfg.descent.eta,
    };
    Ok((eta, lam))
}

fn framed(cfg: &ExperimentConfig, problem: Problem) -> Result<(Problem, Vec<f64>, Vec<f64>)> {
    let policy = policy_from_config(cfg, problem.n_params());
    let ts = theta_star(&policy, &problem)?;
    let frame = ReferenceFrame::new(ts.clone(), cfg.descent.delta)?;
    let phi0 = initial_phi(cfg, problem.n_params());
    Ok((problem.with_frame(frame)?, ts, phi0))
}

fn residual_chart(title: &str, trace: &TrainingTrace, predictions: &[(&str, &[Vec<f64>])]) -> Chart {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut series = vec![Series::new(
        "measured",
        trace.t.iter().zip(&trace.eps).map(|(&t, e)| (t as f64, norm(e))).collect(),
    )];
    for (name, values) in predictions {
        series.push(
            Series::new(*name, values.iter().enumerate().map(|(t, e)| (t as f64, norm(e))).collect()).dashed(),
        );
    }
    Chart {
        title: title.into(),
        x_label: "step".into(),
        y_label: "|eps|".into(),
        log_y: true,
        series,
        ..Default::default()
    }
}

fn spectrum_chart(trace: &TrainingTrace, frozen_final: &[f64]) -> Chart {
    let m = trace.kernel_eigs.first().map_or(0, |(_, v)| v.len());
    let mut series: Vec<Series> = (0..m)
        .map(|k| {
            Series::new(
                format!("lambda_{}", k + 1),
                trace.kernel_eigs.iter().map(|(t, v)| (*t as f64, v[k])).collect(),
            )
        })
        .collect();
    if let (Some(&(t_end, _)), false) = (trace.kernel_eigs.last(), frozen_final.is_empty()) {
        for (k, &v) in frozen_final.iter().enumerate() {
            series.push(Series::new(format!("frozen_{}", k + 1), vec![(0.0, v), (t_end as f64, v)]).dashed());
        }
    }
    Chart {
        title: "kernel spectrum".into(),
        x_label: "step".into(),
        y_label: "eigenvalue".into(),
        log_y: true,
        series,
        ..Default::default()
    }
}

fn optimize(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Value> {
    let ansatz = build_ansatz(cfg)?;
    let obs = build_observables(cfg)?.swap_remove(0);
    let input = optimization_input(cfg)?;
    let problem = Problem::optimization(ansatz.clone(), input.clone(), obs.clone(), cfg.descent.target)?;
    let (problem, ts, phi0) = framed(cfg, problem)?;
    let (eta, lam0) = resolve_eta(cfg, &problem, &phi0)?;
    let trace = train(&problem, &phi0, &descent_config(cfg, eta))?;
    let frame = problem.frame.clone().expect("frame attached");
    let steps = *trace.t.last().unwrap_or(&0);
    let eps0 = trace.eps[0][0];
    let kf = frozen_qntk_optimization(&ansatz, &frame, &input, &obs)?;
    let k_delta = k_delta_optimization(&ansatz, &frame, &input, &obs, &phi0)?;
    let frozen = predict_frozen_optimization(kf.value, eps0, eta, steps);
    let dq = predict_dqntk_optimization(kf.value, k_delta, eps0, eta, steps);
    let wrap = |v: &[f64]| v.iter().map(|x| vec![*x]).collect::<Vec<_>>();
    let (frozen_v, dq_v) = (wrap(&frozen.values), wrap(&dq));

    art.write("trace.csv", &trace.to_csv())?;
    if !trace.kernel_eigs.is_empty() {
        art.write("spectrum.csv", &trace.spectrum_csv())?;
    }
    art.write("prediction_frozen.csv", &prediction_csv(&frozen_v))?;
    art.write("prediction_dqntk.csv", &prediction_csv(&dq_v))?;
    art.plot(
        "residual.svg",
        residual_chart("optimization residual", &trace, &[("frozen", &frozen_v), ("dQNTK", &dq_v)]),
    )?;

    let final_eps = trace.final_eps()[0];
    Ok(json!({
        "eta": eta,
        "eta_lambda_max_start": eta * lam0,
        "theta_star": ts,
        "phi0": phi0,
        "steps_run": steps,
        "stopped_at": trace.stopped_at,
        "initial_eps": eps0,
        "final_eps": final_eps,
        "final_abs_eps": final_eps.abs(),
        "final_z": trace.z.last().map(|z| z[0]),
        "frozen_kernel": kf.value,
        "k_delta": k_delta,
        "tau_c": frozen.tau_c.is_finite().then_some(frozen.tau_c),
        "oscillatory": frozen.oscillatory,
        "warnings": trace.warnings,
    }))
}

fn learn(cfg: &ExperimentConfig, art: &mut Artifacts, full_prediction: bool) -> Result<Value> {
    let ansatz = build_ansatz(cfg)?;
    let obs = build_observables(cfg)?;
    let ds = load_dataset(cfg)?;
    let data = learning_data(cfg, &ds, obs.len())?;
    let problem = Problem::learning(ansatz.clone(), data.train_inputs.clone(), obs.clone(), data.train_labels.clone())?;
    let (problem, ts, phi0) = framed(cfg, problem)?;
    let (eta, lam0) = resolve_eta(cfg, &problem, &phi0)?;
    let trace = train(&problem, &phi0, &descent_config(cfg, eta))?;
    let frame = problem.frame.clone().expect("frame attached");
    let steps = *trace.t.last().unwrap_or(&0);
    let eps0 = trace.eps[0].clone();

    let k_frozen = frozen_qntk_learning(&ansatz, &frame, &data.train_inputs, &obs)?;
    let frozen = predict_frozen_learning(&k_frozen.matrix, &eps0, eta, steps)?;
    let theta_final = trace.theta.last().cloned().unwrap_or_else(|| ts.clone());
    let final_frame = ReferenceFrame::new(theta_final.clone(), frame.delta)?;
    let k_final = frozen_qntk_learning(&ansatz, &final_frame, &data.train_inputs, &obs)?;
    let final_eigs = k_final.eigenvalues();

    art.write("trace.csv", &trace.to_csv())?;
    if !trace.kernel_eigs.is_empty() {
        art.write("spectrum.csv", &trace.spectrum_csv())?;
    }
    art.write("frozen_spectrum.csv", &k_final.spectrum_csv())?;
    art.write("prediction_frozen.csv", &prediction_csv(&frozen.values))?;

    let mut results = json!({
        "eta": eta,
        "eta_lambda_max_start": eta * lam0,
        "theta_star": ts,
        "phi0": phi0,
        "steps_run": steps,
        "stopped_at": trace.stopped_at,
        "n_train_indices": problem.n_outputs(),
        "n_params": problem.n_params(),
        "initial_loss": trace.loss[0],
        "final_loss": trace.loss.last(),
        "frozen_rank": k_frozen.rank(),
        "final_frozen_eigenvalues": final_eigs,
        "warnings": trace.warnings,
    });

    let mut predictions: Vec<(&str, Vec<Vec<f64>>)> = vec![("frozen", frozen.values.clone())];
    if full_prediction {
        let extra = second_order(cfg, art, &trace, &frame, &data, &obs, eta, steps)?;
        if let Some(dq) = extra.0 {
            predictions.push(("dQNTK", dq));
        }
        results["second_order"] = extra.1;
    }
    let refs: Vec<(&str, &[Vec<f64>])> = predictions.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    art.plot("residual.svg", residual_chart("training residual", &trace, &refs))?;
    art.plot("spectrum.svg", spectrum_chart(&trace, &final_eigs))?;
    Ok(results)
}

/// dQNTK residual prediction plus frozen and second-order asymptotic outputs on
/// every training and held-out index.
#[allow(clippy::too_many_arguments)]
fn second_order(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    trace: &TrainingTrace,
    frame: &ReferenceFrame,
    data: &LearningData,
    obs: &[qntk_core::quantum::PauliObservable],
    eta: f64,
    steps: usize,
) -> Result<(Option<Vec<Vec<f64>>>, Value)> {
    let ansatz = build_ansatz(cfg)?;
    let phi0 = &trace.params[0];
    let eps0 = &trace.eps[0];
    let n_obs = obs.len();
    let n_train = data.train_inputs.len() * n_obs;
    let all_inputs: Vec<_> = data.train_inputs.iter().chain(&data.test_inputs).cloned().collect();
    let tensors = derivative_tensors(&ansatz, frame, &all_inputs, obs)?;
    let train_pos: Vec<usize> = (0..n_train).collect();

    let train_tensors = derivative_tensors(&ansatz, frame, &data.train_inputs, obs)?;
    let kd = k_delta_learning(&train_tensors, phi0)?;
    let k_train = train_tensors.frozen_kernel();
    let dq = predict_dqntk_learning(&k_train.matrix, &kd.matrix, eps0, eta, steps)?;
    art.write("prediction_dqntk.csv", &prediction_csv(&dq.values))?;

    let k_full = tensors.frozen_kernel().matrix;
    let z0 = outputs(&ansatz, &frame.theta(phi0), &all_inputs, obs)?;
    let frozen = asymptotic_output(&k_full, &train_pos, eps0, &z0, Orientation::TargetMinusOutput)?;
    let mut notes = Vec::new();
    let dq_inf = match algorithm_projectors(&k_train.matrix, eta) {
        Ok(proj) => {
            let mu = meta_kernel_learning(&tensors);
            Some(dqntk_asymptotic_output(&k_full, &train_pos, &mu, &proj, eps0, &z0, Orientation::TargetMinusOutput)?)
        }
        Err(e) => {
            notes.push(format!("second-order asymptotic output skipped: {e}"));
            None
        }
    };
    let theta_final = trace.theta.last().expect("nonempty trace");
    let z_final = outputs(&ansatz, theta_final, &all_inputs, obs)?;
    let labels: Vec<f64> = data.train_labels.iter().chain(&data.test_labels).copied().collect();

    let mut csv = String::from("index,sample,observable,split,label,z0,z_frozen,z_dqntk,z_trained\n");
    for (k, ix) in CompoundIndex::enumerate(all_inputs.len(), n_obs).iter().enumerate() {
        let split = if k < n_train { "train" } else { "test" };
        let dqv = dq_inf.as_ref().map_or(String::from("nan"), |o| format!("{:e}", o.z_inf[k]));
        let _ = writeln!(
            csv,
            "{k},{},{},{split},{:e},{:e},{:e},{dqv},{:e}",
            ix.sample, ix.observable, labels[k], z0[k], frozen.z_inf[k], z_final[k]
        );
    }
    art.write("asymptotic.csv", &csv)?;

    let held_out_err = |z: &[f64]| -> Option<f64> {
        (n_train < z.len()).then(|| {
            (n_train..z.len())
                .map(|k| (z[k] - z_final[k]).abs())
                .fold(0.0, f64::max)
        })
    };
    Ok((
        Some(dq.values),
        json!({
            "k_delta_norm": SymEigen::new(&kd.matrix).values.iter().map(|v| v.abs()).fold(0.0, f64::max),
            "frozen_non_convergent": frozen.non_convergent,
            "held_out_max_diff_frozen": held_out_err(&frozen.z_inf),
            "held_out_max_diff_dqntk": dq_inf.as_ref().and_then(|o| held_out_err(&o.z_inf)),
            "notes": notes,
        }),
    ))
}

fn kernel(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Value> {
    let ansatz = build_ansatz(cfg)?;
    let obs = build_observables(cfg)?;
    let ds = load_dataset(cfg)?;
    let data = learning_data(cfg, &ds, obs.len())?;
    let problem = Problem::learning(ansatz.clone(), data.train_inputs.clone(), obs.clone(), data.train_labels)?;
    let policy = policy_from_config(cfg, problem.n_params());
    let ts = theta_star(&policy, &problem)?;
    let frame = ReferenceFrame::new(ts.clone(), cfg.descent.delta)?;
    let k = frozen_qntk_learning(&ansatz, &frame, &data.train_inputs, &obs)?;
    let eig = k.eigen();
    art.write("kernel.csv", &k.to_csv())?;
    art.write("spectrum.csv", &k.spectrum_csv())?;
    let values = eig.values.clone();
    art.plot(
        "spectrum.svg",
        Chart {
            title: "kernel eigenvalues".into(),
            x_label: "rank".into(),
            y_label: "eigenvalue".into(),
            log_y: true,
            series: vec![Series::new(
                "eigenvalue",
                values.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
            )],
            ..Default::default()
        },
    )?;
    Ok(json!({
        "theta_star": ts,
        "size": k.size(),
        "n_params": ansatz.n_params(),
        "rank": k.rank(),
        "rank_cutoff": eig.cutoff(),
        "lambda_max": eig.lambda_max(),
        "max_asymmetry": k.max_asymmetry(),
        "symmetric_psd": k.is_symmetric_psd(),
        "eigenvalues": values,
    }))
}

fn hybrid_scan(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Value> {
    let h = &cfg.hybrid;
    let scan_cfg = WidthScanConfig {
        widths: h.widths.clone(),
        n_qubits: h.qubits,
        depth: h.depth,
        ensemble: EnsembleSpec {
            n_samples: h.samples,
            seed: cfg.seed,
            c_w: h.c_w,
            c_b: h.c_b,
            ansatz_distribution: match h.distribution {
                DistributionKind::RandomAngles => AnsatzDistribution::RandomAngles,
                DistributionKind::RandomPauliLayers => AnsatzDistribution::RandomPauliLayers,
            },
        },
        out_dim: h.out_dim,
        points: vec![h.point.clone()],
        feature_map_reps: h.feature_map_reps,
        gaussian_control: h.gaussian_control,
    };
    let scan = width_scan(&scan_cfg)?;
    art.write("scan.csv", &scan.to_csv())?;
    let mut summary = scan.summary();
    summary.push('\n');
    for n in &scan.notes {
        summary.push_str(n);
        summary.push('\n');
    }
    art.write("summary.txt", &summary)?;
    art.plot(
        "scan.svg",
        Chart {
            title: "normalized connected four-point function".into(),
            x_label: "width".into(),
            y_label: "|E_conn| / E2".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::new(
                "estimate",
                scan.estimates.iter().map(|e| (e.width as f64, e.normalized.abs())).collect(),
            )],
        },
    )?;
    Ok(json!({
        "slope": scan.slope,
        "slope_se": scan.slope_se,
        "slope_ci": [scan.slope_ci.0, scan.slope_ci.1],
        "unreliable": scan.unreliable,
        "notes": scan.notes,
    }))
}

fn dataset_gen(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Value> {
    let d = &cfg.data;
    let seed = d.seed.unwrap_or(cfg.seed);
    let (ds, stats) = adhoc_generate(cfg.circuit.qubits, d.n_train, d.n_test, d.gap, seed, d.v_seed)?;
    art.write("dataset.csv", &ds.to_csv()?)?;
    Ok(json!({
        "n_samples": ds.samples.len(),
        "draws": stats.draws,
        "gap_rejections": stats.gap_rejections,
        "acceptance_rate": stats.acceptance_rate(),
    }))
}
