use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use toric_learn::exact::SolveOptions;
use toric_learn::learner::{
    correct_iteratively, evaluate_rmse, generate_dataset, Backend, CorrectionTrace, DataSource,
    ExactBackend, FieldKind, FieldSpec, NoisyBackend, SolvableBackend,
};
use toric_learn::metrics::{fit_er_polynomial, sample_p_curve, single_qubit_error, write_curve_csv, ErPolynomial};
use toric_learn::network::{gradient_check, train, Dataset, RegressorModel};
use toric_learn::phase::{detect_transition, scan_transition, Scan};
use toric_learn::{Lattice, Seed};

use crate::config::{BackendKind, RunConfig};
use crate::output::Outputs;
use crate::CliError;

/// Target redraws allowed when a minimum initial error is requested.
const MAX_DRAWS: u64 = 50;

fn load_model(path: &Path) -> Result<RegressorModel, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    RegressorModel::load(BufReader::new(f)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

pub fn gen_data(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let lattice = Lattice::new(cfg.k)?;
    info!("generating {} rows at k = {}", cfg.dataset.spec.n, cfg.k);
    let data = generate_dataset(&lattice, &cfg.dataset.spec, &cfg.data_source(), Seed(cfg.seed))?;
    let mut out = Outputs::create(cfg.output_dir("gen-data"))?;
    out.write("dataset.csv", |w| Ok(data.write_csv(w)?))?;
    out.write_json("dataset.json", &data.meta)?;
    out.finish("gen-data", cfg, &[])
}

#[derive(Serialize)]
struct TrainSummary {
    n_rows: usize,
    steps: usize,
    best_step: usize,
    best_eval_loss: f64,
    final_train_loss: f64,
    /// Relative change of the mean eval loss across the last two 1000-step windows.
    plateau_change: Option<f64>,
    gradient_check_max_rel_err: f64,
}

pub fn train_cmd(cfg: &RunConfig, data_path: &Path) -> Result<PathBuf, CliError> {
    let data = Dataset::load(data_path).map_err(|e| CliError::Io(format!("{}: {e}", data_path.display())))?;
    info!("training on {} rows for {} steps", data.rows.len(), cfg.train.steps);
    let init = RegressorModel::default_init(Seed(cfg.seed));
    let grad_err = gradient_check(&init, &data.rows[..data.rows.len().min(32)], 40, 1e-6, Seed(cfg.seed).child(1));
    let report = train(init, &data, &cfg.train)?;
    let summary = TrainSummary {
        n_rows: data.rows.len(),
        steps: cfg.train.steps,
        best_step: report.best_step,
        best_eval_loss: report.best_eval_loss,
        final_train_loss: report.trace.last().map_or(f64::NAN, |r| r.train_loss),
        plateau_change: report.eval_plateau_change(1000),
        gradient_check_max_rel_err: grad_err,
    };
    let mut out = Outputs::create(cfg.output_dir("train"))?;
    out.write("model.json", |w| Ok(report.model.save(w)?))?;
    out.write_csv("loss_trace.csv", &report.trace)?;
    out.write_json("train_summary.json", &summary)?;
    let sidecar = Dataset::sidecar_path(data_path);
    out.finish("train", cfg, &[data_path, &sidecar])
}

fn backend_for(cfg: &RunConfig, kind: BackendKind, lattice: &Lattice, spec: FieldSpec, seed: Seed)
    -> Result<Box<dyn Backend>, CliError>
{
    let fields = spec.draw(lattice, seed.child(0))?;
    Ok(match kind {
        BackendKind::Solvable => Box::new(SolvableBackend::new(lattice.clone(), fields, cfg.mc, seed.child(1))?),
        _ => Box::new(ExactBackend::new(lattice.clone(), fields, SolveOptions::default())?),
    })
}

/// A noise-free backend holding a random target, redrawn until its initial
/// error exceeds the configured minimum.
fn draw_target(cfg: &RunConfig, kind: BackendKind, lattice: &Lattice, spec: FieldSpec, seed: Seed)
    -> Result<Box<dyn Backend>, CliError>
{
    let Some(min) = cfg.correction.min_initial_error else {
        return backend_for(cfg, kind, lattice, spec, seed);
    };
    for attempt in 0..MAX_DRAWS {
        let mut b = backend_for(cfg, kind, lattice, spec, seed.child(attempt))?;
        let e = single_qubit_error(&b.measure()?, &cfg.protocol.polynomial);
        if e.bit.max(e.phase) > min {
            return Ok(b);
        }
    }
    Err(CliError::Config(format!(
        "correction.min_initial_error: no target above {min} in {MAX_DRAWS} draws; raise correction.fields.scale"
    )))
}

fn run_correction(
    cfg: &RunConfig,
    lattice: &Lattice,
    model: &RegressorModel,
    spec: FieldSpec,
    kind: BackendKind,
    seed: Seed,
    sigma: f64,
) -> Result<CorrectionTrace, CliError> {
    let base = draw_target(cfg, kind, lattice, spec, seed)?;
    let mut backend: Box<dyn Backend> = if sigma > 0.0 {
        Box::new(NoisyBackend::new(base, sigma, seed.child(1_000_000))?)
    } else {
        base
    };
    Ok(correct_iteratively(&mut *backend, model, &cfg.protocol)?)
}

#[derive(Serialize)]
struct SeedOutcome {
    seed: usize,
    sigma: f64,
    iterations: usize,
    initial_bit: f64,
    initial_phase: f64,
    final_bit: f64,
    final_phase: f64,
    initial_delta_h: Option<f64>,
    final_delta_h: Option<f64>,
}

impl SeedOutcome {
    fn of(seed: usize, sigma: f64, t: &CorrectionTrace) -> Self {
        let (first, last) = (&t.records[0], t.last());
        SeedOutcome {
            seed,
            sigma,
            iterations: last.iter,
            initial_bit: first.error.bit,
            initial_phase: first.error.phase,
            final_bit: last.error.bit,
            final_phase: last.error.phase,
            initial_delta_h: first.delta_h,
            final_delta_h: last.delta_h,
        }
    }
}

pub fn correct(cfg: &RunConfig, model_path: &Path) -> Result<PathBuf, CliError> {
    let model = load_model(model_path)?;
    let lattice = Lattice::new(cfg.k)?;
    let mut out = Outputs::create(cfg.output_dir("correct"))?;
    let mut rows = Vec::new();
    for s in 0..cfg.correction.n_seeds {
        let seed = Seed(cfg.seed).child(s as u64);
        let sigma = cfg.correction.noise_sigma;
        let trace = run_correction(cfg, &lattice, &model, cfg.correction.fields, cfg.backend(), seed, sigma)?;
        let o = SeedOutcome::of(s, sigma, &trace);
        info!(
            "seed {s}: bit {:.3e} → {:.3e}, phase {:.3e} → {:.3e}",
            o.initial_bit, o.final_bit, o.initial_phase, o.final_phase
        );
        out.write(&format!("trace_{s}.jsonl"), |w| Ok(trace.write_jsonl(w)?))?;
        out.write(&format!("trace_{s}.csv"), |w| Ok(trace.write_summary_csv(w)?))?;
        rows.push(o);
    }
    out.write_csv("summary.csv", &rows)?;
    out.finish("correct", cfg, &[model_path])
}

#[derive(Serialize)]
struct SigmaSummary {
    sigma: f64,
    n_seeds: usize,
    mean_final_bit: f64,
    mean_final_phase: f64,
    /// Seeds whose final bit and phase errors are both below 5%.
    n_below_5pct: usize,
}

pub fn noise_sweep(cfg: &RunConfig, model_path: &Path) -> Result<PathBuf, CliError> {
    let model = load_model(model_path)?;
    let lattice = Lattice::new(cfg.k)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &sigma in &cfg.noise.sigmas {
        let mut these = Vec::new();
        for s in 0..cfg.noise.n_seeds {
            let seed = Seed(cfg.seed).child(s as u64);
            let trace = run_correction(cfg, &lattice, &model, cfg.correction.fields, cfg.backend(), seed, sigma)?;
            these.push(SeedOutcome::of(s, sigma, &trace));
        }
        let n = these.len() as f64;
        let s = SigmaSummary {
            sigma,
            n_seeds: these.len(),
            mean_final_bit: these.iter().map(|o| o.final_bit).sum::<f64>() / n,
            mean_final_phase: these.iter().map(|o| o.final_phase).sum::<f64>() / n,
            n_below_5pct: these.iter().filter(|o| o.final_bit < 0.05 && o.final_phase < 0.05).count(),
        };
        info!("sigma {sigma}: mean bit {:.3e}, mean phase {:.3e}", s.mean_final_bit, s.mean_final_phase);
        summary.push(s);
        rows.extend(these);
    }
    let mut out = Outputs::create(cfg.output_dir("noise-sweep"))?;
    out.write_csv("noise_sweep.csv", &rows)?;
    out.write_csv("noise_summary.csv", &summary)?;
    out.finish("noise-sweep", cfg, &[model_path])
}

#[derive(Serialize)]
struct ScalingRow {
    k: usize,
    source: &'static str,
    n_rows: usize,
    best_step: usize,
    best_eval_loss: f64,
    heldout_rmse: f64,
    initial_bit: f64,
    initial_phase: f64,
    final_bit: f64,
    final_phase: f64,
    final_delta_h: Option<f64>,
}

pub fn scaling(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let mut out = Outputs::create(cfg.output_dir("scaling"))?;
    let mut rows = Vec::new();
    for &k in &cfg.scaling.ks {
        let lattice = Lattice::new(k)?;
        let (source, label) = match cfg.data_source() {
            DataSource::Enumeration if k <= 4 => (DataSource::Enumeration, "enumeration"),
            _ => (DataSource::MonteCarlo(cfg.mc), "monte_carlo"),
        };
        let seed = Seed(cfg.seed).child(k as u64);
        info!("k = {k}: generating {} rows", cfg.dataset.spec.n);
        let data = generate_dataset(&lattice, &cfg.dataset.spec, &source, seed.child(0))?;
        let report = train(RegressorModel::default_init(Seed(cfg.seed)), &data, &cfg.train)?;
        let held_spec = toric_learn::learner::DatasetSpec { n: cfg.scaling.n_heldout, ..cfg.dataset.spec };
        let held = generate_dataset(&lattice, &held_spec, &source, seed.child(1))?;
        let rmse = evaluate_rmse(&report.model, &held)?;
        let kind = if k <= 3 { BackendKind::Exact } else { BackendKind::Solvable };
        let spec = FieldSpec { kind: FieldKind::Star, scale: cfg.scaling.correction_scale };
        let trace = run_correction(cfg, &lattice, &report.model, spec, kind, seed.child(2), 0.0)?;
        let o = SeedOutcome::of(0, 0.0, &trace);
        info!("k = {k}: held-out RMSE {rmse:.4}, phase error {:.3e} → {:.3e}", o.initial_phase, o.final_phase);
        out.write(&format!("model_k{k}.json"), |w| Ok(report.model.save(w)?))?;
        rows.push(ScalingRow {
            k,
            source: label,
            n_rows: data.rows.len(),
            best_step: report.best_step,
            best_eval_loss: report.best_eval_loss,
            heldout_rmse: rmse,
            initial_bit: o.initial_bit,
            initial_phase: o.initial_phase,
            final_bit: o.final_bit,
            final_phase: o.final_phase,
            final_delta_h: o.final_delta_h,
        });
    }
    out.write_csv("scaling.csv", &rows)?;
    out.finish("scaling", cfg, &[])
}

#[derive(Serialize)]
struct ErCompare {
    p: f64,
    fitted: f64,
    published: f64,
    /// Inverse of the independent-edge parity relation.
    analytic: f64,
}

pub fn fit_er(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let lattice = Lattice::new(cfg.er.k)?;
    let grid = linspace(0.0, cfg.er.e_max, cfg.er.grid_points);
    let curve = sample_p_curve(&lattice, &grid, cfg.er.n_trials, Seed(cfg.seed))?;
    let poly = fit_er_polynomial(&curve, Some(cfg.er.k))?;
    let published = ErPolynomial::published();
    let compare: Vec<ErCompare> = (0..=35)
        .map(|j| {
            let p = j as f64 / 100.0;
            ErCompare {
                p,
                fitted: poly.eval(p),
                published: published.eval(p),
                analytic: (1.0 - (1.0 - 2.0 * p).powf(0.25)) / 2.0,
            }
        })
        .collect();
    info!("fitted e_r(0.1) = {:.5}", poly.eval(0.1));
    let mut out = Outputs::create(cfg.output_dir("fit-er"))?;
    out.write("p_curve.csv", |w| Ok(write_curve_csv(w, &curve)?))?;
    out.write("er_polynomial.json", |w| Ok(poly.to_json(w)?))?;
    out.write_csv("er_compare.csv", &compare)?;
    out.finish("fit-er", cfg, &[])
}

#[derive(Serialize)]
struct AverageRow {
    beta: f64,
    cv: f64,
    cv_stderr: f64,
    spread_lo: f64,
    spread_hi: f64,
}

pub fn phase_scan(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let p = &cfg.phase;
    let grid = linspace(p.beta_min, p.beta_max, p.n_beta);
    let mut out = Outputs::create(cfg.output_dir("phase-scan"))?;
    let mut scans: Vec<Scan> = Vec::new();
    for k in [p.k_small, p.k_large] {
        info!("scanning {} at k = {k}", p.model.label());
        let lattice = Lattice::new(k)?;
        let scan = scan_transition(&lattice, p.model, &grid, &cfg.mc, p.n_realizations, Seed(cfg.seed).child(k as u64))?;
        out.write(&format!("scan_k{k}.csv"), |w| Ok(scan.write_csv(w)?))?;
        let avg: Vec<AverageRow> = scan
            .average
            .iter()
            .map(|a| AverageRow {
                beta: a.beta,
                cv: a.cv,
                cv_stderr: a.cv_stderr,
                spread_lo: a.spread.0,
                spread_hi: a.spread.1,
            })
            .collect();
        out.write_csv(&format!("average_k{k}.csv"), &avg)?;
        scans.push(scan);
    }
    let detection = detect_transition(&scans[0], &scans[1]);
    info!("transition: {} ({})", detection.transition, detection.reason);
    out.write_json(
        "detection.json",
        &serde_json::json!({
            "model": p.model,
            "peaks": scans.iter().map(|s| serde_json::json!({"k": s.k, "peak": s.peak})).collect::<Vec<_>>(),
            "detection": detection,
        }),
    )?;
    out.finish("phase-scan", cfg, &[])
}
