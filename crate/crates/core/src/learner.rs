//! Training-set generation, field inference and the iterative correction
//! protocol over an abstract measurement backend.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{enumerate_solvable, ground_state, measurements_of, SolveOptions, StartVector};
use crate::fields::{FieldConfig, Sectors, B_CAP};
use crate::gibbs::{estimate_sector, sample_measurements, McParams, Observables};
use crate::lattice::Lattice;
use crate::measurement::MeasurementSet;
use crate::metrics::{csv_error, hamiltonian_error, single_qubit_error, ErPolynomial, QubitError};
use crate::network::{Dataset, DatasetMeta, RegressorModel, Row};
use crate::rng::Seed;

/// Edge whose field labels every training row.
pub const REFERENCE_EDGE: usize = 0;

/// Where training triples come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    MonteCarlo(McParams),
    /// Exact group-sum enumeration, k ≤ 4.
    Enumeration,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldDraw {
    /// Every edge iid uniform in `[-b_max, b_max]`.
    #[default]
    Uniform,
    /// Per row, a scale `s = b_max · 10^{-u·decades}` with `u ~ U(0, 1)`,
    /// then every edge iid uniform in `[-s, s]`.
    Multiscale { decades: f64 },
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n: usize,
    pub b_max: f64,
    pub draw: FieldDraw,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n: 7450,
            b_max: 1.7,
            draw: FieldDraw::Uniform,
        }
    }
}

fn draw_fields(lattice: &Lattice, spec: &DatasetSpec, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    let scale = match spec.draw {
        FieldDraw::Uniform => spec.b_max,
        FieldDraw::Multiscale { decades } => spec.b_max * 10f64.powf(-decades * rng.random::<f64>()),
        FieldDraw::Zero => return vec![0.0; lattice.n_edges()],
    };
    (0..lattice.n_edges())
        .map(|_| rng.random_range(-scale..=scale))
        .collect()
}

/// Which sectors carry fields in a correction target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    #[default]
    Mixed,
    Star,
    Plaquette,
    Zero,
}

/// Random target fields, iid uniform in `[-scale, scale]` on the active sectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub scale: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec { kind: FieldKind::Mixed, scale: 1.7 }
    }
}

impl FieldSpec {
    pub fn draw(&self, lattice: &Lattice, seed: Seed) -> Result<FieldConfig> {
        if !(self.scale >= 0.0 && self.scale <= B_CAP) {
            return Err(Error::InvalidArgument(format!(
                "field scale {} outside [0, {B_CAP}]",
                self.scale
            )));
        }
        let n = lattice.n_edges();
        let mut rng = seed.rng();
        let mut side = |on: bool| -> Vec<f64> {
            (0..n)
                .map(|_| if on { rng.random_range(-self.scale..=self.scale) } else { 0.0 })
                .collect()
        };
        let (z, x) = match self.kind {
            FieldKind::Mixed => (true, true),
            FieldKind::Star => (true, false),
            FieldKind::Plaquette => (false, true),
            FieldKind::Zero => (false, false),
        };
        let bz = side(z);
        let bx = side(x);
        Ok(FieldConfig { bz, bx })
    }
}

/// Star triple at the reference edge for star fields `bz`.
fn reference_triple(lattice: &Lattice, bz: &[f64], source: &DataSource, seed: Seed) -> Result<[f64; 3]> {
    match source {
        DataSource::MonteCarlo(mc) => {
            let obs = Observables::edge_triple(lattice, REFERENCE_EDGE)?;
            let est = estimate_sector(lattice, bz, mc, seed, &obs)?;
            Ok([est.stabilizer[0].0, est.stabilizer[1].0, est.pair[0].0])
        }
        DataSource::Enumeration => {
            enumerate_solvable(lattice, bz)?.measurements.star_triple(lattice, REFERENCE_EDGE)
        }
    }
}

/// Rows of `(⟨A_s⟩, ⟨A_s'⟩, ⟨A_s A_s'⟩) → |b_0|` for random star-only fields.
pub fn generate_dataset(
    lattice: &Lattice,
    spec: &DatasetSpec,
    source: &DataSource,
    seed: Seed,
) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("dataset size must be positive".into()));
    }
    if !(spec.b_max > 0.0 && spec.b_max <= B_CAP) {
        return Err(Error::InvalidArgument(format!(
            "b_max = {} outside (0, {B_CAP}]",
            spec.b_max
        )));
    }
    let make_row = |j: usize| -> Result<Row> {
        let row_seed = seed.child(j as u64);
        let bz = draw_fields(lattice, spec, row_seed.child(0));
        let t = reference_triple(lattice, &bz, source, row_seed.child(1))?;
        Ok(Row {
            input: t.map(|x| x.clamp(-1.0, 1.0)),
            label: bz[REFERENCE_EDGE].abs(),
        })
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Row> = {
        use rayon::prelude::*;
        (0..spec.n).into_par_iter().map(make_row).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Row> = (0..spec.n).map(make_row).collect::<Result<_>>()?;

    Ok(Dataset {
        rows,
        meta: DatasetMeta {
            k: Some(lattice.k()),
            b_max: spec.b_max,
            reference_edge: REFERENCE_EDGE,
            mc: match source {
                DataSource::MonteCarlo(mc) => Some(*mc),
                DataSource::Enumeration => None,
            },
            seed: seed.0,
            n_rows: spec.n,
        },
    })
}

/// Root-mean-square error of the clamped network output over a dataset.
pub fn evaluate_rmse(model: &RegressorModel, data: &Dataset) -> Result<f64> {
    let mut s = 0.0;
    for r in &data.rows {
        let y = model.forward(&r.input)?.clamp(0.0, data.meta.b_max);
        s += (y - r.label).powi(2);
    }
    Ok((s / data.rows.len() as f64).sqrt())
}

/// `+1`, `-1`, or `0` when `|value| ≤ deadband`.
pub fn infer_sign(value: f64, deadband: f64) -> i8 {
    if value > deadband {
        1
    } else if value < -deadband {
        -1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferOptions {
    pub deadband: f64,
    /// Upper clamp on estimated magnitudes.
    pub b_max: f64,
    /// Accept a model trained on a different lattice size.
    pub allow_k_mismatch: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            deadband: 0.02,
            b_max: 1.7,
            allow_k_mismatch: false,
        }
    }
}

/// Per-edge field estimates: magnitude from the network on the star
/// (plaquette) triple, sign from `⟨σ^z⟩` (`⟨σ^x⟩`).
pub fn infer_fields(
    model: &RegressorModel,
    ms: &MeasurementSet,
    lattice: &Lattice,
    opts: &InferOptions,
) -> Result<FieldConfig> {
    ms.check_shape(lattice)?;
    if let Some(k) = model.metadata.k {
        if k != lattice.k() && !opts.allow_k_mismatch {
            return Err(Error::InvalidArgument(format!(
                "model was trained for k = {k}, lattice has k = {}",
                lattice.k()
            )));
        }
    }
    let n = lattice.n_edges();
    let mut est = FieldConfig::zeros(n);
    for i in 0..n {
        let sz = infer_sign(ms.star.spin[i], opts.deadband);
        if sz != 0 {
            let m = model.forward(&ms.star_triple(lattice, i)?)?.clamp(0.0, opts.b_max);
            est.bz[i] = f64::from(sz) * m;
        }
        let sx = infer_sign(ms.plaquette.spin[i], opts.deadband);
        if sx != 0 {
            let m = model.forward(&ms.plaquette_triple(lattice, i)?)?.clamp(0.0, opts.b_max);
            est.bx[i] = f64::from(sx) * m;
        }
    }
    Ok(est)
}

/// iid Gaussian noise on every expectation value, clipped to `[-1, 1]`.
pub fn add_measurement_noise(ms: &MeasurementSet, sigma: f64, seed: Seed) -> Result<MeasurementSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be ≥ 0, got {sigma}")));
    }
    let mut out = ms.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = seed.rng();
    for v in out.star.entries_mut().chain(out.plaquette.entries_mut()) {
        *v = (*v + normal.sample(&mut rng)).clamp(-1.0, 1.0);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub mixed_sectors: bool,
    pub max_k: Option<usize>,
}

/// A system whose ground state can be measured and whose fields can be shifted.
pub trait Backend {
    fn name(&self) -> String;
    fn lattice(&self) -> &Lattice;
    fn capabilities(&self) -> Capabilities;
    fn measure(&mut self) -> Result<MeasurementSet>;
    /// `b ← b - delta`.
    fn apply_correction(&mut self, delta: &FieldConfig) -> Result<()>;
    /// Current fields, when the backend knows them.
    fn fields(&self) -> Option<&FieldConfig>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn lattice(&self) -> &Lattice {
        (**self).lattice()
    }

    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn measure(&mut self) -> Result<MeasurementSet> {
        (**self).measure()
    }

    fn apply_correction(&mut self, delta: &FieldConfig) -> Result<()> {
        (**self).apply_correction(delta)
    }

    fn fields(&self) -> Option<&FieldConfig> {
        (**self).fields()
    }
}

fn shift_fields(lattice: &Lattice, fields: &mut FieldConfig, delta: &FieldConfig) -> Result<()> {
    delta.validate(lattice, f64::INFINITY)?;
    let next = fields.minus_scaled(delta, 1.0);
    next.validate(lattice, B_CAP)?;
    *fields = next;
    Ok(())
}

/// Lanczos ground states of the full two-sector Hamiltonian, k ≤ 3.
pub struct ExactBackend {
    lattice: Lattice,
    fields: FieldConfig,
    opts: SolveOptions,
    warm_start: Option<Vec<f64>>,
    cached: Option<MeasurementSet>,
}

impl ExactBackend {
    pub fn new(lattice: Lattice, fields: FieldConfig, opts: SolveOptions) -> Result<Self> {
        fields.validate(&lattice, B_CAP)?;
        crate::exact::operator::check_qubits(&lattice)?;
        Ok(ExactBackend {
            lattice,
            fields,
            opts,
            warm_start: None,
            cached: None,
        })
    }
}

impl Backend for ExactBackend {
    fn name(&self) -> String {
        format!("exact(k={})", self.lattice.k())
    }

    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            mixed_sectors: true,
            max_k: Some(3),
        }
    }

    fn measure(&mut self) -> Result<MeasurementSet> {
        if let Some(ms) = &self.cached {
            return Ok(ms.clone());
        }
        let mut opts = self.opts.clone();
        if let Some(v) = self.warm_start.take() {
            opts.start = StartVector::Given(v);
        }
        let gs = ground_state(&self.lattice, &self.fields, &opts)?;
        let ms = measurements_of(&gs.state, &self.lattice)?;
        self.warm_start = Some(gs.state.into_amplitudes());
        self.cached = Some(ms.clone());
        Ok(ms)
    }

    fn apply_correction(&mut self, delta: &FieldConfig) -> Result<()> {
        shift_fields(&self.lattice, &mut self.fields, delta)?;
        self.cached = None;
        Ok(())
    }

    fn fields(&self) -> Option<&FieldConfig> {
        Some(&self.fields)
    }
}

/// Monte-Carlo measurements of the solvable single-sector model, any k.
pub struct SolvableBackend {
    lattice: Lattice,
    fields: FieldConfig,
    mc: McParams,
    seed: Seed,
    round: u64,
}

impl SolvableBackend {
    pub fn new(lattice: Lattice, fields: FieldConfig, mc: McParams, seed: Seed) -> Result<Self> {
        fields.validate(&lattice, B_CAP)?;
        mc.validate()?;
        if fields.sectors() == Sectors::Mixed {
            return Err(Error::Unsupported(
                "the solvable backend carries fields in one sector only".into(),
            ));
        }
        Ok(SolvableBackend {
            lattice,
            fields,
            mc,
            seed,
            round: 0,
        })
    }
}

impl Backend for SolvableBackend {
    fn name(&self) -> String {
        format!("solvable(k={})", self.lattice.k())
    }

    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            mixed_sectors: false,
            max_k: None,
        }
    }

    fn measure(&mut self) -> Result<MeasurementSet> {
        self.round += 1;
        sample_measurements(&self.lattice, &self.fields, &self.mc, self.seed.child(self.round))
    }

    fn apply_correction(&mut self, delta: &FieldConfig) -> Result<()> {
        let mut next = self.fields.clone();
        shift_fields(&self.lattice, &mut next, delta)?;
        if next.sectors() == Sectors::Mixed {
            return Err(Error::Unsupported(
                "correction would populate both sectors of the solvable backend".into(),
            ));
        }
        self.fields = next;
        Ok(())
    }

    fn fields(&self) -> Option<&FieldConfig> {
        Some(&self.fields)
    }
}

/// Adds Gaussian noise to every measurement of the wrapped backend.
pub struct NoisyBackend<B> {
    inner: B,
    sigma: f64,
    seed: Seed,
    round: u64,
}

impl<B: Backend> NoisyBackend<B> {
    pub fn new(inner: B, sigma: f64, seed: Seed) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be ≥ 0, got {sigma}")));
        }
        Ok(NoisyBackend {
            inner,
            sigma,
            seed,
            round: 0,
        })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for NoisyBackend<B> {
    fn name(&self) -> String {
        format!("noisy(sigma={}, {})", self.sigma, self.inner.name())
    }

    fn lattice(&self) -> &Lattice {
        self.inner.lattice()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn measure(&mut self) -> Result<MeasurementSet> {
        self.round += 1;
        let ms = self.inner.measure()?;
        add_measurement_noise(&ms, self.sigma, self.seed.child(self.round))
    }

    fn apply_correction(&mut self, delta: &FieldConfig) -> Result<()> {
        self.inner.apply_correction(delta)
    }

    fn fields(&self) -> Option<&FieldConfig> {
        self.inner.fields()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolOptions {
    pub n_iter: usize,
    pub infer: InferOptions,
    /// Fraction of each estimate that is subtracted.
    pub damping: f64,
    pub polynomial: ErPolynomial,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            n_iter: 5,
            infer: InferOptions::default(),
            damping: 1.0,
            polynomial: ErPolynomial::published(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSummary {
    pub mean_star: f64,
    pub mean_plaquette: f64,
    pub max_abs_sz: f64,
    pub max_abs_sx: f64,
}

impl MeasurementSummary {
    pub fn of(ms: &MeasurementSet) -> Self {
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        MeasurementSummary {
            mean_star: ms.star.mean_stabilizer(),
            mean_plaquette: ms.plaquette.mean_stabilizer(),
            max_abs_sz: max_abs(&ms.star.spin),
            max_abs_sx: max_abs(&ms.plaquette.spin),
        }
    }
}

/// State of the system after `iter` corrections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Fields inferred from this iteration's measurements.
    pub estimate: FieldConfig,
    /// True fields still present, when known.
    pub residual: Option<FieldConfig>,
    pub summary: MeasurementSummary,
    pub error: QubitError,
    /// Raw Δ_H between the original Hamiltonian and the accumulated estimates.
    pub delta_h: Option<f64>,
    /// Δ_H divided by its iteration-0 value.
    pub delta_h_rescaled: Option<f64>,
}

impl IterationRecord {
    pub fn max_estimate(&self) -> f64 {
        self.estimate.max_abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub backend: String,
    pub model_seed: u64,
    pub model_k: Option<usize>,
    pub options: ProtocolOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub meta: TraceMeta,
    pub records: Vec<IterationRecord>,
}

#[derive(Serialize)]
struct SummaryRow {
    iter: usize,
    bit_err: f64,
    phase_err: f64,
    #[serde(rename = "delta_H")]
    delta_h: Option<f64>,
    max_field: f64,
}

impl CorrectionTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a trace has an iteration 0")
    }

    /// One JSON object per line: the metadata, then one per iteration.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.meta)?;
        writeln!(w)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// CSV `iter,bit_err,phase_err,delta_H,max_field`; `max_field` is the
    /// largest inferred field magnitude at that iteration.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(SummaryRow {
                iter: r.iter,
                bit_err: r.error.bit,
                phase_err: r.error.phase,
                delta_h: r.delta_h,
                max_field: r.max_estimate(),
            })
            .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Measure, infer, subtract; repeated `n_iter` times. Stops early once every
/// estimate is below the deadband.
pub fn correct_iteratively(
    backend: &mut dyn Backend,
    model: &RegressorModel,
    opts: &ProtocolOptions,
) -> Result<CorrectionTrace> {
    if opts.n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping {} outside (0, 1]",
            opts.damping
        )));
    }
    let lattice = backend.lattice().clone();
    let original = backend.fields().cloned();
    let mut recovered = FieldConfig::zeros(lattice.n_edges());
    let mut records: Vec<IterationRecord> = Vec::new();
    let wrap = |iteration: usize| move |e: Error| Error::Iteration { iteration, source: Box::new(e) };

    for iter in 0..=opts.n_iter {
        let ms = backend.measure().map_err(wrap(iter))?;
        let estimate = infer_fields(model, &ms, &lattice, &opts.infer).map_err(wrap(iter))?;
        let delta_h = match &original {
            Some(f) => Some(hamiltonian_error(f, &recovered, &lattice)?),
            None => None,
        };
        let delta_h_rescaled = match (delta_h, records.first().and_then(|r| r.delta_h)) {
            (Some(d), Some(d0)) if d0 > 0.0 => Some(d / d0),
            (Some(d), None) => Some(if d > 0.0 { 1.0 } else { 0.0 }),
            _ => None,
        };
        let converged = estimate.max_abs() < opts.infer.deadband;
        records.push(IterationRecord {
            iter,
            residual: backend.fields().cloned(),
            summary: MeasurementSummary::of(&ms),
            error: single_qubit_error(&ms, &opts.polynomial),
            delta_h,
            delta_h_rescaled,
            estimate: estimate.clone(),
        });
        if iter == opts.n_iter || converged {
            break;
        }
        let step = FieldConfig::zeros(lattice.n_edges()).plus_scaled(&estimate, opts.damping);
        backend.apply_correction(&step).map_err(wrap(iter))?;
        recovered = recovered.plus_scaled(&step, 1.0);
    }
    Ok(CorrectionTrace {
        meta: TraceMeta {
            backend: backend.name(),
            model_seed: model.metadata.seed,
            model_k: model.metadata.k,
            options: opts.clone(),
        },
        records,
    })
}
