//! Monte-Carlo estimation of ground-state expectation values of the solvable
//! star-disordered model.
//!
//! The normalized ground state is a sum over star-flip group elements `g` with
//! probabilities `e^{Σ b_i σ_i^z(g)} / Z`. Writing `σ_i^z(g) = θ_s θ_s'` for the
//! two endpoints of edge `i` turns this into a classical Ising model on the
//! vertices with couplings `b_i`, sampled here with single-site heat-bath
//! updates.
//! Star operators flip pseudo-spins, so `⟨A_s⟩` and `⟨A_s A_s'⟩` become Gibbs
//! averages of amplitude ratios.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::enumerate::GroupEnumeration;
use crate::fields::{FieldConfig, Sectors};
use crate::lattice::Lattice;
use crate::measurement::{MeasurementSet, Sampling, SectorMeasurement};
use crate::rng::{Rng, Seed};

/// How off-diagonal star expectations are estimated from a configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Amplitude ratio `exp(-Σ_{i∈s} b_i σ_i^z)` evaluated on the sample.
    Direct,
    /// The same ratio averaged analytically over the flipped pseudo-spin(s)
    /// given their neighbours, e.g. `⟨A_s⟩ = ⟨1/cosh h_s⟩`. Same mean,
    /// bounded by one.
    #[default]
    Conditional,
}

/// Single-site update rule for a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Resample `θ_s` from its conditional distribution given the neighbours.
    #[default]
    HeatBath,
    /// Propose a flip, accept with `min(1, e^{ΔM})`. In sequential sweeps
    /// this is not ergodic for weak couplings: at `b = 0` every sweep is a
    /// global flip and the edge spins never move.
    Metropolis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McParams {
    pub burn_in: usize,
    pub n_samples: usize,
    /// Sweeps between recorded samples.
    pub thinning: usize,
    pub n_batches: usize,
    pub chains: usize,
    pub estimator: Estimator,
    pub update: UpdateRule,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            burn_in: 200,
            n_samples: 2000,
            thinning: 2,
            n_batches: 20,
            chains: 1,
            estimator: Estimator::Conditional,
            update: UpdateRule::HeatBath,
        }
    }
}

impl McParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(Error::InvalidArgument(format!(
                "n_samples = {} is below the minimum of 100",
                self.n_samples
            )));
        }
        if self.thinning == 0 || self.chains == 0 {
            return Err(Error::InvalidArgument(
                "thinning and chains must be positive".into(),
            ));
        }
        if self.n_batches < 2 || self.n_batches * self.chains > self.n_samples {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 batches and one sample per batch (n_batches = {})",
                self.n_batches
            )));
        }
        Ok(())
    }

    fn samples_per_chain(&self) -> usize {
        self.n_samples / self.chains
    }
}

/// Classical pseudo-spins on the vertices with the cached coupling energy
/// `M = Σ_i b_i θ_s θ_s'`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoSpinState {
    theta: Vec<i8>,
    energy: f64,
}

impl PseudoSpinState {
    pub fn new(lattice: &Lattice, theta: Vec<i8>, b: &[f64]) -> Result<Self> {
        if theta.len() != lattice.n_vertices() || theta.iter().any(|&t| t != 1 && t != -1) {
            return Err(Error::InvalidArgument(
                "pseudo-spins must be ±1, one per vertex".into(),
            ));
        }
        let energy = coupling_energy(lattice, &theta, b);
        Ok(PseudoSpinState { theta, energy })
    }

    pub fn aligned(lattice: &Lattice, b: &[f64]) -> Self {
        let theta = vec![1; lattice.n_vertices()];
        let energy = coupling_energy(lattice, &theta, b);
        PseudoSpinState { theta, energy }
    }

    pub fn random(lattice: &Lattice, b: &[f64], rng: &mut Rng) -> Self {
        let theta = (0..lattice.n_vertices())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect::<Vec<i8>>();
        let energy = coupling_energy(lattice, &theta, b);
        PseudoSpinState { theta, energy }
    }

    pub fn theta(&self) -> &[i8] {
        &self.theta
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Global flip; leaves every `θ_s θ_s'` and `M` unchanged.
    pub fn flipped(&self) -> Self {
        PseudoSpinState {
            theta: self.theta.iter().map(|t| -t).collect(),
            energy: self.energy,
        }
    }

    /// `σ_i^z(g) = θ_s θ_s'`.
    pub fn edge_spin(&self, lattice: &Lattice, i: usize) -> i8 {
        let (a, b) = lattice.edge_vertices(i).expect("edge index");
        self.theta[a] * self.theta[b]
    }
}

pub fn coupling_energy(lattice: &Lattice, theta: &[i8], b: &[f64]) -> f64 {
    (0..lattice.n_edges())
        .map(|i| {
            let (s, t) = lattice.edge_vertices(i).expect("edge index");
            b[i] * f64::from(theta[s] * theta[t])
        })
        .sum()
}

/// Per-vertex list of `(edge, neighbour)` pairs.
fn neighbour_table(lattice: &Lattice) -> Vec<[(usize, usize); 4]> {
    lattice
        .stars()
        .iter()
        .enumerate()
        .map(|(s, star)| star.map(|e| (e, lattice.neighbour_across(s, e))))
        .collect()
}

/// A Markov chain over pseudo-spin configurations with weight `e^M`.
pub struct Chain<'a> {
    b: &'a [f64],
    rule: UpdateRule,
    neighbours: Vec<[(usize, usize); 4]>,
    state: PseudoSpinState,
    rng: Rng,
    accepted: u64,
}

impl<'a> Chain<'a> {
    pub fn new(lattice: &Lattice, b: &'a [f64], state: PseudoSpinState, rng: Rng) -> Self {
        assert_eq!(b.len(), lattice.n_edges(), "one coupling per edge");
        Chain {
            b,
            rule: UpdateRule::default(),
            neighbours: neighbour_table(lattice),
            state,
            rng,
            accepted: 0,
        }
    }

    pub fn with_rule(mut self, rule: UpdateRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn state(&self) -> &PseudoSpinState {
        &self.state
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// `h_s = Σ_{i∈s} b_i θ_{s'(i)}`, the local field on pseudo-spin `s`.
    #[inline]
    fn local_field(&self, s: usize) -> f64 {
        let theta = &self.state.theta;
        self.neighbours[s]
            .iter()
            .map(|&(e, t)| self.b[e] * f64::from(theta[t]))
            .sum()
    }

    /// One update per vertex in index order.
    pub fn sweep(&mut self) {
        for s in 0..self.state.theta.len() {
            let h = self.local_field(s);
            let delta = -2.0 * f64::from(self.state.theta[s]) * h;
            let flip = match self.rule {
                UpdateRule::Metropolis => delta >= 0.0 || self.rng.random::<f64>() < delta.exp(),
                // Flip with the conditional probability of the opposite value,
                // `1/(1+e^{-ΔM})`; depends on θ_s h_s only, so it is gauge covariant.
                UpdateRule::HeatBath => self.rng.random::<f64>() < 1.0 / (1.0 + (-delta).exp()),
            };
            if flip {
                self.state.theta[s] = -self.state.theta[s];
                self.state.energy += delta;
                self.accepted += 1;
            }
        }
    }
}

/// Runs one Metropolis sweep over `state`; returns the number of accepted flips.
pub fn metropolis_sweep(
    state: &mut PseudoSpinState,
    b: &[f64],
    lattice: &Lattice,
    rng: &mut Rng,
) -> u64 {
    let mut chain =
        Chain::new(lattice, b, state.clone(), rng.clone()).with_rule(UpdateRule::Metropolis);
    chain.sweep();
    *state = chain.state;
    *rng = chain.rng;
    chain.accepted
}

/// Running sums per batch for a fixed number of observables.
struct BatchAccumulator {
    n_obs: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl BatchAccumulator {
    fn new(n_obs: usize, n_batches: usize) -> Self {
        BatchAccumulator {
            n_obs,
            sums: vec![vec![0.0; n_obs]; n_batches],
            counts: vec![0; n_batches],
        }
    }

    fn batch_mut(&mut self, batch: usize) -> &mut [f64] {
        self.counts[batch] += 1;
        &mut self.sums[batch]
    }

    fn batch_means(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| s.iter().map(|x| x / c as f64).collect())
    }
}

/// Mean and standard error from equally weighted batch means.
fn mean_and_stderr(batches: &[Vec<f64>], n_obs: usize) -> (Vec<f64>, Vec<f64>) {
    let nb = batches.len() as f64;
    let mut mean = vec![0.0; n_obs];
    for b in batches {
        for (m, x) in mean.iter_mut().zip(b) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nb);
    let mut err = vec![0.0; n_obs];
    for b in batches {
        for ((e, x), m) in err.iter_mut().zip(b).zip(&mean) {
            *e += (x - m).powi(2);
        }
    }
    for e in &mut err {
        *e = (*e / (nb - 1.0) / nb).sqrt();
    }
    (mean, err)
}

/// Which star-sector quantities to record.
#[derive(Clone, Debug)]
pub(crate) struct Observables {
    vertices: Vec<usize>,
    edges: Vec<usize>,
}

impl Observables {
    pub(crate) fn all(lattice: &Lattice) -> Self {
        Observables {
            vertices: (0..lattice.n_vertices()).collect(),
            edges: (0..lattice.n_edges()).collect(),
        }
    }

    /// Only what the network needs at edge `i`: both endpoint stars and the pair.
    pub(crate) fn edge_triple(lattice: &Lattice, i: usize) -> Result<Self> {
        let (s, t) = lattice.edge_vertices(i)?;
        Ok(Observables {
            vertices: vec![s, t],
            edges: vec![i],
        })
    }
}

struct PairGeometry {
    first: usize,
    second: usize,
    /// Sum of couplings over edges shared by both stars.
    shared_coupling: f64,
}

/// Raw star-sector estimates: stabilizers for `obs.vertices`, then pairs and
/// spins for `obs.edges`.
pub(crate) struct SectorEstimate {
    pub stabilizer: Vec<(f64, f64)>,
    pub pair: Vec<(f64, f64)>,
    pub spin: Vec<(f64, f64)>,
}

pub(crate) fn estimate_sector(
    lattice: &Lattice,
    b: &[f64],
    mc: &McParams,
    seed: Seed,
    obs: &Observables,
) -> Result<SectorEstimate> {
    mc.validate()?;
    let pairs: Vec<PairGeometry> = obs
        .edges
        .iter()
        .map(|&i| {
            let p = lattice.adjacent_star_pair(i)?;
            Ok(PairGeometry {
                first: p.first,
                second: p.second,
                shared_coupling: p.shared.iter().map(|&e| b[e]).sum(),
            })
        })
        .collect::<Result<_>>()?;

    let nv = obs.vertices.len();
    let ne = obs.edges.len();
    let n_obs = nv + 2 * ne;
    let batches_per_chain = (mc.n_batches / mc.chains).max(1);

    let run_chain = |chain_idx: usize| -> BatchAccumulator {
        let mut rng = seed.child(chain_idx as u64).rng();
        let init = PseudoSpinState::random(lattice, b, &mut rng);
        let mut chain = Chain::new(lattice, b, init, rng).with_rule(mc.update);
        let mut acc = BatchAccumulator::new(n_obs, batches_per_chain);
        for _ in 0..mc.burn_in {
            chain.sweep();
        }
        let n = mc.samples_per_chain();
        let mut fields = vec![0.0; lattice.n_vertices()];
        for sample in 0..n {
            for _ in 0..mc.thinning {
                chain.sweep();
            }
            for (f, s) in fields.iter_mut().zip(0..) {
                *f = chain.local_field(s);
            }
            let theta = &chain.state.theta;
            let row = acc.batch_mut(sample * batches_per_chain / n);
            record_sample(row, obs, &pairs, theta, &fields, mc.estimator);
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let chains: Vec<BatchAccumulator> = {
        use rayon::prelude::*;
        (0..mc.chains).into_par_iter().map(run_chain).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let chains: Vec<BatchAccumulator> = (0..mc.chains).map(run_chain).collect();

    let batches: Vec<Vec<f64>> = chains.iter().flat_map(|c| c.batch_means()).collect();
    let (mean, err) = mean_and_stderr(&batches, chains[0].n_obs);
    let zip = |r: std::ops::Range<usize>| r.map(|j| (mean[j], err[j])).collect();
    Ok(SectorEstimate {
        stabilizer: zip(0..nv),
        pair: zip(nv..nv + ne),
        spin: zip(nv + ne..nv + 2 * ne),
    })
}

fn record_sample(
    row: &mut [f64],
    obs: &Observables,
    pairs: &[PairGeometry],
    theta: &[i8],
    fields: &[f64],
    estimator: Estimator,
) {
    let nv = obs.vertices.len();
    let ne = obs.edges.len();
    for (j, &s) in obs.vertices.iter().enumerate() {
        let h = fields[s];
        row[j] += match estimator {
            Estimator::Direct => (-f64::from(theta[s]) * h).exp(),
            Estimator::Conditional => 1.0 / h.cosh(),
        };
    }
    for (j, p) in pairs.iter().enumerate() {
        let (a, c) = (f64::from(theta[p.first]), f64::from(theta[p.second]));
        let (ha, hc) = (fields[p.first], fields[p.second]);
        let (pair, spin) = match estimator {
            Estimator::Direct => {
                let flip = -(a * ha + c * hc) + 2.0 * p.shared_coupling * a * c;
                (flip.exp(), a * c)
            }
            Estimator::Conditional => {
                // Fields from the couplings not shared by the two stars.
                let j = p.shared_coupling;
                let h1 = ha - j * c;
                let h2 = hc - j * a;
                let pair = 2.0 * j.cosh()
                    / (j.exp() * (h1 + h2).cosh() + (-j).exp() * (h1 - h2).cosh());
                let spin = 0.5 * (c * ha.tanh() + a * hc.tanh());
                (pair, spin)
            }
        };
        row[nv + j] += pair;
        row[nv + ne + j] += spin;
    }
}

/// Star-sector measurement of the solvable model with star fields `b`.
pub fn sample_sector(
    lattice: &Lattice,
    b: &[f64],
    mc: &McParams,
    seed: Seed,
) -> Result<SectorMeasurement> {
    let est = estimate_sector(lattice, b, mc, seed, &Observables::all(lattice))?;
    let split = |v: Vec<(f64, f64)>| -> (Vec<f64>, Vec<f64>) { v.into_iter().unzip() };
    let (stabilizer, stabilizer_err) = split(est.stabilizer);
    let (pair, pair_err) = split(est.pair);
    let (spin, spin_err) = split(est.spin);
    Ok(SectorMeasurement {
        stabilizer,
        pair,
        spin,
        stabilizer_err,
        pair_err,
        spin_err,
    })
}

/// Full measurement set of the solvable model. Only one sector may carry
/// fields; the plaquette sector is sampled on the dual lattice.
pub fn sample_measurements(
    lattice: &Lattice,
    fields: &FieldConfig,
    mc: &McParams,
    seed: Seed,
) -> Result<MeasurementSet> {
    fields.validate(lattice, crate::fields::B_CAP)?;
    let n = lattice.n_vertices();
    let ne = lattice.n_edges();
    let (star, plaquette) = match fields.sectors() {
        Sectors::None | Sectors::StarOnly => (
            sample_sector(lattice, &fields.bz, mc, seed)?,
            SectorMeasurement::trivial(n, ne),
        ),
        Sectors::PlaquetteOnly => (
            SectorMeasurement::trivial(n, ne),
            sample_sector(&lattice.dual(), &fields.bx, mc, seed)?,
        ),
        Sectors::Mixed => {
            return Err(Error::Unsupported(
                "the sampler handles one disordered sector at a time".into(),
            ))
        }
    };
    Ok(MeasurementSet {
        star,
        plaquette,
        sampling: Sampling::MonteCarlo {
            n_samples: mc.samples_per_chain() * mc.chains,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub beta: f64,
    pub chi_f: f64,
    pub chi_f_err: f64,
    /// `C_v = 4β² χ_F`.
    pub heat_capacity: f64,
    pub heat_capacity_err: f64,
}

/// Fidelity susceptibility `χ_F = Var(M_λ)/4` with `M_λ = Σ_i λ_i σ_i^z(g)`,
/// sampled at couplings `b = βλ`. Errors by jackknife over batches.
pub fn fidelity_susceptibility(
    lattice: &Lattice,
    lambda: &[f64],
    beta: f64,
    mc: &McParams,
    seed: Seed,
) -> Result<Susceptibility> {
    mc.validate()?;
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be ≥ 0, got {beta}")));
    }
    if lambda.len() != lattice.n_edges() {
        return Err(Error::InvalidArgument("one λ per edge required".into()));
    }
    let b: Vec<f64> = lambda.iter().map(|l| beta * l).collect();
    let batches_per_chain = (mc.n_batches / mc.chains).max(1);

    let run_chain = |chain_idx: usize| -> BatchAccumulator {
        let mut rng = seed.child(chain_idx as u64).rng();
        let init = PseudoSpinState::random(lattice, &b, &mut rng);
        let mut chain = Chain::new(lattice, &b, init, rng).with_rule(mc.update);
        let mut acc = BatchAccumulator::new(2, batches_per_chain);
        for _ in 0..mc.burn_in {
            chain.sweep();
        }
        let n = mc.samples_per_chain();
        for sample in 0..n {
            for _ in 0..mc.thinning {
                chain.sweep();
            }
            let m = coupling_energy(lattice, &chain.state.theta, lambda);
            let row = acc.batch_mut(sample * batches_per_chain / n);
            row[0] += m;
            row[1] += m * m;
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let chains: Vec<BatchAccumulator> = {
        use rayon::prelude::*;
        (0..mc.chains).into_par_iter().map(run_chain).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let chains: Vec<BatchAccumulator> = (0..mc.chains).map(run_chain).collect();

    let batches: Vec<Vec<f64>> = chains.iter().flat_map(|c| c.batch_means()).collect();
    let nb = batches.len() as f64;
    let total = |skip: Option<usize>| {
        let (mut m1, mut m2, mut w) = (0.0, 0.0, 0.0);
        for (j, bm) in batches.iter().enumerate() {
            if Some(j) != skip {
                m1 += bm[0];
                m2 += bm[1];
                w += 1.0;
            }
        }
        ((m2 / w) - (m1 / w).powi(2)).max(0.0) / 4.0
    };
    let chi = total(None);
    let jack: Vec<f64> = (0..batches.len()).map(|j| total(Some(j))).collect();
    let jack_mean = jack.iter().sum::<f64>() / nb;
    let chi_err = ((nb - 1.0) / nb * jack.iter().map(|x| (x - jack_mean).powi(2)).sum::<f64>()).sqrt();
    let scale = 4.0 * beta * beta;
    Ok(Susceptibility {
        beta,
        chi_f: chi,
        chi_f_err: chi_err,
        heat_capacity: scale * chi,
        heat_capacity_err: scale * chi_err,
    })
}

/// Exact comparison of the Ising partition sum with the group sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCheck {
    pub z_ising: f64,
    pub z_group: f64,
    pub ratio: f64,
}

/// Enumerates all `2^{k²}` pseudo-spin configurations and all `2^{k²-1}`
/// group elements; the ratio should be exactly 2 (global-flip gauge freedom).
pub fn partition_ratio_check(lattice: &Lattice, b: &[f64]) -> Result<PartitionCheck> {
    let n = lattice.n_vertices();
    if n > 16 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive enumeration limited to k ≤ 4, got k = {}",
            lattice.k()
        )));
    }
    if b.len() != lattice.n_edges() {
        return Err(Error::InvalidArgument("one coupling per edge required".into()));
    }
    let mut theta = vec![1i8; n];
    let mut z_ising = 0.0;
    for bits in 0u32..(1 << n) {
        for (s, t) in theta.iter_mut().enumerate() {
            *t = if bits >> s & 1 == 1 { -1 } else { 1 };
        }
        z_ising += coupling_energy(lattice, &theta, b).exp();
    }
    let z_group = GroupEnumeration::new(lattice)?.partition_function(b);
    Ok(PartitionCheck {
        z_ising,
        z_group,
        ratio: z_ising / z_group,
    })
}
