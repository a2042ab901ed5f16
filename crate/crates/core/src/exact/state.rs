//! Ground states on the full qubit space and their local expectation values.
//!
//! Solvable Hamiltonians commute with a pair of logical loop operators, so
//! the ground space splits into four sectors that are exactly degenerate but
//! not locally identical at small k: in the pseudo-spin picture the sectors
//! are Ising models with periodic or antiperiodic boundary conditions. The
//! solver therefore fixes the sector that contains the reference state `|0⟩`
//! (star fields) or its dual (plaquette fields), which is the state the
//! solvable construction and the Monte-Carlo sampler describe.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::enumerate::GroupEnumeration;
use super::lanczos::{dot, lowest_eigenpair_projected, norm, LanczosOptions};
use super::operator::{check_qubits, edge_mask, z_sign, LinearOperator, ToricHamiltonian};
use crate::error::{Error, Result};
use crate::fields::{FieldConfig, Sectors};
use crate::lattice::Lattice;
use crate::measurement::{MeasurementSet, Sampling, SectorMeasurement};
use crate::rng::Seed;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<f64>,
}

impl StateVector {
    /// Normalizes `amplitudes`; rejects zero vectors and non-power-of-two lengths.
    pub fn new(amplitudes: Vec<f64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "state length {len} is not a power of two"
            )));
        }
        let mut amplitudes = amplitudes;
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("state has zero or non-finite norm".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= n);
        Ok(StateVector {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        dot(&self.amplitudes, &other.amplitudes).powi(2)
    }
}

/// Which logical sector a ground-state search is confined to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalSector {
    /// σ^z loop products fixed to +1; contains `|0⟩`.
    Star,
    /// σ^x loop products fixed to +1.
    Plaquette,
    /// No restriction.
    Free,
}

impl LogicalSector {
    /// The sector matching the fields' symmetry.
    pub fn for_fields(fields: &FieldConfig) -> Self {
        match fields.sectors() {
            Sectors::None | Sectors::StarOnly => LogicalSector::Star,
            Sectors::PlaquetteOnly => LogicalSector::Plaquette,
            Sectors::Mixed => LogicalSector::Free,
        }
    }

    fn project(self, lattice: &Lattice, v: &mut [f64]) {
        match self {
            LogicalSector::Star => {
                let [a, b] = lattice.star_loops().clone().map(|l| edge_mask(&l));
                for (x, amp) in v.iter_mut().enumerate() {
                    if (x & a).count_ones() % 2 == 1 || (x & b).count_ones() % 2 == 1 {
                        *amp = 0.0;
                    }
                }
            }
            LogicalSector::Plaquette => {
                let [a, b] = lattice.plaquette_loops().clone().map(|l| edge_mask(&l));
                for m in [a, b] {
                    for x in 0..v.len() {
                        let y = x ^ m;
                        if x < y {
                            let avg = 0.5 * (v[x] + v[y]);
                            v[x] = avg;
                            v[y] = avg;
                        }
                    }
                }
            }
            LogicalSector::Free => {}
        }
    }
}

/// The unperturbed toric-code ground state of a sector: the uniform
/// superposition of `g|0⟩` (star), or of every flux-free configuration
/// (plaquette). `Free` falls back to the star state.
pub fn reference_state(lattice: &Lattice, sector: LogicalSector) -> Result<StateVector> {
    let n = check_qubits(lattice)?;
    let mut v = vec![0.0; 1 << n];
    match sector {
        LogicalSector::Star | LogicalSector::Free => {
            let group = GroupEnumeration::new(lattice)?;
            for g in 0..group.len() {
                v[flipped_mask(&group.spins(g))] = 1.0;
            }
        }
        LogicalSector::Plaquette => {
            let masks: Vec<usize> = lattice.plaquettes().iter().map(|p| edge_mask(p)).collect();
            for (x, amp) in v.iter_mut().enumerate() {
                if masks.iter().all(|&m| (x & m).count_ones() % 2 == 0) {
                    *amp = 1.0;
                }
            }
        }
    }
    StateVector::new(v)
}

fn flipped_mask(spins: &[i8]) -> usize {
    spins
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == -1)
        .fold(0, |m, (i, _)| m | 1 << i)
}

/// The exact solvable ground state `Σ_g exp(Σ_i b_i σ_i^z(g)/2) g|0⟩`, built
/// amplitude by amplitude. Independent of any eigensolver.
pub fn solvable_state(lattice: &Lattice, bz: &[f64]) -> Result<StateVector> {
    let n = check_qubits(lattice)?;
    if bz.len() != n {
        return Err(Error::InvalidArgument("one field per edge required".into()));
    }
    let group = GroupEnumeration::new(lattice)?;
    let mut v = vec![0.0; 1 << n];
    for g in 0..group.len() {
        let spins = group.spins(g);
        let m: f64 = spins.iter().zip(bz).map(|(&s, b)| f64::from(s) * b).sum();
        v[flipped_mask(&spins)] = (0.5 * m).exp();
    }
    StateVector::new(v)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartVector {
    /// The sector's reference state.
    #[default]
    Reference,
    /// Gaussian random vector projected into the sector.
    Random(Seed),
    /// Warm start from a previous solution.
    #[serde(skip)]
    Given(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub lanczos: LanczosOptions,
    pub start: StartVector,
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: StateVector,
    pub energy: f64,
    pub residual: f64,
    pub matvecs: usize,
    pub sector: LogicalSector,
}

/// Lowest eigenvector of `op` inside `sector`.
pub fn lowest_state(
    op: &dyn LinearOperator,
    lattice: &Lattice,
    sector: LogicalSector,
    opts: &SolveOptions,
) -> Result<GroundState> {
    let n = check_qubits(lattice)?;
    if op.dim() != 1 << n {
        return Err(Error::InvalidArgument("operator does not act on this lattice".into()));
    }
    let start = match &opts.start {
        StartVector::Reference => reference_state(lattice, sector)?.into_amplitudes(),
        StartVector::Random(seed) => {
            let mut rng = seed.rng();
            (0..op.dim()).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        StartVector::Given(v) => v.clone(),
    };
    let project = |v: &mut [f64]| sector.project(lattice, v);
    let pair = lowest_eigenpair_projected(op, start, &opts.lanczos, &project)?;
    Ok(GroundState {
        state: StateVector::new(pair.vector)?,
        energy: pair.value,
        residual: pair.residual,
        matvecs: pair.matvecs,
        sector,
    })
}

/// Ground state of the two-sector Hamiltonian with the given fields.
pub fn ground_state(
    lattice: &Lattice,
    fields: &FieldConfig,
    opts: &SolveOptions,
) -> Result<GroundState> {
    if !(opts.lanczos.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let h = ToricHamiltonian::new(lattice, fields)?;
    lowest_state(&h, lattice, LogicalSector::for_fields(fields), opts)
}

/// Local observables understood by [`expectation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Star(usize),
    Plaquette(usize),
    /// `A_s A_s'` for the endpoints of an edge.
    StarPair(usize),
    /// `B_p B_p'` for the two plaquettes beside an edge.
    PlaquettePair(usize),
    SigmaZ(usize),
    SigmaX(usize),
    /// `X^{x_mask} Z^{z_mask}` on arbitrary qubits.
    Pauli { x_mask: usize, z_mask: usize },
}

impl Observable {
    /// `(x_mask, z_mask)` of the Pauli string.
    fn masks(self, lattice: &Lattice) -> Result<(usize, usize)> {
        let n = lattice.n_edges();
        let edge = |i: usize| {
            if i < n {
                Ok(1usize << i)
            } else {
                Err(Error::InvalidArgument(format!("edge index {i} out of range (< {n})")))
            }
        };
        Ok(match self {
            Observable::Star(s) => (edge_mask(&lattice.star_edges(s)?), 0),
            Observable::Plaquette(p) => (0, edge_mask(&lattice.plaquette_edges(p)?)),
            Observable::StarPair(i) => {
                (edge_mask(&lattice.adjacent_star_pair(i)?.symmetric_difference), 0)
            }
            Observable::PlaquettePair(i) => {
                let (p, q) = lattice.edge_plaquettes(i)?;
                let m = edge_mask(&lattice.plaquette_edges(p)?) ^ edge_mask(&lattice.plaquette_edges(q)?);
                (0, m)
            }
            Observable::SigmaZ(i) => (0, edge(i)?),
            Observable::SigmaX(i) => (edge(i)?, 0),
            Observable::Pauli { x_mask, z_mask } => {
                if x_mask & z_mask != 0 {
                    return Err(Error::Unsupported(
                        "Pauli strings with Y factors have imaginary expectation parts".into(),
                    ));
                }
                if (x_mask | z_mask) >> n != 0 {
                    return Err(Error::InvalidArgument("Pauli string acts outside the lattice".into()));
                }
                (x_mask, z_mask)
            }
        })
    }
}

pub fn expectation(state: &StateVector, lattice: &Lattice, obs: Observable) -> Result<f64> {
    if state.n_qubits != lattice.n_edges() {
        return Err(Error::InvalidArgument("state does not live on this lattice".into()));
    }
    let (xm, zm) = obs.masks(lattice)?;
    Ok(pauli_expectation(&state.amplitudes, xm, zm))
}

fn pauli_expectation(v: &[f64], xm: usize, zm: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(x, &a)| a * z_sign(x, zm) * v[x ^ xm])
        .sum()
}

/// Every expectation value a measurement round asks for, read off `state`.
pub fn measurements_of(state: &StateVector, lattice: &Lattice) -> Result<MeasurementSet> {
    let ne = lattice.n_edges();
    let all = |f: &dyn Fn(usize) -> Observable, count: usize| -> Result<Vec<f64>> {
        (0..count).map(|j| expectation(state, lattice, f(j))).collect()
    };
    let star = SectorMeasurement::exact(
        all(&Observable::Star, lattice.n_vertices())?,
        all(&Observable::StarPair, ne)?,
        all(&Observable::SigmaZ, ne)?,
    );
    let plaquette = SectorMeasurement::exact(
        all(&Observable::Plaquette, lattice.n_plaquettes())?,
        all(&Observable::PlaquettePair, ne)?,
        all(&Observable::SigmaX, ne)?,
    );
    Ok(MeasurementSet {
        star,
        plaquette,
        sampling: Sampling::Exact,
    })
}

/// Exact measurement set of the ground state for `fields`.
pub fn measurement_set_exact(
    lattice: &Lattice,
    fields: &FieldConfig,
    opts: &SolveOptions,
) -> Result<MeasurementSet> {
    let gs = ground_state(lattice, fields, opts)?;
    measurements_of(&gs.state, lattice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::enumerate::enumerate_solvable;
    use crate::exact::operator::PauliSum;
    use rand::Rng as _;

    fn random_fields(n: usize, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = Seed(seed).rng();
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn zero_fields_give_zero_energy_and_toric_signature() {
        let l = Lattice::new(2).unwrap();
        let gs = ground_state(&l, &FieldConfig::zeros(8), &SolveOptions::default()).unwrap();
        assert!(gs.energy.abs() < 1e-10);
        let ms = measurements_of(&gs.state, &l).unwrap();
        for v in ms.star.stabilizer.iter().chain(&ms.plaquette.stabilizer) {
            assert!((v - 1.0).abs() < 1e-10);
        }
        for v in ms.star.spin.iter().chain(&ms.plaquette.spin) {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn reference_states_are_stabilized() {
        let l = Lattice::new(2).unwrap();
        for sector in [LogicalSector::Star, LogicalSector::Plaquette] {
            let r = reference_state(&l, sector).unwrap();
            for s in 0..4 {
                assert!((expectation(&r, &l, Observable::Star(s)).unwrap() - 1.0).abs() < 1e-12);
                assert!((expectation(&r, &l, Observable::Plaquette(s)).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn star_fields_reproduce_the_solvable_state() {
        let l = Lattice::new(2).unwrap();
        let bz = random_fields(8, 1.2, 1);
        let gs = ground_state(&l, &FieldConfig::star_only(bz.clone()), &SolveOptions::default()).unwrap();
        let exact = solvable_state(&l, &bz).unwrap();
        assert!(gs.state.fidelity(&exact) >= 1.0 - 1e-10);
        assert!(gs.energy.abs() < 1e-9);

        let ms = measurements_of(&gs.state, &l).unwrap();
        let en = enumerate_solvable(&l, &bz).unwrap().measurements;
        for ((a, _), (b, _)) in ms.star.entries().zip(en.star.entries()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn explicit_state_agrees_with_enumeration() {
        let l = Lattice::new(2).unwrap();
        let bz = [0.3; 8];
        let st = solvable_state(&l, &bz).unwrap();
        let ms = measurements_of(&st, &l).unwrap();
        let en = enumerate_solvable(&l, &bz).unwrap().measurements;
        for ((a, _), (b, _)) in ms.star.entries().zip(en.star.entries()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn three_by_three_star_fields_match_enumeration() {
        let l = Lattice::new(3).unwrap();
        let bz = random_fields(18, 1.0, 2);
        let ms = measurement_set_exact(&l, &FieldConfig::star_only(bz.clone()), &SolveOptions::default()).unwrap();
        let en = enumerate_solvable(&l, &bz).unwrap().measurements;
        for ((a, _), (b, _)) in ms.star.entries().zip(en.star.entries()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        for v in &ms.plaquette.stabilizer {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn random_starts_agree_on_local_values() {
        let l = Lattice::new(2).unwrap();
        let mut f = FieldConfig::zeros(8);
        f.bz = random_fields(8, 0.8, 3);
        f.bx = random_fields(8, 0.8, 4);
        let base = measurement_set_exact(&l, &f, &SolveOptions::default()).unwrap();
        for seed in 0..3 {
            let opts = SolveOptions {
                start: StartVector::Random(Seed(seed)),
                ..SolveOptions::default()
            };
            let other = measurement_set_exact(&l, &f, &opts).unwrap();
            for ((a, _), (b, _)) in base.star.entries().zip(other.star.entries()) {
                assert!((a - b).abs() < 1e-8);
            }
            for ((a, _), (b, _)) in base.plaquette.entries().zip(other.plaquette.entries()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duality_swaps_sectors() {
        let l = Lattice::new(2).unwrap();
        let mut f = FieldConfig::zeros(8);
        f.bz = random_fields(8, 0.9, 5);
        f.bx = random_fields(8, 0.6, 6);
        let a = measurement_set_exact(&l, &f, &SolveOptions::default()).unwrap();
        let b = measurement_set_exact(&l.dual(), &f.swapped(), &SolveOptions::default()).unwrap();
        for ((x, _), (y, _)) in a.star.entries().zip(b.plaquette.entries()) {
            assert!((x - y).abs() < 1e-8);
        }
        for ((x, _), (y, _)) in a.plaquette.entries().zip(b.star.entries()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    /// `H_TC - Σ_i c_i σ_i^z`.
    fn toric_with_z_fields(l: &Lattice, c: &[f64]) -> PauliSum {
        let mut h = PauliSum::toric_code(l).unwrap();
        for (i, &ci) in c.iter().enumerate() {
            if ci != 0.0 {
                h.push(-ci, 0, 1 << i).unwrap();
            }
        }
        h
    }

    #[test]
    fn sparse_fields_reduce_to_single_spin_terms() {
        let l = Lattice::new(3).unwrap();
        // Edges 0 = h(0,0), 13 = v(1,1), 17 = v(2,2): no vertex touches two.
        let mut bz = vec![0.0; 18];
        bz[0] = 0.7;
        bz[13] = -1.1;
        bz[17] = 0.4;
        let opts = SolveOptions::default();
        let a = ground_state(&l, &FieldConfig::star_only(bz.clone()), &opts).unwrap();
        let c: Vec<f64> = bz.iter().map(|b| 2.0 * b.sinh()).collect();
        let b = lowest_state(&toric_with_z_fields(&l, &c), &l, LogicalSector::Star, &opts).unwrap();
        assert!(a.state.fidelity(&b.state) >= 1.0 - 1e-10);
    }

    #[test]
    fn weak_uniform_fields_approach_single_spin_terms() {
        let l = Lattice::new(2).unwrap();
        let opts = SolveOptions::default();
        let defect = |eps: f64| {
            let a = ground_state(&l, &FieldConfig::star_only(vec![eps; 8]), &opts).unwrap();
            let h = toric_with_z_fields(&l, &[2.0 * eps; 8]);
            let b = lowest_state(&h, &l, LogicalSector::Star, &opts).unwrap();
            1.0 - a.state.fidelity(&b.state)
        };
        let d: Vec<f64> = [0.01, 0.02, 0.04].iter().map(|&e| defect(e)).collect();
        for w in d.windows(2) {
            let order = (w[1] / w[0]).log2();
            assert!(order > 1.8, "defects {d:?}");
        }
        assert!(d[2] < 0.04f64.powi(2));
    }

    #[test]
    fn observable_validation() {
        let l = Lattice::new(2).unwrap();
        let r = reference_state(&l, LogicalSector::Star).unwrap();
        assert!(expectation(&r, &l, Observable::SigmaZ(8)).is_err());
        assert!(matches!(
            expectation(&r, &l, Observable::Pauli { x_mask: 1, z_mask: 1 }),
            Err(Error::Unsupported(_))
        ));
        assert!((expectation(&r, &l, Observable::SigmaZ(3)).unwrap()).abs() < 1e-12);
    }
}
