use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Expectation values of one stabilizer family.
///
/// For the star sector, `stabilizer[s] = ⟨A_s⟩` per vertex,
/// `pair[i] = ⟨A_s A_s'⟩` for the two stars at the ends of edge `i`, and
/// `spin[i] = ⟨σ_i^z⟩`. The plaquette sector holds `⟨B_p⟩`, `⟨B_p B_p'⟩` and
/// `⟨σ_i^x⟩` with the same layout over plaquettes. Each value has a standard
/// error in the matching `*_err` vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorMeasurement {
    pub stabilizer: Vec<f64>,
    pub pair: Vec<f64>,
    pub spin: Vec<f64>,
    pub stabilizer_err: Vec<f64>,
    pub pair_err: Vec<f64>,
    pub spin_err: Vec<f64>,
}

impl SectorMeasurement {
    /// The field-free signature: every stabilizer at +1, no magnetization.
    pub fn trivial(n_sites: usize, n_edges: usize) -> Self {
        SectorMeasurement {
            stabilizer: vec![1.0; n_sites],
            pair: vec![1.0; n_edges],
            spin: vec![0.0; n_edges],
            stabilizer_err: vec![0.0; n_sites],
            pair_err: vec![0.0; n_edges],
            spin_err: vec![0.0; n_edges],
        }
    }

    pub fn exact(stabilizer: Vec<f64>, pair: Vec<f64>, spin: Vec<f64>) -> Self {
        let (ns, ne) = (stabilizer.len(), pair.len());
        SectorMeasurement {
            stabilizer,
            pair,
            spin,
            stabilizer_err: vec![0.0; ns],
            pair_err: vec![0.0; ne],
            spin_err: vec![0.0; ne],
        }
    }

    pub fn mean_stabilizer(&self) -> f64 {
        self.stabilizer.iter().sum::<f64>() / self.stabilizer.len() as f64
    }

    /// Iterates `(value, stderr)` over every entry: stabilizers, pairs, spins.
    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.stabilizer
            .iter()
            .zip(&self.stabilizer_err)
            .chain(self.pair.iter().zip(&self.pair_err))
            .chain(self.spin.iter().zip(&self.spin_err))
            .map(|(&v, &e)| (v, e))
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.stabilizer
            .iter_mut()
            .chain(self.pair.iter_mut())
            .chain(self.spin.iter_mut())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Exact,
    MonteCarlo { n_samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub star: SectorMeasurement,
    pub plaquette: SectorMeasurement,
    pub sampling: Sampling,
}

/// Network input for one edge: the two adjacent stabilizers and their product.
pub type Triple = [f64; 3];

impl MeasurementSet {
    /// Star triple `(⟨A_s⟩, ⟨A_s'⟩, ⟨A_s A_s'⟩)` at edge `i`.
    pub fn star_triple(&self, lattice: &Lattice, i: usize) -> Result<Triple> {
        let (s, t) = lattice.edge_vertices(i)?;
        Ok([self.star.stabilizer[s], self.star.stabilizer[t], self.star.pair[i]])
    }

    /// Plaquette triple `(⟨B_p⟩, ⟨B_p'⟩, ⟨B_p B_p'⟩)` at edge `i`.
    pub fn plaquette_triple(&self, lattice: &Lattice, i: usize) -> Result<Triple> {
        let (p, q) = lattice.edge_plaquettes(i)?;
        Ok([
            self.plaquette.stabilizer[p],
            self.plaquette.stabilizer[q],
            self.plaquette.pair[i],
        ])
    }

    /// The same measurements seen from the dual lattice.
    pub fn swapped(&self) -> Self {
        MeasurementSet {
            star: self.plaquette.clone(),
            plaquette: self.star.clone(),
            sampling: self.sampling,
        }
    }

    /// Number of distinct expectation values a full measurement round asks for.
    pub fn n_values(&self) -> usize {
        self.star.entries().count() + self.plaquette.entries().count()
    }

    pub fn check_shape(&self, lattice: &Lattice) -> Result<()> {
        let ok = |s: &SectorMeasurement, sites: usize| {
            s.stabilizer.len() == sites
                && s.pair.len() == lattice.n_edges()
                && s.spin.len() == lattice.n_edges()
        };
        if ok(&self.star, lattice.n_vertices()) && ok(&self.plaquette, lattice.n_plaquettes()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "measurement set does not match lattice".into(),
            ))
        }
    }
}
