//! Exact summation over the star group of the solvable model.
//!
//! A group element `g = ∏_{s∈S} A_s` is identified with the pseudo-spin
//! configuration `θ_s = -1` for `s ∈ S`. Since `∏_s A_s = 1`, the last vertex
//! is pinned to `θ = +1`, leaving `2^{k²-1}` distinct elements.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::measurement::{MeasurementSet, Sampling, SectorMeasurement};

/// Largest lattice the enumeration accepts (`2^15` elements at k = 4).
pub const MAX_ENUMERATION_K: usize = 4;

#[derive(Clone, Debug)]
pub struct GroupEnumeration {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl GroupEnumeration {
    pub fn new(lattice: &Lattice) -> Result<Self> {
        if lattice.k() > MAX_ENUMERATION_K {
            return Err(Error::InvalidArgument(format!(
                "group enumeration limited to k ≤ {MAX_ENUMERATION_K}, got k = {}",
                lattice.k()
            )));
        }
        let edges = (0..lattice.n_edges())
            .map(|i| lattice.edge_vertices(i))
            .collect::<Result<_>>()?;
        Ok(GroupEnumeration {
            n_vertices: lattice.n_vertices(),
            edges,
        })
    }

    pub fn len(&self) -> usize {
        1 << (self.n_vertices - 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Pseudo-spins of element `g`.
    pub fn theta(&self, g: usize, out: &mut [i8]) {
        for (s, t) in out.iter_mut().enumerate() {
            *t = if g >> s & 1 == 1 { -1 } else { 1 };
        }
    }

    /// `σ_i^z(g)` for every edge.
    pub fn spins(&self, g: usize) -> Vec<i8> {
        let mut theta = vec![0; self.n_vertices];
        self.theta(g, &mut theta);
        self.edges.iter().map(|&(a, b)| theta[a] * theta[b]).collect()
    }

    /// `Z = Σ_g exp(Σ_i b_i σ_i^z(g))`.
    pub fn partition_function(&self, b: &[f64]) -> f64 {
        let mut theta = vec![0; self.n_vertices];
        (0..self.len())
            .map(|g| {
                self.theta(g, &mut theta);
                self.log_weight(&theta, b).exp()
            })
            .sum()
    }

    fn log_weight(&self, theta: &[i8], b: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(b)
            .map(|(&(s, t), bi)| bi * f64::from(theta[s] * theta[t]))
            .sum()
    }
}

/// Exact star-sector expectations of the solvable ground state.
#[derive(Clone, Debug)]
pub struct SolvableEnumeration {
    pub z: f64,
    pub measurements: MeasurementSet,
}

/// Exact measurement set of the model with star fields `bz` and no plaquette
/// fields. Off-diagonal values use the amplitude ratio
/// `⟨A_s⟩ = Σ_g w(g) exp(-Σ_{i∈s} b_i σ_i^z(g)) / Z`.
pub fn enumerate_solvable(lattice: &Lattice, bz: &[f64]) -> Result<SolvableEnumeration> {
    if bz.len() != lattice.n_edges() {
        return Err(Error::InvalidArgument("one field per edge required".into()));
    }
    if bz.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument("fields must be finite".into()));
    }
    let group = GroupEnumeration::new(lattice)?;
    let nv = lattice.n_vertices();
    let ne = lattice.n_edges();
    let pairs = (0..ne)
        .map(|i| lattice.adjacent_star_pair(i))
        .collect::<Result<Vec<_>>>()?;

    // Shift log-weights by the largest possible value to keep exp() in range.
    let shift: f64 = bz.iter().map(|b| b.abs()).sum();
    let mut theta = vec![0i8; nv];
    let mut sigma = vec![0.0; ne];
    let mut z = 0.0;
    let mut star = vec![0.0; nv];
    let mut pair = vec![0.0; ne];
    let mut spin = vec![0.0; ne];
    for g in 0..group.len() {
        group.theta(g, &mut theta);
        for (sg, &(a, b)) in sigma.iter_mut().zip(&group.edges) {
            *sg = f64::from(theta[a] * theta[b]);
        }
        let w = (sigma.iter().zip(bz).map(|(s, b)| s * b).sum::<f64>() - shift).exp();
        z += w;
        for (acc, edges) in star.iter_mut().zip(lattice.stars()) {
            let m: f64 = edges.iter().map(|&e| bz[e] * sigma[e]).sum();
            *acc += w * (-m).exp();
        }
        for (acc, p) in pair.iter_mut().zip(&pairs) {
            let m: f64 = p.symmetric_difference.iter().map(|&e| bz[e] * sigma[e]).sum();
            *acc += w * (-m).exp();
        }
        for (sp, sg) in spin.iter_mut().zip(&sigma) {
            *sp += w * sg;
        }
    }
    for v in star.iter_mut().chain(pair.iter_mut()).chain(spin.iter_mut()) {
        *v /= z;
    }
    let measurements = MeasurementSet {
        star: SectorMeasurement::exact(star, pair, spin),
        plaquette: SectorMeasurement::trivial(lattice.n_plaquettes(), ne),
        sampling: Sampling::Exact,
    };
    Ok(SolvableEnumeration {
        z: z * shift.exp(),
        measurements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use rand::Rng as _;

    #[test]
    fn zero_fields_count_group_elements() {
        for k in 2..=4 {
            let l = Lattice::new(k).unwrap();
            let e = enumerate_solvable(&l, &vec![0.0; l.n_edges()]).unwrap();
            assert_eq!(e.z, (1u64 << (k * k - 1)) as f64);
            assert!(e.measurements.star.stabilizer.iter().all(|&a| (a - 1.0).abs() < 1e-15));
            assert!(e.measurements.star.spin.iter().all(|&a| a.abs() < 1e-15));
        }
    }

    #[test]
    fn elements_are_distinct_spin_patterns() {
        let l = Lattice::new(3).unwrap();
        let g = GroupEnumeration::new(&l).unwrap();
        let mut seen = std::collections::HashSet::new();
        for e in 0..g.len() {
            assert!(seen.insert(g.spins(e)));
        }
        assert_eq!(seen.len(), 256);
    }

    #[test]
    fn two_by_two_uniform_partition_function_by_hand() {
        // Direct sum over the 8 edge patterns.
        let l = Lattice::new(2).unwrap();
        let g = GroupEnumeration::new(&l).unwrap();
        let b = 0.3;
        let by_hand: f64 = (0..8)
            .map(|e| {
                let s: i32 = g.spins(e).iter().map(|&x| i32::from(x)).sum();
                (b * f64::from(s)).exp()
            })
            .sum();
        let e = enumerate_solvable(&l, &[b; 8]).unwrap();
        assert!((e.z - by_hand).abs() < 1e-12 * by_hand);
    }

    #[test]
    fn sparse_field_gives_tanh_magnetization() {
        let l = Lattice::new(3).unwrap();
        let mut bz = vec![0.0; 18];
        bz[0] = 0.5;
        bz[13] = -0.8;
        let e = enumerate_solvable(&l, &bz).unwrap();
        let spin = &e.measurements.star.spin;
        assert!((spin[0] - 0.5f64.tanh()).abs() < 1e-12);
        assert!((spin[13] + 0.8f64.tanh()).abs() < 1e-12);
        assert!(spin[5].abs() < 1e-12);
    }

    #[test]
    fn stabilizer_decreases_with_uniform_field() {
        let l = Lattice::new(3).unwrap();
        let mut last = 1.0 + 1e-12;
        for step in 0..=20 {
            let b = step as f64 * 0.1;
            let e = enumerate_solvable(&l, &[b; 18]).unwrap();
            let a = e.measurements.star.stabilizer[0];
            assert!(a < last, "b = {b}: {a} ≥ {last}");
            last = a;
        }
    }

    #[test]
    fn values_are_bounded_and_translation_invariant() {
        let l = Lattice::new(3).unwrap();
        let mut rng = Seed(1).rng();
        let bz: Vec<f64> = (0..18).map(|_| rng.random_range(-1.7..1.7)).collect();
        let shifted: Vec<f64> = (0..18)
            .map(|i| bz[(0..18).find(|&j| l.translate_edge(j, 1, 2) == i).unwrap()])
            .collect();
        let a = enumerate_solvable(&l, &bz).unwrap().measurements.star;
        let b = enumerate_solvable(&l, &shifted).unwrap().measurements.star;
        for (v, _) in a.entries() {
            assert!((-1.0..=1.0).contains(&v));
        }
        for i in 0..18 {
            let j = l.translate_edge(i, 1, 2);
            assert!((a.spin[i] - b.spin[j]).abs() < 1e-12);
            assert!((a.pair[i] - b.pair[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_large_lattices() {
        let l = Lattice::new(5).unwrap();
        assert!(enumerate_solvable(&l, &vec![0.0; 50]).is_err());
    }
}
