//! Matrix-free Hamiltonians on the full `2^{2k²}` qubit space.
//!
//! Basis states are bit strings indexed by edge: bit `i` set means
//! `σ_i^z = -1`. All operators here are real symmetric in this basis.

use crate::error::{Error, Result};
use crate::fields::FieldConfig;
use crate::lattice::Lattice;

/// Largest qubit count the dense state-vector code accepts.
pub const MAX_QUBITS: usize = 20;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `out = H v`.
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

pub(crate) fn check_qubits(lattice: &Lattice) -> Result<usize> {
    let n = lattice.n_edges();
    if n > MAX_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "{n} qubits exceed the state-vector limit of {MAX_QUBITS}"
        )));
    }
    Ok(n)
}

pub(crate) fn edge_mask(edges: &[usize]) -> usize {
    edges.iter().fold(0, |m, &e| m ^ (1 << e))
}

#[inline]
pub(crate) fn z_sign(x: usize, mask: usize) -> f64 {
    if (x & mask).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The two-sector disordered toric-code Hamiltonian
///
/// `H = Σ_s (-A_s + exp(-Σ_{i∈s} b_i^z σ_i^z)) + Σ_p (-B_p + exp(-Σ_{i∈p} b_i^x σ_i^x))`.
///
/// With zero fields this is `H_TC + 2k²`, so every solvable ground state has
/// energy exactly 0.
#[derive(Clone, Debug)]
pub struct ToricHamiltonian {
    n_qubits: usize,
    diag: Vec<f64>,
    star_masks: Vec<usize>,
    /// `(qubit, cosh b, sinh b)` for each plaquette with nonzero σ^x fields.
    plaquette_factors: Vec<Vec<(usize, f64, f64)>>,
}

impl ToricHamiltonian {
    pub fn new(lattice: &Lattice, fields: &FieldConfig) -> Result<Self> {
        let n_qubits = check_qubits(lattice)?;
        fields.validate(lattice, f64::INFINITY)?;
        let dim = 1usize << n_qubits;
        let mut diag = vec![0.0; dim];

        for star in lattice.stars() {
            let factors: Vec<(usize, f64, f64)> = star
                .iter()
                .map(|&e| (1 << e, fields.bz[e].cosh(), fields.bz[e].sinh()))
                .collect();
            for (x, d) in diag.iter_mut().enumerate() {
                *d += factors
                    .iter()
                    .map(|&(bit, c, s)| if x & bit == 0 { c - s } else { c + s })
                    .product::<f64>();
            }
        }

        let mut plaquette_factors = Vec::new();
        for plaq in lattice.plaquettes() {
            let mask = edge_mask(plaq);
            let active: Vec<(usize, f64, f64)> = plaq
                .iter()
                .filter(|&&e| fields.bx[e] != 0.0)
                .map(|&e| (e, fields.bx[e].cosh(), fields.bx[e].sinh()))
                .collect();
            let idle = if active.is_empty() { 1.0 } else { 0.0 };
            for (x, d) in diag.iter_mut().enumerate() {
                *d += idle - z_sign(x, mask);
            }
            if !active.is_empty() {
                plaquette_factors.push(active);
            }
        }

        Ok(ToricHamiltonian {
            n_qubits,
            diag,
            star_masks: lattice.stars().iter().map(|s| edge_mask(s)).collect(),
            plaquette_factors,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

/// `out += ∏_q (c_q - s_q X_q) v` over at most four qubits, one pass.
fn add_x_product(v: &[f64], out: &mut [f64], factors: &[(usize, f64, f64)]) {
    let a = factors.len();
    let mask = factors.iter().fold(0usize, |m, &(q, _, _)| m | 1 << q);
    let offsets: Vec<usize> = (0..1usize << a)
        .map(|sub| {
            factors
                .iter()
                .enumerate()
                .filter(|(t, _)| sub >> t & 1 == 1)
                .fold(0, |o, (_, &(q, _, _))| o | 1 << q)
        })
        .collect();
    let mut buf = [0.0f64; 16];
    let mut x = 0usize;
    while x < v.len() {
        for (b, &o) in buf.iter_mut().zip(&offsets) {
            *b = v[x | o];
        }
        for (t, &(_, c, s)) in factors.iter().enumerate() {
            let bit = 1 << t;
            for sub in 0..offsets.len() {
                if sub & bit == 0 {
                    let (u0, u1) = (buf[sub], buf[sub | bit]);
                    buf[sub] = c * u0 - s * u1;
                    buf[sub | bit] = c * u1 - s * u0;
                }
            }
        }
        for (b, &o) in buf.iter().zip(&offsets) {
            out[x | o] += b;
        }
        // Next index with every factor bit clear.
        x = ((x | mask) + 1) & !mask;
    }
}

impl LinearOperator for ToricHamiltonian {
    fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(v) {
            *o = d * x;
        }
        for &m in &self.star_masks {
            for (x, o) in out.iter_mut().enumerate() {
                *o -= v[x ^ m];
            }
        }
        for factors in &self.plaquette_factors {
            add_x_product(v, out, factors);
        }
    }
}

/// One term `coef · X^{x_mask} Z^{z_mask}` of a Pauli sum (Z applied first).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliTerm {
    pub coef: f64,
    pub x_mask: usize,
    pub z_mask: usize,
}

/// A real symmetric operator given as an explicit sum of Pauli strings with
/// no Y content. Slow but structurally independent of [`ToricHamiltonian`].
#[derive(Clone, Debug)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(n_qubits: usize) -> Self {
        PauliSum {
            n_qubits,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, coef: f64, x_mask: usize, z_mask: usize) -> Result<()> {
        if x_mask & z_mask != 0 {
            return Err(Error::Unsupported(
                "Pauli strings with Y factors are not real symmetric".into(),
            ));
        }
        if (x_mask | z_mask) >> self.n_qubits != 0 {
            return Err(Error::InvalidArgument("Pauli string acts outside the register".into()));
        }
        self.terms.push(PauliTerm {
            coef,
            x_mask,
            z_mask,
        });
        Ok(())
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// `H_TC = -Σ_s A_s - Σ_p B_p`.
    pub fn toric_code(lattice: &Lattice) -> Result<Self> {
        let mut h = PauliSum::new(check_qubits(lattice)?);
        for s in lattice.stars() {
            h.push(-1.0, edge_mask(s), 0)?;
        }
        for p in lattice.plaquettes() {
            h.push(-1.0, 0, edge_mask(p))?;
        }
        Ok(h)
    }
}

impl LinearOperator for PauliSum {
    fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            for (x, &vx) in v.iter().enumerate() {
                out[x ^ t.x_mask] += t.coef * z_sign(x, t.z_mask) * vx;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(op: &dyn LinearOperator) -> Vec<Vec<f64>> {
        let n = op.dim();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut out = vec![0.0; n];
            op.apply(&e, &mut out);
            cols.push(out);
        }
        cols
    }

    #[test]
    fn toric_hamiltonian_is_symmetric() {
        let l = Lattice::new(2).unwrap();
        let mut f = FieldConfig::zeros(8);
        f.bz = vec![0.3, -0.2, 0.0, 0.5, 0.1, 0.0, -0.4, 0.2];
        f.bx = vec![0.1, 0.0, 0.6, -0.3, 0.0, 0.2, 0.1, -0.1];
        let h = ToricHamiltonian::new(&l, &f).unwrap();
        let m = dense(&h);
        for i in 0..m.len() {
            for j in 0..m.len() {
                assert!((m[i][j] - m[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_fields_shift_toric_code_by_two_k_squared() {
        let l = Lattice::new(2).unwrap();
        let h = ToricHamiltonian::new(&l, &FieldConfig::zeros(8)).unwrap();
        let tc = PauliSum::toric_code(&l).unwrap();
        let (a, b) = (dense(&h), dense(&tc));
        for i in 0..256 {
            for j in 0..256 {
                let shift = if i == j { 8.0 } else { 0.0 };
                assert!((a[i][j] - b[i][j] - shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_y_terms_and_oversized_registers() {
        let mut p = PauliSum::new(4);
        assert!(p.push(1.0, 0b0011, 0b0010).is_err());
        assert!(p.push(1.0, 0b10000, 0).is_err());
        assert!(ToricHamiltonian::new(&Lattice::new(4).unwrap(), &FieldConfig::zeros(32)).is_err());
    }
}
