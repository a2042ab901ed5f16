use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Default hard cap on |b| for any edge.
pub const B_CAP: f64 = 5.0;

/// Per-edge field parameters `b = βλ`: `bz` couples to σ^z inside the star
/// terms and `bx` to σ^x inside the plaquette terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub bz: Vec<f64>,
    pub bx: Vec<f64>,
}

/// Which stabilizer sectors carry nonzero fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sectors {
    None,
    StarOnly,
    PlaquetteOnly,
    Mixed,
}

impl FieldConfig {
    pub fn zeros(n_edges: usize) -> Self {
        FieldConfig {
            bz: vec![0.0; n_edges],
            bx: vec![0.0; n_edges],
        }
    }

    pub fn star_only(bz: Vec<f64>) -> Self {
        let n = bz.len();
        FieldConfig {
            bz,
            bx: vec![0.0; n],
        }
    }

    pub fn plaquette_only(bx: Vec<f64>) -> Self {
        let n = bx.len();
        FieldConfig {
            bz: vec![0.0; n],
            bx,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.bz.len()
    }

    /// Checks lengths against the lattice, finiteness and the magnitude cap.
    pub fn validate(&self, lattice: &Lattice, cap: f64) -> Result<()> {
        let n = lattice.n_edges();
        if self.bz.len() != n || self.bx.len() != n {
            return Err(Error::InvalidArgument(format!(
                "field config has {}/{} entries, lattice has {n} edges",
                self.bz.len(),
                self.bx.len()
            )));
        }
        for (name, v) in [("bz", &self.bz), ("bx", &self.bx)] {
            if let Some((i, b)) = v
                .iter()
                .enumerate()
                .find(|(_, b)| !b.is_finite() || b.abs() > cap)
            {
                return Err(Error::InvalidArgument(format!(
                    "{name}[{i}] = {b} is not finite or exceeds the cap {cap}"
                )));
            }
        }
        Ok(())
    }

    pub fn sectors(&self) -> Sectors {
        let z = self.bz.iter().any(|&b| b != 0.0);
        let x = self.bx.iter().any(|&b| b != 0.0);
        match (z, x) {
            (false, false) => Sectors::None,
            (true, false) => Sectors::StarOnly,
            (false, true) => Sectors::PlaquetteOnly,
            (true, true) => Sectors::Mixed,
        }
    }

    /// Exchanges the two sectors; pairs with [`Lattice::dual`].
    pub fn swapped(&self) -> Self {
        FieldConfig {
            bz: self.bx.clone(),
            bx: self.bz.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.bz
            .iter()
            .chain(self.bx.iter())
            .fold(0.0, |m, b| m.max(b.abs()))
    }

    /// `self - scale * other`, entrywise.
    pub fn minus_scaled(&self, other: &FieldConfig, scale: f64) -> Self {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - scale * y).collect();
        FieldConfig {
            bz: sub(&self.bz, &other.bz),
            bx: sub(&self.bx, &other.bx),
        }
    }

    pub fn plus_scaled(&self, other: &FieldConfig, scale: f64) -> Self {
        self.minus_scaled(other, -scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let l = Lattice::new(2).unwrap();
        let mut f = FieldConfig::zeros(8);
        assert!(f.validate(&l, B_CAP).is_ok());
        f.bz[3] = 5.5;
        assert!(f.validate(&l, B_CAP).is_err());
        f.bz[3] = f64::NAN;
        assert!(f.validate(&l, B_CAP).is_err());
        assert!(FieldConfig::zeros(7).validate(&l, B_CAP).is_err());
    }

    #[test]
    fn sector_classification() {
        let mut f = FieldConfig::zeros(8);
        assert_eq!(f.sectors(), Sectors::None);
        f.bz[0] = 0.1;
        assert_eq!(f.sectors(), Sectors::StarOnly);
        assert_eq!(f.swapped().sectors(), Sectors::PlaquetteOnly);
        f.bx[1] = -0.1;
        assert_eq!(f.sectors(), Sectors::Mixed);
        assert_eq!(f.max_abs(), 0.1);
    }
}
