//! Geometry of the k×k periodic square lattice with qubits on edges.
//!
//! Vertices and plaquettes are both indexed `r * k + c`. Edges are laid out as
//! `(row, col, orientation)` flattened row-major with the horizontal block
//! first: horizontal edge `(r, c)` has index `r * k + c` and joins vertex
//! `(r, c)` to `(r, c + 1)`; vertical edge `(r, c)` has index `k² + r * k + c`
//! and joins `(r, c)` to `(r + 1, c)`. Plaquette `(r, c)` has corners
//! `(r, c)` and `(r + 1, c + 1)`.
//!
//! The dual lattice swaps the roles of vertices and plaquettes while keeping
//! edge (qubit) indices fixed, so a star of the dual is a plaquette of the
//! original. Running a star-sector computation on the dual is therefore the
//! plaquette-sector computation on the original.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl Orientation {
    fn flipped(self) -> Self {
        match self {
            Orientation::Horizontal => Orientation::Vertical,
            Orientation::Vertical => Orientation::Horizontal,
        }
    }
}

/// Two endpoints of an edge, the stars around them and the edges on which
/// the product `A_s A_s'` acts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarPair {
    pub first: usize,
    pub second: usize,
    /// Edges belonging to both stars. `{i}` for k ≥ 3; two edges on a 2×2 torus.
    pub shared: Vec<usize>,
    /// `star(first) △ star(second)`, sorted.
    pub symmetric_difference: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    k: usize,
    stars: Vec<[usize; 4]>,
    plaquettes: Vec<[usize; 4]>,
    edge_vertices: Vec<[usize; 2]>,
    edge_plaquettes: Vec<[usize; 2]>,
    orientation: Vec<Orientation>,
    /// Non-contractible loops whose σ^z products commute with every star.
    star_loops: [Vec<usize>; 2],
    /// Non-contractible loops whose σ^x products commute with every plaquette.
    plaquette_loops: [Vec<usize>; 2],
    is_dual: bool,
}

impl Lattice {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "lattice size must be at least 2, got {k}"
            )));
        }
        let n = k * k;
        let wrap = |x: isize| -> usize { x.rem_euclid(k as isize) as usize };
        let site = |r: isize, c: isize| wrap(r) * k + wrap(c);
        let h = |r: isize, c: isize| site(r, c);
        let v = |r: isize, c: isize| n + site(r, c);

        let mut stars = Vec::with_capacity(n);
        let mut plaquettes = Vec::with_capacity(n);
        for r in 0..k as isize {
            for c in 0..k as isize {
                stars.push([h(r, c), v(r, c), h(r, c - 1), v(r - 1, c)]);
                plaquettes.push([h(r, c), v(r, c + 1), h(r + 1, c), v(r, c)]);
            }
        }

        let mut edge_vertices = vec![[0; 2]; 2 * n];
        let mut edge_plaquettes = vec![[0; 2]; 2 * n];
        let mut orientation = vec![Orientation::Horizontal; 2 * n];
        for r in 0..k as isize {
            for c in 0..k as isize {
                edge_vertices[h(r, c)] = [site(r, c), site(r, c + 1)];
                edge_plaquettes[h(r, c)] = [site(r - 1, c), site(r, c)];
                edge_vertices[v(r, c)] = [site(r, c), site(r + 1, c)];
                edge_plaquettes[v(r, c)] = [site(r, c - 1), site(r, c)];
                orientation[v(r, c)] = Orientation::Vertical;
            }
        }

        let ks = k as isize;
        let star_loops = [
            (0..ks).map(|c| h(0, c)).collect(),
            (0..ks).map(|r| v(r, 0)).collect(),
        ];
        let plaquette_loops = [
            (0..ks).map(|c| v(0, c)).collect(),
            (0..ks).map(|r| h(r, 0)).collect(),
        ];

        Ok(Lattice {
            k,
            stars,
            plaquettes,
            edge_vertices,
            edge_plaquettes,
            orientation,
            star_loops,
            plaquette_loops,
            is_dual: false,
        })
    }

    /// Lattice with stars and plaquettes exchanged. `l.dual().dual() == l`.
    pub fn dual(&self) -> Self {
        Lattice {
            k: self.k,
            stars: self.plaquettes.clone(),
            plaquettes: self.stars.clone(),
            edge_vertices: self.edge_plaquettes.clone(),
            edge_plaquettes: self.edge_vertices.clone(),
            orientation: self.orientation.iter().map(|o| o.flipped()).collect(),
            star_loops: self.plaquette_loops.clone(),
            plaquette_loops: self.star_loops.clone(),
            is_dual: !self.is_dual,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_vertices(&self) -> usize {
        self.k * self.k
    }

    pub fn n_plaquettes(&self) -> usize {
        self.k * self.k
    }

    pub fn n_edges(&self) -> usize {
        2 * self.k * self.k
    }

    pub fn is_dual(&self) -> bool {
        self.is_dual
    }

    pub fn stars(&self) -> &[[usize; 4]] {
        &self.stars
    }

    pub fn plaquettes(&self) -> &[[usize; 4]] {
        &self.plaquettes
    }

    pub fn star_edges(&self, s: usize) -> Result<[usize; 4]> {
        self.stars
            .get(s)
            .copied()
            .ok_or_else(|| index_error("vertex", s, self.n_vertices()))
    }

    pub fn plaquette_edges(&self, p: usize) -> Result<[usize; 4]> {
        self.plaquettes
            .get(p)
            .copied()
            .ok_or_else(|| index_error("plaquette", p, self.n_plaquettes()))
    }

    pub fn edge_vertices(&self, i: usize) -> Result<(usize, usize)> {
        self.edge_vertices
            .get(i)
            .map(|&[a, b]| (a, b))
            .ok_or_else(|| index_error("edge", i, self.n_edges()))
    }

    pub fn edge_plaquettes(&self, i: usize) -> Result<(usize, usize)> {
        self.edge_plaquettes
            .get(i)
            .map(|&[a, b]| (a, b))
            .ok_or_else(|| index_error("edge", i, self.n_edges()))
    }

    pub fn orientation(&self, i: usize) -> Result<Orientation> {
        self.orientation
            .get(i)
            .copied()
            .ok_or_else(|| index_error("edge", i, self.n_edges()))
    }

    pub fn star_loops(&self) -> &[Vec<usize>; 2] {
        &self.star_loops
    }

    pub fn plaquette_loops(&self) -> &[Vec<usize>; 2] {
        &self.plaquette_loops
    }

    pub fn adjacent_star_pair(&self, i: usize) -> Result<StarPair> {
        let (first, second) = self.edge_vertices(i)?;
        let a = self.stars[first];
        let b = self.stars[second];
        let shared: Vec<usize> = a.iter().copied().filter(|e| b.contains(e)).collect();
        let mut symmetric_difference: Vec<usize> = a
            .iter()
            .chain(b.iter())
            .copied()
            .filter(|e| !shared.contains(e))
            .collect();
        symmetric_difference.sort_unstable();
        Ok(StarPair {
            first,
            second,
            shared,
            symmetric_difference,
        })
    }

    /// Other endpoint of edge `i` as seen from vertex `s`.
    #[inline]
    pub(crate) fn neighbour_across(&self, s: usize, i: usize) -> usize {
        let [a, b] = self.edge_vertices[i];
        if a == s {
            b
        } else {
            a
        }
    }

    pub fn translate_site(&self, site: usize, dr: usize, dc: usize) -> usize {
        let k = self.k;
        let (r, c) = (site / k, site % k);
        ((r + dr) % k) * k + (c + dc) % k
    }

    pub fn translate_edge(&self, i: usize, dr: usize, dc: usize) -> usize {
        let n = self.k * self.k;
        if i < n {
            self.translate_site(i, dr, dc)
        } else {
            n + self.translate_site(i - n, dr, dc)
        }
    }
}

fn index_error(kind: &str, index: usize, len: usize) -> Error {
    Error::InvalidArgument(format!("{kind} index {index} out of range (< {len})"))
}
