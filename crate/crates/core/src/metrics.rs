//! Performance measures: single-qubit error probabilities from stabilizer
//! flip rates, and the coefficient-space distance between Hamiltonians.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::PauliSum;
use crate::fields::FieldConfig;
use crate::lattice::Lattice;
use crate::measurement::MeasurementSet;
use crate::rng::Seed;

/// Upper end of the flip-rate range on which e_r(p) is trusted.
pub const P_MAX: f64 = 0.4;
/// Largest single-qubit flip probability accepted by [`sample_p_curve`].
pub const ER_MAX: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Star,
    Plaquette,
}

/// `p = (1 - mean⟨S⟩)/2`, the probability that a stabilizer reads -1.
pub fn stabilizer_flip_rate(ms: &MeasurementSet, family: Family) -> f64 {
    let sector = match family {
        Family::Star => &ms.star,
        Family::Plaquette => &ms.plaquette,
    };
    ((1.0 - sector.mean_stabilizer()) / 2.0).clamp(0.0, 1.0)
}

/// Vertex flip rate when every edge flips independently with probability `e`.
pub fn parity_flip_rate(e: f64) -> f64 {
    (1.0 - (1.0 - 2.0 * e).powi(4)) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub e_r: f64,
    pub p: f64,
    pub stderr: f64,
}

/// Monte-Carlo p(e_r): flip every edge with probability `e_r`, count vertices
/// touching an odd number of flipped edges, and average over trials.
pub fn sample_p_curve(
    lattice: &Lattice,
    er_grid: &[f64],
    n_trials: usize,
    seed: Seed,
) -> Result<Vec<CurvePoint>> {
    if n_trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    if let Some(e) = er_grid.iter().find(|e| !(0.0..=ER_MAX).contains(*e)) {
        return Err(Error::InvalidArgument(format!(
            "e_r = {e} outside [0, {ER_MAX}]"
        )));
    }
    let nv = lattice.n_vertices();
    let mut parity = vec![false; nv];
    let mut points = Vec::with_capacity(er_grid.len());
    for (j, &e) in er_grid.iter().enumerate() {
        let mut rng = seed.child(j as u64).rng();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n_trials {
            parity.iter_mut().for_each(|x| *x = false);
            for i in 0..lattice.n_edges() {
                if rng.random_bool(e) {
                    let (a, b) = lattice.edge_vertices(i)?;
                    parity[a] ^= true;
                    parity[b] ^= true;
                }
            }
            let frac = parity.iter().filter(|&&x| x).count() as f64 / nv as f64;
            s1 += frac;
            s2 += frac * frac;
        }
        let n = n_trials as f64;
        let mean = s1 / n;
        let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
        points.push(CurvePoint {
            e_r: e,
            p: mean,
            stderr: (var / n).sqrt(),
        });
    }
    Ok(points)
}

/// `e_r(p) = c1 p + c2 p² + c3 p³ + c4 p⁴`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErPolynomial {
    pub coefficients: [f64; 4],
    /// Mean squared residual of the fit; zero for the published polynomial.
    pub mse: f64,
    pub p_range: (f64, f64),
    /// Lattice size the fitting curve was sampled on, if any.
    pub k: Option<usize>,
}

impl ErPolynomial {
    /// The published fit, obtained at k = 32.
    pub fn published() -> Self {
        ErPolynomial {
            coefficients: [0.2187, 0.72419, -2.5398, 4.90118],
            mse: 0.0,
            p_range: (0.0, P_MAX),
            k: Some(32),
        }
    }

    /// Evaluates at `p` clamped into `[0, P_MAX]`.
    pub fn eval(&self, p: f64) -> f64 {
        let q = p.clamp(0.0, P_MAX);
        if q != p {
            log::warn!("flip rate {p} outside [0, {P_MAX}], clamped");
        }
        self.coefficients.iter().rev().fold(0.0, |acc, c| (acc + c) * q)
    }

    pub fn derivative(&self, p: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coefficients;
        c1 + p * (2.0 * c2 + p * (3.0 * c3 + p * 4.0 * c4))
    }

    /// Checks `de_r/dp > 0` on a fine grid over `[lo, hi]`.
    pub fn is_increasing(&self, lo: f64, hi: f64) -> bool {
        (0..=400).all(|j| self.derivative(lo + (hi - lo) * j as f64 / 400.0) > 0.0)
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }
}

/// Zero-intercept least-squares fit of e_r as a quartic in p.
pub fn fit_er_polynomial(curve: &[CurvePoint], k: Option<usize>) -> Result<ErPolynomial> {
    if curve.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 curve points, got {}",
            curve.len()
        )));
    }
    let n = curve.len();
    let a = DMatrix::from_fn(n, 4, |r, c| curve[r].p.powi(c as i32 + 1));
    let y = DVector::from_iterator(n, curve.iter().map(|pt| pt.e_r));
    let svd = a.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::InvalidArgument(format!(
            "ill-conditioned fit (singular values {smax:.3e} / {smin:.3e})"
        )));
    }
    let c = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let resid = &a * &c - &y;
    let lo = curve.iter().map(|pt| pt.p).fold(f64::INFINITY, f64::min);
    let hi = curve.iter().map(|pt| pt.p).fold(0.0, f64::max);
    Ok(ErPolynomial {
        coefficients: [c[0], c[1], c[2], c[3]],
        mse: resid.norm_squared() / n as f64,
        p_range: (lo, hi),
        k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitError {
    pub bit: f64,
    pub phase: f64,
}

/// Phase-flip probability from the star flip rate, bit-flip probability from
/// the plaquette flip rate.
pub fn single_qubit_error(ms: &MeasurementSet, poly: &ErPolynomial) -> QubitError {
    let e = |f| poly.eval(stabilizer_flip_rate(ms, f)).clamp(0.0, 1.0);
    QubitError {
        bit: e(Family::Plaquette),
        phase: e(Family::Star),
    }
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for pt in curve {
        out.serialize(pt).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(r: R) -> Result<Vec<CurvePoint>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Version of the operator-basis ordering used by [`CoefficientVector`].
pub const BASIS_VERSION: u32 = 1;
/// Coefficients per star or plaquette: stabilizer, identity, then the
/// 4 + 6 + 4 + 1 products of the site's single-spin operators.
pub const TERMS_PER_SITE: usize = 17;

/// Subsets of the four site edges in basis order: by size, then
/// lexicographically by position in the site's edge list.
fn subsets() -> [u8; 16] {
    let mut s: Vec<u8> = (0u8..16).collect();
    s.sort_by_key(|&m| (m.count_ones(), (0..4).filter(|t| m >> t & 1 == 1).collect::<Vec<_>>()));
    s.try_into().unwrap()
}

/// Expansion coefficients of the two-sector Hamiltonian in the product basis.
///
/// For every star (then every plaquette) the block is
/// `[-1, c_∅, c_{0}, c_{1}, …, c_{0123}]`, where `c_S` multiplies the product
/// of σ^z (σ^x for plaquettes) over the site edges in `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub basis_version: u32,
    pub k: usize,
    pub values: Vec<f64>,
}

pub fn coefficient_vector(lattice: &Lattice, fields: &FieldConfig) -> Result<CoefficientVector> {
    fields.validate(lattice, f64::INFINITY)?;
    let order = subsets();
    let mut values = Vec::with_capacity(2 * lattice.n_vertices() * TERMS_PER_SITE);
    for (sites, b) in [(lattice.stars(), &fields.bz), (lattice.plaquettes(), &fields.bx)] {
        for site in sites {
            let ch: Vec<f64> = site.iter().map(|&e| b[e].cosh()).collect();
            let sh: Vec<f64> = site.iter().map(|&e| -b[e].sinh()).collect();
            values.push(-1.0);
            for &m in &order {
                values.push((0..4).map(|t| if m >> t & 1 == 1 { sh[t] } else { ch[t] }).product());
            }
        }
    }
    Ok(CoefficientVector {
        basis_version: BASIS_VERSION,
        k: lattice.k(),
        values,
    })
}

impl CoefficientVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rebuilds `Σ c_m S_m` as an explicit Pauli sum.
    pub fn operator(&self, lattice: &Lattice) -> Result<PauliSum> {
        if self.k != lattice.k() || self.values.len() != 2 * lattice.n_vertices() * TERMS_PER_SITE {
            return Err(Error::InvalidArgument("coefficient vector does not match lattice".into()));
        }
        let order = subsets();
        let mut h = PauliSum::new(lattice.n_edges());
        let mask = |site: &[usize; 4], m: u8| {
            (0..4).filter(|t| m >> t & 1 == 1).fold(0usize, |acc, t| acc | 1 << site[t])
        };
        let blocks = self.values.chunks(TERMS_PER_SITE);
        let sites = lattice.stars().iter().map(|s| (s, true));
        let sites = sites.chain(lattice.plaquettes().iter().map(|p| (p, false)));
        for ((site, is_star), block) in sites.zip(blocks) {
            let full = mask(site, 0b1111);
            let (x, z) = if is_star { (full, 0) } else { (0, full) };
            h.push(block[0], x, z)?;
            for (&m, &c) in order.iter().zip(&block[1..]) {
                let sub = mask(site, m);
                let (x, z) = if is_star { (0, sub) } else { (sub, 0) };
                h.push(c, x, z)?;
            }
        }
        Ok(h)
    }
}

/// `Δ_H = ‖ĉ_a - ĉ_b‖₂` between unit-normalized coefficient vectors.
pub fn hamiltonian_error(a: &FieldConfig, b: &FieldConfig, lattice: &Lattice) -> Result<f64> {
    let ca = coefficient_vector(lattice, a)?;
    let cb = coefficient_vector(lattice, b)?;
    let (na, nb) = (ca.norm(), cb.norm());
    Ok(ca
        .values
        .iter()
        .zip(&cb.values)
        .map(|(x, y)| (x / na - y / nb).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Divides a trace of raw Δ_H values by its first entry.
pub fn rescale_trace(raw: &[f64]) -> Vec<f64> {
    match raw.first() {
        Some(&d0) if d0 > 0.0 => raw.iter().map(|d| d / d0).collect(),
        _ => vec![0.0; raw.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{LinearOperator, ToricHamiltonian};
    use crate::measurement::{Sampling, SectorMeasurement};

    fn with_stabilizers(star: Vec<f64>, plaq: Vec<f64>) -> MeasurementSet {
        let ne = 2 * star.len();
        MeasurementSet {
            star: SectorMeasurement::exact(star, vec![1.0; ne], vec![0.0; ne]),
            plaquette: SectorMeasurement::exact(plaq, vec![1.0; ne], vec![0.0; ne]),
            sampling: Sampling::Exact,
        }
    }

    #[test]
    fn flip_rate_arithmetic() {
        let ms = with_stabilizers(vec![1.0; 4], vec![0.8; 4]);
        assert_eq!(stabilizer_flip_rate(&ms, Family::Star), 0.0);
        assert!((stabilizer_flip_rate(&ms, Family::Plaquette) - 0.1).abs() < 1e-15);
        let ms = with_stabilizers(vec![1.0, 0.6], vec![1.0; 2]);
        assert!((stabilizer_flip_rate(&ms, Family::Star) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn published_polynomial_values() {
        let poly = ErPolynomial::published();
        assert_eq!(poly.eval(0.0), 0.0);
        assert!((poly.eval(0.1) - 0.02706).abs() < 5e-6);
        assert!(poly.is_increasing(0.0, P_MAX));
        assert_eq!(poly.eval(0.7), poly.eval(P_MAX));
    }

    #[test]
    fn single_qubit_error_from_flip_rates() {
        let poly = ErPolynomial::published();
        let pure = with_stabilizers(vec![1.0; 9], vec![1.0; 9]);
        assert_eq!(single_qubit_error(&pure, &poly), QubitError { bit: 0.0, phase: 0.0 });
        let ms = with_stabilizers(vec![0.8; 9], vec![1.0; 9]);
        let q = single_qubit_error(&ms, &poly);
        assert!((q.phase - 0.02706).abs() < 5e-6);
        assert_eq!(q.bit, 0.0);
    }

    #[test]
    fn sampled_curve_follows_parity_formula() {
        let l = Lattice::new(8).unwrap();
        let grid: Vec<f64> = (0..=10).map(|j| 0.02 * j as f64).collect();
        let curve = sample_p_curve(&l, &grid, 400, Seed(3)).unwrap();
        assert_eq!(curve[0].p, 0.0);
        for pt in &curve[1..] {
            let exact = parity_flip_rate(pt.e_r);
            assert!((pt.p - exact).abs() < 4.0 * pt.stderr, "{pt:?} vs {exact}");
        }
    }

    #[test]
    fn small_error_slope_is_four() {
        let e = 0.005;
        let slope = parity_flip_rate(e) / e;
        assert!((slope - 4.0).abs() < 0.05 * 4.0);
    }

    #[test]
    fn analytic_refit_matches_published_polynomial() {
        let curve: Vec<CurvePoint> = (0..=40)
            .map(|j| {
                let e = ER_MAX * j as f64 / 40.0;
                CurvePoint { e_r: e, p: parity_flip_rate(e), stderr: 0.0 }
            })
            .collect();
        let fit = fit_er_polynomial(&curve, None).unwrap();
        let reference = ErPolynomial::published();
        for j in 0..=70 {
            let p = 0.005 * j as f64;
            assert!((fit.eval(p) - reference.eval(p)).abs() <= 0.01, "p = {p}");
        }
        assert!(fit.is_increasing(0.0, P_MAX));
        assert!(fit.mse < 1e-6);
    }

    #[test]
    fn fit_rejects_short_and_degenerate_curves() {
        let pt = CurvePoint { e_r: 0.1, p: 0.3, stderr: 0.0 };
        assert!(fit_er_polynomial(&[pt; 5], None).is_err());
        assert!(fit_er_polynomial(&[pt; 12], None).is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let curve = vec![CurvePoint { e_r: 0.01, p: 0.0392, stderr: 1e-3 }];
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &curve).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("e_r,p,stderr\n"));
        assert_eq!(read_curve_csv(buf.as_slice()).unwrap(), curve);
    }

    #[test]
    fn coefficient_layout() {
        let l = Lattice::new(2).unwrap();
        let c = coefficient_vector(&l, &FieldConfig::zeros(8)).unwrap();
        assert_eq!(c.values.len(), 2 * 4 * TERMS_PER_SITE);
        for block in c.values.chunks(TERMS_PER_SITE) {
            assert_eq!(block[0], -1.0);
            assert_eq!(block[1], 1.0);
            assert!(block[2..].iter().all(|&v| v == 0.0));
        }

        let mut f = FieldConfig::zeros(8);
        f.bz[0] = 0.5;
        let c = coefficient_vector(&l, &f).unwrap();
        let (s, _) = l.edge_vertices(0).unwrap();
        let pos = l.star_edges(s).unwrap().iter().position(|&e| e == 0).unwrap();
        let block = &c.values[s * TERMS_PER_SITE..(s + 1) * TERMS_PER_SITE];
        assert_eq!(block[1], 0.5f64.cosh());
        for t in 0..4 {
            let expect = if t == pos { -(0.5f64.sinh()) } else { 0.0 };
            assert_eq!(block[2 + t], expect);
        }
        assert!(block[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expansion_reproduces_the_operator() {
        for (k, seed) in [(2, 1), (2, 2), (3, 3)] {
            let l = Lattice::new(k).unwrap();
            let n = l.n_edges();
            let mut rng = Seed(seed).rng();
            let mut f = FieldConfig::zeros(n);
            for b in f.bz.iter_mut().chain(f.bx.iter_mut()) {
                *b = rng.random_range(-1.7..1.7);
            }
            let direct = ToricHamiltonian::new(&l, &f).unwrap();
            let expanded = coefficient_vector(&l, &f).unwrap().operator(&l).unwrap();
            let v: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mut a, mut b) = (vec![0.0; v.len()], vec![0.0; v.len()]);
            direct.apply(&v, &mut a);
            expanded.apply(&v, &mut b);
            let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn hamiltonian_error_is_a_metric() {
        let l = Lattice::new(3).unwrap();
        let mut rng = Seed(5).rng();
        let mut rand_fields = || {
            let mut f = FieldConfig::zeros(18);
            for b in f.bz.iter_mut().chain(f.bx.iter_mut()) {
                *b = rng.random_range(-1.0..1.0);
            }
            f
        };
        let (a, b, c) = (rand_fields(), rand_fields(), rand_fields());
        let zero = FieldConfig::zeros(18);
        assert_eq!(hamiltonian_error(&a, &a, &l).unwrap(), 0.0);
        assert_eq!(hamiltonian_error(&zero, &zero, &l).unwrap(), 0.0);
        let ab = hamiltonian_error(&a, &b, &l).unwrap();
        assert_eq!(ab, hamiltonian_error(&b, &a, &l).unwrap());
        let ac = hamiltonian_error(&a, &c, &l).unwrap();
        let cb = hamiltonian_error(&c, &b, &l).unwrap();
        assert!(ab <= ac + cb + 1e-15);
        assert!(ab > 0.0 && ab <= 2.0);
        assert_eq!(rescale_trace(&[0.5, 0.25, 0.0]), vec![1.0, 0.5, 0.0]);
    }
}
