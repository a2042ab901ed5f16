//! Heat-capacity scans of the pseudo-spin Ising model under quenched
//! coupling disorder.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{fidelity_susceptibility, McParams};
use crate::lattice::Lattice;
use crate::metrics::csv_error;
use crate::rng::Seed;

/// Distribution of the per-edge couplings λ_i.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "parameter")]
pub enum DisorderModel {
    /// All λ = +1.
    Uniform,
    /// All λ = -1.
    Negative,
    /// All λ = 0: the bare toric code.
    Zero,
    /// λ = 0 with probability q, else +1.
    BondDilution(f64),
    /// λ = -1 with probability p, else +1.
    SignFlip(f64),
}

impl DisorderModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisorderModel::BondDilution(x) | DisorderModel::SignFlip(x) if !(0.0..=1.0).contains(&x) => {
                Err(Error::InvalidArgument(format!("disorder parameter {x} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DisorderModel::Uniform => "uniform".into(),
            DisorderModel::Negative => "negative".into(),
            DisorderModel::Zero => "zero".into(),
            DisorderModel::BondDilution(q) => format!("dilution_q{q}"),
            DisorderModel::SignFlip(p) => format!("sign_flip_p{p}"),
        }
    }
}

pub fn generate_lambda(lattice: &Lattice, model: DisorderModel, seed: Seed) -> Result<Vec<f64>> {
    model.validate()?;
    let mut rng = seed.rng();
    Ok((0..lattice.n_edges())
        .map(|_| match model {
            DisorderModel::Uniform => 1.0,
            DisorderModel::Negative => -1.0,
            DisorderModel::Zero => 0.0,
            DisorderModel::BondDilution(q) => {
                if rng.random_bool(q) {
                    0.0
                } else {
                    1.0
                }
            }
            DisorderModel::SignFlip(p) => {
                if rng.random_bool(p) {
                    -1.0
                } else {
                    1.0
                }
            }
        })
        .collect())
}

/// One `(β, realization)` sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub beta: f64,
    pub cv: f64,
    pub cv_stderr: f64,
    pub chi_f: f64,
    pub realization: usize,
}

/// Disorder average at one β.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragePoint {
    pub beta: f64,
    pub cv: f64,
    /// Standard error of the disorder average.
    pub cv_stderr: f64,
    /// Smallest and largest realization value.
    pub spread: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Quadratic interpolation through the maximum and its neighbours.
    pub beta: f64,
    pub cv: f64,
    pub cv_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub k: usize,
    pub model: DisorderModel,
    pub points: Vec<ScanPoint>,
    pub average: Vec<AveragePoint>,
    /// Interior maximum standing out from both grid ends by three combined
    /// standard errors, if any.
    pub peak: Option<Peak>,
}

impl Scan {
    pub fn n_sites(&self) -> usize {
        self.k * self.k
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.points {
            out.serialize(p).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `C_v(β) = 4β² χ_F` for `n_realizations` independent draws of λ.
pub fn scan_transition(
    lattice: &Lattice,
    model: DisorderModel,
    beta_grid: &[f64],
    mc: &McParams,
    n_realizations: usize,
    seed: Seed,
) -> Result<Scan> {
    model.validate()?;
    if beta_grid.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 β values".into()));
    }
    if beta_grid.windows(2).any(|w| !(w[1] > w[0])) || beta_grid[0] < 0.0 {
        return Err(Error::InvalidArgument("β grid must be nonnegative and increasing".into()));
    }
    if n_realizations == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let lambdas = (0..n_realizations)
        .map(|r| generate_lambda(lattice, model, seed.child(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..beta_grid.len())
        .flat_map(|b| (0..n_realizations).map(move |r| (b, r)))
        .collect();
    let run = |&(b, r): &(usize, usize)| -> Result<ScanPoint> {
        let chain_seed = seed.child(1 << 32 | (b * n_realizations + r) as u64);
        let s = fidelity_susceptibility(lattice, &lambdas[r], beta_grid[b], mc, chain_seed)?;
        Ok(ScanPoint {
            beta: beta_grid[b],
            cv: s.heat_capacity,
            cv_stderr: s.heat_capacity_err,
            chi_f: s.chi_f,
            realization: r,
        })
    };
    #[cfg(feature = "parallel")]
    let points: Vec<ScanPoint> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let points: Vec<ScanPoint> = jobs.iter().map(run).collect::<Result<_>>()?;

    let average: Vec<AveragePoint> = points
        .chunks(n_realizations)
        .map(|c| average_point(c))
        .collect();
    let peak = find_peak(&average);
    Ok(Scan {
        k: lattice.k(),
        model,
        points,
        average,
        peak,
    })
}

fn average_point(c: &[ScanPoint]) -> AveragePoint {
    let n = c.len() as f64;
    let mean = c.iter().map(|p| p.cv).sum::<f64>() / n;
    // Sample-to-sample scatter when there is disorder; otherwise the
    // within-chain errors.
    let chain = (c.iter().map(|p| p.cv_stderr.powi(2)).sum::<f64>()).sqrt() / n;
    let scatter = if c.len() > 1 {
        (c.iter().map(|p| (p.cv - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    AveragePoint {
        beta: c[0].beta,
        cv: mean,
        cv_stderr: chain.max(scatter),
        spread: c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.cv), hi.max(p.cv))
        }),
    }
}

fn find_peak(avg: &[AveragePoint]) -> Option<Peak> {
    let (j, top) = avg
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cv.total_cmp(&b.1.cv))?;
    let (first, last) = (avg.first()?, avg.last()?);
    let stands_out = |edge: &AveragePoint| {
        top.cv - edge.cv > 3.0 * (top.cv_stderr.powi(2) + edge.cv_stderr.powi(2)).sqrt()
    };
    if j == 0 || j + 1 == avg.len() || !stands_out(first) || !stands_out(last) {
        return None;
    }
    let (a, b, c) = (&avg[j - 1], top, &avg[j + 1]);
    // Vertex of the parabola through the three points.
    let num = (b.beta - a.beta).powi(2) * (b.cv - c.cv) - (b.beta - c.beta).powi(2) * (b.cv - a.cv);
    let den = (b.beta - a.beta) * (b.cv - c.cv) - (b.beta - c.beta) * (b.cv - a.cv);
    let beta = if den.abs() > 0.0 { b.beta - 0.5 * num / den } else { b.beta };
    Some(Peak {
        beta: beta.clamp(a.beta, c.beta),
        cv: top.cv,
        cv_stderr: top.cv_stderr,
    })
}

/// Outcome of comparing scans of the same disorder model at two sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub transition: bool,
    pub beta: Option<f64>,
    /// Peak heat capacity per site at the smaller and the larger size.
    pub peak_per_site: Option<(f64, f64)>,
    pub reason: String,
}

/// A transition needs a peak at both sizes whose height per site grows with
/// the lattice by three combined standard errors. A bump whose height per
/// site does not grow comes from finite clusters or frozen local
/// excitations, not from long-range order.
pub fn detect_transition(small: &Scan, large: &Scan) -> Detection {
    let none = |reason: &str| Detection {
        transition: false,
        beta: None,
        peak_per_site: None,
        reason: reason.into(),
    };
    if small.k >= large.k {
        return none("scans must be ordered by lattice size");
    }
    let (Some(ps), Some(pl)) = (small.peak, large.peak) else {
        return none("no heat-capacity peak inside the scanned range");
    };
    let (ns, nl) = (small.n_sites() as f64, large.n_sites() as f64);
    let (hs, hl) = (ps.cv / ns, pl.cv / nl);
    let err = ((ps.cv_stderr / ns).powi(2) + (pl.cv_stderr / nl).powi(2)).sqrt();
    let grows = hl - hs > 3.0 * err;
    Detection {
        transition: grows,
        beta: grows.then_some(pl.beta),
        peak_per_site: Some((hs, hl)),
        reason: if grows {
            "peak height per site grows with lattice size".into()
        } else {
            "peak height per site does not grow with lattice size".into()
        },
    }
}
