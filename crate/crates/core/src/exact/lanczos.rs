//! Thick-restart Lanczos for the lowest eigenpair of a real symmetric operator.
//!
//! Each cycle extends an orthonormal basis to `krylov_dim` vectors with full
//! Gram–Schmidt reorthogonalization, solves the projected
//! problem, and restarts from the `keep` lowest Ritz vectors plus the current
//! residual direction. If restarts run out, shifted power iteration polishes
//! the best vector found.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::operator::LinearOperator;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanczosOptions {
    /// Target residual `‖Hv − Ev‖` for a unit vector `v`.
    pub tol: f64,
    pub krylov_dim: usize,
    /// Ritz vectors carried across a restart.
    pub keep: usize,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            krylov_dim: 30,
            keep: 10,
            max_restarts: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub matvecs: usize,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums break the dependency chain.
    let mut s = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            s[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Rayleigh quotient and residual norm of a unit vector.
fn residual(op: &dyn LinearOperator, v: &[f64], hv: &mut [f64]) -> (f64, f64) {
    op.apply(v, hv);
    let theta = dot(v, hv);
    let r = hv
        .iter()
        .zip(v)
        .map(|(h, x)| (h - theta * x).powi(2))
        .sum::<f64>()
        .sqrt();
    (theta, r)
}

pub fn lowest_eigenpair(
    op: &dyn LinearOperator,
    start: Vec<f64>,
    opts: &LanczosOptions,
) -> Result<EigenPair> {
    lowest_eigenpair_projected(op, start, opts, &|_: &mut [f64]| {})
}

/// As [`lowest_eigenpair`], restricted to the range of an orthogonal
/// projector that commutes with the operator. `project` is applied to every
/// new basis vector so roundoff cannot leak out of the subspace.
pub fn lowest_eigenpair_projected(
    op: &dyn LinearOperator,
    start: Vec<f64>,
    opts: &LanczosOptions,
    project: &dyn Fn(&mut [f64]),
) -> Result<EigenPair> {
    let n = op.dim();
    if start.len() != n {
        return Err(Error::InvalidArgument("start vector has wrong dimension".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let mut x = start;
    project(&mut x);
    let nx = norm(&x);
    if nx == 0.0 || !nx.is_finite() {
        return Err(Error::InvalidArgument("start vector must be nonzero".into()));
    }
    scale(&mut x, 1.0 / nx);

    let m = opts.krylov_dim.clamp(3, n.max(3));
    let keep = opts.keep.clamp(1, m - 2);
    let mut matvecs = 0;
    let mut hv = vec![0.0; n];
    let mut best: Option<(f64, f64, Vec<f64>)> = None;

    let mut basis: Vec<Vec<f64>> = vec![x];
    // Projected matrix `Qᵀ H Q`; columns of restarted Ritz vectors are set at
    // restart, the rest are filled in as each basis vector is expanded.
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut w = vec![0.0; n];

    // Vectors before `arrow` are restarted Ritz vectors coupled to every
    // later vector; from `arrow + 1` on the three-term recurrence holds.
    let mut arrow = 0;
    for _ in 0..=opts.max_restarts {
        let mut beta_last = 0.0;
        let mut invariant = false;
        loop {
            let j = basis.len() - 1;
            op.apply(&basis[j], &mut w);
            matvecs += 1;
            project(&mut w);
            let mut coef = vec![0.0; j + 1];
            if j > arrow {
                // Local Lanczos step, then one full pass removes the
                // roundoff-level remainder.
                let alpha = dot(&basis[j], &w);
                let beta = t[(j - 1, j)];
                axpy(-alpha, &basis[j], &mut w);
                axpy(-beta, &basis[j - 1], &mut w);
                coef[j] = alpha;
                coef[j - 1] = beta;
                orthogonalize(&basis, &mut w, &mut coef);
            } else {
                for _ in 0..2 {
                    orthogonalize(&basis, &mut w, &mut coef);
                }
            }
            for (i, &c) in coef.iter().enumerate() {
                t[(i, j)] = c;
                t[(j, i)] = c;
            }
            let b = norm(&w);
            let size = coef.iter().fold(1.0f64, |a, c| a.max(c.abs()));
            if b <= 1e-13 * size {
                invariant = true;
                break;
            }
            scale(&mut w, 1.0 / b);
            beta_last = b;
            if j + 1 == m {
                break;
            }
            t[(j, j + 1)] = b;
            t[(j + 1, j)] = b;
            basis.push(w.clone());
        }

        let k = basis.len();
        let eig = SymmetricEigen::new(t.view((0, 0), (k, k)).into_owned());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let y0: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
        let estimate = if invariant { 0.0 } else { beta_last * y0[k - 1].abs() };

        if estimate <= opts.tol {
            let mut ritz = combine(&basis, &y0);
            project(&mut ritz);
            let nr = norm(&ritz);
            scale(&mut ritz, 1.0 / nr);
            let (theta, res) = residual(op, &ritz, &mut hv);
            matvecs += 1;
            if res <= opts.tol {
                return Ok(EigenPair {
                    value: theta,
                    vector: ritz,
                    residual: res,
                    matvecs,
                });
            }
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, theta, ritz));
            }
            if invariant {
                break;
            }
        }

        // Thick restart: lowest Ritz vectors, then the residual direction.
        let p = keep.min(k - 1);
        let mut next: Vec<Vec<f64>> = order[..p]
            .iter()
            .map(|&c| {
                let col: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
                let mut v = combine(&basis, &col);
                project(&mut v);
                v
            })
            .collect();
        t.fill(0.0);
        for (i, &c) in order[..p].iter().enumerate() {
            t[(i, i)] = eig.eigenvalues[c];
            let coupling = beta_last * eig.eigenvectors[(k - 1, c)];
            t[(i, p)] = coupling;
            t[(p, i)] = coupling;
        }
        next.push(w.clone());
        basis = next;
        arrow = p;
    }

    let best = match best {
        Some(b) => b,
        None => {
            let mut v = basis[0].clone();
            let nv = norm(&v);
            scale(&mut v, 1.0 / nv);
            let (theta, res) = residual(op, &v, &mut hv);
            matvecs += 1;
            (res, theta, v)
        }
    };
    power_polish(op, best, opts, matvecs, project)
}

/// One classical Gram–Schmidt pass, `w ← w − Q Qᵀ w`, accumulating `Qᵀ w`
/// into `coef`. Works in cache-sized blocks so each basis vector is read
/// once for the projections and once for the update.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64], coef: &mut [f64]) {
    const BLOCK: usize = 2048;
    let mut c = vec![0.0; basis.len()];
    for (bi, wb) in w.chunks(BLOCK).enumerate() {
        let lo = bi * BLOCK;
        for (ci, q) in c.iter_mut().zip(basis) {
            *ci += dot(&q[lo..lo + wb.len()], wb);
        }
    }
    for (bi, wb) in w.chunks_mut(BLOCK).enumerate() {
        let lo = bi * BLOCK;
        for (ci, q) in c.iter().zip(basis) {
            axpy(-ci, &q[lo..lo + wb.len()], wb);
        }
    }
    for (a, ci) in coef.iter_mut().zip(&c) {
        *a += ci;
    }
}

fn combine(basis: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (q, &c) in basis.iter().zip(coef) {
        axpy(c, q, &mut out);
    }
    out
}

/// Shifted power iteration `v ← (σ − H) v` from the best vector so far.
fn power_polish(
    op: &dyn LinearOperator,
    best: (f64, f64, Vec<f64>),
    opts: &LanczosOptions,
    mut matvecs: usize,
    project: &dyn Fn(&mut [f64]),
) -> Result<EigenPair> {
    let (mut res, mut theta, mut x) = best;
    let n = x.len();
    // Shift above the top of the spectrum, estimated by a few power steps.
    let mut probe: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut hp = vec![0.0; n];
    let mut upper = 0.0f64;
    for _ in 0..20 {
        let np = norm(&probe);
        scale(&mut probe, 1.0 / np);
        op.apply(&probe, &mut hp);
        matvecs += 1;
        upper = upper.max(norm(&hp));
        std::mem::swap(&mut probe, &mut hp);
    }
    let shift = 1.1 * upper + theta.abs();
    let mut hv = vec![0.0; n];
    for _ in 0..(opts.max_restarts * opts.krylov_dim).min(20_000) {
        op.apply(&x, &mut hv);
        matvecs += 1;
        for (h, xi) in hv.iter_mut().zip(&x) {
            *h = shift * xi - *h;
        }
        project(&mut hv);
        let nh = norm(&hv);
        scale(&mut hv, 1.0 / nh);
        std::mem::swap(&mut x, &mut hv);
        (theta, res) = residual(op, &x, &mut hv);
        matvecs += 1;
        if res <= opts.tol {
            return Ok(EigenPair {
                value: theta,
                vector: x,
                residual: res,
                matvecs,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: matvecs,
        residual: res,
    })
}
