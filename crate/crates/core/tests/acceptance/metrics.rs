use toric_learn::gibbs::McParams;
use toric_learn::metrics::{fit_er_polynomial, parity_flip_rate, sample_p_curve, ErPolynomial};
use toric_learn::phase::{detect_transition, scan_transition, DisorderModel};
use toric_learn::{Lattice, Seed};

use crate::Outcome;

pub fn er_regression() -> Outcome {
    let grid: Vec<f64> = (0..21).map(|j| 0.01 * j as f64).collect();
    let curve = |k: usize| sample_p_curve(&Lattice::new(k).unwrap(), &grid, 2000, Seed(k as u64)).unwrap();
    let (c8, c16) = (curve(8), curve(16));

    let oracle_ok = c8.iter().chain(&c16).all(|p| (p.p - parity_flip_rate(p.e_r)).abs() <= 3.0 * p.stderr);
    let worst_z = c8
        .iter()
        .chain(&c16)
        .filter(|p| p.stderr > 0.0)
        .map(|p| (p.p - parity_flip_rate(p.e_r)).abs() / p.stderr)
        .fold(0.0, f64::max);

    let fit = fit_er_polynomial(&c8, Some(8)).unwrap();
    let published = ErPolynomial::published();
    let fit_dev = (0..=350)
        .map(|j| {
            let p = j as f64 / 1000.0;
            (fit.eval(p) - published.eval(p)).abs()
        })
        .fold(0.0, f64::max);

    let sizes_ok = c8.iter().zip(&c16).all(|(a, b)| {
        (a.p - b.p).abs() <= 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
    });
    Outcome::new(
        oracle_ok && fit_dev <= 0.01 && sizes_ok,
        format!(
            "parity oracle within 3 SE at all points: {oracle_ok} (max |z| {worst_z:.2}); \
             refit vs reference max |Δe_r| {fit_dev:.4} on [0, 0.35] (need ≤ 0.01); k=8 vs k=16 agree: {sizes_ok}"
        ),
    )
}

pub fn phase_anchors() -> Outcome {
    let mc = McParams { n_samples: 20000, burn_in: 1000, ..McParams::default() };
    let grid: Vec<f64> = (0..13).map(|j| 0.30 + 0.025 * j as f64).collect();

    let uniform = scan_transition(&Lattice::new(16).unwrap(), DisorderModel::Uniform, &grid, &mc, 1, Seed(1)).unwrap();
    let peak = uniform.peak.map(|p| p.beta);
    let peak_ok = peak.is_some_and(|b| (b - 0.44).abs() <= 0.03);

    let dilution = |k: usize| {
        scan_transition(&Lattice::new(k).unwrap(), DisorderModel::BondDilution(0.6), &grid, &mc, 4, Seed(2)).unwrap()
    };
    let det = detect_transition(&dilution(8), &dilution(16));

    let sign = |p: f64| {
        scan_transition(&Lattice::new(8).unwrap(), DisorderModel::SignFlip(p), &grid, &mc, 4, Seed(3)).unwrap()
    };
    let mut symmetric = true;
    let mut worst_z = 0.0f64;
    for p in [0.1, 0.3] {
        let (a, b) = (sign(p), sign(1.0 - p));
        for (x, y) in a.average.iter().zip(&b.average) {
            let z = (x.cv - y.cv).abs() / (x.cv_stderr.powi(2) + y.cv_stderr.powi(2)).sqrt();
            worst_z = worst_z.max(z);
            symmetric &= z <= 3.0;
        }
    }
    Outcome::new(
        peak_ok && !det.transition && symmetric,
        format!(
            "uniform k=16 peak at β = {} (need 0.44 ± 0.03); dilution q=0.6 transition: {} ({}); \
             sign-flip p ↔ 1-p symmetric within 3 SE: {symmetric} (max |z| {worst_z:.2})",
            peak.map_or("none".into(), |b| format!("{b:.3}")),
            det.transition,
            det.reason
        ),
    )
}
