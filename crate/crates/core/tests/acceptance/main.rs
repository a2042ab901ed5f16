//! Acceptance criteria, one pass/fail line each.
//!
//! `cargo test --release --test acceptance` runs all of them (about an hour
//! on one core); `-- 1 8 9` runs a subset.

mod learning;
mod metrics;
mod oracles;

use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

type Criterion = fn(&mut learning::Shared) -> Outcome;

fn main() {
    let criteria: [(usize, &str, Criterion); 9] = [
        (1, "sampler vs enumeration", |_| oracles::sampler_matches_enumeration()),
        (2, "exact solver vs enumeration", |_| oracles::exact_matches_enumeration()),
        (3, "sparse-field reduction", |_| oracles::sparse_field_reduction()),
        (4, "training convergence", learning::training_convergence),
        (5, "end-to-end correction", learning::end_to_end_correction),
        (6, "noise robustness", learning::noise_robustness),
        (7, "lattice-size scaling", learning::scaling),
        (8, "p(e_r) curve and inverse fit", |_| metrics::er_regression()),
        (9, "phase anchors", |_| metrics::phase_anchors()),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = learning::Shared::default();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = run(&mut shared);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {id} {name}: {} ({:.0} s)", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
