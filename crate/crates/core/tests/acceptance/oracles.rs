use rand::seq::SliceRandom;
use rand::Rng;
use toric_learn::exact::{
    enumerate_solvable, ground_state, lowest_state, measurement_set_exact, LogicalSector, PauliSum, SolveOptions,
};
use toric_learn::gibbs::{sample_sector, McParams};
use toric_learn::{FieldConfig, Lattice, Seed};

use crate::Outcome;

fn uniform_fields(n: usize, b_max: f64, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..n).map(|_| rng.random_range(-b_max..=b_max)).collect()
}

pub fn sampler_matches_enumeration() -> Outcome {
    let mc = McParams::default();
    let (mut within, mut total) = (0usize, 0usize);
    for c in 0..100u64 {
        let k = if c < 50 { 2 } else { 3 };
        let l = Lattice::new(k).unwrap();
        let bz = uniform_fields(l.n_edges(), 1.7, Seed(1000 + c));
        let exact = enumerate_solvable(&l, &bz).unwrap().measurements.star;
        let mcm = sample_sector(&l, &bz, &mc, Seed(2000 + c)).unwrap();
        for ((m, err), (e, _)) in mcm.entries().zip(exact.entries()) {
            total += 1;
            if (m - e).abs() <= 3.0 * err + 1e-12 {
                within += 1;
            }
        }
    }
    let frac = within as f64 / total as f64;
    Outcome::new(
        frac >= 0.95,
        format!("{:.1}% of {total} entries within 3 SE (need ≥ 95%)", 100.0 * frac),
    )
}

pub fn exact_matches_enumeration() -> Outcome {
    let l = Lattice::new(3).unwrap();
    let mut worst = 0.0f64;
    for c in 0..20u64 {
        let bz = uniform_fields(l.n_edges(), 1.7, Seed(3000 + c));
        let exact = measurement_set_exact(&l, &FieldConfig::star_only(bz.clone()), &SolveOptions::default()).unwrap();
        let en = enumerate_solvable(&l, &bz).unwrap().measurements;
        for ((a, _), (b, _)) in exact.star.entries().zip(en.star.entries()) {
            worst = worst.max((a - b).abs());
        }
    }
    Outcome::new(worst < 1e-8, format!("max deviation {worst:.2e} over 20 configs (need < 1e-8)"))
}

/// Random edges with no two sharing a vertex, fields of magnitude in [0.1, 1.7].
fn sparse_fields(l: &Lattice, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut order: Vec<usize> = (0..l.n_edges()).collect();
    order.shuffle(&mut rng);
    let mut used = vec![false; l.n_vertices()];
    let mut bz = vec![0.0; l.n_edges()];
    let target = rng.random_range(1..=l.n_vertices() / 2);
    let mut placed = 0;
    for i in order {
        let (s, t) = l.edge_vertices(i).unwrap();
        if placed < target && !used[s] && !used[t] {
            used[s] = true;
            used[t] = true;
            let mag = rng.random_range(0.1..=1.7);
            bz[i] = if rng.random_bool(0.5) { mag } else { -mag };
            placed += 1;
        }
    }
    bz
}

pub fn sparse_field_reduction() -> Outcome {
    let l = Lattice::new(3).unwrap();
    let opts = SolveOptions::default();
    let mut worst = 1.0f64;
    for c in 0..10u64 {
        let bz = sparse_fields(&l, Seed(4000 + c));
        let a = ground_state(&l, &FieldConfig::star_only(bz.clone()), &opts).unwrap();
        let mut h = PauliSum::toric_code(&l).unwrap();
        for (i, b) in bz.iter().enumerate() {
            if *b != 0.0 {
                h.push(-2.0 * b.sinh(), 0, 1 << i).unwrap();
            }
        }
        let b = lowest_state(&h, &l, LogicalSector::Star, &opts).unwrap();
        worst = worst.min(a.state.fidelity(&b.state));
    }
    Outcome::new(
        worst >= 1.0 - 1e-10,
        format!("minimum fidelity 1 - {:.1e} over 10 configs (need ≥ 1 - 1e-10)", 1.0 - worst),
    )
}
