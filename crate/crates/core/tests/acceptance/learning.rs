use std::collections::BTreeMap;

use toric_learn::exact::SolveOptions;
use toric_learn::gibbs::McParams;
use toric_learn::learner::{
    correct_iteratively, evaluate_rmse, generate_dataset, Backend, CorrectionTrace, DataSource, DatasetSpec,
    ExactBackend, FieldDraw, FieldSpec, NoisyBackend, ProtocolOptions,
};
use toric_learn::metrics::{single_qubit_error, ErPolynomial};
use toric_learn::network::{gradient_check, train, Dataset, RegressorModel, TrainParams, TrainReport};
use toric_learn::{FieldConfig, Lattice, Seed};

use crate::Outcome;

/// Models and targets reused across criteria.
#[derive(Default)]
pub struct Shared {
    recipe: BTreeMap<usize, (Dataset, TrainReport)>,
    correction_model: Option<RegressorModel>,
    targets: Vec<FieldConfig>,
}

const N_SEEDS: usize = 10;

impl Shared {
    /// Default-recipe dataset (7450 MC rows, b_max 1.7) and network at size `k`.
    fn recipe(&mut self, k: usize) -> &(Dataset, TrainReport) {
        self.recipe.entry(k).or_insert_with(|| {
            let l = Lattice::new(k).unwrap();
            let mc = DataSource::MonteCarlo(McParams::default());
            let data = generate_dataset(&l, &DatasetSpec::default(), &mc, Seed(11).child(k as u64)).unwrap();
            let report = train(RegressorModel::default_init(Seed(1)), &data, &TrainParams::default()).unwrap();
            (data, report)
        })
    }

    /// k = 3 network trained on enumerated data with multiscale field draws.
    fn correction_model(&mut self) -> &RegressorModel {
        self.correction_model.get_or_insert_with(|| {
            let l = Lattice::new(3).unwrap();
            let spec = DatasetSpec { draw: FieldDraw::Multiscale { decades: 2.0 }, ..Default::default() };
            let data = generate_dataset(&l, &spec, &DataSource::Enumeration, Seed(11)).unwrap();
            train(RegressorModel::default_init(Seed(1)), &data, &TrainParams::default()).unwrap().model
        })
    }

    /// Mixed k = 3 targets whose iteration-0 bit or phase error exceeds 12%.
    fn targets(&mut self) -> &[FieldConfig] {
        if self.targets.is_empty() {
            let l = Lattice::new(3).unwrap();
            let poly = ErPolynomial::published();
            for s in 0..N_SEEDS as u64 {
                let f = (0..50)
                    .map(|a| FieldSpec::default().draw(&l, Seed(500 + s).child(a)).unwrap())
                    .find(|f| {
                        let mut b = ExactBackend::new(l.clone(), f.clone(), SolveOptions::default()).unwrap();
                        let e = single_qubit_error(&b.measure().unwrap(), &poly);
                        e.bit.max(e.phase) > 0.12
                    })
                    .expect("a target above 12% within 50 draws");
                self.targets.push(f);
            }
        }
        &self.targets
    }
}

pub fn training_convergence(sh: &mut Shared) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [3, 8] {
        let (data, report) = sh.recipe(k);
        let change = report.eval_plateau_change(1000).unwrap();
        let init = RegressorModel::default_init(Seed(1));
        let grad = gradient_check(&init, &data.rows[..32], 60, 1e-6, Seed(k as u64));
        pass &= change < 0.05 && grad < 1e-4;
        parts.push(format!(
            "k={k}: eval-loss change over last 2000 steps {:.1}% (best {:.4} at step {}), gradient check {grad:.1e}",
            100.0 * change,
            report.best_eval_loss,
            report.best_step
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn correct(model: &RegressorModel, target: &FieldConfig, sigma: f64, seed: Seed) -> CorrectionTrace {
    let l = Lattice::new(3).unwrap();
    let exact = ExactBackend::new(l, target.clone(), SolveOptions::default()).unwrap();
    let mut backend: Box<dyn Backend> = if sigma > 0.0 {
        Box::new(NoisyBackend::new(exact, sigma, seed).unwrap())
    } else {
        Box::new(exact)
    };
    correct_iteratively(&mut *backend, model, &ProtocolOptions::default()).unwrap()
}

pub fn end_to_end_correction(sh: &mut Shared) -> Outcome {
    let targets = sh.targets().to_vec();
    let model = sh.correction_model().clone();
    let (mut bit, mut phase, mut dh, mut ok) = (0.0, 0.0, 0.0, 0);
    let mut initial = 0.0f64;
    let mut worst_dh = 0.0f64;
    for (s, f) in targets.iter().enumerate() {
        let t = correct(&model, f, 0.0, Seed(s as u64));
        let (first, last) = (&t.records[0], t.last());
        initial = initial.max(first.error.bit.max(first.error.phase));
        let d = last.delta_h.unwrap();
        bit += last.error.bit / N_SEEDS as f64;
        phase += last.error.phase / N_SEEDS as f64;
        dh += d / N_SEEDS as f64;
        worst_dh = worst_dh.max(d);
        if last.error.bit < 1e-3 && last.error.phase < 1e-3 && d < 1e-2 {
            ok += 1;
        }
    }
    let pass = bit < 1e-3 && phase < 1e-3 && dh < 1e-2 && ok >= 8;
    Outcome::new(
        pass,
        format!(
            "mean final bit {:.4}% phase {:.4}% (need < 0.1%), mean Δ_H {dh:.4} (worst {worst_dh:.4}, need < 1e-2), \
             {ok}/{N_SEEDS} seeds meet all three",
            100.0 * bit,
            100.0 * phase
        ),
    )
}

pub fn noise_robustness(sh: &mut Shared) -> Outcome {
    let targets = sh.targets().to_vec();
    let model = sh.correction_model().clone();
    let mut means = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for sigma in [0.005, 0.01, 0.02] {
        let mut below = 0;
        let mut mean = 0.0;
        for (s, f) in targets.iter().enumerate() {
            let t = correct(&model, f, sigma, Seed(9000 + s as u64));
            let e = t.last().error;
            mean += e.bit.max(e.phase) / N_SEEDS as f64;
            if e.bit < 0.05 && e.phase < 0.05 {
                below += 1;
            }
        }
        pass &= below >= 8;
        parts.push(format!("σ={sigma}: {below}/{N_SEEDS} below 5%, mean final error {:.3}%", 100.0 * mean));
        means.push(mean);
    }
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    parts.push(format!("non-decreasing in σ: {monotone}"));
    Outcome::new(pass && monotone, parts.join("; "))
}

pub fn scaling(sh: &mut Shared) -> Outcome {
    let mut rmse = Vec::new();
    for k in [3, 8, 16] {
        let report = sh.recipe(k).1.model.clone();
        let l = Lattice::new(k).unwrap();
        let mc = DataSource::MonteCarlo(McParams::default());
        let held = generate_dataset(&l, &DatasetSpec { n: 500, ..Default::default() }, &mc, Seed(77).child(k as u64))
            .unwrap();
        rmse.push((k, evaluate_rmse(&report, &held).unwrap()));
    }
    let lo = rmse.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rmse.iter().map(|r| r.1).fold(0.0, f64::max);
    let list: Vec<String> = rmse.iter().map(|(k, r)| format!("k={k} {r:.4}")).collect();
    Outcome::new(
        hi / lo <= 1.5,
        format!("held-out RMSE {}; max/min {:.2} (need ≤ 1.5)", list.join(", "), hi / lo),
    )
}
