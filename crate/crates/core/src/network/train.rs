//! Mini-batch Adam on the mean squared error.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, Dense, RegressorModel, Row};
use crate::error::{Error, Result};
use crate::rng::Seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Examples held out for evaluation.
    pub eval_size: usize,
    /// Steps between evaluation-loss records.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            steps: 10_000,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eval_size: 50,
            eval_every: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub train_loss: f64,
    /// Present on evaluation steps.
    pub eval_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Best-evaluation checkpoint.
    pub model: RegressorModel,
    pub trace: Vec<LossRecord>,
    pub best_step: usize,
    pub best_eval_loss: f64,
}

impl TrainReport {
    /// Relative change of the mean eval loss between the last `window` steps
    /// and the `window` steps before them. `None` if either half has no
    /// evaluation.
    pub fn eval_plateau_change(&self, window: usize) -> Option<f64> {
        let end = self.trace.last()?.step + 1;
        let mean = |lo: usize, hi: usize| {
            let v: Vec<f64> = self
                .trace
                .iter()
                .filter(|r| (lo..hi).contains(&r.step))
                .filter_map(|r| r.eval_loss)
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let late = mean(end.checked_sub(window)?, end)?;
        let early = mean(end.checked_sub(2 * window)?, end - window)?;
        Some((late - early).abs() / early)
    }
}

/// Per-layer gradients, same layout as the layers.
struct Grads(Vec<Dense>);

impl Grads {
    fn zeros_like(m: &RegressorModel) -> Self {
        Grads(
            m.layers
                .iter()
                .map(|l| Dense {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        )
    }

    fn clear(&mut self) {
        for l in &mut self.0 {
            l.w.iter_mut().for_each(|x| *x = 0.0);
            l.b.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Mean squared error over `batch`; accumulates its gradient into `grads`.
fn loss_and_grad(model: &RegressorModel, batch: &[&Row], grads: &mut Grads) -> f64 {
    let n = model.layers.len();
    let scale = 2.0 / batch.len() as f64;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut loss = 0.0;
    for row in batch {
        acts.clear();
        acts.push(row.input.to_vec());
        for (j, layer) in model.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            layer.forward(&acts[j], &mut z);
            if j + 1 < n {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let err = acts[n][0] - row.label;
        loss += err * err;

        let mut delta = vec![scale * err];
        for j in (0..n).rev() {
            let layer = &model.layers[j];
            let g = &mut grads.0[j];
            let a_in = &acts[j];
            let mut back = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.b[o] += d;
                let gw = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                let w = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for i in 0..layer.n_in {
                    gw[i] += d * a_in[i];
                    back[i] += d * w[i];
                }
            }
            if j > 0 {
                // ReLU derivative; a zero activation blocks the gradient.
                for (b, a) in back.iter_mut().zip(a_in) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
    }
    loss / batch.len() as f64
}

pub(crate) fn mse(model: &RegressorModel, rows: &[Row]) -> f64 {
    rows.iter()
        .map(|r| (model.forward_unchecked(&r.input) - r.label).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}

struct Adam {
    m: Grads,
    v: Grads,
    t: i32,
}

impl Adam {
    fn step(&mut self, model: &mut RegressorModel, g: &Grads, p: &TrainParams) {
        self.t += 1;
        let c1 = 1.0 - p.beta1.powi(self.t);
        let c2 = 1.0 - p.beta2.powi(self.t);
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&g.0)
            .zip(&mut self.m.0)
            .zip(&mut self.v.0)
        {
            let params = layer.w.iter_mut().chain(layer.b.iter_mut());
            let grads = g.w.iter().chain(&g.b);
            let ms = m.w.iter_mut().chain(m.b.iter_mut());
            let vs = v.w.iter_mut().chain(v.b.iter_mut());
            for (((x, &gi), mi), vi) in params.zip(grads).zip(ms).zip(vs) {
                *mi = p.beta1 * *mi + (1.0 - p.beta1) * gi;
                *vi = p.beta2 * *vi + (1.0 - p.beta2) * gi * gi;
                *x -= p.learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + p.epsilon);
            }
        }
    }
}

/// Trains on all but the first `eval_size` rows (after a seeded shuffle) and
/// returns the checkpoint with the lowest evaluation loss.
pub fn train(model: RegressorModel, data: &Dataset, p: &TrainParams) -> Result<TrainReport> {
    if p.batch_size == 0 || p.steps == 0 || p.eval_every == 0 {
        return Err(Error::InvalidArgument("steps, batch size and eval interval must be positive".into()));
    }
    if !(p.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if data.rows.len() <= p.eval_size || p.eval_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "dataset of {} rows cannot hold out {} evaluation rows",
            data.rows.len(),
            p.eval_size
        )));
    }
    if model.n_inputs() != 3 {
        return Err(Error::InvalidArgument("model must take three inputs".into()));
    }
    let mut rng = Seed(p.seed).rng();
    let mut rows: Vec<Row> = data.rows.clone();
    rows.shuffle(&mut rng);
    let (eval, fit) = rows.split_at(p.eval_size);

    let mut model = model;
    let mut grads = Grads::zeros_like(&model);
    let mut adam = Adam {
        m: Grads::zeros_like(&model),
        v: Grads::zeros_like(&model),
        t: 0,
    };
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(p.steps);
    let mut best = (mse(&model, eval), 0, model.clone());

    for step in 1..=p.steps {
        let batch: Vec<&Row> = (0..p.batch_size)
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                cursor += 1;
                &fit[order[cursor - 1]]
            })
            .collect();
        grads.clear();
        let loss = loss_and_grad(&model, &batch, &mut grads);
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        adam.step(&mut model, &grads, p);
        let eval_loss = (step % p.eval_every == 0 || step == p.steps).then(|| mse(&model, eval));
        if let Some(e) = eval_loss {
            if !e.is_finite() {
                return Err(Error::Diverged { step, loss: e });
            }
            if e < best.0 {
                best = (e, step, model.clone());
            }
        }
        trace.push(LossRecord {
            step,
            train_loss: loss,
            eval_loss,
        });
    }

    let (best_eval_loss, best_step, mut model) = best;
    let tail = trace.len().saturating_sub(500);
    let recent = &trace[tail..];
    model.metadata.steps = p.steps;
    model.metadata.best_step = best_step;
    model.metadata.eval_loss = Some(best_eval_loss);
    model.metadata.train_loss = Some(recent.iter().map(|r| r.train_loss).sum::<f64>() / recent.len() as f64);
    model.metadata.learning_rate = Some(p.learning_rate);
    model.metadata.batch_size = Some(p.batch_size);
    model.metadata.k = data.meta.k;
    model.metadata.b_max = Some(data.meta.b_max);
    Ok(TrainReport {
        model,
        trace,
        best_step,
        best_eval_loss,
    })
}

/// Largest relative error between the analytic gradient and central finite
/// differences over `n_coords` random parameters.
pub fn gradient_check(model: &RegressorModel, rows: &[Row], n_coords: usize, eps: f64, seed: Seed) -> f64 {
    let refs: Vec<&Row> = rows.iter().collect();
    let mut grads = Grads::zeros_like(model);
    loss_and_grad(model, &refs, &mut grads);
    let mut rng = seed.rng();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n_coords {
        let j = rng.random_range(0..model.layers.len());
        let on_bias = rng.random_bool(0.2);
        let len = if on_bias { model.layers[j].b.len() } else { model.layers[j].w.len() };
        let idx = rng.random_range(0..len);
        let analytic = if on_bias { grads.0[j].b[idx] } else { grads.0[j].w[idx] };
        let mut loss_at = |delta: f64| {
            let slot = if on_bias { &mut probe.layers[j].b[idx] } else { &mut probe.layers[j].w[idx] };
            let orig = *slot;
            *slot = orig + delta;
            let l = mse(&probe, rows);
            let slot = if on_bias { &mut probe.layers[j].b[idx] } else { &mut probe.layers[j].w[idx] };
            *slot = orig;
            l
        };
        let numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
        // Coordinates with no gradient signal (dead units) carry no information.
        let denom = analytic.abs().max(numeric.abs());
        if denom < 1e-7 {
            continue;
        }
        worst = worst.max((analytic - numeric).abs() / denom);
        done += 1;
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::DatasetMeta;

    fn synthetic(n: usize, f: impl Fn([f64; 3]) -> f64, seed: u64) -> Dataset {
        let mut rng = Seed(seed).rng();
        let rows = (0..n)
            .map(|_| {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                Row { input: x, label: f(x) }
            })
            .collect();
        Dataset {
            rows,
            meta: DatasetMeta::synthetic(1.7),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = synthetic(16, |x| (x[0] * x[1]).abs() + 0.3, 1);
        let m = RegressorModel::default_init(Seed(4));
        let err = gradient_check(&m, &data.rows, 20, 1e-5, Seed(5));
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn learns_a_constant() {
        let data = synthetic(400, |_| 0.7, 2);
        let p = TrainParams { steps: 2000, ..Default::default() };
        let report = train(RegressorModel::default_init(Seed(3)), &data, &p).unwrap();
        let first = report.trace.iter().position(|r| r.train_loss < 1e-4);
        assert!(first.is_some());
        assert!(report.best_eval_loss < 1e-3, "{}", report.best_eval_loss);
        assert!(report.eval_plateau_change(500).unwrap() < 0.5);
        assert!(report.eval_plateau_change(1500).is_none());
    }

    #[test]
    fn training_is_reproducible() {
        let data = synthetic(200, |x| x[2].abs(), 3);
        let p = TrainParams { steps: 50, ..Default::default() };
        let a = train(RegressorModel::default_init(Seed(1)), &data, &p).unwrap();
        let b = train(RegressorModel::default_init(Seed(1)), &data, &p).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn divergence_is_reported() {
        let data = synthetic(200, |x| x[0].abs(), 3);
        let p = TrainParams { steps: 200, learning_rate: 1e300, ..Default::default() };
        let r = train(RegressorModel::default_init(Seed(1)), &data, &p);
        assert!(matches!(r, Err(Error::Diverged { .. })), "{:?}", r.map(|r| r.best_eval_loss));
    }

    #[test]
    fn rejects_datasets_too_small_for_evaluation() {
        let data = synthetic(40, |_| 0.1, 3);
        assert!(train(RegressorModel::default_init(Seed(1)), &data, &TrainParams::default()).is_err());
    }
}
