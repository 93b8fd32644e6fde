//! Adam with linear warmup and inverse-square-root decay, plus dev-loss
//! checkpointing and early stopping.

use rand::seq::SliceRandom;

use super::batch::{Batch, Example};
use super::model::{backward, forward, Model};
use super::params::{FeatureMaps, Parameters};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps between dev evaluations; 0 disables evaluation.
    pub eval_every: usize,
    /// Evaluations without dev improvement before stopping; 0 never stops.
    pub patience: usize,
    pub seed: u64,
    /// Redraw every random feature map before each step.
    pub resample_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 16,
            peak_lr: 1e-3,
            warmup: 400,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            eval_every: 200,
            patience: 5,
            seed: 1,
            resample_features: false,
        }
    }
}

impl TrainConfig {
    /// Linear warmup to `peak_lr`, then `peak_lr * sqrt(warmup / step)`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let step = step.max(1) as f64;
        let warm = self.warmup.max(1) as f64;
        self.peak_lr * (step / warm).min((warm / step).sqrt())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// `(step, training loss)` for every step.
    pub losses: Vec<(usize, f64)>,
    /// `(step, dev loss)` at each evaluation.
    pub dev_losses: Vec<(usize, f64)>,
    pub best_step: usize,
    pub best_dev_loss: Option<f64>,
    pub stopped_early: bool,
}

pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(params: &Parameters) -> Self {
        let zeros = || params.leaves().iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn update(&mut self, params: &mut Parameters, grads: &Parameters, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .leaves_mut()
            .into_iter()
            .zip(grads.leaves())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

pub fn dev_loss(model: &Model, dev: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for chunk in dev.chunks(32) {
        let out = forward(model, &Batch::from_examples(chunk))?;
        total += out.loss * out.num_tokens as f64;
        tokens += out.num_tokens;
    }
    Ok(if tokens == 0 { 0.0 } else { total / tokens as f64 })
}

/// Trains `model` in place. When a dev set is given, the parameters with the
/// lowest dev loss are kept.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    dev_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_callback(model, train_set, dev_set, cfg, |_, _| {})
}

pub fn train_with_callback(
    model: &mut Model,
    train_set: &[Example],
    dev_set: &[Example],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Usage("batch size must be >= 1".into()));
    }
    let mut rng = seed::rng(seed::derive(cfg.seed, "batches"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut adam = Adam::new(&model.params);
    let mut report = TrainReport::default();
    let mut best: Option<Parameters> = None;
    let mut since_best = 0;
    let base_maps = model.maps.clone();

    for step in 1..=cfg.steps {
        if cursor + cfg.batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let examples: Vec<Example> = order[cursor..end].iter().map(|&i| train_set[i].clone()).collect();
        cursor = end;

        if cfg.resample_features {
            model.maps = FeatureMaps::resample(&model.config, step as u64)?;
        }
        let (out, grads) = backward(model, &Batch::from_examples(&examples)).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                step,
                loss: f64::NAN,
            },
            other => other,
        })?;
        if !out.loss.is_finite() {
            return Err(Error::Diverged { step, loss: out.loss });
        }
        adam.update(&mut model.params, &grads, cfg.learning_rate(step), cfg);
        if !model.params.all_finite() {
            return Err(Error::Diverged { step, loss: out.loss });
        }
        report.losses.push((step, out.loss));
        on_step(step, out.loss);

        let evaluate = cfg.eval_every > 0 && !dev_set.is_empty() && (step % cfg.eval_every == 0 || step == cfg.steps);
        if evaluate {
            if cfg.resample_features {
                model.maps = base_maps.clone();
            }
            let dl = dev_loss(model, dev_set)?;
            report.dev_losses.push((step, dl));
            if report.best_dev_loss.is_none_or(|b| dl < b) {
                report.best_dev_loss = Some(dl);
                report.best_step = step;
                best = Some(model.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    if cfg.resample_features {
        model.maps = base_maps;
    }
    if let Some(p) = best {
        model.params = p;
    } else {
        report.best_step = report.losses.last().map_or(0, |l| l.0);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::ModelConfig;

    fn tiny() -> Model {
        Model::new(ModelConfig {
            vocab_size: 10,
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn data() -> Vec<Example> {
        (4..10).map(|t| Example::new(vec![t, 4], vec![t, 4])).collect()
    }

    #[test]
    fn schedule_shape() {
        let cfg = TrainConfig {
            peak_lr: 1.0,
            warmup: 4,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate(2), 0.5);
        assert_eq!(cfg.learning_rate(4), 1.0);
        assert_eq!(cfg.learning_rate(16), 0.5);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut m = tiny();
        let before = m.params.clone();
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 2,
            peak_lr: 0.0,
            eval_every: 0,
            ..TrainConfig::default()
        };
        train(&mut m, &data(), &[], &cfg).unwrap();
        assert_eq!(m.params, before);
    }

    #[test]
    fn loss_goes_down_and_is_deterministic() {
        let cfg = TrainConfig {
            steps: 60,
            batch_size: 3,
            peak_lr: 1e-2,
            warmup: 10,
            eval_every: 20,
            patience: 0,
            ..TrainConfig::default()
        };
        let mut a = tiny();
        let ra = train(&mut a, &data(), &data(), &cfg).unwrap();
        let mut b = tiny();
        let rb = train(&mut b, &data(), &data(), &cfg).unwrap();
        assert_eq!(ra, rb);
        assert!(ra.losses.last().unwrap().1 < ra.losses[0].1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let mut m = tiny();
        assert!(matches!(
            train(&mut m, &[], &[], &TrainConfig::default()),
            Err(Error::Empty(_))
        ));
    }
}
