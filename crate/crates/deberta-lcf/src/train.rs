//! Adam optimizer and the training loop with seeded shuffling, a held-out
//! validation split for model selection, and optional early stopping.

use crate::data::{batch_of, make_batches, Example};
use crate::error::{Error, Result};
use crate::metrics::{confusion_matrix, metrics_from_confusion, Metrics};
use crate::model::DebertaLcfModel;
use crate::rng::Rng;
use crate::tensor::{ParamStore, Tape};

// ── Configuration ────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 42,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("adam eps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

// ── Adam ─────────────────────────────────────────────────────────────

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub t: usize,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> AdamState {
        let m = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
        let v = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
        AdamState { m, v, t: 0 }
    }
}

/// One bias-corrected Adam update from the gradients accumulated in the
/// store. Parameters without a gradient buffer are left untouched.
/// Weight decay, when nonzero, is applied decoupled from the moments.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for id in store.ids().collect::<Vec<_>>() {
        let tensor = store.get_mut(id);
        let Some(grad) = tensor.grad.take() else { continue };
        let m = &mut state.m[id.0];
        let v = &mut state.v[id.0];
        for k in 0..grad.len() {
            let g = grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            tensor.data[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            if cfg.weight_decay > 0.0 {
                tensor.data[k] -= cfg.lr * cfg.weight_decay * tensor.data[k];
            }
        }
    }
}

// ── Training loop ────────────────────────────────────────────────────

/// Per-epoch record: mean training loss, accuracy on the fitted split,
/// and macro-F1 on the held-out validation split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val_macro_f1: f64,
}

pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    /// Model restored to the parameters of the best epoch.
    pub model: DebertaLcfModel,
}

/// Minimum held-out size for the split to be worth anything; below this
/// a validation score cannot rank checkpoints.
const MIN_VAL_EXAMPLES: usize = 5;

/// Split off a seeded 10% validation set (indices), leaving the rest for
/// fitting. Datasets too small for a meaningful split keep everything in
/// the fitted set and select on its metrics instead.
fn split_validation(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed ^ 0x5EED_5EED).shuffle(&mut order);
    let val_count = n / 10;
    if val_count < MIN_VAL_EXAMPLES {
        return (order, Vec::new());
    }
    let val = order[..val_count].to_vec();
    let fit = order[val_count..].to_vec();
    (fit, val)
}

/// Evaluation-mode sweep in index order: mean cross-entropy and metrics.
/// The fixed batching makes the numbers independent of the epoch shuffle,
/// so a frozen model scores identically every epoch.
fn assess(model: &DebertaLcfModel, examples: &[Example], batch_size: usize) -> Result<(f64, Metrics)> {
    let mut loss_sum = 0.0;
    let mut truth = Vec::with_capacity(examples.len());
    let mut predicted = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size) {
        let batch = batch_of(chunk);
        let mut tape = Tape::new();
        let mut rng = Rng::new(0);
        let logits = model.forward(&mut tape, &batch, &mut rng)?;
        let loss = tape.cross_entropy(logits, &batch.labels)?;
        loss_sum += tape.value(loss)[0] * batch.len() as f64;
        let rows = tape.value(logits);
        for (i, &label) in batch.labels.iter().enumerate() {
            let row = &rows[i * 3..(i + 1) * 3];
            let mut best = 0;
            for c in 1..3 {
                if row[c] > row[best] {
                    best = c;
                }
            }
            truth.push(label);
            predicted.push(best);
        }
    }
    let metrics = metrics_from_confusion(confusion_matrix(&truth, &predicted));
    Ok((loss_sum / examples.len() as f64, metrics))
}

/// Train with Adam. Fully deterministic for a fixed (config, data, seed):
/// the validation split, every epoch shuffle, dropout, and initialization
/// are all pinned by seeds.
pub fn train(
    mut model: DebertaLcfModel,
    examples: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let (fit_idx, val_idx) = split_validation(examples.len(), cfg.seed);
    let fit: Vec<Example> = fit_idx.iter().map(|&i| examples[i].clone()).collect();
    let val: Vec<Example> = val_idx.iter().map(|&i| examples[i].clone()).collect();

    let mut state = AdamState::new(&model.params);
    let mut dropout_rng = Rng::new(cfg.seed.wrapping_add(1));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_params = model.params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut last_strict_improvement = 0;

    for epoch in 1..=cfg.epochs {
        let batches = make_batches(&fit, cfg.batch_size, cfg.seed.wrapping_add(epoch as u64));
        for batch in &batches {
            let mut tape = Tape::training();
            let logits = model.forward(&mut tape, batch, &mut dropout_rng)?;
            let loss = tape.cross_entropy(logits, &batch.labels)?;
            model.params.zero_grads();
            tape.backward(loss, &mut model.params)?;
            adam_step(&mut model.params, &mut state, cfg);
        }
        let (mean_loss, fit_metrics) = assess(&model, &fit, cfg.batch_size)?;
        // model selection score: held-out macro-F1 when a split exists,
        // otherwise the fitted set's macro-F1
        let val_macro_f1 = if val.is_empty() {
            fit_metrics.macro_f1
        } else {
            assess(&model, &val, cfg.batch_size)?.1.macro_f1
        };
        let train_accuracy = fit_metrics.accuracy;
        history.push(EpochStats { epoch, mean_loss, train_accuracy, val_macro_f1 });

        // snapshot ties toward the most-trained parameters; patience
        // counts epochs since a strict improvement
        if val_macro_f1 > best_f1 {
            last_strict_improvement = epoch;
        }
        if val_macro_f1 >= best_f1 {
            best_f1 = val_macro_f1;
            best_epoch = epoch;
            best_params = model.params.clone();
        }
        if let Some(patience) = cfg.patience {
            if epoch - last_strict_improvement >= patience {
                break;
            }
        }
    }

    model.params = best_params;
    Ok(TrainOutcome { history, best_epoch, best_val_macro_f1: best_f1, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcf::AspectSpan;
    use crate::data::Polarity;
    use crate::model::{build, ModelConfig};
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::param(vec![1.0, -2.0], vec![1, 2]));
        let mut state = AdamState::new(&store);
        store.get_mut(id).grad = Some(vec![0.0, 0.0]);
        adam_step(&mut store, &mut state, &TrainConfig::default());
        assert_eq!(store.get(id).data, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let cfg = TrainConfig { lr: 0.01, ..TrainConfig::default() };
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::param(vec![0.5], vec![1, 1]));
        let mut state = AdamState::new(&store);
        store.get_mut(id).grad = Some(vec![3.0]);
        adam_step(&mut store, &mut state, &cfg);
        let update = store.get(id).data[0] - 0.5;
        assert!((update + cfg.lr).abs() < 1e-6, "update {update}");
    }

    #[test]
    fn three_steps_on_quadratic_match_reference_loop() {
        // loss = 0.5 * w^2, grad = w; reference Adam written independently
        let cfg = TrainConfig { lr: 0.1, ..TrainConfig::default() };
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::param(vec![2.0], vec![1, 1]));
        let mut state = AdamState::new(&store);

        let mut w_ref = 2.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=3 {
            let g = store.get(id).data[0];
            store.get_mut(id).grad = Some(vec![g]);
            adam_step(&mut store, &mut state, &cfg);

            let g_ref = w_ref;
            m = 0.9 * m + 0.1 * g_ref;
            v = 0.999 * v + 0.001 * g_ref * g_ref;
            let m_hat = m / (1.0 - 0.9_f64.powi(t));
            let v_hat = v / (1.0 - 0.999_f64.powi(t));
            w_ref -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!(
                (store.get(id).data[0] - w_ref).abs() < 1e-12,
                "step {t}: {} vs {}",
                store.get(id).data[0],
                w_ref
            );
        }
    }

    fn toy_examples(n: usize) -> Vec<Example> {
        // class-separable: token 4+label decides the polarity
        (0..n)
            .map(|i| {
                let label = Polarity::from_index(i % 3).unwrap();
                Example {
                    tokens: vec![4 + (i % 3), 7 + (i % 5), 12],
                    span: AspectSpan::new(0, 0, 0, 0),
                    label,
                }
            })
            .collect()
    }

    fn toy_model(seed: u64) -> DebertaLcfModel {
        let cfg = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            max_rel_distance: 4,
            vocab_size: 20,
            dropout: 0.0,
            alpha: 5,
            mode: crate::lcf::LcfMode::Cdm,
            use_p2p: false,
            seed,
        };
        build(&cfg).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_loss_history() {
        let examples = toy_examples(12);
        let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
        let a = train(toy_model(1), &examples, &cfg).unwrap();
        let b = train(toy_model(1), &examples, &cfg).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.mean_loss.to_bits(), y.mean_loss.to_bits());
            assert_eq!(x.train_accuracy.to_bits(), y.train_accuracy.to_bits());
            assert_eq!(x.val_macro_f1.to_bits(), y.val_macro_f1.to_bits());
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let examples = toy_examples(9);
        let cfg = TrainConfig { epochs: 3, batch_size: 3, lr: 0.0, ..TrainConfig::default() };
        let model = toy_model(2);
        let before: Vec<Vec<f64>> = model.params.iter().map(|(_, t)| t.data.clone()).collect();
        let outcome = train(model, &examples, &cfg).unwrap();
        let after: Vec<Vec<f64>> = outcome.model.params.iter().map(|(_, t)| t.data.clone()).collect();
        assert_eq!(before, after);
        let first = outcome.history[0].mean_loss;
        assert!(outcome.history.iter().all(|h| h.mean_loss == first), "loss history not flat");
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(toy_model(3), &[], &cfg),
            Err(Error::Contract(_))
        ));
    }
}
