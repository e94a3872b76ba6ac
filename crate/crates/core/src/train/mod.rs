//! Negative sampling, self-adversarial loss, regularization, and the
//! optimizer loop.
//!
//! Each step draws a batch of positives uniformly from train, corrupts one
//! side (alternating head/tail per step), computes the loss gradient plus an
//! L_p penalty on the translation rows the batch touched, and applies a
//! sparse Adam update. Gradient computation may fan out over a worker pool;
//! per-positive results are merged in batch order before the single-writer
//! application, so outputs are bit-identical regardless of thread count, and
//! deterministic mode simply forces the sequential path.

mod adam;

pub use adam::SparseAdam;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::data::{Direction, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::error::{Error, Result};
use crate::model::{
    adversarial_weights, save_checkpoint, self_adversarial_loss, LossConfig, ModelParameters,
    SparseUpdate,
};
use crate::rng::stream;
use crate::Real;

use rand::Rng;

/// Retries per negative before giving up on filtering and keeping the draw.
const FILTER_RETRY_LIMIT: usize = 200;

/// All optimization hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Negatives per positive (N >= 1).
    pub negatives: usize,
    /// Self-adversarial temperature alpha (>= 0); 0 weights negatives
    /// uniformly.
    pub adversarial_temperature: Real,
    pub learning_rate: Real,
    /// `(step, factor)` entries: from `step` onward the learning rate is the
    /// initial rate times the product of all factors whose step has been
    /// reached.
    pub lr_decay: Vec<(usize, Real)>,
    /// Weight of the L_p penalty on translation rows touched per batch.
    pub regularization_weight: Real,
    /// Order p of the penalty.
    pub regularization_order: u32,
    /// Whether the penalty targets the translation matrix (the default and
    /// only supported target; false disables regularization entirely).
    pub regularize_translation: bool,
    /// Reject sampled negatives that would reconstruct a known triple.
    pub filtered_negatives: bool,
    pub seed: u64,
    /// Force single-worker gradient computation.
    pub deterministic: bool,
    /// Record the loss every this many steps (the last step is always
    /// recorded).
    pub log_every: usize,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 10_000,
            batch_size: 512,
            negatives: 64,
            adversarial_temperature: 1.0,
            learning_rate: 1e-3,
            lr_decay: Vec::new(),
            regularization_weight: 0.0,
            regularization_order: 3,
            regularize_translation: true,
            filtered_negatives: true,
            seed: 0,
            deterministic: false,
            log_every: 100,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("negatives per positive must be >= 1".into()));
        }
        if self.adversarial_temperature < 0.0 {
            return Err(Error::Config(format!(
                "adversarial temperature must be >= 0, got {}",
                self.adversarial_temperature
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.regularization_weight < 0.0 {
            return Err(Error::Config("regularization weight must be >= 0".into()));
        }
        if self.regularization_order == 0 {
            return Err(Error::Config("regularization order must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log interval must be >= 1".into()));
        }
        Ok(())
    }

    fn loss_config(&self) -> LossConfig {
        LossConfig {
            adversarial_temperature: self.adversarial_temperature,
        }
    }
}

/// Learning rate at `step` under the decay schedule.
pub fn effective_lr(initial: Real, schedule: &[(usize, Real)], step: usize) -> Real {
    let mut lr = initial;
    for &(at, factor) in schedule {
        if step >= at {
            lr *= factor;
        }
    }
    lr
}

/// Negatives drawn for one positive, plus how many draws kept a filtered
/// candidate because the retry budget ran out.
#[derive(Debug, Clone)]
pub struct NegativeSample {
    pub entities: Vec<EntityId>,
    pub unfiltered_fallbacks: usize,
}

/// Draw `n` corrupting entities uniformly. With `filtered` set, draws that
/// would reconstruct a triple in the filter index are resampled; if a draw
/// keeps colliding past the retry budget it is kept as-is (unfiltered
/// fallback) so dense graphs cannot live-lock the loop.
pub fn sample_negatives(
    graph: &KnowledgeGraph,
    positive: &Triple,
    direction: Direction,
    n: usize,
    filtered: bool,
    rng: &mut impl Rng,
) -> NegativeSample {
    let num_entities = graph.num_entities() as u32;
    let mut entities = Vec::with_capacity(n);
    let mut unfiltered_fallbacks = 0;
    for _ in 0..n {
        let mut candidate = rng.random_range(0..num_entities);
        if filtered {
            let mut retries = 0;
            while graph.is_known(&positive.with_entity(direction, candidate)) {
                if retries >= FILTER_RETRY_LIMIT {
                    unfiltered_fallbacks += 1;
                    break;
                }
                candidate = rng.random_range(0..num_entities);
                retries += 1;
            }
        }
        entities.push(candidate);
    }
    NegativeSample {
        entities,
        unfiltered_fallbacks,
    }
}

/// Self-adversarial loss of one positive against its negatives: the value
/// and the per-negative weights (which are constants with respect to the
/// gradient).
pub fn loss(
    params: &ModelParameters,
    positive: &Triple,
    direction: Direction,
    negatives: &[EntityId],
    alpha: Real,
) -> Result<(Real, Vec<Real>)> {
    if alpha < 0.0 {
        return Err(Error::Config(format!(
            "adversarial temperature must be >= 0, got {alpha}"
        )));
    }
    let positive_score = params.score(positive)?;
    let batch = params.score_batch(positive, negatives, direction, false)?;
    let weights = adversarial_weights(&batch.candidate_scores, alpha);
    let value = self_adversarial_loss(positive_score, &batch.candidate_scores, &weights);
    Ok((value, weights))
}

/// L_p penalty over the given translation rows: the penalty value and the
/// per-row gradient `lambda * p * |b|^(p-1) * sign(b)`. Variants without a
/// translation matrix contribute nothing.
pub fn regularize(
    params: &ModelParameters,
    touched_translations: &[RelationId],
    lambda: Real,
    order: u32,
) -> (Real, BTreeMap<RelationId, Vec<Real>>) {
    let mut grads = BTreeMap::new();
    let Some(translation) = params.translation() else {
        return (0.0, grads);
    };
    if lambda == 0.0 || touched_translations.is_empty() {
        return (0.0, grads);
    }
    let p = order as i32;
    let mut penalty = 0.0;
    for &r in touched_translations {
        let row = translation.row(r as usize);
        let mut grad = vec![0.0; row.len()];
        for (d, &b) in row.iter().enumerate() {
            penalty += lambda * b.abs().powi(p);
            grad[d] = lambda * p as Real * b.abs().powi(p - 1) * b.signum();
            if b == 0.0 {
                grad[d] = 0.0;
            }
        }
        grads.insert(r, grad);
    }
    (penalty, grads)
}

/// Gradient standard deviations sampled at the first optimizer step of an
/// epoch, computed over every component of each (conceptually dense)
/// gradient matrix — untouched rows count as zeros.
#[derive(Debug, Clone, Copy)]
pub struct EpochGradientStats {
    pub epoch: usize,
    pub entity_grad_std: f64,
    /// Over the head and tail relation matrices pooled.
    pub relation_grad_std: f64,
    /// Absent for variants without translations.
    pub translation_grad_std: Option<f64>,
}

fn dense_std(rows: &BTreeMap<u32, Vec<Real>>, total_components: usize) -> f64 {
    if total_components == 0 {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for row in rows.values() {
        for &g in row {
            sum += g as f64;
            sum_sq += (g as f64) * (g as f64);
        }
    }
    let n = total_components as f64;
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0).sqrt()
}

fn gradient_stats(
    params: &ModelParameters,
    update: &SparseUpdate,
    epoch: usize,
) -> EpochGradientStats {
    let k = params.dim();
    let entity_total = params.num_entities() * k;
    let rel_matrices = if params.rel_tail().is_some() { 2 } else { 1 };
    let relation_total = rel_matrices * params.num_relations() * k;
    let mut rel_sum = 0.0f64;
    let mut rel_sq = 0.0f64;
    for rows in [&update.rel_head, &update.rel_tail] {
        for row in rows.values() {
            for &g in row {
                rel_sum += g as f64;
                rel_sq += (g as f64) * (g as f64);
            }
        }
    }
    let n = relation_total as f64;
    let rel_mean = rel_sum / n;
    EpochGradientStats {
        epoch,
        entity_grad_std: dense_std(&update.entities, entity_total),
        relation_grad_std: (rel_sq / n - rel_mean * rel_mean).max(0.0).sqrt(),
        translation_grad_std: params
            .translation()
            .map(|_| dense_std(&update.translation, params.num_relations() * k)),
    }
}

/// Everything a training run produces besides the updated parameters.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub grad_stats: Vec<EpochGradientStats>,
    /// `(step, batch loss including regularization)` at the log interval.
    pub loss_trace: Vec<(usize, f64)>,
    pub steps_run: usize,
    pub unfiltered_fallbacks: usize,
    /// Directory of the most recent scheduled checkpoint, if any.
    pub last_checkpoint: Option<PathBuf>,
    /// Final optimizer state, for persisting alongside the final model.
    pub optimizer: Option<SparseAdam>,
}

/// Run the optimizer loop for `config.steps` steps.
pub fn train(
    graph: &KnowledgeGraph,
    params: &mut ModelParameters,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    train_with_hook(graph, params, config, |_, _| Ok(()))
}

/// As [`train`], invoking `hook(step, params)` after each applied step
/// (e.g. for periodic validation); a hook error aborts the run.
pub fn train_with_hook(
    graph: &KnowledgeGraph,
    params: &mut ModelParameters,
    config: &TrainConfig,
    mut hook: impl FnMut(usize, &ModelParameters) -> Result<()>,
) -> Result<TrainOutput> {
    config.validate()?;
    let mut output = TrainOutput::default();
    if config.steps == 0 {
        return Ok(output);
    }
    if graph.train.is_empty() {
        return Err(Error::Validation("cannot train on an empty train split".into()));
    }

    let loss_cfg = config.loss_config();
    let steps_per_epoch = graph.train.len().div_ceil(config.batch_size);
    let mut adam = SparseAdam::new(params);
    let mut batch_rng = stream(config.seed, "batch_positives");
    let mut negative_rng = stream(config.seed, "negatives");
    let fingerprint = graph.fingerprint();

    for step in 0..config.steps {
        let direction = if step % 2 == 0 {
            Direction::Head
        } else {
            Direction::Tail
        };

        // Sampling stays on one stream regardless of worker count.
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let positive = graph.train[batch_rng.random_range(0..graph.train.len())];
            let negatives = sample_negatives(
                graph,
                &positive,
                direction,
                config.negatives,
                config.filtered_negatives,
                &mut negative_rng,
            );
            output.unfiltered_fallbacks += negatives.unfiltered_fallbacks;
            batch.push((positive, negatives.entities));
        }

        let grads = if config.deterministic {
            batch
                .iter()
                .map(|(pos, negs)| params.gradients(pos, direction, negs, &loss_cfg))
                .collect::<Result<Vec<_>>>()
        } else {
            batch
                .par_iter()
                .map(|(pos, negs)| params.gradients(pos, direction, negs, &loss_cfg))
                .collect::<Result<Vec<_>>>()
        };
        let grads = grads.map_err(|e| Error::NonFinite {
            step,
            context: format!(
                "{e}; last good checkpoint: {}",
                checkpoint_ref(&output.last_checkpoint)
            ),
        })?;

        // Merge in batch order, then average.
        let mut update = SparseUpdate::default();
        let mut batch_loss = 0.0f64;
        for g in grads {
            batch_loss += g.loss as f64;
            update.merge(g.update);
        }
        batch_loss /= config.batch_size as f64;
        let scale = 1.0 / config.batch_size as Real;
        for rows in [
            &mut update.entities,
            &mut update.rel_head,
            &mut update.rel_tail,
            &mut update.translation,
        ] {
            for row in rows.values_mut() {
                for v in row.iter_mut() {
                    *v *= scale;
                }
            }
        }

        if config.regularize_translation && config.regularization_weight > 0.0 {
            let touched: Vec<RelationId> = update.translation.keys().copied().collect();
            let (penalty, reg_grads) = regularize(
                params,
                &touched,
                config.regularization_weight,
                config.regularization_order,
            );
            batch_loss += penalty as f64;
            for (r, grad) in reg_grads {
                let row = update.translation.get_mut(&r).unwrap();
                for (a, b) in row.iter_mut().zip(&grad) {
                    *a += b;
                }
            }
        }

        if !batch_loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                context: format!(
                    "batch loss is {batch_loss}; last good checkpoint: {}",
                    checkpoint_ref(&output.last_checkpoint)
                ),
            });
        }

        if step % steps_per_epoch == 0 {
            output
                .grad_stats
                .push(gradient_stats(params, &update, step / steps_per_epoch));
        }
        if step % config.log_every == 0 || step + 1 == config.steps {
            output.loss_trace.push((step, batch_loss));
        }

        let lr = effective_lr(config.learning_rate, &config.lr_decay, step);
        adam.apply(params, &update, lr);
        debug_assert!(params.all_finite(), "non-finite parameter after step {step}");

        if let (Some(every), Some(dir)) = (config.checkpoint_every, &config.checkpoint_dir) {
            if (step + 1) % every == 0 {
                let ckpt = dir.join(format!("step-{:08}", step + 1));
                save_checkpoint(params, &ckpt, &fingerprint)?;
                adam.save_state(&ckpt.join("optimizer"))?;
                output.last_checkpoint = Some(ckpt);
            }
        }
        output.steps_run = step + 1;
        hook(step, params)?;
    }
    output.optimizer = Some(adam);
    Ok(output)
}

fn checkpoint_ref(last: &Option<PathBuf>) -> String {
    last.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "none".into())
}
