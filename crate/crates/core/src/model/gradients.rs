//! Analytic gradients of the self-adversarial loss with respect to the
//! embedding rows a batch touches.
//!
//! The loss over one positive and its negatives is
//!
//! ```text
//! L = -log sigmoid(f(pos)) - sum_i p_i * log sigmoid(-f(neg_i))
//! p_i = softmax_i(alpha * f(neg_i))        (treated as constants)
//! ```
//!
//! No gradient flows through the weights `p_i`. The L1 distance uses the
//! sign subgradient with `sign(0) = 0`, and entity normalization uses the
//! Jacobian `(I - u u^T) / ||e||` of `e -> e/||e||`.

use std::collections::BTreeMap;

use crate::data::{Direction, EntityId, RelationId, Triple};
use crate::error::{Error, Result};
use crate::Real;

use super::{ModelParameters, ModelVariant};

/// Numerically stable logistic function.
pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(sigmoid(x))`, finite for all finite `x`.
pub fn log_sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Softmax over `alpha * score` across the negatives. `alpha = 0` yields
/// uniform weights; higher-scoring negatives never get less weight.
pub fn adversarial_weights(negative_scores: &[Real], alpha: Real) -> Vec<Real> {
    if negative_scores.is_empty() {
        return Vec::new();
    }
    let m = negative_scores
        .iter()
        .map(|s| alpha * s)
        .fold(Real::NEG_INFINITY, Real::max);
    let mut weights: Vec<Real> = negative_scores
        .iter()
        .map(|s| (alpha * s - m).exp())
        .collect();
    let total: Real = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Loss value given scores and (already fixed) self-adversarial weights.
/// Keeping the weights an explicit argument lets finite-difference checks
/// perturb the parameters while holding `p_i` constant, exactly matching
/// the stop-gradient the analytic path assumes.
pub fn self_adversarial_loss(
    positive_score: Real,
    negative_scores: &[Real],
    weights: &[Real],
) -> Real {
    let mut loss = -log_sigmoid(positive_score);
    for (s, w) in negative_scores.iter().zip(weights) {
        loss -= w * log_sigmoid(-s);
    }
    loss
}

/// Loss shaping knobs used by the gradient path.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    /// Self-adversarial temperature `alpha` (>= 0). Zero weights all
    /// negatives uniformly.
    pub adversarial_temperature: Real,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            adversarial_temperature: 1.0,
        }
    }
}

/// Gradient rows keyed by the embedding row they belong to. Rows absent
/// from the map are untouched by the batch.
#[derive(Debug, Clone, Default)]
pub struct SparseUpdate {
    pub entities: BTreeMap<EntityId, Vec<Real>>,
    pub rel_head: BTreeMap<RelationId, Vec<Real>>,
    pub rel_tail: BTreeMap<RelationId, Vec<Real>>,
    pub translation: BTreeMap<RelationId, Vec<Real>>,
}

impl SparseUpdate {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
            && self.rel_head.is_empty()
            && self.rel_tail.is_empty()
            && self.translation.is_empty()
    }

    /// Fold another update into this one, summing overlapping rows.
    pub fn merge(&mut self, other: SparseUpdate) {
        for (dst, src) in [
            (&mut self.entities, other.entities),
            (&mut self.rel_head, other.rel_head),
            (&mut self.rel_tail, other.rel_tail),
            (&mut self.translation, other.translation),
        ] {
            for (id, row) in src {
                match dst.get_mut(&id) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&row) {
                            *a += b;
                        }
                    }
                    None => {
                        dst.insert(id, row);
                    }
                }
            }
        }
    }

    /// Largest absolute component across all rows.
    pub fn max_abs(&self) -> Real {
        self.iter_rows()
            .flat_map(|(_, _, row)| row.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(matrix name, row id, row)` over every stored row.
    pub fn iter_rows(&self) -> impl Iterator<Item = (&'static str, u32, &[Real])> {
        let e = self
            .entities
            .iter()
            .map(|(id, r)| ("entities", *id, r.as_slice()));
        let rh = self
            .rel_head
            .iter()
            .map(|(id, r)| ("rel_head", *id, r.as_slice()));
        let rt = self
            .rel_tail
            .iter()
            .map(|(id, r)| ("rel_tail", *id, r.as_slice()));
        let b = self
            .translation
            .iter()
            .map(|(id, r)| ("translation", *id, r.as_slice()));
        e.chain(rh).chain(rt).chain(b)
    }

    fn check_finite(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, id, row) in self.iter_rows() {
            if row.iter().any(|v| !v.is_finite()) {
                bad.push(format!("{name}[{id}]"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "non-finite gradient in rows: {}",
                bad.join(", ")
            )))
        }
    }
}

/// Everything one loss batch produces: the sparse gradient, the loss value,
/// and the scores/weights it was computed from.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub update: SparseUpdate,
    pub loss: Real,
    pub positive_score: Real,
    pub negative_scores: Vec<Real>,
    pub weights: Vec<Real>,
}

fn sign0(x: Real) -> Real {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ModelParameters {
    /// Gradient of the self-adversarial loss for one positive and its
    /// corrupted variants. Only rows present in the batch appear in the
    /// returned update.
    pub fn gradients(
        &self,
        positive: &Triple,
        direction: Direction,
        negatives: &[EntityId],
        cfg: &LossConfig,
    ) -> Result<BatchGradient> {
        if cfg.adversarial_temperature < 0.0 {
            return Err(Error::Config(format!(
                "adversarial temperature must be >= 0, got {}",
                cfg.adversarial_temperature
            )));
        }
        let positive_score = self.score(positive)?;
        let batch = self.score_batch(positive, negatives, direction, false)?;
        let negative_scores = batch.candidate_scores;
        let weights = adversarial_weights(&negative_scores, cfg.adversarial_temperature);
        let loss = self_adversarial_loss(positive_score, &negative_scores, &weights);

        let mut update = SparseUpdate::default();
        // dL/df+ = -sigmoid(-f+)
        self.accumulate_score_gradient(positive, -sigmoid(-positive_score), &mut update)?;
        // dL/df-_i = p_i * sigmoid(f-_i)
        for (i, &neg) in negatives.iter().enumerate() {
            let corrupted = positive.with_entity(direction, neg);
            let scale = weights[i] * sigmoid(negative_scores[i]);
            self.accumulate_score_gradient(&corrupted, scale, &mut update)?;
        }
        update.check_finite()?;
        Ok(BatchGradient {
            update,
            loss,
            positive_score,
            negative_scores,
            weights,
        })
    }

    /// Add `scale * df/dtheta` for one triple's score into `update`.
    fn accumulate_score_gradient(
        &self,
        triple: &Triple,
        scale: Real,
        update: &mut SparseUpdate,
    ) -> Result<()> {
        let k = self.dim();
        let inv_h = self.inv_norm(triple.head)?;
        let inv_t = self.inv_norm(triple.tail)?;
        let residual = self.residual(triple, inv_h, inv_t);
        let sign: Vec<Real> = residual.iter().map(|&x| sign0(x)).collect();

        let h = self.entities().row(triple.head as usize);
        let t = self.entities().row(triple.tail as usize);
        let r = triple.relation as usize;
        let rh = self.rel_head().row(r);

        // Head entity: df/de_h = -(1/||h||) (I - u u^T) w, u = h/||h||,
        // w = r_h .* sign (or just sign for the plain-translation variant).
        {
            let w: Vec<Real> = match self.variant() {
                ModelVariant::TransE => sign.clone(),
                _ => (0..k).map(|d| rh[d] * sign[d]).collect(),
            };
            let dot: Real = (0..k).map(|d| (h[d] * inv_h) * w[d]).sum();
            let row = update
                .entities
                .entry(triple.head)
                .or_insert_with(|| vec![0.0; k]);
            for d in 0..k {
                let unit = h[d] * inv_h;
                row[d] += scale * (-inv_h * (w[d] - unit * dot));
            }
        }
        // Tail entity: df/de_t = +(1/||t||) (I - u u^T) v, v = r_t .* sign.
        {
            let v: Vec<Real> = match self.variant() {
                ModelVariant::TransE => sign.clone(),
                _ => {
                    let rt = self.rel_tail().unwrap().row(r);
                    (0..k).map(|d| rt[d] * sign[d]).collect()
                }
            };
            let dot: Real = (0..k).map(|d| (t[d] * inv_t) * v[d]).sum();
            let row = update
                .entities
                .entry(triple.tail)
                .or_insert_with(|| vec![0.0; k]);
            for d in 0..k {
                let unit = t[d] * inv_t;
                row[d] += scale * (inv_t * (v[d] - unit * dot));
            }
        }
        // Relation head vector: df/dr_h = -sign .* h_unit, except the
        // plain-translation variant where df/dr = -sign.
        {
            let row = update
                .rel_head
                .entry(triple.relation)
                .or_insert_with(|| vec![0.0; k]);
            match self.variant() {
                ModelVariant::TransE => {
                    for d in 0..k {
                        row[d] += scale * (-sign[d]);
                    }
                }
                _ => {
                    for d in 0..k {
                        row[d] += scale * (-sign[d] * (h[d] * inv_h));
                    }
                }
            }
        }
        // Relation tail vector: df/dr_t = +sign .* t_unit.
        if self.variant().has_rel_tail() {
            let row = update
                .rel_tail
                .entry(triple.relation)
                .or_insert_with(|| vec![0.0; k]);
            for d in 0..k {
                row[d] += scale * (sign[d] * (t[d] * inv_t));
            }
        }
        // Translation: df/db = -sign.
        if self.variant().has_translation() {
            let row = update
                .translation
                .entry(triple.relation)
                .or_insert_with(|| vec![0.0; k]);
            for d in 0..k {
                row[d] += scale * (-sign[d]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn approx(a: Real, b: Real, tol: Real) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sigmoid_tails_are_stable() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(log_sigmoid(-800.0).is_finite());
        assert!(approx(log_sigmoid(800.0), 0.0, 1e-300));
    }

    #[test]
    fn zero_temperature_weights_are_uniform() {
        let w = adversarial_weights(&[3.0, -1.0, 0.5, 10.0], 0.0);
        for &x in &w {
            assert!(approx(x, 0.25, 1e-15));
        }
    }

    #[test]
    fn weights_sum_to_one_and_follow_scores() {
        let scores = [0.1, 2.0, -3.0, 2.0, 0.1];
        let w = adversarial_weights(&scores, 1.7);
        assert!(approx(w.iter().sum::<Real>(), 1.0, 1e-12));
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] <= scores[j] {
                    assert!(w[i] <= w[j] + 1e-15);
                }
            }
        }
    }

    #[test]
    #[cfg_attr(feature = "f32", ignore = "tolerances assume the 64-bit build")]
    fn loss_hand_case() {
        // f+ = 2, f- = (0, 1), alpha = 1:
        // p = softmax(0, 1) = (1/(1+e), e/(1+e))
        let p = adversarial_weights(&[0.0, 1.0], 1.0);
        let e = (1.0 as Real).exp();
        assert!(approx(p[0], 1.0 / (1.0 + e), 1e-15));
        assert!(approx(p[1], e / (1.0 + e), 1e-15));
        let loss = self_adversarial_loss(2.0, &[0.0, 1.0], &p);
        // Independent scalar recomputation.
        let expected = -log_sigmoid(2.0) - p[0] * log_sigmoid(0.0) - p[1] * log_sigmoid(-1.0);
        assert!(approx(loss, expected, 1e-15));
        assert!(approx(loss, 1.2734152216476824, 1e-12));
    }

    #[test]
    #[cfg_attr(feature = "f32", ignore = "tolerances assume the 64-bit build")]
    fn loss_vanishes_under_saturation() {
        let w = adversarial_weights(&[-800.0, -900.0], 1.0);
        let loss = self_adversarial_loss(800.0, &[-800.0, -900.0], &w);
        assert!(loss >= 0.0);
        assert!(loss < 1e-300);
    }

    #[test]
    fn loss_is_non_negative() {
        for (pos, negs) in [
            (0.0, vec![0.0, 0.0]),
            (-5.0, vec![7.0]),
            (3.0, vec![-2.0, 4.0, 0.1]),
        ] {
            let w = adversarial_weights(&negs, 0.7);
            assert!(self_adversarial_loss(pos, &negs, &w) >= 0.0);
        }
    }

    fn saturated_params() -> ModelParameters {
        // Positive scores ~ +50 and negatives ~ -230: both sigmoid factors
        // underflow far past 1e-12.
        let entities = Matrix::from_vec(2, 2, vec![3.0, 4.0, -3.0, -4.0]);
        ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            50.0,
            entities,
            Matrix::from_vec(1, 2, vec![1.0, 1.0]),
            Some(Matrix::from_vec(1, 2, vec![100.0, 100.0])),
            Some(Matrix::from_vec(1, 2, vec![59.4, 79.2])),
        )
        .unwrap()
    }

    #[test]
    fn saturated_batch_has_vanishing_gradient() {
        let p = saturated_params();
        let pos = Triple::new(0, 0, 0);
        assert!(p.score(&pos).unwrap() > 40.0);
        assert!(p.score(&Triple::new(0, 0, 1)).unwrap() < -200.0);
        let g = p
            .gradients(&pos, Direction::Tail, &[1], &LossConfig::default())
            .unwrap();
        assert!(g.update.max_abs() < 1e-12, "max = {}", g.update.max_abs());
    }

    #[test]
    fn duplicated_negative_contributions_accumulate() {
        let entities = Matrix::from_vec(
            3,
            3,
            vec![0.4, -1.2, 0.7, 1.0, 0.3, -0.5, -0.8, 0.9, 1.4],
        );
        let p = ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            2.0,
            entities,
            Matrix::from_vec(1, 3, vec![0.9, -0.4, 1.1]),
            Some(Matrix::from_vec(1, 3, vec![-0.7, 1.3, 0.2])),
            Some(Matrix::from_vec(1, 3, vec![0.05, -0.15, 0.3])),
        )
        .unwrap();
        let pos = Triple::new(0, 0, 1);
        let cfg = LossConfig::default();
        // [2, 2] splits the softmax weight evenly, so the two occurrences
        // must sum to the same row gradient as a single negative with full
        // weight.
        let twice = p.gradients(&pos, Direction::Tail, &[2, 2], &cfg).unwrap();
        let once = p.gradients(&pos, Direction::Tail, &[2], &cfg).unwrap();
        let a = &twice.update.entities[&2];
        let b = &once.update.entities[&2];
        for d in 0..3 {
            assert!(approx(a[d], b[d], 1e-15), "dim {d}: {} vs {}", a[d], b[d]);
        }
    }

    #[test]
    fn negative_temperature_rejected() {
        let p = saturated_params();
        let cfg = LossConfig {
            adversarial_temperature: -0.5,
        };
        assert!(matches!(
            p.gradients(&Triple::new(0, 0, 0), Direction::Tail, &[1], &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn update_touches_only_batch_rows() {
        let entities = Matrix::from_vec(
            4,
            2,
            vec![0.4, -1.2, 1.0, 0.3, -0.8, 0.9, 2.0, -0.2],
        );
        let p = ModelParameters::from_matrices(
            ModelVariant::PairRE,
            2.0,
            entities,
            Matrix::from_vec(2, 2, vec![0.9, -0.4, 0.2, 0.8]),
            Some(Matrix::from_vec(2, 2, vec![-0.7, 1.3, 0.5, -0.1])),
            None,
        )
        .unwrap();
        let g = p
            .gradients(
                &Triple::new(0, 1, 1),
                Direction::Tail,
                &[2],
                &LossConfig::default(),
            )
            .unwrap();
        let touched: Vec<EntityId> = g.update.entities.keys().copied().collect();
        assert_eq!(touched, vec![0, 1, 2]);
        let rels: Vec<RelationId> = g.update.rel_head.keys().copied().collect();
        assert_eq!(rels, vec![1]);
        assert!(g.update.translation.is_empty());
    }
}
