//! Embedding storage and score functions.
//!
//! All three variants share one parameter container and one scoring
//! interface. The full model maps entities onto relation-specific
//! hyper-ellipsoids and translates between the images:
//!
//! ```text
//! f_r(h, t) = gamma - || r_h ∘ (h/|h|) + b_r - r_t ∘ (t/|t|) ||_1
//! ```
//!
//! PairRE is the same score with the translation pinned to zero (and no `B`
//! matrix stored); TransE keeps a single relation vector and, deliberately,
//! the same entity normalization, so the three variants differ only in their
//! relational structure.
//!
//! Entity rows are stored raw and normalized on every read; nothing ever
//! projects them back to the unit sphere. The score is scale-invariant in
//! each entity row, so this is safe, and it keeps finite-difference checks
//! of the gradients honest.

mod checkpoint;
mod gradients;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub(crate) use checkpoint::{
    read_matrix as checkpoint_read_matrix, write_matrix as checkpoint_write_matrix,
};
pub use gradients::{
    adversarial_weights, log_sigmoid, self_adversarial_loss, sigmoid, BatchGradient, LossConfig,
    SparseUpdate,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Direction, EntityId, RelationId, Triple};
use crate::error::{Error, Result};
use crate::matrix::{l2_norm, Matrix};
use crate::Real;

/// Entity rows with L2 norm below this are considered zero and re-drawn at
/// initialization; normalization is undefined on them.
pub const ZERO_NORM_FLOOR: Real = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    TranSHER,
    PairRE,
    TransE,
}

impl ModelVariant {
    pub fn label(&self) -> &'static str {
        match self {
            ModelVariant::TranSHER => "transher",
            ModelVariant::PairRE => "pairre",
            ModelVariant::TransE => "transe",
        }
    }

    /// Whether the variant carries a separate tail-side relation vector.
    pub fn has_rel_tail(&self) -> bool {
        !matches!(self, ModelVariant::TransE)
    }

    /// Whether the variant carries per-relation translations.
    pub fn has_translation(&self) -> bool {
        matches!(self, ModelVariant::TranSHER)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transher" => Ok(ModelVariant::TranSHER),
            "pairre" => Ok(ModelVariant::PairRE),
            "transe" => Ok(ModelVariant::TransE),
            other => Err(Error::Config(format!(
                "unknown model variant {other:?} (expected transher, pairre, or transe)"
            ))),
        }
    }
}

/// Entity matrix plus the per-relation components the variant uses. Unused
/// matrices are absent, not zero-filled.
#[derive(Debug, Clone)]
pub struct ModelParameters {
    variant: ModelVariant,
    dim: usize,
    gamma: Real,
    entities: Matrix,
    rel_head: Matrix,
    rel_tail: Option<Matrix>,
    translation: Option<Matrix>,
}

impl ModelParameters {
    /// Allocate zero-filled parameters. Call an initializer before scoring:
    /// zero entity rows cannot be normalized.
    pub fn new(
        variant: ModelVariant,
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        gamma: Real,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if gamma < 0.0 {
            return Err(Error::Config(format!(
                "margin gamma must be non-negative, got {gamma}"
            )));
        }
        Ok(ModelParameters {
            variant,
            dim,
            gamma,
            entities: Matrix::zeros(num_entities, dim),
            rel_head: Matrix::zeros(num_relations, dim),
            rel_tail: variant
                .has_rel_tail()
                .then(|| Matrix::zeros(num_relations, dim)),
            translation: variant
                .has_translation()
                .then(|| Matrix::zeros(num_relations, dim)),
        })
    }

    /// Build from explicit matrices, validating shapes against the variant.
    pub fn from_matrices(
        variant: ModelVariant,
        gamma: Real,
        entities: Matrix,
        rel_head: Matrix,
        rel_tail: Option<Matrix>,
        translation: Option<Matrix>,
    ) -> Result<Self> {
        let dim = entities.cols();
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        let num_relations = rel_head.rows();
        if rel_head.cols() != dim {
            return Err(Error::Validation("rel_head width != entity width".into()));
        }
        if variant.has_rel_tail() != rel_tail.is_some() {
            return Err(Error::Validation(format!(
                "variant {variant} {} a rel_tail matrix",
                if variant.has_rel_tail() {
                    "requires"
                } else {
                    "does not take"
                }
            )));
        }
        if variant.has_translation() != translation.is_some() {
            return Err(Error::Validation(format!(
                "variant {variant} {} a translation matrix",
                if variant.has_translation() {
                    "requires"
                } else {
                    "does not take"
                }
            )));
        }
        for (name, m) in [("rel_tail", &rel_tail), ("translation", &translation)] {
            if let Some(m) = m {
                if m.rows() != num_relations || m.cols() != dim {
                    return Err(Error::Validation(format!("{name} shape mismatch")));
                }
            }
        }
        Ok(ModelParameters {
            variant,
            dim,
            gamma,
            entities,
            rel_head,
            rel_tail,
            translation,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> Real {
        self.gamma
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.rel_head.rows()
    }

    pub fn entities(&self) -> &Matrix {
        &self.entities
    }

    pub fn entities_mut(&mut self) -> &mut Matrix {
        &mut self.entities
    }

    pub fn rel_head(&self) -> &Matrix {
        &self.rel_head
    }

    pub fn rel_head_mut(&mut self) -> &mut Matrix {
        &mut self.rel_head
    }

    pub fn rel_tail(&self) -> Option<&Matrix> {
        self.rel_tail.as_ref()
    }

    pub fn rel_tail_mut(&mut self) -> Option<&mut Matrix> {
        self.rel_tail.as_mut()
    }

    pub fn translation(&self) -> Option<&Matrix> {
        self.translation.as_ref()
    }

    pub fn translation_mut(&mut self) -> Option<&mut Matrix> {
        self.translation.as_mut()
    }

    /// Matrix names in checkpoint order, used for file layout and RNG
    /// stream derivation.
    pub fn matrix_names(&self) -> Vec<&'static str> {
        let mut names = vec!["entities", "rel_head"];
        if self.rel_tail.is_some() {
            names.push("rel_tail");
        }
        if self.translation.is_some() {
            names.push("translation");
        }
        names
    }

    pub fn matrix(&self, name: &str) -> Option<&Matrix> {
        match name {
            "entities" => Some(&self.entities),
            "rel_head" => Some(&self.rel_head),
            "rel_tail" => self.rel_tail.as_ref(),
            "translation" => self.translation.as_ref(),
            _ => None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entities.is_finite()
            && self.rel_head.is_finite()
            && self.rel_tail.as_ref().is_none_or(Matrix::is_finite)
            && self.translation.as_ref().is_none_or(Matrix::is_finite)
    }

    fn check_entity(&self, id: EntityId) -> Result<()> {
        if (id as usize) < self.num_entities() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                kind: "entity",
                id,
                max: self.num_entities().saturating_sub(1) as u32,
            })
        }
    }

    fn check_relation(&self, id: RelationId) -> Result<()> {
        if (id as usize) < self.num_relations() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                kind: "relation",
                id,
                max: self.num_relations().saturating_sub(1) as u32,
            })
        }
    }

    /// Reciprocal L2 norm of an entity row; errors on (near-)zero rows and
    /// on rows whose norm overflows.
    fn inv_norm(&self, id: EntityId) -> Result<Real> {
        let n = l2_norm(self.entities.row(id as usize));
        if n < ZERO_NORM_FLOOR {
            Err(Error::ZeroNormEntity { entity: id })
        } else if !n.is_finite() {
            Err(Error::Validation(format!(
                "entity {id} has non-finite embedding norm"
            )))
        } else {
            Ok(1.0 / n)
        }
    }

    /// Reciprocal norms for every entity row, for callers that score many
    /// queries against the full entity set.
    pub fn inv_entity_norms(&self) -> Result<Vec<Real>> {
        (0..self.num_entities() as u32)
            .map(|id| self.inv_norm(id))
            .collect()
    }

    /// Head-side mapping: the entity row is L2-normalized onto the unit
    /// sphere and scaled element-wise by the relation's head vector, which
    /// places the image on that relation's hyper-ellipsoid.
    pub fn map_head(&self, relation: RelationId, entity: EntityId) -> Result<Vec<Real>> {
        self.map_side(relation, entity, Direction::Head)
    }

    /// Tail-side mapping, symmetric to [`map_head`](Self::map_head) with the
    /// tail vector.
    pub fn map_tail(&self, relation: RelationId, entity: EntityId) -> Result<Vec<Real>> {
        self.map_side(relation, entity, Direction::Tail)
    }

    fn map_side(
        &self,
        relation: RelationId,
        entity: EntityId,
        side: Direction,
    ) -> Result<Vec<Real>> {
        self.check_relation(relation)?;
        self.check_entity(entity)?;
        let rel = match side {
            Direction::Head => self.rel_head.row(relation as usize),
            Direction::Tail => self
                .rel_tail
                .as_ref()
                .ok_or(Error::UnsupportedVariant {
                    variant: self.variant.label(),
                    operation: "map_tail",
                })?
                .row(relation as usize),
        };
        if side == Direction::Head && !self.variant.has_rel_tail() {
            return Err(Error::UnsupportedVariant {
                variant: self.variant.label(),
                operation: "map_head",
            });
        }
        let inv = self.inv_norm(entity)?;
        let e = self.entities.row(entity as usize);
        Ok(rel
            .iter()
            .zip(e)
            .map(|(r, x)| r * (x * inv))
            .collect())
    }

    /// Plausibility score of a triple. Higher is more plausible; may be
    /// negative.
    pub fn score(&self, triple: &Triple) -> Result<Real> {
        self.check_entity(triple.head)?;
        self.check_entity(triple.tail)?;
        self.check_relation(triple.relation)?;
        let inv_h = self.inv_norm(triple.head)?;
        let inv_t = self.inv_norm(triple.tail)?;
        Ok(self.score_unchecked(triple, inv_h, inv_t))
    }

    /// Scoring kernel shared by every path. The per-component arithmetic and
    /// accumulation order here are the single definition of the score;
    /// [`QueryScorer`] hoists only fixed-side subterms so its results are
    /// bit-identical.
    fn score_unchecked(&self, triple: &Triple, inv_h: Real, inv_t: Real) -> Real {
        let h = self.entities.row(triple.head as usize);
        let t = self.entities.row(triple.tail as usize);
        let r = triple.relation as usize;
        let rh = self.rel_head.row(r);
        let mut dist: Real = 0.0;
        match self.variant {
            ModelVariant::TranSHER => {
                let rt = self.rel_tail.as_ref().unwrap().row(r);
                let b = self.translation.as_ref().unwrap().row(r);
                for d in 0..self.dim {
                    let u = (rh[d] * (h[d] * inv_h) + b[d]) - rt[d] * (t[d] * inv_t);
                    dist += u.abs();
                }
            }
            ModelVariant::PairRE => {
                let rt = self.rel_tail.as_ref().unwrap().row(r);
                for d in 0..self.dim {
                    let u = rh[d] * (h[d] * inv_h) - rt[d] * (t[d] * inv_t);
                    dist += u.abs();
                }
            }
            ModelVariant::TransE => {
                for d in 0..self.dim {
                    let u = (h[d] * inv_h + rh[d]) - t[d] * inv_t;
                    dist += u.abs();
                }
            }
        }
        self.gamma - dist
    }

    /// Residual vector `G_h(head) + B - G_t(tail)` (variant-appropriate),
    /// shared by the gradient path.
    pub(crate) fn residual(&self, triple: &Triple, inv_h: Real, inv_t: Real) -> Vec<Real> {
        let h = self.entities.row(triple.head as usize);
        let t = self.entities.row(triple.tail as usize);
        let r = triple.relation as usize;
        let rh = self.rel_head.row(r);
        let mut out = vec![0.0; self.dim];
        match self.variant {
            ModelVariant::TranSHER => {
                let rt = self.rel_tail.as_ref().unwrap().row(r);
                let b = self.translation.as_ref().unwrap().row(r);
                for d in 0..self.dim {
                    out[d] = (rh[d] * (h[d] * inv_h) + b[d]) - rt[d] * (t[d] * inv_t);
                }
            }
            ModelVariant::PairRE => {
                let rt = self.rel_tail.as_ref().unwrap().row(r);
                for d in 0..self.dim {
                    out[d] = rh[d] * (h[d] * inv_h) - rt[d] * (t[d] * inv_t);
                }
            }
            ModelVariant::TransE => {
                for d in 0..self.dim {
                    out[d] = (h[d] * inv_h + rh[d]) - t[d] * inv_t;
                }
            }
        }
        out
    }

    /// Score a block of candidate completions sharing the positive's
    /// relation and fixed other-side entity.
    pub fn score_batch(
        &self,
        positive: &Triple,
        candidates: &[EntityId],
        direction: Direction,
        include_positive: bool,
    ) -> Result<ScoreBatch> {
        let scorer = self.query_scorer(positive, direction)?;
        let mut candidate_scores = Vec::with_capacity(candidates.len());
        for &c in candidates {
            self.check_entity(c)?;
            candidate_scores.push(scorer.score(c, self.inv_norm(c)?));
        }
        let positive_score = if include_positive {
            Some(self.score(positive)?)
        } else {
            None
        };
        Ok(ScoreBatch {
            candidate_scores,
            positive_score,
        })
    }

    /// Precompute the fixed side of a query so candidates on the other side
    /// can be scored cheaply. Scores are bit-identical to [`score`](Self::score).
    pub fn query_scorer(&self, triple: &Triple, direction: Direction) -> Result<QueryScorer<'_>> {
        self.check_relation(triple.relation)?;
        let fixed_entity = match direction {
            Direction::Head => triple.tail, // head is predicted, tail fixed
            Direction::Tail => triple.head,
        };
        self.check_entity(fixed_entity)?;
        let inv_fixed = self.inv_norm(fixed_entity)?;
        let e = self.entities.row(fixed_entity as usize);
        let r = triple.relation as usize;
        let rh = self.rel_head.row(r);
        let mut fixed = vec![0.0; self.dim];
        match (self.variant, direction) {
            // Fixed head: fold the whole head-side term (and translation).
            (ModelVariant::TranSHER, Direction::Tail) => {
                let b = self.translation.as_ref().unwrap().row(r);
                for d in 0..self.dim {
                    fixed[d] = rh[d] * (e[d] * inv_fixed) + b[d];
                }
            }
            (ModelVariant::PairRE, Direction::Tail) => {
                for d in 0..self.dim {
                    fixed[d] = rh[d] * (e[d] * inv_fixed);
                }
            }
            (ModelVariant::TransE, Direction::Tail) => {
                for d in 0..self.dim {
                    fixed[d] = e[d] * inv_fixed + rh[d];
                }
            }
            // Fixed tail: fold only the tail-side product; the head-side
            // add stays in the candidate loop so the arithmetic tree is
            // unchanged.
            (ModelVariant::TranSHER | ModelVariant::PairRE, Direction::Head) => {
                let rt = self.rel_tail.as_ref().unwrap().row(r);
                for d in 0..self.dim {
                    fixed[d] = rt[d] * (e[d] * inv_fixed);
                }
            }
            (ModelVariant::TransE, Direction::Head) => {
                for d in 0..self.dim {
                    fixed[d] = e[d] * inv_fixed;
                }
            }
        }
        Ok(QueryScorer {
            params: self,
            relation: triple.relation,
            direction,
            fixed,
        })
    }
}

/// Scores for one positive and a block of same-relation candidates.
#[derive(Debug, Clone)]
pub struct ScoreBatch {
    pub candidate_scores: Vec<Real>,
    pub positive_score: Option<Real>,
}

/// One side of a query folded into a per-dimension vector; see
/// [`ModelParameters::query_scorer`].
pub struct QueryScorer<'a> {
    params: &'a ModelParameters,
    relation: RelationId,
    direction: Direction,
    fixed: Vec<Real>,
}

impl QueryScorer<'_> {
    /// Score the candidate entity on the query's open side. `inv_norm` must
    /// be `1 / ||entity row||` for the candidate.
    pub fn score(&self, candidate: EntityId, inv_norm: Real) -> Real {
        let c = self.params.entities.row(candidate as usize);
        let r = self.relation as usize;
        let k = self.params.dim;
        let mut dist: Real = 0.0;
        match (self.params.variant, self.direction) {
            (ModelVariant::TranSHER | ModelVariant::PairRE, Direction::Tail) => {
                let rt = self.params.rel_tail.as_ref().unwrap().row(r);
                for d in 0..k {
                    let u = self.fixed[d] - rt[d] * (c[d] * inv_norm);
                    dist += u.abs();
                }
            }
            (ModelVariant::TransE, Direction::Tail) => {
                for d in 0..k {
                    let u = self.fixed[d] - c[d] * inv_norm;
                    dist += u.abs();
                }
            }
            (ModelVariant::TranSHER, Direction::Head) => {
                let rh = self.params.rel_head.row(r);
                let b = self.params.translation.as_ref().unwrap().row(r);
                for d in 0..k {
                    let u = (rh[d] * (c[d] * inv_norm) + b[d]) - self.fixed[d];
                    dist += u.abs();
                }
            }
            (ModelVariant::PairRE, Direction::Head) => {
                let rh = self.params.rel_head.row(r);
                for d in 0..k {
                    let u = rh[d] * (c[d] * inv_norm) - self.fixed[d];
                    dist += u.abs();
                }
            }
            (ModelVariant::TransE, Direction::Head) => {
                let rh = self.params.rel_head.row(r);
                for d in 0..k {
                    let u = (c[d] * inv_norm + rh[d]) - self.fixed[d];
                    dist += u.abs();
                }
            }
        }
        self.params.gamma - dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_2d() -> ModelParameters {
        // 2 entities, 1 relation, k = 2.
        let entities = Matrix::from_vec(2, 2, vec![3.0, 4.0, 0.0, 5.0]);
        let rel_head = Matrix::from_vec(1, 2, vec![1.0, 1.0]);
        let rel_tail = Matrix::from_vec(1, 2, vec![2.0, 2.0]);
        let translation = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            6.0,
            entities,
            rel_head,
            Some(rel_tail),
            Some(translation),
        )
        .unwrap()
    }

    #[test]
    fn map_head_normalizes_three_four_five() {
        let p = params_2d();
        let m = p.map_head(0, 0).unwrap();
        assert!((m[0] - 0.6).abs() < 1e-15);
        assert!((m[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn map_tail_axis_aligned() {
        let p = params_2d();
        let m = p.map_tail(0, 1).unwrap();
        assert!((m[0] - 0.0).abs() < 1e-15);
        assert!((m[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn map_sides_agree_when_vectors_agree() {
        let entities = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let rel = vec![0.3, -1.2, 2.0];
        let p = ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            2.0,
            entities,
            Matrix::from_vec(1, 3, rel.clone()),
            Some(Matrix::from_vec(1, 3, rel)),
            Some(Matrix::from_vec(1, 3, vec![0.0; 3])),
        )
        .unwrap();
        assert_eq!(p.map_head(0, 0).unwrap(), p.map_tail(0, 0).unwrap());
    }

    #[test]
    fn all_ones_relation_maps_to_unit_sphere() {
        let p = params_2d();
        let m = p.map_head(0, 0).unwrap();
        let norm: Real = m.iter().map(|x| x * x).sum::<Real>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_zero_distance_is_gamma() {
        // r_h = r_t = 1, b = 0, head = tail -> images coincide.
        let entities = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
        let p = ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            6.0,
            entities,
            Matrix::from_vec(1, 2, vec![1.0, 1.0]),
            Some(Matrix::from_vec(1, 2, vec![1.0, 1.0])),
            Some(Matrix::from_vec(1, 2, vec![0.0, 0.0])),
        )
        .unwrap();
        let s = p.score(&Triple::new(0, 0, 0)).unwrap();
        assert_eq!(s, 6.0);
    }

    #[test]
    fn score_hand_case() {
        // G_h(head) = (0.6, 0.8), B = (0.1, -0.1), G_t(tail) = (0.5, 0.5)
        // -> 6 - (|0.2| + |0.2|) = 5.6
        let entities = Matrix::from_vec(2, 2, vec![3.0, 4.0, 1.0, 1.0]);
        let p = ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            6.0,
            entities,
            Matrix::from_vec(1, 2, vec![1.0, 1.0]),
            // tail image must be (0.5, 0.5); unit tail is (1/sqrt2, 1/sqrt2)
            Some(Matrix::from_vec(
                1,
                2,
                vec![0.5 * (2.0 as Real).sqrt(), 0.5 * (2.0 as Real).sqrt()],
            )),
            Some(Matrix::from_vec(1, 2, vec![0.1, -0.1])),
        )
        .unwrap();
        let s = p.score(&Triple::new(0, 0, 1)).unwrap();
        assert!((s - 5.6).abs() < 1e-12, "score = {s}");
    }

    #[test]
    fn zero_translation_reduces_to_pairre() {
        let entities = Matrix::from_vec(3, 4, vec![
            0.3, -1.0, 2.0, 0.7, //
            -0.4, 0.9, 1.1, -2.0, //
            1.5, 0.2, -0.6, 0.8,
        ]);
        let rh = Matrix::from_vec(2, 4, vec![1.0, -0.5, 0.25, 2.0, 0.1, 0.2, 0.3, 0.4]);
        let rt = Matrix::from_vec(2, 4, vec![-1.0, 0.5, 2.0, 0.25, 0.4, 0.3, 0.2, 0.1]);
        let transher = ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            4.0,
            entities.clone(),
            rh.clone(),
            Some(rt.clone()),
            Some(Matrix::zeros(2, 4)),
        )
        .unwrap();
        let pairre = ModelParameters::from_matrices(
            ModelVariant::PairRE,
            4.0,
            entities,
            rh,
            Some(rt),
            None,
        )
        .unwrap();
        for h in 0..3u32 {
            for r in 0..2u32 {
                for t in 0..3u32 {
                    let triple = Triple::new(h, r, t);
                    let a = transher.score(&triple).unwrap();
                    let b = pairre.score(&triple).unwrap();
                    assert_eq!(a.to_bits(), b.to_bits(), "triple {triple:?}");
                }
            }
        }
    }

    #[test]
    fn batch_matches_individual_scores() {
        let p = params_2d();
        let positive = Triple::new(0, 0, 1);
        let batch = p
            .score_batch(&positive, &[0, 1, 0], Direction::Tail, true)
            .unwrap();
        assert_eq!(batch.candidate_scores.len(), 3);
        for (i, &c) in [0u32, 1, 0].iter().enumerate() {
            let direct = p.score(&Triple::new(0, 0, c)).unwrap();
            assert_eq!(batch.candidate_scores[i].to_bits(), direct.to_bits());
        }
        assert_eq!(
            batch.positive_score.unwrap().to_bits(),
            p.score(&positive).unwrap().to_bits()
        );
    }

    #[test]
    fn batch_with_own_entity_matches_positive() {
        let p = params_2d();
        let positive = Triple::new(0, 0, 1);
        let batch = p
            .score_batch(&positive, &[1], Direction::Tail, true)
            .unwrap();
        assert_eq!(
            batch.candidate_scores[0].to_bits(),
            batch.positive_score.unwrap().to_bits()
        );
    }

    #[test]
    fn empty_batch_is_empty() {
        let p = params_2d();
        let batch = p
            .score_batch(&Triple::new(0, 0, 1), &[], Direction::Tail, false)
            .unwrap();
        assert!(batch.candidate_scores.is_empty());
        assert!(batch.positive_score.is_none());
    }

    #[test]
    fn head_direction_scorer_matches_score() {
        let p = params_2d();
        let positive = Triple::new(0, 0, 1);
        let scorer = p.query_scorer(&positive, Direction::Head).unwrap();
        for c in 0..2u32 {
            let inv = 1.0 / l2_norm(p.entities().row(c as usize));
            let via_scorer = scorer.score(c, inv);
            let direct = p.score(&Triple::new(c, 0, 1)).unwrap();
            assert_eq!(via_scorer.to_bits(), direct.to_bits());
        }
    }

    #[test]
    fn zero_norm_entity_rejected() {
        let entities = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        let p = ModelParameters::from_matrices(
            ModelVariant::TransE,
            1.0,
            entities,
            Matrix::from_vec(1, 2, vec![1.0, 1.0]),
            None,
            None,
        )
        .unwrap();
        assert!(matches!(
            p.score(&Triple::new(0, 0, 0)),
            Err(Error::ZeroNormEntity { entity: 0 })
        ));
    }

    #[test]
    fn ids_out_of_range_rejected() {
        let p = params_2d();
        assert!(p.score(&Triple::new(9, 0, 0)).is_err());
        assert!(p.score(&Triple::new(0, 9, 0)).is_err());
    }

    #[test]
    fn transe_has_no_ellipsoid_mappings() {
        let entities = Matrix::from_vec(1, 2, vec![1.0, 1.0]);
        let p = ModelParameters::from_matrices(
            ModelVariant::TransE,
            1.0,
            entities,
            Matrix::from_vec(1, 2, vec![0.5, 0.5]),
            None,
            None,
        )
        .unwrap();
        assert!(matches!(
            p.map_head(0, 0),
            Err(Error::UnsupportedVariant { .. })
        ));
        assert!(matches!(
            p.map_tail(0, 0),
            Err(Error::UnsupportedVariant { .. })
        ));
    }

    #[test]
    #[cfg_attr(feature = "f32", ignore = "tolerances assume the 64-bit build")]
    fn ellipsoid_restriction_holds() {
        // On dimensions with nonzero r_h, sum((z_d / r_h_d)^2) recovers the
        // unit vector's mass there; where r_h_d = 0, the image is 0. The
        // entity keeps its mass off the zeroed dimension so the sum is 1.
        let entities = Matrix::from_vec(1, 4, vec![0.3, 0.0, 1.9, 0.2]);
        let p = ModelParameters::from_matrices(
            ModelVariant::PairRE,
            1.0,
            entities,
            Matrix::from_vec(1, 4, vec![2.0, 0.0, -0.5, 1.25]),
            Some(Matrix::from_vec(1, 4, vec![1.0; 4])),
            None,
        )
        .unwrap();
        let z = p.map_head(0, 0).unwrap();
        let rh = p.rel_head().row(0);
        let mut sum: Real = 0.0;
        for d in 0..4 {
            if rh[d] == 0.0 {
                assert_eq!(z[d], 0.0);
            } else {
                sum += (z[d] / rh[d]).powi(2);
            }
        }
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
