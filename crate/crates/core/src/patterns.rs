//! Constructive verification of relation-pattern constraints against the
//! score function.
//!
//! Each constructor draws relation parameters and unit vectors satisfying a
//! pattern's premise equations exactly (a translation is back-solved so the
//! forward equation holds), then the implied equation is evaluated through
//! the real scoring path: a triple scores exactly `gamma` iff its residual
//! vector is zero. Patterns are stated on the normalized entity images, so
//! the constructions pick points directly on the unit sphere and use them
//! as entity rows.
//!
//! Symmetry needs `r_t = -r_h`; inversion is verified under the sufficient
//! assignment `r2_h = r1_t, r2_t = r1_h, b2 = -b1` (see
//! [`inverse_counterexample`] for why the weaker product-form constraint is
//! not enough on its own); composition multiplies the component vectors and
//! combines translations as `b3 = r2_h .* b1 + r1_t .* b2`. Antisymmetry is
//! an existence property: a generic construction whose forward equation
//! holds while the reverse direction misses, checked as a violation rate
//! rather than a universal claim.

use rand::Rng;
use serde::Serialize;

use crate::data::Triple;
use crate::error::Result;
use crate::matrix::{l1_norm, l2_norm, Matrix};
use crate::model::{ModelParameters, ModelVariant};
use crate::Real;

/// Margin used when scoring constructed cases. Any positive value works;
/// the checks compare scores against it.
pub const PATTERN_GAMMA: Real = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Symmetry,
    Antisymmetry,
    Inversion,
    Composition,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::Symmetry,
        Pattern::Antisymmetry,
        Pattern::Inversion,
        Pattern::Composition,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Pattern::Symmetry => "symmetry",
            Pattern::Antisymmetry => "antisymmetry",
            Pattern::Inversion => "inversion",
            Pattern::Composition => "composition",
        }
    }
}

/// One relation's constructed components.
#[derive(Debug, Clone)]
pub struct RelationParams {
    pub head: Vec<Real>,
    pub tail: Vec<Real>,
    pub translation: Vec<Real>,
}

/// A constructed instance of one pattern: relation parameters and the unit
/// vectors playing the entity images.
#[derive(Debug, Clone)]
pub struct PatternCase {
    pub pattern: Pattern,
    pub relations: Vec<RelationParams>,
    pub units: Vec<Vec<Real>>,
}

/// Outcome of checking one case at a tolerance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaseResult {
    pub pattern: Pattern,
    /// Max L1 residual of the forced premise equations (construction
    /// self-check; should be at round-off level).
    pub premise_residual: f64,
    /// For equation patterns: max |gamma - f| over the implied equations.
    /// For antisymmetry: the reverse-direction distance (a violation wants
    /// this strictly positive).
    pub conclusion_residual: f64,
    pub pass: bool,
}

fn draw_unit(k: usize, rng: &mut impl Rng) -> Vec<Real> {
    loop {
        let v: Vec<Real> = (0..k)
            .map(|_| {
                rand_distr::Distribution::sample(
                    &rand_distr::StandardNormal,
                    rng,
                )
            })
            .collect();
        let n = l2_norm(&v);
        if n > 1e-6 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Component magnitudes in [0.25, 2] with random sign, keeping every entry
/// bounded away from zero.
fn draw_relation_vector(k: usize, rng: &mut impl Rng) -> Vec<Real> {
    (0..k)
        .map(|_| {
            let magnitude = rng.random_range(0.25..=2.0);
            if rng.random_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

fn hadamard(a: &[Real], b: &[Real]) -> Vec<Real> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `tail .* u2 - head .* u1`: the translation that zeroes the equation
/// `head .* u1 + b - tail .* u2`.
fn solve_translation(head: &[Real], u1: &[Real], tail: &[Real], u2: &[Real]) -> Vec<Real> {
    (0..head.len())
        .map(|d| tail[d] * u2[d] - head[d] * u1[d])
        .collect()
}

fn equation_residual(head: &[Real], u1: &[Real], b: &[Real], tail: &[Real], u2: &[Real]) -> f64 {
    let mut out = 0.0f64;
    for d in 0..head.len() {
        out += ((head[d] * u1[d] + b[d]) - tail[d] * u2[d]).abs() as f64;
    }
    out
}

impl PatternCase {
    /// Materialize the case as model parameters: unit vectors become entity
    /// rows (they are their own normalized images) and each constructed
    /// relation becomes one relation row.
    pub fn to_model(&self, gamma: Real) -> Result<ModelParameters> {
        let k = self.units[0].len();
        let ne = self.units.len();
        let nr = self.relations.len();
        let mut entities = Matrix::zeros(ne, k);
        for (i, u) in self.units.iter().enumerate() {
            entities.row_mut(i).copy_from_slice(u);
        }
        let mut head = Matrix::zeros(nr, k);
        let mut tail = Matrix::zeros(nr, k);
        let mut translation = Matrix::zeros(nr, k);
        for (r, rel) in self.relations.iter().enumerate() {
            head.row_mut(r).copy_from_slice(&rel.head);
            tail.row_mut(r).copy_from_slice(&rel.tail);
            translation.row_mut(r).copy_from_slice(&rel.translation);
        }
        ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            gamma,
            entities,
            head,
            Some(tail),
            Some(translation),
        )
    }

    /// Max L1 residual of the premise equations the construction forced.
    pub fn premise_residual(&self) -> f64 {
        match self.pattern {
            Pattern::Symmetry | Pattern::Antisymmetry => {
                let r = &self.relations[0];
                equation_residual(&r.head, &self.units[0], &r.translation, &r.tail, &self.units[1])
            }
            Pattern::Inversion => {
                let r1 = &self.relations[0];
                equation_residual(
                    &r1.head,
                    &self.units[0],
                    &r1.translation,
                    &r1.tail,
                    &self.units[1],
                )
            }
            Pattern::Composition => {
                let r1 = &self.relations[0];
                let r2 = &self.relations[1];
                let a = equation_residual(
                    &r1.head,
                    &self.units[0],
                    &r1.translation,
                    &r1.tail,
                    &self.units[1],
                );
                let b = equation_residual(
                    &r2.head,
                    &self.units[1],
                    &r2.translation,
                    &r2.tail,
                    &self.units[2],
                );
                a.max(b)
            }
        }
    }

    /// Check the case through the scoring path at `tolerance`.
    pub fn check(&self, tolerance: f64) -> Result<CaseResult> {
        let gamma = PATTERN_GAMMA;
        let model = self.to_model(gamma)?;
        let score = |h: u32, r: u32, t: u32| -> Result<f64> {
            Ok(model.score(&Triple::new(h, r, t))? as f64)
        };
        let gamma = gamma as f64;
        let premise_residual = self.premise_residual();
        let (conclusion_residual, pass) = match self.pattern {
            Pattern::Symmetry => {
                let forward = (gamma - score(0, 0, 1)?).abs();
                let reverse = (gamma - score(1, 0, 0)?).abs();
                let residual = forward.max(reverse);
                (residual, residual <= tolerance)
            }
            Pattern::Antisymmetry => {
                let forward = (gamma - score(0, 0, 1)?).abs();
                let reverse_distance = gamma - score(1, 0, 0)?;
                // Violation means the reverse direction genuinely misses.
                (reverse_distance, forward <= tolerance && reverse_distance > tolerance)
            }
            Pattern::Inversion => {
                let forward = (gamma - score(0, 0, 1)?).abs();
                let implied = (gamma - score(1, 1, 0)?).abs();
                let residual = forward.max(implied);
                (residual, residual <= tolerance)
            }
            Pattern::Composition => {
                let first = (gamma - score(0, 0, 1)?).abs();
                let second = (gamma - score(1, 1, 2)?).abs();
                let implied = (gamma - score(0, 2, 2)?).abs();
                let residual = first.max(second).max(implied);
                (residual, residual <= tolerance)
            }
        };
        Ok(CaseResult {
            pattern: self.pattern,
            premise_residual,
            conclusion_residual,
            pass,
        })
    }
}

/// Symmetric relation: `r_t = -r_h` with the translation solved so the
/// forward equation holds; the reverse direction then holds identically.
pub fn construct_symmetric(k: usize, rng: &mut impl Rng) -> PatternCase {
    let head = draw_relation_vector(k, rng);
    let tail: Vec<Real> = head.iter().map(|x| -x).collect();
    let u1 = draw_unit(k, rng);
    let u2 = draw_unit(k, rng);
    let translation = solve_translation(&head, &u1, &tail, &u2);
    PatternCase {
        pattern: Pattern::Symmetry,
        relations: vec![RelationParams {
            head,
            tail,
            translation,
        }],
        units: vec![u1, u2],
    }
}

/// Antisymmetric case: head and tail vectors drawn independently (redrawn
/// if the tail lands within 1e-6 of `-head` element-wise), forward equation
/// forced. Generic instances violate the reverse equation.
pub fn construct_antisymmetric(k: usize, rng: &mut impl Rng) -> PatternCase {
    let head = draw_relation_vector(k, rng);
    let tail = loop {
        let candidate = draw_relation_vector(k, rng);
        let near = candidate
            .iter()
            .zip(&head)
            .all(|(t, h)| (t + h).abs() < 1e-6);
        if !near {
            break candidate;
        }
    };
    let u1 = draw_unit(k, rng);
    let u2 = draw_unit(k, rng);
    let translation = solve_translation(&head, &u1, &tail, &u2);
    PatternCase {
        pattern: Pattern::Antisymmetry,
        relations: vec![RelationParams {
            head,
            tail,
            translation,
        }],
        units: vec![u1, u2],
    }
}

/// Inverse pair under the sufficient assignment `r2_h = r1_t, r2_t = r1_h,
/// b2 = -b1`, which also satisfies the product-form constraint.
pub fn construct_inverse(k: usize, rng: &mut impl Rng) -> PatternCase {
    let r1_head = draw_relation_vector(k, rng);
    let r1_tail = draw_relation_vector(k, rng);
    let u1 = draw_unit(k, rng);
    let u2 = draw_unit(k, rng);
    let b1 = solve_translation(&r1_head, &u1, &r1_tail, &u2);
    let r2 = RelationParams {
        head: r1_tail.clone(),
        tail: r1_head.clone(),
        translation: b1.iter().map(|x| -x).collect(),
    };
    PatternCase {
        pattern: Pattern::Inversion,
        relations: vec![
            RelationParams {
                head: r1_head,
                tail: r1_tail,
                translation: b1,
            },
            r2,
        ],
        units: vec![u1, u2],
    }
}

/// Composition triple: both premise equations forced through their
/// translations, the composed relation assembled as `r3_h = r1_h .* r2_h`,
/// `r3_t = r1_t .* r2_t`, `b3 = r2_h .* b1 + r1_t .* b2`. The conclusion
/// then holds identically, for any choice of the three unit vectors.
pub fn construct_composition(k: usize, rng: &mut impl Rng) -> PatternCase {
    let r1_head = draw_relation_vector(k, rng);
    let r1_tail = draw_relation_vector(k, rng);
    let r2_head = draw_relation_vector(k, rng);
    let r2_tail = draw_relation_vector(k, rng);
    let u1 = draw_unit(k, rng);
    let u2 = draw_unit(k, rng);
    let u3 = draw_unit(k, rng);
    let b1 = solve_translation(&r1_head, &u1, &r1_tail, &u2);
    let b2 = solve_translation(&r2_head, &u2, &r2_tail, &u3);
    let b3: Vec<Real> = (0..k)
        .map(|d| r2_head[d] * b1[d] + r1_tail[d] * b2[d])
        .collect();
    let r3 = RelationParams {
        head: hadamard(&r1_head, &r2_head),
        tail: hadamard(&r1_tail, &r2_tail),
        translation: b3,
    };
    PatternCase {
        pattern: Pattern::Composition,
        relations: vec![
            RelationParams {
                head: r1_head,
                tail: r1_tail,
                translation: b1,
            },
            RelationParams {
                head: r2_head,
                tail: r2_tail,
                translation: b2,
            },
            r3,
        ],
        units: vec![u1, u2, u3],
    }
}

/// A pair satisfying only the product-form inversion constraint
/// (`r1_t .* r2_t = r1_h .* r2_h` and `b1 = -b2`) without the stronger
/// component assignment. The leftover term `r2_h .* b1 + r1_t .* b2` stays
/// nonzero, and the supposedly implied reverse equation misses.
#[derive(Debug, Clone, Serialize)]
pub struct InverseCounterexample {
    /// Max component residual of the product constraint (round-off level).
    pub product_constraint_residual: f64,
    /// L1 norm of `r2_h .* b1 + r1_t .* b2`, the term the product form
    /// leaves unconstrained.
    pub leftover_term_l1: f64,
    /// |gamma - f| of the forward equation (zero by construction).
    pub forward_residual: f64,
    /// Distance of the reverse equation (strictly positive).
    pub reverse_distance: f64,
}

pub fn inverse_counterexample(k: usize, rng: &mut impl Rng) -> Result<InverseCounterexample> {
    let r1_head = draw_relation_vector(k, rng);
    let r1_tail = draw_relation_vector(k, rng);
    let u1 = draw_unit(k, rng);
    let u2 = draw_unit(k, rng);
    let b1 = loop {
        let b = solve_translation(&r1_head, &u1, &r1_tail, &u2);
        if l1_norm(&b) > 1e-3 {
            break b;
        }
    };
    // Scale the swap assignment by a component factor far from 1: the
    // product constraint still holds, the assignment no longer does.
    let factor: Vec<Real> = (0..k)
        .map(|_| {
            let f = rng.random_range(1.25..=3.0);
            if rng.random_bool(0.5) {
                f
            } else {
                1.0 / f
            }
        })
        .collect();
    let r2_head = hadamard(&factor, &r1_tail);
    let r2_tail = hadamard(&factor, &r1_head);
    let b2: Vec<Real> = b1.iter().map(|x| -x).collect();

    let product_constraint_residual = (0..k)
        .map(|d| ((r1_tail[d] * r2_tail[d]) - (r1_head[d] * r2_head[d])).abs() as f64)
        .fold(0.0f64, f64::max);
    let leftover: Vec<Real> = (0..k)
        .map(|d| r2_head[d] * b1[d] + r1_tail[d] * b2[d])
        .collect();

    let case = PatternCase {
        pattern: Pattern::Inversion,
        relations: vec![
            RelationParams {
                head: r1_head,
                tail: r1_tail,
                translation: b1,
            },
            RelationParams {
                head: r2_head,
                tail: r2_tail,
                translation: b2,
            },
        ],
        units: vec![u1, u2],
    };
    let model = case.to_model(PATTERN_GAMMA)?;
    let forward = (PATTERN_GAMMA as f64 - model.score(&Triple::new(0, 0, 1))? as f64).abs();
    let reverse = PATTERN_GAMMA as f64 - model.score(&Triple::new(1, 1, 0))? as f64;
    Ok(InverseCounterexample {
        product_constraint_residual,
        leftover_term_l1: l1_norm(&leftover) as f64,
        forward_residual: forward,
        reverse_distance: reverse,
    })
}

/// Aggregated trials for one pattern.
#[derive(Debug, Clone, Serialize)]
pub struct PatternReport {
    pub pattern: Pattern,
    pub trials: usize,
    pub passes: usize,
    pub max_premise_residual: f64,
    /// Max conclusion residual over trials for equation patterns; for
    /// antisymmetry, the smallest reverse-direction distance seen.
    pub worst_conclusion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub dim: usize,
    pub trials: usize,
    pub tolerance: f64,
    pub patterns: Vec<PatternReport>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.patterns.iter().all(|p| p.passes == p.trials)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Run every constructor `trials` times at the given tolerance.
pub fn verify_suite(
    k: usize,
    trials: usize,
    tolerance: f64,
    rng: &mut impl Rng,
) -> Result<VerifyReport> {
    let mut patterns = Vec::new();
    if trials > 0 {
        for pattern in Pattern::ALL {
            let mut passes = 0usize;
            let mut max_premise = 0.0f64;
            let mut worst = match pattern {
                Pattern::Antisymmetry => f64::INFINITY,
                _ => 0.0,
            };
            for _ in 0..trials {
                let case = match pattern {
                    Pattern::Symmetry => construct_symmetric(k, rng),
                    Pattern::Antisymmetry => construct_antisymmetric(k, rng),
                    Pattern::Inversion => construct_inverse(k, rng),
                    Pattern::Composition => construct_composition(k, rng),
                };
                let result = case.check(tolerance)?;
                if result.pass {
                    passes += 1;
                }
                max_premise = max_premise.max(result.premise_residual);
                worst = match pattern {
                    Pattern::Antisymmetry => worst.min(result.conclusion_residual),
                    _ => worst.max(result.conclusion_residual),
                };
            }
            patterns.push(PatternReport {
                pattern,
                trials,
                passes,
                max_premise_residual: max_premise,
                worst_conclusion: worst,
            });
        }
    }
    Ok(VerifyReport {
        dim: k,
        trials,
        tolerance,
        patterns,
    })
}
