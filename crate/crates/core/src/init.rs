//! Per-component weight initialization and the 8-combination search.
//!
//! Two distributions are supported. The gamma uniform draws from
//! `U(-(gamma+eps)/k, (gamma+eps)/k)`; the Xavier normal draws from
//! `N(0, (g * sqrt(2/k))^2)`. Entities, the relation pair (head and tail
//! vectors jointly), and translations each pick one independently, giving
//! eight combinations to search over.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::KnowledgeGraph;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalSplit, Protocol};
use crate::matrix::{l2_norm, Matrix};
use crate::model::{ModelParameters, ModelVariant, ZERO_NORM_FLOOR};
use crate::rng::stream;
use crate::train::{train, TrainConfig};
use crate::Real;

pub const DEFAULT_EPSILON: Real = 2.0;
pub const DEFAULT_GAIN: Real = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initializer {
    /// `U(-(gamma+eps)/k, (gamma+eps)/k)`.
    GammaUniform,
    /// `N(0, (g*sqrt(2/k))^2)`.
    XavierNormal,
}

impl Initializer {
    pub const BOTH: [Initializer; 2] = [Initializer::GammaUniform, Initializer::XavierNormal];

    pub fn token(&self) -> &'static str {
        match self {
            Initializer::GammaUniform => "uniform",
            Initializer::XavierNormal => "normal",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "uniform" | "gamma-uniform" | "u" => Ok(Initializer::GammaUniform),
            "normal" | "xavier-normal" | "n" => Ok(Initializer::XavierNormal),
            other => Err(Error::Config(format!(
                "unknown initializer {other:?} (expected uniform or normal)"
            ))),
        }
    }
}

/// Which distribution each component draws from, plus the distribution
/// constants and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitStrategy {
    pub entity: Initializer,
    /// Applies to the head and tail relation vectors jointly (they are one
    /// component of the search), though each matrix keeps its own stream.
    pub relation: Initializer,
    pub translation: Initializer,
    pub epsilon: Real,
    pub gain: Real,
    pub seed: u64,
    /// Margin used inside the uniform bound; defaults to the model's own
    /// margin when `None`.
    pub gamma_override: Option<Real>,
}

impl InitStrategy {
    pub fn new(entity: Initializer, relation: Initializer, translation: Initializer) -> Self {
        InitStrategy {
            entity,
            relation,
            translation,
            epsilon: DEFAULT_EPSILON,
            gain: DEFAULT_GAIN,
            seed: 0,
            gamma_override: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Parse `entity,relation,translation` tokens, e.g. `uniform,normal,normal`.
    pub fn parse(spec: &str) -> Result<Self> {
        let tokens: Vec<&str> = spec.split(',').collect();
        if tokens.len() != 3 {
            return Err(Error::Config(format!(
                "expected three comma-separated initializer tokens, got {spec:?}"
            )));
        }
        Ok(InitStrategy::new(
            Initializer::parse(tokens[0])?,
            Initializer::parse(tokens[1])?,
            Initializer::parse(tokens[2])?,
        ))
    }

    /// `entity,relation,translation` token form.
    pub fn tokens(&self) -> String {
        format!(
            "{},{},{}",
            self.entity.token(),
            self.relation.token(),
            self.translation.token()
        )
    }

    /// All eight combinations in a fixed enumeration order (entity-major,
    /// uniform before normal), sharing this strategy's constants and seed.
    pub fn all_combinations(&self) -> Vec<InitStrategy> {
        let mut out = Vec::with_capacity(8);
        for entity in Initializer::BOTH {
            for relation in Initializer::BOTH {
                for translation in Initializer::BOTH {
                    out.push(InitStrategy {
                        entity,
                        relation,
                        translation,
                        ..*self
                    });
                }
            }
        }
        out
    }

    /// Half-width of the gamma-uniform support for margin `gamma` at
    /// dimension `k`.
    pub fn uniform_bound(&self, gamma: Real, k: usize) -> Real {
        (gamma + self.epsilon) / k as Real
    }

    /// Standard deviation of the Xavier normal at dimension `k`.
    pub fn normal_std(&self, k: usize) -> Real {
        self.gain * (2.0 / k as Real).sqrt()
    }
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::new(
            Initializer::GammaUniform,
            Initializer::GammaUniform,
            Initializer::GammaUniform,
        )
    }
}

enum Dist {
    Uniform(Uniform<Real>),
    Normal(Normal<Real>),
}

impl Dist {
    fn sample(&self, rng: &mut impl Rng) -> Real {
        match self {
            Dist::Uniform(d) => d.sample(rng),
            Dist::Normal(d) => d.sample(rng),
        }
    }
}

fn build_dist(init: Initializer, strategy: &InitStrategy, gamma: Real, k: usize) -> Result<Dist> {
    match init {
        Initializer::GammaUniform => {
            let b = strategy.uniform_bound(gamma, k);
            if b <= 0.0 {
                return Err(Error::Config(format!(
                    "gamma uniform has empty support: gamma + epsilon = {} <= 0",
                    gamma + strategy.epsilon
                )));
            }
            Ok(Dist::Uniform(Uniform::new_inclusive(-b, b).map_err(
                |e| Error::Config(format!("bad uniform bounds: {e}")),
            )?))
        }
        Initializer::XavierNormal => {
            let std = strategy.normal_std(k);
            Ok(Dist::Normal(Normal::new(0.0, std).map_err(|e| {
                Error::Config(format!("bad normal std: {e}"))
            })?))
        }
    }
}

fn fill(matrix: &mut Matrix, dist: &Dist, rng: &mut impl Rng) {
    for v in matrix.data_mut() {
        *v = dist.sample(rng);
    }
}

/// Re-draw rows whose L2 norm sits below the zero-norm floor, continuing
/// from the same stream. Practically unreachable for sensible `k`, but the
/// floor invariant is load-bearing for normalization.
fn redraw_zero_rows(matrix: &mut Matrix, dist: &Dist, rng: &mut impl Rng) -> Result<()> {
    for i in 0..matrix.rows() {
        let mut attempts = 0;
        while l2_norm(matrix.row(i)) < ZERO_NORM_FLOOR {
            for v in matrix.row_mut(i) {
                *v = dist.sample(rng);
            }
            attempts += 1;
            if attempts > 100 {
                return Err(Error::Validation(format!(
                    "row {i} kept drawing zero-norm vectors"
                )));
            }
        }
    }
    Ok(())
}

/// Fill every matrix of `params` according to `strategy`. Deterministic
/// given the seed; each matrix draws from its own `(seed, name)` stream, so
/// the presence of one matrix never perturbs another.
pub fn initialize(params: &mut ModelParameters, strategy: &InitStrategy) -> Result<()> {
    let k = params.dim();
    let gamma = strategy.gamma_override.unwrap_or(params.gamma());

    let entity_dist = build_dist(strategy.entity, strategy, gamma, k)?;
    let mut entity_rng = stream(strategy.seed, "entities");
    fill(params.entities_mut(), &entity_dist, &mut entity_rng);
    redraw_zero_rows(params.entities_mut(), &entity_dist, &mut entity_rng)?;

    let relation_dist = build_dist(strategy.relation, strategy, gamma, k)?;
    let mut rh_rng = stream(strategy.seed, "rel_head");
    fill(params.rel_head_mut(), &relation_dist, &mut rh_rng);
    if let Some(rt) = params.rel_tail_mut() {
        let mut rt_rng = stream(strategy.seed, "rel_tail");
        fill(rt, &relation_dist, &mut rt_rng);
    }

    if params.variant().has_translation() {
        let translation_dist = build_dist(strategy.translation, strategy, gamma, k)?;
        let mut b_rng = stream(strategy.seed, "translation");
        fill(
            params.translation_mut().unwrap(),
            &translation_dist,
            &mut b_rng,
        );
    }
    Ok(())
}

/// One search row: the strategy and its validation metrics after the
/// training budget.
#[derive(Debug, Clone, Serialize)]
pub struct InitSearchResult {
    pub strategy: InitStrategy,
    pub valid_mrr: f64,
    pub valid_hit10: f64,
}

/// Outcome of the 8-combination search. `ranked` is sorted by valid MRR
/// descending, ties broken by HIT@10 then enumeration order; failed
/// combinations are recorded separately rather than aborting the search.
#[derive(Debug, Clone, Serialize)]
pub struct InitSearchOutcome {
    pub ranked: Vec<InitSearchResult>,
    pub failed: Vec<(InitStrategy, String)>,
}

/// Train every initializer combination for `budget_steps` and rank them by
/// filtered valid MRR.
pub fn init_search(
    graph: &KnowledgeGraph,
    variant: ModelVariant,
    dim: usize,
    gamma: Real,
    base: &InitStrategy,
    train_config: &TrainConfig,
    budget_steps: usize,
) -> Result<InitSearchOutcome> {
    if budget_steps == 0 {
        return Err(Error::Config("init search budget must be > 0 steps".into()));
    }
    let mut config = train_config.clone();
    config.steps = budget_steps;
    config.checkpoint_every = None;
    config.checkpoint_dir = None;

    let mut ranked = Vec::new();
    let mut failed = Vec::new();
    for strategy in base.all_combinations() {
        let run = || -> Result<InitSearchResult> {
            let mut params = ModelParameters::new(
                variant,
                graph.num_entities(),
                graph.num_relations(),
                dim,
                gamma,
            )?;
            initialize(&mut params, &strategy)?;
            train(graph, &mut params, &config)?;
            let report = evaluate(&params, graph, Protocol::Full, None, EvalSplit::Valid)?;
            Ok(InitSearchResult {
                strategy,
                valid_mrr: report.overall.mrr,
                valid_hit10: report.overall.hits10,
            })
        };
        match run() {
            Ok(result) => ranked.push(result),
            Err(e) => failed.push((strategy, e.to_string())),
        }
    }
    // Stable sort keeps enumeration order within exact ties.
    ranked.sort_by(|a, b| {
        b.valid_mrr
            .partial_cmp(&a.valid_mrr)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                b.valid_hit10
                    .partial_cmp(&a.valid_hit10)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    Ok(InitSearchOutcome { ranked, failed })
}
