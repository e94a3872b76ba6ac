//! Subcommand implementations.
//!
//! Every run resolves its configuration (file < flags, with the output
//! directory overridable by `TRANSHER_OUTPUT_DIR`), writes a
//! `run-manifest.json` capturing the resolved values and input
//! fingerprints, and leaves its artifacts in the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use transher::analysis::{
    default_block_size, gradient_trace_export, translation_heatmap, translation_l1_histogram,
};
use transher::data::{
    categorize_relations, file_fingerprint, load_candidates, load_dataset, CandidateList,
    Direction, KnowledgeGraph, DEFAULT_RELATION_TYPE_THRESHOLD,
};
use transher::error::{Error, Result};
use transher::eval::{evaluate_with_types, top_k, EvalSplit, Protocol};
use transher::init::{init_search, initialize, InitStrategy, DEFAULT_EPSILON, DEFAULT_GAIN};
use transher::model::{load_checkpoint, save_checkpoint, ModelParameters, ModelVariant};
use transher::patterns::{verify_suite, Pattern};
use transher::rng::stream;
use transher::train::{train_with_hook, TrainConfig};
use transher::Real;

use crate::args::*;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

pub fn log_level() -> LogLevel {
    match std::env::var("TRANSHER_LOG").as_deref() {
        Ok("quiet") => LogLevel::Quiet,
        Ok("debug") => LogLevel::Debug,
        _ => LogLevel::Info,
    }
}

macro_rules! info {
    ($($arg:tt)*) => {
        if log_level() >= LogLevel::Info {
            eprintln!($($arg)*);
        }
    };
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn resolve_output_dir(
    cli: &Option<PathBuf>,
    file: &FileConfig,
    command: &str,
) -> Result<PathBuf> {
    if let Ok(env) = std::env::var("TRANSHER_OUTPUT_DIR") {
        return Ok(PathBuf::from(env));
    }
    pick(
        cli.clone(),
        file,
        "output-dir",
        PathBuf::from("runs").join(command),
    )
}

fn init_thread_pool(threads: Option<usize>, deterministic: bool) {
    let n = if deterministic { Some(1) } else { threads };
    if let Some(n) = n {
        if n > 0 {
            // A second invocation in-process leaves the existing pool.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<C: Serialize> {
    command: &'static str,
    version: &'static str,
    config: C,
    /// Content fingerprints of every input the run depends on.
    inputs: BTreeMap<String, String>,
}

fn write_manifest<C: Serialize>(
    out_dir: &Path,
    command: &'static str,
    config: C,
    inputs: BTreeMap<String, String>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs,
    };
    let path = out_dir.join("run-manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn load_graph(paths: &DatasetPaths) -> Result<KnowledgeGraph> {
    let graph = load_dataset(
        &paths.train,
        &paths.valid,
        &paths.test,
        &paths.entities,
        &paths.relations,
    )?;
    info!(
        "loaded dataset: |E|={}, |R|={}, train={}, valid={}, test={}",
        graph.num_entities(),
        graph.num_relations(),
        graph.train.len(),
        graph.valid.len(),
        graph.test.len()
    );
    let dups = graph.notes.duplicates_train
        + graph.notes.duplicates_valid
        + graph.notes.duplicates_test;
    if dups > 0 {
        info!(
            "deduplicated {dups} triples (train {}, valid {}, test {})",
            graph.notes.duplicates_train, graph.notes.duplicates_valid, graph.notes.duplicates_test
        );
    }
    for w in &graph.notes.warnings {
        info!("warning: {w}");
    }
    Ok(graph)
}

fn load_checked_checkpoint(
    checkpoint: &Path,
    graph: &KnowledgeGraph,
) -> Result<ModelParameters> {
    let (params, manifest) = load_checkpoint(checkpoint)?;
    let dataset_fp = graph.fingerprint();
    if manifest.dataset_fingerprint != dataset_fp {
        return Err(Error::FingerprintMismatch {
            checkpoint: manifest.dataset_fingerprint,
            dataset: dataset_fp,
        });
    }
    Ok(params)
}

fn dataset_inputs(paths: &DatasetPaths, graph: &KnowledgeGraph) -> BTreeMap<String, String> {
    let mut inputs = BTreeMap::new();
    inputs.insert("dataset".into(), graph.fingerprint());
    for (name, p) in [
        ("train", &paths.train),
        ("valid", &paths.valid),
        ("test", &paths.test),
        ("entities", &paths.entities),
        ("relations", &paths.relations),
    ] {
        if let Ok(fp) = file_fingerprint(p) {
            inputs.insert(format!("file:{name}"), fp);
        }
    }
    inputs
}

#[derive(Debug, Serialize)]
struct ResolvedTrain {
    dataset: DatasetPaths,
    model: String,
    dim: usize,
    gamma: f64,
    alpha: f64,
    negatives: usize,
    batch_size: usize,
    steps: usize,
    learning_rate: f64,
    lr_decay: Vec<(usize, f64)>,
    reg_weight: f64,
    reg_order: u32,
    filtered_negatives: bool,
    init: String,
    epsilon: f64,
    gain: f64,
    init_gamma: Option<f64>,
    seed: u64,
    deterministic: bool,
    threads: Option<usize>,
    log_every: usize,
    checkpoint_every: Option<usize>,
    checkpoint_dir: PathBuf,
    valid_every: Option<usize>,
    output_dir: PathBuf,
}

pub fn cmd_train(args: TrainArgs) -> Result<i32> {
    let file = load_file_config(&args.common.config)?;
    let out_dir = resolve_output_dir(&args.common.output_dir, &file, "train")?;
    let paths = args.dataset.resolve(&file)?;
    let resolved = ResolvedTrain {
        dataset: paths.clone(),
        model: pick(args.model.model, &file, "model", "transher".into())?,
        dim: pick(args.model.dim, &file, "dim", 200)?,
        gamma: pick(args.model.gamma, &file, "gamma", 6.0)?,
        alpha: pick(args.alpha, &file, "alpha", 1.0)?,
        negatives: pick(args.negatives, &file, "negatives", 128)?,
        batch_size: pick(args.batch_size, &file, "batch-size", 512)?,
        steps: pick(args.steps, &file, "steps", 100_000)?,
        learning_rate: pick(args.learning_rate, &file, "learning-rate", 1e-4)?,
        lr_decay: parse_lr_decay(&pick(args.lr_decay, &file, "lr-decay", String::new())?)?,
        reg_weight: pick(args.reg_weight, &file, "reg-weight", 0.0)?,
        reg_order: pick(args.reg_order, &file, "reg-order", 3)?,
        filtered_negatives: !pick_flag(
            args.unfiltered_negatives,
            &file,
            "unfiltered-negatives",
            false,
        )?,
        init: pick(args.init, &file, "init", "uniform,uniform,uniform".into())?,
        epsilon: pick(args.epsilon, &file, "epsilon", DEFAULT_EPSILON as f64)?,
        gain: pick(args.gain, &file, "gain", DEFAULT_GAIN as f64)?,
        init_gamma: pick_opt(args.init_gamma, &file, "init-gamma")?,
        seed: pick(args.common.seed, &file, "seed", 0)?,
        deterministic: pick_flag(args.common.deterministic, &file, "deterministic", false)?,
        threads: pick_opt(args.common.threads, &file, "threads")?,
        log_every: pick(args.log_every, &file, "log-every", 100)?,
        checkpoint_every: pick_opt(args.checkpoint_every, &file, "checkpoint-every")?,
        checkpoint_dir: pick(
            args.checkpoint_dir,
            &file,
            "checkpoint-dir",
            out_dir.join("checkpoints"),
        )?,
        valid_every: pick_opt(args.valid_every, &file, "valid-every")?,
        output_dir: out_dir.clone(),
    };
    init_thread_pool(resolved.threads, resolved.deterministic);

    let graph = load_graph(&paths)?;
    let variant: ModelVariant = resolved.model.parse()?;
    let mut params = ModelParameters::new(
        variant,
        graph.num_entities(),
        graph.num_relations(),
        resolved.dim,
        resolved.gamma as Real,
    )?;
    let mut strategy = InitStrategy::parse(&resolved.init)?.with_seed(resolved.seed);
    strategy.epsilon = resolved.epsilon as Real;
    strategy.gain = resolved.gain as Real;
    strategy.gamma_override = resolved.init_gamma.map(|g| g as Real);
    initialize(&mut params, &strategy)?;

    let config = TrainConfig {
        steps: resolved.steps,
        batch_size: resolved.batch_size,
        negatives: resolved.negatives,
        adversarial_temperature: resolved.alpha as Real,
        learning_rate: resolved.learning_rate as Real,
        lr_decay: resolved
            .lr_decay
            .iter()
            .map(|&(step, factor)| (step, factor as Real))
            .collect(),
        regularization_weight: resolved.reg_weight as Real,
        regularization_order: resolved.reg_order,
        regularize_translation: true,
        filtered_negatives: resolved.filtered_negatives,
        seed: resolved.seed,
        deterministic: resolved.deterministic,
        log_every: resolved.log_every,
        checkpoint_every: resolved.checkpoint_every,
        checkpoint_dir: resolved.checkpoint_every.map(|_| resolved.checkpoint_dir.clone()),
    };

    let mut inputs = dataset_inputs(&paths, &graph);
    if let Some(p) = &file.path {
        inputs.insert("config_file".into(), file_fingerprint(p)?);
    }
    write_manifest(&out_dir, "train", &resolved, inputs)?;

    let valid_every = resolved.valid_every.filter(|_| !graph.valid.is_empty());
    let output = train_with_hook(&graph, &mut params, &config, |step, params| {
        if let Some(every) = valid_every {
            if (step + 1) % every == 0 {
                let report = evaluate_with_types(
                    params,
                    &graph,
                    Protocol::Full,
                    None,
                    EvalSplit::Valid,
                    &categorize_relations(&graph, DEFAULT_RELATION_TYPE_THRESHOLD)?,
                )?;
                println!(
                    "step {:>8}: valid MRR {:.4}, HIT@10 {:.4}",
                    step + 1,
                    report.overall.mrr,
                    report.overall.hits10
                );
            }
        }
        Ok(())
    })?;

    let final_dir = out_dir.join("checkpoint");
    save_checkpoint(&params, &final_dir, &graph.fingerprint())?;
    if let Some(adam) = &output.optimizer {
        adam.save_state(&final_dir.join("optimizer"))?;
    }

    let trace_path = out_dir.join("loss_trace.csv");
    let mut trace = String::from("step,loss\n");
    for (step, loss) in &output.loss_trace {
        trace.push_str(&format!("{step},{loss}\n"));
    }
    std::fs::write(&trace_path, trace).map_err(|e| Error::io(&trace_path, e))?;
    gradient_trace_export(&output.grad_stats, &out_dir.join("grad_stats.csv"))?;

    if output.unfiltered_fallbacks > 0 {
        info!(
            "warning: {} negative draws fell back to unfiltered sampling",
            output.unfiltered_fallbacks
        );
    }
    let last_loss = output.loss_trace.last().map(|(_, l)| *l).unwrap_or(f64::NAN);
    println!(
        "trained {} for {} steps (final batch loss {:.6}); checkpoint at {}",
        variant,
        output.steps_run,
        last_loss,
        final_dir.display()
    );
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ResolvedEval {
    dataset: DatasetPaths,
    checkpoint: PathBuf,
    protocol: String,
    split: String,
    candidates: Option<PathBuf>,
    type_threshold: f64,
    threads: Option<usize>,
    output_dir: PathBuf,
}

pub fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let file = load_file_config(&args.common.config)?;
    let out_dir = resolve_output_dir(&args.common.output_dir, &file, "eval")?;
    let paths = args.dataset.resolve(&file)?;
    let resolved = ResolvedEval {
        dataset: paths.clone(),
        checkpoint: pick_opt(args.checkpoint, &file, "checkpoint")?
            .ok_or_else(|| Error::Config("missing --checkpoint".into()))?,
        protocol: pick(args.protocol, &file, "protocol", "full".into())?,
        split: pick(args.split, &file, "split", "test".into())?,
        candidates: pick_opt(args.candidates, &file, "candidates")?,
        type_threshold: pick(
            args.type_threshold,
            &file,
            "type-threshold",
            DEFAULT_RELATION_TYPE_THRESHOLD,
        )?,
        threads: pick_opt(args.common.threads, &file, "threads")?,
        output_dir: out_dir.clone(),
    };
    init_thread_pool(resolved.threads, false);

    let graph = load_graph(&paths)?;
    let params = load_checked_checkpoint(&resolved.checkpoint, &graph)?;
    let protocol = match resolved.protocol.as_str() {
        "full" => Protocol::Full,
        "partial" => Protocol::Partial,
        other => return Err(Error::Config(format!("unknown protocol {other:?}"))),
    };
    let split = match resolved.split.as_str() {
        "test" => EvalSplit::Test,
        "valid" => EvalSplit::Valid,
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    let candidates: Option<CandidateList> = match &resolved.candidates {
        Some(p) => Some(load_candidates(p, &graph)?),
        None => None,
    };
    let types = categorize_relations(&graph, resolved.type_threshold)?;
    let report = evaluate_with_types(&params, &graph, protocol, candidates.as_ref(), split, &types)?;

    let mut inputs = dataset_inputs(&paths, &graph);
    inputs.insert(
        "checkpoint_manifest".into(),
        file_fingerprint(&resolved.checkpoint.join("manifest.json"))?,
    );
    if let Some(p) = &resolved.candidates {
        inputs.insert("candidates".into(), file_fingerprint(p)?);
    }
    write_manifest(&out_dir, "eval", &resolved, inputs)?;
    let json_path = out_dir.join("report.json");
    std::fs::write(&json_path, report.to_json()?).map_err(|e| Error::io(&json_path, e))?;
    let csv_path = out_dir.join("report.csv");
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;

    println!(
        "{} {} ranking over {} queries",
        split.label(),
        resolved.protocol,
        report.overall.count
    );
    println!(
        "overall: MRR {:.4}  HIT@1 {:.4}  HIT@3 {:.4}  HIT@10 {:.4}",
        report.overall.mrr, report.overall.hits1, report.overall.hits3, report.overall.hits10
    );
    println!(
        "head:    MRR {:.4}  HIT@10 {:.4}    tail: MRR {:.4}  HIT@10 {:.4}",
        report.head.mrr, report.head.hits10, report.tail.mrr, report.tail.hits10
    );
    for cell in &report.per_type {
        if cell.metrics.count > 0 {
            println!(
                "{:>4} {}: MRR {:.4}  HIT@10 {:.4}  ({} queries)",
                cell.relation_type.label(),
                cell.direction.label(),
                cell.metrics.mrr,
                cell.metrics.hits10,
                cell.metrics.count
            );
        }
    }
    println!("report written to {}", json_path.display());
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ResolvedInitSearch {
    dataset: DatasetPaths,
    model: String,
    dim: usize,
    gamma: f64,
    budget_steps: usize,
    full_budget: bool,
    batch_size: usize,
    negatives: usize,
    alpha: f64,
    learning_rate: f64,
    reg_weight: f64,
    epsilon: f64,
    gain: f64,
    seed: u64,
    deterministic: bool,
    threads: Option<usize>,
    output_dir: PathBuf,
}

pub fn cmd_init_search(args: InitSearchArgs) -> Result<i32> {
    let file = load_file_config(&args.common.config)?;
    let out_dir = resolve_output_dir(&args.common.output_dir, &file, "init-search")?;
    let paths = args.dataset.resolve(&file)?;
    let full_budget = pick_flag(args.full_budget, &file, "full-budget", false)?;
    let steps = pick(args.steps, &file, "steps", 100_000)?;
    let resolved = ResolvedInitSearch {
        dataset: paths.clone(),
        model: pick(args.model.model, &file, "model", "transher".into())?,
        dim: pick(args.model.dim, &file, "dim", 200)?,
        gamma: pick(args.model.gamma, &file, "gamma", 6.0)?,
        budget_steps: if full_budget {
            steps
        } else {
            pick(args.budget_steps, &file, "budget-steps", 1000)?
        },
        full_budget,
        batch_size: pick(args.batch_size, &file, "batch-size", 512)?,
        negatives: pick(args.negatives, &file, "negatives", 128)?,
        alpha: pick(args.alpha, &file, "alpha", 1.0)?,
        learning_rate: pick(args.learning_rate, &file, "learning-rate", 1e-4)?,
        reg_weight: pick(args.reg_weight, &file, "reg-weight", 0.0)?,
        epsilon: pick(args.epsilon, &file, "epsilon", DEFAULT_EPSILON as f64)?,
        gain: pick(args.gain, &file, "gain", DEFAULT_GAIN as f64)?,
        seed: pick(args.common.seed, &file, "seed", 0)?,
        deterministic: pick_flag(args.common.deterministic, &file, "deterministic", false)?,
        threads: pick_opt(args.common.threads, &file, "threads")?,
        output_dir: out_dir.clone(),
    };
    init_thread_pool(resolved.threads, resolved.deterministic);

    let graph = load_graph(&paths)?;
    let variant: ModelVariant = resolved.model.parse()?;
    let mut base = InitStrategy::default().with_seed(resolved.seed);
    base.epsilon = resolved.epsilon as Real;
    base.gain = resolved.gain as Real;
    let config = TrainConfig {
        batch_size: resolved.batch_size,
        negatives: resolved.negatives,
        adversarial_temperature: resolved.alpha as Real,
        learning_rate: resolved.learning_rate as Real,
        regularization_weight: resolved.reg_weight as Real,
        seed: resolved.seed,
        deterministic: resolved.deterministic,
        ..TrainConfig::default()
    };
    let mut inputs = dataset_inputs(&paths, &graph);
    if let Some(p) = &file.path {
        inputs.insert("config_file".into(), file_fingerprint(p)?);
    }
    write_manifest(&out_dir, "init-search", &resolved, inputs)?;

    let outcome = init_search(
        &graph,
        variant,
        resolved.dim,
        resolved.gamma as Real,
        &base,
        &config,
        resolved.budget_steps,
    )?;
    println!(
        "initialization search ({} steps per combination):",
        resolved.budget_steps
    );
    println!("{:<28} {:>10} {:>10}", "entity,relation,translation", "valid MRR", "HIT@10");
    for row in &outcome.ranked {
        println!(
            "{:<28} {:>10.4} {:>10.4}",
            row.strategy.tokens(),
            row.valid_mrr,
            row.valid_hit10
        );
    }
    for (strategy, error) in &outcome.failed {
        println!("{:<28} FAILED: {error}", strategy.tokens());
    }
    let json_path = out_dir.join("init_search.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&outcome)?)
        .map_err(|e| Error::io(&json_path, e))?;
    println!("table written to {}", json_path.display());
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ResolvedVerify {
    dim: usize,
    trials: usize,
    tolerance: f64,
    seed: u64,
    output_dir: PathBuf,
}

pub fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let file = load_file_config(&args.common.config)?;
    let out_dir = resolve_output_dir(&args.common.output_dir, &file, "verify")?;
    let resolved = ResolvedVerify {
        dim: pick(args.dim, &file, "dim", 64)?,
        trials: pick(args.trials, &file, "trials", 1000)?,
        tolerance: pick(args.tolerance, &file, "tolerance", 1e-8)?,
        seed: pick(args.common.seed, &file, "seed", 0)?,
        output_dir: out_dir.clone(),
    };
    let mut rng = stream(resolved.seed, "verify");
    let report = verify_suite(resolved.dim, resolved.trials, resolved.tolerance, &mut rng)?;

    println!(
        "pattern verification: k={}, {} trials, tolerance {:e}",
        report.dim, report.trials, report.tolerance
    );
    println!(
        "{:<14} {:>8} {:>8} {:>14} {:>16}",
        "pattern", "passes", "trials", "max premise", "worst conclusion"
    );
    let mut ok = true;
    for p in &report.patterns {
        let acceptable = match p.pattern {
            // Antisymmetry is statistical: generic violations, not a
            // universal claim.
            Pattern::Antisymmetry => p.passes * 100 >= p.trials * 99,
            _ => p.passes == p.trials,
        };
        ok &= acceptable;
        println!(
            "{:<14} {:>8} {:>8} {:>14.3e} {:>16.3e}  {}",
            p.pattern.label(),
            p.passes,
            p.trials,
            p.max_premise_residual,
            p.worst_conclusion,
            if acceptable { "ok" } else { "FAIL" }
        );
    }
    write_manifest(&out_dir, "verify", &resolved, BTreeMap::new())?;
    if pick_flag(args.json, &file, "json", false)? {
        let json_path = out_dir.join("patterns.json");
        std::fs::write(&json_path, report.to_json()?).map_err(|e| Error::io(&json_path, e))?;
        println!("report written to {}", json_path.display());
    }
    Ok(if ok { 0 } else { 3 })
}

#[derive(Debug, Serialize)]
struct ResolvedQuery {
    dataset: DatasetPaths,
    checkpoint: PathBuf,
    entity: String,
    relation: String,
    direction: String,
    k: usize,
    filter_known: bool,
    output_dir: PathBuf,
}

fn resolve_name(name: &str, lookup: impl Fn(&str) -> Option<u32>, len: usize, kind: &str) -> Result<u32> {
    if let Some(id) = lookup(name) {
        return Ok(id);
    }
    if let Ok(id) = name.parse::<u32>() {
        if (id as usize) < len {
            return Ok(id);
        }
    }
    Err(Error::Config(format!("unknown {kind} {name:?}")))
}

pub fn cmd_query(args: QueryArgs) -> Result<i32> {
    let file = load_file_config(&args.common.config)?;
    let out_dir = resolve_output_dir(&args.common.output_dir, &file, "query")?;
    let paths = args.dataset.resolve(&file)?;
    let head = pick_opt(args.head, &file, "head")?;
    let tail = pick_opt(args.tail, &file, "tail")?;
    let (entity_name, direction) = match (&head, &tail) {
        (Some(h), None) => (h.clone(), Direction::Tail),
        (None, Some(t)) => (t.clone(), Direction::Head),
        _ => {
            return Err(Error::Config(
                "provide exactly one of --head (tail prediction) or --tail (head prediction)"
                    .into(),
            ))
        }
    };
    let resolved = ResolvedQuery {
        dataset: paths.clone(),
        checkpoint: pick_opt(args.checkpoint, &file, "checkpoint")?
            .ok_or_else(|| Error::Config("missing --checkpoint".into()))?,
        entity: entity_name.clone(),
        relation: pick_opt(args.relation, &file, "relation")?
            .ok_or_else(|| Error::Config("missing --relation".into()))?,
        direction: direction.label().into(),
        k: pick(args.k, &file, "k", 10)?,
        filter_known: pick_flag(args.filter_known, &file, "filter-known", false)?,
        output_dir: out_dir.clone(),
    };

    let graph = load_graph(&paths)?;
    let params = load_checked_checkpoint(&resolved.checkpoint, &graph)?;
    let entity = resolve_name(
        &entity_name,
        |n| graph.entities.id(n),
        graph.num_entities(),
        "entity",
    )?;
    let relation = resolve_name(
        &resolved.relation,
        |n| graph.relations.id(n),
        graph.num_relations(),
        "relation",
    )?;
    let completions = top_k(
        &params,
        &graph,
        entity,
        relation,
        direction,
        resolved.k,
        resolved.filter_known,
    )?;

    let rel_name = graph.relations.name(relation).unwrap_or("<?>");
    match direction {
        Direction::Tail => println!("query: ({entity_name}, {rel_name}, ?)"),
        Direction::Head => println!("query: (?, {rel_name}, {entity_name})"),
    }
    let probe = match direction {
        Direction::Tail => transher::data::Triple::new(entity, relation, 0),
        Direction::Head => transher::data::Triple::new(0, relation, entity),
    };
    for (rank, (e, score)) in completions.iter().enumerate() {
        let name = graph.entities.name(*e).unwrap_or("<?>");
        let known = graph.is_known(&probe.with_entity(direction, *e));
        println!(
            "{:>4}  {:<50} {:>12.6}{}",
            rank + 1,
            name,
            score,
            if known { "  *known" } else { "" }
        );
    }

    let mut inputs = dataset_inputs(&paths, &graph);
    inputs.insert(
        "checkpoint_manifest".into(),
        file_fingerprint(&resolved.checkpoint.join("manifest.json"))?,
    );
    write_manifest(&out_dir, "query", &resolved, inputs)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ResolvedAnalyze {
    dataset: DatasetPaths,
    checkpoint: PathBuf,
    block_size: Option<usize>,
    bins: usize,
    type_threshold: f64,
    output_dir: PathBuf,
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    let file = load_file_config(&args.common.config)?;
    let out_dir = resolve_output_dir(&args.common.output_dir, &file, "analyze")?;
    let paths = args.dataset.resolve(&file)?;
    let resolved = ResolvedAnalyze {
        dataset: paths.clone(),
        checkpoint: pick_opt(args.checkpoint, &file, "checkpoint")?
            .ok_or_else(|| Error::Config("missing --checkpoint".into()))?,
        block_size: pick_opt(args.block_size, &file, "block-size")?,
        bins: pick(args.bins, &file, "bins", 50)?,
        type_threshold: pick(
            args.type_threshold,
            &file,
            "type-threshold",
            DEFAULT_RELATION_TYPE_THRESHOLD,
        )?,
        output_dir: out_dir.clone(),
    };

    let graph = load_graph(&paths)?;
    let params = load_checked_checkpoint(&resolved.checkpoint, &graph)?;
    let types = categorize_relations(&graph, resolved.type_threshold)?;
    let block_size = resolved
        .block_size
        .unwrap_or_else(|| default_block_size(params.dim()));
    let heatmap = translation_heatmap(&params, &types, block_size)?;
    let histogram = translation_l1_histogram(&params, resolved.bins)?;

    let mut inputs = dataset_inputs(&paths, &graph);
    inputs.insert(
        "checkpoint_manifest".into(),
        file_fingerprint(&resolved.checkpoint.join("manifest.json"))?,
    );
    write_manifest(&out_dir, "analyze", &resolved, inputs)?;
    let heatmap_path = out_dir.join("translation_heatmap.csv");
    std::fs::write(&heatmap_path, heatmap.to_csv()).map_err(|e| Error::io(&heatmap_path, e))?;
    let hist_path = out_dir.join("translation_l1_histogram.csv");
    std::fs::write(&hist_path, histogram.to_csv()).map_err(|e| Error::io(&hist_path, e))?;
    let summary_path = out_dir.join("analysis.json");
    let summary = serde_json::json!({
        "block_size": block_size,
        "heatmap": heatmap,
        "fraction_above_gamma": histogram.fraction_above_gamma,
        "gamma": histogram.gamma,
    });
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .map_err(|e| Error::io(&summary_path, e))?;

    println!(
        "translation L1 norms: {:.1}% of relations above gamma = {}",
        100.0 * histogram.fraction_above_gamma,
        histogram.gamma
    );
    for row in &heatmap.rows {
        if row.relations > 0 {
            let mean: f64 = row.values.iter().sum::<f64>() / row.values.len() as f64;
            println!(
                "{:>4}: {} relations, mean |b| {:.6}",
                row.category.label(),
                row.relations,
                mean
            );
        }
    }
    println!("analysis written to {}", out_dir.display());
    Ok(0)
}
