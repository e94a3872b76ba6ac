//! Command-line surface and config-file resolution.
//!
//! Every option can come from a flat `key = value` config file (keys match
//! the long flag names) and be overridden on the command line. Two
//! environment variables take part: `TRANSHER_OUTPUT_DIR` overrides the
//! output directory and `TRANSHER_LOG` sets the log level (quiet, info,
//! debug).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use transher::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "transher",
    about = "Knowledge graph embedding with hyper-ellipsoid-restricted entities and relation-specific translations",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Initialize and train a model, writing checkpoints and traces.
    Train(TrainArgs),
    /// Evaluate a checkpoint: MRR/HIT@N overall, per direction, per type.
    Eval(EvalArgs),
    /// Train all eight initializer combinations and rank them by valid MRR.
    InitSearch(InitSearchArgs),
    /// Verify relation-pattern constraints constructively.
    Verify(VerifyArgs),
    /// Top-k completions for an (entity, relation) query.
    Query(QueryArgs),
    /// Translation heat map and L1-norm histogram from a checkpoint.
    Analyze(AnalyzeArgs),
}

/// Flat `key = value` file; `#` starts a comment.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
    pub path: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig {
            values,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("config key {key} has unparseable value {raw:?}"))
            }),
        }
    }
}

/// CLI value if given, else config-file value, else default.
pub fn pick<T: FromStr>(
    cli: Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
) -> Result<T> {
    match cli {
        Some(v) => Ok(v),
        None => Ok(file.parsed(key)?.unwrap_or(default)),
    }
}

/// CLI value if given, else config-file value, else absent.
pub fn pick_opt<T: FromStr>(cli: Option<T>, file: &FileConfig, key: &str) -> Result<Option<T>> {
    match cli {
        Some(v) => Ok(Some(v)),
        None => file.parsed(key),
    }
}

/// Bool resolution: a bare CLI flag can only switch the value on; the file
/// supplies it otherwise.
pub fn pick_flag(cli: bool, file: &FileConfig, key: &str, default: bool) -> Result<bool> {
    if cli {
        return Ok(true);
    }
    pick(None, file, key, default)
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Directory holding train.txt, valid.txt, test.txt, entities.dict,
    /// relations.dict; individual path flags override its members.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Training triples file (tab-separated names).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation triples file.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Test triples file.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Entity dictionary (`<id>\t<name>` lines).
    #[arg(long)]
    pub entities: Option<PathBuf>,
    /// Relation dictionary.
    #[arg(long)]
    pub relations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports, traces, and manifests
    /// [default: runs/<command>] (env TRANSHER_OUTPUT_DIR overrides).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for evaluation and gradient computation
    /// [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// RNG seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single-worker bit-reproducible mode.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model variant: transher, pairre, or transe [default: transher].
    #[arg(long)]
    pub model: Option<String>,
    /// Embedding dimension k [default: 200].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Margin gamma [default: 6].
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Optimizer steps [default: 100000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Positives per step [default: 512].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Negatives per positive [default: 128].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Self-adversarial temperature alpha [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Adam learning rate [default: 1e-4].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Decay schedule `step:factor[,step:factor...]`, factors applied to
    /// the initial rate [default: none].
    #[arg(long)]
    pub lr_decay: Option<String>,
    /// Translation regularization weight lambda [default: 0].
    #[arg(long)]
    pub reg_weight: Option<f64>,
    /// Regularization order p [default: 3].
    #[arg(long)]
    pub reg_order: Option<u32>,
    /// Disable filtering of sampled negatives against known triples.
    #[arg(long)]
    pub unfiltered_negatives: bool,
    /// Initializer triple `entity,relation,translation`
    /// (uniform|normal each) [default: uniform,uniform,uniform].
    #[arg(long)]
    pub init: Option<String>,
    /// Gamma-uniform epsilon [default: 2].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Xavier-normal gain [default: 1].
    #[arg(long)]
    pub gain: Option<f64>,
    /// Margin used inside the uniform initializer bound, when it should
    /// differ from the model margin [default: --gamma].
    #[arg(long)]
    pub init_gamma: Option<f64>,
    /// Record the loss every this many steps [default: 100].
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Write an intermediate checkpoint every this many steps
    /// [default: off].
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Directory for intermediate checkpoints
    /// [default: <output-dir>/checkpoints].
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Print filtered valid MRR every this many steps [default: off].
    #[arg(long)]
    pub valid_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint directory to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Ranking protocol: full or partial [default: full].
    #[arg(long)]
    pub protocol: Option<String>,
    /// Candidate-list file (required for the partial protocol).
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Split to evaluate: test or valid [default: test].
    #[arg(long)]
    pub split: Option<String>,
    /// hpt/tph threshold for relation categories [default: 1.5].
    #[arg(long)]
    pub type_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InitSearchArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Steps per combination [default: 1000; reduced budget by design].
    #[arg(long)]
    pub budget_steps: Option<usize>,
    /// Search with the full --steps budget instead of the reduced one.
    #[arg(long)]
    pub full_budget: bool,
    /// Full training budget used with --full-budget [default: 100000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Positives per step [default: 512].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Negatives per positive [default: 128].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Self-adversarial temperature alpha [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Adam learning rate [default: 1e-4].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Translation regularization weight lambda [default: 0].
    #[arg(long)]
    pub reg_weight: Option<f64>,
    /// Gamma-uniform epsilon [default: 2].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Xavier-normal gain [default: 1].
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Vector dimension for the constructions [default: 64].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Trials per pattern [default: 1000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Residual tolerance [default: 1e-8].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Also write the report as JSON into the output directory.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Fixed head entity name (or numeric id) for tail prediction.
    #[arg(long)]
    pub head: Option<String>,
    /// Fixed tail entity name (or numeric id) for head prediction.
    #[arg(long)]
    pub tail: Option<String>,
    /// Relation name or numeric id.
    #[arg(long)]
    pub relation: Option<String>,
    /// Completions to print [default: 10].
    #[arg(long)]
    pub k: Option<usize>,
    /// Drop candidates that complete a known triple.
    #[arg(long)]
    pub filter_known: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Heat-map pooling block size [default: 60 at k=1500, 20 at k=500,
    /// else k/25].
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Histogram bin count [default: 50].
    #[arg(long)]
    pub bins: Option<usize>,
    /// hpt/tph threshold for relation categories [default: 1.5].
    #[arg(long)]
    pub type_threshold: Option<f64>,
}

/// Resolved dataset paths after merging --data-dir, individual flags, and
/// the config file.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub entities: PathBuf,
    pub relations: PathBuf,
}

impl DatasetArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<DatasetPaths> {
        let data_dir = pick_opt(self.data_dir.clone(), file, "data-dir")?;
        let part = |flag: &Option<PathBuf>, key: &str, default_name: &str| -> Result<PathBuf> {
            if let Some(p) = flag {
                return Ok(p.clone());
            }
            if let Some(p) = file.parsed::<PathBuf>(key)? {
                return Ok(p);
            }
            match &data_dir {
                Some(d) => Ok(d.join(default_name)),
                None => Err(Error::Config(format!(
                    "missing dataset path: provide --{key} or --data-dir"
                ))),
            }
        };
        Ok(DatasetPaths {
            train: part(&self.train, "train", "train.txt")?,
            valid: part(&self.valid, "valid", "valid.txt")?,
            test: part(&self.test, "test", "test.txt")?,
            entities: part(&self.entities, "entities", "entities.dict")?,
            relations: part(&self.relations, "relations", "relations.dict")?,
        })
    }
}

/// Parse `step:factor[,step:factor...]`.
pub fn parse_lr_decay(spec: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (step, factor) = part.split_once(':').ok_or_else(|| {
            Error::Config(format!("bad lr-decay entry {part:?}, expected step:factor"))
        })?;
        let step: usize = step
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad lr-decay step {step:?}")))?;
        let factor: f64 = factor
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad lr-decay factor {factor:?}")))?;
        out.push((step, factor));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_and_cli_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "dim = 64\n# comment\ngamma = 9.0  # inline\n").unwrap();
        let file = FileConfig::load(&path).unwrap();
        assert_eq!(pick(None, &file, "dim", 200usize).unwrap(), 64);
        assert_eq!(pick(Some(32usize), &file, "dim", 200).unwrap(), 32);
        assert_eq!(pick(None, &file, "steps", 10usize).unwrap(), 10);
        assert_eq!(pick(None, &file, "gamma", 6.0f64).unwrap(), 9.0);
    }

    #[test]
    fn malformed_config_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "dim 64\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
        std::fs::write(&path, "dim = sixty-four\n").unwrap();
        let file = FileConfig::load(&path).unwrap();
        assert!(pick(None, &file, "dim", 200usize).is_err());
    }

    #[test]
    fn lr_decay_spec() {
        assert_eq!(
            parse_lr_decay("50000:0.1,80000:0.5").unwrap(),
            vec![(50000, 0.1), (80000, 0.5)]
        );
        assert!(parse_lr_decay("50000").is_err());
        assert!(parse_lr_decay("a:b").is_err());
    }

    #[test]
    fn data_dir_fills_missing_paths() {
        let args = DatasetArgs {
            data_dir: Some(PathBuf::from("/data/fb")),
            train: None,
            valid: Some(PathBuf::from("/elsewhere/v.txt")),
            test: None,
            entities: None,
            relations: None,
        };
        let paths = args.resolve(&FileConfig::default()).unwrap();
        assert_eq!(paths.train, PathBuf::from("/data/fb/train.txt"));
        assert_eq!(paths.valid, PathBuf::from("/elsewhere/v.txt"));
        assert_eq!(paths.entities, PathBuf::from("/data/fb/entities.dict"));
    }

    #[test]
    fn missing_paths_are_usage_errors() {
        let args = DatasetArgs {
            data_dir: None,
            train: None,
            valid: None,
            test: None,
            entities: None,
            relations: None,
        };
        assert!(matches!(
            args.resolve(&FileConfig::default()),
            Err(Error::Config(_))
        ));
    }
}
