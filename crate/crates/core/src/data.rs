//! Dataset loading, validation, and indexing.
//!
//! Datasets follow the usual dictionary + triple-file convention: dictionary
//! files are `<id>\t<name>` lines with dense ids, split files are
//! `<head>\t<relation>\t<tail>` lines of names. Everything is UTF-8,
//! tab-separated, LF-terminated.
//!
//! After loading, a [`KnowledgeGraph`] is read-only and safe to share across
//! evaluation workers.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// Default hpt/tph threshold separating "1" from "N" sides of a relation
/// category, per the usual convention.
pub const DEFAULT_RELATION_TYPE_THRESHOLD: f64 = 1.5;

/// A single integer-indexed fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    /// The entity on the given side.
    pub fn entity(&self, side: Direction) -> EntityId {
        match side {
            Direction::Head => self.head,
            Direction::Tail => self.tail,
        }
    }

    /// Copy with the entity on `side` replaced.
    pub fn with_entity(&self, side: Direction, entity: EntityId) -> Triple {
        match side {
            Direction::Head => Triple::new(entity, self.relation, self.tail),
            Direction::Tail => Triple::new(self.head, self.relation, entity),
        }
    }
}

/// Which side of a triple a query predicts or a corruption replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Predicting/corrupting the head: `(?, r, t)`.
    Head,
    /// Predicting/corrupting the tail: `(h, r, ?)`.
    Tail,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Head, Direction::Tail];

    pub fn label(&self) -> &'static str {
        match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bijective name <-> dense-id mapping.
#[derive(Debug, Clone)]
pub struct Dictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Dictionary {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if index.insert(name.clone(), id as u32).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate dictionary name {name:?}"
                )));
            }
        }
        Ok(Dictionary { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Bookkeeping emitted by the loader: duplicate counts per split and
/// non-fatal warnings (e.g. relations unseen in train).
#[derive(Debug, Clone, Default)]
pub struct LoadNotes {
    pub duplicates_train: usize,
    pub duplicates_valid: usize,
    pub duplicates_test: usize,
    pub warnings: Vec<String>,
}

/// Entity/relation dictionaries, the three splits, and the filter index over
/// their union. Read-only after construction.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub entities: Dictionary,
    pub relations: Dictionary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    filter: HashSet<Triple>,
    pub notes: LoadNotes,
}

impl KnowledgeGraph {
    /// Assemble a graph from already-resolved parts. Used for toy graphs in
    /// tests and by the round-trip path.
    pub fn from_parts(
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let entities = Dictionary::from_names(entity_names)?;
        let relations = Dictionary::from_names(relation_names)?;
        let (num_e, num_r) = (entities.len() as u32, relations.len() as u32);
        for (split, triples) in [("train", &train), ("valid", &valid), ("test", &test)] {
            for t in triples {
                if t.head >= num_e || t.tail >= num_e {
                    return Err(Error::Validation(format!(
                        "{split} triple ({},{},{}) has entity id out of range 0..{num_e}",
                        t.head, t.relation, t.tail
                    )));
                }
                if t.relation >= num_r {
                    return Err(Error::Validation(format!(
                        "{split} triple ({},{},{}) has relation id out of range 0..{num_r}",
                        t.head, t.relation, t.tail
                    )));
                }
            }
        }
        let mut graph = KnowledgeGraph {
            entities,
            relations,
            train,
            valid,
            test,
            filter: HashSet::new(),
            notes: LoadNotes::default(),
        };
        graph.rebuild_filter();
        graph.collect_warnings();
        Ok(graph)
    }

    fn rebuild_filter(&mut self) {
        let cap = self.train.len() + self.valid.len() + self.test.len();
        let mut filter = HashSet::with_capacity(cap);
        for t in self.train.iter().chain(&self.valid).chain(&self.test) {
            filter.insert(*t);
        }
        self.filter = filter;
    }

    fn collect_warnings(&mut self) {
        let train_relations: HashSet<RelationId> =
            self.train.iter().map(|t| t.relation).collect();
        let mut missing: Vec<RelationId> = self
            .valid
            .iter()
            .chain(&self.test)
            .map(|t| t.relation)
            .filter(|r| !train_relations.contains(r))
            .collect();
        missing.sort_unstable();
        missing.dedup();
        for r in missing {
            let name = self.relations.name(r).unwrap_or("<?>");
            self.notes.warnings.push(format!(
                "relation {r} ({name}) appears in valid/test but never in train"
            ));
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Membership in the union of train/valid/test.
    pub fn is_known(&self, triple: &Triple) -> bool {
        self.filter.contains(triple)
    }

    pub fn filter_len(&self) -> usize {
        self.filter.len()
    }

    /// Content fingerprint over dictionaries and splits, used to tie
    /// checkpoints to the dataset they were trained on.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv64::new();
        h.update(&(self.num_entities() as u64).to_le_bytes());
        h.update(&(self.num_relations() as u64).to_le_bytes());
        for name in self.entities.names().iter().chain(self.relations.names()) {
            h.update(name.as_bytes());
            h.update(&[0]);
        }
        for split in [&self.train, &self.valid, &self.test] {
            h.update(&(split.len() as u64).to_le_bytes());
            for t in split.iter() {
                h.update(&t.head.to_le_bytes());
                h.update(&t.relation.to_le_bytes());
                h.update(&t.tail.to_le_bytes());
            }
        }
        h.hex()
    }

    /// Write the graph back out as dictionary + split files, the same format
    /// [`load_dataset`] reads.
    pub fn write_dataset(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_dict(&dir.join("entities.dict"), &self.entities)?;
        write_dict(&dir.join("relations.dict"), &self.relations)?;
        for (name, split) in [
            ("train.txt", &self.train),
            ("valid.txt", &self.valid),
            ("test.txt", &self.test),
        ] {
            let path = dir.join(name);
            let mut out = std::io::BufWriter::new(
                File::create(&path).map_err(|e| Error::io(&path, e))?,
            );
            for t in split.iter() {
                let h = self.entities.name(t.head).unwrap();
                let r = self.relations.name(t.relation).unwrap();
                let tl = self.entities.name(t.tail).unwrap();
                writeln!(out, "{h}\t{r}\t{tl}").map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

fn write_dict(path: &Path, dict: &Dictionary) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (id, name) in dict.names().iter().enumerate() {
        writeln!(out, "{id}\t{name}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Incremental 64-bit FNV-1a, used for dataset and file fingerprints.
#[derive(Debug, Clone)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Fingerprint of raw file contents.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h = Fnv64::new();
    h.update(&bytes);
    Ok(h.hex())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn load_dict(path: &Path) -> Result<Dictionary> {
    let lines = read_lines(path)?;
    let mut entries: Vec<(u32, String)> = Vec::with_capacity(lines.len());
    for (lineno, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let id_str = parts.next().unwrap_or("");
        let name = parts.next().ok_or_else(|| Error::Load {
            file: path.to_path_buf(),
            line: lineno + 1,
            message: "expected `<id>\\t<name>`".into(),
        })?;
        let id: u32 = id_str.parse().map_err(|_| Error::Load {
            file: path.to_path_buf(),
            line: lineno + 1,
            message: format!("bad id {id_str:?}"),
        })?;
        entries.push((id, name.to_string()));
    }
    let n = entries.len();
    let mut names: Vec<Option<String>> = vec![None; n];
    for (id, name) in entries {
        let slot = names.get_mut(id as usize).ok_or_else(|| {
            Error::Validation(format!(
                "{}: id {id} not dense (dictionary has {n} entries)",
                path.display()
            ))
        })?;
        if slot.is_some() {
            return Err(Error::Validation(format!(
                "{}: duplicate id {id}",
                path.display()
            )));
        }
        *slot = Some(name);
    }
    // Every slot filled follows from length == n and no duplicates.
    let names: Vec<String> = names.into_iter().map(Option::unwrap).collect();
    Dictionary::from_names(names).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn load_split(
    path: &Path,
    entities: &Dictionary,
    relations: &Dictionary,
) -> Result<(Vec<Triple>, usize)> {
    let lines = read_lines(path)?;
    let mut triples = Vec::with_capacity(lines.len());
    let mut seen = HashSet::with_capacity(lines.len());
    let mut duplicates = 0usize;
    for (lineno, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (h, r, t) = match (parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(r), Some(t)) => (h, r, t),
            _ => {
                return Err(Error::Load {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    message: "expected `<head>\\t<relation>\\t<tail>`".into(),
                })
            }
        };
        let head = entities.id(h).ok_or_else(|| Error::Load {
            file: path.to_path_buf(),
            line: lineno + 1,
            message: format!("unknown entity {h:?}"),
        })?;
        let relation = relations.id(r).ok_or_else(|| Error::Load {
            file: path.to_path_buf(),
            line: lineno + 1,
            message: format!("unknown relation {r:?}"),
        })?;
        let tail = entities.id(t).ok_or_else(|| Error::Load {
            file: path.to_path_buf(),
            line: lineno + 1,
            message: format!("unknown entity {t:?}"),
        })?;
        let triple = Triple::new(head, relation, tail);
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            duplicates += 1;
        }
    }
    Ok((triples, duplicates))
}

/// Load and index a dataset from dictionary and split files.
///
/// Duplicate triples within a split are dropped (first occurrence kept) and
/// counted in [`LoadNotes`]. Unknown names are hard errors: silently skipping
/// them would corrupt filtered evaluation downstream.
pub fn load_dataset(
    train_path: &Path,
    valid_path: &Path,
    test_path: &Path,
    entity_dict_path: &Path,
    relation_dict_path: &Path,
) -> Result<KnowledgeGraph> {
    let entities = load_dict(entity_dict_path)?;
    let relations = load_dict(relation_dict_path)?;
    let (train, duplicates_train) = load_split(train_path, &entities, &relations)?;
    let (valid, duplicates_valid) = load_split(valid_path, &entities, &relations)?;
    let (test, duplicates_test) = load_split(test_path, &entities, &relations)?;
    let mut graph = KnowledgeGraph {
        entities,
        relations,
        train,
        valid,
        test,
        filter: HashSet::new(),
        notes: LoadNotes {
            duplicates_train,
            duplicates_valid,
            duplicates_test,
            warnings: Vec::new(),
        },
    };
    graph.rebuild_filter();
    graph.collect_warnings();
    Ok(graph)
}

/// Relation category determined by hpt/tph statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationCategory {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-N")]
    OneToMany,
    #[serde(rename = "N-1")]
    ManyToOne,
    #[serde(rename = "N-N")]
    ManyToMany,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::OneToOne,
        RelationCategory::OneToMany,
        RelationCategory::ManyToOne,
        RelationCategory::ManyToMany,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-1",
            RelationCategory::OneToMany => "1-N",
            RelationCategory::ManyToOne => "N-1",
            RelationCategory::ManyToMany => "N-N",
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-relation hpt/tph statistics and category.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RelationTypeEntry {
    /// Mean heads per distinct tail; `NaN` for relations with no triples.
    pub hpt: f64,
    /// Mean tails per distinct head; `NaN` for relations with no triples.
    pub tph: f64,
    /// `None` for relations with zero triples (category undefined).
    pub category: Option<RelationCategory>,
}

#[derive(Debug, Clone)]
pub struct RelationTypeTable {
    pub threshold: f64,
    entries: Vec<RelationTypeEntry>,
}

impl RelationTypeTable {
    pub fn entry(&self, relation: RelationId) -> &RelationTypeEntry {
        &self.entries[relation as usize]
    }

    pub fn category(&self, relation: RelationId) -> Option<RelationCategory> {
        self.entries[relation as usize].category
    }

    pub fn entries(&self) -> &[RelationTypeEntry] {
        &self.entries
    }

    /// Relations with no triples anywhere, whose category is undefined.
    pub fn undefined_relations(&self) -> Vec<RelationId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category.is_none())
            .map(|(r, _)| r as RelationId)
            .collect()
    }
}

/// Compute hpt/tph per relation over all three splits pooled, then bucket
/// into the four categories at `threshold`.
pub fn categorize_relations(graph: &KnowledgeGraph, threshold: f64) -> Result<RelationTypeTable> {
    if !(threshold > 1.0) {
        return Err(Error::Config(format!(
            "relation-type threshold must be > 1, got {threshold}"
        )));
    }
    let num_r = graph.num_relations();
    let mut counts = vec![0usize; num_r];
    let mut heads: Vec<HashSet<EntityId>> = vec![HashSet::new(); num_r];
    let mut tails: Vec<HashSet<EntityId>> = vec![HashSet::new(); num_r];
    for t in graph.train.iter().chain(&graph.valid).chain(&graph.test) {
        let r = t.relation as usize;
        counts[r] += 1;
        heads[r].insert(t.head);
        tails[r].insert(t.tail);
    }
    let entries = (0..num_r)
        .map(|r| {
            if counts[r] == 0 {
                return RelationTypeEntry {
                    hpt: f64::NAN,
                    tph: f64::NAN,
                    category: None,
                };
            }
            let hpt = counts[r] as f64 / tails[r].len() as f64;
            let tph = counts[r] as f64 / heads[r].len() as f64;
            let category = match (hpt < threshold, tph < threshold) {
                (true, true) => RelationCategory::OneToOne,
                (true, false) => RelationCategory::OneToMany,
                (false, true) => RelationCategory::ManyToOne,
                (false, false) => RelationCategory::ManyToMany,
            };
            RelationTypeEntry {
                hpt,
                tph,
                category: Some(category),
            }
        })
        .collect();
    Ok(RelationTypeTable { threshold, entries })
}

/// Fixed negative pools for partial ranking, keyed by test-triple index and
/// prediction direction.
#[derive(Debug, Clone, Default)]
pub struct CandidateList {
    records: HashMap<(usize, Direction), Vec<EntityId>>,
}

impl CandidateList {
    pub fn get(&self, test_index: usize, direction: Direction) -> Option<&[EntityId]> {
        self.records
            .get(&(test_index, direction))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, test_index: usize, direction: Direction, candidates: Vec<EntityId>) {
        self.records.insert((test_index, direction), candidates);
    }
}

/// Parse a candidate file: one `<test-index>\t<H|T>\t<id,id,...>` record per
/// line. Candidates must be in range and must not contain the true answer
/// entity for their direction.
pub fn load_candidates(path: &Path, graph: &KnowledgeGraph) -> Result<CandidateList> {
    let lines = read_lines(path)?;
    let num_e = graph.num_entities() as u32;
    let mut list = CandidateList::default();
    let mut violations: Vec<String> = Vec::new();
    for (lineno, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (idx_str, dir_str, ids_str) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::Load {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    message: "expected `<test-index>\\t<H|T>\\t<ids>`".into(),
                })
            }
        };
        let test_index: usize = idx_str.parse().map_err(|_| Error::Load {
            file: path.to_path_buf(),
            line: lineno + 1,
            message: format!("bad test index {idx_str:?}"),
        })?;
        if test_index >= graph.test.len() {
            violations.push(format!(
                "line {}: test index {test_index} out of range (|test| = {})",
                lineno + 1,
                graph.test.len()
            ));
            continue;
        }
        let direction = match dir_str {
            "H" => Direction::Head,
            "T" => Direction::Tail,
            other => {
                return Err(Error::Load {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("bad direction {other:?}, expected H or T"),
                })
            }
        };
        let truth = graph.test[test_index].entity(direction);
        let mut candidates = Vec::new();
        if !ids_str.is_empty() {
            for id_str in ids_str.split(',') {
                let id: u32 = id_str.parse().map_err(|_| Error::Load {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("bad entity id {id_str:?}"),
                })?;
                if id >= num_e {
                    violations.push(format!(
                        "line {}: test index {test_index}: entity id {id} out of range 0..{num_e}",
                        lineno + 1
                    ));
                } else if id == truth {
                    violations.push(format!(
                        "line {}: test index {test_index}: candidate {id} equals the true {} entity",
                        lineno + 1,
                        direction.label()
                    ));
                }
                candidates.push(id);
            }
        }
        if list.get(test_index, direction).is_some() {
            violations.push(format!(
                "line {}: duplicate record for test index {test_index} direction {}",
                lineno + 1,
                direction.label()
            ));
        }
        list.insert(test_index, direction, candidates);
    }
    if !violations.is_empty() {
        let shown = violations.iter().take(10).cloned().collect::<Vec<_>>();
        let suffix = if violations.len() > 10 {
            format!(" (+{} more)", violations.len() - 10)
        } else {
            String::new()
        };
        return Err(Error::Validation(format!(
            "{}: {} invalid candidate record(s): {}{}",
            path.display(),
            violations.len(),
            shown.join("; "),
            suffix
        )));
    }
    Ok(list)
}
