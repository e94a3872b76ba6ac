//! Checkpoint serialization.
//!
//! A checkpoint directory holds `manifest.json` plus one raw matrix file per
//! parameter matrix. Matrices are stored as little-endian IEEE-754 64-bit
//! floats in row-major order regardless of the build's in-memory scalar, so
//! checkpoints interoperate across builds and implementations in other
//! languages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Real;

use super::{ModelParameters, ModelVariant};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub variant: ModelVariant,
    pub dim: usize,
    pub gamma: f64,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Always "f64": the on-disk scalar width.
    pub scalar: String,
    /// Always "little-endian".
    pub byte_order: String,
    /// Always "row-major".
    pub layout: String,
    /// Fingerprint of the dataset the model was built against.
    pub dataset_fingerprint: String,
    /// Matrix name -> file name within the checkpoint directory.
    pub matrices: BTreeMap<String, String>,
}

pub(crate) fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for &v in m.data() {
        out.write_all(&(v as f64).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 8;
    let mut bytes = Vec::with_capacity(expected);
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{}: expected {expected} bytes for {rows}x{cols} f64 matrix, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real)
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

/// Write `params` into `dir`, creating it if needed.
pub fn save_checkpoint(
    params: &ModelParameters,
    dir: &Path,
    dataset_fingerprint: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut matrices = BTreeMap::new();
    for name in params.matrix_names() {
        let file = format!("{name}.f64le");
        write_matrix(&dir.join(&file), params.matrix(name).unwrap())?;
        matrices.insert(name.to_string(), file);
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        variant: params.variant(),
        dim: params.dim(),
        gamma: params.gamma() as f64,
        num_entities: params.num_entities(),
        num_relations: params.num_relations(),
        scalar: "f64".into(),
        byte_order: "little-endian".into(),
        layout: "row-major".into(),
        dataset_fingerprint: dataset_fingerprint.to_string(),
        matrices,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Read a checkpoint directory back into parameters.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelParameters, CheckpointManifest)> {
    let path = dir.join(MANIFEST_FILE);
    let json = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&json)?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }
    let read = |name: &str, rows: usize| -> Result<Matrix> {
        let file = manifest.matrices.get(name).ok_or_else(|| {
            Error::Checkpoint(format!("manifest missing matrix entry {name:?}"))
        })?;
        read_matrix(&dir.join(file), rows, manifest.dim)
    };
    let entities = read("entities", manifest.num_entities)?;
    let rel_head = read("rel_head", manifest.num_relations)?;
    let rel_tail = if manifest.variant.has_rel_tail() {
        Some(read("rel_tail", manifest.num_relations)?)
    } else {
        None
    };
    let translation = if manifest.variant.has_translation() {
        Some(read("translation", manifest.num_relations)?)
    } else {
        None
    };
    let params = ModelParameters::from_matrices(
        manifest.variant,
        manifest.gamma as Real,
        entities,
        rel_head,
        rel_tail,
        translation,
    )?;
    Ok((params, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let entities = Matrix::from_vec(2, 3, vec![0.25, -1.5, 3.0, 0.1, 0.2, -0.3]);
        let p = ModelParameters::from_matrices(
            ModelVariant::TranSHER,
            6.0,
            entities,
            Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]),
            Some(Matrix::from_vec(1, 3, vec![-1.0, -2.0, -3.0])),
            Some(Matrix::from_vec(1, 3, vec![0.5, 0.0, -0.5])),
        )
        .unwrap();
        save_checkpoint(&p, dir.path(), "deadbeef").unwrap();
        let (q, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest.dataset_fingerprint, "deadbeef");
        assert_eq!(q.variant(), p.variant());
        assert_eq!(q.gamma(), p.gamma());
        assert_eq!(q.entities(), p.entities());
        assert_eq!(q.rel_head(), p.rel_head());
        assert_eq!(q.rel_tail(), p.rel_tail());
        assert_eq!(q.translation(), p.translation());
    }

    #[test]
    fn truncated_matrix_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParameters::new(ModelVariant::TransE, 2, 1, 4, 1.0).unwrap();
        save_checkpoint(&p, dir.path(), "fp").unwrap();
        let file = dir.path().join("entities.f64le");
        let bytes = std::fs::read(&file).unwrap();
        std::fs::write(&file, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Checkpoint(_))
        ));
    }
}
