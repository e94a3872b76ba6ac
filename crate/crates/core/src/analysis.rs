//! Post-hoc model inspection: translation heat-map statistics, translation
//! L1-norm histograms, and gradient-trace export. Everything here is
//! read-only over the parameters and emits plain data (CSV/JSON); plotting
//! belongs to external tools.

use std::path::Path;

use serde::Serialize;

use crate::data::{RelationCategory, RelationTypeTable};
use crate::error::{Error, Result};
use crate::matrix::l1_norm;
use crate::model::ModelParameters;
use crate::train::EpochGradientStats;

/// Pooling block width used for the heat map at dimension `k`: the
/// conventional sizes at 1500 and 500 dims, k/25 (rounded up) otherwise.
pub fn default_block_size(k: usize) -> usize {
    match k {
        1500 => 60,
        500 => 20,
        _ => k.div_ceil(25).max(1),
    }
}

/// Mean-pooled per-category average absolute translation values. Rows
/// follow [`RelationCategory::ALL`]; a category with no relations keeps an
/// all-zero row and a zero count.
#[derive(Debug, Clone, Serialize)]
pub struct HeatmapTable {
    pub block_size: usize,
    pub rows: Vec<HeatmapRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapRow {
    pub category: RelationCategory,
    /// Number of relations pooled into this row.
    pub relations: usize,
    /// One value per dimension block; the final partial block averages over
    /// its actual width.
    pub values: Vec<f64>,
}

impl HeatmapTable {
    /// `category,block,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("relation_type,block,value\n");
        for row in &self.rows {
            for (i, v) in row.values.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", row.category.label(), i, v));
            }
        }
        out
    }
}

/// Group translation rows by relation category, average |b| per dimension
/// within each category, then mean-pool dimension blocks of `block_size`.
pub fn translation_heatmap(
    params: &ModelParameters,
    types: &RelationTypeTable,
    block_size: usize,
) -> Result<HeatmapTable> {
    let translation = params.translation().ok_or(Error::UnsupportedVariant {
        variant: params.variant().label(),
        operation: "translation_heatmap",
    })?;
    if block_size == 0 {
        return Err(Error::Config("pooling block size must be >= 1".into()));
    }
    let k = params.dim();
    let blocks = k.div_ceil(block_size);
    let mut rows = Vec::with_capacity(4);
    for category in RelationCategory::ALL {
        let mut per_dim = vec![0.0f64; k];
        let mut relations = 0usize;
        for r in 0..params.num_relations() {
            if types.category(r as u32) != Some(category) {
                continue;
            }
            relations += 1;
            for (d, &b) in translation.row(r).iter().enumerate() {
                per_dim[d] += (b as f64).abs();
            }
        }
        let values = if relations == 0 {
            vec![0.0; blocks]
        } else {
            for v in &mut per_dim {
                *v /= relations as f64;
            }
            per_dim
                .chunks(block_size)
                .map(|chunk| chunk.iter().sum::<f64>() / chunk.len() as f64)
                .collect()
        };
        rows.push(HeatmapRow {
            category,
            relations,
            values,
        });
    }
    Ok(HeatmapTable { block_size, rows })
}

/// Histogram of per-relation translation L1 norms over equal-width bins
/// spanning `[0, max]`, plus the fraction of relations whose norm exceeds
/// the margin.
#[derive(Debug, Clone, Serialize)]
pub struct TranslationHistogram {
    /// `bins + 1` edges; the last bin is closed on both sides.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub fraction_above_gamma: f64,
    pub gamma: f64,
}

impl TranslationHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

pub fn translation_l1_histogram(
    params: &ModelParameters,
    bins: usize,
) -> Result<TranslationHistogram> {
    let translation = params.translation().ok_or(Error::UnsupportedVariant {
        variant: params.variant().label(),
        operation: "translation_l1_histogram",
    })?;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let norms: Vec<f64> = (0..params.num_relations())
        .map(|r| l1_norm(translation.row(r)) as f64)
        .collect();
    let max = norms.iter().copied().fold(0.0f64, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &n in &norms {
        let idx = ((n / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let gamma = params.gamma() as f64;
    let above = norms.iter().filter(|&&n| n > gamma).count();
    let fraction_above_gamma = if norms.is_empty() {
        0.0
    } else {
        above as f64 / norms.len() as f64
    };
    Ok(TranslationHistogram {
        edges,
        counts,
        fraction_above_gamma,
        gamma,
    })
}

/// Serialize per-epoch gradient statistics as
/// `epoch,entity_grad_std,relation_grad_std,translation_grad_std` (last
/// column empty for variants without translations).
pub fn gradient_trace_csv(stats: &[EpochGradientStats]) -> String {
    let mut out = String::from("epoch,entity_grad_std,relation_grad_std,translation_grad_std\n");
    for s in stats {
        let b = s
            .translation_grad_std
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.epoch, s.entity_grad_std, s.relation_grad_std, b
        ));
    }
    out
}

/// Write the gradient trace CSV to `path`.
pub fn gradient_trace_export(stats: &[EpochGradientStats], path: &Path) -> Result<()> {
    std::fs::write(path, gradient_trace_csv(stats)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{categorize_relations, KnowledgeGraph, Triple};
    use crate::model::ModelVariant;
    use crate::Real;

    fn one_relation_types() -> (KnowledgeGraph, RelationTypeTable) {
        let g = KnowledgeGraph::from_parts(
            vec!["a".into(), "b".into()],
            vec!["r".into()],
            vec![Triple::new(0, 0, 1)],
            vec![],
            vec![],
        )
        .unwrap();
        let t = categorize_relations(&g, 1.5).unwrap();
        (g, t)
    }

    #[test]
    fn heatmap_hand_case() {
        // k = 4, block 2, one 1-1 relation with b = (1, -1, 2, -2):
        // per-dim |b| = (1, 1, 2, 2) -> pooled (1, 2).
        let (_, types) = one_relation_types();
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 2, 1, 4, 1.0).unwrap();
        p.translation_mut()
            .unwrap()
            .row_mut(0)
            .copy_from_slice(&[1.0, -1.0, 2.0, -2.0]);
        let table = translation_heatmap(&p, &types, 2).unwrap();
        let row = table
            .rows
            .iter()
            .find(|r| r.category == RelationCategory::OneToOne)
            .unwrap();
        assert_eq!(row.relations, 1);
        assert_eq!(row.values, vec![1.0, 2.0]);
        for other in &table.rows {
            if other.category != RelationCategory::OneToOne {
                assert_eq!(other.relations, 0);
                assert!(other.values.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn heatmap_partial_block_averages_actual_width() {
        // k = 5, block 2 -> blocks of width 2, 2, 1.
        let (_, types) = one_relation_types();
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 2, 1, 5, 1.0).unwrap();
        p.translation_mut()
            .unwrap()
            .row_mut(0)
            .copy_from_slice(&[1.0, 1.0, 2.0, 2.0, 5.0]);
        let table = translation_heatmap(&p, &types, 2).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.values, vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn heatmap_zero_translations_all_zero() {
        let (_, types) = one_relation_types();
        let p = ModelParameters::new(ModelVariant::TranSHER, 2, 1, 4, 1.0).unwrap();
        let table = translation_heatmap(&p, &types, 2).unwrap();
        for row in &table.rows {
            assert!(row.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn heatmap_rejects_variants_without_translations() {
        let (_, types) = one_relation_types();
        let p = ModelParameters::new(ModelVariant::PairRE, 2, 1, 4, 1.0).unwrap();
        assert!(matches!(
            translation_heatmap(&p, &types, 2),
            Err(Error::UnsupportedVariant { .. })
        ));
    }

    #[test]
    fn heatmap_is_permutation_invariant_within_category() {
        // Two relations of the same category: swapping their rows must not
        // change the table.
        let g = KnowledgeGraph::from_parts(
            vec!["a".into(), "b".into()],
            vec!["r".into(), "s".into()],
            vec![Triple::new(0, 0, 1), Triple::new(0, 1, 1)],
            vec![],
            vec![],
        )
        .unwrap();
        let types = categorize_relations(&g, 1.5).unwrap();
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 2, 2, 4, 1.0).unwrap();
        p.translation_mut()
            .unwrap()
            .row_mut(0)
            .copy_from_slice(&[1.0, 0.0, 3.0, 0.0]);
        p.translation_mut()
            .unwrap()
            .row_mut(1)
            .copy_from_slice(&[0.0, 2.0, 0.0, 4.0]);
        let a = translation_heatmap(&p, &types, 2).unwrap();
        let b0: Vec<Real> = p.translation().unwrap().row(0).to_vec();
        let b1: Vec<Real> = p.translation().unwrap().row(1).to_vec();
        p.translation_mut().unwrap().row_mut(0).copy_from_slice(&b1);
        p.translation_mut().unwrap().row_mut(1).copy_from_slice(&b0);
        let b = translation_heatmap(&p, &types, 2).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.values, rb.values);
        }
    }

    #[test]
    fn histogram_hand_case() {
        // Single relation, b = (3, -4), gamma = 6: L1 = 7 > 6, fraction 1.
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 2, 1, 2, 6.0).unwrap();
        p.translation_mut()
            .unwrap()
            .row_mut(0)
            .copy_from_slice(&[3.0, -4.0]);
        let h = translation_l1_histogram(&p, 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 1);
        assert_eq!(h.fraction_above_gamma, 1.0);
        assert_eq!(*h.edges.last().unwrap(), 7.0);
        // the single norm lands in the last bin
        assert_eq!(h.counts[3], 1);
    }

    #[test]
    fn histogram_zero_translations() {
        let p = ModelParameters::new(ModelVariant::TranSHER, 2, 3, 2, 6.0).unwrap();
        let h = translation_l1_histogram(&p, 5).unwrap();
        assert_eq!(h.counts[0], 3);
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(h.fraction_above_gamma, 0.0);
    }

    #[test]
    fn histogram_counts_sum_to_relation_count() {
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 2, 7, 3, 2.0).unwrap();
        for r in 0..7 {
            let row = p.translation_mut().unwrap().row_mut(r);
            for (d, v) in row.iter_mut().enumerate() {
                *v = (r as Real + 1.0) * 0.3 - d as Real * 0.1;
            }
        }
        let h = translation_l1_histogram(&p, 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
    }

    #[test]
    fn gradient_trace_shapes() {
        assert_eq!(
            gradient_trace_csv(&[]),
            "epoch,entity_grad_std,relation_grad_std,translation_grad_std\n"
        );
        let stats = vec![
            EpochGradientStats {
                epoch: 0,
                entity_grad_std: 0.5,
                relation_grad_std: 0.25,
                translation_grad_std: Some(0.125),
            },
            EpochGradientStats {
                epoch: 1,
                entity_grad_std: 0.4,
                relation_grad_std: 0.2,
                translation_grad_std: None,
            },
        ];
        let csv = gradient_trace_csv(&stats);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0.5,0.25,0.125");
        assert_eq!(lines[2], "1,0.4,0.2,");
    }

    #[test]
    fn analysis_leaves_parameters_untouched() {
        let (_, types) = one_relation_types();
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 2, 1, 4, 1.0).unwrap();
        p.translation_mut()
            .unwrap()
            .row_mut(0)
            .copy_from_slice(&[0.5, -0.5, 0.25, 0.0]);
        let before = p.clone();
        let _ = translation_heatmap(&p, &types, 2).unwrap();
        let _ = translation_l1_histogram(&p, 3).unwrap();
        assert_eq!(p.entities(), before.entities());
        assert_eq!(p.translation(), before.translation());
    }
}
