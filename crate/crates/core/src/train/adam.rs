//! Adam with lazy sparse row updates.
//!
//! Moment estimates live in matrices shaped like the parameters, but only
//! rows present in a step's sparse gradient advance; untouched rows keep
//! their moments as-is. Bias correction uses the global step count.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ModelParameters, SparseUpdate};
use crate::Real;

pub const BETA1: Real = 0.9;
pub const BETA2: Real = 0.999;
pub const EPSILON: Real = 1e-8;

#[derive(Debug, Clone)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

impl Moments {
    fn zeros(rows: usize, cols: usize) -> Self {
        Moments {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseAdam {
    beta1: Real,
    beta2: Real,
    epsilon: Real,
    step: usize,
    entities: Moments,
    rel_head: Moments,
    rel_tail: Option<Moments>,
    translation: Option<Moments>,
}

impl SparseAdam {
    pub fn new(params: &ModelParameters) -> Self {
        let (ne, nr, k) = (params.num_entities(), params.num_relations(), params.dim());
        SparseAdam {
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            step: 0,
            entities: Moments::zeros(ne, k),
            rel_head: Moments::zeros(nr, k),
            rel_tail: params.rel_tail().map(|_| Moments::zeros(nr, k)),
            translation: params.translation().map(|_| Moments::zeros(nr, k)),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Advance one optimizer step, updating only the rows in `update`.
    pub fn apply(&mut self, params: &mut ModelParameters, update: &SparseUpdate, lr: Real) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);

        let apply_rows = |rows: &std::collections::BTreeMap<u32, Vec<Real>>,
                              target: &mut Matrix,
                              moments: &mut Moments| {
            for (&id, grad) in rows {
                let m_row = moments.m.row_mut(id as usize);
                for (m, g) in m_row.iter_mut().zip(grad) {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                }
                let v_row = moments.v.row_mut(id as usize);
                for (v, g) in v_row.iter_mut().zip(grad) {
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                }
                let theta = target.row_mut(id as usize);
                let m_row = moments.m.row(id as usize);
                let v_row = moments.v.row(id as usize);
                for d in 0..theta.len() {
                    let m_hat = m_row[d] / bc1;
                    let v_hat = v_row[d] / bc2;
                    theta[d] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        };

        apply_rows(&update.entities, params.entities_mut(), &mut self.entities);
        apply_rows(&update.rel_head, params.rel_head_mut(), &mut self.rel_head);
        if let (Some(rt), Some(mo)) = (params.rel_tail_mut(), self.rel_tail.as_mut()) {
            apply_rows(&update.rel_tail, rt, mo);
        }
        if let (Some(b), Some(mo)) = (params.translation_mut(), self.translation.as_mut()) {
            apply_rows(&update.translation, b, mo);
        }
    }

    /// Persist moments and step count next to a model checkpoint.
    pub fn save_state(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = OptimizerMeta {
            beta1: self.beta1 as f64,
            beta2: self.beta2 as f64,
            epsilon: self.epsilon as f64,
            step: self.step,
        };
        let path = dir.join("optimizer.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?)
            .map_err(|e| Error::io(&path, e))?;
        for (name, moments) in self.named_moments() {
            crate::model::checkpoint_write_matrix(&dir.join(format!("m_{name}.f64le")), &moments.m)?;
            crate::model::checkpoint_write_matrix(&dir.join(format!("v_{name}.f64le")), &moments.v)?;
        }
        Ok(())
    }

    /// Restore moments saved by [`save_state`](Self::save_state); shapes come
    /// from `params`.
    pub fn load_state(dir: &Path, params: &ModelParameters) -> Result<Self> {
        let path = dir.join("optimizer.json");
        let json = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: OptimizerMeta = serde_json::from_str(&json)?;
        let mut adam = SparseAdam::new(params);
        adam.beta1 = meta.beta1 as Real;
        adam.beta2 = meta.beta2 as Real;
        adam.epsilon = meta.epsilon as Real;
        adam.step = meta.step;
        let (ne, nr, k) = (params.num_entities(), params.num_relations(), params.dim());
        let read = |name: &str, rows: usize| -> Result<Moments> {
            Ok(Moments {
                m: crate::model::checkpoint_read_matrix(
                    &dir.join(format!("m_{name}.f64le")),
                    rows,
                    k,
                )?,
                v: crate::model::checkpoint_read_matrix(
                    &dir.join(format!("v_{name}.f64le")),
                    rows,
                    k,
                )?,
            })
        };
        adam.entities = read("entities", ne)?;
        adam.rel_head = read("rel_head", nr)?;
        if params.rel_tail().is_some() {
            adam.rel_tail = Some(read("rel_tail", nr)?);
        }
        if params.translation().is_some() {
            adam.translation = Some(read("translation", nr)?);
        }
        Ok(adam)
    }

    fn named_moments(&self) -> Vec<(&'static str, &Moments)> {
        let mut out = vec![("entities", &self.entities), ("rel_head", &self.rel_head)];
        if let Some(rt) = &self.rel_tail {
            out.push(("rel_tail", rt));
        }
        if let Some(b) = &self.translation {
            out.push(("translation", b));
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelVariant;
    use std::collections::BTreeMap;

    fn tiny_params() -> ModelParameters {
        let mut p = ModelParameters::new(ModelVariant::TranSHER, 3, 2, 2, 1.0).unwrap();
        for v in p.entities_mut().data_mut() {
            *v = 0.5;
        }
        p
    }

    #[test]
    fn first_step_moves_against_gradient_by_lr() {
        // With zero moments, one Adam step moves by ~lr * sign(g).
        let mut p = tiny_params();
        let mut adam = SparseAdam::new(&p);
        let mut update = SparseUpdate::default();
        update
            .entities
            .insert(1, vec![0.3, -0.2]);
        let before = p.entities().row(1).to_vec();
        adam.apply(&mut p, &update, 0.01);
        let after = p.entities().row(1);
        assert!((after[0] - (before[0] - 0.01)).abs() < 1e-6);
        assert!((after[1] - (before[1] + 0.01)).abs() < 1e-6);
        // untouched rows unchanged
        assert_eq!(p.entities().row(0), &[0.5, 0.5]);
        assert_eq!(p.entities().row(2), &[0.5, 0.5]);
    }

    #[test]
    fn untouched_moments_stay_lazy() {
        let mut p = tiny_params();
        let mut adam = SparseAdam::new(&p);
        let mut u1 = SparseUpdate::default();
        u1.entities.insert(0, vec![1.0, 1.0]);
        adam.apply(&mut p, &u1, 0.1);
        assert_eq!(adam.entities.m.row(1), &[0.0, 0.0]);
        assert_eq!(adam.entities.v.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn state_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = tiny_params();
        let mut adam = SparseAdam::new(&p);
        let mut update = SparseUpdate::default();
        update.entities.insert(0, vec![0.1, 0.2]);
        update.rel_head.insert(1, vec![-0.1, 0.4]);
        update.translation.insert(1, vec![0.05, -0.05]);
        let mut rt = BTreeMap::new();
        rt.insert(0u32, vec![0.3, 0.3]);
        update.rel_tail = rt;
        adam.apply(&mut p, &update, 0.01);
        adam.save_state(dir.path()).unwrap();
        let restored = SparseAdam::load_state(dir.path(), &p).unwrap();
        assert_eq!(restored.step, adam.step);
        assert_eq!(restored.entities.m, adam.entities.m);
        assert_eq!(restored.entities.v, adam.entities.v);
        assert_eq!(
            restored.translation.as_ref().unwrap().m,
            adam.translation.as_ref().unwrap().m
        );
    }
}
