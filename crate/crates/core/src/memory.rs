//! Prototype memory `M`, its per-class summary `C`, and the two soft-attention
//! readers.
//!
//! `M` has `N = N_c × C` rows. Row block `k` (rows `k·N_c .. (k+1)·N_c`) is
//! associated with class `k`, and `C` holds the mean of each block. The
//! instance reader addresses `M` directly; the semantic reader addresses `C`.
//! Both return convex combinations of the rows they address, so gradients
//! reach `M` through either route.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryConfig {
    /// Prototype slots per class (`N_c`).
    pub per_class_slots: usize,
    /// Softmax temperature applied to cosine similarities.
    pub temperature: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            per_class_slots: 8,
            temperature: 0.1,
        }
    }
}

impl MemoryConfig {
    /// The per-class slot count used at full scale.
    pub fn full_scale() -> Self {
        Self {
            per_class_slots: 150,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_class_slots == 0 {
            return Err(Error::Config("memory per_class_slots must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("memory temperature must be positive".into()));
        }
        Ok(())
    }
}

/// The learnable N×D prototype matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeMemory {
    param: ParamId,
    per_class_slots: usize,
    num_classes: usize,
    dim: usize,
}

impl PrototypeMemory {
    /// Rows are drawn uniformly from [-0.1, 0.1] and scaled to unit length.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: &MemoryConfig,
        num_classes: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let n = cfg.per_class_slots * num_classes;
        let mut m = Tensor::zeros(n, dim);
        for i in 0..n {
            let row = m.row_mut(i);
            loop {
                row.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    row.iter_mut().for_each(|v| *v /= norm);
                    break;
                }
            }
        }
        let param = store.add("memory.m", m);
        Self {
            param,
            per_class_slots: cfg.per_class_slots,
            num_classes,
            dim,
        }
    }

    /// Wraps an existing N×D parameter.
    pub fn from_param(store: &ParamStore, param: ParamId, per_class_slots: usize, num_classes: usize) -> Result<Self> {
        let (n, dim) = store.get(param).tensor.shape();
        if per_class_slots == 0 || n != per_class_slots * num_classes {
            return Err(Error::usage(format!(
                "memory has {n} rows, expected {per_class_slots} × {num_classes}"
            )));
        }
        Ok(Self {
            param,
            per_class_slots,
            num_classes,
            dim,
        })
    }

    pub fn param(&self) -> ParamId {
        self.param
    }

    pub fn num_slots(&self) -> usize {
        self.per_class_slots * self.num_classes
    }

    pub fn per_class_slots(&self) -> usize {
        self.per_class_slots
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Class owning each slot.
    pub fn slot_classes(&self) -> Vec<usize> {
        (0..self.num_slots()).map(|j| j / self.per_class_slots).collect()
    }

    pub fn class_of_slot(&self, slot: usize) -> usize {
        slot / self.per_class_slots
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Var {
        g.param(store, self.param)
    }

    /// `C`: row `k` is the mean of memory rows `k·N_c .. (k+1)·N_c`.
    pub fn semantic_summary(&self, g: &mut Graph, m: Var) -> Result<Var> {
        g.segment_mean(m, &self.slot_classes(), self.num_classes)
    }
}

/// Soft-attention read: weights are `softmax_j(cos(q_i, k_j) / τ)` and the
/// retrieved row is `Σ_j w_ij k_j`. Returns `(weights, retrieved)`.
pub fn read(g: &mut Graph, queries: Var, keys: Var, temperature: f64) -> Result<(Var, Var)> {
    let sim = g.cosine_rows(queries, keys)?;
    let logits = g.scale(sim, 1.0 / temperature);
    let w = g.row_softmax(logits);
    let retrieved = g.matmul(w, keys)?;
    Ok((w, retrieved))
}

/// Instance reader over the prototype rows of `M`.
pub fn read_instance(g: &mut Graph, f_ins: Var, memory: Var, temperature: f64) -> Result<(Var, Var)> {
    read(g, f_ins, memory, temperature)
}

/// Semantic reader over the class summary `C`.
pub fn read_semantic(g: &mut Graph, f_seg: Var, summary: Var, temperature: f64) -> Result<(Var, Var)> {
    read(g, f_seg, summary, temperature)
}

/// Fraction of points whose most-addressed slot belongs to their own class
/// block. Ties go to the lowest slot.
pub fn top_slot_class_agreement(weights: &Tensor, labels: &[usize], per_class_slots: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let top = weights.argmax_rows();
    let hits = top
        .iter()
        .zip(labels)
        .filter(|(slot, y)| **slot / per_class_slots == **y)
        .count();
    hits as f64 / labels.len() as f64
}
