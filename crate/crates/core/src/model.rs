//! The full two-branch network with its ablation switches, one optimisation
//! step over a mini-batch of blocks, and per-block inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{Decoder, Dense, Encoder, EncoderConfig, PointBatch};
use crate::error::{Error, Result};
use crate::losses::{
    class_probabilities, discriminative_loss, focal_loss, instance_regularizer, semantic_regularizer,
    total_objective, CentroidHead, LabeledBatch, LossConfig, LossTerms,
};
use crate::memory::{read_instance, read_semantic, MemoryConfig, PrototypeMemory};
use crate::numerics::{adam_step_all, Graph, OptimizerConfig, ParamStore, Tensor, Var};

/// Which optional parts of the model and objective are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ablation {
    /// Focal loss in place of cross-entropy.
    pub focal: bool,
    /// Instance features are replaced by reads from the prototype memory.
    pub ins_mem: bool,
    /// Semantic features are replaced by reads from the class summary.
    pub seg_mem: bool,
    /// Memory regularisers.
    pub regul: bool,
}

impl Ablation {
    pub const BASELINE: Self = Self { focal: false, ins_mem: false, seg_mem: false, regul: false };
    pub const FOCAL: Self = Self { focal: true, ..Self::BASELINE };
    pub const INS_MEM: Self = Self { ins_mem: true, ..Self::BASELINE };
    pub const MEMORY: Self = Self { ins_mem: true, seg_mem: true, ..Self::BASELINE };
    pub const FULL: Self = Self { ins_mem: true, seg_mem: true, regul: true, ..Self::BASELINE };

    /// The five configurations of the ablation table, in row order.
    pub const TABLE: [(&'static str, Self); 5] = [
        ("baseline", Self::BASELINE),
        ("fl", Self::FOCAL),
        ("insmem", Self::INS_MEM),
        ("insmem_segmem", Self::MEMORY),
        ("full", Self::FULL),
    ];

    pub fn by_name(name: &str) -> Option<Self> {
        Self::TABLE.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
    }

    pub fn has_memory(&self) -> bool {
        self.ins_mem || self.seg_mem
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub encoder: EncoderConfig,
    pub memory: MemoryConfig,
    pub loss: LossConfig,
    /// Hidden width of the centroid head.
    pub centroid_hidden: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_classes: 6,
            encoder: EncoderConfig::default(),
            memory: MemoryConfig::default(),
            loss: LossConfig::default(),
            centroid_hidden: 16,
            ablation: Ablation::FULL,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.centroid_hidden == 0 {
            return Err(Error::Config("centroid head width must be positive".into()));
        }
        self.encoder.validate()?;
        self.memory.validate()?;
        self.loss.validate()
    }

    /// Focusing parameter actually used by the classification loss.
    pub fn gamma(&self) -> f64 {
        if self.ablation.focal {
            self.loss.focal_gamma
        } else {
            0.0
        }
    }

    /// Whether class scores pass through the squash before the softmax.
    pub fn squash(&self) -> bool {
        self.loss.use_squash && (!self.ablation.focal || self.loss.focal_on_squash)
    }
}

/// Graph handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub f_seg: Var,
    pub f_ins: Var,
    pub f_seg_hat: Var,
    pub f_ins_hat: Var,
    pub summary: Option<Var>,
    pub w_ins: Option<Var>,
    pub alpha_seg: Option<Var>,
    pub probs: Var,
    pub embedding: Var,
}

/// Scalar values of the objective terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub classification: f64,
    pub discriminative: f64,
    pub semantic_reg: Option<f64>,
    pub instance_reg: Option<f64>,
    pub total: f64,
}

impl LossValues {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.classification.is_finite()
            && self.discriminative.is_finite()
            && self.semantic_reg.is_none_or(f64::is_finite)
            && self.instance_reg.is_none_or(f64::is_finite)
    }
}

/// Per-block inference outputs, rows aligned with the block's points.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOutput {
    pub probs: Tensor,
    pub embeddings: Tensor,
    pub w_ins: Option<Tensor>,
    pub alpha_seg: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Mpnet {
    cfg: ModelConfig,
    store: ParamStore,
    encoder: Encoder,
    dec_seg: Decoder,
    dec_ins: Decoder,
    memory: Option<PrototypeMemory>,
    fc: Dense,
    embed: Dense,
    centroid: Option<CentroidHead>,
}

impl Mpnet {
    /// Builds and initialises all parameters from `seed`. The prototype
    /// memory exists only when a memory reader is enabled, and the centroid
    /// head only when the regularisers are.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.encoder.feature_dim;
        let encoder = Encoder::new(&mut store, &cfg.encoder, &mut rng);
        let dec_seg = Decoder::new(&mut store, "dec_seg", &cfg.encoder, &mut rng);
        let dec_ins = Decoder::new(&mut store, "dec_ins", &cfg.encoder, &mut rng);
        let fc = Dense::new(&mut store, "fc", d, cfg.num_classes, &mut rng);
        let embed = Dense::new(&mut store, "embed", d, cfg.loss.embed_dim, &mut rng);
        let memory = cfg
            .ablation
            .has_memory()
            .then(|| PrototypeMemory::new(&mut store, &cfg.memory, cfg.num_classes, d, &mut rng));
        let centroid = cfg
            .ablation
            .regul
            .then(|| CentroidHead::new(&mut store, d, cfg.centroid_hidden, &mut rng));
        Ok(Self {
            cfg,
            store,
            encoder,
            dec_seg,
            dec_ins,
            memory,
            fc,
            embed,
            centroid,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn memory(&self) -> Option<&PrototypeMemory> {
        self.memory.as_ref()
    }

    pub fn batch(&self, points: Tensor) -> Result<PointBatch> {
        PointBatch::new(points, self.cfg.encoder.grid_cell)
    }

    pub fn forward(&self, g: &mut Graph, batch: &PointBatch) -> Result<Forward> {
        self.forward_with(&self.store, g, batch)
    }

    /// Forward pass reading parameters from `s`, which must share this
    /// model's layout.
    pub fn forward_with(&self, s: &ParamStore, g: &mut Graph, batch: &PointBatch) -> Result<Forward> {
        let shared = self.encoder.encode(g, s, batch)?;
        let f_seg = self.dec_seg.decode(g, s, shared)?;
        let f_ins = self.dec_ins.decode(g, s, shared)?;
        let tau = self.cfg.memory.temperature;
        let (mut summary, mut w_ins, mut alpha_seg) = (None, None, None);
        let (mut f_seg_hat, mut f_ins_hat) = (f_seg, f_ins);
        if let Some(mem) = &self.memory {
            let m = mem.bind(g, s);
            let c = mem.semantic_summary(g, m)?;
            summary = Some(c);
            if self.cfg.ablation.ins_mem {
                let (w, r) = read_instance(g, f_ins, m, tau)?;
                w_ins = Some(w);
                f_ins_hat = r;
            }
            if self.cfg.ablation.seg_mem {
                let (a, r) = read_semantic(g, f_seg, c, tau)?;
                alpha_seg = Some(a);
                f_seg_hat = r;
            }
        }
        let probs = class_probabilities(g, s, f_seg_hat, &self.fc, self.cfg.squash())?;
        let embedding = self.embed.forward(g, s, f_ins_hat)?;
        Ok(Forward {
            f_seg,
            f_ins,
            f_seg_hat,
            f_ins_hat,
            summary,
            w_ins,
            alpha_seg,
            probs,
            embedding,
        })
    }

    /// Builds the objective for one labelled block.
    pub fn objective(
        &self,
        s: &ParamStore,
        g: &mut Graph,
        fwd: &Forward,
        labels: &LabeledBatch,
    ) -> Result<(Var, LossTerms)> {
        let lc = &self.cfg.loss;
        let classification = focal_loss(g, fwd.probs, labels.semantic(), self.cfg.gamma())?;
        let discriminative = discriminative_loss(
            g,
            fwd.embedding,
            labels.instance(),
            labels.num_instances(),
            lc.sigma_v,
            lc.sigma_d,
        )?;
        let semantic_reg = match (self.cfg.ablation.regul, fwd.summary) {
            (true, Some(c)) => Some(semantic_regularizer(g, fwd.f_seg_hat, c, labels.semantic(), lc.margin)?),
            _ => None,
        };
        let instance_reg = match &self.centroid {
            Some(head) => Some(instance_regularizer(g, s, fwd.f_ins_hat, head, labels)?),
            None => None,
        };
        let terms = LossTerms {
            classification,
            discriminative,
            semantic_reg,
            instance_reg,
        };
        let total = total_objective(g, &terms, lc.lambda_ins)?;
        Ok((total, terms))
    }

    /// Forward pass and objective on one block, leaving the graph ready for
    /// `backward`.
    pub fn loss(&self, g: &mut Graph, batch: &PointBatch, labels: &LabeledBatch) -> Result<(Var, LossValues)> {
        self.loss_with(&self.store, g, batch, labels)
    }

    pub fn loss_with(
        &self,
        s: &ParamStore,
        g: &mut Graph,
        batch: &PointBatch,
        labels: &LabeledBatch,
    ) -> Result<(Var, LossValues)> {
        if batch.len() != labels.len() {
            return Err(Error::usage(format!("{} points vs {} labels", batch.len(), labels.len())));
        }
        let fwd = self.forward_with(s, g, batch)?;
        let (total, terms) = self.objective(s, g, &fwd, labels)?;
        let values = LossValues {
            classification: g.value(terms.classification).item(),
            discriminative: g.value(terms.discriminative).item(),
            semantic_reg: terms.semantic_reg.map(|v| g.value(v).item()),
            instance_reg: terms.instance_reg.map(|v| g.value(v).item()),
            total: g.value(total).item(),
        };
        Ok((total, values))
    }

    /// Averages gradients over the mini-batch and takes one Adam step.
    /// Returns the mean loss values. A non-finite loss aborts before any
    /// parameter changes.
    pub fn train_step(&mut self, blocks: &[(PointBatch, LabeledBatch)], opt: &OptimizerConfig) -> Result<LossValues> {
        if blocks.is_empty() {
            return Err(Error::usage("train_step: empty mini-batch"));
        }
        self.store.clear_grads();
        let scale = 1.0 / blocks.len() as f64;
        let mut mean = LossValues::default();
        for (batch, labels) in blocks {
            let mut g = Graph::new();
            let (total, v) = self.loss(&mut g, batch, labels)?;
            if !v.is_finite() {
                self.store.clear_grads();
                return Err(Error::NonFinite(format!("training loss {v:?}")));
            }
            g.backward(total)?;
            g.accumulate_into(&mut self.store, scale);
            mean.classification += v.classification * scale;
            mean.discriminative += v.discriminative * scale;
            mean.total += v.total * scale;
            if let Some(r) = v.semantic_reg {
                *mean.semantic_reg.get_or_insert(0.0) += r * scale;
            }
            if let Some(r) = v.instance_reg {
                *mean.instance_reg.get_or_insert(0.0) += r * scale;
            }
        }
        adam_step_all(&mut self.store, opt)?;
        Ok(mean)
    }

    pub fn infer(&self, batch: &PointBatch) -> Result<BlockOutput> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, batch)?;
        Ok(BlockOutput {
            probs: g.value(fwd.probs).clone(),
            embeddings: g.value(fwd.embedding).clone(),
            w_ins: fwd.w_ins.map(|w| g.value(w).clone()),
            alpha_seg: fwd.alpha_seg.map(|a| g.value(a).clone()),
        })
    }
}
