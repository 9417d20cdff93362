//! Mini-batch training over randomly sampled windows of the training rooms.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::PointBatch;
use crate::error::{Error, Result};
use crate::losses::LabeledBatch;
use crate::model::{LossValues, Mpnet};
use crate::numerics::OptimizerConfig;
use crate::scenes::{blockify, BlockSpec, Sampling, Scene};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub block: BlockSpec,
    /// Windows drawn per room and epoch; `None` uses every window.
    pub blocks_per_scene: Option<usize>,
    pub optim: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            block: BlockSpec::default(),
            blocks_per_scene: None,
            optim: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.blocks_per_scene == Some(0) {
            return Err(Error::Config("blocks_per_scene must be positive".into()));
        }
        if self.block.sampling == Sampling::All {
            return Err(Error::Config("training windows need a fixed sample count".into()));
        }
        self.block.validate()?;
        self.optim.validate()
    }
}

/// Mean loss terms over the optimizer steps of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub blocks: usize,
    pub loss: LossValues,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// The shuffled training windows of one epoch.
pub fn epoch_blocks(model: &Mpnet, scenes: &[Scene], cfg: &TrainConfig, epoch: usize) -> Result<Vec<(PointBatch, LabeledBatch)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, u64::MAX));
    let mut out = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        if scene.num_classes() != model.config().num_classes {
            return Err(Error::usage(format!(
                "training scene {s} has {} classes, the model {}",
                scene.num_classes(),
                model.config().num_classes
            )));
        }
        let mut blocks = blockify(scene, &cfg.block, mix(cfg.seed, epoch as u64, s as u64))?;
        if let Some(k) = cfg.blocks_per_scene {
            if blocks.len() > k {
                blocks = blocks.choose_multiple(&mut rng, k).cloned().collect();
            }
        }
        for b in blocks {
            let labels = LabeledBatch::new(b.semantic(scene), &b.instance(scene), &b.points)?;
            out.push((model.batch(b.points)?, labels));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Runs epoch `epoch` (0-based). On a non-finite loss the error is returned
/// and the model keeps the parameters of the last completed step.
pub fn train_epoch(model: &mut Mpnet, scenes: &[Scene], cfg: &TrainConfig, epoch: usize) -> Result<EpochLog> {
    cfg.validate()?;
    let data = epoch_blocks(model, scenes, cfg, epoch)?;
    if data.is_empty() {
        return Err(Error::usage("no training windows: every room is below min_points"));
    }
    let mut sum = LossValues::default();
    let mut steps = 0;
    for chunk in data.chunks(cfg.batch_size) {
        let v = model.train_step(chunk, &cfg.optim)?;
        log::debug!("epoch {epoch} step {steps} loss {:.6}", v.total);
        sum.classification += v.classification;
        sum.discriminative += v.discriminative;
        sum.total += v.total;
        if let Some(r) = v.semantic_reg {
            *sum.semantic_reg.get_or_insert(0.0) += r;
        }
        if let Some(r) = v.instance_reg {
            *sum.instance_reg.get_or_insert(0.0) += r;
        }
        steps += 1;
    }
    let n = steps as f64;
    let loss = LossValues {
        classification: sum.classification / n,
        discriminative: sum.discriminative / n,
        semantic_reg: sum.semantic_reg.map(|v| v / n),
        instance_reg: sum.instance_reg.map(|v| v / n),
        total: sum.total / n,
    };
    Ok(EpochLog {
        epoch,
        steps,
        blocks: data.len(),
        loss,
    })
}

/// Trains `model` for the configured epochs, calling `on_epoch` after each.
pub fn train<F>(model: &mut Mpnet, scenes: &[Scene], cfg: &TrainConfig, start_epoch: usize, mut on_epoch: F) -> Result<Vec<EpochLog>>
where
    F: FnMut(&Mpnet, &EpochLog) -> Result<()>,
{
    let mut logs = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let log = train_epoch(model, scenes, cfg, epoch)?;
        on_epoch(model, &log)?;
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::memory::MemoryConfig;
    use crate::model::{Ablation, ModelConfig};
    use crate::scenes::{generate_scene, GeneratorConfig};

    fn setup() -> (Mpnet, Vec<Scene>, TrainConfig) {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                hidden_widths: vec![8],
                shared_dim: 8,
                feature_dim: 6,
                ..EncoderConfig::default()
            },
            memory: MemoryConfig {
                per_class_slots: 2,
                temperature: 0.1,
            },
            ablation: Ablation::FULL,
            ..ModelConfig::default()
        };
        let scenes = (0..2)
            .map(|s| {
                let gen = GeneratorConfig {
                    points_per_scene: 1200,
                    seed: s,
                    ..GeneratorConfig::default()
                };
                generate_scene(&gen, None).unwrap().0
            })
            .collect();
        let train = TrainConfig {
            epochs: 2,
            batch_size: 4,
            block: BlockSpec {
                sampling: Sampling::Fixed(64),
                min_points: 20,
                ..BlockSpec::default()
            },
            blocks_per_scene: Some(6),
            ..TrainConfig::default()
        };
        (Mpnet::new(cfg, 2).unwrap(), scenes, train)
    }

    #[test]
    fn epochs_are_reproducible() {
        let (model, scenes, cfg) = setup();
        let mut a = model.clone();
        let mut b = model;
        let la = train(&mut a, &scenes, &cfg, 0, |_, _| Ok(())).unwrap();
        let lb = train(&mut b, &scenes, &cfg, 0, |_, _| Ok(())).unwrap();
        assert_eq!(la, lb);
        assert_eq!(la[0].blocks, 12);
        assert_eq!(la[0].steps, 3);
        assert!(la.iter().all(|l| l.loss.is_finite()));
        let pa: Vec<_> = a.store().iter().map(|p| p.tensor.data().to_vec()).collect();
        let pb: Vec<_> = b.store().iter().map(|p| p.tensor.data().to_vec()).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn resuming_matches_an_uninterrupted_run() {
        let (model, scenes, cfg) = setup();
        let mut whole = model.clone();
        train(&mut whole, &scenes, &cfg, 0, |_, _| Ok(())).unwrap();
        let mut split = model;
        let first = TrainConfig { epochs: 1, ..cfg.clone() };
        train(&mut split, &scenes, &first, 0, |_, _| Ok(())).unwrap();
        train(&mut split, &scenes, &cfg, 1, |_, _| Ok(())).unwrap();
        let a: Vec<_> = whole.store().iter().map(|p| p.tensor.data().to_vec()).collect();
        let b: Vec<_> = split.store().iter().map(|p| p.tensor.data().to_vec()).collect();
        assert_eq!(a, b);
    }
}
