//! Scene-level inference: run the network on every window of a room, cluster
//! each window's embeddings, and stitch the windows back together.

use crate::error::{Error, Result};
use crate::grouping::{
    assign_class, block_merge, mean_shift, snake_order, BlockPrediction, InstancePrediction, MeanShiftConfig,
    MergeGrid,
};
use crate::model::{BlockOutput, Mpnet};
use crate::scenes::{blockify, Block, BlockSpec, Sampling, Scene};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferenceConfig {
    /// Window geometry. Sampling is forced to every point and full coverage.
    pub block: BlockSpec,
    pub shift: MeanShiftConfig,
    pub merge: MergeGrid,
}

fn full_cover(block: &BlockSpec) -> BlockSpec {
    BlockSpec {
        sampling: Sampling::All,
        cover_all: true,
        ..block.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSegmentation {
    /// Per point: argmax of the class probabilities summed over windows.
    pub semantic: Vec<usize>,
    pub instances: InstancePrediction,
}

fn check_scene(model: &Mpnet, scene: &Scene, spec: &BlockSpec) -> Result<()> {
    let cfg = model.config();
    if scene.num_classes() != cfg.num_classes {
        return Err(Error::usage(format!(
            "scene has {} classes but the model predicts {}",
            scene.num_classes(),
            cfg.num_classes
        )));
    }
    if spec.input_dim() != cfg.encoder.input_dim {
        return Err(Error::usage(format!(
            "windows carry {} input columns but the encoder expects {}",
            spec.input_dim(),
            cfg.encoder.input_dim
        )));
    }
    Ok(())
}

fn run_windows(model: &Mpnet, scene: &Scene, spec: &BlockSpec) -> Result<Vec<(Block, BlockOutput)>> {
    check_scene(model, scene, spec)?;
    blockify(scene, spec, 0)?
        .into_iter()
        .map(|b| {
            let out = model.infer(&model.batch(b.points.clone())?)?;
            Ok((b, out))
        })
        .collect()
}

pub fn segment_scene(model: &Mpnet, scene: &Scene, cfg: &InferenceConfig) -> Result<SceneSegmentation> {
    let windows = run_windows(model, scene, &full_cover(&cfg.block))?;
    let nc = model.config().num_classes;
    let mut votes = vec![0.0; scene.len() * nc];
    let mut preds = Vec::with_capacity(windows.len());
    for (block, out) in &windows {
        for (r, &i) in block.indices.iter().enumerate() {
            for (v, p) in votes[i * nc..(i + 1) * nc].iter_mut().zip(out.probs.row(r)) {
                *v += p;
            }
        }
        let classes = out.probs.argmax_rows();
        let clusters = mean_shift(&out.embeddings, &cfg.shift)?;
        preds.push(BlockPrediction {
            grid: block.grid,
            indices: block.indices.clone(),
            prediction: assign_class(&clusters, &classes, nc)?,
        });
    }
    let points: Vec<[f64; 3]> = (0..scene.len()).map(|i| scene.xyz(i)).collect();
    let instances = block_merge(&preds, &points, &cfg.merge)?;
    let semantic = votes
        .chunks(nc)
        .map(|v| v.iter().enumerate().fold(0, |best, (c, x)| if *x > v[best] { c } else { best }))
        .collect();
    Ok(SceneSegmentation { semantic, instances })
}

/// Instance-reader weight of memory slot `slot` for every scene point.
pub fn inspect_addressing(model: &Mpnet, scene: &Scene, block: &BlockSpec, slot: usize) -> Result<Vec<f64>> {
    let slots = model.memory().map_or(0, |m| m.num_slots());
    if slot >= slots {
        return Err(Error::usage(format!("slot {slot} outside 0..{slots}")));
    }
    Ok(addressing_rows(model, scene, block)?.into_iter().map(|r| r[slot]).collect())
}

/// The full instance-reader weight vector of every scene point. A point
/// covered by several windows takes the first one in snake order.
pub fn addressing_rows(model: &Mpnet, scene: &Scene, block: &BlockSpec) -> Result<Vec<Vec<f64>>> {
    if model.memory().is_none() || !model.config().ablation.ins_mem {
        return Err(Error::usage("this model does not read instance features from memory"));
    }
    let windows = run_windows(model, scene, &full_cover(block))?;
    let grids: Vec<_> = windows.iter().map(|(b, _)| b.grid).collect();
    let mut out: Vec<Option<Vec<f64>>> = vec![None; scene.len()];
    for k in snake_order(&grids) {
        let (block, res) = &windows[k];
        let w = res.w_ins.as_ref().expect("instance reader is enabled");
        for (r, &i) in block.indices.iter().enumerate() {
            out[i].get_or_insert_with(|| w.row(r).to_vec());
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every point is covered")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::memory::MemoryConfig;
    use crate::model::{Ablation, ModelConfig};
    use crate::scenes::{generate_scene, GeneratorConfig};

    fn tiny() -> (Mpnet, Scene) {
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
        let gen = GeneratorConfig {
            points_per_scene: 1500,
            seed: 4,
            ..GeneratorConfig::default()
        };
        (Mpnet::new(cfg, 1).unwrap(), generate_scene(&gen, None).unwrap().0)
    }

    fn inference() -> InferenceConfig {
        InferenceConfig {
            shift: MeanShiftConfig {
                seed_limit: 64,
                ..MeanShiftConfig::default()
            },
            ..InferenceConfig::default()
        }
    }

    #[test]
    fn every_point_gets_a_class_and_an_instance() {
        let (model, scene) = tiny();
        let seg = segment_scene(&model, &scene, &inference()).unwrap();
        assert_eq!(seg.semantic.len(), scene.len());
        assert_eq!(seg.instances.len(), scene.len());
        seg.instances.validate(6).unwrap();
        assert_eq!(seg, segment_scene(&model, &scene, &inference()).unwrap());
    }

    #[test]
    fn addressing_export_is_a_weight_column() {
        let (model, scene) = tiny();
        let spec = BlockSpec::default();
        let rows = addressing_rows(&model, &scene, &spec).unwrap();
        for r in &rows {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let col = inspect_addressing(&model, &scene, &spec, 3).unwrap();
        assert!(col.iter().zip(&rows).all(|(c, r)| *c == r[3] && (0.0..=1.0).contains(c)));
        assert!(inspect_addressing(&model, &scene, &spec, 12).is_err());
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let (model, scene) = tiny();
        let mut cfg = model.config().clone();
        cfg.num_classes = 5;
        let other = Mpnet::new(cfg, 0).unwrap();
        assert!(matches!(segment_scene(&other, &scene, &inference()), Err(Error::Usage(_))));
    }
}
