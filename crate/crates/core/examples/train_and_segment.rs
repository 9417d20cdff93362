//! Trains the full model on a handful of small rooms, then segments a held
//! out room and scores it.

use mpnet::evaluation::{evaluate, non_dominant_classes};
use mpnet::grouping::MeanShiftConfig;
use mpnet::model::{ModelConfig, Mpnet};
use mpnet::pipeline::{segment_scene, InferenceConfig};
use mpnet::scenes::{generate_scene, BlockSpec, GeneratorConfig, Sampling};
use mpnet::training::{train, TrainConfig};

fn main() -> mpnet::Result<()> {
    env_logger::init();
    let room = |seed| {
        let cfg = GeneratorConfig {
            seed,
            points_per_scene: 3000,
            ..GeneratorConfig::default()
        };
        generate_scene(&cfg, None).map(|(s, _)| s)
    };
    let train_rooms = (0..6).map(room).collect::<mpnet::Result<Vec<_>>>()?;
    let test_room = room(100)?;

    let block = BlockSpec {
        sampling: Sampling::Fixed(256),
        ..BlockSpec::default()
    };
    let cfg = TrainConfig {
        epochs: 8,
        block: block.clone(),
        blocks_per_scene: Some(6),
        ..TrainConfig::default()
    };
    let mut model = Mpnet::new(ModelConfig::default(), 0)?;
    train(&mut model, &train_rooms, &cfg, 0, |_, log| {
        println!("epoch {:>2}: loss {:.4} over {} windows", log.epoch + 1, log.loss.total, log.blocks);
        Ok(())
    })?;

    let inference = InferenceConfig {
        block,
        shift: MeanShiftConfig {
            seed_limit: 256,
            ..MeanShiftConfig::default()
        },
        ..InferenceConfig::default()
    };
    let seg = segment_scene(&model, &test_room, &inference)?;
    println!("test room: {} points, {} predicted instances", seg.semantic.len(), seg.instances.num_instances());

    let nd = non_dominant_classes(&train_rooms, model.config().num_classes);
    let report = evaluate(&model, &[test_room], &[false], &nd, &inference)?;
    report.to_lines("").iter().for_each(|l| println!("{l}"));
    Ok(())
}
