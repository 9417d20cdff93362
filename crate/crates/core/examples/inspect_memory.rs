//! Trains a small model briefly, then exports how strongly each point of a
//! room addresses one memory slot, as a grayscale PLY.

use mpnet::cli::write_weight_ply;
use mpnet::model::{ModelConfig, Mpnet};
use mpnet::pipeline::inspect_addressing;
use mpnet::scenes::{generate_scene, BlockSpec, GeneratorConfig, Sampling};
use mpnet::training::{train, TrainConfig};

fn main() -> mpnet::Result<()> {
    let slot: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let gen = |seed| {
        let cfg = GeneratorConfig {
            seed,
            points_per_scene: 3000,
            ..GeneratorConfig::default()
        };
        generate_scene(&cfg, None).map(|(s, _)| s)
    };
    let rooms = (0..4).map(gen).collect::<mpnet::Result<Vec<_>>>()?;
    let block = BlockSpec {
        sampling: Sampling::Fixed(256),
        ..BlockSpec::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        block: block.clone(),
        blocks_per_scene: Some(4),
        ..TrainConfig::default()
    };
    let mut model = Mpnet::new(ModelConfig::default(), 1)?;
    train(&mut model, &rooms, &cfg, 0, |_, _| Ok(()))?;

    let room = gen(50)?;
    let w = inspect_addressing(&model, &room, &block, slot)?;
    let class = model.memory().map(|m| m.class_of_slot(slot));
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    println!("slot {slot} (class {class:?}): mean weight {mean:.4}, max {:.4}", w.iter().cloned().fold(0.0, f64::max));

    let out = std::env::temp_dir().join(format!("slot_{slot}.ply"));
    write_weight_ply(&room, &w, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
