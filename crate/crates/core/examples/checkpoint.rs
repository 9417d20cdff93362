//! Trains for one epoch through the command layer, reloads the checkpoint
//! and confirms the restored model predicts exactly what the trained one did.

use mpnet::cli::{cmd_gen_data, cmd_train, Checkpoint, Dataset, RunConfig, Split, CHECKPOINT_FILE};
use mpnet::pipeline::segment_scene;

const CONFIG: &str = "
gen.train_scenes = 3
gen.test_scenes = 1
gen.points_per_scene = 2000
train.epochs = 1
train.blocks_per_scene = 4
";

fn main() -> mpnet::Result<()> {
    let cfg = RunConfig::parse(CONFIG)?;
    let dir = std::env::temp_dir().join("mpnet_checkpoint_example");
    let data = dir.join("data");
    cmd_gen_data(&cfg, &data)?;
    let trained = cmd_train(&cfg, &data, &dir.join("run"), None)?;

    let ck = Checkpoint::load(&dir.join("run").join(CHECKPOINT_FILE))?;
    println!("checkpoint: epoch {}, {} parameters, config hash {}", ck.epoch, ck.params.len(), mpnet::cli::hex(&ck.config_hash));
    let restored = ck.restore()?;

    let (test, _) = Dataset::open(&data)?.load(Split::Test)?;
    let a = segment_scene(&trained.model, &test[0], &cfg.inference)?;
    let b = segment_scene(&restored, &test[0], &cfg.inference)?;
    println!("identical predictions after reload: {}", a == b);
    Ok(())
}
