//! Runs a reduced ablation table end to end: writes a dataset, trains every
//! configuration at two seeds, and prints one row per run.

use mpnet::cli::{cmd_ablate, cmd_gen_data, RunConfig};

const CONFIG: &str = "
gen.train_scenes = 6
gen.test_scenes = 2
gen.points_per_scene = 3000
train.epochs = 4
train.blocks_per_scene = 4
ablate.seeds = 0,1
";

fn main() -> mpnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = RunConfig::parse(CONFIG)?;
    let dir = std::env::temp_dir().join("mpnet_ablation_example");
    let data = dir.join("data");
    cmd_gen_data(&cfg, &data)?;
    for row in cmd_ablate(&cfg, &data, &dir.join("runs"))? {
        println!("{}", row.to_line());
    }
    println!("table written to {}", dir.join("runs/ablation.txt").display());
    Ok(())
}
