//! Command-line front end: config files, checkpoints, datasets on disk, and
//! the experiment commands built on them.

mod checkpoint;
mod commands;
mod config;
mod dataset;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use checkpoint::{Checkpoint, MPCK_MAGIC, MPCK_VERSION};
pub use commands::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_infer, cmd_inspect_memory, cmd_train, epoch_line, evaluate_model,
    prepare_run_dir, read_weight_ply, row_config, version_string, write_weight_ply, AblationRow, TrainOutcome,
    CHECKPOINT_FILE, CONFIG_FILE, METRICS_LOG, VERSION_FILE,
};
pub use config::{hex, Preset, RunConfig};
pub use dataset::{generate_split, scene_seed, write_dataset, Dataset, ManifestEntry, Split, MANIFEST};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mpnet", version, about = "Memory-augmented prototype network experiments")]
pub struct Cli {
    /// Flat key = value config file; omitted keys take the desk preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/latest")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train and test rooms.
    GenData,
    /// Train a model on a dataset's train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Segment one room and export the prediction as PLY.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
    /// Export one memory slot's addressing weights over a room as PLY.
    InspectMemory {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        slot: usize,
    },
    /// Train and score every ablation configuration at every seed.
    Ablate {
        #[arg(long)]
        data: PathBuf,
    },
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::GenData => {
            cmd_gen_data(&cfg, out)?;
        }
        Command::Train { data, resume } => {
            let t = cmd_train(&cfg, data, out, resume.as_deref())?;
            if let Some(last) = t.logs.last() {
                println!("{}", epoch_line(last));
            }
        }
        Command::Eval { checkpoint, data, split } => {
            let split = Split::parse(split).ok_or_else(|| Error::usage(format!("unknown split '{split}'")))?;
            let report = cmd_eval(&cfg, checkpoint, data, split, out)?;
            report.to_lines("").iter().for_each(|l| println!("{l}"));
        }
        Command::Infer { checkpoint, scene } => {
            let seg = cmd_infer(&cfg, checkpoint, scene, out)?;
            println!("points={} instances={}", seg.semantic.len(), seg.instances.num_instances());
        }
        Command::InspectMemory { checkpoint, scene, slot } => {
            let w = cmd_inspect_memory(&cfg, checkpoint, scene, *slot, out)?;
            println!("points={} max_weight={}", w.len(), w.iter().cloned().fold(0.0, f64::max));
        }
        Command::Ablate { data } => {
            for row in cmd_ablate(&cfg, data, out)? {
                println!("{}", row.to_line());
            }
        }
    }
    Ok(())
}
