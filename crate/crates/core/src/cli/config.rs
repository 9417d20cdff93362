//! Flat `key = value` run configuration.
//!
//! Keys are dotted by section. `preset` is applied before every other key
//! regardless of where it appears, so a file can name a preset and override
//! parts of it.

use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Ablation, ModelConfig};
use crate::pipeline::InferenceConfig;
use crate::scenes::{GeneratorConfig, Sampling};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Reduced scale that trains in about a minute per run on one core.
    Desk,
    /// Full-size settings: 150 slots per class, 4096-point windows, 100 epochs.
    Large,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Preset::Desk),
            "large" => Some(Preset::Large),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    /// Rows of the ablation table, by configuration name.
    pub ablate_configs: Vec<String>,
    pub ablate_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{v}': {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            preset,
            seed: 0,
            generator: GeneratorConfig::default(),
            train_scenes: 40,
            test_scenes: 10,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            ablate_configs: Ablation::TABLE.iter().map(|(n, _)| n.to_string()).collect(),
            ablate_seeds: (0..5).collect(),
        };
        match preset {
            Preset::Large => {
                cfg.model.memory = crate::memory::MemoryConfig::full_scale();
                cfg.train.epochs = 100;
            }
            Preset::Desk => {
                cfg.generator.points_per_scene = 8000;
                cfg.train.block.sampling = Sampling::Fixed(256);
                cfg.train.blocks_per_scene = Some(6);
                cfg.inference.shift.seed_limit = 256;
            }
        }
        cfg
    }

    /// Parses config text on top of the named (or default) preset.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if pairs.iter().any(|(seen, _)| *seen == k) {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
            pairs.push((k, v));
        }
        let preset = match pairs.iter().find(|(k, _)| *k == "preset") {
            Some((_, v)) => Preset::parse(v).ok_or_else(|| Error::Config(format!("unknown preset '{v}'")))?,
            None => Preset::Desk,
        };
        let mut cfg = Self::preset(preset);
        for (k, v) in pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let g = &mut self.generator;
        let m = &mut self.model;
        let t = &mut self.train;
        let inf = &mut self.inference;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "gen.train_scenes" => self.train_scenes = parse(key, v)?,
            "gen.test_scenes" => self.test_scenes = parse(key, v)?,
            "gen.points_per_scene" => g.points_per_scene = parse(key, v)?,
            "gen.num_classes" => g.num_classes = parse(key, v)?,
            "gen.class_weights" => g.class_weights = parse_list(key, v)?,
            "gen.rare_pattern_rate" => g.rare_pattern_rate = parse(key, v)?,
            "gen.room_min" => g.room_min = parse(key, v)?,
            "gen.room_max" => g.room_max = parse(key, v)?,
            "block.size" => {
                t.block.block_size = parse(key, v)?;
                inf.block.block_size = t.block.block_size;
            }
            "block.stride" => {
                t.block.stride = parse(key, v)?;
                inf.block.stride = t.block.stride;
            }
            "block.samples" => t.block.sampling = Sampling::Fixed(parse(key, v)?),
            "block.min_points" => {
                t.block.min_points = parse(key, v)?;
                inf.block.min_points = t.block.min_points;
            }
            "block.room_xyz" => {
                let on = parse_bool(key, v)?;
                t.block.room_xyz = on;
                inf.block.room_xyz = on;
                m.encoder.room_xyz = on;
                m.encoder.input_dim = t.block.input_dim();
            }
            "model.num_classes" => m.num_classes = parse(key, v)?,
            "model.hidden_widths" => m.encoder.hidden_widths = parse_list(key, v)?,
            "model.shared_dim" => m.encoder.shared_dim = parse(key, v)?,
            "model.feature_dim" => m.encoder.feature_dim = parse(key, v)?,
            "model.grid_cell" => m.encoder.grid_cell = parse(key, v)?,
            "model.center_features" => m.encoder.center_features = parse_bool(key, v)?,
            "model.per_class_slots" => m.memory.per_class_slots = parse(key, v)?,
            "model.temperature" => m.memory.temperature = parse(key, v)?,
            "model.centroid_hidden" => m.centroid_hidden = parse(key, v)?,
            "model.variant" => {
                m.ablation = Ablation::by_name(v)
                    .ok_or_else(|| Error::Config(format!("{key}: unknown configuration '{v}'")))?
            }
            "ablate.focal" => m.ablation.focal = parse_bool(key, v)?,
            "ablate.ins_mem" => m.ablation.ins_mem = parse_bool(key, v)?,
            "ablate.seg_mem" => m.ablation.seg_mem = parse_bool(key, v)?,
            "ablate.regul" => m.ablation.regul = parse_bool(key, v)?,
            "ablate.configs" => self.ablate_configs = parse_list(key, v)?,
            "ablate.seeds" => self.ablate_seeds = parse_list(key, v)?,
            "loss.margin" => m.loss.margin = parse(key, v)?,
            "loss.sigma_v" => m.loss.sigma_v = parse(key, v)?,
            "loss.sigma_d" => m.loss.sigma_d = parse(key, v)?,
            "loss.lambda_ins" => m.loss.lambda_ins = parse(key, v)?,
            "loss.embed_dim" => m.loss.embed_dim = parse(key, v)?,
            "loss.focal_gamma" => m.loss.focal_gamma = parse(key, v)?,
            "loss.use_squash" => m.loss.use_squash = parse_bool(key, v)?,
            "loss.focal_on_squash" => m.loss.focal_on_squash = parse_bool(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.blocks_per_scene" => {
                let n: usize = parse(key, v)?;
                t.blocks_per_scene = (n > 0).then_some(n);
            }
            "optim.learning_rate" => t.optim.learning_rate = parse(key, v)?,
            "optim.beta1" => t.optim.beta1 = parse(key, v)?,
            "optim.beta2" => t.optim.beta2 = parse(key, v)?,
            "optim.epsilon" => t.optim.epsilon = parse(key, v)?,
            "optim.decay_every" => t.optim.decay_every = parse(key, v)?,
            "optim.decay_factor" => t.optim.decay_factor = parse(key, v)?,
            "shift.bandwidth" => inf.shift.bandwidth = parse(key, v)?,
            "shift.max_iters" => inf.shift.max_iters = parse(key, v)?,
            "shift.convergence_eps" => inf.shift.convergence_eps = parse(key, v)?,
            "shift.merge_radius" => inf.shift.merge_radius = parse(key, v)?,
            "shift.seed_limit" => inf.shift.seed_limit = parse(key, v)?,
            "merge.voxel" => inf.merge.voxel = parse(key, v)?,
            "merge.iou_threshold" => inf.merge.iou_threshold = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.inference.shift.validate()?;
        if self.generator.num_classes != self.model.num_classes {
            return Err(Error::Config(format!(
                "generator makes {} classes but the model predicts {}",
                self.generator.num_classes, self.model.num_classes
            )));
        }
        if self.train_scenes == 0 || self.test_scenes == 0 {
            return Err(Error::Config("both splits need at least one scene".into()));
        }
        if !(self.inference.merge.voxel > 0.0) {
            return Err(Error::Config("merge voxel must be positive".into()));
        }
        if let Some(bad) = self.ablate_configs.iter().find(|c| Ablation::by_name(c).is_none()) {
            return Err(Error::Config(format!("unknown ablation configuration '{bad}'")));
        }
        Ok(())
    }

    /// Every resolved setting as `(key, value)`, model section first.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = self.model_entries();
        let g = &self.generator;
        let t = &self.train;
        let inf = &self.inference;
        let samples = match t.block.sampling {
            Sampling::Fixed(s) => s,
            Sampling::All => 0,
        };
        out.extend([
            ("seed", self.seed.to_string()),
            ("gen.train_scenes", self.train_scenes.to_string()),
            ("gen.test_scenes", self.test_scenes.to_string()),
            ("gen.points_per_scene", g.points_per_scene.to_string()),
            ("gen.num_classes", g.num_classes.to_string()),
            ("gen.class_weights", join(&g.class_weights)),
            ("gen.rare_pattern_rate", g.rare_pattern_rate.to_string()),
            ("gen.room_min", g.room_min.to_string()),
            ("gen.room_max", g.room_max.to_string()),
            ("block.size", t.block.block_size.to_string()),
            ("block.stride", t.block.stride.to_string()),
            ("block.samples", samples.to_string()),
            ("block.min_points", t.block.min_points.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.blocks_per_scene", t.blocks_per_scene.unwrap_or(0).to_string()),
            ("optim.learning_rate", t.optim.learning_rate.to_string()),
            ("optim.beta1", t.optim.beta1.to_string()),
            ("optim.beta2", t.optim.beta2.to_string()),
            ("optim.epsilon", t.optim.epsilon.to_string()),
            ("optim.decay_every", t.optim.decay_every.to_string()),
            ("optim.decay_factor", t.optim.decay_factor.to_string()),
            ("shift.bandwidth", inf.shift.bandwidth.to_string()),
            ("shift.max_iters", inf.shift.max_iters.to_string()),
            ("shift.convergence_eps", inf.shift.convergence_eps.to_string()),
            ("shift.merge_radius", inf.shift.merge_radius.to_string()),
            ("shift.seed_limit", inf.shift.seed_limit.to_string()),
            ("merge.voxel", inf.merge.voxel.to_string()),
            ("merge.iou_threshold", inf.merge.iou_threshold.to_string()),
            ("ablate.configs", self.ablate_configs.join(",")),
            ("ablate.seeds", join(&self.ablate_seeds)),
        ]);
        out
    }

    /// The settings that determine the parameter layout and the objective.
    fn model_entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let a = m.ablation;
        vec![
            ("preset", self.preset.name().to_string()),
            ("block.room_xyz", self.train.block.room_xyz.to_string()),
            ("model.num_classes", m.num_classes.to_string()),
            ("model.hidden_widths", join(&m.encoder.hidden_widths)),
            ("model.shared_dim", m.encoder.shared_dim.to_string()),
            ("model.feature_dim", m.encoder.feature_dim.to_string()),
            ("model.grid_cell", m.encoder.grid_cell.to_string()),
            ("model.center_features", m.encoder.center_features.to_string()),
            ("model.per_class_slots", m.memory.per_class_slots.to_string()),
            ("model.temperature", m.memory.temperature.to_string()),
            ("model.centroid_hidden", m.centroid_hidden.to_string()),
            ("ablate.focal", a.focal.to_string()),
            ("ablate.ins_mem", a.ins_mem.to_string()),
            ("ablate.seg_mem", a.seg_mem.to_string()),
            ("ablate.regul", a.regul.to_string()),
            ("loss.margin", m.loss.margin.to_string()),
            ("loss.sigma_v", m.loss.sigma_v.to_string()),
            ("loss.sigma_d", m.loss.sigma_d.to_string()),
            ("loss.lambda_ins", m.loss.lambda_ins.to_string()),
            ("loss.embed_dim", m.loss.embed_dim.to_string()),
            ("loss.focal_gamma", m.loss.focal_gamma.to_string()),
            ("loss.use_squash", m.loss.use_squash.to_string()),
            ("loss.focal_on_squash", m.loss.focal_on_squash.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The model section alone, as stored in checkpoints.
    pub fn model_text(&self) -> String {
        self.model_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the model section.
    pub fn model_hash(&self) -> [u8; 32] {
        Sha256::digest(self.model_text().as_bytes()).into()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
