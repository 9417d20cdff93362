//! On-disk synthetic datasets: MPNC scene files under `train/` and `test/`
//! plus a `manifest.txt` with one `key=value` record per scene.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::{hex, RunConfig};
use crate::error::{Error, Result};
use crate::scenes::{encode_scene, generate_scene, read_scene, GeneratorConfig, RarePattern, Scene, SceneMeta};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    pub file: String,
    pub seed: u64,
    pub rare: Option<RarePattern>,
    pub points: usize,
    pub instances: usize,
    pub sha256: String,
}

impl ManifestEntry {
    pub fn to_line(&self) -> String {
        format!(
            "split={} file={} seed={} rare={} points={} instances={} sha256={}",
            self.split.name(),
            self.file,
            self.seed,
            self.rare.map_or("none", RarePattern::name),
            self.points,
            self.instances,
            self.sha256
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("manifest line '{line}': {what}"));
        let field = |key: &str| -> Result<&str> {
            line.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let num = |key: &str| -> Result<u64> { field(key)?.parse().map_err(|_| bad(&format!("bad {key}"))) };
        let rare = match field("rare")? {
            "none" => None,
            r => Some(RarePattern::parse(r).ok_or_else(|| bad("unknown rare pattern"))?),
        };
        Ok(Self {
            split: Split::parse(field("split")?).ok_or_else(|| bad("unknown split"))?,
            file: field("file")?.to_string(),
            seed: num("seed")?,
            rare,
            points: num("points")? as usize,
            instances: num("instances")? as usize,
            sha256: field("sha256")?.to_string(),
        })
    }
}

/// Per-scene generator seed, distinct across splits and indices.
pub fn scene_seed(seed: u64, split: Split, index: usize) -> u64 {
    let s = match split {
        Split::Train => 0x5EED_0000_0000_0000u64,
        Split::Test => 0x7E57_0000_0000_0000u64,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ s ^ index as u64
}

/// Generates one split. If no room came out with a rare layout, the last
/// room is regenerated with one so each split has a rare subset to report.
pub fn generate_split(cfg: &RunConfig, split: Split) -> Result<Vec<(Scene, SceneMeta, u64)>> {
    let n = match split {
        Split::Train => cfg.train_scenes,
        Split::Test => cfg.test_scenes,
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let seed = scene_seed(cfg.seed, split, i);
        let gen = GeneratorConfig {
            seed,
            ..cfg.generator.clone()
        };
        let (scene, meta) = generate_scene(&gen, None)?;
        out.push((scene, meta, seed));
    }
    if cfg.generator.rare_pattern_rate > 0.0 && out.iter().all(|(_, m, _)| m.rare.is_none()) {
        let last = out.last_mut().expect("splits are nonempty");
        let gen = GeneratorConfig {
            seed: last.2,
            ..cfg.generator.clone()
        };
        let (scene, meta) = generate_scene(&gen, Some(true))?;
        last.0 = scene;
        last.1 = meta;
    }
    Ok(out)
}

/// Writes both splits and the manifest under `dir`.
pub fn write_dataset(cfg: &RunConfig, dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for split in [Split::Train, Split::Test] {
        let sub = dir.join(split.name());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (i, (scene, meta, seed)) in generate_split(cfg, split)?.into_iter().enumerate() {
            let file = format!("{}/scene_{i:04}.mpnc", split.name());
            let bytes = encode_scene(&scene);
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(ManifestEntry {
                split,
                file,
                seed,
                rare: meta.rare,
                points: scene.len(),
                instances: scene.num_instances(),
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
    }
    let text: String = entries.iter().map(|e| e.to_line() + "\n").collect();
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(ManifestEntry::parse_line)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    /// Scenes of one split with their rare-layout flags, in manifest order.
    pub fn load(&self, split: Split) -> Result<(Vec<Scene>, Vec<bool>)> {
        let mut scenes = Vec::new();
        let mut rare = Vec::new();
        for e in self.entries.iter().filter(|e| e.split == split) {
            scenes.push(read_scene(&self.root.join(&e.file))?);
            rare.push(e.rare.is_some());
        }
        if scenes.is_empty() {
            return Err(Error::usage(format!("dataset has no {} scenes", split.name())));
        }
        Ok((scenes, rare))
    }
}
