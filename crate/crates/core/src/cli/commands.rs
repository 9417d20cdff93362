//! The six experiment commands. Each writes into an output directory that
//! starts with the resolved config and a version string.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::dataset::{write_dataset, Dataset, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, non_dominant_classes, EvalReport};
use crate::model::{Ablation, Mpnet};
use crate::pipeline::{inspect_addressing, segment_scene, SceneSegmentation};
use crate::scenes::{read_scene, Scene};
use crate::training::{train, EpochLog};

pub const CONFIG_FILE: &str = "config.txt";
pub const VERSION_FILE: &str = "version.txt";
pub const METRICS_LOG: &str = "metrics.log";
pub const CHECKPOINT_FILE: &str = "checkpoint.mpck";

/// Package version plus `git describe` output when available.
pub fn version_string() -> String {
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into());
    format!("mpnet {} ({git})", env!("CARGO_PKG_VERSION"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn append(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Creates `out` and records the resolved config before any work.
pub fn prepare_run_dir(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join(CONFIG_FILE), &cfg.to_text())?;
    write(&out.join(VERSION_FILE), &(version_string() + "\n"))
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<Vec<ManifestEntry>> {
    prepare_run_dir(cfg, out)?;
    let entries = write_dataset(cfg, out)?;
    log::info!(
        "wrote {} scenes ({} with a rare layout) to {}",
        entries.len(),
        entries.iter().filter(|e| e.rare.is_some()).count(),
        out.display()
    );
    Ok(entries)
}

pub fn epoch_line(log: &EpochLog) -> String {
    let l = &log.loss;
    let mut s = format!(
        "epoch={} steps={} blocks={} loss.total={} loss.classification={} loss.discriminative={}",
        log.epoch + 1,
        log.steps,
        log.blocks,
        l.total,
        l.classification,
        l.discriminative
    );
    if let Some(v) = l.semantic_reg {
        let _ = write!(s, " loss.semantic_reg={v}");
    }
    if let Some(v) = l.instance_reg {
        let _ = write!(s, " loss.instance_reg={v}");
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Mpnet,
    pub logs: Vec<EpochLog>,
    pub checkpoint: PathBuf,
}

/// Trains on the dataset's train split. With `resume`, the model and the
/// epoch counter come from that checkpoint. After every epoch the metrics
/// log gains a line and the checkpoint is rewritten, so a failure leaves
/// the last completed epoch on disk.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    prepare_run_dir(cfg, out)?;
    let (scenes, _) = Dataset::open(data)?.load(Split::Train)?;
    let (mut model, start) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            ck.warn_on_mismatch(cfg);
            (ck.restore()?, ck.epoch as usize)
        }
        None => (Mpnet::new(cfg.model.clone(), cfg.seed)?, 0),
    };
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    let log_path = out.join(METRICS_LOG);
    let ck_path = out.join(CHECKPOINT_FILE);
    if resume.is_none() {
        write(&log_path, "")?;
    }
    let result = train(&mut model, &scenes, &tc, start, |m, log| {
        append(&log_path, &(epoch_line(log) + "\n"))?;
        Checkpoint::from_model(m, cfg, log.epoch as u64 + 1).save(&ck_path)?;
        log::info!("epoch {} loss {:.4}", log.epoch + 1, log.loss.total);
        Ok(())
    });
    match result {
        Ok(logs) => Ok(TrainOutcome {
            model,
            logs,
            checkpoint: ck_path,
        }),
        Err(e) => {
            append(&log_path, &format!("status=aborted error=\"{e}\"\n"))?;
            Err(e)
        }
    }
}

/// Evaluates a model on one split and writes `eval.txt`.
pub fn evaluate_model(model: &Mpnet, cfg: &RunConfig, data: &Path, split: Split) -> Result<EvalReport> {
    let ds = Dataset::open(data)?;
    let (train_scenes, _) = ds.load(Split::Train)?;
    let nd = non_dominant_classes(&train_scenes, model.config().num_classes);
    let (scenes, rare) = match split {
        Split::Train => ds.load(Split::Train)?,
        Split::Test => ds.load(Split::Test)?,
    };
    evaluate(model, &scenes, &rare, &nd, &cfg.inference)
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, data: &Path, split: Split, out: &Path) -> Result<EvalReport> {
    prepare_run_dir(cfg, out)?;
    let ck = Checkpoint::load(checkpoint)?;
    ck.warn_on_mismatch(cfg);
    let model = ck.restore()?;
    let report = evaluate_model(&model, cfg, data, split)?;
    let mut text = format!("split={}\nepoch={}\n", split.name(), ck.epoch);
    for line in report.to_lines("") {
        text.push_str(&line);
        text.push('\n');
    }
    write(&out.join(METRICS_LOG), &text)?;
    Ok(report)
}

fn ply_header(n: usize, props: &[(&str, &str)]) -> String {
    let mut s = format!("ply\nformat ascii 1.0\nelement vertex {n}\n");
    for (ty, name) in [("float", "x"), ("float", "y"), ("float", "z")].iter().chain(props) {
        let _ = writeln!(s, "property {ty} {name}");
    }
    s.push_str("end_header\n");
    s
}

pub fn cmd_infer(cfg: &RunConfig, checkpoint: &Path, scene: &Path, out: &Path) -> Result<SceneSegmentation> {
    prepare_run_dir(cfg, out)?;
    let model = Checkpoint::load(checkpoint)?.restore()?;
    let scene = read_scene(scene)?;
    let seg = segment_scene(&model, &scene, &cfg.inference)?;
    let mut s = ply_header(scene.len(), &[("int", "sem"), ("int", "ins"), ("float", "confidence")]);
    for i in 0..scene.len() {
        let p = scene.point(i);
        let id = seg.instances.point_instance_ids[i];
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            p[0], p[1], p[2], seg.semantic[i], id, seg.instances.confidences[id]
        );
    }
    write(&out.join("prediction.ply"), &s)?;
    let mut summary = format!("points={}\ninstances={}\n", scene.len(), seg.instances.num_instances());
    for (k, (c, n)) in seg
        .instances
        .instance_classes
        .iter()
        .zip(&seg.instances.instance_sizes)
        .enumerate()
    {
        let _ = writeln!(summary, "instance={k} class={c} points={n} confidence={}", seg.instances.confidences[k]);
    }
    write(&out.join(METRICS_LOG), &summary)?;
    Ok(seg)
}

/// Writes `weights.ply`: positions, grayscale colour scaled to the largest
/// weight, and the exact weight as a double property.
pub fn write_weight_ply(scene: &Scene, weights: &[f64], path: &Path) -> Result<()> {
    if weights.len() != scene.len() {
        return Err(Error::usage("one weight per point required"));
    }
    let max = weights.iter().cloned().fold(0.0, f64::max);
    let mut s = ply_header(
        scene.len(),
        &[("uchar", "red"), ("uchar", "green"), ("uchar", "blue"), ("double", "weight")],
    );
    for (i, w) in weights.iter().enumerate() {
        let p = scene.point(i);
        let gray = if max > 0.0 { (w / max * 255.0).round() as u8 } else { 0 };
        let _ = writeln!(s, "{} {} {} {gray} {gray} {gray} {w:e}", p[0], p[1], p[2]);
    }
    write(path, &s)
}

/// Parses the `weight` column back out of a file written by
/// [`write_weight_ply`].
pub fn read_weight_ply(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = text
        .split_once("end_header\n")
        .ok_or_else(|| Error::usage("not a PLY file"))?
        .1;
    body.lines()
        .map(|l| {
            l.split_whitespace()
                .nth(6)
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| Error::usage(format!("bad weight row '{l}'")))
        })
        .collect()
}

pub fn cmd_inspect_memory(cfg: &RunConfig, checkpoint: &Path, scene: &Path, slot: usize, out: &Path) -> Result<Vec<f64>> {
    let model = Checkpoint::load(checkpoint)?.restore()?;
    let scene = read_scene(scene)?;
    let weights = inspect_addressing(&model, &scene, &cfg.inference.block, slot)?;
    prepare_run_dir(cfg, out)?;
    write_weight_ply(&scene, &weights, &out.join("weights.ply"))?;
    Ok(weights)
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub config: String,
    pub seed: u64,
    pub result: std::result::Result<EvalReport, String>,
}

impl AblationRow {
    pub fn to_line(&self) -> String {
        match &self.result {
            Ok(r) => {
                let (s, i) = (&r.overall.semantic, &r.overall.instance);
                format!(
                    "config={} seed={} status=ok mprec={:.6} mrec={:.6} oacc={:.6} miou={:.6} mcov={:.6} mwcov={:.6} nd_mprec={:.6} nd_mrec={:.6}",
                    self.config,
                    self.seed,
                    i.mprec,
                    i.mrec,
                    s.oacc,
                    s.miou,
                    i.mcov,
                    i.mwcov,
                    r.non_dominant_mprec,
                    r.non_dominant_mrec
                )
            }
            Err(e) => format!("config={} seed={} status=failed error=\"{e}\"", self.config, self.seed),
        }
    }
}

/// Run config for one row: the named configuration at the given seed.
pub fn row_config(cfg: &RunConfig, name: &str, seed: u64) -> Result<RunConfig> {
    let ablation = Ablation::by_name(name).ok_or_else(|| Error::Config(format!("unknown configuration '{name}'")))?;
    let mut c = cfg.clone();
    c.model.ablation = ablation;
    c.seed = seed;
    Ok(c)
}

/// Trains and evaluates every configuration at every seed. Failed runs are
/// recorded and the rest continue.
pub fn cmd_ablate(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<AblationRow>> {
    prepare_run_dir(cfg, out)?;
    let table = out.join("ablation.txt");
    write(&table, "")?;
    let mut rows = Vec::new();
    for name in &cfg.ablate_configs {
        for &seed in &cfg.ablate_seeds {
            let run = out.join(format!("{name}_seed{seed}"));
            let result = row_config(cfg, name, seed)
                .and_then(|c| {
                    let trained = cmd_train(&c, data, &run, None)?;
                    evaluate_model(&trained.model, &c, data, Split::Test)
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &result {
                log::error!("{name} seed {seed} failed: {e}");
            }
            let row = AblationRow {
                config: name.clone(),
                seed,
                result,
            };
            append(&table, &(row.to_line() + "\n"))?;
            rows.push(row);
        }
    }
    Ok(rows)
}
