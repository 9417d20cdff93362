//! Scoring a model on a set of rooms: all rooms, the rare-layout subset, and
//! the classes that are scarce in the training data.

use crate::error::{Error, Result};
use crate::metrics::{InstanceAccumulator, InstanceReport, SemanticAccumulator, SemanticReport};
use crate::model::Mpnet;
use crate::pipeline::{segment_scene, InferenceConfig};
use crate::scenes::Scene;

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetReport {
    pub scenes: usize,
    pub semantic: SemanticReport,
    pub instance: InstanceReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: SubsetReport,
    /// Rooms tagged with a rare layout, if any were evaluated.
    pub rare: Option<SubsetReport>,
    pub non_dominant: Vec<usize>,
    pub non_dominant_mrec: f64,
    pub non_dominant_mprec: f64,
}

/// The ⌊C/2⌋ classes with the fewest training points, ascending by class
/// id. Ties in count go to the smaller id.
pub fn non_dominant_classes(train: &[Scene], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for s in train {
        for (c, n) in s.class_counts().into_iter().enumerate().take(num_classes) {
            counts[c] += n;
        }
    }
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by_key(|&c| (counts[c], c));
    let mut out: Vec<usize> = order.into_iter().take(num_classes / 2).collect();
    out.sort_unstable();
    out
}

struct Pooled {
    scenes: usize,
    sem: SemanticAccumulator,
    ins: InstanceAccumulator,
}

impl Pooled {
    fn new(nc: usize) -> Self {
        Self {
            scenes: 0,
            sem: SemanticAccumulator::new(nc),
            ins: InstanceAccumulator::new(nc, IOU_THRESHOLD),
        }
    }

    fn finish(self) -> SubsetReport {
        SubsetReport {
            scenes: self.scenes,
            semantic: self.sem.report(),
            instance: self.ins.report(),
        }
    }
}

/// Runs the full inference pipeline on every room and pools the metrics.
/// `rare[i]` flags room `i` as a rare layout.
pub fn evaluate(
    model: &Mpnet,
    scenes: &[Scene],
    rare: &[bool],
    non_dominant: &[usize],
    cfg: &InferenceConfig,
) -> Result<EvalReport> {
    if rare.len() != scenes.len() {
        return Err(Error::usage(format!("{} rare flags for {} scenes", rare.len(), scenes.len())));
    }
    if scenes.is_empty() {
        return Err(Error::usage("nothing to evaluate"));
    }
    let nc = model.config().num_classes;
    if let Some(c) = non_dominant.iter().find(|c| **c >= nc) {
        return Err(Error::usage(format!("non-dominant class {c} outside {nc} classes")));
    }
    let mut all = Pooled::new(nc);
    let mut sub = Pooled::new(nc);
    for (scene, &is_rare) in scenes.iter().zip(rare) {
        let seg = segment_scene(model, scene, cfg)?;
        let (gs, gi) = (scene.semantic_usize(), scene.instance_usize());
        let targets: &mut [&mut Pooled] = if is_rare { &mut [&mut all, &mut sub] } else { &mut [&mut all] };
        for t in targets.iter_mut() {
            t.scenes += 1;
            t.sem.add(&seg.semantic, &gs)?;
            t.ins.add(&seg.instances, &gs, &gi)?;
        }
    }
    let overall = all.finish();
    let rare = (sub.scenes > 0).then(|| sub.finish());
    Ok(EvalReport {
        non_dominant_mrec: overall.instance.mean_recall_over(non_dominant),
        non_dominant_mprec: overall.instance.mean_precision_over(non_dominant),
        non_dominant: non_dominant.to_vec(),
        overall,
        rare,
    })
}

impl EvalReport {
    /// `key=value` lines, one metric per line.
    pub fn to_lines(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut subset = |name: &str, r: &SubsetReport| {
            let s = &r.semantic;
            let i = &r.instance;
            out.push(format!("{prefix}{name}.scenes={}", r.scenes));
            for (k, v) in [
                ("oacc", s.oacc),
                ("macc", s.macc),
                ("miou", s.miou),
                ("mcov", i.mcov),
                ("mwcov", i.mwcov),
                ("mprec", i.mprec),
                ("mrec", i.mrec),
            ] {
                out.push(format!("{prefix}{name}.{k}={v:.6}"));
            }
        };
        subset("all", &self.overall);
        if let Some(r) = &self.rare {
            subset("rare", r);
        }
        let classes: Vec<String> = self.non_dominant.iter().map(|c| c.to_string()).collect();
        out.push(format!("{prefix}non_dominant.classes={}", classes.join(",")));
        out.push(format!("{prefix}non_dominant.mrec={:.6}", self.non_dominant_mrec));
        out.push(format!("{prefix}non_dominant.mprec={:.6}", self.non_dominant_mprec));
        out
    }
}
