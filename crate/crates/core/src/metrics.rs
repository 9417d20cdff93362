//! Semantic metrics (oAcc, mAcc, mIoU) and instance metrics (mCov, mWCov,
//! mPrec, mRec). Both come as accumulators so several scenes can be pooled
//! before the class means are taken.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grouping::InstancePrediction;

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticReport {
    pub oacc: f64,
    pub macc: f64,
    pub miou: f64,
    pub per_class_iou: Vec<f64>,
    pub per_class_acc: Vec<f64>,
    /// Classes that take part in the means.
    pub counted: Vec<bool>,
}

/// Confusion matrix indexed `[gt][pred]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticAccumulator {
    confusion: Vec<Vec<u64>>,
}

impl SemanticAccumulator {
    pub fn new(num_classes: usize) -> Self {
        Self {
            confusion: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn add(&mut self, pred: &[usize], gt: &[usize]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::usage(format!("semantic metrics: {} predictions vs {} labels", pred.len(), gt.len())));
        }
        let c = self.confusion.len();
        for (&p, &g) in pred.iter().zip(gt) {
            if p >= c || g >= c {
                return Err(Error::usage(format!("label out of range: pred {p}, gt {g}, classes {c}")));
            }
            self.confusion[g][p] += 1;
        }
        Ok(())
    }

    pub fn report(&self) -> SemanticReport {
        let c = self.confusion.len();
        let total: u64 = self.confusion.iter().flatten().sum();
        let correct: u64 = (0..c).map(|k| self.confusion[k][k]).sum();
        let gt_count: Vec<u64> = (0..c).map(|k| self.confusion[k].iter().sum()).collect();
        let pred_count: Vec<u64> = (0..c).map(|k| (0..c).map(|g| self.confusion[g][k]).sum()).collect();
        let mut per_class_iou = vec![0.0; c];
        let mut per_class_acc = vec![0.0; c];
        let mut counted = vec![false; c];
        for k in 0..c {
            let tp = self.confusion[k][k];
            let union = gt_count[k] + pred_count[k] - tp;
            counted[k] = union > 0;
            if union > 0 {
                per_class_iou[k] = tp as f64 / union as f64;
            }
            if gt_count[k] > 0 {
                per_class_acc[k] = tp as f64 / gt_count[k] as f64;
            }
        }
        let mean = |vals: &[f64], mask: &dyn Fn(usize) -> bool| {
            let sel: Vec<f64> = (0..c).filter(|k| mask(*k)).map(|k| vals[k]).collect();
            if sel.is_empty() {
                0.0
            } else {
                sel.iter().sum::<f64>() / sel.len() as f64
            }
        };
        SemanticReport {
            oacc: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            macc: mean(&per_class_acc, &|k| gt_count[k] > 0),
            miou: mean(&per_class_iou, &|k| counted[k]),
            per_class_iou,
            per_class_acc,
            counted,
        }
    }
}

pub fn semantic_metrics(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<SemanticReport> {
    let mut acc = SemanticAccumulator::new(num_classes);
    acc.add(pred, gt)?;
    Ok(acc.report())
}

/// Per-class instance statistics pooled over scenes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassInstanceStats {
    pub gt: usize,
    pub pred: usize,
    pub tp: usize,
    /// Sum over ground-truth instances of their best IoU.
    pub cov_sum: f64,
    /// Size-weighted sum of best IoUs and the total size.
    pub wcov_num: f64,
    pub wcov_den: f64,
}

impl ClassInstanceStats {
    pub fn cov(&self) -> f64 {
        if self.gt > 0 {
            self.cov_sum / self.gt as f64
        } else {
            0.0
        }
    }

    pub fn wcov(&self) -> f64 {
        if self.wcov_den > 0.0 {
            self.wcov_num / self.wcov_den
        } else {
            0.0
        }
    }

    pub fn prec(&self) -> f64 {
        if self.pred > 0 {
            self.tp as f64 / self.pred as f64
        } else {
            0.0
        }
    }

    pub fn rec(&self) -> f64 {
        if self.gt > 0 {
            self.tp as f64 / self.gt as f64
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceReport {
    pub mcov: f64,
    pub mwcov: f64,
    pub mprec: f64,
    pub mrec: f64,
    pub per_class: Vec<ClassInstanceStats>,
}

impl InstanceReport {
    /// Mean recall over the given classes that have ground truth.
    pub fn mean_recall_over(&self, classes: &[usize]) -> f64 {
        let sel: Vec<f64> = classes
            .iter()
            .filter(|c| self.per_class[**c].gt > 0)
            .map(|c| self.per_class[*c].rec())
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    }

    /// Mean precision over the given classes with ground truth or
    /// predictions.
    pub fn mean_precision_over(&self, classes: &[usize]) -> f64 {
        let sel: Vec<f64> = classes
            .iter()
            .filter(|c| self.per_class[**c].gt > 0 || self.per_class[**c].pred > 0)
            .map(|c| self.per_class[*c].prec())
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceAccumulator {
    classes: Vec<ClassInstanceStats>,
    iou_threshold: f64,
}

/// Point sets per instance id, with the majority class of each set.
fn groups(ids: &[usize], classes: &[usize]) -> (HashMap<usize, usize>, Vec<usize>, Vec<usize>) {
    let mut index = HashMap::new();
    let mut sizes = Vec::new();
    let mut votes: Vec<HashMap<usize, usize>> = Vec::new();
    for (&id, &c) in ids.iter().zip(classes) {
        let k = *index.entry(id).or_insert_with(|| {
            sizes.push(0);
            votes.push(HashMap::new());
            sizes.len() - 1
        });
        sizes[k] += 1;
        *votes[k].entry(c).or_default() += 1;
    }
    let class = votes
        .iter()
        .map(|v| {
            let mut best = (usize::MAX, 0);
            for (&c, &n) in v {
                if n > best.1 || (n == best.1 && c < best.0) {
                    best = (c, n);
                }
            }
            best.0
        })
        .collect();
    (index, sizes, class)
}

impl InstanceAccumulator {
    pub fn new(num_classes: usize, iou_threshold: f64) -> Self {
        Self {
            classes: vec![ClassInstanceStats::default(); num_classes],
            iou_threshold,
        }
    }

    /// Adds one scene. Ground-truth instances take the majority semantic
    /// label of their points.
    pub fn add(&mut self, pred: &InstancePrediction, gt_semantic: &[usize], gt_instance: &[usize]) -> Result<()> {
        let p = pred.point_instance_ids.len();
        if gt_semantic.len() != p || gt_instance.len() != p {
            return Err(Error::usage(format!(
                "instance metrics: {p} predicted points vs {} / {} labels",
                gt_semantic.len(),
                gt_instance.len()
            )));
        }
        let nc = self.classes.len();
        if let Some(c) = pred.instance_classes.iter().chain(gt_semantic).find(|c| **c >= nc) {
            return Err(Error::usage(format!("class {c} outside {nc} classes")));
        }
        let (gt_index, gt_size, gt_class) = groups(gt_instance, gt_semantic);
        let k_pred = pred.instance_classes.len();
        let mut pred_size = vec![0usize; k_pred];
        let mut inter: HashMap<(usize, usize), usize> = HashMap::new();
        for (&pi, &gi) in pred.point_instance_ids.iter().zip(gt_instance) {
            if pi >= k_pred {
                return Err(Error::usage(format!("predicted instance {pi} out of {k_pred}")));
            }
            pred_size[pi] += 1;
            *inter.entry((pi, gt_index[&gi])).or_default() += 1;
        }
        let iou = |pi: usize, gi: usize, n: usize| n as f64 / (pred_size[pi] + gt_size[gi] - n) as f64;

        for c in 0..nc {
            let gts: Vec<usize> = (0..gt_size.len()).filter(|g| gt_class[*g] == c).collect();
            let preds: Vec<usize> = (0..k_pred).filter(|q| pred.instance_classes[*q] == c && pred_size[*q] > 0).collect();
            let stats = &mut self.classes[c];
            stats.gt += gts.len();
            stats.pred += preds.len();
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            let mut best = vec![0.0f64; gt_size.len()];
            for (&(pi, gi), &n) in &inter {
                if gt_class[gi] != c || pred.instance_classes[pi] != c {
                    continue;
                }
                let v = iou(pi, gi, n);
                best[gi] = best[gi].max(v);
                if v >= self.iou_threshold {
                    pairs.push((v, pi, gi));
                }
            }
            for &g in &gts {
                stats.cov_sum += best[g];
                stats.wcov_num += gt_size[g] as f64 * best[g];
                stats.wcov_den += gt_size[g] as f64;
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut pred_used = vec![false; k_pred];
            let mut gt_used = vec![false; gt_size.len()];
            for (_, pi, gi) in pairs {
                if !pred_used[pi] && !gt_used[gi] {
                    pred_used[pi] = true;
                    gt_used[gi] = true;
                    stats.tp += 1;
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> &[ClassInstanceStats] {
        &self.classes
    }

    /// Class means: coverage and recall over classes with ground truth,
    /// precision over classes with ground truth or predictions.
    pub fn report(&self) -> InstanceReport {
        let all: Vec<usize> = (0..self.classes.len()).collect();
        let with_gt: Vec<&ClassInstanceStats> = self.classes.iter().filter(|s| s.gt > 0).collect();
        let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let mut report = InstanceReport {
            mcov: mean(with_gt.iter().map(|s| s.cov()).collect()),
            mwcov: mean(with_gt.iter().map(|s| s.wcov()).collect()),
            mprec: 0.0,
            mrec: 0.0,
            per_class: self.classes.clone(),
        };
        report.mprec = report.mean_precision_over(&all);
        report.mrec = report.mean_recall_over(&all);
        report
    }
}

pub fn instance_metrics(
    pred: &InstancePrediction,
    gt_semantic: &[usize],
    gt_instance: &[usize],
    num_classes: usize,
    iou_threshold: f64,
) -> Result<InstanceReport> {
    let mut acc = InstanceAccumulator::new(num_classes, iou_threshold);
    acc.add(pred, gt_semantic, gt_instance)?;
    Ok(acc.report())
}
