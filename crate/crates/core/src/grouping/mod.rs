//! Turning per-point outputs into instances: mean-shift over embeddings,
//! majority-vote classes, and stitching overlapping blocks into one scene.

mod meanshift;
mod merge;

pub use meanshift::{adjusted_rand_index, mean_shift, MeanShiftConfig};
pub use merge::{block_merge, snake_order, BlockPrediction, MergeGrid};

use crate::error::{Error, Result};

/// Instance ids per point plus per-instance class, size and vote share.
#[derive(Clone, Debug, PartialEq)]
pub struct InstancePrediction {
    pub point_instance_ids: Vec<usize>,
    pub instance_classes: Vec<usize>,
    pub instance_sizes: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl InstancePrediction {
    pub fn num_instances(&self) -> usize {
        self.instance_classes.len()
    }

    pub fn len(&self) -> usize {
        self.point_instance_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_instance_ids.is_empty()
    }

    /// Checks the partition invariants: dense ids, consistent sizes.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let k = self.instance_classes.len();
        if self.instance_sizes.len() != k || self.confidences.len() != k {
            return Err(Error::usage("instance arrays disagree in length"));
        }
        let mut sizes = vec![0; k];
        for &id in &self.point_instance_ids {
            if id >= k {
                return Err(Error::usage(format!("instance id {id} out of {k}")));
            }
            sizes[id] += 1;
        }
        if sizes != self.instance_sizes || sizes.contains(&0) {
            return Err(Error::usage("instance sizes do not match the point ids"));
        }
        if self.instance_classes.iter().any(|c| *c >= num_classes) {
            return Err(Error::usage("instance class out of range"));
        }
        Ok(())
    }
}

/// Gives each cluster the majority class of its points. Ties go to the
/// smaller class id; confidence is the winning vote share.
pub fn assign_class(cluster_ids: &[usize], classes: &[usize], num_classes: usize) -> Result<InstancePrediction> {
    if cluster_ids.len() != classes.len() {
        return Err(Error::usage(format!(
            "assign_class: {} cluster ids vs {} classes",
            cluster_ids.len(),
            classes.len()
        )));
    }
    if let Some(c) = classes.iter().find(|c| **c >= num_classes) {
        return Err(Error::usage(format!("class {c} outside {num_classes} classes")));
    }
    let k = cluster_ids.iter().map(|c| c + 1).max().unwrap_or(0);
    let mut votes = vec![vec![0usize; num_classes]; k];
    for (&id, &c) in cluster_ids.iter().zip(classes) {
        votes[id][c] += 1;
    }
    let mut pred = InstancePrediction {
        point_instance_ids: cluster_ids.to_vec(),
        instance_classes: Vec::with_capacity(k),
        instance_sizes: Vec::with_capacity(k),
        confidences: Vec::with_capacity(k),
    };
    for v in votes {
        let size: usize = v.iter().sum();
        if size == 0 {
            return Err(Error::usage("cluster ids are not dense"));
        }
        let (best, count) = v
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (c, &n)| if n > acc.1 { (c, n) } else { acc });
        pred.instance_classes.push(best);
        pred.instance_sizes.push(size);
        pred.confidences.push(count as f64 / size as f64);
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_vote_examples() {
        let p = assign_class(&[0, 0, 0], &[2, 2, 2], 3).unwrap();
        assert_eq!((p.instance_classes[0], p.confidences[0]), (2, 1.0));
        let p = assign_class(&[0, 0, 0, 0], &[1, 0, 1, 0], 3).unwrap();
        assert_eq!((p.instance_classes[0], p.confidences[0]), (0, 0.5));
        let p = assign_class(&[0, 0, 0, 0, 1], &[2, 2, 1, 2, 0], 3).unwrap();
        assert_eq!(p.instance_classes, vec![2, 0]);
        assert_eq!(p.confidences, vec![0.75, 1.0]);
        assert_eq!(p.instance_sizes, vec![4, 1]);
        p.validate(3).unwrap();
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        assert!(assign_class(&[0, 1], &[0], 2).is_err());
        assert!(assign_class(&[0, 2], &[0, 0], 2).is_err());
        assert!(assign_class(&[0], &[5], 2).is_err());
    }
}
