//! Labelled indoor scenes: a synthetic generator with controllable class and
//! pattern imbalance, sliding-window blocks, and the MPNC binary format.

mod blocks;
mod format;
mod generator;

pub use blocks::{blockify, Block, BlockSpec, Sampling};
pub use format::{decode_scene, encode_scene, read_scene, write_ply, write_scene, MPNC_MAGIC, MPNC_VERSION};
pub use generator::{generate_scene, GeneratorConfig, RarePattern, SceneMeta, CLASS_NAMES};

use crate::error::{Error, Result};

/// A room-scale point cloud with per-point semantic and instance labels.
///
/// Each point is `x y z r g b` stored as `f32`. Instance ids are dense and
/// every instance carries a single semantic class.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    points: Vec<f32>,
    semantic: Vec<u16>,
    instance: Vec<u32>,
    num_classes: u32,
}

impl Scene {
    pub fn new(points: Vec<f32>, semantic: Vec<u16>, instance: Vec<u32>, num_classes: u32) -> Result<Self> {
        let p = semantic.len();
        if points.len() != 6 * p || instance.len() != p {
            return Err(Error::usage(format!(
                "scene arrays disagree: {} coordinates, {p} semantic, {} instance labels",
                points.len(),
                instance.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scene coordinates".into()));
        }
        if let Some(s) = semantic.iter().find(|s| u32::from(**s) >= num_classes) {
            return Err(Error::usage(format!("semantic label {s} outside {num_classes} classes")));
        }
        let k = instance.iter().map(|i| *i as usize + 1).max().unwrap_or(0);
        let mut class_of = vec![None; k];
        for (&ins, &sem) in instance.iter().zip(&semantic) {
            match class_of[ins as usize] {
                None => class_of[ins as usize] = Some(sem),
                Some(c) if c != sem => {
                    return Err(Error::usage(format!("instance {ins} spans classes {c} and {sem}")));
                }
                _ => {}
            }
        }
        if let Some(gap) = class_of.iter().position(Option::is_none) {
            return Err(Error::usage(format!("instance ids are not dense: {gap} is unused")));
        }
        Ok(Self {
            points,
            semantic,
            instance,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes as usize
    }

    pub fn raw_points(&self) -> &[f32] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.points[6 * i..6 * i + 6]
    }

    pub fn xyz(&self, i: usize) -> [f64; 3] {
        let p = self.point(i);
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    pub fn semantic(&self) -> &[u16] {
        &self.semantic
    }

    pub fn instance(&self) -> &[u32] {
        &self.instance
    }

    pub fn semantic_usize(&self) -> Vec<usize> {
        self.semantic.iter().map(|s| *s as usize).collect()
    }

    pub fn instance_usize(&self) -> Vec<usize> {
        self.instance.iter().map(|s| *s as usize).collect()
    }

    pub fn num_instances(&self) -> usize {
        self.instance.iter().map(|i| *i as usize + 1).max().unwrap_or(0)
    }

    /// Semantic class of each instance.
    pub fn instance_classes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_instances()];
        for (&ins, &sem) in self.instance.iter().zip(&self.semantic) {
            out[ins as usize] = sem as usize;
        }
        out
    }

    /// Per-axis maximum coordinate. Rooms are anchored at the origin.
    pub fn extent(&self) -> [f64; 3] {
        let mut e = [0.0f64; 3];
        for i in 0..self.len() {
            let p = self.xyz(i);
            for k in 0..3 {
                e[k] = e[k].max(p[k]);
            }
        }
        e
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.semantic {
            counts[*s as usize] += 1;
        }
        counts
    }
}
