//! Sliding-window crops of a scene over the floor plane.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scene;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Exactly this many points per block.
    Fixed(usize),
    /// Every point of the block, in scene order.
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub block_size: f64,
    pub stride: f64,
    pub sampling: Sampling,
    /// Blocks holding fewer points are skipped.
    pub min_points: usize,
    /// Re-admit skipped blocks that hold points no kept block covers.
    pub cover_all: bool,
    /// Append room-normalised xyz as three extra input columns.
    pub room_xyz: bool,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            block_size: 1.0,
            stride: 0.5,
            sampling: Sampling::Fixed(4096),
            min_points: 100,
            cover_all: false,
            room_xyz: false,
        }
    }
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.block_size > 0.0 && self.stride > 0.0 && self.stride <= self.block_size) {
            return Err(Error::Config("need 0 < stride <= block_size".into()));
        }
        if self.sampling == Sampling::Fixed(0) {
            return Err(Error::Config("samples_per_block must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        if self.room_xyz {
            9
        } else {
            6
        }
    }
}

/// One crop. `indices` maps each row of `points` back to its scene point;
/// padding may repeat indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    /// Window position on the block grid as `(column, row)`.
    pub grid: (usize, usize),
    pub origin: [f64; 2],
    pub indices: Vec<usize>,
    /// P×K inputs: xyz minus the block minimum, rgb, then optional room xyz.
    pub points: Tensor,
}

impl Block {
    pub fn semantic(&self, scene: &Scene) -> Vec<usize> {
        self.indices.iter().map(|&i| scene.semantic()[i] as usize).collect()
    }

    pub fn instance(&self, scene: &Scene) -> Vec<usize> {
        self.indices.iter().map(|&i| scene.instance()[i] as usize).collect()
    }
}

fn axis_offsets(extent: f64, stride: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut k = 1;
    while (k as f64) * stride < extent {
        out.push(k as f64 * stride);
        k += 1;
    }
    out
}

/// Cuts the scene into overlapping windows, ordered by column then row.
pub fn blockify(scene: &Scene, spec: &BlockSpec, seed: u64) -> Result<Vec<Block>> {
    spec.validate()?;
    if scene.is_empty() {
        return Err(Error::usage("blockify: empty scene"));
    }
    let extent = scene.extent();
    let xs = axis_offsets(extent[0], spec.stride);
    let ys = axis_offsets(extent[1], spec.stride);
    let mut members = vec![Vec::new(); xs.len() * ys.len()];
    let cell = |v: f64, offsets: &[f64]| -> (usize, usize) {
        // Windows [o, o + size) containing v.
        let hi = offsets.partition_point(|o| *o <= v);
        let lo = offsets.partition_point(|o| *o + spec.block_size <= v);
        (lo, hi)
    };
    for i in 0..scene.len() {
        let p = scene.xyz(i);
        let (x0, x1) = cell(p[0], &xs);
        let (y0, y1) = cell(p[1], &ys);
        for bx in x0..x1 {
            for by in y0..y1 {
                members[bx * ys.len() + by].push(i);
            }
        }
    }

    let mut keep: Vec<bool> = members.iter().map(|m| m.len() >= spec.min_points).collect();
    if spec.cover_all {
        let mut covered = vec![false; scene.len()];
        for (m, _) in members.iter().zip(&keep).filter(|(_, k)| **k) {
            m.iter().for_each(|&i| covered[i] = true);
        }
        for (b, m) in members.iter().enumerate() {
            if !keep[b] && m.iter().any(|&i| !covered[i]) {
                keep[b] = true;
                m.iter().for_each(|&i| covered[i] = true);
            }
        }
    }

    let mut blocks = Vec::new();
    for (b, m) in members.into_iter().enumerate() {
        if !keep[b] || m.is_empty() {
            continue;
        }
        let (bx, by) = (b / ys.len(), b % ys.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let indices = sample(m, spec.sampling, &mut rng);
        let points = block_inputs(scene, &indices, extent, spec.room_xyz);
        blocks.push(Block {
            grid: (bx, by),
            origin: [xs[bx], ys[by]],
            indices,
            points,
        });
    }
    Ok(blocks)
}

fn sample<R: Rng>(mut m: Vec<usize>, sampling: Sampling, rng: &mut R) -> Vec<usize> {
    match sampling {
        Sampling::All => m,
        Sampling::Fixed(s) if m.len() >= s => {
            let (chosen, _) = m.partial_shuffle(rng, s);
            chosen.to_vec()
        }
        Sampling::Fixed(s) => {
            m.shuffle(rng);
            let n = m.len();
            for _ in n..s {
                m.push(m[rng.random_range(0..n)]);
            }
            m
        }
    }
}

fn block_inputs(scene: &Scene, indices: &[usize], extent: [f64; 3], room_xyz: bool) -> Tensor {
    let k = if room_xyz { 9 } else { 6 };
    let mut min = [f64::INFINITY; 3];
    for &i in indices {
        let p = scene.xyz(i);
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
        }
    }
    let mut t = Tensor::zeros(indices.len(), k);
    for (r, &i) in indices.iter().enumerate() {
        let p = scene.point(i);
        let row = t.row_mut(r);
        for a in 0..3 {
            row[a] = p[a] as f64 - min[a];
            row[3 + a] = p[3 + a] as f64;
        }
        if room_xyz {
            for a in 0..3 {
                row[6 + a] = if extent[a] > 0.0 { p[a] as f64 / extent[a] } else { 0.0 };
            }
        }
    }
    t
}
