//! Stitching per-block instances into scene instances.
//!
//! Blocks are visited in snake order over the block grid. Each instance of
//! an incoming block is compared with every instance of each earlier block
//! on the voxels the two blocks share; a same-class pair whose overlap ratio
//! on that shared region reaches the threshold is linked, and linked
//! instances form one scene instance. A point takes the scene instance of
//! the first block, in visiting order, that contains it.

use std::collections::{HashMap, HashSet};

use super::InstancePrediction;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MergeGrid {
    /// Voxel edge length in metres.
    pub voxel: f64,
    pub iou_threshold: f64,
}

impl Default for MergeGrid {
    fn default() -> Self {
        Self {
            voxel: 0.05,
            iou_threshold: 0.3,
        }
    }
}

/// One block's prediction. Row `r` of `prediction` belongs to scene point
/// `indices[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPrediction {
    pub grid: (usize, usize),
    pub indices: Vec<usize>,
    pub prediction: InstancePrediction,
}

/// Boustrophedon order: columns left to right, rows alternating direction.
pub fn snake_order(grids: &[(usize, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grids.len()).collect();
    order.sort_by_key(|&i| {
        let (x, y) = grids[i];
        let y = if x % 2 == 0 { y as i64 } else { -(y as i64) };
        (x, y)
    });
    order
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// The smaller index stays the root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

type Voxel = (i64, i64, i64);

/// Merges block predictions over a scene with the given point coordinates.
pub fn block_merge(blocks: &[BlockPrediction], points: &[[f64; 3]], grid: &MergeGrid) -> Result<InstancePrediction> {
    if blocks.is_empty() {
        return Err(Error::usage("block_merge: no blocks"));
    }
    if !(grid.voxel > 0.0) {
        return Err(Error::Config("merge voxel size must be positive".into()));
    }
    let mut seen = HashSet::new();
    for b in blocks {
        if !seen.insert(b.grid) {
            return Err(Error::usage(format!("two blocks claim grid position {:?}", b.grid)));
        }
        if b.indices.len() != b.prediction.len() {
            return Err(Error::usage(format!(
                "block {:?}: {} indices for {} predictions",
                b.grid,
                b.indices.len(),
                b.prediction.len()
            )));
        }
        if let Some(i) = b.indices.iter().find(|i| **i >= points.len()) {
            return Err(Error::usage(format!("block {:?} refers to point {i} of {}", b.grid, points.len())));
        }
        b.prediction.validate(usize::MAX)?;
    }

    let voxel_of = |i: usize| -> Voxel {
        let p = points[i];
        let f = |v: f64| (v / grid.voxel).floor() as i64;
        (f(p[0]), f(p[1]), f(p[2]))
    };

    let grids: Vec<(usize, usize)> = blocks.iter().map(|b| b.grid).collect();
    let order = snake_order(&grids);

    // Node = one block-local instance, numbered in visiting order.
    let mut node_base = Vec::with_capacity(blocks.len());
    let mut node_class = Vec::new();
    let mut node_weight = Vec::new();
    let mut voxel_maps: Vec<HashMap<Voxel, Vec<usize>>> = Vec::with_capacity(blocks.len());
    let mut uf = UnionFind { parent: Vec::new() };

    for &b in &order {
        let block = &blocks[b];
        let base = node_class.len();
        node_base.push(base);
        for (c, (&class, &size)) in block
            .prediction
            .instance_classes
            .iter()
            .zip(&block.prediction.instance_sizes)
            .enumerate()
        {
            node_class.push(class);
            node_weight.push((block.prediction.confidences[c], size));
            uf.parent.push(base + c);
        }

        let mut map: HashMap<Voxel, Vec<usize>> = HashMap::new();
        for (&i, &l) in block.indices.iter().zip(&block.prediction.point_instance_ids) {
            let ids = map.entry(voxel_of(i)).or_default();
            if !ids.contains(&l) {
                ids.push(l);
            }
        }

        for (prev_pos, prev) in voxel_maps.iter().enumerate() {
            let prev_base = node_base[prev_pos];
            let mut inter: HashMap<(usize, usize), usize> = HashMap::new();
            let mut here = HashMap::<usize, usize>::new();
            let mut there = HashMap::<usize, usize>::new();
            for (v, ls) in &map {
                let Some(qs) = prev.get(v) else { continue };
                for &l in ls {
                    *here.entry(l).or_default() += 1;
                    for &q in qs {
                        *inter.entry((l, q)).or_default() += 1;
                    }
                }
                for &q in qs {
                    *there.entry(q).or_default() += 1;
                }
            }
            let mut pairs: Vec<((usize, usize), usize)> = inter.into_iter().collect();
            pairs.sort_unstable();
            for ((l, q), n) in pairs {
                let (a, c) = (base + l, prev_base + q);
                if node_class[a] != node_class[c] {
                    continue;
                }
                let union = here[&l] + there[&q] - n;
                if n as f64 / union as f64 >= grid.iou_threshold {
                    uf.union(a, c);
                }
            }
        }
        voxel_maps.push(map);
    }

    let mut owner: Vec<Option<usize>> = vec![None; points.len()];
    for (pos, &b) in order.iter().enumerate() {
        let block = &blocks[b];
        for (&i, &l) in block.indices.iter().zip(&block.prediction.point_instance_ids) {
            if owner[i].is_none() {
                owner[i] = Some(node_base[pos] + l);
            }
        }
    }
    if let Some(i) = owner.iter().position(Option::is_none) {
        return Err(Error::usage(format!("point {i} is not covered by any block")));
    }

    // Compact used components, ordered by their earliest node.
    let roots: Vec<usize> = (0..node_class.len()).map(|n| uf.find(n)).collect();
    let mut used = vec![false; node_class.len()];
    for o in owner.iter().flatten() {
        used[roots[*o]] = true;
    }
    let mut compact = vec![usize::MAX; node_class.len()];
    let mut k = 0;
    for r in 0..node_class.len() {
        if used[r] {
            compact[r] = k;
            k += 1;
        }
    }
    let mut out = InstancePrediction {
        point_instance_ids: owner.iter().map(|o| compact[roots[o.unwrap()]]).collect(),
        instance_classes: vec![0; k],
        instance_sizes: vec![0; k],
        confidences: vec![0.0; k],
    };
    let mut conf_mass = vec![(0.0, 0usize); k];
    for n in 0..node_class.len() {
        let id = compact[roots[n]];
        if id == usize::MAX {
            continue;
        }
        if roots[n] == n {
            out.instance_classes[id] = node_class[n];
        }
        let (c, s) = node_weight[n];
        conf_mass[id].0 += c * s as f64;
        conf_mass[id].1 += s;
    }
    for &id in &out.point_instance_ids {
        out.instance_sizes[id] += 1;
    }
    for (id, (m, s)) in conf_mass.into_iter().enumerate() {
        out.confidences[id] = if s > 0 { m / s as f64 } else { 0.0 };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::grouping::assign_class;

    fn pred(ids: &[usize], classes: &[usize]) -> InstancePrediction {
        assign_class(ids, classes, 4).unwrap()
    }

    /// A 2 m × 1 m strip of points on a 0.1 m lattice.
    fn strip() -> Vec<[f64; 3]> {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..10 {
                pts.push([0.05 + 0.1 * i as f64, 0.05 + 0.1 * j as f64, 0.0]);
            }
        }
        pts
    }

    fn in_window(p: &[f64; 3], x0: f64) -> bool {
        p[0] >= x0 && p[0] < x0 + 1.0
    }

    #[test]
    fn snake_order_alternates() {
        let grids = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)];
        let order = snake_order(&grids);
        let visited: Vec<_> = order.iter().map(|&i| grids[i]).collect();
        assert_eq!(visited, vec![(0, 0), (0, 1), (1, 1), (1, 0), (2, 0), (2, 1)]);
    }

    #[test]
    fn single_block_is_unchanged() {
        let pts = strip();
        let ids: Vec<usize> = (0..pts.len()).map(|i| (i / 37) % 3).collect();
        let classes: Vec<usize> = ids.iter().map(|i| i % 2).collect();
        let p = pred(&ids, &classes);
        let block = BlockPrediction {
            grid: (0, 0),
            indices: (0..pts.len()).collect(),
            prediction: p.clone(),
        };
        assert_eq!(block_merge(&[block], &pts, &MergeGrid::default()).unwrap(), p);
    }

    #[test]
    fn shared_object_across_two_blocks_merges() {
        // One object fills the whole strip; each window sees part of it and
        // neighbouring windows agree on their overlap.
        let pts = strip();
        let mut blocks = Vec::new();
        for (g, x0) in [(0usize, 0.0), (1, 0.5), (2, 1.0)] {
            let indices: Vec<usize> = (0..pts.len()).filter(|i| in_window(&pts[*i], x0)).collect();
            let n = indices.len();
            blocks.push(BlockPrediction {
                grid: (g, 0),
                indices,
                prediction: pred(&vec![0; n], &vec![1; n]),
            });
        }
        let merged = block_merge(&blocks, &pts, &MergeGrid::default()).unwrap();
        assert_eq!(merged.num_instances(), 1);
        assert_eq!(merged.instance_sizes, vec![pts.len()]);
    }

    #[test]
    fn disjoint_objects_add_up() {
        let pts = strip();
        let left: Vec<usize> = (0..pts.len()).filter(|i| pts[*i][0] < 1.0).collect();
        let right: Vec<usize> = (0..pts.len()).filter(|i| pts[*i][0] >= 1.0).collect();
        let two: Vec<usize> = left.iter().map(|i| usize::from(pts[*i][1] > 0.5)).collect();
        let three: Vec<usize> = right.iter().map(|i| (pts[*i][1] * 2.99) as usize).collect();
        let blocks = vec![
            BlockPrediction { grid: (0, 0), prediction: pred(&two, &vec![0; left.len()]), indices: left },
            BlockPrediction { grid: (2, 0), prediction: pred(&three, &vec![0; right.len()]), indices: right },
        ];
        let merged = block_merge(&blocks, &pts, &MergeGrid::default()).unwrap();
        assert_eq!(merged.num_instances(), 5);
    }

    #[test]
    fn missing_metadata_is_a_usage_error() {
        let pts = strip();
        let block = BlockPrediction {
            grid: (0, 0),
            indices: vec![0, 1],
            prediction: pred(&[0], &[0]),
        };
        assert!(matches!(block_merge(&[block], &pts, &MergeGrid::default()), Err(Error::Usage(_))));
        let a = BlockPrediction { grid: (0, 0), indices: (0..pts.len()).collect(), prediction: pred(&vec![0; pts.len()], &vec![0; pts.len()]) };
        assert!(block_merge(&[a.clone(), a], &pts, &MergeGrid::default()).is_err());
        let partial = BlockPrediction { grid: (0, 0), indices: vec![0], prediction: pred(&[0], &[0]) };
        assert!(block_merge(&[partial], &pts, &MergeGrid::default()).is_err());
    }

    fn random_blocks(labels: &[Vec<usize>], pts: &[[f64; 3]]) -> Vec<BlockPrediction> {
        let windows = [0.0, 0.5, 1.0];
        windows
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(g, (&x0, labels))| {
                let indices: Vec<usize> = (0..pts.len()).filter(|i| in_window(&pts[*i], x0)).collect();
                let raw: Vec<usize> = indices.iter().map(|i| labels[*i] % 4).collect();
                // Dense ids by first appearance.
                let mut map = HashMap::new();
                let ids: Vec<usize> = raw
                    .iter()
                    .map(|r| {
                        let n = map.len();
                        *map.entry(*r).or_insert(n)
                    })
                    .collect();
                let classes: Vec<usize> = raw.iter().map(|r| r % 2).collect();
                BlockPrediction { grid: (g, 0), indices, prediction: pred(&ids, &classes) }
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn merge_preserves_points_and_is_monotone_in_threshold(
            labels in prop::collection::vec(prop::collection::vec(0usize..8, 200), 3),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let pts = strip();
            let blocks = random_blocks(&labels, &pts);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = block_merge(&blocks, &pts, &MergeGrid { iou_threshold: lo, ..MergeGrid::default() }).unwrap();
            let b = block_merge(&blocks, &pts, &MergeGrid { iou_threshold: hi, ..MergeGrid::default() }).unwrap();
            prop_assert_eq!(a.len(), pts.len());
            prop_assert_eq!(a.instance_sizes.iter().sum::<usize>(), pts.len());
            a.validate(4).unwrap();
            b.validate(4).unwrap();
            prop_assert!(b.num_instances() >= a.num_instances());
        }
    }
}
