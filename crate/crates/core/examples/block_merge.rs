//! Stitches per-window instance predictions into room instances. Two long
//! objects run through three overlapping windows, so six window instances
//! become two room instances.

use mpnet::grouping::{assign_class, block_merge, BlockPrediction, MergeGrid};

fn main() -> mpnet::Result<()> {
    let mut pts = Vec::new();
    for i in 0..20 {
        for j in 0..10 {
            pts.push([0.05 + 0.1 * i as f64, 0.05 + 0.1 * j as f64, 0.0]);
        }
    }
    let mut blocks = Vec::new();
    for (col, x0) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let indices: Vec<usize> = (0..pts.len()).filter(|&i| pts[i][0] >= x0 && pts[i][0] < x0 + 1.0).collect();
        // Rows above y = 0.8 are the class-1 object, the rest class 2.
        let ids: Vec<usize> = indices.iter().map(|&i| usize::from(pts[i][1] < 0.8)).collect();
        let classes: Vec<usize> = ids.iter().map(|&k| 1 + k).collect();
        blocks.push(BlockPrediction {
            grid: (col, 0),
            prediction: assign_class(&ids, &classes, 3)?,
            indices,
        });
    }
    let merged = block_merge(&blocks, &pts, &MergeGrid::default())?;
    println!("{} windows -> {} room instances", blocks.len(), merged.num_instances());
    for (k, (c, n)) in merged.instance_classes.iter().zip(&merged.instance_sizes).enumerate() {
        println!("  instance {k}: class {c}, {n} points");
    }
    Ok(())
}
