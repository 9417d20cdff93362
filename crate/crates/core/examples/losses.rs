//! Evaluates each training loss on small hand-made inputs.

use mpnet::losses::{discriminative_loss, focal_loss, semantic_regularizer};
use mpnet::numerics::{Graph, Tensor};

fn main() -> mpnet::Result<()> {
    let mut g = Graph::new();

    // Two 1-D instances one unit apart: the push hinge (2 * 1.5 - 1)^2 fires.
    let e = g.input(Tensor::from_rows(&[[0.0], [0.0], [1.0], [1.0]])?);
    let dis = discriminative_loss(&mut g, e, &[0, 0, 1, 1], 2, 0.5, 1.5)?;
    println!("discriminative loss: {}", g.value(dis).item());

    // Own centroid at distance 1, the others at 2 and 4, margin 5.
    let f = g.input(Tensor::from_rows(&[[0.0, 0.0]])?);
    let c = g.input(Tensor::from_rows(&[[1.0, 0.0], [0.0, 2.0], [-4.0, 0.0]])?);
    let r = semantic_regularizer(&mut g, f, c, &[0], 5.0)?;
    println!("semantic margin regulariser: {}", g.value(r).item());

    let p = g.input(Tensor::from_rows(&[[0.5, 0.5], [0.9, 0.1], [0.2, 0.8]])?);
    for gamma in [0.0, 1.0, 2.0] {
        let l = focal_loss(&mut g, p, &[0, 0, 1], gamma)?;
        println!("focal loss, gamma {gamma}: {:.4}", g.value(l).item());
    }
    Ok(())
}
