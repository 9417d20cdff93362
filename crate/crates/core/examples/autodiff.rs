//! Builds a tiny graph, runs backward, and checks the gradient against
//! central differences.

use mpnet::numerics::{analytic_gradients, finite_diff_check, GradCheckOptions, ParamStore, Tensor};

fn main() -> mpnet::Result<()> {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_rows(&[[0.5, -1.0], [2.0, 0.25]])?);
    let x = Tensor::from_rows(&[[1.0, 2.0], [-0.5, 0.3], [0.7, 0.7]])?;

    // loss = sum(softmax(x W)^2)
    let mut f = |s: &ParamStore, g: &mut mpnet::numerics::Graph| {
        let xv = g.input(x.clone());
        let wv = g.param(s, w);
        let z = g.matmul(xv, wv)?;
        let p = g.row_softmax(z);
        let sq = g.square(p);
        Ok(g.sum(sq))
    };
    let (value, grads) = analytic_gradients(&store, &mut f)?;
    println!("loss = {value:.6}");
    println!("dL/dW = {:?}", grads[w.index()]);

    let report = finite_diff_check(&mut store, &GradCheckOptions::default(), f)?;
    println!("max relative error {:.2e} over {} entries", report.max_rel_err, report.checked);
    Ok(())
}
