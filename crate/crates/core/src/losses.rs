//! Training objectives: squashed classification, the discriminative instance
//! loss, the two memory regularisers, focal loss and their weighted sum.

use rand::Rng;

use crate::encoder::Dense;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// Relaxation margin of the semantic regulariser.
    pub margin: f64,
    pub sigma_v: f64,
    pub sigma_d: f64,
    /// Weight of the instance regulariser.
    pub lambda_ins: f64,
    /// Instance embedding width (c′).
    pub embed_dim: usize,
    pub focal_gamma: f64,
    pub use_squash: bool,
    /// Keep the squash under focal loss; off means focal loss reads a plain
    /// softmax.
    pub focal_on_squash: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 5.0,
            sigma_v: 0.5,
            sigma_d: 1.5,
            lambda_ins: 0.1,
            embed_dim: 5,
            focal_gamma: 2.0,
            use_squash: true,
            focal_on_squash: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v > 0.0 && self.sigma_d > self.sigma_v) {
            return Err(Error::Config("need sigma_d > sigma_v > 0".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if !(self.lambda_ins >= 0.0) {
            return Err(Error::Config("lambda_ins must be nonnegative".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::Config("focal_gamma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-point labels of one block with dense instance ids and the per-instance
/// coordinate means used as centroid targets.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    semantic: Vec<usize>,
    instance: Vec<usize>,
    num_instances: usize,
    centroids: Tensor,
}

impl LabeledBatch {
    /// `xyz` supplies the coordinates (first three columns are used).
    /// Instance ids are relabelled densely in order of first appearance.
    pub fn new(semantic: Vec<usize>, instance: &[usize], xyz: &Tensor) -> Result<Self> {
        let p = semantic.len();
        if p == 0 {
            return Err(Error::usage("labeled batch is empty"));
        }
        if instance.len() != p || xyz.rows() != p || xyz.cols() < 3 {
            return Err(Error::usage(format!(
                "labeled batch: {p} semantic labels, {} instance labels, coordinates {:?}",
                instance.len(),
                xyz.shape()
            )));
        }
        let mut remap = std::collections::HashMap::new();
        let dense: Vec<usize> = instance
            .iter()
            .map(|id| {
                let next = remap.len();
                *remap.entry(*id).or_insert(next)
            })
            .collect();
        let k = remap.len();
        let mut sums = Tensor::zeros(k, 3);
        let mut counts = vec![0usize; k];
        for (i, &id) in dense.iter().enumerate() {
            counts[id] += 1;
            for c in 0..3 {
                let v = sums.get(id, c) + xyz.get(i, c);
                sums.set(id, c, v);
            }
        }
        for (id, &n) in counts.iter().enumerate() {
            for c in 0..3 {
                let v = sums.get(id, c) / n as f64;
                sums.set(id, c, v);
            }
        }
        Ok(Self {
            semantic,
            instance: dense,
            num_instances: k,
            centroids: sums,
        })
    }

    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }

    pub fn semantic(&self) -> &[usize] {
        &self.semantic
    }

    pub fn instance(&self) -> &[usize] {
        &self.instance
    }

    pub fn num_instances(&self) -> usize {
        self.num_instances
    }

    pub fn centroids(&self) -> &Tensor {
        &self.centroids
    }
}

/// Classifier head followed by optional squashing, softmax and a focal
/// (γ = 0: cross-entropy) loss. Returns `(loss, probabilities)`.
pub fn squash_classify(
    g: &mut Graph,
    store: &ParamStore,
    f_seg: Var,
    fc: &Dense,
    labels: &[usize],
    use_squash: bool,
    gamma: f64,
) -> Result<(Var, Var)> {
    let p = class_probabilities(g, store, f_seg, fc, use_squash)?;
    let loss = focal_loss(g, p, labels, gamma)?;
    Ok((loss, p))
}

/// `softmax(squash(fc(f)))`, or `softmax(fc(f))` with squashing off.
pub fn class_probabilities(g: &mut Graph, store: &ParamStore, f_seg: Var, fc: &Dense, use_squash: bool) -> Result<Var> {
    let v = fc.forward(g, store, f_seg)?;
    let s = if use_squash { g.squash(v) } else { v };
    Ok(g.row_softmax(s))
}

/// Mean of `−(1 − p_y)^γ ln p_y` with `p_y` clamped to at least 1e-12.
pub fn focal_loss(g: &mut Graph, p: Var, labels: &[usize], gamma: f64) -> Result<Var> {
    g.focal(p, labels, gamma)
}

/// Pull/push hinge loss on embeddings `e` grouped by dense `instance` ids.
pub fn discriminative_loss(
    g: &mut Graph,
    e: Var,
    instance: &[usize],
    num_instances: usize,
    sigma_v: f64,
    sigma_d: f64,
) -> Result<Var> {
    if instance.is_empty() || num_instances == 0 {
        return Err(Error::usage("discriminative loss on an empty batch"));
    }
    let k = num_instances;
    let mu = g.segment_mean(e, instance, k)?;
    let mu_pt = g.gather_rows(mu, instance)?;
    let diff = g.sub(e, mu_pt)?;
    let dist = g.row_norm(diff);
    let slack = g.add_scalar(dist, -sigma_v);
    let hinge = g.relu(slack);
    let sq = g.square(hinge);
    let per_instance = g.segment_mean(sq, instance, k)?;
    let pull = g.mean(per_instance);
    if k == 1 {
        return Ok(pull);
    }
    let pair = g.row_dist(mu, mu)?;
    let neg = g.scale(pair, -1.0);
    let slack = g.add_scalar(neg, 2.0 * sigma_d);
    let hinge = g.relu(slack);
    let sq = g.square(hinge);
    let mut mask = Tensor::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                mask.set(i, j, 1.0);
            }
        }
    }
    let mask = g.input(mask);
    let off = g.mul(sq, mask)?;
    let total = g.sum(off);
    let push = g.scale(total, 1.0 / (k * (k - 1)) as f64);
    g.add(pull, push)
}

/// Two-layer centroid predictor `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidHead {
    hidden: Dense,
    out: Dense,
}

impl CentroidHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::new(store, "centroid.l1", in_dim, hidden, rng),
            out: Dense::new(store, "centroid.l2", hidden, 3, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let z = self.hidden.forward(g, store, x)?;
        let h = g.relu(z);
        self.out.forward(g, store, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.hidden, self.out].iter().flat_map(|d| d.params()).collect()
    }
}

/// Mean over instances of the mean squared distance between each point's
/// predicted centroid and its instance's true centroid.
pub fn instance_regularizer(
    g: &mut Graph,
    store: &ParamStore,
    f_ins: Var,
    head: &CentroidHead,
    batch: &LabeledBatch,
) -> Result<Var> {
    let pred = head.forward(g, store, f_ins)?;
    centroid_error(g, pred, batch)
}

/// The instance regulariser given already-predicted per-point centroids.
pub fn centroid_error(g: &mut Graph, pred: Var, batch: &LabeledBatch) -> Result<Var> {
    let gt = g.input(batch.centroids.clone());
    let gt = g.gather_rows(gt, &batch.instance)?;
    let diff = g.sub(pred, gt)?;
    let sq = g.square(diff);
    let per_point = g.row_sum(sq);
    let per_instance = g.segment_mean(per_point, &batch.instance, batch.num_instances)?;
    Ok(g.mean(per_instance))
}

/// Mean over points of `[‖f_i − c_y‖ − Σ_{j≠y} ‖f_i − c_j‖ + m]₊`.
pub fn semantic_regularizer(
    g: &mut Graph,
    f_seg: Var,
    summary: Var,
    labels: &[usize],
    margin: f64,
) -> Result<Var> {
    let d = g.row_dist(f_seg, summary)?;
    let own = g.pick(d, labels)?;
    let all = g.row_sum(d);
    let own2 = g.scale(own, 2.0);
    let rel = g.sub(own2, all)?;
    let slack = g.add_scalar(rel, margin);
    let term = g.relu(slack);
    Ok(g.mean(term))
}

/// The individual objective terms of one batch. Absent regularisers are
/// switched off by the ablation flags.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub classification: Var,
    pub discriminative: Var,
    pub semantic_reg: Option<Var>,
    pub instance_reg: Option<Var>,
}

/// `L = L_cls + L_dis + R_seg + λ·R_ins`.
pub fn total_objective(g: &mut Graph, terms: &LossTerms, lambda_ins: f64) -> Result<Var> {
    let mut total = g.add(terms.classification, terms.discriminative)?;
    if let Some(r) = terms.semantic_reg {
        total = g.add(total, r)?;
    }
    if let Some(r) = terms.instance_reg {
        let r = g.scale(r, lambda_ins);
        total = g.add(total, r)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::{finite_diff_check, GradCheckOptions};

    fn dis_value(e: &[[f64; 2]], ids: &[usize], k: usize) -> f64 {
        let mut g = Graph::new();
        let e = g.input(Tensor::from_rows(e).unwrap());
        let l = discriminative_loss(&mut g, e, ids, k, 0.5, 1.5).unwrap();
        g.value(l).item()
    }

    /// Direct double-loop evaluation of the pull/push loss.
    fn dis_oracle(e: &[Vec<f64>], ids: &[usize], k: usize, sv: f64, sd: f64) -> f64 {
        let d = e[0].len();
        let mut mu = vec![vec![0.0; d]; k];
        let mut n = vec![0.0; k];
        for (row, &id) in e.iter().zip(ids) {
            n[id] += 1.0;
            for c in 0..d {
                mu[id][c] += row[c];
            }
        }
        for id in 0..k {
            mu[id].iter_mut().for_each(|v| *v /= n[id]);
        }
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let mut pull = 0.0;
        for id in 0..k {
            let mut s = 0.0;
            for (row, &j) in e.iter().zip(ids) {
                if j == id {
                    s += (dist(row, &mu[id]) - sv).max(0.0).powi(2);
                }
            }
            pull += s / n[id];
        }
        pull /= k as f64;
        let mut push = 0.0;
        if k > 1 {
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        push += (2.0 * sd - dist(&mu[i], &mu[j])).max(0.0).powi(2);
                    }
                }
            }
            push /= (k * (k - 1)) as f64;
        }
        pull + push
    }

    #[test]
    fn discriminative_spot_values() {
        assert_eq!(dis_value(&[[0.3, 0.3]; 4], &[0, 0, 0, 0], 1), 0.0);
        assert_eq!(dis_value(&[[0.0, 0.0], [0.0, 0.1], [5.0, 0.0], [5.0, 0.1]], &[0, 0, 1, 1], 2), 0.0);
        // e = {0, 0} and {1, 1} in one dimension: pull 0, push (3 − 1)² = 4.
        assert_eq!(dis_value(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]], &[0, 0, 1, 1], 2), 4.0);
    }

    #[test]
    fn discriminative_rejects_empty() {
        let mut g = Graph::new();
        let e = g.input(Tensor::zeros(0, 2));
        assert!(discriminative_loss(&mut g, e, &[], 0, 0.5, 1.5).is_err());
    }

    #[test]
    fn semantic_regularizer_spot_values() {
        let eval = |f: &[[f64; 2]], c: &[[f64; 2]], y: &[usize]| {
            let mut g = Graph::new();
            let f = g.input(Tensor::from_rows(f).unwrap());
            let c = g.input(Tensor::from_rows(c).unwrap());
            let r = semantic_regularizer(&mut g, f, c, y, 5.0).unwrap();
            g.value(r).item()
        };
        // Own centroid at 1, others at 2 and 4: max(0, 1 − 6 + 5) = 0.
        assert_eq!(eval(&[[0.0, 0.0]], &[[1.0, 0.0], [0.0, 2.0], [-4.0, 0.0]], &[0]), 0.0);
        // Equidistant from two centroids: the margin.
        assert_eq!(eval(&[[0.0, 0.0]], &[[1.0, 0.0], [-1.0, 0.0]], &[1]), 5.0);
        // Sitting on the own centroid with a far neighbour.
        assert_eq!(eval(&[[1.0, 0.0]], &[[1.0, 0.0], [7.0, 0.0]], &[0]), 0.0);
    }

    #[test]
    fn squash_of_zero_gives_ln_c() {
        let mut store = ParamStore::new();
        let fc = Dense {
            weight: store.add("w", Tensor::zeros(3, 4)),
            bias: store.add("b", Tensor::zeros(1, 4)),
        };
        let mut g = Graph::new();
        let f = g.input(Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        let (l, p) = squash_classify(&mut g, &store, f, &fc, &[2], true, 0.0).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-15);
        assert!(g.value(p).data().iter().all(|v| *v == 0.25));
    }

    #[test]
    fn squash_off_is_plain_cross_entropy() {
        let mut store = ParamStore::new();
        let fc = Dense {
            weight: store.add("w", Tensor::identity(2)),
            bias: store.add("b", Tensor::zeros(1, 2)),
        };
        let mut g = Graph::new();
        let f = g.input(Tensor::from_rows(&[[1.0, 3.0], [0.5, -0.5]]).unwrap());
        let (l, _) = squash_classify(&mut g, &store, f, &fc, &[0, 0], false, 0.0).unwrap();
        let ce = |z: [f64; 2], y: usize| -(z[y] - (z[0].exp() + z[1].exp()).ln());
        let expected = (ce([1.0, 3.0], 0) + ce([0.5, -0.5], 0)) / 2.0;
        assert!((g.value(l).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn focal_spot_values() {
        let mut g = Graph::new();
        let p = g.input(Tensor::from_rows(&[[0.5, 0.5]]).unwrap());
        let f = focal_loss(&mut g, p, &[0], 2.0).unwrap();
        assert!((g.value(f).item() - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((g.value(f).item() - 0.1733).abs() < 1e-4);
        let p = g.input(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        let f = focal_loss(&mut g, p, &[0], 2.0).unwrap();
        assert_eq!(g.value(f).item(), 0.0);
    }

    #[test]
    fn instance_regularizer_values() {
        let xyz = Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let batch = LabeledBatch::new(vec![0], &[7], &xyz).unwrap();
        let mut g = Graph::new();
        let pred = g.input(Tensor::from_rows(&[[1.0, 3.0, 3.0]]).unwrap());
        let r = centroid_error(&mut g, pred, &batch).unwrap();
        assert_eq!(g.value(r).item(), 1.0);

        let pred = g.input(xyz.clone());
        let r = centroid_error(&mut g, pred, &batch).unwrap();
        assert_eq!(g.value(r).item(), 0.0);

        // Two instances of two points each against a double-loop oracle.
        let xyz = Tensor::from_rows(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 3.0, 1.0]]).unwrap();
        let ids = [4, 4, 9, 9];
        let batch = LabeledBatch::new(vec![0; 4], &ids, &xyz).unwrap();
        let outs = [[1.0, 0.5, 0.0], [0.0, 0.0, 0.0], [0.0, 2.0, 2.0], [1.0, 1.0, 1.0]];
        let pred = g.input(Tensor::from_rows(&outs).unwrap());
        let r = centroid_error(&mut g, pred, &batch).unwrap();
        let mut total = 0.0;
        for inst in [4, 9] {
            let members: Vec<usize> = (0..4).filter(|i| ids[*i] == inst).collect();
            let mut gt = [0.0; 3];
            for &i in &members {
                for c in 0..3 {
                    gt[c] += xyz.get(i, c) / members.len() as f64;
                }
            }
            let mut s = 0.0;
            for &i in &members {
                for c in 0..3 {
                    s += (outs[i][c] - gt[c]).powi(2);
                }
            }
            total += s / members.len() as f64;
        }
        assert!((g.value(r).item() - total / 2.0).abs() < 1e-15);
    }

    #[test]
    fn total_objective_combines_terms() {
        let mut g = Graph::new();
        let z = g.input(Tensor::scalar(0.0));
        let terms = LossTerms {
            classification: z,
            discriminative: z,
            semantic_reg: Some(z),
            instance_reg: Some(z),
        };
        let l = total_objective(&mut g, &terms, 0.1).unwrap();
        assert_eq!(g.value(l).item(), 0.0);

        let (a, b, c, d) = (g.input(Tensor::scalar(1.0)), g.input(Tensor::scalar(2.0)), g.input(Tensor::scalar(3.0)), g.input(Tensor::scalar(4.0)));
        let terms = LossTerms {
            classification: a,
            discriminative: b,
            semantic_reg: Some(c),
            instance_reg: Some(d),
        };
        let l = total_objective(&mut g, &terms, 0.1).unwrap();
        assert!((g.value(l).item() - 6.4).abs() < 1e-15);
    }

    #[test]
    fn zero_lambda_cuts_centroid_head_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let head = CentroidHead::new(&mut store, 4, 6, &mut rng);
        let x = store.add("x", Tensor::new(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let xyz = Tensor::new(5, 3, (0..15).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let batch = LabeledBatch::new(vec![0; 5], &[0, 0, 1, 1, 1], &xyz).unwrap();
        let mut g = Graph::new();
        let xv = g.param(&store, x);
        let r = instance_regularizer(&mut g, &store, xv, &head, &batch).unwrap();
        let sq = g.square(xv);
        let base = g.sum(sq);
        let terms = LossTerms {
            classification: base,
            discriminative: base,
            semantic_reg: None,
            instance_reg: Some(r),
        };
        let l = total_objective(&mut g, &terms, 0.0).unwrap();
        g.backward(l).unwrap();
        g.accumulate_into(&mut store, 1.0);
        for id in head.params() {
            assert!(store.get(id).tensor.grad().unwrap().iter().all(|v| *v == 0.0));
        }
        let gx = store.get(x).tensor.grad().unwrap();
        let xs = store.get(x).tensor.data();
        for (gv, xv) in gx.iter().zip(xs) {
            assert_eq!(*gv, 4.0 * xv);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let head = CentroidHead::new(&mut store, 4, 5, &mut rng);
        let fc = Dense::new(&mut store, "fc", 4, 3, &mut rng);
        let f = store.add("f", Tensor::new(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let c = store.add("c", Tensor::new(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let e = store.add("e", Tensor::new(6, 2, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let xyz = Tensor::new(6, 3, (0..18).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let labels = vec![0, 1, 2, 1, 0, 2];
        let batch = LabeledBatch::new(labels.clone(), &[3, 3, 5, 5, 8, 8], &xyz).unwrap();
        let report = finite_diff_check(&mut store, &GradCheckOptions::default(), |s, g| {
            let (fv, cv, ev) = (g.param(s, f), g.param(s, c), g.param(s, e));
            let (cls, _) = squash_classify(g, s, fv, &fc, &labels, true, 2.0)?;
            let dis = discriminative_loss(g, ev, batch.instance(), batch.num_instances(), 0.5, 1.5)?;
            let rs = semantic_regularizer(g, fv, cv, &labels, 5.0)?;
            let ri = instance_regularizer(g, s, fv, &head, &batch)?;
            let terms = LossTerms {
                classification: cls,
                discriminative: dis,
                semantic_reg: Some(rs),
                instance_reg: Some(ri),
            };
            total_objective(g, &terms, 0.1)
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    proptest! {
        #[test]
        fn discriminative_matches_oracle_and_is_translation_invariant(
            vals in prop::collection::vec(-2.0f64..2.0, 16),
            ids in prop::collection::vec(0usize..3, 8),
            shift in prop::collection::vec(-10.0f64..10.0, 2),
        ) {
            let mut dense = Vec::new();
            let mut seen: Vec<usize> = Vec::new();
            for id in &ids {
                let pos = seen.iter().position(|s| s == id).unwrap_or_else(|| { seen.push(*id); seen.len() - 1 });
                dense.push(pos);
            }
            let k = seen.len();
            let rows: Vec<Vec<f64>> = vals.chunks(2).map(|c| c.to_vec()).collect();
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + shift[0], r[1] + shift[1]]).collect();
            let run = |rows: &[Vec<f64>]| {
                let mut g = Graph::new();
                let e = g.input(Tensor::new(8, 2, rows.concat()).unwrap());
                let l = discriminative_loss(&mut g, e, &dense, k, 0.5, 1.5).unwrap();
                g.value(l).item()
            };
            let a = run(&rows);
            let b = run(&shifted);
            let o = dis_oracle(&rows, &dense, k, 0.5, 1.5);
            prop_assert!(a >= 0.0 && a.is_finite());
            prop_assert!((a - o).abs() <= 1e-9 * (1.0 + o));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn pushing_means_apart_never_raises_loss(
            gap in 0.0f64..3.0,
            extra in 0.0f64..1.0,
            spread in 0.0f64..1.0,
        ) {
            let at = |gap: f64| {
                let e = [[0.0, 0.0], [spread, 0.0], [gap, 0.0], [gap + spread, 0.0]];
                dis_value(&e, &[0, 0, 1, 1], 2)
            };
            prop_assert!(at(gap + extra) <= at(gap) + 1e-12);
        }

        #[test]
        fn semantic_term_vanishes_when_margin_met(
            f in prop::collection::vec(-3.0f64..3.0, 2),
            c in prop::collection::vec(-3.0f64..3.0, 6),
            y in 0usize..3,
        ) {
            let mut g = Graph::new();
            let fv = g.input(Tensor::new(1, 2, f.clone()).unwrap());
            let cv = g.input(Tensor::new(3, 2, c.clone()).unwrap());
            let r = semantic_regularizer(&mut g, fv, cv, &[y], 5.0).unwrap();
            let v = g.value(r).item();
            let d: Vec<f64> = (0..3).map(|j| ((f[0] - c[2 * j]).powi(2) + (f[1] - c[2 * j + 1]).powi(2)).sqrt()).collect();
            let others: f64 = (0..3).filter(|j| *j != y).map(|j| d[j]).sum();
            prop_assert!(v >= 0.0);
            if d[y] + 5.0 <= others {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
