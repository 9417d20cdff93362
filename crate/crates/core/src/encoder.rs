//! Shared per-point encoder and the two branch decoders.
//!
//! The encoder is a point-wise MLP whose output is concatenated with a
//! max-pooled feature of the point's grid cell and a max-pooled feature of
//! the whole batch, then projected to the shared width. Both pools are
//! symmetric functions of the points, so the encoder is equivariant to row
//! permutations.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Per-point input width: xyz + rgb, plus room-normalised xyz when
    /// `room_xyz` is set.
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Width of the shared feature handed to both decoders.
    pub shared_dim: usize,
    /// Width of the branch features, which must match the memory width.
    pub feature_dim: usize,
    /// Edge length of the pooling grid cells, in metres.
    pub grid_cell: f64,
    pub room_xyz: bool,
    /// Subtract the batch mean from each branch feature.
    pub center_features: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 6,
            hidden_widths: vec![32, 64],
            shared_dim: 64,
            feature_dim: 32,
            grid_cell: 0.25,
            room_xyz: false,
            center_features: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let expected = if self.room_xyz { 9 } else { 6 };
        if self.input_dim != expected {
            return Err(Error::Config(format!(
                "encoder input_dim {} does not match room_xyz={} (expected {expected})",
                self.input_dim, self.room_xyz
            )));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config("encoder hidden widths must be nonempty and positive".into()));
        }
        if self.shared_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(self.grid_cell > 0.0) {
            return Err(Error::Config("grid cell must be positive".into()));
        }
        Ok(())
    }
}

/// Input points of one block, with the pooling-cell assignment precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PointBatch {
    points: Tensor,
    cell_ids: Vec<usize>,
    num_cells: usize,
}

impl PointBatch {
    /// `points` is P×K with block-normalised xyz in the first three columns.
    pub fn new(points: Tensor, grid_cell: f64) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::usage("point batch is empty"));
        }
        if points.cols() < 3 {
            return Err(Error::usage("point batch needs xyz columns"));
        }
        if !points.is_finite() {
            return Err(Error::NonFinite("point batch contains NaN or inf".into()));
        }
        let keys: Vec<[i64; 3]> = (0..points.rows())
            .map(|i| {
                let r = points.row(i);
                [0, 1, 2].map(|k| (r[k] / grid_cell).floor() as i64)
            })
            .collect();
        // Sorted cell keys make the ids independent of point order.
        let mut index = BTreeMap::new();
        for k in &keys {
            index.entry(*k).or_insert(0usize);
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let cell_ids = keys.iter().map(|k| index[k]).collect();
        Ok(Self {
            points,
            cell_ids,
            num_cells: index.len(),
        })
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn cell_ids(&self) -> &[usize] {
        &self.cell_ids
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }
}

/// A fully connected per-point layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.w"), glorot_uniform(rng, fan_in, fan_out));
        let bias = store.add(format!("{name}.b"), Tensor::zeros(1, fan_out));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.affine(x, w, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    layers: Vec<Dense>,
    proj: Dense,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut R) -> Self {
        let mut layers = Vec::new();
        let mut width = cfg.input_dim;
        for (i, &w) in cfg.hidden_widths.iter().enumerate() {
            layers.push(Dense::new(store, &format!("encoder.mlp{i}"), width, w, rng));
            width = w;
        }
        let proj = Dense::new(store, "encoder.proj", 3 * width, cfg.shared_dim, rng);
        Self { layers, proj }
    }

    /// Shared P×H features for one batch; rows follow the input order.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, batch: &PointBatch) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::usage("encode: empty batch"));
        }
        let mut h = g.input(batch.points.clone());
        for layer in &self.layers {
            let z = layer.forward(g, store, h)?;
            h = g.relu(z);
        }
        let cell = g.segment_max(h, &batch.cell_ids, batch.num_cells)?;
        let cell = g.gather_rows(cell, &batch.cell_ids)?;
        let zeros = vec![0usize; batch.len()];
        let global = g.segment_max(h, &zeros, 1)?;
        let global = g.gather_rows(global, &zeros)?;
        let cat = g.concat_cols(&[h, cell, global])?;
        let z = self.proj.forward(g, store, cat)?;
        Ok(g.relu(z))
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.proj))
            .flat_map(|d| d.params())
            .collect()
    }
}

/// Two-layer per-point MLP producing a branch feature, optionally centred
/// on the batch mean.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    hidden: Dense,
    out: Dense,
    center: bool,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cfg: &EncoderConfig,
        rng: &mut R,
    ) -> Self {
        let hidden = Dense::new(store, &format!("{name}.l1"), cfg.shared_dim, cfg.feature_dim, rng);
        let out = Dense::new(store, &format!("{name}.l2"), cfg.feature_dim, cfg.feature_dim, rng);
        Self {
            hidden,
            out,
            center: cfg.center_features,
        }
    }

    pub fn decode(&self, g: &mut Graph, store: &ParamStore, shared: Var) -> Result<Var> {
        let z = self.hidden.forward(g, store, shared)?;
        let h = g.relu(z);
        let f = self.out.forward(g, store, h)?;
        if !self.center {
            return Ok(f);
        }
        let rows = vec![0usize; g.value(f).rows()];
        let mean = g.segment_mean(f, &rows, 1)?;
        let mean = g.gather_rows(mean, &rows)?;
        g.sub(f, mean)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.hidden, self.out].iter().flat_map(|d| d.params()).collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::{finite_diff_check, GradCheckOptions};

    fn random_batch(rng: &mut ChaCha8Rng, p: usize) -> PointBatch {
        let data = (0..p * 6).map(|_| rng.random_range(0.0..1.0)).collect();
        PointBatch::new(Tensor::new(p, 6, data).unwrap(), 0.25).unwrap()
    }

    fn setup(cfg: &EncoderConfig) -> (ParamStore, Encoder, Decoder, Decoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, cfg, &mut rng);
        let seg = Decoder::new(&mut store, "dec_seg", cfg, &mut rng);
        let ins = Decoder::new(&mut store, "dec_ins", cfg, &mut rng);
        (store, enc, seg, ins)
    }

    #[test]
    fn permuting_rows_permutes_output() {
        let cfg = EncoderConfig::default();
        let (store, enc, _, _) = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&mut rng, 40);
        let perm: Vec<usize> = (0..40).map(|i| (i * 7 + 3) % 40).collect();
        let permuted = PointBatch::new(batch.points().select_rows(&perm), 0.25).unwrap();

        let mut g = Graph::new();
        let a = enc.encode(&mut g, &store, &batch).unwrap();
        let b = enc.encode(&mut g, &store, &permuted).unwrap();
        let a = g.value(a).select_rows(&perm);
        assert_eq!(&a.data(), &g.value(b).data());
    }

    #[test]
    fn single_point_pools_equal_own_feature() {
        let cfg = EncoderConfig::default();
        let (store, enc, _, _) = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(&mut rng, 1);
        let mut g = Graph::new();
        let out = enc.encode(&mut g, &store, &batch).unwrap();
        assert_eq!(g.shape(out), (1, cfg.shared_dim));
        // Recompute by hand: the concatenation is [h, h, h].
        let mut h = batch.points().data().to_vec();
        for layer in &enc.layers {
            let w = &store.get(layer.weight).tensor;
            let b = &store.get(layer.bias).tensor;
            h = (0..w.cols())
                .map(|j| (h.iter().enumerate().map(|(k, x)| x * w.get(k, j)).sum::<f64>() + b.data()[j]).max(0.0))
                .collect();
        }
        let cat: Vec<f64> = h.iter().chain(&h).chain(&h).copied().collect();
        let w = &store.get(enc.proj.weight).tensor;
        for j in 0..cfg.shared_dim {
            let v = (cat.iter().enumerate().map(|(k, x)| x * w.get(k, j)).sum::<f64>()).max(0.0);
            assert!((v - g.value(out).get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            PointBatch::new(Tensor::zeros(0, 6), 0.25),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn decoders_shapes_zeroing_and_independence() {
        let cfg = EncoderConfig::default();
        let (mut store, enc, seg, ins) = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = random_batch(&mut rng, 12);

        let run = |store: &ParamStore| {
            let mut g = Graph::new();
            let shared = enc.encode(&mut g, store, &batch).unwrap();
            let fs = seg.decode(&mut g, store, shared).unwrap();
            let fi = ins.decode(&mut g, store, shared).unwrap();
            (g.value(fs).clone(), g.value(fi).clone())
        };
        let (fs, fi) = run(&store);
        assert_eq!(fs.shape(), (12, cfg.feature_dim));
        assert_eq!(fi.shape(), (12, cfg.feature_dim));

        // Perturbing the semantic decoder leaves the instance branch untouched.
        for id in seg.params() {
            store.get_mut(id).tensor.data_mut()[0] += 0.37;
        }
        let (fs2, fi2) = run(&store);
        assert_ne!(fs, fs2);
        assert_eq!(fi, fi2);

        for id in seg.params() {
            store.get_mut(id).tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (fs3, _) = run(&store);
        assert!(fs3.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let cfg = EncoderConfig {
            hidden_widths: vec![8, 12],
            shared_dim: 10,
            feature_dim: 6,
            ..Default::default()
        };
        let (mut store, enc, seg, _) = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = random_batch(&mut rng, 16);
        let weights = Tensor::new(16, 6, (0..96).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let report = finite_diff_check(&mut store, &GradCheckOptions::default(), |s, g| {
            let shared = enc.encode(g, s, &batch)?;
            let f = seg.decode(g, s, shared)?;
            let w = g.input(weights.clone());
            let sq = g.square(f);
            let prod = g.mul(sq, w)?;
            Ok(g.sum(prod))
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.kinks * 100 <= report.checked, "{report:?}");
    }

    #[test]
    fn outputs_are_bit_reproducible() {
        let cfg = EncoderConfig::default();
        let (s1, e1, _, _) = setup(&cfg);
        let (s2, e2, _, _) = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = random_batch(&mut rng, 20);
        let mut g = Graph::new();
        let a = e1.encode(&mut g, &s1, &batch).unwrap();
        let b = e2.encode(&mut g, &s2, &batch).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }
}
