use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct MeanShiftConfig {
    pub bandwidth: f64,
    pub max_iters: usize,
    pub convergence_eps: f64,
    /// Modes closer than this are merged.
    pub merge_radius: f64,
    /// Above this many points, seeds come from a bandwidth grid instead of
    /// from every point.
    pub seed_limit: usize,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.6,
            max_iters: 100,
            convergence_eps: 1e-4,
            merge_radius: 0.3,
            seed_limit: 4096,
        }
    }
}

impl MeanShiftConfig {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            merge_radius: bandwidth / 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config("mean-shift bandwidth must be positive".into()));
        }
        if !(self.merge_radius > 0.0 && self.merge_radius <= self.bandwidth) {
            return Err(Error::Config("need 0 < merge_radius <= bandwidth".into()));
        }
        if self.max_iters == 0 || !(self.convergence_eps > 0.0) || self.seed_limit == 0 {
            return Err(Error::Config("mean-shift iteration settings must be positive".into()));
        }
        Ok(())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeds: every point, or for large inputs the mean of each occupied cell of
/// a bandwidth grid anchored at the per-dimension minimum.
fn seeds(x: &Tensor, cfg: &MeanShiftConfig) -> Vec<Vec<f64>> {
    let (p, d) = x.shape();
    if p <= cfg.seed_limit {
        return (0..p).map(|i| x.row(i).to_vec()).collect();
    }
    let min: Vec<f64> = (0..d)
        .map(|k| x.column(k).into_iter().fold(f64::INFINITY, f64::min))
        .collect();
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut sums: Vec<(Vec<f64>, usize)> = Vec::new();
    for i in 0..p {
        let row = x.row(i);
        let key: Vec<i64> = (0..d).map(|k| ((row[k] - min[k]) / cfg.bandwidth).floor() as i64).collect();
        let slot = *index.entry(key).or_insert_with(|| {
            sums.push((vec![0.0; d], 0));
            sums.len() - 1
        });
        sums[slot].0.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        sums[slot].1 += 1;
    }
    sums.into_iter()
        .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect()
}

/// Flat-kernel mean-shift. Returns dense cluster ids numbered by first
/// appearance in point order.
pub fn mean_shift(x: &Tensor, cfg: &MeanShiftConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let (p, d) = x.shape();
    if p == 0 {
        return Err(Error::usage("mean-shift on zero points"));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("mean-shift input".into()));
    }
    let bw2 = cfg.bandwidth * cfg.bandwidth;
    let eps2 = cfg.convergence_eps * cfg.convergence_eps;

    let mut modes: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut next = vec![0.0; d];
    // Mean of the points within the bandwidth of `m`, written to `next`.
    let step = |m: &[f64], next: &mut [f64]| -> usize {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut n = 0usize;
        for i in 0..p {
            let row = x.row(i);
            if dist2(row, m) <= bw2 {
                next.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                n += 1;
            }
        }
        if n > 0 {
            next.iter_mut().for_each(|v| *v /= n as f64);
        }
        n
    };
    for mut m in seeds(x, cfg) {
        let mut support = 0;
        let mut converged = false;
        for _ in 0..cfg.max_iters {
            support = step(&m, &mut next);
            if support == 0 {
                break;
            }
            let shift = dist2(&next, &m);
            m.copy_from_slice(&next);
            if shift < eps2 {
                converged = true;
                break;
            }
        }
        // One more step lands seeds that share a final neighbourhood on the
        // same bit pattern.
        if converged && step(&m, &mut next) > 0 {
            m.copy_from_slice(&next);
        }
        modes.push((m, support));
    }

    // Strongest modes first; exact ties fall back to coordinates so the
    // result does not depend on seed order.
    modes.sort_by(|a, b| {
        b.1.cmp(&a.1).then_with(|| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let r2 = cfg.merge_radius * cfg.merge_radius;
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (m, _) in modes {
        if kept.iter().all(|k| dist2(k, &m) >= r2) {
            kept.push(m);
        }
    }

    let mut relabel = vec![usize::MAX; kept.len()];
    let mut next_id = 0;
    let mut out = Vec::with_capacity(p);
    for i in 0..p {
        let row = x.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, m) in kept.iter().enumerate() {
            let dd = dist2(row, m);
            if dd < best_d {
                best_d = dd;
                best = k;
            }
        }
        if relabel[best] == usize::MAX {
            relabel[best] = next_id;
            next_id += 1;
        }
        out.push(relabel[best]);
    }
    Ok(out)
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::usage(format!("ARI on {} vs {} labels", a.len(), b.len())));
    }
    let n = a.len();
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |k: usize| (k * k.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&k| c2(k)).sum();
    let sa: f64 = ra.values().map(|&k| c2(k)).sum();
    let sb: f64 = rb.values().map(|&k| c2(k)).sum();
    let total = c2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn blobs(seed: u64) -> (Tensor, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let c = if i < 20 { 0.0 } else { 3.0 };
            for _ in 0..5 {
                data.push(c + rng.random_range(-0.01..0.01));
            }
            truth.push(i / 20);
        }
        (Tensor::new(40, 5, data).unwrap(), truth)
    }

    #[test]
    fn separable_blobs_are_recovered() {
        let (x, truth) = blobs(0);
        let ids = mean_shift(&x, &MeanShiftConfig::default()).unwrap();
        assert_eq!(ids.iter().max(), Some(&1));
        assert_eq!(adjusted_rand_index(&ids, &truth).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs_form_one_cluster() {
        let one = Tensor::from_rows(&[[0.3, 0.1]]).unwrap();
        assert_eq!(mean_shift(&one, &MeanShiftConfig::default()).unwrap(), vec![0]);
        let same = Tensor::new(10, 2, [0.5, -0.5].repeat(10)).unwrap();
        assert_eq!(mean_shift(&same, &MeanShiftConfig::default()).unwrap(), vec![0; 10]);
    }

    #[test]
    fn grid_seeding_matches_on_blobs() {
        let (x, truth) = blobs(1);
        let cfg = MeanShiftConfig {
            seed_limit: 8,
            ..MeanShiftConfig::default()
        };
        let ids = mean_shift(&x, &cfg).unwrap();
        assert_eq!(adjusted_rand_index(&ids, &truth).unwrap(), 1.0);
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        // Contingency [[1,1],[1,1]]: index 0, expected 0.5·... gives −0.5.
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn output_is_a_partition_invariant_to_translation_and_order(
            vals in prop::collection::vec(-2.0f64..2.0, 3..60),
            shift in -5.0f64..5.0,
            rot in 0usize..20,
        ) {
            let p = vals.len() / 3;
            prop_assume!(p >= 1);
            let x = Tensor::new(p, 3, vals[..3 * p].to_vec()).unwrap();
            let cfg = MeanShiftConfig::default();
            let ids = mean_shift(&x, &cfg).unwrap();
            prop_assert_eq!(ids.len(), p);
            let k = ids.iter().max().unwrap() + 1;
            for c in 0..k {
                prop_assert!(ids.contains(&c));
            }

            let moved = Tensor::new(p, 3, vals[..3 * p].iter().map(|v| v + shift).collect()).unwrap();
            let ids_moved = mean_shift(&moved, &cfg).unwrap();
            prop_assert_eq!(adjusted_rand_index(&ids, &ids_moved).unwrap(), 1.0);

            let order: Vec<usize> = (0..p).map(|i| (i + rot) % p).collect();
            let permuted = x.select_rows(&order);
            let ids_perm = mean_shift(&permuted, &cfg).unwrap();
            let back: Vec<usize> = {
                let mut b = vec![0; p];
                for (j, &i) in order.iter().enumerate() {
                    b[i] = ids_perm[j];
                }
                b
            };
            prop_assert_eq!(adjusted_rand_index(&ids, &back).unwrap(), 1.0);
        }
    }
}
