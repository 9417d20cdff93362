//! Clusters three embedding blobs with flat-kernel mean-shift and scores the
//! result against the truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpnet::grouping::{adjusted_rand_index, mean_shift, MeanShiftConfig};
use mpnet::numerics::Tensor;

fn main() -> mpnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let centres = [[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 3.0, 1.0]];
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for i in 0..150 {
        let c = i % 3;
        for x in centres[c] {
            data.push(x + rng.random_range(-0.3..0.3));
        }
        truth.push(c);
    }
    let x = Tensor::new(150, 3, data)?;
    for bandwidth in [0.3, 0.6, 1.2, 4.0] {
        let ids = mean_shift(&x, &MeanShiftConfig::with_bandwidth(bandwidth))?;
        let k = ids.iter().max().map_or(0, |m| m + 1);
        println!("bandwidth {bandwidth}: {k} clusters, ARI {:.3}", adjusted_rand_index(&ids, &truth)?);
    }
    Ok(())
}
