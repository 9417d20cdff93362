//! Reads a prototype memory with cosine attention: instance retrieval over
//! all slots and semantic retrieval over the per-class summary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mpnet::memory::{read_instance, read_semantic, MemoryConfig, PrototypeMemory};
use mpnet::numerics::{Graph, ParamStore, Tensor};

fn main() -> mpnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cfg = MemoryConfig {
        per_class_slots: 2,
        temperature: 0.1,
    };
    let mem = PrototypeMemory::new(&mut store, &cfg, 3, 4, &mut rng);
    println!("{} slots of width {}, slot classes {:?}", mem.num_slots(), mem.dim(), mem.slot_classes());

    let mut g = Graph::new();
    let m = mem.bind(&mut g, &store);
    // Query 0 is slot 4 itself, query 1 is slot 4 scaled: both address it.
    let slot = store.get(mem.param()).tensor.row(4).to_vec();
    let scaled: Vec<f64> = slot.iter().map(|v| 3.0 * v).collect();
    let q = g.input(Tensor::from_rows(&[slot, scaled, vec![1.0, 0.0, 0.0, 0.0]])?);
    let (w, _) = read_instance(&mut g, q, m, cfg.temperature)?;
    let c = mem.semantic_summary(&mut g, m)?;
    let (alpha, f_seg) = read_semantic(&mut g, q, c, cfg.temperature)?;

    for i in 0..3 {
        let row: Vec<String> = g.value(w).row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("query {i}: slot weights [{}]", row.join(", "));
        let a: Vec<String> = g.value(alpha).row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("         class weights [{}], retrieved {:.3?}", a.join(", "), g.value(f_seg).row(i));
    }
    Ok(())
}
