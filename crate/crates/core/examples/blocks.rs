//! Cuts a room into overlapping 1 m windows and reports what each holds.

use mpnet::scenes::{blockify, generate_scene, BlockSpec, GeneratorConfig, Sampling};

fn main() -> mpnet::Result<()> {
    let cfg = GeneratorConfig {
        seed: 3,
        points_per_scene: 6000,
        ..GeneratorConfig::default()
    };
    let (scene, _) = generate_scene(&cfg, None)?;
    let spec = BlockSpec {
        sampling: Sampling::Fixed(256),
        ..BlockSpec::default()
    };
    let blocks = blockify(&scene, &spec, 0)?;
    println!("{} windows over a {:.2} x {:.2} m room", blocks.len(), scene.extent()[0], scene.extent()[1]);
    for b in blocks.iter().take(8) {
        let mut classes: Vec<u16> = b.indices.iter().map(|&i| scene.semantic()[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        println!(
            "  grid {:?} origin ({:.1}, {:.1}): {} points, classes {classes:?}",
            b.grid,
            b.origin[0],
            b.origin[1],
            b.points.rows()
        );
    }
    Ok(())
}
