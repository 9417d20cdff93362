//! Generates one synthetic room, prints its class balance and writes it as
//! a coloured PLY.

use std::path::PathBuf;

use mpnet::scenes::{generate_scene, write_ply, GeneratorConfig, CLASS_NAMES};

fn main() -> mpnet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = GeneratorConfig {
        seed,
        points_per_scene: 8000,
        ..GeneratorConfig::default()
    };
    let (scene, meta) = generate_scene(&cfg, None)?;
    let extent = scene.extent();
    println!(
        "room {:.2} x {:.2} x {:.2} m, {} points, {} instances, rare layout: {:?}",
        extent[0],
        extent[1],
        extent[2],
        scene.len(),
        scene.num_instances(),
        meta.rare
    );
    for (name, n) in CLASS_NAMES.iter().zip(scene.class_counts()) {
        println!("  {name:<8} {n:>6} points ({:.1}%)", 100.0 * n as f64 / scene.len() as f64);
    }
    let out = std::env::temp_dir().join(PathBuf::from(format!("room_{seed}.ply")));
    write_ply(&scene, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
