use std::fs;
use std::path::Path;
use std::process::Command;

use mpnet::cli::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_infer, cmd_inspect_memory, cmd_train, generate_split, read_weight_ply,
    Checkpoint, Dataset, RunConfig, Split, CHECKPOINT_FILE, CONFIG_FILE, METRICS_LOG, VERSION_FILE,
};
use mpnet::pipeline::addressing_rows;
use mpnet::scenes::read_scene;

const TINY: &str = "
gen.train_scenes = 3
gen.test_scenes = 2
gen.points_per_scene = 1200
block.samples = 64
block.min_points = 20
train.epochs = 2
train.batch_size = 4
train.blocks_per_scene = 4
model.hidden_widths = 8
model.shared_dim = 8
model.feature_dim = 8
model.per_class_slots = 2
shift.seed_limit = 64
ablate.configs = baseline,full
ablate.seeds = 0,1
";

fn tiny() -> RunConfig {
    RunConfig::parse(TINY).unwrap()
}

fn dataset(dir: &Path) -> RunConfig {
    let cfg = tiny();
    cmd_gen_data(&cfg, dir).unwrap();
    cfg
}

#[test]
fn gen_data_is_deterministic_and_tags_rare_rooms() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = dataset(&a);
    dataset(&b);
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.join("manifest.txt")).unwrap());
    let ds = Dataset::open(&a).unwrap();
    assert_eq!(ds.entries.len(), 5);
    for e in &ds.entries {
        assert_eq!(fs::read(a.join(&e.file)).unwrap(), fs::read(b.join(&e.file)).unwrap());
    }
    for split in [Split::Train, Split::Test] {
        let generated = generate_split(&cfg, split).unwrap();
        let listed: Vec<_> = ds.entries.iter().filter(|e| e.split == split).collect();
        for ((scene, meta, seed), e) in generated.iter().zip(listed) {
            assert_eq!(meta.rare, e.rare);
            assert_eq!(*seed, e.seed);
            assert_eq!(&read_scene(&a.join(&e.file)).unwrap(), scene);
        }
    }
    assert!(a.join(CONFIG_FILE).exists() && a.join(VERSION_FILE).exists());
}

#[test]
fn default_config_makes_forty_and_ten() {
    let cfg = RunConfig::default();
    assert_eq!((cfg.train_scenes, cfg.test_scenes), (40, 10));
}

#[test]
fn train_eval_resume_and_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = dataset(&data);

    let run1 = tmp.path().join("run1");
    let run2 = tmp.path().join("run2");
    let t1 = cmd_train(&cfg, &data, &run1, None).unwrap();
    cmd_train(&cfg, &data, &run2, None).unwrap();
    let log1 = fs::read_to_string(run1.join(METRICS_LOG)).unwrap();
    assert_eq!(log1, fs::read_to_string(run2.join(METRICS_LOG)).unwrap());
    assert_eq!(log1.lines().count(), 2);
    assert!(log1.contains("loss.instance_reg=") && log1.contains("loss.semantic_reg="));
    let written = fs::read_to_string(run1.join(CONFIG_FILE)).unwrap();
    assert_eq!(RunConfig::parse(&written).unwrap(), cfg);

    // Resuming a one-epoch run reproduces the two-epoch run exactly.
    let short = RunConfig {
        train: mpnet::training::TrainConfig { epochs: 1, ..cfg.train.clone() },
        ..cfg.clone()
    };
    let half = tmp.path().join("half");
    cmd_train(&short, &data, &half, None).unwrap();
    let ck = Checkpoint::load(&half.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.epoch, 1);
    let steps = ck.params[0].step_count();
    let resumed = cmd_train(&cfg, &data, &half, Some(&half.join(CHECKPOINT_FILE))).unwrap();
    assert_eq!(resumed.logs.len(), 1);
    assert!(resumed.model.store().iter().all(|p| p.step_count() > steps));
    assert_eq!(fs::read_to_string(half.join(METRICS_LOG)).unwrap(), log1);
    assert_eq!(
        Checkpoint::load(&half.join(CHECKPOINT_FILE)).unwrap(),
        Checkpoint::load(&run1.join(CHECKPOINT_FILE)).unwrap()
    );

    let ck_path = run1.join(CHECKPOINT_FILE);
    let e1 = cmd_eval(&cfg, &ck_path, &data, Split::Test, &tmp.path().join("e1")).unwrap();
    let e2 = cmd_eval(&cfg, &ck_path, &data, Split::Test, &tmp.path().join("e2")).unwrap();
    assert_eq!(e1, e2);
    let text = fs::read_to_string(tmp.path().join("e1").join(METRICS_LOG)).unwrap();
    for key in ["oacc", "macc", "miou", "mcov", "mwcov", "mprec", "mrec"] {
        let line = text.lines().find(|l| l.starts_with(&format!("all.{key}="))).unwrap();
        let v: f64 = line.split('=').nth(1).unwrap().parse().unwrap();
        assert!(v.is_finite(), "{line}");
    }

    let scene_path = data.join("test/scene_0000.mpnc");
    let scene = read_scene(&scene_path).unwrap();
    let seg = cmd_infer(&cfg, &ck_path, &scene_path, &tmp.path().join("inf")).unwrap();
    assert_eq!(seg.semantic.len(), scene.len());
    let ply = fs::read_to_string(tmp.path().join("inf/prediction.ply")).unwrap();
    assert!(ply.contains(&format!("element vertex {}", scene.len())));

    let out = tmp.path().join("inspect");
    let w = cmd_inspect_memory(&cfg, &ck_path, &scene_path, 5, &out).unwrap();
    let ply = fs::read_to_string(out.join("weights.ply")).unwrap();
    assert!(ply.contains(&format!("element vertex {}\n", scene.len())));
    let exported = read_weight_ply(&out.join("weights.ply")).unwrap();
    let rows = addressing_rows(&t1.model, &scene, &cfg.inference.block).unwrap();
    let dump: Vec<u64> = rows.iter().map(|r| r[5].to_bits()).collect();
    assert_eq!(exported.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), dump);
    assert_eq!(w.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), dump);
    assert!(cmd_inspect_memory(&cfg, &ck_path, &scene_path, 12, &out).is_err());
}

#[test]
fn binary_reports_bad_slot_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg_path = tmp.path().join("tiny.cfg");
    fs::write(&cfg_path, TINY.replace("train.epochs = 2", "train.epochs = 1")).unwrap();
    let bin = env!("CARGO_BIN_EXE_mpnet");
    let run = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .arg("--config")
            .arg(&cfg_path)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    };
    let d = data.to_str().unwrap();
    assert!(run(&["gen-data", "--out", d]).status.success());
    let r = tmp.path().join("run");
    let r = r.to_str().unwrap();
    assert!(run(&["train", "--data", d, "--out", r]).status.success());
    let ck = format!("{r}/{CHECKPOINT_FILE}");
    let scene = format!("{d}/test/scene_0000.mpnc");
    let ins = tmp.path().join("ins");
    let ok = run(&["inspect-memory", "--checkpoint", &ck, "--scene", &scene, "--slot", "0", "--out", ins.to_str().unwrap()]);
    assert!(ok.status.success());
    let bad = run(&["inspect-memory", "--checkpoint", &ck, "--scene", &scene, "--slot", "99", "--out", ins.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("slot 99"));
}

#[test]
fn ablate_emits_one_row_per_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = dataset(&data);
    cfg.train.epochs = 1;
    let out = tmp.path().join("ablate");
    let rows = cmd_ablate(&cfg, &data, &out).unwrap();
    assert_eq!(rows.len(), 4);
    let table = fs::read_to_string(out.join("ablation.txt")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().all(|l| l.contains("status=ok") && l.contains("mprec=")));
    let base = Checkpoint::load(&out.join("baseline_seed0").join(CHECKPOINT_FILE)).unwrap();
    assert!(base.params.iter().all(|p| !p.name().starts_with("memory")));
    let full = Checkpoint::load(&out.join("full_seed0").join(CHECKPOINT_FILE)).unwrap();
    assert!(full.params.iter().any(|p| p.name() == "memory.m"));
}

#[test]
fn failing_runs_do_not_stop_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = dataset(&data);
    cfg.train.epochs = 1;
    cfg.ablate_seeds = vec![0];
    // Damage one training room after the fact: every run then fails to load.
    let victim = data.join("train/scene_0001.mpnc");
    fs::write(&victim, b"MPNC").unwrap();
    let rows = cmd_ablate(&cfg, &data, &tmp.path().join("t")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.result.is_err()));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::parse(&fs::read_to_string(&path).unwrap());
        assert!(cfg.is_ok(), "{}: {cfg:?}", path.display());
        n += 1;
    }
    assert!(n >= 3);
}
