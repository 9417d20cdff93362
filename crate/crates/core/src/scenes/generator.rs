//! Synthetic rooms: floor, ceiling and four walls, plus tables, chairs and
//! clutter boxes. Plane classes dominate the point budget; objects are rare,
//! and a small fraction of scenes additionally contains an unusual chair
//! arrangement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Scene;
use crate::error::{Error, Result};

pub const CLASS_NAMES: [&str; 6] = ["floor", "ceiling", "wall", "table", "chair", "clutter"];

const FLOOR: usize = 0;
const CEILING: usize = 1;
const WALL: usize = 2;
const TABLE: usize = 3;
const CHAIR: usize = 4;
const CLUTTER: usize = 5;

const BASE_COLORS: [[f64; 3]; 5] = [
    [0.55, 0.50, 0.45],
    [0.85, 0.85, 0.82],
    [0.75, 0.72, 0.65],
    [0.45, 0.30, 0.20],
    [0.30, 0.30, 0.45],
];

const PLACEMENT_ATTEMPTS: usize = 100;
const POSITION_NOISE: f64 = 0.005;
const COLOR_NOISE: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    /// Share of the point budget given to each class present in the room.
    pub class_weights: Vec<f64>,
    pub rare_pattern_rate: f64,
    pub points_per_scene: usize,
    /// Room side lengths are drawn from `[room_min, room_max]`.
    pub room_min: f64,
    pub room_max: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_classes: 6,
            class_weights: vec![0.22, 0.20, 0.38, 0.08, 0.07, 0.05],
            rare_pattern_rate: 0.1,
            points_per_scene: 20_000,
            room_min: 3.0,
            room_max: 4.5,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes != CLASS_NAMES.len() {
            return Err(Error::Config(format!(
                "the generator emits exactly {} classes, got {}",
                CLASS_NAMES.len(),
                self.num_classes
            )));
        }
        if self.class_weights.len() != self.num_classes || self.class_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("class weights must be positive, one per class".into()));
        }
        if !(0.0..=1.0).contains(&self.rare_pattern_rate) {
            return Err(Error::Config("rare_pattern_rate must lie in [0, 1]".into()));
        }
        if self.points_per_scene == 0 {
            return Err(Error::Config("points_per_scene must be positive".into()));
        }
        if !(self.room_min >= 2.0 && self.room_max >= self.room_min) {
            return Err(Error::Config("room sides need 2 <= room_min <= room_max".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RarePattern {
    /// One chair resting on another's seat.
    Stacked,
    /// Two chairs touching at their backrests.
    BackToBack,
}

impl RarePattern {
    pub fn name(self) -> &'static str {
        match self {
            RarePattern::Stacked => "stacked",
            RarePattern::BackToBack => "back_to_back",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stacked" => Some(RarePattern::Stacked),
            "back_to_back" => Some(RarePattern::BackToBack),
            _ => None,
        }
    }
}

/// Generation facts that are not stored in the scene file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneMeta {
    pub rare: Option<RarePattern>,
    /// Instance ids taking part in the rare arrangement.
    pub rare_instances: Vec<u32>,
    pub placement_failures: usize,
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    origin: [f64; 3],
    u: [f64; 3],
    v: [f64; 3],
}

impl Rect {
    fn area(&self) -> f64 {
        norm(self.u) * norm(self.v)
    }
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

struct Primitive {
    class: usize,
    color: [f64; 3],
    faces: Vec<Rect>,
}

/// Top and four side faces of an axis-aligned box.
fn box_faces(min: [f64; 3], size: [f64; 3]) -> Vec<Rect> {
    let [x, y, z] = min;
    let [sx, sy, sz] = size;
    vec![
        Rect { origin: [x, y, z + sz], u: [sx, 0.0, 0.0], v: [0.0, sy, 0.0] },
        Rect { origin: [x, y, z], u: [sx, 0.0, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x, y + sy, z], u: [sx, 0.0, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x, y, z], u: [0.0, sy, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x + sx, y, z], u: [0.0, sy, 0.0], v: [0.0, 0.0, sz] },
    ]
}

fn legs(x: f64, y: f64, sx: f64, sy: f64, z: f64, height: f64) -> Vec<Rect> {
    let t = 0.04;
    let mut faces = Vec::new();
    for (lx, ly) in [(x, y), (x + sx - t, y), (x, y + sy - t), (x + sx - t, y + sy - t)] {
        faces.extend(box_faces([lx, ly, z], [t, t, height]).into_iter().skip(1));
    }
    faces
}

#[derive(Clone, Copy, Debug)]
struct Footprint {
    x: f64,
    y: f64,
    sx: f64,
    sy: f64,
}

impl Footprint {
    fn overlaps(&self, o: &Footprint, gap: f64) -> bool {
        self.x < o.x + o.sx + gap && o.x < self.x + self.sx + gap && self.y < o.y + o.sy + gap && o.y < self.y + self.sy + gap
    }
}

/// Side on which a chair's backrest sits.
#[derive(Clone, Copy)]
enum Facing {
    NegX,
    PosX,
    NegY,
    PosY,
}

fn chair_faces(x: f64, y: f64, z: f64, s: f64, facing: Facing) -> Vec<Rect> {
    let seat_z = z + 0.42;
    let mut faces = box_faces([x, y, seat_z], [s, s, 0.04]);
    faces.extend(legs(x, y, s, s, z, 0.42));
    let t = 0.04;
    let back_h = 0.45;
    let (bx, by, bsx, bsy) = match facing {
        Facing::NegX => (x, y, t, s),
        Facing::PosX => (x + s - t, y, t, s),
        Facing::NegY => (x, y, s, t),
        Facing::PosY => (x, y + s - t, s, t),
    };
    faces.extend(box_faces([bx, by, seat_z + 0.04], [bsx, bsy, back_h]));
    faces
}

fn jitter_color<R: Rng>(rng: &mut R, base: [f64; 3]) -> [f64; 3] {
    base.map(|c| (c + rng.random_range(-0.12..0.12)).clamp(0.0, 1.0))
}

struct Layout {
    lx: f64,
    ly: f64,
    taken: Vec<Footprint>,
    failures: usize,
}

impl Layout {
    /// Finds a free footprint of the given size away from the walls.
    fn place<R: Rng>(&mut self, rng: &mut R, sx: f64, sy: f64) -> Option<Footprint> {
        let margin = 0.1;
        if sx + 2.0 * margin >= self.lx || sy + 2.0 * margin >= self.ly {
            self.failures += 1;
            return None;
        }
        for _ in 0..PLACEMENT_ATTEMPTS {
            let f = Footprint {
                x: rng.random_range(margin..self.lx - sx - margin),
                y: rng.random_range(margin..self.ly - sy - margin),
                sx,
                sy,
            };
            if self.taken.iter().all(|t| !f.overlaps(t, 0.1)) {
                self.taken.push(f);
                return Some(f);
            }
        }
        self.failures += 1;
        log::debug!("object placement failed after {PLACEMENT_ATTEMPTS} attempts");
        None
    }
}

/// Generates one room. The rare arrangement is inserted with probability
/// `rare_pattern_rate` unless `force_rare` decides it.
pub fn generate_scene(cfg: &GeneratorConfig, force_rare: Option<bool>) -> Result<(Scene, SceneMeta)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lx = rng.random_range(cfg.room_min..=cfg.room_max);
    let ly = rng.random_range(cfg.room_min..=cfg.room_max);
    let lz = rng.random_range(2.4..=3.0);

    let mut prims: Vec<Primitive> = Vec::new();
    let plane = |class: usize, rect: Rect, rng: &mut ChaCha8Rng| Primitive {
        class,
        color: jitter_color(rng, BASE_COLORS[class]),
        faces: vec![rect],
    };
    prims.push(plane(FLOOR, Rect { origin: [0.0; 3], u: [lx, 0.0, 0.0], v: [0.0, ly, 0.0] }, &mut rng));
    prims.push(plane(CEILING, Rect { origin: [0.0, 0.0, lz], u: [lx, 0.0, 0.0], v: [0.0, ly, 0.0] }, &mut rng));
    for rect in [
        Rect { origin: [0.0; 3], u: [lx, 0.0, 0.0], v: [0.0, 0.0, lz] },
        Rect { origin: [0.0, ly, 0.0], u: [lx, 0.0, 0.0], v: [0.0, 0.0, lz] },
        Rect { origin: [0.0; 3], u: [0.0, ly, 0.0], v: [0.0, 0.0, lz] },
        Rect { origin: [lx, 0.0, 0.0], u: [0.0, ly, 0.0], v: [0.0, 0.0, lz] },
    ] {
        prims.push(plane(WALL, rect, &mut rng));
    }

    let mut layout = Layout {
        lx,
        ly,
        taken: Vec::new(),
        failures: 0,
    };
    let mut meta = SceneMeta::default();

    let rare = match force_rare {
        Some(r) => r,
        None => rng.random_bool(cfg.rare_pattern_rate),
    };
    if rare {
        let pattern = if rng.random_bool(0.5) {
            RarePattern::Stacked
        } else {
            RarePattern::BackToBack
        };
        let s = rng.random_range(0.4..0.5);
        let placed = match pattern {
            RarePattern::Stacked => layout.place(&mut rng, s, s).map(|f| {
                let facing = [Facing::NegX, Facing::PosX, Facing::NegY, Facing::PosY][rng.random_range(0..4)];
                vec![chair_faces(f.x, f.y, 0.0, s, facing), chair_faces(f.x, f.y, 0.46, s, facing)]
            }),
            RarePattern::BackToBack => layout.place(&mut rng, 2.0 * s, s).map(|f| {
                vec![
                    chair_faces(f.x, f.y, 0.0, s, Facing::PosX),
                    chair_faces(f.x + s, f.y, 0.0, s, Facing::NegX),
                ]
            }),
        };
        if let Some(chairs) = placed {
            meta.rare = Some(pattern);
            for faces in chairs {
                meta.rare_instances.push(prims.len() as u32);
                prims.push(Primitive {
                    class: CHAIR,
                    color: jitter_color(&mut rng, BASE_COLORS[CHAIR]),
                    faces,
                });
            }
        }
    }

    let mut table_tops = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        let sx = rng.random_range(0.8..1.4);
        let sy = rng.random_range(0.6..0.9);
        let (sx, sy) = if rng.random_bool(0.5) { (sx, sy) } else { (sy, sx) };
        if let Some(f) = layout.place(&mut rng, sx, sy) {
            let h = rng.random_range(0.7..0.8);
            let mut faces = box_faces([f.x, f.y, h - 0.04], [sx, sy, 0.04]);
            faces.extend(legs(f.x, f.y, sx, sy, 0.0, h - 0.04));
            table_tops.push((f, h));
            prims.push(Primitive {
                class: TABLE,
                color: jitter_color(&mut rng, BASE_COLORS[TABLE]),
                faces,
            });
        }
    }

    for _ in 0..rng.random_range(2..=4) {
        let s = rng.random_range(0.4..0.5);
        if let Some(f) = layout.place(&mut rng, s, s) {
            let facing = [Facing::NegX, Facing::PosX, Facing::NegY, Facing::PosY][rng.random_range(0..4)];
            prims.push(Primitive {
                class: CHAIR,
                color: jitter_color(&mut rng, BASE_COLORS[CHAIR]),
                faces: chair_faces(f.x, f.y, 0.0, s, facing),
            });
        }
    }

    for _ in 0..rng.random_range(2..=4) {
        let sx = rng.random_range(0.15..0.4);
        let sy = rng.random_range(0.15..0.4);
        let sz = rng.random_range(0.1..0.4);
        let on_table = !table_tops.is_empty() && rng.random_bool(0.5);
        let spot = if on_table {
            let (t, h) = table_tops[rng.random_range(0..table_tops.len())];
            if sx < t.sx && sy < t.sy {
                Some((t.x + rng.random_range(0.0..t.sx - sx), t.y + rng.random_range(0.0..t.sy - sy), h))
            } else {
                None
            }
        } else {
            layout.place(&mut rng, sx, sy).map(|f| (f.x, f.y, 0.0))
        };
        if let Some((x, y, z)) = spot {
            let color = [0, 1, 2].map(|_| rng.random_range(0.2..0.9));
            prims.push(Primitive {
                class: CLUTTER,
                color,
                faces: box_faces([x, y, z], [sx, sy, sz]),
            });
        }
    }
    meta.placement_failures = layout.failures;

    let budgets = face_budgets(&prims, &cfg.class_weights, cfg.points_per_scene);
    let pos_noise = Normal::new(0.0, POSITION_NOISE).expect("valid sigma");
    let col_noise = Normal::new(0.0, COLOR_NOISE).expect("valid sigma");
    let bounds = [lx, ly, lz];
    let mut points = Vec::with_capacity(6 * cfg.points_per_scene);
    let mut semantic = Vec::with_capacity(cfg.points_per_scene);
    let mut instance = Vec::with_capacity(cfg.points_per_scene);
    for (id, (prim, counts)) in prims.iter().zip(&budgets).enumerate() {
        for (face, &n) in prim.faces.iter().zip(counts) {
            for _ in 0..n {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                for k in 0..3 {
                    let v = face.origin[k] + a * face.u[k] + b * face.v[k] + pos_noise.sample(&mut rng);
                    points.push(v.clamp(0.0, bounds[k]) as f32);
                }
                for k in 0..3 {
                    points.push((prim.color[k] + col_noise.sample(&mut rng)).clamp(0.0, 1.0) as f32);
                }
                semantic.push(prim.class as u16);
                instance.push(id as u32);
            }
        }
    }
    let scene = Scene::new(points, semantic, instance, cfg.num_classes as u32)?;
    Ok((scene, meta))
}

/// Splits the point budget across classes by weight, then across each
/// class's faces by area, using largest remainders so the total is exact.
fn face_budgets(prims: &[Primitive], weights: &[f64], total: usize) -> Vec<Vec<usize>> {
    let mut class_area = vec![0.0; weights.len()];
    for p in prims {
        class_area[p.class] += p.faces.iter().map(Rect::area).sum::<f64>();
    }
    let present: f64 = (0..weights.len()).filter(|c| class_area[*c] > 0.0).map(|c| weights[c]).sum();
    let mut quotas = Vec::new();
    for (i, p) in prims.iter().enumerate() {
        for (j, f) in p.faces.iter().enumerate() {
            let q = total as f64 * weights[p.class] / present * f.area() / class_area[p.class];
            quotas.push((i, j, q));
        }
    }
    let mut out: Vec<Vec<usize>> = prims.iter().map(|p| vec![0; p.faces.len()]).collect();
    let mut assigned = 0;
    for &(i, j, q) in &quotas {
        out[i][j] = q.floor() as usize;
        assigned += out[i][j];
    }
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|a, b| {
        let fa = quotas[*a].2.fract();
        let fb = quotas[*b].2.fract();
        fb.total_cmp(&fa).then(a.cmp(b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        let (i, j, _) = quotas[k];
        out[i][j] += 1;
    }
    // Every primitive keeps at least one point so instance ids stay dense.
    for (i, counts) in out.iter_mut().enumerate() {
        if counts.iter().sum::<usize>() == 0 {
            counts[0] = 1;
            log::debug!("primitive {i} received no points; giving it one");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            seed,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let (a, ma) = generate_scene(&cfg(5), None).unwrap();
        let (b, mb) = generate_scene(&cfg(5), None).unwrap();
        assert_eq!(super::super::format::encode_scene(&a), super::super::format::encode_scene(&b));
        assert_eq!(ma, mb);
        let (c, _) = generate_scene(&cfg(6), None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn budget_is_exact_and_planes_dominate() {
        let mut planes = 0;
        let mut total = 0;
        for seed in 0..20 {
            let (s, _) = generate_scene(&cfg(seed), None).unwrap();
            assert_eq!(s.len(), 20_000);
            let counts = s.class_counts();
            planes += counts[FLOOR] + counts[CEILING] + counts[WALL];
            total += s.len();
        }
        assert!(planes as f64 / total as f64 >= 0.7);
    }

    #[test]
    fn coordinates_stay_in_room_and_instances_have_one_class() {
        let (s, _) = generate_scene(&cfg(9), Some(true)).unwrap();
        let e = s.extent();
        assert!(e[0] <= 4.5 && e[1] <= 4.5 && e[2] <= 3.0);
        for i in 0..s.len() {
            assert!(s.point(i).iter().all(|v| *v >= 0.0));
            assert!(s.point(i)[3..].iter().all(|v| *v <= 1.0));
        }
        let classes = s.instance_classes();
        for i in 0..s.len() {
            assert_eq!(classes[s.instance()[i] as usize], s.semantic()[i] as usize);
        }
    }

    #[test]
    fn forced_rare_pattern_is_tagged() {
        let (s, meta) = generate_scene(&cfg(3), Some(true)).unwrap();
        assert!(meta.rare.is_some());
        assert_eq!(meta.rare_instances.len(), 2);
        let classes = s.instance_classes();
        for id in &meta.rare_instances {
            assert_eq!(classes[*id as usize], CHAIR);
        }
        let (_, meta) = generate_scene(&cfg(3), Some(false)).unwrap();
        assert!(meta.rare.is_none() && meta.rare_instances.is_empty());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg(0);
        c.num_classes = 5;
        assert!(generate_scene(&c, None).is_err());
        let mut c = cfg(0);
        c.rare_pattern_rate = 1.5;
        assert!(c.validate().is_err());
    }
}
