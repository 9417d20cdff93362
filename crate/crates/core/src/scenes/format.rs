//! MPNC scene files and a PLY exporter.
//!
//! Layout, all little-endian: magic `MPNC`, version `u32`, point count `u64`,
//! class count `u32`, then `P×6` `f32` values row-major, `P` `u16` semantic
//! labels and `P` `u32` instance labels.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Scene;
use crate::error::{Error, FormatError, Result};

pub const MPNC_MAGIC: [u8; 4] = *b"MPNC";
pub const MPNC_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 8 + 4;

pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let p = scene.len();
    let mut buf = Vec::with_capacity(HEADER_LEN + p * (24 + 2 + 4));
    buf.extend_from_slice(&MPNC_MAGIC);
    buf.extend_from_slice(&MPNC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(p as u64).to_le_bytes());
    buf.extend_from_slice(&(scene.num_classes() as u32).to_le_bytes());
    for v in scene.raw_points() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for s in scene.semantic() {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for i in scene.instance() {
        buf.extend_from_slice(&i.to_le_bytes());
    }
    buf
}

pub fn decode_scene(bytes: &[u8]) -> std::result::Result<Scene, FormatError> {
    let need = |n: usize| {
        if bytes.len() < n {
            Err(FormatError::Truncated {
                needed: n,
                available: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(4)?;
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MPNC_MAGIC {
        return Err(FormatError::BadMagic {
            found: magic,
            expected: MPNC_MAGIC,
        });
    }
    need(HEADER_LEN)?;
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MPNC_VERSION {
        return Err(FormatError::Version {
            found: version,
            expected: MPNC_VERSION,
        });
    }
    let p = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let classes = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let p = usize::try_from(p).map_err(|_| FormatError::Invalid(format!("point count {p}")))?;
    let body = p
        .checked_mul(30)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| FormatError::Invalid(format!("point count {p}")))?;
    need(body)?;
    if bytes.len() > body {
        return Err(FormatError::Invalid(format!("{} trailing bytes", bytes.len() - body)));
    }
    let mut off = HEADER_LEN;
    let points = bytes[off..off + 24 * p]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    off += 24 * p;
    let semantic = bytes[off..off + 2 * p]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
        .collect();
    off += 2 * p;
    let instance = bytes[off..off + 4 * p]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if p == 0 {
        return Err(FormatError::Invalid("scene has no points".into()));
    }
    Scene::new(points, semantic, instance, classes).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    if scene.is_empty() {
        return Err(Error::usage("refusing to write an empty scene"));
    }
    fs::write(path, encode_scene(scene)).map_err(|e| Error::io(path, e))
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scene(&bytes).map_err(|kind| Error::Format {
        path: path.to_path_buf(),
        kind,
    })
}

/// ASCII PLY with `x y z red green blue sem ins` vertex properties.
pub fn write_ply(scene: &Scene, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", scene.len()));
    for name in ["x", "y", "z"] {
        out.push_str(&format!("property float {name}\n"));
    }
    for name in ["red", "green", "blue"] {
        out.push_str(&format!("property uchar {name}\n"));
    }
    out.push_str("property int sem\nproperty int ins\nend_header\n");
    for i in 0..scene.len() {
        let p = scene.point(i);
        let rgb = [p[3], p[4], p[5]].map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            p[0], p[1], p[2], rgb[0], rgb[1], rgb[2], scene.semantic()[i], scene.instance()[i]
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
