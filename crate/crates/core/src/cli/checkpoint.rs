//! Binary checkpoints: every parameter with its optimizer state, the number
//! of completed epochs, and the model section of the config that built them.
//!
//! Layout, little-endian: magic `MPCK`, version u32, epoch u64, 32-byte
//! config hash, config text (u32 length + UTF-8), parameter count u32, then
//! per parameter: name (u32 length + UTF-8), rows u32, cols u32, step u64,
//! and values, first moments, second moments as f64 arrays.

use std::fs;
use std::path::Path;

use super::config::{hex, RunConfig};
use crate::error::{Error, FormatError, Result};
use crate::model::Mpnet;
use crate::numerics::{Parameter, Tensor};

pub const MPCK_MAGIC: [u8; 4] = *b"MPCK";
pub const MPCK_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: u64,
    pub config_hash: [u8; 32],
    pub config_text: String,
    pub params: Vec<Parameter>,
}

impl Checkpoint {
    pub fn from_model(model: &Mpnet, cfg: &RunConfig, epoch: u64) -> Self {
        Self {
            epoch,
            config_hash: cfg.model_hash(),
            config_text: cfg.model_text(),
            params: model.store().iter().cloned().collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MPCK_MAGIC);
        out.extend_from_slice(&MPCK_VERSION.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        put_str(&mut out, &self.config_text);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            put_str(&mut out, p.name());
            out.extend_from_slice(&(p.tensor.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(p.tensor.cols() as u32).to_le_bytes());
            out.extend_from_slice(&p.step_count().to_le_bytes());
            for xs in [p.tensor.data(), p.first_moment(), p.second_moment()] {
                xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("four bytes");
        if magic != MPCK_MAGIC {
            return Err(FormatError::BadMagic {
                found: magic,
                expected: MPCK_MAGIC,
            });
        }
        let version = r.u32()?;
        if version != MPCK_VERSION {
            return Err(FormatError::Version {
                found: version,
                expected: MPCK_VERSION,
            });
        }
        let epoch = r.u64()?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let config_text = r.string()?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name = r.string()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let step = r.u64()?;
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| FormatError::Invalid(format!("parameter {name}: shape overflows")))?;
            let values = r.f64s(len)?;
            let m1 = r.f64s(len)?;
            let m2 = r.f64s(len)?;
            let tensor = Tensor::new(rows, cols, values).map_err(|e| FormatError::Invalid(e.to_string()))?;
            let p = Parameter::with_state(name, tensor, m1, m2, step).expect("moment lengths match");
            params.push(p);
        }
        if r.pos != bytes.len() {
            return Err(FormatError::Invalid(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            epoch,
            config_hash,
            config_text,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|kind| Error::Format {
            path: path.to_path_buf(),
            kind,
        })
    }

    /// The run config recorded with the parameters. Only the model section
    /// is meaningful; everything else is at preset defaults.
    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::parse(&self.config_text)
    }

    /// Rebuilds the model and restores every parameter by name.
    pub fn restore(&self) -> Result<Mpnet> {
        let cfg = self.config()?;
        if cfg.model_hash() != self.config_hash {
            log::warn!("checkpoint config hash does not match its own config text");
        }
        let mut model = Mpnet::new(cfg.model, 0)?;
        let store = model.store_mut();
        if store.len() != self.params.len() {
            return Err(Error::usage(format!(
                "checkpoint holds {} parameters, the model {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in &self.params {
            let id = store
                .find(p.name())
                .ok_or_else(|| Error::usage(format!("checkpoint parameter '{}' is not in the model", p.name())))?;
            let slot = store.get_mut(id);
            if slot.tensor.shape() != p.tensor.shape() {
                return Err(Error::usage(format!(
                    "parameter '{}': checkpoint shape {:?}, model {:?}",
                    p.name(),
                    p.tensor.shape(),
                    slot.tensor.shape()
                )));
            }
            *slot = p.clone();
        }
        Ok(model)
    }

    /// Logs a warning when `expected` describes a different model section.
    pub fn warn_on_mismatch(&self, expected: &RunConfig) -> bool {
        let h = expected.model_hash();
        if h != self.config_hash {
            log::warn!(
                "config hash mismatch: checkpoint {} vs config {}; using the checkpoint's model settings",
                hex(&self.config_hash[..6]),
                hex(&h[..6])
            );
            return true;
        }
        false
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, FormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, FormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or(FormatError::Truncated {
            needed: usize::MAX,
            available: self.bytes.len() - self.pos,
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ablation;

    fn small(ablation: Ablation) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model.encoder.hidden_widths = vec![4];
        cfg.model.encoder.shared_dim = 4;
        cfg.model.encoder.feature_dim = 4;
        cfg.model.memory.per_class_slots = 2;
        cfg.model.ablation = ablation;
        cfg
    }

    #[test]
    fn save_then_load_is_bit_identical() {
        let cfg = small(Ablation::FULL);
        let mut model = Mpnet::new(cfg.model.clone(), 9).unwrap();
        model.store_mut().iter_mut().for_each(|p| {
            p.step_count = 7;
            p.first_moment.iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 0.1);
        });
        let ck = Checkpoint::from_model(&model, &cfg, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mpck");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let restored = back.restore().unwrap();
        for (a, b) in model.store().iter().zip(restored.store().iter()) {
            assert_eq!(a, b);
            let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.tensor.data()), bits(b.tensor.data()));
        }
        assert!(!back.warn_on_mismatch(&cfg));
        assert!(back.warn_on_mismatch(&small(Ablation::BASELINE)));
    }

    #[test]
    fn baseline_checkpoint_has_no_memory() {
        let cfg = small(Ablation::BASELINE);
        let model = Mpnet::new(cfg.model.clone(), 0).unwrap();
        let ck = Checkpoint::from_model(&model, &cfg, 0);
        assert!(ck.params.iter().all(|p| !p.name().starts_with("memory")));
    }

    #[test]
    fn damaged_files_are_format_errors() {
        let cfg = small(Ablation::INS_MEM);
        let model = Mpnet::new(cfg.model.clone(), 0).unwrap();
        let bytes = Checkpoint::from_model(&model, &cfg, 0).encode();
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 3]), Err(FormatError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(FormatError::BadMagic { .. })));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::decode(&long), Err(FormatError::Invalid(_))));
    }
}
