//! Checkpoint files.
//!
//! Layout: magic `"TAWM1"`, little-endian u32 header length, a JSON header
//! describing the stores and optional metadata, then the parameter payload
//! as little-endian 32-bit floats in declaration order (per store: each
//! layer's weights row-major, then its bias).
//!
//! Values are truncated to f32 on save and widened on load, so
//! save → load → save is byte-identical.

use super::{ArchSpec, LayerParams, NnError, ParamStore};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"TAWM1";

#[derive(Debug, Serialize, Deserialize)]
struct StoreDesc {
    name: String,
    arch: ArchSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    stores: Vec<StoreDesc>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    meta: serde_json::Value,
}

/// A saved set of parameter stores plus free-form metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub stores: Vec<ParamStore>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let header = Header {
            stores: self
                .stores
                .iter()
                .map(|s| StoreDesc { name: s.name.clone(), arch: s.arch.clone() })
                .collect(),
            meta: self.meta.clone(),
        };
        let header_bytes = serde_json::to_vec(&header).map_err(|e| NnError::Format(e.to_string()))?;

        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header_bytes);
        for store in &self.stores {
            for v in store.flat_values() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, NnError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(NnError::Format(format!("{}: not a TAWM1 checkpoint", path.display())));
        }
        let mut off = MAGIC.len();
        let header_len = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        off += 4;
        if bytes.len() < off + header_len {
            return Err(NnError::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[off..off + header_len])
            .map_err(|e| NnError::Format(e.to_string()))?;
        off += header_len;

        let total_params: usize = header.stores.iter().map(|s| s.arch.param_count()).sum();
        if bytes.len() != off + 4 * total_params {
            return Err(NnError::Format(format!(
                "payload length {} does not match {} parameters",
                bytes.len() - off,
                total_params
            )));
        }

        let mut stores = Vec::with_capacity(header.stores.len());
        for desc in header.stores {
            desc.arch.validate().map_err(NnError::Format)?;
            let mut layers = Vec::with_capacity(desc.arch.layers.len());
            for spec in &desc.arch.layers {
                let mut read_vec = |n: usize| {
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        let raw = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                        v.push(f64::from(raw));
                        off += 4;
                    }
                    v
                };
                let w = read_vec(spec.input * spec.output);
                let b = read_vec(spec.output);
                layers.push(LayerParams { w, b });
            }
            stores.push(ParamStore { name: desc.name, arch: desc.arch, layers });
        }
        Ok(Checkpoint { stores, meta: header.meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ArchSpec};
    use crate::rng::stream;

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchSpec::mlp(&[3, 8, 2], Activation::Silu, Activation::Tanh);
        let mut rng = stream(17, "init", &[]);
        let ckpt = Checkpoint {
            stores: vec![
                ParamStore::init("h", arch.clone(), &mut rng),
                ParamStore::init("d", arch, &mut rng),
            ],
            meta: serde_json::json!({"integrator": "euler", "d_z": 2}),
        };
        let p1 = dir.path().join("a.tawm");
        let p2 = dir.path().join("b.tawm");
        ckpt.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.meta["integrator"], "euler");
    }

    #[test]
    fn fresh_init_round_trips_exactly() {
        // Initialization draws f32-representable values, so one round trip
        // loses nothing.
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchSpec::mlp(&[4, 6, 3], Activation::Silu, Activation::Identity);
        let mut rng = stream(23, "init", &[]);
        let store = ParamStore::init("enc", arch, &mut rng);
        let ckpt = Checkpoint { stores: vec![store.clone()], meta: serde_json::Value::Null };
        let path = dir.path().join("c.tawm");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.stores[0], store);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.tawm");
        std::fs::write(&path, b"NOPE!xxxxxxx").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
