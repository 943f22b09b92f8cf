//! Checkpoint directory: `manifest.json` plus one little-endian float32 blob
//! per named tensor (parameters and both Adam moments).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::hrnet::{architecture_hash, ModelParams, ARCHITECTURE};
use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerManifest {
    pub step: u64,
    pub config: AdamConfig,
    pub first_moment: Vec<TensorEntry>,
    pub second_moment: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub architecture: String,
    pub architecture_hash: String,
    pub step: u64,
    pub params: Vec<TensorEntry>,
    pub optimizer: Option<OptimizerManifest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ModelParams,
    pub optimizer: Option<(AdamConfig, AdamState)>,
}

fn entries(prefix: &str) -> Vec<TensorEntry> {
    ARCHITECTURE
        .iter()
        .map(|p| TensorEntry {
            name: p.name.to_string(),
            shape: p.shape,
            file: format!("{prefix}/{}.f32", p.name),
        })
        .collect()
}

impl Checkpoint {
    /// Short identifier of the parameter values, for provenance.
    pub fn id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.params.tensors {
            h.update(fsio::f32_to_le_bytes(&t.data));
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let params = entries("params");
        for (e, t) in params.iter().zip(&self.params.tensors) {
            fsio::write_atomic(&dir.join(&e.file), &fsio::f32_to_le_bytes(&t.data))?;
        }
        let optimizer = match &self.optimizer {
            None => None,
            Some((cfg, state)) => {
                let (m, v) = (entries("adam_m"), entries("adam_v"));
                for ((em, ev), (dm, dv)) in m.iter().zip(&v).zip(state.m.iter().zip(&state.v)) {
                    fsio::write_atomic(&dir.join(&em.file), &fsio::f32_to_le_bytes(dm))?;
                    fsio::write_atomic(&dir.join(&ev.file), &fsio::f32_to_le_bytes(dv))?;
                }
                Some(OptimizerManifest {
                    step: state.step,
                    config: *cfg,
                    first_moment: m,
                    second_moment: v,
                })
            }
        };
        let manifest = CheckpointManifest {
            architecture: "hrnet-mini".into(),
            architecture_hash: architecture_hash(),
            step: self.step,
            params,
            optimizer,
        };
        fsio::write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CheckpointManifest = fsio::read_json(&dir.join("manifest.json"))?;
        if manifest.architecture_hash != architecture_hash() {
            return Err(Error::Checkpoint(format!(
                "architecture hash {} does not match this build",
                manifest.architecture_hash
            )));
        }
        let read_all = |list: &[TensorEntry]| -> Result<Vec<Vec<f32>>> {
            if list.len() != ARCHITECTURE.len() {
                return Err(Error::Checkpoint(format!("{} tensors listed", list.len())));
            }
            list.iter()
                .zip(ARCHITECTURE.iter())
                .map(|(e, spec)| {
                    if e.name != spec.name || e.shape != spec.shape {
                        return Err(Error::Checkpoint(format!("unexpected tensor {} {:?}", e.name, e.shape)));
                    }
                    let path = dir.join(&e.file);
                    let bytes = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
                    let values = fsio::f32_from_le_bytes(&bytes);
                    if values.len() != spec.shape.iter().product::<usize>() || bytes.len() % 4 != 0 {
                        return Err(Error::Checkpoint(format!("{}: wrong blob size", e.file)));
                    }
                    Ok(values)
                })
                .collect()
        };
        let mut params = ModelParams::zeros();
        for (t, v) in params.tensors.iter_mut().zip(read_all(&manifest.params)?) {
            t.data = v;
        }
        let optimizer = match &manifest.optimizer {
            None => None,
            Some(o) => Some((
                o.config,
                AdamState {
                    step: o.step,
                    m: read_all(&o.first_moment)?,
                    v: read_all(&o.second_moment)?,
                },
            )),
        };
        Ok(Self {
            step: manifest.step,
            params,
            optimizer,
        })
    }
}
