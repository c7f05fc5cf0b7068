//! On-disk vectors: `<name>.f32` holds rows of little-endian f32, `<name>.json`
//! the manifest (dim, provider, instruction, ids, provenance).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, VectorTable};
use crate::io::{write_atomic, Provenance};

pub(crate) fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorManifest {
    pub format: String,
    pub dim: usize,
    pub count: usize,
    pub provider_id: String,
    pub instruction_id: String,
    pub instruction: String,
    pub l2_normalized: bool,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

const FORMAT: &str = "f32-le-rowmajor";

impl VectorTable {
    pub fn write(&self, dir: &Path, name: &str, provenance: Option<&Provenance>) -> Result<(), EmbeddingError> {
        let manifest = VectorManifest {
            format: FORMAT.into(),
            dim: self.dim,
            count: self.len(),
            provider_id: self.provider_id.clone(),
            instruction_id: self.instruction_id.clone(),
            instruction: self.instruction.clone(),
            l2_normalized: self.l2_normalized,
            ids: self.ids.clone(),
            provenance: provenance.cloned(),
        };
        write_atomic(&dir.join(format!("{name}.f32")), &encode_f32(&self.data))?;
        let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| EmbeddingError::Manifest(e.to_string()))?;
        json.push(b'\n');
        write_atomic(&dir.join(format!("{name}.json")), &json)?;
        Ok(())
    }

    pub fn read(dir: &Path, name: &str) -> Result<Self, EmbeddingError> {
        let manifest: VectorManifest = serde_json::from_slice(&fs::read(dir.join(format!("{name}.json")))?)
            .map_err(|e| EmbeddingError::Manifest(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(EmbeddingError::Manifest(format!("unknown format {:?}", manifest.format)));
        }
        let data = decode_f32(&fs::read(dir.join(format!("{name}.f32")))?);
        if data.len() != manifest.dim * manifest.count || manifest.ids.len() != manifest.count {
            return Err(EmbeddingError::Manifest(format!(
                "{name}: {} floats for {} rows of dim {}",
                data.len(),
                manifest.count,
                manifest.dim
            )));
        }
        Ok(VectorTable {
            ids: manifest.ids,
            dim: manifest.dim,
            data,
            provider_id: manifest.provider_id,
            instruction_id: manifest.instruction_id,
            instruction: manifest.instruction,
            l2_normalized: manifest.l2_normalized,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::PROBLEM_INSTRUCTION;

    #[test]
    fn bytes_are_little_endian() {
        assert_eq!(encode_f32(&[1.0]), vec![0x00, 0x00, 0x80, 0x3f]);
        assert_eq!(decode_f32(&[0x00, 0x00, 0x80, 0xbf]), vec![-1.0]);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = VectorTable::new(3, "p", PROBLEM_INSTRUCTION);
        t.push("a", &[1.0, 2.0, 3.0]).unwrap();
        t.push("b", &[-0.5, f32::MIN_POSITIVE, 7.25]).unwrap();
        t.write(dir.path(), "problem", None).unwrap();
        assert_eq!(VectorTable::read(dir.path(), "problem").unwrap(), t);
        assert_eq!(fs::metadata(dir.path().join("problem.f32")).unwrap().len(), 24);
    }
}
