//! Trained-model persistence: a small binary container holding the
//! architecture descriptor, the flattened weights, and training metadata.
//!
//! Layout (all integers little-endian):
//! `b"EBCK"` · version `u32` · arch JSON (`u32` length + bytes) ·
//! weights (`u32` count + `f32` each) · meta JSON (`u32` length + bytes).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn::{CompactCnn, CHANNELS, INPUT_SIZE, KERNEL, N_CLASSES, PARAM_COUNT};
use super::ModelError;

const MAGIC: &[u8; 4] = b"EBCK";
const VERSION: u32 = 1;

/// FNV-1a 64-bit hash rendered as 16 lowercase hex digits. Used to stamp
/// checkpoints with the identity of the dataset manifest they were trained
/// from.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Structural description of the network a checkpoint holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input_size: u32,
    pub conv_channels: Vec<u32>,
    pub kernel: u32,
    pub n_classes: u32,
}

impl ArchDescriptor {
    /// Descriptor for the one architecture this crate implements.
    pub fn current() -> Self {
        ArchDescriptor {
            input_size: INPUT_SIZE as u32,
            conv_channels: CHANNELS.iter().map(|&c| c as u32).collect(),
            kernel: KERNEL as u32,
            n_classes: N_CLASSES as u32,
        }
    }
}

/// Per-epoch training diagnostics recorded in the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_accuracy: Option<f64>,
}

/// Provenance metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Which classification head this model was trained for
    /// (`binary`, `detached_spot`, `overcontact_spot`).
    pub task: String,
    pub seed: u64,
    /// Hash of the dataset manifest the model was trained from.
    pub manifest_hash: String,
    pub epoch_stats: Vec<EpochStats>,
}

/// A trained model plus its provenance, ready to serialize.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchDescriptor,
    pub weights: Vec<f32>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(model: &CompactCnn<f32>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            arch: ArchDescriptor::current(),
            weights: model.flatten(),
            meta,
        }
    }

    /// Checks that the checkpoint describes this crate's network and holds
    /// the right number of weights, without touching the weight values.
    pub fn validate_arch(&self) -> Result<(), ModelError> {
        if self.arch != ArchDescriptor::current() {
            return Err(ModelError::ArchMismatch(format!(
                "checkpoint architecture {:?} differs from {:?}",
                self.arch,
                ArchDescriptor::current()
            )));
        }
        if self.weights.len() != PARAM_COUNT {
            return Err(ModelError::ArchMismatch(format!(
                "checkpoint holds {} weights, expected {PARAM_COUNT}",
                self.weights.len()
            )));
        }
        Ok(())
    }

    /// Rebuilds the network, rejecting checkpoints whose architecture or
    /// weight count does not match this crate's network.
    pub fn to_model(&self) -> Result<CompactCnn<f32>, ModelError> {
        self.validate_arch()?;
        CompactCnn::from_flat(&self.weights)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch_json = serde_json::to_vec(&self.arch).expect("arch serializes");
        let meta_json = serde_json::to_vec(&self.meta).expect("meta serializes");
        let mut out = Vec::with_capacity(
            4 + 4 + 4 + arch_json.len() + 4 + 4 * self.weights.len() + 4 + meta_json.len(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(arch_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&arch_json);
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta_json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(ModelError::BadCheckpoint(
                "bad magic; not a model checkpoint".into(),
            ));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ModelError::BadCheckpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let arch_len = r.u32()? as usize;
        let arch: ArchDescriptor = serde_json::from_slice(r.take(arch_len)?)
            .map_err(|e| ModelError::BadCheckpoint(format!("arch block: {e}")))?;
        let n_weights = r.u32()? as usize;
        let raw = r.take(4 * n_weights)?;
        let weights: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| ModelError::BadCheckpoint(format!("meta block: {e}")))?;
        if r.pos != bytes.len() {
            return Err(ModelError::BadCheckpoint(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { arch, weights, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::BadCheckpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_meta() -> CheckpointMeta {
        CheckpointMeta {
            task: "binary".into(),
            seed: 99,
            manifest_hash: "cbf29ce484222325".into(),
            epoch_stats: vec![
                EpochStats {
                    epoch: 1,
                    train_loss: 0.693,
                    train_accuracy: 0.5,
                    val_accuracy: Some(0.52),
                },
                EpochStats {
                    epoch: 2,
                    train_loss: 0.41,
                    train_accuracy: 0.81,
                    val_accuracy: None,
                },
            ],
        }
    }

    #[test]
    fn fnv1a_reference_vectors() {
        assert_eq!(fnv1a_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fnv1a_hex(b"foobar"), "85944171f73967e8");
    }

    #[test]
    fn byte_round_trip_preserves_everything() {
        let model = CompactCnn::<f32>::xavier_init(21);
        let ckpt = Checkpoint::from_model(&model, sample_meta());
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = Checkpoint::from_model(&CompactCnn::<f32>::xavier_init(4), sample_meta());
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = Checkpoint::load(Path::new("/nonexistent/nope.ckpt")).unwrap_err();
        match err {
            ModelError::Io { path, .. } => assert!(path.contains("nope.ckpt")),
            other => panic!("expected Io error, got {other:?}"),
        }
    }

    #[test]
    fn corruption_is_rejected() {
        let ckpt = Checkpoint::from_model(&CompactCnn::<f32>::xavier_init(5), sample_meta());
        let good = ckpt.to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad_magic),
            Err(ModelError::BadCheckpoint(_))
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad_version),
            Err(ModelError::BadCheckpoint(_))
        ));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(
            Checkpoint::from_bytes(truncated),
            Err(ModelError::BadCheckpoint(_))
        ));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&trailing),
            Err(ModelError::BadCheckpoint(_))
        ));

        let mut bad_json = good;
        // Corrupt a byte inside the arch JSON block.
        bad_json[13] = b'!';
        assert!(matches!(
            Checkpoint::from_bytes(&bad_json),
            Err(ModelError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let model = CompactCnn::<f32>::xavier_init(6);
        let mut ckpt = Checkpoint::from_model(&model, sample_meta());
        ckpt.arch.kernel = 5;
        assert!(matches!(ckpt.to_model(), Err(ModelError::ArchMismatch(_))));

        let mut short = Checkpoint::from_model(&model, sample_meta());
        short.weights.pop();
        assert!(matches!(short.to_model(), Err(ModelError::ArchMismatch(_))));
    }
}
