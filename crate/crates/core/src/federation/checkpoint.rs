//! Binary serialization of meta-parameters.
//!
//! All integers and reals are little endian:
//!
//! | offset | size  | field                                             |
//! |--------|-------|---------------------------------------------------|
//! | 0      | 8     | magic `b"FEDMETA\0"`                              |
//! | 8      | 4     | format version (`u32`, currently 1)               |
//! | 12     | 8     | model fingerprint (`u64`)                         |
//! | 20     | 8     | round index (`u64`)                               |
//! | 28     | 8     | parameter count `n` (`u64`)                       |
//! | 36     | 8·n   | theta (`f64` each)                                |
//! | 36+8n  | 8·n   | alpha (`f64` each)                                |
//!
//! The fingerprint is the first 8 bytes (little endian) of the SHA-256 of
//! [`ModelConfig::canonical`]. The same encoding carries client uploads to
//! the server during a round.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::meta::MetaParams;
use crate::nn::{ModelConfig, ParamVector};

pub const MAGIC: &[u8; 8] = b"FEDMETA\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

pub fn model_fingerprint(model: &ModelConfig) -> u64 {
    let digest = Sha256::digest(model.canonical().as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: u64,
    pub round: u64,
    pub meta: MetaParams,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let n = self.meta.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.meta.theta.iter().chain(self.meta.alpha.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("missing checkpoint magic".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let n = u64_at(28) as usize;
        let expected = n
            .checked_mul(16)
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Checkpoint("parameter count overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} bytes for {n} parameters, found {}",
                bytes.len()
            )));
        }
        let reals: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (theta, alpha) = reals.split_at(n);
        Ok(Checkpoint {
            fingerprint: u64_at(12),
            round: u64_at(20),
            meta: MetaParams {
                theta: ParamVector::from(theta.to_vec()),
                alpha: ParamVector::from(alpha.to_vec()),
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::report::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }

    /// Hex SHA-256 prefix of the encoding.
    pub fn checksum(&self) -> String {
        checksum_bytes(&self.encode())
    }
}

pub fn checksum_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 0..40), round in any::<u64>(), fp in any::<u64>()) {
            let ck = Checkpoint {
                fingerprint: fp,
                round,
                meta: MetaParams {
                    theta: vals.clone().into(),
                    alpha: vals.iter().map(|v| v * 0.5).collect::<Vec<_>>().into(),
                },
            };
            prop_assert_eq!(Checkpoint::decode(&ck.encode()).unwrap(), ck);
        }
    }

    #[test]
    fn header_layout() {
        let ck = Checkpoint {
            fingerprint: 0x0102030405060708,
            round: 5,
            meta: MetaParams {
                theta: vec![1.0].into(),
                alpha: vec![0.5].into(),
            },
        };
        let b = ck.encode();
        assert_eq!(&b[..8], b"FEDMETA\0");
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..20], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(b[20], 5);
        assert_eq!(b[28], 1);
        assert_eq!(&b[36..44], &1.0f64.to_le_bytes());
        assert_eq!(&b[44..52], &0.5f64.to_le_bytes());
        assert_eq!(b.len(), 52);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(Checkpoint::decode(b"nope").is_err());
        let ck = Checkpoint {
            fingerprint: 1,
            round: 0,
            meta: MetaParams {
                theta: vec![1.0, 2.0].into(),
                alpha: vec![0.1, 0.2].into(),
            },
        };
        let mut b = ck.encode();
        b.pop();
        assert!(Checkpoint::decode(&b).is_err());
        let mut v = ck.encode();
        v[8] = 9;
        assert!(Checkpoint::decode(&v).is_err());
    }

    #[test]
    fn fingerprint_tracks_architecture() {
        let a = ModelConfig::default();
        let b = ModelConfig {
            batchnorm: false,
            ..ModelConfig::default()
        };
        assert_eq!(model_fingerprint(&a), model_fingerprint(&a.clone()));
        assert_ne!(model_fingerprint(&a), model_fingerprint(&b));
    }
}
