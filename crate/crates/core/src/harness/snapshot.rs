//! Binary field snapshots.
//!
//! ```text
//! "SHFL" | version u32 | nx u32 | ny u32 | lx f64 | ly f64 | time f64 | eps f64 | sigma f64
//!        | nx*ny f64 nodal values, row-major | crc32 of the payload u32
//! ```
//!
//! All numbers little-endian.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::spectral::{DomainGrid, SpectralError, SpectralField};

pub const MAGIC: &[u8; 4] = b"SHFL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 3 * 4 + 5 * 8;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("unsupported snapshot version {found}, expected {FORMAT_VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A field with the metadata needed to interpret it.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub time: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub field: SpectralField,
}

impl FieldSnapshot {
    pub fn encode(&self) -> Vec<u8> {
        let grid = self.field.grid();
        let values = self.field.nodal();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(grid.nx() as u32).to_le_bytes());
        out.extend_from_slice(&(grid.ny() as u32).to_le_bytes());
        for v in [grid.lx(), grid.ly(), self.time, self.epsilon, self.sigma] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let start = out.len();
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let corrupt = |m: &str| SnapshotError::CorruptSnapshot(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("file shorter than the header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(SnapshotError::UnsupportedVersion { found: version });
        }
        let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
        let (lx, ly, time, epsilon, sigma) = (f64_at(16), f64_at(24), f64_at(32), f64_at(40), f64_at(48));
        let n = nx
            .checked_mul(ny)
            .ok_or_else(|| corrupt("grid size overflows"))?;
        let expected = HEADER_LEN + 8 * n + 4;
        if bytes.len() != expected {
            return Err(SnapshotError::CorruptSnapshot(format!(
                "expected {expected} bytes for a {nx}x{ny} field, found {}",
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + 8 * n];
        let stored = u32_at(HEADER_LEN + 8 * n);
        if crc32fast::hash(payload) != stored {
            return Err(corrupt("payload checksum mismatch"));
        }
        let grid = DomainGrid::new(lx, ly, nx, ny).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            time,
            epsilon,
            sigma,
            field: SpectralField::from_nodal(&grid, values)?,
        })
    }

    /// Decode onto an existing grid when the geometry matches, so fields
    /// share one set of cached eigenvalues.
    pub fn decode_on(bytes: &[u8], grid: &Arc<DomainGrid>) -> Result<Self, SnapshotError> {
        let s = Self::decode(bytes)?;
        let g = s.field.grid();
        if (g.nx(), g.ny(), g.lx(), g.ly()) != (grid.nx(), grid.ny(), grid.lx(), grid.ly()) {
            return Err(SnapshotError::CorruptSnapshot("snapshot grid differs from the configured grid".into()));
        }
        let field = SpectralField::from_nodal(grid, s.field.into_nodal())?;
        Ok(Self { field, ..s })
    }
}

pub fn write_snapshot(path: &Path, snapshot: &FieldSnapshot) -> Result<(), SnapshotError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&snapshot.encode())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<FieldSnapshot, SnapshotError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    FieldSnapshot::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snapshot(values: Vec<f64>) -> FieldSnapshot {
        let grid = DomainGrid::new(1.0, 0.5, 8, 8).unwrap();
        FieldSnapshot {
            time: 0.125,
            epsilon: 0.04,
            sigma: 2.0,
            field: SpectralField::from_nodal(&grid, values).unwrap(),
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(-1e6f64..1e6, 64)) {
            let s = snapshot(values.clone());
            let back = FieldSnapshot::decode(&s.encode()).unwrap();
            prop_assert_eq!(back.field.nodal(), &values[..]);
            prop_assert_eq!((back.time, back.epsilon, back.sigma), (0.125, 0.04, 2.0));
            prop_assert_eq!(back.field.grid().ly(), 0.5);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.shfl");
        let s = snapshot((0..64).map(|i| (i as f64).sin()).collect());
        write_snapshot(&path, &s).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.field.nodal(), s.field.nodal());
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = snapshot(vec![0.5; 64]).encode();
        let truncated = &bytes[..bytes.len() - 9];
        assert!(matches!(FieldSnapshot::decode(truncated), Err(SnapshotError::CorruptSnapshot(_))));
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 3] ^= 0x10;
        assert!(matches!(FieldSnapshot::decode(&flipped), Err(SnapshotError::CorruptSnapshot(_))));
        let mut bumped = bytes.clone();
        bumped[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            FieldSnapshot::decode(&bumped),
            Err(SnapshotError::UnsupportedVersion { found: 2 })
        ));
        assert!(matches!(FieldSnapshot::decode(b"SHF"), Err(SnapshotError::CorruptSnapshot(_))));
    }
}
