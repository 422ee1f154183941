//! Binary batch format.
//!
//! Little-endian layout: magic `"BEIG"` (4 bytes), version `u32 = 1`,
//! `B: u32`, `C: u32`, then `B*C*C` IEEE-754 doubles, row-major per
//! matrix, matrices consecutive. No padding, no checksum. Round-trips
//! are bit-exact, including signed zeros.

use crate::batch::MatrixBatch;
use crate::error::{EigError, Result};

const MAGIC: &[u8; 4] = b"BEIG";
const VERSION: u32 = 1;

pub fn write_batch(m: &MatrixBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.batch_size() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for &x in m.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn read_batch(bytes: &[u8]) -> Result<MatrixBatch> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EigError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(EigError::TruncatedPayload {
            expected: 16,
            actual: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(EigError::BadVersion(version));
    }
    let b = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let count = b
        .checked_mul(c)
        .and_then(|n| n.checked_mul(c))
        .ok_or(EigError::BadMagic)?;
    let expected = 16 + count * 8;
    if bytes.len() != expected {
        return Err(EigError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes[16..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    MatrixBatch::new(b, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn roundtrip_small_batch() {
        let data: Vec<f64> = (0..18).map(|i| i as f64 * 0.25 - 2.0).collect();
        let m = MatrixBatch::new(2, 3, data).unwrap();
        let back = read_batch(&write_batch(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_payload_detected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"BEIG");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        // B=1, C=2 needs 4 scalars; provide 3.
        for _ in 0..3 {
            bytes.extend_from_slice(&1.0f64.to_le_bytes());
        }
        match read_batch(&bytes) {
            Err(EigError::TruncatedPayload { expected, actual }) => {
                assert_eq!(expected, 16 + 4 * 8);
                assert_eq!(actual, bytes.len());
            }
            other => panic!("expected TruncatedPayload, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_detected() {
        let mut bytes = write_batch(&MatrixBatch::identity(1, 2));
        bytes[0] = b'X';
        assert!(matches!(read_batch(&bytes), Err(EigError::BadMagic)));
    }

    #[test]
    fn bad_version_detected() {
        let mut bytes = write_batch(&MatrixBatch::identity(1, 2));
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(read_batch(&bytes), Err(EigError::BadVersion(7))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(values in proptest::collection::vec(
            prop_oneof![
                any::<f64>().prop_filter("finite", |x| x.is_finite()),
                Just(0.0f64),
                Just(-0.0f64),
            ],
            4,
        )) {
            let m = MatrixBatch::new(1, 2, values).unwrap();
            let back = read_batch(&write_batch(&m)).unwrap();
            for (a, b) in back.data().iter().zip(m.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
