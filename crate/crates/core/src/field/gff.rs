//! GFF binary container, little-endian:
//!
//! ```text
//! "GFF1" | u32 header_len | JSON header | positions N×3 f32 | dino N×Dd f32
//!        | clip level 0..2 each N×Dc f32 | [labels N×u16]
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{FieldError, SemanticPointField, CLIP_LEVELS};

pub const GFF_MAGIC: &[u8; 4] = b"GFF1";

/// Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GffHeader {
    pub n: usize,
    pub d_dino: usize,
    pub d_clip: usize,
    pub levels: usize,
    pub has_labels: bool,
}

fn write_f32s(w: &mut impl Write, v: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn write_gff(field: &SemanticPointField, w: &mut impl Write) -> Result<(), FieldError> {
    let (d_dino, d_clip) = field.dims();
    let header = GffHeader {
        n: field.len(),
        d_dino,
        d_clip,
        levels: CLIP_LEVELS,
        has_labels: field.labels().is_some(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(GFF_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let (positions, dino, clip) = field.blocks();
    write_f32s(w, positions.as_flattened())?;
    write_f32s(w, dino)?;
    for block in clip {
        write_f32s(w, block)?;
    }
    if let Some(labels) = field.labels() {
        let mut buf = Vec::with_capacity(labels.len() * 2);
        for l in labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, message: impl Into<String>) -> FieldError {
        FieldError::Format { offset: self.pos as u64, message: message.into() }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], FieldError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.fail(format!(
                "truncated {what}: need {len} bytes, {} remain",
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>, FieldError> {
        let len = count.checked_mul(4).ok_or_else(|| self.fail("block size overflow"))?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn read_gff(bytes: &[u8]) -> Result<SemanticPointField, FieldError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != GFF_MAGIC {
        if &magic[..3] == b"GFF" {
            return Err(FieldError::VersionMismatch(String::from_utf8_lossy(magic).into_owned()));
        }
        c.pos = 0;
        return Err(c.fail("bad magic"));
    }
    let hl = c.take(4, "header length")?;
    let header_len = u32::from_le_bytes([hl[0], hl[1], hl[2], hl[3]]) as usize;
    let header_start = c.pos;
    let raw = c.take(header_len, "header")?;
    let header: GffHeader = serde_json::from_slice(raw).map_err(|e| FieldError::Format {
        offset: header_start as u64,
        message: format!("header: {e}"),
    })?;
    if header.levels != CLIP_LEVELS {
        c.pos = header_start;
        return Err(c.fail(format!("expected {CLIP_LEVELS} clip levels, header says {}", header.levels)));
    }
    if header.n == 0 || header.d_dino == 0 || header.d_clip == 0 {
        c.pos = header_start;
        return Err(c.fail("empty field or zero feature dimension"));
    }
    let n = header.n;
    let flat = c.f32s(n.checked_mul(3).ok_or_else(|| c.fail("n overflow"))?, "positions")?;
    let positions: Vec<[f32; 3]> = flat.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
    let dino = c.f32s(n.saturating_mul(header.d_dino), "dino block")?;
    let mut clip: [Vec<f32>; CLIP_LEVELS] = Default::default();
    for (level, block) in clip.iter_mut().enumerate() {
        *block = c.f32s(n.saturating_mul(header.d_clip), &format!("clip level {level}"))?;
    }
    let labels = if header.has_labels {
        let raw = c.take(n.saturating_mul(2), "labels")?;
        Some(raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect())
    } else {
        None
    };
    if c.pos != bytes.len() {
        return Err(c.fail(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(FieldError::NonFinite(i));
    }
    Ok(SemanticPointField::from_parts(positions, dino, clip, labels, header.d_dino, header.d_clip, None))
}

#[cfg(test)]
mod tests {
    use super::super::test_util::random_points;
    use super::super::{build_field, load_field, save_field};
    use super::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64;
    use sha2::{Digest, Sha256};

    fn bytes_of(f: &SemanticPointField) -> Vec<u8> {
        let mut out = Vec::new();
        write_gff(f, &mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_with_and_without_labels() {
        let mut rng = Pcg64::seed_from_u64(1);
        for labels in [false, true] {
            let f = build_field(random_points(&mut rng, 37, 8, 16, labels)).unwrap();
            let g = read_gff(&bytes_of(&f)).unwrap();
            assert_eq!(f, g);
            assert_eq!(g.labels().is_some(), labels);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.gff");
        let mut rng = Pcg64::seed_from_u64(2);
        let f = build_field(random_points(&mut rng, 10, 4, 4, true)).unwrap();
        save_field(&f, &path).unwrap();
        assert_eq!(load_field(&path).unwrap(), f);
    }

    #[test]
    fn header_layout_is_fixed() {
        let mut rng = Pcg64::seed_from_u64(3);
        let f = build_field(random_points(&mut rng, 2, 3, 5, false)).unwrap();
        let b = bytes_of(&f);
        assert_eq!(&b[..4], b"GFF1");
        let hl = u32::from_le_bytes([b[4], b[5], b[6], b[7]]) as usize;
        let header = std::str::from_utf8(&b[8..8 + hl]).unwrap();
        assert_eq!(header, r#"{"n":2,"d_dino":3,"d_clip":5,"levels":3,"has_labels":false}"#);
        assert_eq!(b.len(), 8 + hl + 4 * 2 * (3 + 3 + 3 * 5));
        // row 1 position sits right after row 0
        let p1x = f32::from_le_bytes(b[8 + hl + 12..8 + hl + 16].try_into().unwrap());
        assert_eq!(p1x, f.raw_position(1)[0]);
    }

    #[test]
    fn save_is_byte_deterministic() {
        let mut rng = Pcg64::seed_from_u64(4);
        let pts = random_points(&mut rng, 10_000, 8, 8, true);
        let a = bytes_of(&build_field(pts.clone()).unwrap());
        let b = bytes_of(&build_field(pts).unwrap());
        assert_eq!(Sha256::digest(&a), Sha256::digest(&b));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let mut rng = Pcg64::seed_from_u64(5);
        let f = build_field(random_points(&mut rng, 5, 4, 4, false)).unwrap();
        let b = bytes_of(&f);
        let cut = b.len() - 3;
        match read_gff(&b[..cut]) {
            Err(FieldError::Format { offset, message }) => {
                assert!(message.contains("clip level 2"), "{message}");
                assert_eq!(offset as usize, cut - (4 * 5 * 4 - 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_gff(&b[..6]), Err(FieldError::Format { offset: 4, .. })));
    }

    #[test]
    fn magic_and_version() {
        let mut rng = Pcg64::seed_from_u64(6);
        let mut b = bytes_of(&build_field(random_points(&mut rng, 2, 2, 2, false)).unwrap());
        b[3] = b'2';
        assert!(matches!(read_gff(&b), Err(FieldError::VersionMismatch(v)) if v == "GFF2"));
        b[0] = b'X';
        assert!(matches!(read_gff(&b), Err(FieldError::Format { offset: 0, .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut rng = Pcg64::seed_from_u64(7);
        let mut b = bytes_of(&build_field(random_points(&mut rng, 2, 2, 2, false)).unwrap());
        b.push(0);
        assert!(matches!(read_gff(&b), Err(FieldError::Format { .. })));
    }
}
