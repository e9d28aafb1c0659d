//! Binary PGM (P5) storage for motion restriction maps.
//!
//! Pixel values are stored verbatim, row-major, with row 0 holding the
//! smallest world y. The PGM carries no geometry beyond its dimensions, so the
//! caller supplies resolution and origin on load.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::GridGeometry;
use crate::map::MotionRestrictionMap;

/// Upper bound on either dimension accepted when decoding.
pub const MAX_DIMENSION: usize = 1 << 15;

pub fn encode(map: &MotionRestrictionMap) -> Vec<u8> {
    let g = map.geometry();
    let mut out = format!("P5\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    out.extend_from_slice(map.cells());
    out
}

/// Decoded PGM raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Pgm(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_number(next_token(bytes, &mut pos)?, "width")?;
    let height = parse_number(next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_number(next_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Pgm(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 || width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(Error::Pgm(format!("unsupported dimensions {width}x{height}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Pgm("missing whitespace after header".into())),
    }
    let len = width * height;
    let data = &bytes[pos..];
    if data.len() < len {
        return Err(Error::Pgm(format!("raster truncated: {} of {len} bytes", data.len())));
    }
    Ok(Raster {
        width,
        height,
        pixels: data[..len].to_vec(),
    })
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Pgm("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() || *b == b'#' {
            break;
        }
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(tok: &[u8], what: &str) -> Result<usize> {
    if tok.is_empty() || tok.len() > 9 || !tok.iter().all(u8::is_ascii_digit) {
        return Err(Error::Pgm(format!(
            "invalid {what} {:?}",
            String::from_utf8_lossy(tok)
        )));
    }
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Pgm(format!("invalid {what}")))
}

/// Decodes a PGM into a map on a grid of the given resolution, centred on the
/// world origin.
pub fn decode_map(bytes: &[u8], resolution: f64) -> Result<MotionRestrictionMap> {
    let r = decode(bytes)?;
    let geom = GridGeometry::centered(r.width, r.height, resolution)?;
    MotionRestrictionMap::from_cells(geom, r.pixels)
}

/// Like [`decode_map`] but with an explicit origin (centre of cell `[0, 0]`).
pub fn decode_map_at(bytes: &[u8], resolution: f64, origin: Vec2) -> Result<MotionRestrictionMap> {
    let r = decode(bytes)?;
    let geom = GridGeometry::new(r.width, r.height, resolution, origin)?;
    MotionRestrictionMap::from_cells(geom, r.pixels)
}

pub fn store_pgm(map: &MotionRestrictionMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(map)).map_err(|e| Error::io(path, e))
}

pub fn load_pgm(path: impl AsRef<Path>, resolution: f64) -> Result<MotionRestrictionMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_255_is_all_permitted() {
        let mut bytes = b"P5\n4 3\n255\n".to_vec();
        bytes.extend([255u8; 12]);
        let m = decode_map(&bytes, 1.0).unwrap();
        assert_eq!(m.count_permitted(), 12);
    }

    #[test]
    fn zero_is_prohibited_one_is_permitted() {
        let mut bytes = b"P5 2 1 255\n".to_vec();
        bytes.extend([0u8, 1]);
        let m = decode_map(&bytes, 1.0).unwrap();
        assert!(!m.is_permitted(crate::Cell::new(0, 0)));
        assert!(m.is_permitted(crate::Cell::new(1, 0)));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 2\n# depth\n255\n".to_vec();
        bytes.extend([1u8, 2, 3, 4]);
        assert_eq!(decode(&bytes).unwrap().pixels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn malformed_headers_are_rejected() {
        assert!(decode(b"P2\n2 2\n255\n1234").is_err());
        assert!(decode(b"P5\n2 2\n65535\n12345678").is_err());
        assert!(decode(b"P5\n2 x\n255\n1234").is_err());
        assert!(decode(b"P5\n2 2\n255\n12").is_err());
        assert!(decode(b"P5\n0 2\n255\n").is_err());
        assert!(decode(b"P5\n99999999 99999999\n255\n").is_err());
        assert!(decode(b"P5\n2").is_err());
    }

    proptest! {
        #[test]
        fn store_load_is_identity(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cells: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
            let geom = GridGeometry::centered(w, h, 1.0).unwrap();
            let m = MotionRestrictionMap::from_cells(geom, cells).unwrap();
            let bytes = encode(&m);
            let back = decode_map(&bytes, 1.0).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let geom = GridGeometry::centered(7, 5, 1.0).unwrap();
        let cells: Vec<u8> = (0..35).map(|i| (i * 7) as u8).collect();
        let m = MotionRestrictionMap::from_cells(geom, cells).unwrap();
        store_pgm(&m, &path).unwrap();
        assert_eq!(load_pgm(&path, 1.0).unwrap(), m);
        assert!(load_pgm(dir.path().join("missing.pgm"), 1.0).is_err());
    }
}
