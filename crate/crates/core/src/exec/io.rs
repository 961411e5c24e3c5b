//! Raster file formats.
//!
//! Packed-bit layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CSGR"
//!      4     2  version (1)
//!      6     2  number of axes (2 or 3)
//!      8     2  cols
//!     10     2  rows
//!     12     2  depth (1 for 2D)
//!     14     2  reserved (0)
//!     16     -  ceil(cells / 8) payload bytes, cell i at bit (i % 8) of byte i / 8,
//!               cells in (depth, row, col) order
//! ```
//!
//! An archive is a plain concatenation of packed-bit records.
//! 2D rasters can also be written as binary PGM (`P5`, 0/255).

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::lang::Dim;

use super::Raster;

pub const MAGIC: &[u8; 4] = b"CSGR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum RasterIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad raster file: {0}")]
    Format(String),
}

pub fn write_packed<W: Write>(w: &mut W, r: &Raster) -> Result<(), RasterIoError> {
    let [depth, rows, cols] = r.shape();
    let dims = [cols, rows, depth];
    if dims.iter().any(|&d| d > u16::MAX as usize) {
        return Err(RasterIoError::Format("dimension exceeds 65535".into()));
    }
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&(r.dim().axes() as u16).to_le_bytes());
    for (i, d) in dims.iter().enumerate() {
        header[8 + 2 * i..10 + 2 * i].copy_from_slice(&(*d as u16).to_le_bytes());
    }
    w.write_all(&header)?;
    let nbytes = r.len().div_ceil(8);
    let mut payload = Vec::with_capacity(nbytes);
    for word in r.words() {
        payload.extend_from_slice(&word.to_le_bytes());
    }
    payload.truncate(nbytes);
    w.write_all(&payload)?;
    Ok(())
}

/// Reads one record; `Ok(None)` on a clean end of stream.
pub fn read_packed<R: Read>(rd: &mut R) -> Result<Option<Raster>, RasterIoError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = rd.read(&mut header[got..])?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(RasterIoError::Format("truncated header".into()));
        }
        got += n;
    }
    if &header[..4] != MAGIC {
        return Err(RasterIoError::Format("bad magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]) as usize;
    if u16_at(4) != VERSION as usize {
        return Err(RasterIoError::Format(format!("unsupported version {}", u16_at(4))));
    }
    let dim = match u16_at(6) {
        2 => Dim::Two,
        3 => Dim::Three,
        n => return Err(RasterIoError::Format(format!("bad axis count {n}"))),
    };
    let (cols, rows, depth) = (u16_at(8), u16_at(10), u16_at(12));
    if dim == Dim::Two && depth != 1 {
        return Err(RasterIoError::Format("2D raster with depth != 1".into()));
    }
    let mut r = Raster::empty(dim, [depth, rows, cols]);
    let mut payload = vec![0u8; r.len().div_ceil(8)];
    rd.read_exact(&mut payload).map_err(|_| RasterIoError::Format("truncated payload".into()))?;
    for i in 0..r.len() {
        if payload[i / 8] >> (i % 8) & 1 == 1 {
            r.set_index(i, true);
        }
    }
    Ok(Some(r))
}

pub fn read_archive<R: Read>(rd: &mut R) -> Result<Vec<Raster>, RasterIoError> {
    let mut out = Vec::new();
    while let Some(r) = read_packed(rd)? {
        out.push(r);
    }
    Ok(out)
}

/// Binary PGM of a 2D raster (occupied = 255).
pub fn write_pgm<W: Write>(w: &mut W, r: &Raster) -> Result<(), RasterIoError> {
    if r.dim() != Dim::Two {
        return Err(RasterIoError::Format("PGM output needs a 2D raster".into()));
    }
    let [_, rows, cols] = r.shape();
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = (0..r.len()).map(|i| if r.get_index(i) { 255 } else { 0 }).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a binary PGM; any nonzero pixel is occupied.
pub fn read_pgm<R: Read>(rd: &mut R) -> Result<Raster, RasterIoError> {
    let mut data = Vec::new();
    rd.read_to_end(&mut data)?;
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(RasterIoError::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(RasterIoError::Format("only binary PGM (P5) is supported".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| RasterIoError::Format(format!("bad PGM field `{s}`")));
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval > 255 {
        return Err(RasterIoError::Format("16-bit PGM is not supported".into()));
    }
    let body = data.get(pos..pos + rows * cols).ok_or_else(|| RasterIoError::Format("truncated PGM body".into()))?;
    let mut r = Raster::empty(Dim::Two, [1, rows, cols]);
    for (i, &b) in body.iter().enumerate() {
        if b != 0 {
            r.set_index(i, true);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_raster() -> impl Strategy<Value = Raster> {
        (prop_oneof![Just(Dim::Two), Just(Dim::Three)], 1usize..12, 1usize..12, 1usize..6)
            .prop_flat_map(|(dim, rows, cols, depth)| {
                let depth = if dim == Dim::Two { 1 } else { depth };
                let n = rows * cols * depth;
                proptest::collection::vec(any::<bool>(), n).prop_map(move |bits| {
                    let mut r = Raster::empty(dim, [depth, rows, cols]);
                    for (i, b) in bits.into_iter().enumerate() {
                        r.set_index(i, b);
                    }
                    r
                })
            })
    }

    proptest! {
        #[test]
        fn packed_round_trip(rs in proptest::collection::vec(arb_raster(), 1..4)) {
            let mut buf = Vec::new();
            for r in &rs {
                write_packed(&mut buf, r).unwrap();
            }
            prop_assert_eq!(read_archive(&mut buf.as_slice()).unwrap(), rs);
        }
    }

    #[test]
    fn header_layout() {
        let mut r = Raster::empty_2d(64);
        r.set(0, 0, 1, true);
        let mut buf = Vec::new();
        write_packed(&mut buf, &r).unwrap();
        assert_eq!(buf.len(), 16 + 512);
        assert_eq!(&buf[..16], &[b'C', b'S', b'G', b'R', 1, 0, 2, 0, 64, 0, 64, 0, 1, 0, 0, 0]);
        assert_eq!(buf[16], 0b10);
    }

    #[test]
    fn pgm_round_trip() {
        let mut r = Raster::empty(Dim::Two, [1, 5, 7]);
        r.set(0, 2, 3, true);
        r.set(0, 4, 6, true);
        let mut buf = Vec::new();
        write_pgm(&mut buf, &r).unwrap();
        assert!(buf.starts_with(b"P5\n7 5\n255\n"));
        assert_eq!(read_pgm(&mut buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_packed(&mut &b"NOPE0000000000000000"[..]).is_err());
        assert!(read_packed(&mut &b"CSGR"[..]).is_err());
        assert!(read_packed(&mut &b""[..]).unwrap().is_none());
        assert!(write_pgm(&mut Vec::new(), &Raster::empty_3d(4)).is_err());
    }
}
