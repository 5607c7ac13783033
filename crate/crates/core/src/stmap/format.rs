//! Binary STMap container.
//!
//! Little-endian header `STMP | version u32 | n u32 | m u32 | channels u32 |
//! frame_rate f64` followed by row-major `u8` pixels.

use super::{Result, Stmap, StmapError};
use std::io::{Read, Write};
use std::path::Path;

pub const STMAP_MAGIC: &[u8; 4] = b"STMP";
pub const STMAP_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8;

impl Stmap {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels().len());
        out.extend_from_slice(STMAP_MAGIC);
        out.extend_from_slice(&STMAP_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n() as u32).to_le_bytes());
        out.extend_from_slice(&(self.m() as u32).to_le_bytes());
        out.extend_from_slice(&3u32.to_le_bytes());
        out.extend_from_slice(&self.frame_rate().to_le_bytes());
        out.extend_from_slice(self.pixels());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != STMAP_MAGIC {
            return Err(StmapError::Format("missing STMP header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != STMAP_VERSION {
            return Err(StmapError::Format(format!("unsupported version {version}")));
        }
        let (n, m, channels) = (word(8) as usize, word(12) as usize, word(16));
        if channels != 3 {
            return Err(StmapError::Format(format!("expected 3 channels, found {channels}")));
        }
        let frame_rate = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() != n * m * 3 {
            return Err(StmapError::Format(format!(
                "payload holds {} bytes, header declares {}",
                body.len(),
                n * m * 3
            )));
        }
        Stmap::new(n, m, frame_rate, "", body.to_vec())
    }
}

pub fn write_stmap(path: impl AsRef<Path>, stmap: &Stmap) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&stmap.to_bytes())?;
    Ok(())
}

pub fn read_stmap(path: impl AsRef<Path>) -> Result<Stmap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Stmap::from_bytes(&bytes)
}
