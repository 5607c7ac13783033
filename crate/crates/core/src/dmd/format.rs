//! Binary mode file: little-endian `DMDM | version u32 | k u32 | n u32 |
//! m u32 | has_amplitudes u32`, then `Phi` (row-major n x k), `Lambda` (k)
//! and `B` (k) as interleaved (re, im) `f64` pairs. `B` is zero-filled when
//! amplitudes are absent.

use super::{DmdError, DmdModes, Result, C64};
use nalgebra::DMatrix;
use std::path::Path;

pub const DMD_MAGIC: &[u8; 4] = b"DMDM";
pub const DMD_VERSION: u32 = 1;

impl DmdModes {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, k) = self.modes.shape();
        let mut out = Vec::with_capacity(24 + 16 * (n * k + 2 * k));
        out.extend_from_slice(DMD_MAGIC);
        for v in [DMD_VERSION, k as u32, n as u32, self.frame_count as u32, self.amplitudes.is_some() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut push = |z: C64| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        };
        for i in 0..n {
            for j in 0..k {
                push(self.modes[(i, j)]);
            }
        }
        self.eigenvalues.iter().for_each(|&z| push(z));
        match &self.amplitudes {
            Some(b) => b.iter().for_each(|&z| push(z)),
            None => (0..k).for_each(|_| push(C64::new(0.0, 0.0))),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != DMD_MAGIC {
            return Err(DmdError::Format("missing DMDM header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        if word(4) as u32 != DMD_VERSION {
            return Err(DmdError::Format(format!("unsupported version {}", word(4))));
        }
        let (k, n, m, has_b) = (word(8), word(12), word(16), word(20) != 0);
        let expected = 24 + 16 * (n * k + 2 * k);
        if bytes.len() != expected {
            return Err(DmdError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let z = |idx: usize| {
            let o = 24 + 16 * idx;
            C64::new(
                f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()),
                f64::from_le_bytes(bytes[o + 8..o + 16].try_into().unwrap()),
            )
        };
        let modes = DMatrix::from_fn(n, k, |i, j| z(i * k + j));
        let eig = (0..k).map(|j| z(n * k + j)).collect();
        let amps = has_b.then(|| (0..k).map(|j| z(n * k + k + j)).collect());
        DmdModes::from_parts(modes, eig, amps, m)
    }
}

pub fn write_modes(path: impl AsRef<Path>, modes: &DmdModes) -> Result<()> {
    std::fs::write(path, modes.to_bytes())?;
    Ok(())
}

pub fn read_modes(path: impl AsRef<Path>) -> Result<DmdModes> {
    DmdModes::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_values_bitwise() {
        let modes = DMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 * 0.1, -(j as f64) / 3.0));
        let m = DmdModes::from_parts(
            modes,
            vec![C64::new(1.0, 0.0), C64::new(0.3, -0.7)],
            Some(vec![C64::new(2.0, 1.0), C64::new(-0.5, 0.25)]),
            9,
        )
        .unwrap();
        let back = DmdModes::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.modes(), m.modes());
        assert_eq!(back.eigenvalues(), m.eigenvalues());
        assert_eq!(back.amplitudes(), m.amplitudes());
        assert_eq!(back.frame_count(), 9);
        assert!(DmdModes::from_bytes(&m.to_bytes()[..30]).is_err());
    }
}
