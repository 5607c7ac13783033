use super::{DmdModes, Result, C64};
use std::io::Write;
use std::ops::Range;

/// Per-mode summary: growth/oscillation and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRecord {
    pub index: usize,
    pub eigenvalue: C64,
    pub modulus: f64,
    /// Continuous-time exponent `ln(lambda) * frame_rate`; the imaginary part
    /// is the angular frequency in rad/s.
    pub omega: C64,
    pub amplitude: f64,
}

/// Mode records sorted by amplitude magnitude, largest first.
pub fn mode_diagnostics(modes: &DmdModes, frame_rate: f64) -> Result<Vec<ModeRecord>> {
    let b = modes.require_amplitudes()?;
    let mut out: Vec<ModeRecord> = modes
        .eigenvalues
        .iter()
        .zip(b)
        .enumerate()
        .map(|(index, (&lambda, amp))| ModeRecord {
            index,
            eigenvalue: lambda,
            modulus: lambda.norm(),
            omega: lambda.ln() * frame_rate,
            amplitude: amp.norm(),
        })
        .collect();
    out.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    Ok(out)
}

pub fn write_diagnostics_csv<W: Write>(records: &[ModeRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "mode,re_lambda,im_lambda,abs_lambda,omega_re,omega_im,abs_b")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.index, r.eigenvalue.re, r.eigenvalue.im, r.modulus, r.omega.re, r.omega.im, r.amplitude
        )?;
    }
    Ok(())
}

/// `b_j lambda_j^t` over the given frames: the temporal oscillation of one mode.
pub fn time_dynamics(modes: &DmdModes, mode: usize, frames: Range<usize>) -> Result<Vec<C64>> {
    let b = modes.require_amplitudes()?[mode];
    let lambda = modes.eigenvalues[mode];
    Ok(frames.map(|t| b * lambda.powu(t as u32)).collect())
}

/// Eigenvalues on the complex plane with the unit circle, `size` pixels square.
/// Marker brightness follows the amplitude rank.
pub fn render_spectrum(modes: &DmdModes, size: u32) -> image::RgbImage {
    let mut img = image::RgbImage::from_pixel(size, size, image::Rgb([255, 255, 255]));
    let extent = modes
        .eigenvalues
        .iter()
        .map(|l| l.re.abs().max(l.im.abs()))
        .fold(1.0f64, f64::max)
        * 1.1;
    let half = size as f64 / 2.0;
    let to_px = |re: f64, im: f64| {
        let x = half + re / extent * (half - 1.0);
        let y = half - im / extent * (half - 1.0);
        (x.round() as i64, y.round() as i64)
    };
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && (x as u32) < size && (y as u32) < size {
            img.put_pixel(x as u32, y as u32, image::Rgb(c));
        }
    };
    for i in 0..size as i64 {
        put(i, half as i64, [200, 200, 200]);
        put(half as i64, i, [200, 200, 200]);
    }
    let steps = (size * 8) as usize;
    for s in 0..steps {
        let a = s as f64 / steps as f64 * std::f64::consts::TAU;
        let (x, y) = to_px(a.cos(), a.sin());
        put(x, y, [40, 40, 200]);
    }
    let weights: Vec<f64> = modes
        .amplitudes()
        .map(|b| b.iter().map(|v| v.norm()).collect())
        .unwrap_or_else(|| vec![1.0; modes.rank()]);
    let wmax = weights.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    for (l, w) in modes.eigenvalues.iter().zip(&weights) {
        let (x, y) = to_px(l.re, l.im);
        let shade = (200.0 * (1.0 - (w / wmax).sqrt())) as u8;
        for dx in -2..=2 {
            for dy in -2..=2 {
                put(x + dx, y + dy, [220, shade, shade]);
            }
        }
    }
    img
}
