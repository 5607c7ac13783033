//! Scanline sampling and spatial-temporal map (STMap) assembly.
//!
//! An STMap stacks one scanline sample per video frame: row `i` is the
//! `i`-th pixel along the scanline, column `t` is frame `t`. Rows therefore
//! index space and columns index time.

mod augment;
mod format;
mod frames;

pub use augment::{crop_and_augment, crop_tiles, tile_origins, warp_pair, Affine, AugmentSpec, TransformKind};
pub use format::{read_stmap, write_stmap, STMAP_MAGIC, STMAP_VERSION};
pub use frames::{read_frame, read_frame_dir};

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum StmapError {
    #[error("path point ({row}, {col}) lies outside a {rows}x{cols} frame")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("frame source holds fewer than two frames")]
    EmptySource,
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    InconsistentFrameSize {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("tile {tile} does not fit a {rows}x{cols} map")]
    TileTooLarge { tile: usize, rows: usize, cols: usize },
    #[error("invalid scanline path: {0}")]
    InvalidPath(String),
    #[error("malformed STMap data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = StmapError> = std::result::Result<T, E>;

/// An 8-bit RGB video frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols * 3 {
            return Err(StmapError::Format(format!(
                "frame buffer holds {} bytes, expected {}",
                data.len(),
                rows * cols * 3
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, color: Rgb) -> Self {
        let data = std::iter::repeat_n(color, rows * cols).flatten().collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.cols + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: Rgb) {
        let i = (row * self.cols + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScanlinePathRepr {
    lane_id: String,
    direction_flag: bool,
    points: Vec<[usize; 2]>,
}

/// Ordered pixel coordinates along a lane, sampled once per frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScanlinePathRepr", into = "ScanlinePathRepr")]
pub struct ScanlinePath {
    lane_id: String,
    direction_flag: bool,
    points: Vec<(usize, usize)>,
}

impl ScanlinePath {
    /// Validates that the path has at least two points and never backtracks:
    /// the distance from the first point grows strictly with the index.
    pub fn new(
        lane_id: impl Into<String>,
        direction_flag: bool,
        points: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(StmapError::InvalidPath(
                "a scanline needs at least two points".into(),
            ));
        }
        let (r0, c0) = points[0];
        let mut last = 0.0f64;
        for (i, &(r, c)) in points.iter().enumerate().skip(1) {
            let dr = r as f64 - r0 as f64;
            let dc = c as f64 - c0 as f64;
            let d = dr.hypot(dc);
            if d <= last {
                return Err(StmapError::InvalidPath(format!(
                    "point {i} ({r}, {c}) does not advance along the path"
                )));
            }
            last = d;
        }
        Ok(Self {
            lane_id: lane_id.into(),
            direction_flag,
            points,
        })
    }

    /// Straight vertical path down one image column, rows `start..end`.
    pub fn vertical(lane_id: impl Into<String>, col: usize, start: usize, end: usize) -> Result<Self> {
        Self::new(lane_id, true, (start..end).map(|r| (r, col)).collect())
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn lane_id(&self) -> &str {
        &self.lane_id
    }

    pub fn direction_flag(&self) -> bool {
        self.direction_flag
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

impl TryFrom<ScanlinePathRepr> for ScanlinePath {
    type Error = StmapError;

    fn try_from(r: ScanlinePathRepr) -> Result<Self> {
        Self::new(
            r.lane_id,
            r.direction_flag,
            r.points.into_iter().map(|[a, b]| (a, b)).collect(),
        )
    }
}

impl From<ScanlinePath> for ScanlinePathRepr {
    fn from(p: ScanlinePath) -> Self {
        Self {
            lane_id: p.lane_id,
            direction_flag: p.direction_flag,
            points: p.points.into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

/// Spatial-temporal map: `n` scanline pixels by `m` frames by RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Stmap {
    n: usize,
    m: usize,
    frame_rate: f64,
    lane_id: String,
    pixels: Vec<u8>,
}

impl Stmap {
    pub fn new(n: usize, m: usize, frame_rate: f64, lane_id: impl Into<String>, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != n * m * 3 {
            return Err(StmapError::Format(format!(
                "pixel buffer holds {} bytes, expected {}",
                pixels.len(),
                n * m * 3
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(StmapError::Format(format!("frame rate {frame_rate} must be positive")));
        }
        Ok(Self {
            n,
            m,
            frame_rate,
            lane_id: lane_id.into(),
            pixels,
        })
    }

    /// Space dimension (pixels along the scanline).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Time dimension (frame count).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn lane_id(&self) -> &str {
        &self.lane_id
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, t: usize) -> Rgb {
        let i = (row * self.m + t) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, t: usize, rgb: Rgb) {
        let i = (row * self.m + t) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn column(&self, t: usize) -> Vec<Rgb> {
        (0..self.n).map(|r| self.pixel(r, t)).collect()
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.m as u32, self.n as u32, self.pixels.clone())
            .expect("buffer size matches dimensions")
    }
}

/// Single-channel real map with values in `[0, 1]`, row-major `n x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayMap {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl GrayMap {
    pub fn new(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * m {
            return Err(StmapError::Format(format!(
                "gray buffer holds {} values, expected {}",
                values.len(),
                n * m
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(StmapError::Format(format!("gray value {v} outside [0, 1]")));
        }
        Ok(Self { n, m, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, t: usize) -> f64 {
        self.values[row * self.m + t]
    }

    /// Column-major `n x m` matrix view for the linear-algebra stages.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.m, &self.values)
    }
}

/// Float raster with interleaved channels, row-major. Used for tiles fed to
/// the network and for augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        Self {
            rows,
            cols,
            channels,
            data: vec![0.0; rows * cols * channels],
        }
    }

    pub fn from_gray(g: &GrayMap) -> Self {
        Self {
            rows: g.n,
            cols: g.m,
            channels: 1,
            data: g.values.clone(),
        }
    }

    /// RGB raster scaled to `[0, 1]`.
    pub fn from_stmap(s: &Stmap) -> Self {
        Self {
            rows: s.n,
            cols: s.m,
            channels: 3,
            data: s.pixels.iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.cols + col) * self.channels + ch]
    }

    pub fn at_mut(&mut self, row: usize, col: usize, ch: usize) -> &mut f64 {
        &mut self.data[(row * self.cols + col) * self.channels + ch]
    }

    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Raster {
        let mut out = Raster::zeros(rows, cols, self.channels);
        for r in 0..rows {
            let src = ((row0 + r) * self.cols + col0) * self.channels;
            let dst = r * cols * self.channels;
            out.data[dst..dst + cols * self.channels]
                .copy_from_slice(&self.data[src..src + cols * self.channels]);
        }
        out
    }
}

/// Nearest-pixel sample of `frame` at every path point.
pub fn sample_scanline(frame: &Frame, path: &ScanlinePath) -> Result<Vec<Rgb>> {
    path.points
        .iter()
        .map(|&(row, col)| {
            if row >= frame.rows || col >= frame.cols {
                Err(StmapError::OutOfBounds {
                    row,
                    col,
                    rows: frame.rows,
                    cols: frame.cols,
                })
            } else {
                Ok(frame.pixel(row, col))
            }
        })
        .collect()
}

/// Stacks one scanline sample per frame into an STMap; column `t` is frame `t`.
pub fn build_stmap<I>(frames: I, path: &ScanlinePath, frame_rate: f64) -> Result<Stmap>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Frame>,
{
    use std::borrow::Borrow;

    let n = path.len();
    let mut columns: Vec<Vec<Rgb>> = Vec::new();
    let mut dims = None;
    for (index, frame) in frames.into_iter().enumerate() {
        let frame = frame.borrow();
        let got = (frame.rows, frame.cols);
        match dims {
            None => dims = Some(got),
            Some(expected) if expected != got => {
                return Err(StmapError::InconsistentFrameSize { index, got, expected });
            }
            Some(_) => {}
        }
        columns.push(sample_scanline(frame, path)?);
    }
    let m = columns.len();
    if m < 2 {
        return Err(StmapError::EmptySource);
    }
    let mut pixels = vec![0u8; n * m * 3];
    for (t, col) in columns.iter().enumerate() {
        for (r, rgb) in col.iter().enumerate() {
            let i = (r * m + t) * 3;
            pixels[i..i + 3].copy_from_slice(rgb);
        }
    }
    Stmap::new(n, m, frame_rate, path.lane_id(), pixels)
}

/// BT.601 luma, scaled to `[0, 1]`.
pub fn luma(rgb: Rgb) -> f64 {
    let v = (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64) / 255.0;
    v.clamp(0.0, 1.0)
}

pub fn to_gray(stmap: &Stmap) -> GrayMap {
    let values = stmap
        .pixels
        .chunks_exact(3)
        .map(|c| luma([c[0], c[1], c[2]]))
        .collect();
    GrayMap {
        n: stmap.n,
        m: stmap.m,
        values,
    }
}
