//! Strand extraction, lower-boundary tracing and pixel-to-feet calibration.

use crate::autolabel::SegMask;
use crate::morph;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("row {y_pix} lies outside the calibrated range [{min}, {max}]")]
    OutOfCalibrationRange { y_pix: f64, min: f64, max: f64 },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TrajError> = std::result::Result<T, E>;

pub const DEFAULT_MIN_AREA: usize = 50;
/// Fraction of columns with more than one vertical run above which a
/// strand is flagged as probably containing merged vehicles.
pub const OVERLAP_COLUMN_FRACTION: f64 = 0.2;

/// One 8-connected group of strand pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strand {
    pub id: usize,
    /// Sorted `(row, col)` pairs.
    pub pixels: Vec<(usize, usize)>,
    /// `(row_min, row_max, col_min, col_max)`.
    pub bbox: (usize, usize, usize, usize),
    pub area: usize,
    /// Set when more than 20% of occupied columns hold two or more separate
    /// vertical runs, which usually means several vehicles merged.
    pub overlap_flag: bool,
}

impl Strand {
    fn from_pixels(id: usize, pixels: Vec<(usize, usize)>) -> Self {
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for &(r, c) in &pixels {
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
        // Runs per column: pixels are sorted by row then column, so group
        // rows per column first.
        let width = c1 - c0 + 1;
        let mut rows_in_col: Vec<Vec<usize>> = vec![Vec::new(); width];
        for &(r, c) in &pixels {
            rows_in_col[c - c0].push(r);
        }
        let occupied = rows_in_col.iter().filter(|v| !v.is_empty()).count();
        let multi = rows_in_col
            .iter()
            .filter(|rows| rows.windows(2).any(|w| w[1] > w[0] + 1))
            .count();
        Self {
            id,
            area: pixels.len(),
            pixels,
            bbox: (r0, r1, c0, c1),
            overlap_flag: occupied > 0 && multi as f64 > OVERLAP_COLUMN_FRACTION * occupied as f64,
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.pixels.binary_search(&(row, col)).is_ok()
    }
}

/// 8-connected components of label-1 pixels with at least `min_area`
/// pixels, numbered in scan order of their first pixel.
pub fn extract_strands(mask: &SegMask, min_area: usize) -> Vec<Strand> {
    morph::components8(mask.labels(), mask.rows(), mask.cols())
        .into_iter()
        .filter(|c| c.len() >= min_area.max(1))
        .enumerate()
        .map(|(id, px)| Strand::from_pixels(id, px))
        .collect()
}

/// Per-column extremal strand row over time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelTrajectory {
    pub strand_id: usize,
    /// `(frame, row)` with strictly increasing frames.
    pub samples: Vec<(usize, usize)>,
    /// Inclusive column runs inside the bounding box holding no pixels.
    pub gaps: Vec<(usize, usize)>,
}

/// Traces the vehicle front: the largest row in each column when rows grow
/// with distance (`direction_flag`), otherwise the smallest.
pub fn lower_boundary(strand: &Strand, direction_flag: bool) -> PixelTrajectory {
    let (_, _, c0, c1) = strand.bbox;
    let mut best: Vec<Option<usize>> = vec![None; c1 - c0 + 1];
    for &(r, c) in &strand.pixels {
        let slot = &mut best[c - c0];
        *slot = Some(match *slot {
            None => r,
            Some(b) if direction_flag => b.max(r),
            Some(b) => b.min(r),
        });
    }
    let mut samples = Vec::new();
    let mut gaps = Vec::new();
    let mut gap_start: Option<usize> = None;
    for (i, b) in best.iter().enumerate() {
        let col = c0 + i;
        match b {
            Some(r) => {
                if let Some(s) = gap_start.take() {
                    gaps.push((s, col - 1));
                }
                samples.push((col, *r));
            }
            None => {
                gap_start.get_or_insert(col);
            }
        }
    }
    PixelTrajectory {
        strand_id: strand.id,
        samples,
        gaps,
    }
}

/// Piecewise-linear map from scanline row to roadway distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationRepr", into = "CalibrationRepr")]
pub struct CalibrationTable {
    frame_rate: f64,
    direction_flag: bool,
    anchors: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CalibrationRepr {
    frame_rate: f64,
    direction_flag: bool,
    anchors: Vec<[f64; 2]>,
}

impl TryFrom<CalibrationRepr> for CalibrationTable {
    type Error = TrajError;
    fn try_from(r: CalibrationRepr) -> Result<Self> {
        CalibrationTable::new(r.frame_rate, r.direction_flag, r.anchors.into_iter().map(|[p, d]| (p, d)).collect())
    }
}

impl From<CalibrationTable> for CalibrationRepr {
    fn from(c: CalibrationTable) -> Self {
        Self {
            frame_rate: c.frame_rate,
            direction_flag: c.direction_flag,
            anchors: c.anchors.iter().map(|&(p, d)| [p, d]).collect(),
        }
    }
}

impl CalibrationTable {
    /// Anchors are `(pixel row, feet)`. Rows must strictly increase; the
    /// distances must strictly increase when `direction_flag` is set and
    /// strictly decrease otherwise.
    pub fn new(frame_rate: f64, direction_flag: bool, anchors: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |m: &str| Err(TrajError::InvalidCalibration(m.into()));
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return bad("frame rate must be positive");
        }
        if anchors.len() < 2 {
            return bad("at least two anchors are required");
        }
        if anchors.iter().any(|(p, d)| !p.is_finite() || !d.is_finite()) {
            return bad("anchors must be finite");
        }
        if anchors.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("anchor rows must strictly increase");
        }
        let monotone = anchors
            .windows(2)
            .all(|w| if direction_flag { w[1].1 > w[0].1 } else { w[1].1 < w[0].1 });
        if !monotone {
            return bad("anchor distances must be strictly monotone in the travel direction");
        }
        Ok(Self {
            frame_rate,
            direction_flag,
            anchors,
        })
    }

    /// Evenly spaced rows `0..n` spanning `0..=length_ft` (reversed when
    /// distance decreases with row).
    pub fn linear(frame_rate: f64, direction_flag: bool, n: usize, length_ft: f64) -> Result<Self> {
        let last = n.saturating_sub(1) as f64;
        let anchors = if direction_flag {
            vec![(0.0, 0.0), (last, length_ft)]
        } else {
            vec![(0.0, length_ft), (last, 0.0)]
        };
        Self::new(frame_rate, direction_flag, anchors)
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn direction_flag(&self) -> bool {
        self.direction_flag
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn pixel_range(&self) -> (f64, f64) {
        (self.anchors[0].0, self.anchors[self.anchors.len() - 1].0)
    }

    /// `(min feet, max feet)` regardless of direction.
    pub fn feet_range(&self) -> (f64, f64) {
        let a = self.anchors[0].1;
        let b = self.anchors[self.anchors.len() - 1].1;
        (a.min(b), a.max(b))
    }

    pub fn pixel_to_feet(&self, y_pix: f64) -> Result<f64> {
        let (min, max) = self.pixel_range();
        if !(y_pix >= min && y_pix <= max) {
            return Err(TrajError::OutOfCalibrationRange { y_pix, min, max });
        }
        let k = self.anchors.partition_point(|a| a.0 <= y_pix);
        if k == self.anchors.len() {
            return Ok(self.anchors[k - 1].1);
        }
        let (p0, d0) = self.anchors[k - 1];
        let (p1, d1) = self.anchors[k];
        if y_pix == p0 {
            return Ok(d0);
        }
        Ok(d0 + (d1 - d0) * (y_pix - p0) / (p1 - p0))
    }

    /// Inverse of [`pixel_to_feet`](Self::pixel_to_feet); `None` outside
    /// the calibrated distances.
    pub fn feet_to_pixel(&self, feet: f64) -> Option<f64> {
        let (min, max) = self.feet_range();
        if !(feet >= min && feet <= max) {
            return None;
        }
        for w in self.anchors.windows(2) {
            let ((p0, d0), (p1, d1)) = (w[0], w[1]);
            let (lo, hi) = (d0.min(d1), d0.max(d1));
            if feet >= lo && feet <= hi {
                if feet == d0 {
                    return Some(p0);
                }
                if feet == d1 {
                    return Some(p1);
                }
                return Some(p0 + (p1 - p0) * (feet - d0) / (d1 - d0));
            }
        }
        None
    }

    /// Largest feet gap between consecutive rows: the size of one
    /// calibration cell.
    pub fn max_cell_ft(&self) -> f64 {
        self.anchors
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSample {
    pub frame: usize,
    pub time_s: f64,
    pub y_pix: f64,
    pub position_ft: f64,
}

/// Calibrated trajectory with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTrajectory {
    pub strand_id: usize,
    pub samples: Vec<WorldSample>,
}

pub fn to_world(pix: &PixelTrajectory, cal: &CalibrationTable) -> Result<WorldTrajectory> {
    let samples = pix
        .samples
        .iter()
        .map(|&(frame, row)| {
            Ok(WorldSample {
                frame,
                time_s: frame as f64 / cal.frame_rate,
                y_pix: row as f64,
                position_ft: cal.pixel_to_feet(row as f64)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(WorldTrajectory {
        strand_id: pix.strand_id,
        samples,
    })
}

/// Strands, boundaries and calibrated trajectories for a whole mask.
pub fn extract_trajectories(
    mask: &SegMask,
    cal: &CalibrationTable,
    min_area: usize,
) -> Result<(Vec<Strand>, Vec<PixelTrajectory>, Vec<WorldTrajectory>)> {
    let strands = extract_strands(mask, min_area);
    let pix: Vec<PixelTrajectory> = strands
        .iter()
        .map(|s| lower_boundary(s, cal.direction_flag()))
        .collect();
    let world = pix.iter().map(|p| to_world(p, cal)).collect::<Result<_>>()?;
    Ok((strands, pix, world))
}

pub const TRAJECTORY_CSV_HEADER: [&str; 5] = ["strand_id", "frame", "time_s", "y_pix", "position_ft"];

pub fn write_trajectories_csv<W: Write>(trajs: &[WorldTrajectory], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| TrajError::Format(e.to_string());
    w.write_record(TRAJECTORY_CSV_HEADER).map_err(fmt)?;
    for t in trajs {
        for s in &t.samples {
            w.write_record([
                t.strand_id.to_string(),
                s.frame.to_string(),
                s.time_s.to_string(),
                s.y_pix.to_string(),
                s.position_ft.to_string(),
            ])
            .map_err(fmt)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV; rows are grouped by `strand_id` in order of
/// first appearance and sorted by time within each strand.
pub fn read_trajectories_csv<R: Read>(input: R) -> Result<Vec<WorldTrajectory>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| TrajError::Format(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != TRAJECTORY_CSV_HEADER {
        return Err(TrajError::Format(format!("unexpected header {headers:?}")));
    }
    let mut out: Vec<WorldTrajectory> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| TrajError::Format(e.to_string()))?;
        let bad = |f: &str| TrajError::Format(format!("row {}: bad {f}", line + 2));
        let field = |i: usize| rec.get(i).unwrap_or("");
        let id: usize = field(0).parse().map_err(|_| bad("strand_id"))?;
        let sample = WorldSample {
            frame: field(1).parse().map_err(|_| bad("frame"))?,
            time_s: field(2).parse().map_err(|_| bad("time_s"))?,
            y_pix: field(3).parse().map_err(|_| bad("y_pix"))?,
            position_ft: field(4).parse().map_err(|_| bad("position_ft"))?,
        };
        match out.iter_mut().find(|t| t.strand_id == id) {
            Some(t) => t.samples.push(sample),
            None => out.push(WorldTrajectory {
                strand_id: id,
                samples: vec![sample],
            }),
        }
    }
    for t in &mut out {
        t.samples.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        if t.samples.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
            return Err(TrajError::Format(format!("strand {} has repeated timestamps", t.strand_id)));
        }
    }
    Ok(out)
}

pub fn save_trajectories(trajs: &[WorldTrajectory], path: impl AsRef<Path>) -> Result<()> {
    write_trajectories_csv(trajs, std::fs::File::create(path)?)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<WorldTrajectory>> {
    read_trajectories_csv(std::fs::File::open(path)?)
}
