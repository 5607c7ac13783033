//! Synthetic STMaps with exact ground truth.
//!
//! Vehicles follow closed-form kinematics; each frame the rows whose
//! calibrated distance lies within `[front - length, front]` take the
//! vehicle colour. Shadows darken a band travelling with a vehicle but only
//! outside the truth mask, and Gaussian noise is added last.

use crate::autolabel::{MaskSource, SegMask};
use crate::stmap::{GrayMap, Stmap};
use crate::traj::{CalibrationTable, WorldSample, WorldTrajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene spec out of range: {0}")]
    SpecOutOfRange(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

pub const DEFAULT_SHADOW_DELTA: f64 = -0.3;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    /// Consecutive `(duration_s, speed_ft_s)` segments; the last speed is
    /// held after its duration runs out.
    Piecewise { segments: Vec<(f64, f64)> },
    /// `speed(τ) = base + amplitude · sin(2πτ / period)`.
    StopAndGo { base: f64, amplitude: f64, period: f64 },
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        SpeedProfile::Piecewise {
            segments: vec![(1.0, speed)],
        }
    }

    /// Speed `tau` seconds after entry.
    pub fn speed(&self, tau: f64) -> f64 {
        match self {
            SpeedProfile::Piecewise { segments } => {
                let mut start = 0.0;
                for &(d, v) in segments {
                    if tau < start + d {
                        return v;
                    }
                    start += d;
                }
                segments.last().map(|s| s.1).unwrap_or(0.0)
            }
            SpeedProfile::StopAndGo {
                base,
                amplitude,
                period,
            } => base + amplitude * (2.0 * PI * tau / period).sin(),
        }
    }

    /// Distance travelled `tau` seconds after entry.
    pub fn distance(&self, tau: f64) -> f64 {
        match self {
            SpeedProfile::Piecewise { segments } => {
                let mut start = 0.0;
                let mut dist = 0.0;
                for &(d, v) in segments {
                    if tau < start + d {
                        return dist + v * (tau - start);
                    }
                    dist += v * d;
                    start += d;
                }
                dist + segments.last().map(|s| s.1).unwrap_or(0.0) * (tau - start)
            }
            SpeedProfile::StopAndGo {
                base,
                amplitude,
                period,
            } => base * tau + amplitude * period / (2.0 * PI) * (1.0 - (2.0 * PI * tau / period).cos()),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::SpecOutOfRange(m));
        match self {
            SpeedProfile::Piecewise { segments } => {
                if segments.is_empty() {
                    return bad("speed profile has no segments".into());
                }
                if segments.iter().any(|&(d, v)| !(d > 0.0) || !(v >= 0.0) || !v.is_finite()) {
                    return bad("segments need positive durations and finite non-negative speeds".into());
                }
            }
            SpeedProfile::StopAndGo {
                base,
                amplitude,
                period,
            } => {
                if !(period.is_finite() && *period > 0.0) || !(*amplitude >= 0.0) || !(amplitude <= base) {
                    return bad(format!(
                        "stop-and-go needs period > 0 and 0 <= amplitude <= base (base {base}, amplitude {amplitude}, period {period})"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Seconds after the first frame at which the front reaches distance 0.
    pub entry_time: f64,
    pub speed: SpeedProfile,
    pub length_ft: f64,
    pub intensity: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Constant { color: [u8; 3] },
    /// Linear blend from `start` at row 0 to `end` at the last row.
    Gradient { start: [u8; 3], end: [u8; 3] },
    /// Lane-marker stripes of `width_px` rows every `period_px` rows.
    Striped {
        base: [u8; 3],
        stripe: [u8; 3],
        period_px: usize,
        width_px: usize,
    },
}

impl Background {
    pub fn color(&self, row: usize, n: usize) -> [u8; 3] {
        match *self {
            Background::Constant { color } => color,
            Background::Gradient { start, end } => {
                let a = if n > 1 { row as f64 / (n - 1) as f64 } else { 0.0 };
                [0, 1, 2].map(|k| (start[k] as f64 + a * (end[k] as f64 - start[k] as f64)).round() as u8)
            }
            Background::Striped {
                base,
                stripe,
                period_px,
                width_px,
            } => {
                if period_px > 0 && row % period_px < width_px {
                    stripe
                } else {
                    base
                }
            }
        }
    }
}

/// A darkening band that travels with one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowBand {
    pub vehicle: usize,
    /// Offset of the band's leading edge from the vehicle front along the
    /// scanline, in feet (negative: behind the front).
    pub offset_ft: f64,
    /// Band length in feet; defaults to the vehicle length.
    #[serde(default)]
    pub length_ft: Option<f64>,
    /// Additive intensity change in `[0, 1]` units.
    #[serde(default = "default_shadow_delta")]
    pub delta: f64,
}

fn default_shadow_delta() -> f64 {
    DEFAULT_SHADOW_DELTA
}

fn default_noise_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n: usize,
    pub m: usize,
    pub frame_rate: f64,
    pub vehicles: Vec<VehicleSpec>,
    pub background: Background,
    #[serde(default)]
    pub shadow_bands: Vec<ShadowBand>,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Calibration used when none is supplied: rows `0..n` evenly spanning
    /// `0..=scanline_length_ft`.
    #[serde(default)]
    pub scanline_length_ft: Option<f64>,
}

impl SceneSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// The calibration implied by `scanline_length_ft` (direction: distance
    /// grows with row).
    pub fn default_calibration(&self) -> Result<CalibrationTable> {
        let len = self
            .scanline_length_ft
            .ok_or_else(|| SynthError::SpecOutOfRange("scene has no scanline_length_ft".into()))?;
        CalibrationTable::linear(self.frame_rate, true, self.n, len)
            .map_err(|e| SynthError::SpecOutOfRange(e.to_string()))
    }

    pub fn validate(&self, cal: &CalibrationTable) -> Result<()> {
        let bad = |m: String| Err(SynthError::SpecOutOfRange(m));
        if self.n < 2 || self.m < 2 {
            return bad(format!("map must be at least 2x2, got {}x{}", self.n, self.m));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad(format!("frame rate {} must be positive", self.frame_rate));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        let duration = self.m as f64 / self.frame_rate;
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(v.entry_time >= 0.0 && v.entry_time <= duration) {
                return bad(format!("vehicle {i} enters at {} s, outside [0, {duration}]", v.entry_time));
            }
            if !(v.length_ft.is_finite() && v.length_ft > 0.0) {
                return bad(format!("vehicle {i} length must be positive"));
            }
            v.speed.validate()?;
        }
        for (k, s) in self.shadow_bands.iter().enumerate() {
            if s.vehicle >= self.vehicles.len() {
                return bad(format!("shadow {k} references missing vehicle {}", s.vehicle));
            }
            if !s.offset_ft.is_finite() || s.length_ft.is_some_and(|l| !(l > 0.0)) || !s.delta.is_finite() {
                return bad(format!("shadow {k} has invalid geometry or intensity"));
            }
        }
        let (p0, p1) = cal.pixel_range();
        if p0 > 0.0 || p1 < (self.n - 1) as f64 {
            return bad(format!("calibration rows [{p0}, {p1}] do not cover 0..{}", self.n - 1));
        }
        if cal.feet_range().0 > 0.0 {
            return bad("calibration must start at or before 0 ft".into());
        }
        if (cal.frame_rate() - self.frame_rate).abs() > 1e-9 * self.frame_rate {
            return bad(format!(
                "calibration frame rate {} differs from scene frame rate {}",
                cal.frame_rate(),
                self.frame_rate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub truth_mask: SegMask,
    /// One per vehicle that reaches the scanline, `strand_id` = vehicle
    /// index; samples cover frames where the front is on the scanline.
    pub truth_trajectories: Vec<WorldTrajectory>,
    /// Luma of the static background alone.
    pub background_plate: GrayMap,
}

/// Rows occupied by a vehicle whose front is at `front` ft: every row with
/// distance in `[front - length, front]`, plus the row nearest behind the
/// front so a vehicle always covers at least one row while on the scanline.
/// Returns the rows and the front row (if the front is on the scanline).
fn occupied_rows(dist: &[f64], front: f64, length: f64) -> (Vec<usize>, Option<usize>) {
    let (dmin, dmax) = dist
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    if front < dmin || front - length > dmax {
        return (Vec::new(), None);
    }
    let mut rows: Vec<usize> = (0..dist.len())
        .filter(|&r| dist[r] >= front - length && dist[r] <= front)
        .collect();
    let front_row = (0..dist.len())
        .filter(|&r| dist[r] <= front)
        .max_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    if let Some(fr) = front_row {
        if !rows.contains(&fr) {
            rows.push(fr);
        }
    }
    let on_scanline = front <= dmax;
    (rows, front_row.filter(|_| on_scanline))
}

/// Renders a scene. Pure in `(spec, cal)`: the same inputs give
/// bit-identical outputs.
pub fn generate(spec: &SceneSpec, cal: &CalibrationTable) -> Result<(Stmap, GroundTruth)> {
    spec.validate(cal)?;
    let (n, m) = (spec.n, spec.m);
    let dist: Vec<f64> = (0..n)
        .map(|r| cal.pixel_to_feet(r as f64).expect("rows covered by calibration"))
        .collect();

    let mut rgb = vec![0f64; n * m * 3];
    let mut plate = vec![0f64; n * m];
    for r in 0..n {
        let c = spec.background.color(r, n);
        let luma = crate::stmap::luma(c);
        for t in 0..m {
            for k in 0..3 {
                rgb[(r * m + t) * 3 + k] = c[k] as f64 / 255.0;
            }
            plate[r * m + t] = luma;
        }
    }

    let mut truth = SegMask::empty(n, m, MaskSource::SyntheticTruth);
    let mut trajectories = Vec::new();
    for (vi, v) in spec.vehicles.iter().enumerate() {
        let mut samples = Vec::new();
        for t in 0..m {
            let time = t as f64 / spec.frame_rate;
            let tau = time - v.entry_time;
            if tau < 0.0 {
                continue;
            }
            let front = v.speed.distance(tau);
            let (rows, front_row) = occupied_rows(&dist, front, v.length_ft);
            for &r in &rows {
                truth.set(r, t, true);
                for k in 0..3 {
                    rgb[(r * m + t) * 3 + k] = v.intensity[k] as f64 / 255.0;
                }
            }
            if let Some(fr) = front_row {
                samples.push(WorldSample {
                    frame: t,
                    time_s: time,
                    y_pix: fr as f64,
                    position_ft: front,
                });
            }
        }
        if !samples.is_empty() {
            trajectories.push(WorldTrajectory {
                strand_id: vi,
                samples,
            });
        }
    }

    for s in &spec.shadow_bands {
        let v = &spec.vehicles[s.vehicle];
        let len = s.length_ft.unwrap_or(v.length_ft);
        for t in 0..m {
            let tau = t as f64 / spec.frame_rate - v.entry_time;
            if tau < 0.0 {
                continue;
            }
            let lead = v.speed.distance(tau) + s.offset_ft;
            for r in 0..n {
                if dist[r] <= lead && dist[r] >= lead - len && truth.get(r, t) == 0 {
                    for k in 0..3 {
                        let px = &mut rgb[(r * m + t) * 3 + k];
                        *px = (*px + s.delta).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for px in rgb.iter_mut() {
            *px += normal.sample(&mut rng);
        }
    }
    let pixels: Vec<u8> = rgb.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let stmap = Stmap::new(n, m, spec.frame_rate, "synthetic", pixels).expect("consistent buffer");
    let background_plate = GrayMap::new(n, m, plate).expect("luma within [0, 1]");
    Ok((
        stmap,
        GroundTruth {
            truth_mask: truth,
            truth_trajectories: trajectories,
            background_plate,
        },
    ))
}
