//! Tiling and geometric augmentation of (image, mask) pairs.
//!
//! Rotation is deliberately absent: strands always run from top-left to
//! bottom-right, so only rescale, shear and translation are offered.

use super::{Raster, Result, StmapError};
use crate::autolabel::SegMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Rescale,
    Shear,
    Translate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub transforms: Vec<TransformKind>,
    /// Augmented copies emitted per source tile, in addition to the tile itself.
    pub copies: usize,
    pub rescale_range: (f64, f64),
    pub max_shear_deg: f64,
    /// Maximum shift as a fraction of the tile side.
    pub max_translate: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            transforms: vec![TransformKind::Rescale, TransformKind::Shear, TransformKind::Translate],
            copies: 1,
            rescale_range: (0.8, 1.2),
            max_shear_deg: 10.0,
            max_translate: 0.1,
        }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            transforms: Vec::new(),
            copies: 0,
            ..Self::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.transforms.is_empty() || self.copies == 0
    }

    pub fn sample_affine(&self, rng: &mut ChaCha8Rng, tile: usize) -> Affine {
        let mut a = Affine::identity();
        for kind in &self.transforms {
            match kind {
                TransformKind::Rescale => {
                    let (lo, hi) = self.rescale_range;
                    let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                    a = a.then(&Affine::scale(s));
                }
                TransformKind::Shear => {
                    let deg = if self.max_shear_deg > 0.0 {
                        rng.random_range(-self.max_shear_deg..=self.max_shear_deg)
                    } else {
                        0.0
                    };
                    a = a.then(&Affine::shear(deg.to_radians()));
                }
                TransformKind::Translate => {
                    let lim = self.max_translate * tile as f64;
                    let (dr, dc) = if lim > 0.0 {
                        (rng.random_range(-lim..=lim), rng.random_range(-lim..=lim))
                    } else {
                        (0.0, 0.0)
                    };
                    a = a.then(&Affine::translate(dr, dc));
                }
            }
        }
        a
    }
}

/// Affine map in (row, col) coordinates about the tile centre:
/// `dst = linear * (src - centre) + centre + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub linear: [[f64; 2]; 2],
    pub shift: [f64; 2],
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            shift: [0.0, 0.0],
        }
    }

    pub fn scale(s: f64) -> Self {
        Self {
            linear: [[s, 0.0], [0.0, s]],
            shift: [0.0, 0.0],
        }
    }

    /// Shifts columns in proportion to the row offset.
    pub fn shear(angle_rad: f64) -> Self {
        Self {
            linear: [[1.0, 0.0], [angle_rad.tan(), 1.0]],
            shift: [0.0, 0.0],
        }
    }

    pub fn translate(dr: f64, dc: f64) -> Self {
        Self {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            shift: [dr, dc],
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Affine) -> Affine {
        let a = &next.linear;
        let b = &self.linear;
        let linear = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let s = self.shift;
        let shift = [
            a[0][0] * s[0] + a[0][1] * s[1] + next.shift[0],
            a[1][0] * s[0] + a[1][1] * s[1] + next.shift[1],
        ];
        Affine { linear, shift }
    }

    /// Source coordinate that lands on destination pixel `(r, c)`.
    fn source_of(&self, r: f64, c: f64, centre: (f64, f64)) -> (f64, f64) {
        let [[a, b], [cc, d]] = self.linear;
        let det = a * d - b * cc;
        let y = r - centre.0 - self.shift[0];
        let x = c - centre.1 - self.shift[1];
        (
            (d * y - b * x) / det + centre.0,
            (-cc * y + a * x) / det + centre.1,
        )
    }
}

/// Applies one affine warp to an image (bilinear) and its mask (nearest),
/// clamping sample coordinates to the tile edge so both stay aligned.
pub fn warp_pair(image: &Raster, mask: &SegMask, affine: &Affine) -> (Raster, SegMask) {
    let (h, w) = (image.rows, image.cols);
    let centre = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = Raster::zeros(h, w, image.channels);
    let mut labels = vec![0u8; h * w];
    let clamp = |v: f64, hi: usize| v.clamp(0.0, (hi - 1) as f64);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = affine.source_of(r as f64, c as f64, centre);
            let (sr, sc) = (clamp(sr, h), clamp(sc, w));
            let (r0, c0) = (sr.floor() as usize, sc.floor() as usize);
            let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
            let (fr, fc) = (sr - r0 as f64, sc - c0 as f64);
            for ch in 0..image.channels {
                let v = image.at(r0, c0, ch) * (1.0 - fr) * (1.0 - fc)
                    + image.at(r0, c1, ch) * (1.0 - fr) * fc
                    + image.at(r1, c0, ch) * fr * (1.0 - fc)
                    + image.at(r1, c1, ch) * fr * fc;
                *out.at_mut(r, c, ch) = v;
            }
            let (nr, nc) = (sr.round() as usize, sc.round() as usize);
            labels[r * w + c] = mask.get(nr.min(h - 1), nc.min(w - 1));
        }
    }
    let mask = SegMask::new(h, w, labels, mask.source()).expect("labels copied from a binary mask");
    (out, mask)
}

/// Top-left corners of a tile grid with the given stride; the last tile in
/// each direction is snapped to the far edge so the map is fully covered.
pub fn tile_origins(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut v: Vec<usize> = (0..=len - tile).step_by(stride).collect();
    if *v.last().unwrap() != len - tile {
        v.push(len - tile);
    }
    v
}

/// Cuts aligned `tile x tile` crops from an image and its mask.
pub fn crop_tiles(
    image: &Raster,
    mask: &SegMask,
    tile: usize,
    stride: usize,
) -> Result<Vec<(Raster, SegMask)>> {
    if tile == 0 || tile > image.rows.min(image.cols) {
        return Err(StmapError::TileTooLarge {
            tile,
            rows: image.rows,
            cols: image.cols,
        });
    }
    if (mask.rows(), mask.cols()) != (image.rows, image.cols) {
        return Err(StmapError::Format(format!(
            "mask is {}x{}, image is {}x{}",
            mask.rows(),
            mask.cols(),
            image.rows,
            image.cols
        )));
    }
    let mut out = Vec::new();
    for &r in &tile_origins(image.rows, tile, stride) {
        for &c in &tile_origins(image.cols, tile, stride) {
            out.push((image.crop(r, c, tile, tile), mask.crop(r, c, tile, tile)));
        }
    }
    Ok(out)
}

/// Crops tiles and appends `spec.copies` randomly warped versions of each.
/// Output order and content are a pure function of the inputs and `seed`.
pub fn crop_and_augment(
    image: &Raster,
    mask: &SegMask,
    tile: usize,
    stride: usize,
    spec: &AugmentSpec,
    seed: u64,
) -> Result<Vec<(Raster, SegMask)>> {
    let tiles = crop_tiles(image, mask, tile, stride)?;
    if spec.is_identity() {
        return Ok(tiles);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tiles.len() * (1 + spec.copies));
    for (img, m) in tiles {
        let warped: Vec<_> = (0..spec.copies)
            .map(|_| warp_pair(&img, &m, &spec.sample_affine(&mut rng, tile)))
            .collect();
        out.push((img, m));
        out.extend(warped);
    }
    Ok(out)
}
