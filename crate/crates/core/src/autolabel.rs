//! Semi-automatic labelling: DMD foreground to binary strand masks, and
//! assembly of tiled, split, augmented training datasets.

use crate::morph;
use crate::stmap::{AugmentSpec, Raster};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("foreground contains non-finite values")]
    NonFinite,
    #[error("no maps supplied")]
    EmptyInput,
    #[error("split proportions {0:?} must be non-negative and sum to 1")]
    BadProportions(SplitProportions),
    #[error("{maps} maps but {masks} masks")]
    Misaligned { maps: usize, masks: usize },
    #[error("mask shape {got:?} does not match {expected:?}")]
    ShapeMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("mask values must be 0 or 1")]
    NonBinary,
    #[error("dataset manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Stmap(#[from] crate::stmap::StmapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LabelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    DmdAuto,
    Manual,
    Predicted,
    SyntheticTruth,
}

/// Binary strand mask: 1 = vehicle strand, 0 = background. Row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    rows: usize,
    cols: usize,
    labels: Vec<u8>,
    source: MaskSource,
}

impl SegMask {
    pub fn new(rows: usize, cols: usize, labels: Vec<u8>, source: MaskSource) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(LabelError::ShapeMismatch {
                got: (labels.len(), 1),
                expected: (rows, cols),
            });
        }
        if labels.iter().any(|&v| v > 1) {
            return Err(LabelError::NonBinary);
        }
        Ok(Self {
            rows,
            cols,
            labels,
            source,
        })
    }

    pub fn empty(rows: usize, cols: usize, source: MaskSource) -> Self {
        Self {
            rows,
            cols,
            labels: vec![0; rows * cols],
            source,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn source(&self) -> MaskSource {
        self.source
    }

    pub fn with_source(mut self, source: MaskSource) -> Self {
        self.source = source;
        self
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.labels[row * self.cols + col] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }

    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> SegMask {
        let mut labels = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            labels.extend_from_slice(&self.labels[r * self.cols + col0..r * self.cols + col0 + cols]);
        }
        SegMask {
            rows,
            cols,
            labels,
            source: self.source,
        }
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(
            self.cols as u32,
            self.rows as u32,
            self.labels.iter().map(|&v| v * 255).collect(),
        )
        .expect("buffer size matches dimensions")
    }

    /// Writes a 0/255 grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save(path)?;
        Ok(())
    }

    /// Reads a grayscale PNG; any value above 127 is a strand pixel.
    pub fn load_png(path: impl AsRef<Path>, source: MaskSource) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        let labels = img.into_raw().into_iter().map(|v| (v > 127) as u8).collect();
        Self::new(h as usize, w as usize, labels, source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Otsu,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelWarning {
    /// All foreground magnitudes are equal; the mask is empty.
    DegenerateHistogram,
}

#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub mask: SegMask,
    pub threshold: f64,
    pub warning: Option<LabelWarning>,
}

/// Otsu threshold over a 256-bin histogram spanning `[min, max]` of `values`.
/// Values strictly above the returned level belong to the upper class.
/// Returns `None` when every value is equal.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || hi <= lo {
        return None;
    }
    const BINS: usize = 256;
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0u64; BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, &h) in hist.iter().enumerate().take(BINS - 1) {
        w0 += h as f64;
        sum0 += k as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best {
            best = between;
            best_k = k;
        }
    }
    Some(lo + width * (best_k + 1) as f64)
}

/// Binarises `|fg|`, closes 3x3 and drops 8-connected specks below `min_area`.
pub fn foreground_to_mask(fg: &DMatrix<f64>, rule: ThresholdRule, min_area: usize) -> Result<LabelOutcome> {
    if fg.iter().any(|v| !v.is_finite()) {
        return Err(LabelError::NonFinite);
    }
    let (rows, cols) = fg.shape();
    let mut mags = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            mags.push(fg[(r, c)].abs());
        }
    }
    let threshold = match rule {
        ThresholdRule::Fixed(t) => Some(t),
        ThresholdRule::Otsu => otsu_threshold(&mags),
    };
    let Some(threshold) = threshold else {
        log::warn!("foreground magnitudes are constant; emitting an empty mask");
        return Ok(LabelOutcome {
            mask: SegMask::empty(rows, cols, MaskSource::DmdAuto),
            threshold: 0.0,
            warning: Some(LabelWarning::DegenerateHistogram),
        });
    };
    let raw: Vec<u8> = mags.iter().map(|&v| (v > threshold) as u8).collect();
    let closed = morph::close3(&raw, rows, cols);
    let labels = morph::remove_small(&closed, rows, cols, min_area);
    Ok(LabelOutcome {
        mask: SegMask::new(rows, cols, labels, MaskSource::DmdAuto)?,
        threshold,
        warning: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitProportions {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitProportions {
    fn default() -> Self {
        Self {
            train: 0.6,
            test: 0.2,
            validation: 0.2,
        }
    }
}

impl SplitProportions {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.test, self.validation];
        let ok = parts.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (parts.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(LabelError::BadProportions(*self))
        }
    }

    /// Item counts for `n` source tiles: train and test rounded, validation
    /// takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let test = ((self.test * n as f64).round() as usize).min(n - train);
        (train, test, n - train - test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Raster,
    pub mask: SegMask,
    pub split: Split,
    /// For augmented samples, the index of the tile they were warped from.
    pub augmented_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub tile: usize,
    pub proportions: SplitProportions,
    pub augment: AugmentSpec,
}

impl LabeledDataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }
}

/// Tiles every (map, mask) pair, shuffles the tiles deterministically,
/// splits them by `proportions`, then augments the training split only.
pub fn assemble_dataset(
    maps: &[Raster],
    masks: &[SegMask],
    tile: usize,
    stride: usize,
    augment: &AugmentSpec,
    proportions: SplitProportions,
    seed: u64,
) -> Result<LabeledDataset> {
    if maps.is_empty() {
        return Err(LabelError::EmptyInput);
    }
    if maps.len() != masks.len() {
        return Err(LabelError::Misaligned {
            maps: maps.len(),
            masks: masks.len(),
        });
    }
    proportions.validate()?;
    let mut tiles = Vec::new();
    for (map, mask) in maps.iter().zip(masks) {
        tiles.extend(crate::stmap::crop_tiles(map, mask, tile, stride)?);
    }
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (n_train, n_test, _) = proportions.counts(tiles.len());

    let mut slots: Vec<Option<(Raster, SegMask)>> = tiles.into_iter().map(Some).collect();
    let mut samples = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_test {
            Split::Test
        } else {
            Split::Validation
        };
        let (image, mask) = slots[i].take().expect("each tile visited once");
        samples.push(Sample {
            image,
            mask,
            split,
            augmented_from: None,
        });
    }

    if !augment.is_identity() {
        let mut aug_rng = ChaCha8Rng::seed_from_u64(seed);
        aug_rng.set_stream(1);
        let mut extra = Vec::new();
        for (i, s) in samples.iter().enumerate().filter(|(_, s)| s.split == Split::Train) {
            for _ in 0..augment.copies {
                let affine = augment.sample_affine(&mut aug_rng, tile);
                let (image, mask) = crate::stmap::warp_pair(&s.image, &s.mask, &affine);
                extra.push(Sample {
                    image,
                    mask,
                    split: Split::Train,
                    augmented_from: Some(i),
                });
            }
        }
        samples.extend(extra);
    }

    Ok(LabeledDataset {
        samples,
        seed,
        tile,
        proportions,
        augment: augment.clone(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    tile: usize,
    proportions: SplitProportions,
    augmentation: AugmentSpec,
    train: Vec<String>,
    test: Vec<String>,
    validation: Vec<String>,
    augmented_from: Vec<(String, usize)>,
}

fn raster_to_png(r: &Raster) -> image::DynamicImage {
    let px: Vec<u8> = r.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    match r.channels {
        3 => image::DynamicImage::ImageRgb8(image::RgbImage::from_raw(r.cols as u32, r.rows as u32, px).unwrap()),
        _ => image::DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(
                r.cols as u32,
                r.rows as u32,
                px.chunks(r.channels).map(|c| c[0]).collect(),
            )
            .unwrap(),
        ),
    }
}

pub fn load_raster(path: impl AsRef<Path>, channels: usize) -> Result<Raster> {
    let img = image::open(path)?;
    let (rows, cols) = (img.height() as usize, img.width() as usize);
    let data: Vec<u8> = if channels == 3 {
        img.to_rgb8().into_raw()
    } else {
        img.to_luma8().into_raw()
    };
    Ok(Raster {
        rows,
        cols,
        channels: if channels == 3 { 3 } else { 1 },
        data: data.into_iter().map(|v| v as f64 / 255.0).collect(),
    })
}

impl LabeledDataset {
    /// Writes `images/*.png`, `masks/*.png` and `manifest.json` under `dir`.
    /// Returns the written file paths.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("images"))?;
        std::fs::create_dir_all(dir.join("masks"))?;
        let mut written = Vec::new();
        let mut manifest = Manifest {
            seed: self.seed,
            tile: self.tile,
            proportions: self.proportions,
            augmentation: self.augment.clone(),
            train: vec![],
            test: vec![],
            validation: vec![],
            augmented_from: vec![],
        };
        let channels = self.samples.first().map(|s| s.image.channels).unwrap_or(1);
        for (i, s) in self.samples.iter().enumerate() {
            let name = format!("{i:05}.png");
            let ip = dir.join("images").join(&name);
            let mp = dir.join("masks").join(&name);
            raster_to_png(&s.image).save(&ip)?;
            s.mask.save_png(&mp)?;
            written.push(ip);
            written.push(mp);
            match s.split {
                Split::Train => manifest.train.push(name.clone()),
                Split::Test => manifest.test.push(name.clone()),
                Split::Validation => manifest.validation.push(name.clone()),
            }
            if let Some(src) = s.augmented_from {
                manifest.augmented_from.push((name, src));
            }
        }
        let mp = dir.join("manifest.json");
        let mut value = serde_json::to_value(&manifest)?;
        value["channels"] = channels.into();
        std::fs::write(&mp, serde_json::to_string_pretty(&value)?)?;
        written.push(mp);
        Ok(written)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let channels = value.get("channels").and_then(|c| c.as_u64()).unwrap_or(1) as usize;
        let manifest: Manifest = serde_json::from_value(value)?;
        let mut named: Vec<(String, Split)> = Vec::new();
        named.extend(manifest.train.iter().map(|n| (n.clone(), Split::Train)));
        named.extend(manifest.test.iter().map(|n| (n.clone(), Split::Test)));
        named.extend(manifest.validation.iter().map(|n| (n.clone(), Split::Validation)));
        named.sort();
        let aug: std::collections::HashMap<_, _> = manifest.augmented_from.into_iter().collect();
        let mut samples = Vec::with_capacity(named.len());
        for (name, split) in named {
            let image = load_raster(dir.join("images").join(&name), channels)?;
            let mask = SegMask::load_png(dir.join("masks").join(&name), MaskSource::Manual)?;
            if mask.shape() != (image.rows, image.cols) {
                return Err(LabelError::ShapeMismatch {
                    got: mask.shape(),
                    expected: (image.rows, image.cols),
                });
            }
            samples.push(Sample {
                image,
                mask,
                split,
                augmented_from: aug.get(&name).copied(),
            });
        }
        if samples.is_empty() {
            return Err(LabelError::Manifest("dataset lists no samples".into()));
        }
        Ok(Self {
            samples,
            seed: manifest.seed,
            tile: manifest.tile,
            proportions: manifest.proportions,
            augment: manifest.augmentation,
        })
    }
}
