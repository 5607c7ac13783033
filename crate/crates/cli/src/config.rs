//! Pipeline configuration file and network flag overrides.

use crate::error::{CliError, CliResult, Classify};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use stmap::autolabel::{SplitProportions, ThresholdRule};
use stmap::dmd::DmdConfig;
use stmap::eval::DEFAULT_MAE_THRESHOLD_FT;
use stmap::resunet::NetConfig;
use stmap::stmap::AugmentSpec;
use stmap::traj::DEFAULT_MIN_AREA;

pub const DEFAULT_OUT_DIR: &str = "stmap-out";
pub const OUT_DIR_ENV: &str = "STMAP_OUT_DIR";

/// `--out-dir`, else `$STMAP_OUT_DIR`, else `./stmap-out`.
pub fn resolve_out_dir(flag: Option<&Path>, from_config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| from_config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).input(format!("reading {}", path.display()))?;
    serde_json::from_str(&text).input(format!("parsing {}", path.display()))
}

/// Network and optimiser flags shared by `train` and `pipeline`.
#[derive(Debug, Clone, Default, Args)]
pub struct NetArgs {
    /// Encoder depth; without --channels the widths double from 8.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Comma-separated encoder widths, e.g. 8,16,32.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Square training tile side in pixels.
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint to start from (train) or to use instead of training (pipeline, segment).
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

impl NetArgs {
    pub fn apply(&self, cfg: &mut NetConfig) {
        match (&self.channels, self.levels) {
            (Some(c), Some(l)) => {
                cfg.channels = c.clone();
                cfg.levels = l;
            }
            (Some(c), None) => {
                cfg.channels = c.clone();
                cfg.levels = c.len();
            }
            (None, Some(l)) => {
                cfg.levels = l;
                cfg.channels = (0..l).map(|i| 8usize << i).collect();
            }
            (None, None) => {}
        }
        if let Some(t) = self.tile {
            cfg.input_tile = t;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            cfg.momentum = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

pub fn validate_net(cfg: &NetConfig) -> CliResult<()> {
    cfg.validate().map_err(|e| CliError::Input(format!("network config: {e}")))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of frame images; needs `scanline` and `frame_rate`.
    pub frames_dir: Option<PathBuf>,
    pub scanline: Option<PathBuf>,
    /// A prebuilt STMap, used instead of frames.
    pub stmap: Option<PathBuf>,
    /// A synthetic scene spec, used instead of frames or an STMap; its
    /// ground truth becomes the evaluation reference.
    pub scene: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    /// Reference trajectories CSV for evaluation.
    pub reference: Option<PathBuf>,
    /// Reference mask PNG for segmentation scores.
    pub truth_mask: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutolabelSettings {
    pub threshold: ThresholdRule,
    pub min_area: usize,
}

impl Default for AutolabelSettings {
    fn default() -> Self {
        Self {
            threshold: ThresholdRule::Otsu,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub stride: usize,
    pub augment: AugmentSpec,
    pub proportions: SplitProportions,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self {
            stride: 16,
            augment: AugmentSpec::default(),
            proportions: SplitProportions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Boundary-F1 tolerance in pixels; default is a fraction of the diagonal.
    pub bf_tolerance: Option<f64>,
    pub mae_threshold_ft: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            bf_tolerance: None,
            mae_threshold_ft: DEFAULT_MAE_THRESHOLD_FT,
        }
    }
}

/// Whole-pipeline configuration. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub frame_rate: Option<f64>,
    pub dmd: DmdConfig,
    pub autolabel: AutolabelSettings,
    pub dataset: DatasetSettings,
    pub net: NetConfig,
    /// Tile stride when segmenting the full map.
    pub segment_stride: usize,
    pub extract_min_area: usize,
    pub eval: EvalSettings,
    /// Propagated to the dataset split, augmentation and network.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            frame_rate: None,
            dmd: DmdConfig::default(),
            autolabel: AutolabelSettings::default(),
            dataset: DatasetSettings::default(),
            net: NetConfig::default(),
            segment_stride: 16,
            extract_min_area: DEFAULT_MIN_AREA,
            eval: EvalSettings::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: PipelineConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.frames_dir,
            &mut p.scanline,
            &mut p.stmap,
            &mut p.scene,
            &mut p.calibration,
            &mut p.reference,
            &mut p.truth_mask,
            &mut p.output_dir,
        ] {
            if let Some(rel) = slot.as_ref().filter(|p| p.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    /// Checks that exactly one source is configured and every referenced
    /// input exists.
    pub fn validate(&self) -> CliResult<()> {
        let p = &self.paths;
        let sources = [p.frames_dir.is_some(), p.stmap.is_some(), p.scene.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if sources != 1 {
            return Err(CliError::Input(
                "pipeline config needs exactly one of paths.frames_dir, paths.stmap, paths.scene".into(),
            ));
        }
        if p.frames_dir.is_some() && (p.scanline.is_none() || self.frame_rate.is_none()) {
            return Err(CliError::Input("paths.frames_dir requires paths.scanline and frame_rate".into()));
        }
        if p.scene.is_none() && p.calibration.is_none() {
            return Err(CliError::Input("paths.calibration is required unless paths.scene is set".into()));
        }
        for path in [
            &p.frames_dir,
            &p.scanline,
            &p.stmap,
            &p.scene,
            &p.calibration,
            &p.reference,
            &p.truth_mask,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(CliError::Input(format!("{} does not exist", path.display())));
            }
        }
        if self.segment_stride == 0 || self.dataset.stride == 0 {
            return Err(CliError::Input("strides must be positive".into()));
        }
        validate_net(&self.net)
    }
}
