//! Stage functions shared by the individual subcommands and `pipeline`.
//! Each takes loaded inputs, writes its artifacts under a directory and
//! reports the written paths.

use crate::error::{CliResult, Classify};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::{Path, PathBuf};
use stmap::autolabel::{assemble_dataset, foreground_to_mask, LabeledDataset, SegMask, SplitProportions, ThresholdRule};
use stmap::dmd::{
    decompose, mode_diagnostics, render_spectrum, residual_foreground, split_background, write_diagnostics_csv, write_modes,
    DmdConfig,
};
use stmap::eval::{match_trajectories, segmentation_score, write_summary_csv, Report};
use stmap::resunet::{save_checkpoint, segment_map, train, write_history_csv, NetError, ResUNetPlus, TrainOutcome};
use stmap::stmap::{to_gray, write_stmap, AugmentSpec, Raster, Stmap};
use stmap::traj::{extract_trajectories, save_trajectories, CalibrationTable, WorldTrajectory};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).runtime(format!("creating {}", dir.display()))
}

/// Values in `[0, 1]` (clamped) as an 8-bit grayscale PNG.
pub fn save_unit_png(values: &DMatrix<f64>, path: &Path) -> CliResult<()> {
    let (rows, cols) = values.shape();
    let mut px = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            px.push((values[(r, c)].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    image::GrayImage::from_raw(cols as u32, rows as u32, px)
        .expect("buffer size matches dimensions")
        .save(path)
        .runtime(format!("writing {}", path.display()))
}

/// Row-major CSV of a real matrix with round-trip precision.
pub fn write_matrix_csv(values: &DMatrix<f64>, path: &Path) -> CliResult<()> {
    let mut out = String::new();
    for r in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols()).map(|c| format!("{:e}", values[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).runtime(format!("writing {}", path.display()))
}

pub fn read_matrix_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).input(format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .input(format!("{} line {}", path.display(), i + 1))?;
        rows.push(row);
    }
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(crate::error::CliError::Input(format!(
            "{} is not a non-empty rectangular matrix",
            path.display()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / cols, cols, &flat))
}

pub fn save_stmap(map: &Stmap, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let bin = dir.join("stmap.stmap");
    write_stmap(&bin, map).runtime(format!("writing {}", bin.display()))?;
    let png = dir.join("stmap.png");
    map.to_rgb_image().save(&png).runtime(format!("writing {}", png.display()))?;
    Ok(vec![bin, png])
}

pub struct DmdOutput {
    /// Input minus the stationary-mode background; the labelling input.
    pub residual: DMatrix<f64>,
    pub files: Vec<PathBuf>,
}

/// Decomposition, background/foreground split and all DMD artifacts.
pub fn run_dmd(map: &Stmap, cfg: &DmdConfig, dir: &Path) -> CliResult<DmdOutput> {
    create_dir(dir)?;
    let data = to_gray(map).to_matrix();
    let (modes, fit) = decompose(&data, cfg).runtime("DMD")?;
    if fit.ill_conditioned {
        log::warn!("DMD amplitude fit is ill-conditioned (condition number {:e})", fit.condition_number);
    }
    let split = split_background(&modes, cfg.stationarity_tol).runtime("background split")?;
    log::info!(
        "rank {} with {} stationary mode(s)",
        modes.rank(),
        split.background_mode_indices.len()
    );
    let modes_path = dir.join("modes.dmd");
    write_modes(&modes_path, &modes).runtime(format!("writing {}", modes_path.display()))?;
    let diag_path = dir.join("diagnostics.csv");
    let records = mode_diagnostics(&modes, map.frame_rate()).runtime("mode diagnostics")?;
    let mut buf = Vec::new();
    write_diagnostics_csv(&records, &mut buf).runtime("diagnostics")?;
    std::fs::write(&diag_path, buf).runtime(format!("writing {}", diag_path.display()))?;
    let spectrum_path = dir.join("spectrum.png");
    render_spectrum(&modes, 512)
        .save(&spectrum_path)
        .runtime(format!("writing {}", spectrum_path.display()))?;
    let bg_png = dir.join("background.png");
    save_unit_png(&split.background, &bg_png)?;
    let fg_png = dir.join("foreground.png");
    save_unit_png(&split.foreground.map(f64::abs), &fg_png)?;
    let fg_csv = dir.join("foreground.csv");
    write_matrix_csv(&split.foreground, &fg_csv)?;
    let residual = residual_foreground(&data, &split).runtime("residual foreground")?;
    let res_png = dir.join("residual.png");
    save_unit_png(&residual.map(f64::abs), &res_png)?;
    let res_csv = dir.join("residual.csv");
    write_matrix_csv(&residual, &res_csv)?;
    Ok(DmdOutput {
        residual,
        files: vec![modes_path, diag_path, spectrum_path, bg_png, fg_png, fg_csv, res_png, res_csv],
    })
}

pub fn run_autolabel(fg: &DMatrix<f64>, rule: ThresholdRule, min_area: usize, path: &Path) -> CliResult<SegMask> {
    let out = foreground_to_mask(fg, rule, min_area).input("autolabel")?;
    if out.warning.is_some() {
        log::warn!("foreground is constant; autolabel mask is empty");
    }
    log::info!("autolabel threshold {}", out.threshold);
    out.mask.save_png(path).runtime(format!("writing {}", path.display()))?;
    Ok(out.mask)
}

#[allow(clippy::too_many_arguments)]
pub fn run_dataset(
    maps: &[Raster],
    masks: &[SegMask],
    tile: usize,
    stride: usize,
    augment: &AugmentSpec,
    proportions: SplitProportions,
    seed: u64,
    dir: &Path,
) -> CliResult<(LabeledDataset, Vec<PathBuf>)> {
    let ds = assemble_dataset(maps, masks, tile, stride, augment, proportions, seed).input("assembling dataset")?;
    let files = ds.save(dir).runtime(format!("writing dataset to {}", dir.display()))?;
    Ok((ds, files))
}

fn net_error(e: NetError) -> crate::error::CliError {
    use crate::error::CliError;
    match e {
        NetError::InvalidConfig(_) | NetError::ShapeMismatch { .. } | NetError::EmptyDataset | NetError::Checkpoint(_) => {
            CliError::Input(format!("training: {e}"))
        }
        other => CliError::Runtime(format!("training: {other}")),
    }
}

/// Trains, then writes `checkpoint.runp` and `history.csv`. A diverged run
/// still leaves the history up to the failing epoch on disk.
pub fn run_train(net: ResUNetPlus, ds: &LabeledDataset, dir: &Path) -> CliResult<(TrainOutcome, Vec<PathBuf>)> {
    create_dir(dir)?;
    let hist = dir.join("history.csv");
    let outcome = match train(net, ds) {
        Ok(o) => o,
        Err(NetError::DivergenceDetected {
            epoch,
            step,
            loss,
            history,
        }) => {
            let mut buf = Vec::new();
            if write_history_csv(&history, &mut buf).is_ok() {
                let _ = std::fs::write(&hist, buf);
            }
            return Err(crate::error::CliError::Runtime(format!(
                "training diverged at epoch {epoch} step {step} (loss {loss})"
            )));
        }
        Err(e) => return Err(net_error(e)),
    };
    let ckpt = dir.join("checkpoint.runp");
    save_checkpoint(&outcome.net, &ckpt).runtime(format!("writing {}", ckpt.display()))?;
    let mut buf = Vec::new();
    write_history_csv(&outcome.history, &mut buf).runtime("history")?;
    std::fs::write(&hist, buf).runtime(format!("writing {}", hist.display()))?;
    Ok((outcome, vec![ckpt, hist]))
}

pub fn run_segment(net: &ResUNetPlus, map: &Stmap, stride: usize, path: &Path) -> CliResult<SegMask> {
    let raster = Raster::from_stmap(map);
    let mask = segment_map(net, &raster, stride).map_err(net_error)?;
    mask.save_png(path).runtime(format!("writing {}", path.display()))?;
    Ok(mask)
}

pub fn run_extract(
    mask: &SegMask,
    cal: &CalibrationTable,
    min_area: usize,
    path: &Path,
) -> CliResult<Vec<WorldTrajectory>> {
    let (strands, _, world) = extract_trajectories(mask, cal, min_area).input("trajectory extraction")?;
    let overlapping = strands.iter().filter(|s| s.overlap_flag).count();
    if overlapping > 0 {
        log::warn!("{overlapping} strand(s) look like merged vehicles");
    }
    save_trajectories(&world, path).runtime(format!("writing {}", path.display()))?;
    Ok(world)
}

pub struct EvalInputs<'a> {
    pub pred_mask: Option<&'a SegMask>,
    pub truth_mask: Option<&'a SegMask>,
    pub detected: Option<&'a [WorldTrajectory]>,
    pub reference: Option<&'a [WorldTrajectory]>,
    pub bf_tolerance: Option<f64>,
    pub mae_threshold_ft: f64,
    pub lane: String,
}

/// Writes `report.json` and `summary.csv`.
pub fn run_evaluate(inp: &EvalInputs, config: serde_json::Value, dir: &Path) -> CliResult<(Report, Vec<PathBuf>)> {
    let seg = match (inp.pred_mask, inp.truth_mask) {
        (Some(p), Some(t)) => Some(segmentation_score(p, t, inp.bf_tolerance).input("segmentation scores")?),
        _ => None,
    };
    let traj = match (inp.detected, inp.reference) {
        (Some(d), Some(r)) => Some(match_trajectories(d, r, inp.mae_threshold_ft).input("trajectory matching")?),
        _ => None,
    };
    let report = Report { seg, traj, config };
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).runtime("serialising report")?;
    std::fs::write(&json, text).runtime(format!("writing {}", json.display()))?;
    let csv = dir.join("summary.csv");
    let mut f = std::fs::File::create(&csv).runtime(format!("writing {}", csv.display()))?;
    write_summary_csv(&[(inp.lane.clone(), report.clone())], &mut f).runtime("summary")?;
    f.flush().runtime("summary")?;
    Ok((report, vec![json, csv]))
}
