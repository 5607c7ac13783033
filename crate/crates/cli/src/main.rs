//! `stmap`: build STMaps, separate them with DMD, train and run Res-UNet+,
//! extract and score trajectories, and render overlays.
//!
//! Exit status: 0 success, 1 usage error, 2 input or validation error,
//! 3 runtime failure. Failures print one line on standard error.

mod config;
mod error;
mod manifest;
mod render;
mod stages;

use clap::{Parser, Subcommand};
use config::{read_json, resolve_out_dir, validate_net, NetArgs, PipelineConfig};
use error::{CliError, CliResult, Classify};
use manifest::Recorder;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stmap::autolabel::{LabeledDataset, MaskSource, SegMask, SplitProportions, ThresholdRule};
use stmap::dmd::{DmdConfig, RankRule, DEFAULT_STATIONARITY_TOL};
use stmap::resunet::{load_checkpoint, NetConfig, ResUNetPlus};
use stmap::stmap::{build_stmap, read_frame_dir, read_stmap, AugmentSpec, Raster, ScanlinePath, Stmap};
use stmap::synth::{generate, SceneSpec};
use stmap::traj::{load_trajectories, save_trajectories, CalibrationTable, DEFAULT_MIN_AREA};

#[derive(Debug, Parser)]
#[command(name = "stmap", version, about = "Vehicle trajectories from spatial-temporal maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct OutDir {
    /// Output directory [default: $STMAP_OUT_DIR, else ./stmap-out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stack one scanline per frame into an STMap (stmap.stmap, stmap.png).
    BuildStmap {
        /// Directory of PNG/PPM frames; file name order is time order.
        #[arg(long)]
        frames: PathBuf,
        /// Scanline path JSON.
        #[arg(long)]
        scanline: PathBuf,
        #[arg(long)]
        frame_rate: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Decompose an STMap; writes modes, diagnostics, spectrum, the modal
    /// background/foreground split and the residual (input minus background).
    Dmd {
        #[arg(long)]
        stmap: PathBuf,
        /// Keep exactly this many modes.
        #[arg(long, conflicts_with = "energy")]
        rank: Option<usize>,
        /// Keep the fewest modes holding this fraction of singular-value energy.
        #[arg(long)]
        energy: Option<f64>,
        /// Modes with |ln lambda| at or below this are background.
        #[arg(long, default_value_t = DEFAULT_STATIONARITY_TOL)]
        stationarity_tol: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Threshold a DMD foreground matrix CSV (normally residual.csv) into a mask PNG.
    Autolabel {
        #[arg(long)]
        foreground: PathBuf,
        /// `otsu` or a fixed magnitude.
        #[arg(long, default_value = "otsu")]
        threshold: String,
        #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
        min_area: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Tile STMap/mask pairs into a train/test/validation dataset.
    Dataset {
        /// STMap files; repeat to add maps.
        #[arg(long = "stmap", required = true)]
        stmaps: Vec<PathBuf>,
        /// Mask PNGs, one per --stmap in the same order.
        #[arg(long = "mask", required = true)]
        masks: Vec<PathBuf>,
        #[arg(long, default_value_t = 64)]
        tile: usize,
        #[arg(long, default_value_t = 16)]
        stride: usize,
        /// Augmented copies per training tile (0 disables augmentation).
        #[arg(long, default_value_t = 1)]
        augment_copies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train Res-UNet+ on a dataset directory (checkpoint.runp, history.csv).
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Network config JSON; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Segment a whole STMap with a trained checkpoint (mask.png).
    Segment {
        #[arg(long)]
        stmap: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Tile stride; overlapping logits are averaged.
        #[arg(long, default_value_t = 16)]
        stride: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Trace strand lower boundaries into calibrated trajectories.
    Extract {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
        min_area: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Score masks and/or trajectories against a reference.
    Evaluate {
        #[arg(long, requires = "truth_mask")]
        pred_mask: Option<PathBuf>,
        #[arg(long, requires = "pred_mask")]
        truth_mask: Option<PathBuf>,
        #[arg(long, requires = "reference")]
        detected: Option<PathBuf>,
        #[arg(long, requires = "detected")]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = stmap::eval::DEFAULT_MAE_THRESHOLD_FT)]
        mae_threshold: f64,
        /// Boundary-F1 tolerance in pixels [default: 0.75% of the diagonal].
        #[arg(long)]
        bf_tolerance: Option<f64>,
        /// Row label in summary.csv.
        #[arg(long, default_value = "lane")]
        lane: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Render a synthetic scene with exact ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Calibration JSON [default: linear over the scene's scanline_length_ft].
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Plot an STMap with detected (purple) and reference (blue) trajectories.
    Render {
        #[arg(long)]
        stmap: PathBuf,
        #[arg(long)]
        detected: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "purple")]
        detected_color: String,
        #[arg(long, default_value = "blue")]
        reference_color: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run every stage from a pipeline config JSON.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        out: OutDir,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            let err = CliError::Usage(format!("{line} (see --help)"));
            eprintln!("error: {}", err.message());
            return err.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn out_dir(o: &OutDir) -> CliResult<PathBuf> {
    let dir = resolve_out_dir(o.out_dir.as_deref(), None);
    stages::create_dir(&dir)?;
    Ok(dir)
}

fn load_stmap(p: &Path) -> CliResult<Stmap> {
    read_stmap(p).input(format!("reading STMap {}", p.display()))
}

fn load_mask(p: &Path, source: MaskSource) -> CliResult<SegMask> {
    SegMask::load_png(p, source).input(format!("reading mask {}", p.display()))
}

fn load_calibration(p: &Path) -> CliResult<CalibrationTable> {
    CalibrationTable::load(p).input(format!("reading calibration {}", p.display()))
}

fn load_weights(p: &Path) -> CliResult<ResUNetPlus> {
    load_checkpoint(p).input(format!("reading checkpoint {}", p.display()))
}

fn parse_threshold(s: &str) -> CliResult<ThresholdRule> {
    if s.eq_ignore_ascii_case("otsu") {
        return Ok(ThresholdRule::Otsu);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(ThresholdRule::Fixed(v)),
        _ => Err(CliError::Usage(format!("--threshold must be `otsu` or a non-negative number, got {s:?}"))),
    }
}

/// Builds the network to train: from `--weights` when given (architecture
/// fields must agree with the merged config), otherwise freshly seeded.
fn initial_net(cfg: &NetConfig, weights: Option<&Path>) -> CliResult<ResUNetPlus> {
    match weights {
        None => ResUNetPlus::new(cfg).input("network config"),
        Some(p) => {
            let mut net = load_weights(p)?;
            let a = &net.config;
            if (a.levels, &a.channels, a.input_tile, a.in_channels, a.classes)
                != (cfg.levels, &cfg.channels, cfg.input_tile, cfg.in_channels, cfg.classes)
            {
                return Err(CliError::Input(format!(
                    "checkpoint {} has a different architecture from the requested config",
                    p.display()
                )));
            }
            net.config = cfg.clone();
            Ok(net)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::BuildStmap {
            frames,
            scanline,
            frame_rate,
            out,
        } => {
            let path = ScanlinePath::load(&scanline).input(format!("reading scanline {}", scanline.display()))?;
            if !(frame_rate.is_finite() && frame_rate > 0.0) {
                return Err(CliError::Input(format!("frame rate must be positive, got {frame_rate}")));
            }
            let frames_iter = read_frame_dir(&frames).input(format!("reading frames from {}", frames.display()))?;
            let decoded = frames_iter
                .collect::<Result<Vec<_>, _>>()
                .input(format!("decoding frames in {}", frames.display()))?;
            let map = build_stmap(&decoded, &path, frame_rate).input("building STMap")?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("build-stmap", &dir);
            rec.input(&frames);
            rec.input(&scanline);
            rec.outputs(stages::save_stmap(&map, &dir)?);
            rec.finish(json!({ "frame_rate": frame_rate }))?;
        }
        Command::Dmd {
            stmap,
            rank,
            energy,
            stationarity_tol,
            out,
        } => {
            let rank_rule = match (rank, energy) {
                (Some(k), _) => RankRule::Fixed(k),
                (None, Some(e)) => RankRule::Energy(e),
                (None, None) => RankRule::default(),
            };
            let cfg = DmdConfig {
                rank_rule,
                stationarity_tol,
                ..DmdConfig::default()
            };
            let map = load_stmap(&stmap)?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("dmd", &dir);
            rec.input(&stmap);
            let res = stages::run_dmd(&map, &cfg, &dir)?;
            rec.outputs(res.files);
            rec.finish(serde_json::to_value(cfg).runtime("config")?)?;
        }
        Command::Autolabel {
            foreground,
            threshold,
            min_area,
            out,
        } => {
            let rule = parse_threshold(&threshold)?;
            let fg = stages::read_matrix_csv(&foreground)?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("autolabel", &dir);
            rec.input(&foreground);
            let path = dir.join("mask.png");
            stages::run_autolabel(&fg, rule, min_area, &path)?;
            rec.output(&path);
            rec.finish(json!({ "threshold": rule, "min_area": min_area }))?;
        }
        Command::Dataset {
            stmaps,
            masks,
            tile,
            stride,
            augment_copies,
            seed,
            out,
        } => {
            if stmaps.len() != masks.len() {
                return Err(CliError::Usage(format!(
                    "{} --stmap but {} --mask arguments; give one mask per map",
                    stmaps.len(),
                    masks.len()
                )));
            }
            let mut rasters = Vec::new();
            let mut labels = Vec::new();
            for (s, m) in stmaps.iter().zip(&masks) {
                rasters.push(Raster::from_stmap(&load_stmap(s)?));
                labels.push(load_mask(m, MaskSource::DmdAuto)?);
            }
            let augment = AugmentSpec {
                copies: augment_copies,
                ..AugmentSpec::default()
            };
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("dataset", &dir);
            stmaps.iter().chain(&masks).for_each(|p| rec.input(p));
            let (_, files) = stages::run_dataset(
                &rasters,
                &labels,
                tile,
                stride,
                &augment,
                SplitProportions::default(),
                seed,
                &dir,
            )?;
            rec.outputs(files);
            rec.finish(json!({ "tile": tile, "stride": stride, "augment": augment, "seed": seed }))?;
        }
        Command::Train { dataset, config, net, out } => {
            let mut cfg: NetConfig = match &config {
                Some(p) => read_json(p)?,
                None => NetConfig::default(),
            };
            net.apply(&mut cfg);
            validate_net(&cfg)?;
            let ds = LabeledDataset::load(&dataset).input(format!("reading dataset {}", dataset.display()))?;
            let model = initial_net(&cfg, net.weights.as_deref())?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("train", &dir);
            rec.input(dataset.join("manifest.json"));
            config.iter().for_each(|p| rec.input(p));
            net.weights.iter().for_each(|p| rec.input(p));
            let (_, files) = stages::run_train(model, &ds, &dir)?;
            rec.outputs(files);
            rec.finish(serde_json::to_value(&cfg).runtime("config")?)?;
        }
        Command::Segment {
            stmap,
            weights,
            stride,
            out,
        } => {
            if stride == 0 {
                return Err(CliError::Usage("--stride must be positive".into()));
            }
            let map = load_stmap(&stmap)?;
            let net = load_weights(&weights)?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("segment", &dir);
            rec.input(&stmap);
            rec.input(&weights);
            let path = dir.join("mask.png");
            stages::run_segment(&net, &map, stride, &path)?;
            rec.output(&path);
            rec.finish(json!({ "stride": stride, "net": net.config }))?;
        }
        Command::Extract {
            mask,
            calibration,
            min_area,
            out,
        } => {
            let m = load_mask(&mask, MaskSource::Manual)?;
            let cal = load_calibration(&calibration)?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("extract", &dir);
            rec.input(&mask);
            rec.input(&calibration);
            let path = dir.join("trajectories.csv");
            stages::run_extract(&m, &cal, min_area, &path)?;
            rec.output(&path);
            rec.finish(json!({ "min_area": min_area }))?;
        }
        Command::Evaluate {
            pred_mask,
            truth_mask,
            detected,
            reference,
            mae_threshold,
            bf_tolerance,
            lane,
            out,
        } => {
            if pred_mask.is_none() && detected.is_none() {
                return Err(CliError::Usage(
                    "give --pred-mask/--truth-mask and/or --detected/--reference".into(),
                ));
            }
            let load_opt_mask = |p: &Option<PathBuf>, s| p.as_deref().map(|p| load_mask(p, s)).transpose();
            let pm = load_opt_mask(&pred_mask, MaskSource::Manual)?;
            let tm = load_opt_mask(&truth_mask, MaskSource::Manual)?;
            let load_opt_traj = |p: &Option<PathBuf>| {
                p.as_deref()
                    .map(|p| load_trajectories(p).input(format!("reading trajectories {}", p.display())))
                    .transpose()
            };
            let det = load_opt_traj(&detected)?;
            let reference_t = load_opt_traj(&reference)?;
            let config = json!({ "mae_threshold_ft": mae_threshold, "bf_tolerance": bf_tolerance });
            let inputs = stages::EvalInputs {
                pred_mask: pm.as_ref(),
                truth_mask: tm.as_ref(),
                detected: det.as_deref(),
                reference: reference_t.as_deref(),
                bf_tolerance,
                mae_threshold_ft: mae_threshold,
                lane,
            };
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("evaluate", &dir);
            [&pred_mask, &truth_mask, &detected, &reference]
                .into_iter()
                .flatten()
                .for_each(|p| rec.input(p));
            let (_, files) = stages::run_evaluate(&inputs, config.clone(), &dir)?;
            rec.outputs(files);
            rec.finish(config)?;
        }
        Command::Synth { spec, calibration, out } => {
            let scene = SceneSpec::load(&spec).input(format!("reading scene spec {}", spec.display()))?;
            let cal = match &calibration {
                Some(p) => load_calibration(p)?,
                None => scene.default_calibration().input("scene calibration")?,
            };
            let (map, truth) = generate(&scene, &cal).input("generating scene")?;
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("synth", &dir);
            rec.input(&spec);
            calibration.iter().for_each(|p| rec.input(p));
            rec.outputs(write_synth(&map, &truth, &cal, &dir)?);
            rec.finish(serde_json::to_value(&scene).runtime("config")?)?;
        }
        Command::Render {
            stmap,
            detected,
            reference,
            detected_color,
            reference_color,
            out,
        } => {
            let dc = render::parse_color(&detected_color).map_err(CliError::Usage)?;
            let rc = render::parse_color(&reference_color).map_err(CliError::Usage)?;
            let map = load_stmap(&stmap)?;
            let load = |p: &Option<PathBuf>| -> CliResult<Vec<_>> {
                match p {
                    Some(p) => load_trajectories(p).input(format!("reading trajectories {}", p.display())),
                    None => Ok(Vec::new()),
                }
            };
            let (det, reference_t) = (load(&detected)?, load(&reference)?);
            let dir = out_dir(&out)?;
            let mut rec = Recorder::new("render", &dir);
            rec.input(&stmap);
            [&detected, &reference].into_iter().flatten().for_each(|p| rec.input(p));
            let path = dir.join("overlay.png");
            render::render_overlay(&map, &det, &reference_t, dc, rc)
                .save(&path)
                .runtime(format!("writing {}", path.display()))?;
            rec.output(&path);
            rec.finish(json!({ "detected_color": dc, "reference_color": rc }))?;
        }
        Command::Pipeline { config, net, out } => run_pipeline(&config, &net, &out)?,
    }
    Ok(())
}

fn write_synth(
    map: &Stmap,
    truth: &stmap::synth::GroundTruth,
    cal: &CalibrationTable,
    dir: &Path,
) -> CliResult<Vec<PathBuf>> {
    let mut files = stages::save_stmap(map, dir)?;
    let mask = dir.join("truth_mask.png");
    truth
        .truth_mask
        .save_png(&mask)
        .runtime(format!("writing {}", mask.display()))?;
    let trajs = dir.join("truth_trajectories.csv");
    save_trajectories(&truth.truth_trajectories, &trajs).runtime(format!("writing {}", trajs.display()))?;
    let plate = dir.join("background_plate.png");
    stages::save_unit_png(&truth.background_plate.to_matrix(), &plate)?;
    let calp = dir.join("calibration.json");
    cal.save(&calp).runtime(format!("writing {}", calp.display()))?;
    files.extend([mask, trajs, plate, calp]);
    Ok(files)
}

fn run_pipeline(config_path: &Path, net_args: &NetArgs, out: &OutDir) -> CliResult<()> {
    let mut cfg = PipelineConfig::load(config_path)?;
    if let Some(seed) = net_args.seed {
        cfg.seed = seed;
    }
    net_args.apply(&mut cfg.net);
    cfg.net.seed = cfg.seed;
    cfg.validate()?;
    let dir = resolve_out_dir(out.out_dir.as_deref(), cfg.paths.output_dir.as_deref());
    stages::create_dir(&dir)?;
    let mut rec = Recorder::new("pipeline", &dir);
    rec.input(config_path);

    let p = cfg.paths.clone();
    let mut reference = match &p.reference {
        Some(r) => Some(load_trajectories(r).input(format!("reading trajectories {}", r.display()))?),
        None => None,
    };
    let mut truth_mask = match &p.truth_mask {
        Some(m) => Some(load_mask(m, MaskSource::Manual)?),
        None => None,
    };
    let mut cal = p.calibration.as_deref().map(load_calibration).transpose()?;
    let map = if let Some(scene_path) = &p.scene {
        rec.input(scene_path);
        let scene = SceneSpec::load(scene_path).input(format!("reading scene spec {}", scene_path.display()))?;
        let c = match cal.take() {
            Some(c) => c,
            None => scene.default_calibration().input("scene calibration")?,
        };
        let (map, truth) = generate(&scene, &c).input("generating scene")?;
        let synth_dir = dir.join("synth");
        stages::create_dir(&synth_dir)?;
        rec.outputs(write_synth(&map, &truth, &c, &synth_dir)?);
        reference.get_or_insert(truth.truth_trajectories);
        truth_mask.get_or_insert(truth.truth_mask);
        cal = Some(c);
        map
    } else if let Some(s) = &p.stmap {
        rec.input(s);
        load_stmap(s)?
    } else {
        let frames = p.frames_dir.as_ref().expect("validated source");
        let scan = p.scanline.as_ref().expect("validated scanline");
        rec.input(frames);
        rec.input(scan);
        let path = ScanlinePath::load(scan).input(format!("reading scanline {}", scan.display()))?;
        let decoded = read_frame_dir(frames)
            .input(format!("reading frames from {}", frames.display()))?
            .collect::<Result<Vec<_>, _>>()
            .input("decoding frames")?;
        build_stmap(&decoded, &path, cfg.frame_rate.expect("validated frame rate")).input("building STMap")?
    };
    let cal = cal.expect("calibration resolved");
    [&p.calibration, &p.reference, &p.truth_mask]
        .into_iter()
        .flatten()
        .for_each(|f| rec.input(f));
    rec.outputs(stages::save_stmap(&map, &dir)?);

    let dmd = stages::run_dmd(&map, &cfg.dmd, &dir.join("dmd"))?;
    rec.outputs(dmd.files);
    let auto_path = dir.join("autolabel_mask.png");
    let auto = stages::run_autolabel(&dmd.residual, cfg.autolabel.threshold, cfg.autolabel.min_area, &auto_path)?;
    rec.output(&auto_path);

    let net = match &net_args.weights {
        Some(w) => {
            rec.input(w);
            load_weights(w)?
        }
        None => {
            let (ds, files) = stages::run_dataset(
                &[Raster::from_stmap(&map)],
                &[auto],
                cfg.net.input_tile,
                cfg.dataset.stride,
                &cfg.dataset.augment,
                cfg.dataset.proportions,
                cfg.seed,
                &dir.join("dataset"),
            )?;
            rec.outputs(files);
            let model = ResUNetPlus::new(&cfg.net).input("network config")?;
            let (outcome, files) = stages::run_train(model, &ds, &dir.join("model"))?;
            rec.outputs(files);
            outcome.net
        }
    };
    let seg_path = dir.join("segment_mask.png");
    let seg = stages::run_segment(&net, &map, cfg.segment_stride, &seg_path)?;
    rec.output(&seg_path);
    let traj_path = dir.join("trajectories.csv");
    let detected = stages::run_extract(&seg, &cal, cfg.extract_min_area, &traj_path)?;
    rec.output(&traj_path);

    let overlay = dir.join("overlay.png");
    render::render_overlay(&map, &detected, reference.as_deref().unwrap_or(&[]), render::PURPLE, render::BLUE)
        .save(&overlay)
        .runtime(format!("writing {}", overlay.display()))?;
    rec.output(&overlay);

    let config_value = serde_json::to_value(&cfg).runtime("config")?;
    if reference.is_some() || truth_mask.is_some() {
        let inputs = stages::EvalInputs {
            pred_mask: truth_mask.as_ref().map(|_| &seg),
            truth_mask: truth_mask.as_ref(),
            detected: reference.as_ref().map(|_| detected.as_slice()),
            reference: reference.as_deref(),
            bf_tolerance: cfg.eval.bf_tolerance,
            mae_threshold_ft: cfg.eval.mae_threshold_ft,
            lane: map.lane_id().to_string(),
        };
        let (_, files) = stages::run_evaluate(&inputs, config_value.clone(), &dir)?;
        rec.outputs(files);
    }
    rec.finish(config_value)?;
    Ok(())
}
