//! Acceptance criteria, each run at its stated tolerance and time budget.
//!
//! This target uses its own `main` (no libtest harness) so every criterion
//! prints exactly one `PASS`/`FAIL` line even when the run succeeds. The
//! process exits non-zero if any criterion fails.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use stmap::autolabel::{assemble_dataset, MaskSource, Sample, SegMask, Split, SplitProportions};
use stmap::dmd::{compute_dmd, decompose, reconstruct, split_background, stationarity, DmdConfig, RankRule, SnapshotPair};
use stmap::eval::{bf_score, match_trajectories, pixel_accuracy, jaccard, trajectory_mae};
use stmap::resunet::{
    batch_from_samples, concat_channels, inverse_frequency_weights, split_channels, train, train_step,
    weighted_cross_entropy, write_history_csv, zeros_like, BatchNorm2d, Conv2d, ConvTranspose2d, DecoderLevel,
    EncoderBlock, Mode, NetConfig, Params, ResUNetPlus, Sgd, Tensor,
};
use stmap::stmap::{to_gray, AugmentSpec, Raster};
use stmap::synth::{generate, Background, SceneSpec, ShadowBand, SpeedProfile, VehicleSpec};
use stmap::traj::{extract_trajectories, WorldSample, WorldTrajectory, DEFAULT_MIN_AREA};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn budget(start: Instant, limit: Duration) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    if start.elapsed() > limit {
        Err(format!("took {s:.1} s, budget {} s", limit.as_secs()))
    } else {
        Ok(s)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

// ---------------------------------------------------------------- 1 -----

/// Reduced-operator eigenvalues against the dense `X' X^+` operator.
fn dmd_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(3..=10);
        let prior = gaussian(&mut rng, n, m - 1);
        let posterior = gaussian(&mut rng, n, m - 1);
        let r = n.min(m - 1);
        let snap = SnapshotPair::new(prior.clone(), posterior.clone()).map_err(|e| e.to_string())?;
        let modes = compute_dmd(&snap, RankRule::Fixed(r)).map_err(|e| format!("case {case}: {e}"))?;
        // pinv(X) = pinv(X^T)^T; factoring the tall orientation sidesteps
        // nalgebra's SVD trouble with wide near-degenerate inputs.
        let pinv = if n < m - 1 {
            prior.transpose().pseudo_inverse(1e-12).map_err(|e| e.to_string())?.transpose()
        } else {
            prior.clone().pseudo_inverse(1e-12).map_err(|e| e.to_string())?
        };
        let dense = &posterior * pinv;
        let mut oracle: Vec<C64> = dense.complex_eigenvalues().iter().copied().collect();
        oracle.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        oracle.truncate(r);
        let got = modes.eigenvalues();
        if got.len() != r {
            return Err(format!("case {case}: {} eigenvalues, expected {r}", got.len()));
        }
        let mut used = vec![false; r];
        for &l in got {
            let (j, d) = oracle
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, o)| (j, (o - l).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("one oracle eigenvalue per DMD eigenvalue");
            used[j] = true;
            worst = worst.max(d);
        }
    }
    let secs = budget(start, Duration::from_secs(10))?;
    if worst <= 1e-8 {
        Ok(format!("100 cases, max |dlambda| = {worst:.2e} (tol 1e-8), {secs:.2} s"))
    } else {
        Err(format!("max |dlambda| = {worst:.2e} exceeds 1e-8"))
    }
}

// ---------------------------------------------------------------- 2 -----

fn two_strand_scene() -> SceneSpec {
    SceneSpec {
        n: 64,
        m: 120,
        frame_rate: 10.0,
        vehicles: vec![
            VehicleSpec {
                entry_time: 1.0,
                speed: SpeedProfile::constant(30.0),
                length_ft: 15.0,
                intensity: [230, 230, 230],
            },
            VehicleSpec {
                entry_time: 5.0,
                speed: SpeedProfile::constant(22.0),
                length_ft: 18.0,
                intensity: [200, 60, 60],
            },
        ],
        background: Background::Striped {
            base: [70, 70, 70],
            stripe: [150, 150, 150],
            period_px: 16,
            width_px: 3,
        },
        shadow_bands: vec![],
        noise_sigma: 0.0,
        seed: 1,
        scanline_length_ft: Some(200.0),
    }
}

/// The static plate is rank one and constant in time, so exactly one mode
/// should be stationary, and the stationary reconstruction should be the plate.
fn stationary_modes() -> Outcome {
    let spec = two_strand_scene();
    let cal = spec.default_calibration().map_err(|e| e.to_string())?;
    let (map, truth) = generate(&spec, &cal).map_err(|e| e.to_string())?;
    let data = to_gray(&map).to_matrix();
    let (modes, _) = decompose(&data, &DmdConfig::default()).map_err(|e| e.to_string())?;
    let split = split_background(&modes, 1e-2).map_err(|e| e.to_string())?;
    let stationary: Vec<usize> = (0..modes.rank())
        .filter(|&j| stationarity(modes.eigenvalues()[j]) <= 1e-2)
        .collect();
    if stationary != split.background_mode_indices || stationary.len() != 1 {
        return Err(format!("stationary modes {stationary:?}; expected exactly one background mode"));
    }
    let plate = &truth.background_plate;
    let (n, m) = (spec.n, spec.m);
    let close = (0..n)
        .flat_map(|r| (0..m).map(move |t| (r, t)))
        .filter(|&(r, t)| (split.background[(r, t)] - plate.get(r, t)).abs() <= 0.05)
        .count();
    let frac = close as f64 / (n * m) as f64;
    let next = (0..modes.rank())
        .filter(|j| !stationary.contains(j))
        .map(|j| stationarity(modes.eigenvalues()[j]))
        .fold(f64::INFINITY, f64::min);
    if frac >= 0.95 {
        Ok(format!(
            "1 stationary mode of {} (next |ln lambda| = {next:.3}), plate within 0.05 on {:.1}% of pixels",
            modes.rank(),
            100.0 * frac
        ))
    } else {
        Err(format!("plate within 0.05 on only {:.1}% of pixels", 100.0 * frac))
    }
}

// ---------------------------------------------------------------- 3 -----

/// Real data `sum_j b_j phi_j lambda_j^t` from conjugate pairs plus one real
/// mode, reconstructed at rank k.
fn exact_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(8..=20);
        let m = rng.random_range(10..=16);
        let pairs = rng.random_range(1..=2usize);
        let k = 2 * pairs + 1;
        assert!(k <= n.min(m - 1));
        let mut eig = Vec::new();
        let mut phi: Vec<Vec<C64>> = Vec::new();
        for _ in 0..pairs {
            let l = C64::from_polar(rng.random_range(0.9..1.02), rng.random_range(0.2..2.5));
            let v: Vec<C64> = (0..n)
                .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            eig.push(l);
            eig.push(l.conj());
            phi.push(v.iter().map(|z| z.conj()).collect());
            phi.insert(phi.len() - 1, v);
        }
        eig.push(C64::new(rng.random_range(0.5..1.0), 0.0));
        phi.push((0..n).map(|_| C64::new(StandardNormal.sample(&mut rng), 0.0)).collect());
        let data = DMatrix::from_fn(n, m, |i, t| {
            (0..k).map(|j| phi[j][i] * eig[j].powu(t as u32)).sum::<C64>().re
        });
        let cfg = DmdConfig {
            rank_rule: RankRule::Fixed(k),
            ..DmdConfig::default()
        };
        let (modes, _) = decompose(&data, &cfg).map_err(|e| e.to_string())?;
        let rec = reconstruct(&modes, 0..m).map_err(|e| e.to_string())?;
        worst = worst.max((&rec.values - &data).norm() / data.norm());
    }
    if worst < 1e-6 {
        Ok(format!("20 cases (k = 3 or 5), max relative Frobenius error {worst:.2e} (tol 1e-6)"))
    } else {
        Err(format!("relative Frobenius error {worst:.2e}"))
    }
}

// ---------------------------------------------------------------- 4 -----

const H: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn fd_input(x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
    let mut xp = x.clone();
    (0..x.data.len())
        .map(|i| {
            let orig = xp.data[i];
            xp.data[i] = orig + H;
            let fp = f(&xp);
            xp.data[i] = orig - H;
            let fm = f(&xp);
            xp.data[i] = orig;
            (fp - fm) / (2.0 * H)
        })
        .collect()
}

fn fd_params<M: Params + Clone>(model: &M, grads: &M, f: &dyn Fn(&M) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut m = model.clone();
    let lens: Vec<usize> = {
        let mut v = Vec::new();
        model.params("", &mut v);
        v.iter().map(|(_, s)| s.len()).collect()
    };
    let mut fd = Vec::new();
    for (slot, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let set = |m: &mut M, value: f64| {
                let mut v = Vec::new();
                m.params_mut("", &mut v);
                v[slot].1[i] = value;
            };
            let orig = {
                let mut v = Vec::new();
                m.params("", &mut v);
                v[slot].1[i]
            };
            set(&mut m, orig + H);
            let fp = f(&m);
            set(&mut m, orig - H);
            let fm = f(&m);
            set(&mut m, orig);
            fd.push((fp - fm) / (2.0 * H));
        }
    }
    let mut g = Vec::new();
    grads.params("", &mut g);
    (g.iter().flat_map(|(_, s)| s.iter().copied()).collect(), fd)
}

/// Perturbs parameters away from zero-initialised biases so no ReLU input
/// sits exactly on its kink.
fn jitter<M: Params>(m: &mut M, rng: &mut ChaCha8Rng) {
    let mut v = Vec::new();
    m.params_mut("", &mut v);
    for (_, s) in v {
        s.iter_mut().for_each(|p| *p += rng.random_range(-0.2..0.2));
    }
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(407);
    let mut results: Vec<(String, f64)> = Vec::new();
    let mut check = |name: String, an: &[f64], fd: &[f64]| {
        let nonzero = an.iter().any(|v| *v != 0.0);
        results.push((name, if nonzero { rel_err(an, fd) } else { f64::INFINITY }));
    };

    for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0)] {
        let mut conv = Conv2d::new(3, 2, k, s, p, &mut rng);
        jitter(&mut conv, &mut rng);
        let x = rand_tensor(&mut rng, 2, 3, 4, 4);
        let (y, cache) = conv.forward(&x);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&conv);
        let dx = conv.backward(&cache, &r, &mut g);
        check(format!("conv{k}x{k}/s{s} input"), &dx.data, &fd_input(&x, &|x| dot(&conv.forward(x).0, &r)));
        let (an, fd) = fd_params(&conv, &g, &|c: &Conv2d| dot(&c.forward(&x).0, &r));
        check(format!("conv{k}x{k}/s{s} params"), &an, &fd);
    }

    for f in [2, 4] {
        let t = ConvTranspose2d::new(3, 2, f, &mut rng);
        let x = rand_tensor(&mut rng, 2, 3, 2, 1);
        let (y, cache) = t.forward(&x);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&t);
        let dx = t.backward(&cache, &r, &mut g);
        check(format!("convT x{f} input"), &dx.data, &fd_input(&x, &|x| dot(&t.forward(x).0, &r)));
        let (an, fd) = fd_params(&t, &g, &|t: &ConvTranspose2d| dot(&t.forward(&x).0, &r));
        check(format!("convT x{f} params"), &an, &fd);
    }

    let mut bn = BatchNorm2d::new(3);
    jitter(&mut bn, &mut rng);
    bn.running_var = vec![0.8, 1.5, 0.3];
    let x = rand_tensor(&mut rng, 2, 3, 4, 4);
    for mode in [Mode::Train, Mode::Eval] {
        let (y, cache) = bn.forward(&x, mode);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&bn);
        let dx = bn.backward(&cache, &r, &mut g);
        check(format!("batchnorm {mode:?} input"), &dx.data, &fd_input(&x, &|x| dot(&bn.forward(x, mode).0, &r)));
        let (an, fd) = fd_params(&bn, &g, &|b: &BatchNorm2d| dot(&b.forward(&x, mode).0, &r));
        check(format!("batchnorm {mode:?} params"), &an, &fd);
    }

    let a = rand_tensor(&mut rng, 2, 2, 4, 4);
    let b = rand_tensor(&mut rng, 2, 1, 4, 4);
    let r = rand_tensor(&mut rng, 2, 3, 4, 4);
    let f = |a: &Tensor, b: &Tensor| dot(&concat_channels(&[a, b]).relu(), &r);
    let d = Tensor::relu_backward(&r, &concat_channels(&[&a, &b]).relu());
    let parts = split_channels(&d, &[2, 1]);
    check("concat+relu a".into(), &parts[0].data, &fd_input(&a, &|a| f(a, &b)));
    check("concat+relu b".into(), &parts[1].data, &fd_input(&b, &|b| f(&a, b)));

    let z = rand_tensor(&mut rng, 2, 2, 4, 4);
    let labels: Vec<u8> = (0..32).map(|_| rng.random_range(0..2)).collect();
    let w = [0.3, 2.5];
    let (_, gz) = weighted_cross_entropy(&z, &labels, &w);
    check(
        "weighted cross-entropy".into(),
        &gz.data,
        &fd_input(&z, &|z| weighted_cross_entropy(z, &labels, &w).0),
    );

    for &(cin, cout, stride) in &[(3, 3, 1), (2, 3, 1), (2, 3, 2)] {
        let mut block = EncoderBlock::new(cin, cout, stride, &mut rng);
        jitter(&mut block, &mut rng);
        let x = rand_tensor(&mut rng, 2, cin, 4, 4);
        let (y, cache) = block.forward(&x, Mode::Train);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&block);
        let dx = block.backward(&cache, &r, &mut g);
        let f = |b: &EncoderBlock, x: &Tensor| dot(&b.forward(x, Mode::Train).0, &r);
        let tag = format!("encoder {cin}->{cout}/s{stride}");
        check(format!("{tag} input"), &dx.data, &fd_input(&x, &|x| f(&block, x)));
        let (an, fd) = fd_params(&block, &g, &|b| f(b, &x));
        check(format!("{tag} params"), &an, &fd);
    }

    let mut dec = DecoderLevel::new(2, 2, &[(3, 2)], (3, 4), false, &mut rng);
    jitter(&mut dec, &mut rng);
    let skip = rand_tensor(&mut rng, 2, 2, 4, 4);
    let deeper = rand_tensor(&mut rng, 2, 3, 2, 2);
    let bottom = rand_tensor(&mut rng, 2, 3, 1, 1);
    let (y, cache) = dec.forward(&skip, &[&deeper], &bottom);
    let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
    let mut g = zeros_like(&dec);
    let dd = dec.backward(&cache, &r, &mut g);
    let f = |dl: &DecoderLevel, s: &Tensor, dp: &Tensor, b: &Tensor| dot(&dl.forward(s, &[dp], b).0, &r);
    check("decoder skip".into(), &dd.skip.data, &fd_input(&skip, &|s| f(&dec, s, &deeper, &bottom)));
    check("decoder deeper".into(), &dd.deeper[0].data, &fd_input(&deeper, &|dp| f(&dec, &skip, dp, &bottom)));
    check("decoder bottom".into(), &dd.bottom.data, &fd_input(&bottom, &|b| f(&dec, &skip, &deeper, b)));
    let (an, fd) = fd_params(&dec, &g, &|dl| f(dl, &skip, &deeper, &bottom));
    check("decoder params".into(), &an, &fd);

    let cfg = NetConfig {
        levels: 2,
        channels: vec![2, 3],
        input_tile: 4,
        batch_size: 3,
        seed: 9,
        ..NetConfig::default()
    };
    let mut net = ResUNetPlus::new(&cfg).map_err(|e| e.to_string())?;
    jitter(&mut net, &mut rng);
    let x = rand_tensor(&mut rng, 3, 1, 4, 4);
    let labels: Vec<u8> = (0..48).map(|_| rng.random_range(0..2)).collect();
    let w = [0.6, 1.7];
    let (_, grads, cache) = net.loss_and_grads(&x, &labels, &w, Mode::Train).map_err(|e| e.to_string())?;
    let loss = |n: &ResUNetPlus, x: &Tensor| weighted_cross_entropy(&n.forward(x, Mode::Train).unwrap().0, &labels, &w).0;
    let (an, fd) = fd_params(&net, &grads, &|n| loss(n, &x));
    check("full network params".into(), &an, &fd);
    let (z, _) = net.forward(&x, Mode::Train).map_err(|e| e.to_string())?;
    let (_, dz) = weighted_cross_entropy(&z, &labels, &w);
    let mut g = zeros_like(&net);
    let dx = net.backward(&cache, &dz, &mut g);
    check("full network input".into(), &dx.data, &fd_input(&x, &|x| loss(&net, x)));

    let secs = budget(start, Duration::from_secs(60))?;
    let (name, worst) = results
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("at least one check");
    if worst < 1e-6 {
        Ok(format!("{} checks, worst {name} at {worst:.2e} (tol 1e-6), {secs:.1} s", results.len()))
    } else {
        Err(format!("{name}: relative error {worst:.2e}"))
    }
}

// ---------------------------------------------------------------- 5 -----

fn bar_sample(tile: usize) -> Sample {
    let mut image = Raster::zeros(tile, tile, 1);
    let mut mask = SegMask::empty(tile, tile, MaskSource::Manual);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for r in 0..tile {
        for c in 0..tile {
            let on = (tile / 3..tile / 3 + tile / 5).contains(&c) && r > tile / 6;
            *image.at_mut(r, c, 0) = if on { 0.85 } else { 0.3 } + rng.random_range(-0.05..0.05);
            mask.set(r, c, on);
        }
    }
    Sample {
        image,
        mask,
        split: Split::Train,
        augmented_from: None,
    }
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let cfg = NetConfig {
        learning_rate: 0.01,
        batch_size: 1,
        seed: 5,
        ..NetConfig::default()
    };
    let mut net = ResUNetPlus::new(&cfg).map_err(|e| e.to_string())?;
    let sample = bar_sample(cfg.input_tile);
    let (x, labels) = batch_from_samples(&[&sample], 1).map_err(|e| e.to_string())?;
    let weights = inverse_frequency_weights([&sample], 2);
    let mut opt = Sgd::new(&net, cfg.learning_rate, cfg.momentum);
    let first = train_step(&mut net, &mut opt, &x, &labels, &weights).map_err(|e| e.to_string())?;
    let (mut last, mut steps) = (first, 1);
    while steps < 200 && last >= 0.1 * first {
        last = train_step(&mut net, &mut opt, &x, &labels, &weights).map_err(|e| e.to_string())?;
        steps += 1;
    }
    let secs = budget(start, Duration::from_secs(120))?;
    if last < 0.1 * first {
        Ok(format!("loss {first:.4} -> {last:.4} in {steps} steps, {secs:.1} s"))
    } else {
        Err(format!("loss {first:.4} -> {last:.4} after 200 steps"))
    }
}

// ---------------------------------------------------------------- 6 -----

fn benchmark() -> Outcome {
    let start = Instant::now();
    let spec = SceneSpec::load(scenes_dir().join("benchmark_10_vehicles.json")).map_err(|e| e.to_string())?;
    if spec.vehicles.len() != 10 || spec.shadow_bands.is_empty() || spec.noise_sigma <= 0.0 {
        return Err("benchmark scene must have 10 vehicles, shadows and noise".into());
    }
    let cal = spec.default_calibration().map_err(|e| e.to_string())?;
    let (map, truth) = generate(&spec, &cal).map_err(|e| e.to_string())?;
    let raster = Raster::from_stmap(&map);
    let cfg = NetConfig {
        seed: spec.seed,
        ..NetConfig::default()
    };
    let ds = assemble_dataset(
        std::slice::from_ref(&raster),
        std::slice::from_ref(&truth.truth_mask),
        cfg.input_tile,
        16,
        &AugmentSpec::default(),
        SplitProportions::default(),
        spec.seed,
    )
    .map_err(|e| e.to_string())?;
    let out = train(ResUNetPlus::new(&cfg).map_err(|e| e.to_string())?, &ds).map_err(|e| e.to_string())?;
    let val_iou = out.history.last().and_then(|h| h.val_iou).ok_or("no validation IoU")?;
    let mask = stmap::resunet::segment_map(&out.net, &raster, 16).map_err(|e| e.to_string())?;
    let (_, _, detected) = extract_trajectories(&mask, &cal, DEFAULT_MIN_AREA).map_err(|e| e.to_string())?;
    let rep = match_trajectories(&detected, &truth.truth_trajectories, 15.0).map_err(|e| e.to_string())?;
    let secs = budget(start, Duration::from_secs(15 * 60))?;
    let summary = format!(
        "val mean IoU {val_iou:.3} (>= 0.85), TP {} FP {} FN {}, TPR {:.2} (>= 0.9), FPR {:.2} (<= 0.1), {secs:.0} s",
        rep.tp, rep.fp, rep.fn_, rep.tpr, rep.fpr
    );
    if val_iou >= 0.85 && rep.tpr >= 0.9 && rep.fpr <= 0.1 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------- 7 -----

fn mask_from_bits(bits: u64, rows: usize, cols: usize) -> (SegMask, Vec<u8>) {
    let v: Vec<u8> = (0..rows * cols).map(|i| ((bits >> i) & 1) as u8).collect();
    (SegMask::new(rows, cols, v.clone(), MaskSource::Manual).unwrap(), v)
}

fn oracle_boundary(bits: &[u8], rows: usize, cols: usize) -> Vec<(i64, i64)> {
    let at = |r: i64, c: i64| -> u8 {
        if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
            0
        } else {
            bits[r as usize * cols + c as usize]
        }
    };
    let mut out = vec![];
    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            if at(r, c) == 1 && [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)].iter().any(|&(a, b)| at(a, b) == 0) {
                out.push((r, c));
            }
        }
    }
    out
}

fn oracle_bf(p: &[u8], t: &[u8], rows: usize, cols: usize, tol: f64) -> f64 {
    let bp = oracle_boundary(p, rows, cols);
    let bt = oracle_boundary(t, rows, cols);
    if bp.is_empty() && bt.is_empty() {
        return 1.0;
    }
    if bp.is_empty() || bt.is_empty() {
        return 0.0;
    }
    let near = |a: &(i64, i64), set: &[(i64, i64)]| {
        set.iter().any(|b| (((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt() <= tol)
    };
    let prec = bp.iter().filter(|a| near(a, &bt)).count() as f64 / bp.len() as f64;
    let rec = bt.iter().filter(|a| near(a, &bp)).count() as f64 / bt.len() as f64;
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

/// Every metric of one pair against per-pixel counting; `Err` names the
/// first disagreement.
fn compare_pair(p: &[u8], t: &[u8], pm: &SegMask, tm: &SegMask, rows: usize, cols: usize, tol: f64) -> Result<(), String> {
    let mut c = [[0.0f64; 2]; 2];
    for i in 0..p.len() {
        c[t[i] as usize][p[i] as usize] += 1.0;
    }
    let n = p.len() as f64;
    let acc = pixel_accuracy(pm, tm).unwrap();
    let iou = jaccard(pm, tm).unwrap();
    let mut ok = acc.global == (c[0][0] + c[1][1]) / n;
    for k in 0..2 {
        let truth_k = c[k][0] + c[k][1];
        let pred_k = c[0][k] + c[1][k];
        let exp_acc = match (truth_k == 0.0, pred_k == 0.0) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            _ => c[k][k] / truth_k,
        };
        let union = truth_k + pred_k - c[k][k];
        let exp_iou = if union == 0.0 { 1.0 } else { c[k][k] / union };
        ok &= acc.per_class[k] == exp_acc && iou.per_class[k] == exp_iou;
    }
    ok &= bf_score(pm, tm, tol).unwrap() == oracle_bf(p, t, rows, cols, tol);
    if ok {
        Ok(())
    } else {
        Err(format!("{rows}x{cols} pair p={p:?} t={t:?} tol={tol}"))
    }
}

fn traj(id: usize, pts: &[(f64, f64)]) -> WorldTrajectory {
    WorldTrajectory {
        strand_id: id,
        samples: pts
            .iter()
            .enumerate()
            .map(|(i, &(t, x))| WorldSample {
                frame: i,
                time_s: t,
                y_pix: x,
                position_ft: x,
            })
            .collect(),
    }
}

fn metric_oracles() -> Outcome {
    let tols = [0.0, 1.0, 1.5];
    let mut exhaustive = 0u64;
    // Every pair of masks with at most 8 pixels.
    for &(rows, cols) in &[(1, 1), (1, 2), (2, 1), (1, 3), (2, 2), (1, 4), (2, 3), (3, 2), (2, 4), (4, 2)] {
        let cells = rows * cols;
        let masks: Vec<(SegMask, Vec<u8>)> = (0..1u64 << cells).map(|b| mask_from_bits(b, rows, cols)).collect();
        for (pm, p) in &masks {
            for (tm, t) in &masks {
                let tol = tols[exhaustive as usize % tols.len()];
                compare_pair(p, t, pm, tm, rows, cols, tol)?;
                exhaustive += 1;
            }
        }
    }
    // Random pairs over every shape up to 6x6.
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut sampled = 0u64;
    for rows in 1..=6 {
        for cols in 1..=6 {
            for _ in 0..400 {
                let cells = rows * cols;
                let (pm, p) = mask_from_bits(rng.random::<u64>() & ((1u64 << cells) - 1), rows, cols);
                let (tm, t) = mask_from_bits(rng.random::<u64>() & ((1u64 << cells) - 1), rows, cols);
                compare_pair(&p, &t, &pm, &tm, rows, cols, rng.random_range(0.0..4.0))?;
                sampled += 1;
            }
        }
    }
    // Closed-form trajectory errors.
    let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
    let line = |a: f64, b: f64| -> Vec<(f64, f64)> { times.iter().map(|&t| (t, a + b * t)).collect() };
    let truth = traj(0, &line(0.0, 30.0));
    let cases: [(WorldTrajectory, f64); 3] = [
        (traj(1, &line(4.0, 30.0)), 4.0),
        (traj(2, &line(-2.5, 30.0)), 2.5),
        (traj(3, &line(0.0, 40.0)), 10.0 * times.iter().sum::<f64>() / times.len() as f64),
    ];
    for (det, want) in &cases {
        let got = trajectory_mae(det, &truth).map_err(|e| e.to_string())?;
        if (got - want).abs() > 1e-12 {
            return Err(format!("MAE {got} for constructed case, expected {want}"));
        }
    }
    // Half-overlapping support: only the shared samples count.
    let late = traj(4, &times[5..].iter().map(|&t| (t, 30.0 * t + 6.0)).collect::<Vec<_>>());
    let got = trajectory_mae(&late, &truth).map_err(|e| e.to_string())?;
    if (got - 6.0).abs() > 1e-12 {
        return Err(format!("MAE {got} on partial overlap, expected 6"));
    }
    Ok(format!(
        "{exhaustive} exhaustive + {sampled} sampled mask pairs equal the per-pixel oracle; 4 closed-form MAE cases exact"
    ))
}

// ---------------------------------------------------------------- 8 -----

fn noise_free_recovery() -> Outcome {
    let vehicle = |entry: f64, speed: SpeedProfile, len: f64| VehicleSpec {
        entry_time: entry,
        speed,
        length_ft: len,
        intensity: [220, 220, 220],
    };
    let spec = SceneSpec {
        n: 96,
        m: 400,
        frame_rate: 10.0,
        vehicles: vec![
            vehicle(0.5, SpeedProfile::constant(25.0), 16.0),
            vehicle(
                6.0,
                SpeedProfile::StopAndGo {
                    base: 20.0,
                    amplitude: 20.0,
                    period: 30.0,
                },
                18.0,
            ),
            vehicle(
                20.0,
                SpeedProfile::Piecewise {
                    segments: vec![(3.0, 30.0), (4.0, 10.0), (1.0, 25.0)],
                },
                14.0,
            ),
        ],
        background: Background::Gradient {
            start: [60, 60, 60],
            end: [120, 110, 100],
        },
        shadow_bands: Vec::<ShadowBand>::new(),
        noise_sigma: 0.0,
        seed: 8,
        scanline_length_ft: Some(240.0),
    };
    let cal = spec.default_calibration().map_err(|e| e.to_string())?;
    let (_, truth) = generate(&spec, &cal).map_err(|e| e.to_string())?;
    let (strands, pix, world) = extract_trajectories(&truth.truth_mask, &cal, 1).map_err(|e| e.to_string())?;
    if strands.len() != truth.truth_trajectories.len() {
        return Err(format!("{} strands for {} vehicles", strands.len(), truth.truth_trajectories.len()));
    }
    let cell = cal.max_cell_ft();
    let (mut worst_px, mut worst_ft, mut samples) = (0.0f64, 0.0f64, 0usize);
    for t in &truth.truth_trajectories {
        let first = &t.samples[0];
        let idx = strands
            .iter()
            .position(|s| s.contains(first.y_pix as usize, first.frame))
            .ok_or_else(|| format!("vehicle {} front not inside any strand", t.strand_id))?;
        for s in &t.samples {
            let ps = pix[idx].samples.iter().find(|p| p.0 == s.frame);
            let ws = world[idx].samples.iter().find(|w| w.frame == s.frame);
            match (ps, ws) {
                (Some(&(_, row)), Some(w)) => {
                    worst_px = worst_px.max((row as f64 - s.y_pix).abs());
                    worst_ft = worst_ft.max((w.position_ft - s.position_ft).abs());
                    samples += 1;
                }
                _ => return Err(format!("vehicle {} has no boundary at frame {}", t.strand_id, s.frame)),
            }
        }
    }
    let summary = format!(
        "{samples} samples over 3 vehicles: max {worst_px} px (<= 1), max {worst_ft:.3} ft (<= cell {cell:.3} ft)"
    );
    if worst_px <= 1.0 && worst_ft <= cell {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------- 9 -----

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let spec = SceneSpec::load(scenes_dir().join("benchmark_10_vehicles.json")).map_err(|e| e.to_string())?;
    let cal = spec.default_calibration().map_err(|e| e.to_string())?;
    let run_map = || generate(&spec, &cal).map(|(m, t)| (m.to_bytes(), t)).map_err(|e| e.to_string());
    let (a, ta) = run_map()?;
    let (b, tb) = run_map()?;
    if a != b || ta != tb {
        return Err("STMap or ground truth differs between runs".into());
    }
    let (map, truth) = generate(&spec, &cal).map_err(|e| e.to_string())?;
    let raster = Raster::from_stmap(&map);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut dumps = Vec::new();
    let mut histories = Vec::new();
    for run in 0..2 {
        let ds = assemble_dataset(
            std::slice::from_ref(&raster),
            std::slice::from_ref(&truth.truth_mask),
            32,
            16,
            &AugmentSpec::default(),
            SplitProportions::default(),
            11,
        )
        .map_err(|e| e.to_string())?;
        let dir = tmp.path().join(format!("run{run}"));
        ds.save(&dir).map_err(|e| e.to_string())?;
        dumps.push(dir_bytes(&dir));
        let cfg = NetConfig {
            levels: 2,
            channels: vec![4, 8],
            input_tile: 32,
            max_epochs: 2,
            seed: 11,
            ..NetConfig::default()
        };
        let out = train(ResUNetPlus::new(&cfg).map_err(|e| e.to_string())?, &ds).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        write_history_csv(&out.history, &mut csv).map_err(|e| e.to_string())?;
        histories.push(csv);
    }
    if dumps[0] != dumps[1] {
        return Err("dataset directories differ between runs".into());
    }
    if histories[0] != histories[1] {
        return Err("training histories differ between runs".into());
    }
    Ok(format!(
        "STMap ({} bytes), dataset ({} files) and loss history identical across two runs",
        a.len(),
        dumps[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("DMD eigenvalues match the dense pseudoinverse oracle", dmd_oracle),
        ("stationary-mode recovery and background plate", stationary_modes),
        ("exact reconstruction from k known modes", exact_reconstruction),
        ("Res-UNet+ finite-difference gradient checks", gradient_checks),
        ("overfit a single training pair", overfit),
        ("end-to-end 10-vehicle synthetic benchmark", benchmark),
        ("segmentation and trajectory metrics equal oracles", metric_oracles),
        ("noise-free lower-boundary recovery", noise_free_recovery),
        ("determinism of STMaps, datasets and histories", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
