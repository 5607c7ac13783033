//! Finite-difference gradient checks and behavioural tests for the network.

use super::blocks::{DecoderLevel, EncoderBlock};
use super::*;
use crate::autolabel::{LabeledDataset, MaskSource, Sample, SegMask, Split, SplitProportions};
use crate::stmap::{AugmentSpec, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
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

fn with_param<M: Params>(m: &mut M, slot: usize, i: usize, update: impl FnOnce(&mut f64)) {
    let mut v = Vec::new();
    m.params_mut("", &mut v);
    update(&mut v[slot].1[i]);
}

/// Central differences for every trainable parameter, flattened in
/// `params` order, next to the analytic gradient from `grads`.
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
            let mut orig = 0.0;
            with_param(&mut m, slot, i, |p| {
                orig = *p;
                *p = orig + H;
            });
            let fp = f(&m);
            with_param(&mut m, slot, i, |p| *p = orig - H);
            let fm = f(&m);
            with_param(&mut m, slot, i, |p| *p = orig);
            fd.push((fp - fm) / (2.0 * H));
        }
    }
    let mut g = Vec::new();
    grads.params("", &mut g);
    let an: Vec<f64> = g.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    (an, fd)
}

fn assert_close(what: &str, an: &[f64], fd: &[f64]) {
    let e = rel_err(an, fd);
    assert!(e < TOL, "{what}: relative error {e:e}");
    assert!(an.iter().any(|v| *v != 0.0), "{what}: gradient is identically zero");
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0)] {
        let mut conv = Conv2d::new(3, 2, k, s, p, &mut rng);
        conv.bias = vec![0.3, -0.1];
        let x = rand_tensor(&mut rng, 2, 3, 4, 4);
        let (y, cache) = conv.forward(&x);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&conv);
        let dx = conv.backward(&cache, &r, &mut g);
        let fdx = fd_input(&x, &|x| dot(&conv.forward(x).0, &r));
        assert_close(&format!("conv{k} s{s} input"), &dx.data, &fdx);
        let (an, fd) = fd_params(&conv, &g, &|c: &Conv2d| dot(&c.forward(&x).0, &r));
        assert_close(&format!("conv{k} s{s} params"), &an, &fd);
    }
}

#[test]
fn transposed_conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for f in [2, 4] {
        let t = ConvTranspose2d::new(3, 2, f, &mut rng);
        let x = rand_tensor(&mut rng, 2, 3, 2, 1);
        let (y, cache) = t.forward(&x);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&t);
        let dx = t.backward(&cache, &r, &mut g);
        assert_close("convT input", &dx.data, &fd_input(&x, &|x| dot(&t.forward(x).0, &r)));
        let (an, fd) = fd_params(&t, &g, &|t: &ConvTranspose2d| dot(&t.forward(&x).0, &r));
        assert_close("convT params", &an, &fd);
    }
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bn = BatchNorm2d::new(3);
    bn.gamma = vec![0.7, 1.3, -0.4];
    bn.beta = vec![0.1, 0.0, -0.2];
    bn.running_mean = vec![0.2, -0.1, 0.05];
    bn.running_var = vec![0.8, 1.5, 0.3];
    let x = rand_tensor(&mut rng, 2, 3, 3, 3);
    for mode in [Mode::Train, Mode::Eval] {
        let (y, cache) = bn.forward(&x, mode);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&bn);
        let dx = bn.backward(&cache, &r, &mut g);
        assert_close("bn input", &dx.data, &fd_input(&x, &|x| dot(&bn.forward(x, mode).0, &r)));
        let (an, fd) = fd_params(&bn, &g, &|b: &BatchNorm2d| dot(&b.forward(&x, mode).0, &r));
        assert_close("bn params", &an, &fd);
    }
}

#[test]
fn relu_and_concat_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&mut rng, 2, 2, 3, 3);
    let b = rand_tensor(&mut rng, 2, 1, 3, 3);
    let r = rand_tensor(&mut rng, 2, 3, 3, 3);
    let f = |a: &Tensor, b: &Tensor| dot(&concat_channels(&[a, b]).relu(), &r);
    let out = concat_channels(&[&a, &b]).relu();
    let d = Tensor::relu_backward(&r, &out);
    let parts = split_channels(&d, &[2, 1]);
    assert_close("concat/relu a", &parts[0].data, &fd_input(&a, &|a| f(a, &b)));
    assert_close("concat/relu b", &parts[1].data, &fd_input(&b, &|b| f(&a, b)));
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = rand_tensor(&mut rng, 2, 2, 4, 4);
    let labels: Vec<u8> = (0..32).map(|_| rng.random_range(0..2)).collect();
    let w = [0.3, 2.5];
    let (_, g) = weighted_cross_entropy(&z, &labels, &w);
    let fd = fd_input(&z, &|z| weighted_cross_entropy(z, &labels, &w).0);
    assert_close("weighted CE", &g.data, &fd);
}

#[test]
fn encoder_block_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // Identity shortcut, channel projection, and strided projection.
    for &(cin, cout, stride) in &[(3, 3, 1), (2, 3, 1), (2, 3, 2)] {
        let block = EncoderBlock::new(cin, cout, stride, &mut rng);
        let x = rand_tensor(&mut rng, 2, cin, 4, 4);
        let (y, cache) = block.forward(&x, Mode::Train);
        let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
        let mut g = zeros_like(&block);
        let dx = block.backward(&cache, &r, &mut g);
        let f = |b: &EncoderBlock, x: &Tensor| dot(&b.forward(x, Mode::Train).0, &r);
        assert_close("encoder input", &dx.data, &fd_input(&x, &|x| f(&block, x)));
        let (an, fd) = fd_params(&block, &g, &|b| f(b, &x));
        assert_close("encoder params", &an, &fd);
    }
}

#[test]
fn decoder_level_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Shallow level with one deeper level and the bottom, at 4x4.
    let dec = DecoderLevel::new(2, 2, &[(3, 2)], (3, 4), false, &mut rng);
    let skip = rand_tensor(&mut rng, 2, 2, 4, 4);
    let deeper = rand_tensor(&mut rng, 2, 3, 2, 2);
    let bottom = rand_tensor(&mut rng, 2, 3, 1, 1);
    let (y, cache) = dec.forward(&skip, &[&deeper], &bottom);
    let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
    let mut g = zeros_like(&dec);
    let d = dec.backward(&cache, &r, &mut g);
    let f = |dl: &DecoderLevel, s: &Tensor, dp: &Tensor, b: &Tensor| dot(&dl.forward(s, &[dp], b).0, &r);
    assert_close("decoder skip", &d.skip.data, &fd_input(&skip, &|s| f(&dec, s, &deeper, &bottom)));
    assert_close("decoder deeper", &d.deeper[0].data, &fd_input(&deeper, &|dp| f(&dec, &skip, dp, &bottom)));
    assert_close("decoder bottom", &d.bottom.data, &fd_input(&bottom, &|b| f(&dec, &skip, &deeper, b)));
    let (an, fd) = fd_params(&dec, &g, &|dl| f(dl, &skip, &deeper, &bottom));
    assert_close("decoder params", &an, &fd);

    // Deepest level: raw skip plus bottom.
    let dec = DecoderLevel::new(3, 3, &[], (4, 2), true, &mut rng);
    let skip = rand_tensor(&mut rng, 2, 3, 2, 2);
    let bottom = rand_tensor(&mut rng, 2, 4, 1, 1);
    let (y, cache) = dec.forward(&skip, &[], &bottom);
    let r = rand_tensor(&mut rng, y.n, y.c, y.h, y.w);
    let mut g = zeros_like(&dec);
    let d = dec.backward(&cache, &r, &mut g);
    let f = |dl: &DecoderLevel, s: &Tensor, b: &Tensor| dot(&dl.forward(s, &[], b).0, &r);
    assert_close("deepest skip", &d.skip.data, &fd_input(&skip, &|s| f(&dec, s, &bottom)));
    let (an, fd) = fd_params(&dec, &g, &|dl| f(dl, &skip, &bottom));
    assert_close("deepest params", &an, &fd);
}

fn tiny_config() -> NetConfig {
    NetConfig {
        levels: 2,
        channels: vec![2, 3],
        input_tile: 4,
        in_channels: 1,
        batch_size: 3,
        seed: 9,
        ..NetConfig::default()
    }
}

/// Moves every parameter off its initial value. Zero-initialised biases
/// put ReLU inputs exactly on the kink wherever a feature map is zero,
/// where one-sided derivatives differ and central differences are invalid.
fn jitter<M: Params>(m: &mut M, rng: &mut ChaCha8Rng) {
    let mut v = Vec::new();
    m.params_mut("", &mut v);
    for (_, s) in v {
        s.iter_mut().for_each(|p| *p += rng.random_range(-0.2..0.2));
    }
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let mut net = ResUNetPlus::new(&tiny_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    jitter(&mut net, &mut rng);
    let x = rand_tensor(&mut rng, 3, 1, 4, 4);
    let labels: Vec<u8> = (0..48).map(|_| rng.random_range(0..2)).collect();
    let w = [0.6, 1.7];
    let (_, grads, cache) = net.loss_and_grads(&x, &labels, &w, Mode::Train).unwrap();
    let loss = |n: &ResUNetPlus, x: &Tensor| {
        let (z, _) = n.forward(x, Mode::Train).unwrap();
        weighted_cross_entropy(&z, &labels, &w).0
    };
    let (an, fd) = fd_params(&net, &grads, &|n| loss(n, &x));
    assert_close("network params", &an, &fd);
    let (z, _) = net.forward(&x, Mode::Train).unwrap();
    let (_, dz) = weighted_cross_entropy(&z, &labels, &w);
    let mut g = zeros_like(&net);
    let dx = net.backward(&cache, &dz, &mut g);
    assert_close("network input", &dx.data, &fd_input(&x, &|x| loss(&net, x)));
}

#[test]
fn zero_input_gives_zero_encoder_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let block = EncoderBlock::new(2, 4, 1, &mut rng);
    let (y, _) = block.forward(&Tensor::zeros(2, 2, 8, 8), Mode::Train);
    assert_eq!(y.shape(), [2, 4, 8, 8]);
    assert!(y.data.iter().all(|&v| v == 0.0));
    let dec = DecoderLevel::new(4, 4, &[], (8, 2), true, &mut rng);
    let (y, _) = dec.forward(&Tensor::zeros(1, 4, 4, 4), &[], &Tensor::zeros(1, 8, 2, 2));
    assert!(y.data.iter().all(|&v| v == 0.0));
}

#[test]
fn shapes_follow_the_level_algebra() {
    for levels in 2..=4 {
        let cfg = NetConfig {
            levels,
            channels: (0..levels).map(|i| 2 + i).collect(),
            input_tile: 1 << (levels + 1),
            ..NetConfig::default()
        };
        let net = ResUNetPlus::new(&cfg).unwrap();
        let t = cfg.input_tile;
        let (z, cache) = net.forward(&Tensor::zeros(2, 1, t, t), Mode::Eval).unwrap();
        assert_eq!(z.shape(), [2, 2, t, t]);
        assert!(z.is_finite());
        let _ = cache;
        for (i, e) in net.encoders.iter().enumerate() {
            assert_eq!(e.out_c, cfg.channels[i]);
            assert_eq!(e.stride, if i == 0 { 1 } else { 2 });
        }
        assert_eq!(net.decoders[0].conv_a.in_c, cfg.channels[0] * (levels + 1));
    }
}

#[test]
fn wrong_input_shape_is_rejected() {
    let net = ResUNetPlus::new(&tiny_config()).unwrap();
    assert!(matches!(
        net.forward(&Tensor::zeros(1, 1, 8, 8), Mode::Eval),
        Err(NetError::ShapeMismatch { .. })
    ));
    assert!(net.forward(&Tensor::zeros(1, 3, 4, 4), Mode::Eval).is_err());
}

#[test]
fn config_validation() {
    let ok = NetConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        NetConfig { levels: 1, channels: vec![8], ..ok.clone() },
        NetConfig { channels: vec![8, 8, 16], ..ok.clone() },
        NetConfig { input_tile: 60, ..ok.clone() },
        NetConfig { class_weights: Some(vec![1.0]), ..ok.clone() },
        NetConfig { momentum: 1.0, ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(NetError::InvalidConfig(_))), "{bad:?}");
    }
}

#[test]
fn eval_mode_is_batch_independent() {
    let mut net = ResUNetPlus::new(&tiny_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Give the running statistics non-trivial values first.
    let warm = rand_tensor(&mut rng, 3, 1, 4, 4);
    let (_, cache) = net.forward(&warm, Mode::Train).unwrap();
    net.absorb(&cache);
    let a = rand_tensor(&mut rng, 1, 1, 4, 4);
    let b = rand_tensor(&mut rng, 1, 1, 4, 4);
    let (za, _) = net.forward(&a, Mode::Eval).unwrap();
    let (zab, _) = net.forward(&Tensor::stack(&[&a, &b]), Mode::Eval).unwrap();
    let (zba, _) = net.forward(&Tensor::stack(&[&b, &a]), Mode::Eval).unwrap();
    let (zaa, _) = net.forward(&Tensor::stack(&[&a, &a]), Mode::Eval).unwrap();
    assert_eq!(zab.item(0), za.item(0));
    assert_eq!(zba.item(1), za.item(0));
    assert_eq!(zab.item(1), zba.item(0));
    assert_eq!(zaa.item(0), zaa.item(1));
}

#[test]
fn conv_is_translation_equivariant_away_from_borders() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for stride in [1usize, 2] {
        let conv = Conv2d::conv3(2, 3, stride, &mut rng);
        let w = 16;
        let period: Vec<f64> = (0..2 * 8 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let make = |shift: usize| {
            let mut t = Tensor::zeros(1, 2, 8, w);
            for c in 0..2 {
                for y in 0..8 {
                    for x in 0..w {
                        *t.at_mut(0, c, y, x) = period[(c * 8 + y) * 4 + (x + shift) % 4];
                    }
                }
            }
            t
        };
        let (y0, _) = conv.forward(&make(0));
        let (y1, _) = conv.forward(&make(stride));
        for o in 0..3 {
            for r in 0..y0.h {
                for x in 1..y0.w - 2 {
                    assert!((y1.at(0, o, r, x) - y0.at(0, o, r, x + 1)).abs() < 1e-12);
                }
            }
        }
    }
}

fn tile_sample(tile: usize, split: Split, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = rng.random_range(0..tile / 2);
    let mut image = Raster::zeros(tile, tile, 1);
    let mut mask = SegMask::empty(tile, tile, MaskSource::SyntheticTruth);
    for r in 0..tile {
        for c in 0..tile {
            let on = c >= c0 && c < c0 + tile / 4 && r >= tile / 4;
            *image.at_mut(r, c, 0) = if on { 0.8 } else { 0.2 } + rng.random_range(-0.05..0.05);
            mask.set(r, c, on);
        }
    }
    Sample {
        image,
        mask,
        split,
        augmented_from: None,
    }
}

fn small_dataset(tile: usize) -> LabeledDataset {
    let splits = [Split::Train, Split::Train, Split::Train, Split::Train, Split::Validation, Split::Test];
    LabeledDataset {
        samples: splits
            .iter()
            .enumerate()
            .map(|(i, &s)| tile_sample(tile, s, i as u64))
            .collect(),
        seed: 0,
        tile,
        proportions: SplitProportions::default(),
        augment: AugmentSpec::identity(),
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cfg = NetConfig {
        input_tile: 8,
        learning_rate: 0.0,
        max_epochs: 2,
        seed: 3,
        ..tiny_config()
    };
    let net = ResUNetPlus::new(&cfg).unwrap();
    let out = train(net.clone(), &small_dataset(8)).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    net.params("", &mut a);
    out.net.params("", &mut b);
    assert_eq!(a, b);
    assert_eq!(out.history.len(), 2);
}

#[test]
fn training_history_is_deterministic() {
    let cfg = NetConfig {
        input_tile: 16,
        max_epochs: 2,
        learning_rate: 0.01,
        seed: 4,
        ..tiny_config()
    };
    let ds = small_dataset(16);
    let a = train(ResUNetPlus::new(&cfg).unwrap(), &ds).unwrap();
    let b = train(ResUNetPlus::new(&cfg).unwrap(), &ds).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(checkpoint_to_bytes(&a.net), checkpoint_to_bytes(&b.net));
    assert!(a.history.iter().all(|r| r.val_iou.is_some()));
}

#[test]
fn divergence_is_reported() {
    let cfg = NetConfig {
        input_tile: 8,
        learning_rate: 1e300,
        momentum: 0.0,
        max_epochs: 3,
        ..tiny_config()
    };
    let err = train(ResUNetPlus::new(&cfg).unwrap(), &small_dataset(8)).unwrap_err();
    assert!(matches!(err, NetError::DivergenceDetected { .. }), "{err:?}");
}

#[test]
fn empty_training_split_is_rejected() {
    let mut ds = small_dataset(8);
    ds.samples.retain(|s| s.split != Split::Train);
    let cfg = NetConfig { input_tile: 8, ..tiny_config() };
    assert!(matches!(train(ResUNetPlus::new(&cfg).unwrap(), &ds), Err(NetError::EmptyDataset)));
}

#[test]
fn checkpoint_roundtrip_preserves_f32_values() {
    let cfg = NetConfig { input_tile: 8, ..tiny_config() };
    let mut net = ResUNetPlus::new(&cfg).unwrap();
    let (_, cache) = net.forward(&Tensor::from_vec(1, 1, 8, 8, (0..64).map(|v| v as f64 / 64.0).collect()), Mode::Train).unwrap();
    net.absorb(&cache);
    let bytes = checkpoint_to_bytes(&net);
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
    let back = checkpoint_from_bytes(&bytes).unwrap();
    assert_eq!(back.config, cfg);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    net.params("", &mut a);
    net.buffers("", &mut a);
    back.params("", &mut b);
    back.buffers("", &mut b);
    assert_eq!(a.len(), b.len());
    for ((na, va), (nb, vb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        for (x, y) in va.iter().zip(vb.iter()) {
            assert_eq!(*y, *x as f32 as f64);
        }
    }
    assert_eq!(checkpoint_to_bytes(&back), bytes);
    assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(checkpoint_from_bytes(b"NOPE").is_err());
}

#[test]
fn history_csv_roundtrip() {
    let h = vec![
        EpochRecord { epoch: 1, train_loss: 0.7, val_loss: Some(0.6), val_iou: Some(0.4) },
        EpochRecord { epoch: 2, train_loss: 0.5, val_loss: None, val_iou: None },
    ];
    let mut buf = Vec::new();
    write_history_csv(&h, &mut buf).unwrap();
    assert!(String::from_utf8(buf.clone()).unwrap().starts_with("epoch,train_loss,val_loss,val_iou\n"));
    assert_eq!(read_history_csv(&buf[..]).unwrap(), h);
}

#[test]
fn background_biased_head_segments_nothing() {
    let cfg = NetConfig { input_tile: 8, ..tiny_config() };
    let mut net = ResUNetPlus::new(&cfg).unwrap();
    net.head.weight.fill(0.0);
    net.head.bias = vec![5.0, -5.0];
    let tile = tile_sample(8, Split::Test, 1).image;
    assert_eq!(segment(&net, &tile).unwrap().count(), 0);
}

#[test]
fn single_tile_map_equals_direct_segmentation() {
    let cfg = NetConfig { input_tile: 8, ..tiny_config() };
    let net = ResUNetPlus::new(&cfg).unwrap();
    let tile = tile_sample(8, Split::Test, 2).image;
    let direct = segment(&net, &tile).unwrap();
    assert_eq!(segment_map(&net, &tile, 4).unwrap(), direct);
    let x = Tensor::from_vec(1, 1, 8, 8, raster_to_planes(&tile, 1).unwrap());
    assert_eq!(map_logits(&net, &tile, 4).unwrap(), net.forward(&x, Mode::Eval).unwrap().0);
    // Maps smaller or larger than the tile still produce a full-size mask.
    let small = tile.crop(0, 0, 5, 7);
    assert_eq!(segment_map(&net, &small, 4).unwrap().shape(), (5, 7));
    let mut wide = Raster::zeros(8, 21, 1);
    wide.data.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f64 / 7.0);
    assert_eq!(segment_map(&net, &wide, 4).unwrap().shape(), (8, 21));
}

#[test]
fn single_pair_overfits() {
    let cfg = NetConfig {
        learning_rate: 0.01,
        batch_size: 1,
        seed: 5,
        ..NetConfig::default()
    };
    let mut net = ResUNetPlus::new(&cfg).unwrap();
    let sample = tile_sample(64, Split::Train, 42);
    let (x, labels) = batch_from_samples(&[&sample], 1).unwrap();
    let weights = inverse_frequency_weights([&sample], 2);
    let mut opt = Sgd::new(&net, cfg.learning_rate, cfg.momentum);
    let first = train_step(&mut net, &mut opt, &x, &labels, &weights).unwrap();
    let mut last = first;
    for _ in 1..200 {
        last = train_step(&mut net, &mut opt, &x, &labels, &weights).unwrap();
        if last < 0.1 * first {
            break;
        }
    }
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}

