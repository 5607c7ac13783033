use super::layers::Mode;
use super::net::ResUNetPlus;
use super::tensor::Tensor;
use super::NetError;
use crate::autolabel::{MaskSource, Sample, SegMask};
use crate::stmap::{tile_origins, Raster};

/// Channel-planar network input from an interleaved raster. RGB rasters
/// are converted to luma when the network expects one channel.
pub fn raster_to_planes(r: &Raster, in_channels: usize) -> Result<Vec<f64>, NetError> {
    let plane = r.rows * r.cols;
    match (r.channels, in_channels) {
        (c, k) if c == k => {
            let mut out = vec![0.0; plane * c];
            for p in 0..plane {
                for ch in 0..c {
                    out[ch * plane + p] = r.data[p * c + ch];
                }
            }
            Ok(out)
        }
        (3, 1) => Ok((0..plane)
            .map(|p| {
                let px = &r.data[p * 3..p * 3 + 3];
                (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]).clamp(0.0, 1.0)
            })
            .collect()),
        (1, 3) => Ok((0..3).flat_map(|_| r.data.iter().copied()).collect()),
        (c, k) => Err(NetError::ShapeMismatch {
            expected: vec![k],
            got: vec![c],
        }),
    }
}

/// Stacks samples into an input batch plus flattened per-pixel labels.
pub fn batch_from_samples(samples: &[&Sample], in_channels: usize) -> Result<(Tensor, Vec<u8>), NetError> {
    let first = &samples[0].image;
    let (h, w) = (first.rows, first.cols);
    let mut data = Vec::with_capacity(samples.len() * in_channels * h * w);
    let mut labels = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.image.rows, s.image.cols) != (h, w) || s.mask.shape() != (h, w) {
            return Err(NetError::ShapeMismatch {
                expected: vec![h, w],
                got: vec![s.image.rows, s.image.cols],
            });
        }
        data.extend(raster_to_planes(&s.image, in_channels)?);
        labels.extend_from_slice(s.mask.labels());
    }
    Ok((Tensor::from_vec(samples.len(), in_channels, h, w, data), labels))
}

/// Per-pixel argmax of item `b` of a logit tensor; ties go to background.
pub fn argmax_mask(logits: &Tensor, b: usize, source: MaskSource) -> SegMask {
    let plane = logits.plane();
    let z = logits.item(b);
    let labels = (0..plane).map(|p| u8::from(z[plane + p] > z[p])).collect();
    SegMask::new(logits.h, logits.w, labels, source).expect("argmax labels are binary")
}

/// Segments one tile-sized raster.
pub fn segment(net: &ResUNetPlus, tile: &Raster) -> Result<SegMask, NetError> {
    let t = net.config.input_tile;
    if (tile.rows, tile.cols) != (t, t) {
        return Err(NetError::ShapeMismatch {
            expected: vec![t, t],
            got: vec![tile.rows, tile.cols],
        });
    }
    let x = Tensor::from_vec(1, net.config.in_channels, t, t, raster_to_planes(tile, net.config.in_channels)?);
    let (logits, _) = net.forward(&x, Mode::Eval)?;
    Ok(argmax_mask(&logits, 0, MaskSource::Predicted))
}

/// Edge-replicating pad up to at least `rows x cols`.
fn pad_edge(r: &Raster, rows: usize, cols: usize) -> Raster {
    let (pr, pc) = (rows.max(r.rows), cols.max(r.cols));
    let mut out = Raster::zeros(pr, pc, r.channels);
    for i in 0..pr {
        for j in 0..pc {
            for ch in 0..r.channels {
                *out.at_mut(i, j, ch) = r.at(i.min(r.rows - 1), j.min(r.cols - 1), ch);
            }
        }
    }
    out
}

/// Logits for a full map: tiles on a `stride` grid (last tile snapped to
/// the edge), logits averaged where tiles overlap. Maps smaller than a tile
/// are edge-padded and the result cropped back.
pub fn map_logits(net: &ResUNetPlus, map: &Raster, stride: usize) -> Result<Tensor, NetError> {
    let t = net.config.input_tile;
    let in_c = net.config.in_channels;
    if map.rows == 0 || map.cols == 0 {
        return Err(NetError::ShapeMismatch {
            expected: vec![t, t],
            got: vec![map.rows, map.cols],
        });
    }
    let padded = pad_edge(map, t, t);
    let (rows, cols) = (padded.rows, padded.cols);
    let origins: Vec<(usize, usize)> = tile_origins(rows, t, stride)
        .into_iter()
        .flat_map(|r| tile_origins(cols, t, stride).into_iter().map(move |c| (r, c)))
        .collect();
    let classes = net.config.classes;
    let mut sum = vec![0.0; classes * rows * cols];
    let mut count = vec![0u32; rows * cols];
    for chunk in origins.chunks(net.config.batch_size.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * in_c * t * t);
        for &(r, c) in chunk {
            data.extend(raster_to_planes(&padded.crop(r, c, t, t), in_c)?);
        }
        let x = Tensor::from_vec(chunk.len(), in_c, t, t, data);
        let (logits, _) = net.forward(&x, Mode::Eval)?;
        for (b, &(r0, c0)) in chunk.iter().enumerate() {
            let z = logits.item(b);
            for k in 0..classes {
                for i in 0..t {
                    for j in 0..t {
                        sum[(k * rows + r0 + i) * cols + c0 + j] += z[(k * t + i) * t + j];
                    }
                }
            }
            for i in 0..t {
                for j in 0..t {
                    count[(r0 + i) * cols + c0 + j] += 1;
                }
            }
        }
    }
    let mut out = Tensor::zeros(1, classes, map.rows, map.cols);
    for k in 0..classes {
        for i in 0..map.rows {
            for j in 0..map.cols {
                *out.at_mut(0, k, i, j) = sum[(k * rows + i) * cols + j] / count[i * cols + j] as f64;
            }
        }
    }
    Ok(out)
}

/// Segments a full map via [`map_logits`].
pub fn segment_map(net: &ResUNetPlus, map: &Raster, stride: usize) -> Result<SegMask, NetError> {
    let logits = map_logits(net, map, stride)?;
    Ok(argmax_mask(&logits, 0, MaskSource::Predicted))
}
