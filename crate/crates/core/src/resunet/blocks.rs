//! Composite Res-UNet+ blocks: the two-branch residual encoder block and the
//! intra-connected decoder level.

use super::layers::{join, BatchNorm2d, BnCache, Conv2d, ConvCache, ConvTCache, ConvTranspose2d, Mode, Params};
use super::tensor::{concat_channels, split_channels, Tensor};
use rand::Rng;

/// `BN(Conv(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

#[derive(Debug, Clone)]
pub struct ConvBnCache {
    conv: ConvCache,
    bn: BnCache,
}

impl ConvBn {
    pub fn new(conv: Conv2d) -> Self {
        let bn = BatchNorm2d::new(conv.out_c);
        Self { conv, bn }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> (Tensor, ConvBnCache) {
        let (z, conv) = self.conv.forward(x);
        let (y, bn) = self.bn.forward(&z, mode);
        (y, ConvBnCache { conv, bn })
    }

    pub fn backward(&self, cache: &ConvBnCache, dy: &Tensor, grads: &mut ConvBn) -> Tensor {
        let dz = self.bn.backward(&cache.bn, dy, &mut grads.bn);
        self.conv.backward(&cache.conv, &dz, &mut grads.conv)
    }

    pub fn absorb(&mut self, cache: &ConvBnCache) {
        self.bn.absorb(&cache.bn);
    }
}

impl Params for ConvBn {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.conv.params(&join(prefix, "conv"), out);
        self.bn.params(&join(prefix, "bn"), out);
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.conv.params_mut(&join(prefix, "conv"), out);
        self.bn.params_mut(&join(prefix, "bn"), out);
    }
    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.bn.buffers(&join(prefix, "bn"), out);
    }
    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.bn.buffers_mut(&join(prefix, "bn"), out);
    }
}

/// `F1(x) = BN(Conv3(ReLU(BN(Conv3(x)))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct F1 {
    pub a: ConvBn,
    pub b: ConvBn,
}

#[derive(Debug, Clone)]
pub struct F1Cache {
    a: ConvBnCache,
    mid: Tensor,
    b: ConvBnCache,
}

impl F1 {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, stride: usize, rng: &mut R) -> Self {
        Self {
            a: ConvBn::new(Conv2d::conv3(in_c, out_c, stride, rng)),
            b: ConvBn::new(Conv2d::conv3(out_c, out_c, 1, rng)),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> (Tensor, F1Cache) {
        let (z, a) = self.a.forward(x, mode);
        let mid = z.relu();
        let (y, b) = self.b.forward(&mid, mode);
        (y, F1Cache { a, mid, b })
    }

    pub fn backward(&self, cache: &F1Cache, dy: &Tensor, grads: &mut F1) -> Tensor {
        let dmid = self.b.backward(&cache.b, dy, &mut grads.b);
        let dz = Tensor::relu_backward(&dmid, &cache.mid);
        self.a.backward(&cache.a, &dz, &mut grads.a)
    }

    pub fn absorb(&mut self, cache: &F1Cache) {
        self.a.absorb(&cache.a);
        self.b.absorb(&cache.b);
    }
}

impl Params for F1 {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.a.params(&join(prefix, "a"), out);
        self.b.params(&join(prefix, "b"), out);
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.a.params_mut(&join(prefix, "a"), out);
        self.b.params_mut(&join(prefix, "b"), out);
    }
    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.a.buffers(&join(prefix, "a"), out);
        self.b.buffers(&join(prefix, "b"), out);
    }
    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.a.buffers_mut(&join(prefix, "a"), out);
        self.b.buffers_mut(&join(prefix, "b"), out);
    }
}

/// Two-branch residual encoder block.
///
/// ```text
/// H_l = ReLU(id(x) + F1_lower(x))
/// H_u = F2(H_l) + F1_upper(H_l)
/// out = ReLU(H_u)
/// ```
///
/// `id` is a 1x1 convolution plus batch norm whenever the block changes the
/// channel count or downsamples; otherwise it is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
    pub proj: Option<ConvBn>,
    pub lower: F1,
    pub upper: F1,
    pub f2: ConvBn,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    proj: Option<ConvBnCache>,
    lower: F1Cache,
    hl: Tensor,
    f2: ConvBnCache,
    upper: F1Cache,
    out: Tensor,
}

impl EncoderBlock {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, stride: usize, rng: &mut R) -> Self {
        let proj = (in_c != out_c || stride != 1).then(|| ConvBn::new(Conv2d::conv1(in_c, out_c, stride, rng)));
        Self {
            in_c,
            out_c,
            stride,
            proj,
            lower: F1::new(in_c, out_c, stride, rng),
            upper: F1::new(out_c, out_c, 1, rng),
            f2: ConvBn::new(Conv2d::conv3(out_c, out_c, 1, rng)),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> (Tensor, EncoderCache) {
        let (id, proj) = match &self.proj {
            Some(p) => {
                let (y, c) = p.forward(x, mode);
                (y, Some(c))
            }
            None => (x.clone(), None),
        };
        let (f1l, lower) = self.lower.forward(x, mode);
        let hl = id.add(&f1l).relu();
        let (f2y, f2) = self.f2.forward(&hl, mode);
        let (f1u, upper) = self.upper.forward(&hl, mode);
        let out = f2y.add(&f1u).relu();
        (
            out.clone(),
            EncoderCache {
                proj,
                lower,
                hl,
                f2,
                upper,
                out,
            },
        )
    }

    pub fn backward(&self, cache: &EncoderCache, dy: &Tensor, grads: &mut EncoderBlock) -> Tensor {
        let dhu = Tensor::relu_backward(dy, &cache.out);
        let mut dhl = self.f2.backward(&cache.f2, &dhu, &mut grads.f2);
        dhl.add_assign(&self.upper.backward(&cache.upper, &dhu, &mut grads.upper));
        let dpre = Tensor::relu_backward(&dhl, &cache.hl);
        let mut dx = self.lower.backward(&cache.lower, &dpre, &mut grads.lower);
        match (&self.proj, &cache.proj, grads.proj.as_mut()) {
            (Some(p), Some(c), Some(g)) => dx.add_assign(&p.backward(c, &dpre, g)),
            _ => dx.add_assign(&dpre),
        }
        dx
    }

    pub fn absorb(&mut self, cache: &EncoderCache) {
        if let (Some(p), Some(c)) = (self.proj.as_mut(), cache.proj.as_ref()) {
            p.absorb(c);
        }
        self.lower.absorb(&cache.lower);
        self.f2.absorb(&cache.f2);
        self.upper.absorb(&cache.upper);
    }
}

impl Params for EncoderBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        if let Some(p) = &self.proj {
            p.params(&join(prefix, "proj"), out);
        }
        self.lower.params(&join(prefix, "lower"), out);
        self.upper.params(&join(prefix, "upper"), out);
        self.f2.params(&join(prefix, "f2"), out);
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        if let Some(p) = &mut self.proj {
            p.params_mut(&join(prefix, "proj"), out);
        }
        self.lower.params_mut(&join(prefix, "lower"), out);
        self.upper.params_mut(&join(prefix, "upper"), out);
        self.f2.params_mut(&join(prefix, "f2"), out);
    }
    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        if let Some(p) = &self.proj {
            p.buffers(&join(prefix, "proj"), out);
        }
        self.lower.buffers(&join(prefix, "lower"), out);
        self.upper.buffers(&join(prefix, "upper"), out);
        self.f2.buffers(&join(prefix, "f2"), out);
    }
    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        if let Some(p) = &mut self.proj {
            p.buffers_mut(&join(prefix, "proj"), out);
        }
        self.lower.buffers_mut(&join(prefix, "lower"), out);
        self.upper.buffers_mut(&join(prefix, "upper"), out);
        self.f2.buffers_mut(&join(prefix, "f2"), out);
    }
}

/// One decoder level.
///
/// The deepest level (`skip_conv == None`) computes
/// `A²([L_en, A_T(bottom)])`. Shallower levels compute
/// `A²([A(L_en), A_T(L_de^j) for each deeper j, A_T(bottom)])`, where each
/// `A_T` is a ReLU'd transposed convolution that upsamples to this level's
/// resolution and width.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLevel {
    pub channels: usize,
    pub skip_conv: Option<Conv2d>,
    /// One per deeper decoder level, shallowest first.
    pub deeper_up: Vec<ConvTranspose2d>,
    pub bottom_up: ConvTranspose2d,
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    skip: Option<(ConvCache, Tensor)>,
    deeper: Vec<(ConvTCache, Tensor)>,
    bottom: (ConvTCache, Tensor),
    sizes: Vec<usize>,
    conv_a: ConvCache,
    mid: Tensor,
    conv_b: ConvCache,
    out: Tensor,
}

/// Input gradients of a decoder level.
#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub skip: Tensor,
    pub deeper: Vec<Tensor>,
    pub bottom: Tensor,
}

impl DecoderLevel {
    /// `deeper` lists `(channels, upsampling factor)` for each deeper decoder
    /// level, shallowest first; `bottom` is the same pair for the bridge.
    /// `deepest` selects the form without a skip convolution.
    pub fn new<R: Rng>(
        channels: usize,
        skip_channels: usize,
        deeper: &[(usize, usize)],
        bottom: (usize, usize),
        deepest: bool,
        rng: &mut R,
    ) -> Self {
        let skip_conv = (!deepest).then(|| Conv2d::conv3(skip_channels, channels, 1, rng));
        let skip_out = if deepest { skip_channels } else { channels };
        let deeper_up: Vec<ConvTranspose2d> = deeper
            .iter()
            .map(|&(c, f)| ConvTranspose2d::new(c, channels, f, rng))
            .collect();
        let bottom_up = ConvTranspose2d::new(bottom.0, channels, bottom.1, rng);
        let cat = skip_out + channels * (deeper_up.len() + 1);
        Self {
            channels,
            skip_conv,
            deeper_up,
            bottom_up,
            conv_a: Conv2d::conv3(cat, channels, 1, rng),
            conv_b: Conv2d::conv3(channels, channels, 1, rng),
        }
    }

    pub fn forward(&self, skip: &Tensor, deeper: &[&Tensor], bottom: &Tensor) -> (Tensor, DecoderCache) {
        assert_eq!(deeper.len(), self.deeper_up.len(), "one input per deeper decoder level");
        let skip_branch = self.skip_conv.as_ref().map(|c| {
            let (y, cc) = c.forward(skip);
            (cc, y.relu())
        });
        let deeper_branches: Vec<(ConvTCache, Tensor)> = self
            .deeper_up
            .iter()
            .zip(deeper)
            .map(|(up, x)| {
                let (y, c) = up.forward(x);
                (c, y.relu())
            })
            .collect();
        let (by, bc) = self.bottom_up.forward(bottom);
        let bottom_branch = (bc, by.relu());

        let mut parts: Vec<&Tensor> = Vec::with_capacity(deeper.len() + 2);
        parts.push(skip_branch.as_ref().map(|(_, t)| t).unwrap_or(skip));
        parts.extend(deeper_branches.iter().map(|(_, t)| t));
        parts.push(&bottom_branch.1);
        let sizes: Vec<usize> = parts.iter().map(|t| t.c).collect();
        let cat = concat_channels(&parts);

        let (za, conv_a) = self.conv_a.forward(&cat);
        let mid = za.relu();
        let (zb, conv_b) = self.conv_b.forward(&mid);
        let out = zb.relu();
        (
            out.clone(),
            DecoderCache {
                skip: skip_branch,
                deeper: deeper_branches,
                bottom: bottom_branch,
                sizes,
                conv_a,
                mid,
                conv_b,
                out,
            },
        )
    }

    pub fn backward(&self, cache: &DecoderCache, dy: &Tensor, grads: &mut DecoderLevel) -> DecoderGrads {
        let dzb = Tensor::relu_backward(dy, &cache.out);
        let dmid = self.conv_b.backward(&cache.conv_b, &dzb, &mut grads.conv_b);
        let dza = Tensor::relu_backward(&dmid, &cache.mid);
        let dcat = self.conv_a.backward(&cache.conv_a, &dza, &mut grads.conv_a);
        let mut parts = split_channels(&dcat, &cache.sizes).into_iter();

        let dskip_branch = parts.next().expect("skip slot");
        let skip = match (&self.skip_conv, &cache.skip, grads.skip_conv.as_mut()) {
            (Some(c), Some((cc, y)), Some(g)) => c.backward(cc, &Tensor::relu_backward(&dskip_branch, y), g),
            _ => dskip_branch,
        };
        let deeper = self
            .deeper_up
            .iter()
            .zip(&cache.deeper)
            .zip(grads.deeper_up.iter_mut())
            .map(|((up, (c, y)), g)| {
                let d = parts.next().expect("deeper slot");
                up.backward(c, &Tensor::relu_backward(&d, y), g)
            })
            .collect();
        let db = parts.next().expect("bottom slot");
        let bottom = self.bottom_up.backward(
            &cache.bottom.0,
            &Tensor::relu_backward(&db, &cache.bottom.1),
            &mut grads.bottom_up,
        );
        DecoderGrads { skip, deeper, bottom }
    }
}

impl Params for DecoderLevel {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        if let Some(c) = &self.skip_conv {
            c.params(&join(prefix, "skip"), out);
        }
        for (j, up) in self.deeper_up.iter().enumerate() {
            up.params(&join(prefix, &format!("up{j}")), out);
        }
        self.bottom_up.params(&join(prefix, "up_bottom"), out);
        self.conv_a.params(&join(prefix, "conv_a"), out);
        self.conv_b.params(&join(prefix, "conv_b"), out);
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        if let Some(c) = &mut self.skip_conv {
            c.params_mut(&join(prefix, "skip"), out);
        }
        for (j, up) in self.deeper_up.iter_mut().enumerate() {
            up.params_mut(&join(prefix, &format!("up{j}")), out);
        }
        self.bottom_up.params_mut(&join(prefix, "up_bottom"), out);
        self.conv_a.params_mut(&join(prefix, "conv_a"), out);
        self.conv_b.params_mut(&join(prefix, "conv_b"), out);
    }
}
