use super::blocks::{DecoderCache, DecoderLevel, EncoderBlock, EncoderCache};
use super::layers::{join, weighted_cross_entropy, Conv2d, ConvCache, Mode, Params};
use super::tensor::Tensor;
use super::NetError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Network shape and training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Encoder depth, excluding the bottom bridge block.
    pub levels: usize,
    /// Channel width per encoder level, shallowest first.
    pub channels: Vec<usize>,
    pub input_tile: usize,
    /// 1 for gray maps, 3 for RGB.
    pub in_channels: usize,
    pub classes: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Per-class loss weights; `None` means inverse class frequency over
    /// the training split.
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            channels: vec![8, 16, 32],
            input_tile: 64,
            in_channels: 1,
            classes: 2,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 3,
            max_epochs: 10,
            class_weights: None,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |msg: String| Err(NetError::InvalidConfig(msg));
        if self.levels < 2 {
            return bad(format!("levels must be at least 2, got {}", self.levels));
        }
        if self.channels.len() != self.levels {
            return bad(format!(
                "{} channel counts given for {} levels",
                self.channels.len(),
                self.levels
            ));
        }
        if self.channels[0] == 0 || self.channels.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("channels must be positive and strictly increasing: {:?}", self.channels));
        }
        let unit = 1usize << self.levels;
        if self.input_tile == 0 || !self.input_tile.is_multiple_of(unit) {
            return bad(format!("tile {} is not divisible by 2^{}", self.input_tile, self.levels));
        }
        if self.in_channels == 0 {
            return bad("in_channels must be positive".into());
        }
        if self.classes != 2 {
            return bad(format!("only 2 classes are supported, got {}", self.classes));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.classes || w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return bad(format!("class weights {w:?} must be {} positive numbers", self.classes));
            }
        }
        Ok(())
    }
}

/// Res-UNet+ parameters: encoder blocks, bottom bridge, intra-connected
/// decoder and a 1x1 classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct ResUNetPlus {
    pub config: NetConfig,
    pub encoders: Vec<EncoderBlock>,
    pub bottom: EncoderBlock,
    /// Indexed like `encoders`: `decoders[0]` is the shallowest level.
    pub decoders: Vec<DecoderLevel>,
    pub head: Conv2d,
}

/// Trainable parameters and running statistics, organised by layer path.
pub type NetParams = ResUNetPlus;

#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    encoders: Vec<EncoderCache>,
    bottom: EncoderCache,
    enc_out: Vec<Tensor>,
    bottom_out: Tensor,
    decoders: Vec<DecoderCache>,
    dec_out: Vec<Tensor>,
    head: ConvCache,
}

impl ResUNetPlus {
    /// Seeded initialisation (He-normal kernels, zero biases, unit BN scale).
    pub fn new(config: &NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = config.levels;
        let ch = &config.channels;
        let mut encoders = Vec::with_capacity(n);
        for i in 0..n {
            let (in_c, stride) = if i == 0 { (config.in_channels, 1) } else { (ch[i - 1], 2) };
            encoders.push(EncoderBlock::new(in_c, ch[i], stride, &mut rng));
        }
        let bottom_c = 2 * ch[n - 1];
        let bottom = EncoderBlock::new(ch[n - 1], bottom_c, 2, &mut rng);
        let mut decoders = Vec::with_capacity(n);
        for i in 0..n {
            let deeper: Vec<(usize, usize)> = (i + 1..n).map(|j| (ch[j], 1 << (j - i))).collect();
            decoders.push(DecoderLevel::new(
                ch[i],
                ch[i],
                &deeper,
                (bottom_c, 1 << (n - i)),
                i == n - 1,
                &mut rng,
            ));
        }
        let head = Conv2d::conv1(ch[0], config.classes, 1, &mut rng);
        Ok(Self {
            config: config.clone(),
            encoders,
            bottom,
            decoders,
            head,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NetError> {
        let t = self.config.input_tile;
        let expected = [x.n, self.config.in_channels, t, t];
        if x.n == 0 || x.shape() != expected || !x.is_finite() {
            return Err(NetError::ShapeMismatch {
                expected: expected.to_vec(),
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Class logits of shape `(batch, classes, tile, tile)`.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, ForwardCache), NetError> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x, mode))
    }

    pub(crate) fn forward_unchecked(&self, x: &Tensor, mode: Mode) -> (Tensor, ForwardCache) {
        let n = self.encoders.len();
        let mut enc_out = Vec::with_capacity(n);
        let mut enc_caches = Vec::with_capacity(n);
        for (i, e) in self.encoders.iter().enumerate() {
            let input = if i == 0 { x } else { &enc_out[i - 1] };
            let (y, c) = e.forward(input, mode);
            enc_out.push(y);
            enc_caches.push(c);
        }
        let (bottom_out, bottom_cache) = self.bottom.forward(&enc_out[n - 1], mode);

        let mut dec_out: Vec<Option<Tensor>> = vec![None; n];
        let mut dec_caches: Vec<Option<DecoderCache>> = (0..n).map(|_| None).collect();
        for i in (0..n).rev() {
            let deeper: Vec<&Tensor> = (i + 1..n).map(|j| dec_out[j].as_ref().expect("deeper level done")).collect();
            let (y, c) = self.decoders[i].forward(&enc_out[i], &deeper, &bottom_out);
            dec_out[i] = Some(y);
            dec_caches[i] = Some(c);
        }
        let dec_out: Vec<Tensor> = dec_out.into_iter().map(|t| t.expect("computed")).collect();
        let (logits, head) = self.head.forward(&dec_out[0]);
        (
            logits,
            ForwardCache {
                mode,
                encoders: enc_caches,
                bottom: bottom_cache,
                enc_out,
                bottom_out,
                decoders: dec_caches.into_iter().map(|c| c.expect("computed")).collect(),
                dec_out,
                head,
            },
        )
    }

    /// Back-propagates `dlogits`, accumulating parameter gradients into
    /// `grads` (a network of identical shape); returns the input gradient.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor, grads: &mut ResUNetPlus) -> Tensor {
        let n = self.encoders.len();
        let mut d_dec: Vec<Tensor> = cache
            .dec_out
            .iter()
            .map(|t| Tensor::zeros(t.n, t.c, t.h, t.w))
            .collect();
        let mut d_enc: Vec<Tensor> = cache
            .enc_out
            .iter()
            .map(|t| Tensor::zeros(t.n, t.c, t.h, t.w))
            .collect();
        let b = &cache.bottom_out;
        let mut d_bottom = Tensor::zeros(b.n, b.c, b.h, b.w);

        d_dec[0] = self.head.backward(&cache.head, dlogits, &mut grads.head);
        // Level i only feeds shallower levels, so visiting shallowest first
        // completes each level's gradient before it is propagated.
        for i in 0..n {
            let g = self.decoders[i].backward(&cache.decoders[i], &d_dec[i], &mut grads.decoders[i]);
            d_enc[i].add_assign(&g.skip);
            for (k, d) in g.deeper.iter().enumerate() {
                d_dec[i + 1 + k].add_assign(d);
            }
            d_bottom.add_assign(&g.bottom);
        }
        let d_last = self.bottom.backward(&cache.bottom, &d_bottom, &mut grads.bottom);
        d_enc[n - 1].add_assign(&d_last);
        for i in (0..n).rev() {
            let dx = self.encoders[i].backward(&cache.encoders[i], &d_enc[i], &mut grads.encoders[i]);
            if i == 0 {
                return dx;
            }
            d_enc[i - 1].add_assign(&dx);
        }
        unreachable!("levels >= 1")
    }

    /// Folds the batch statistics of a training forward pass into every
    /// batch-norm layer's running averages.
    pub fn absorb(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for (e, c) in self.encoders.iter_mut().zip(&cache.encoders) {
            e.absorb(c);
        }
        self.bottom.absorb(&cache.bottom);
    }

    /// Weighted cross-entropy loss and parameter gradients for one batch.
    /// Running statistics are not touched.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        labels: &[u8],
        weights: &[f64],
        mode: Mode,
    ) -> Result<(f64, ResUNetPlus, ForwardCache), NetError> {
        let (logits, cache) = self.forward(x, mode)?;
        let (loss, dlogits) = weighted_cross_entropy(&logits, labels, weights);
        let mut grads = super::layers::zeros_like(self);
        self.backward(&cache, &dlogits, &mut grads);
        Ok((loss, grads, cache))
    }

    pub fn parameter_count(&self) -> usize {
        let mut v = Vec::new();
        self.params("", &mut v);
        v.iter().map(|(_, s)| s.len()).sum()
    }
}

impl Params for ResUNetPlus {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (i, e) in self.encoders.iter().enumerate() {
            e.params(&join(prefix, &format!("enc{}", i + 1)), out);
        }
        self.bottom.params(&join(prefix, "bottom"), out);
        for (i, d) in self.decoders.iter().enumerate() {
            d.params(&join(prefix, &format!("dec{}", i + 1)), out);
        }
        self.head.params(&join(prefix, "head"), out);
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (i, e) in self.encoders.iter_mut().enumerate() {
            e.params_mut(&join(prefix, &format!("enc{}", i + 1)), out);
        }
        self.bottom.params_mut(&join(prefix, "bottom"), out);
        for (i, d) in self.decoders.iter_mut().enumerate() {
            d.params_mut(&join(prefix, &format!("dec{}", i + 1)), out);
        }
        self.head.params_mut(&join(prefix, "head"), out);
    }
    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (i, e) in self.encoders.iter().enumerate() {
            e.buffers(&join(prefix, &format!("enc{}", i + 1)), out);
        }
        self.bottom.buffers(&join(prefix, "bottom"), out);
    }
    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (i, e) in self.encoders.iter_mut().enumerate() {
            e.buffers_mut(&join(prefix, &format!("enc{}", i + 1)), out);
        }
        self.bottom.buffers_mut(&join(prefix, "bottom"), out);
    }
}
