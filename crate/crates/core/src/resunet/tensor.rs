/// Dense `batch x channels x height x width` array, row-major (NCHW).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor buffer does not match its shape");
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn item(&self, b: usize) -> &[f64] {
        let l = self.item_len();
        &self.data[b * l..(b + 1) * l]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [f64] {
        let l = self.item_len();
        &mut self.data[b * l..(b + 1) * l]
    }

    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((b * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn at_mut(&mut self, b: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[((b * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn relu(&self) -> Tensor {
        let data = self.data.iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_vec(self.n, self.c, self.h, self.w, data)
    }

    /// Gradient through a ReLU whose output was `out`.
    pub fn relu_backward(dy: &Tensor, out: &Tensor) -> Tensor {
        let data = dy
            .data
            .iter()
            .zip(&out.data)
            .map(|(&g, &o)| if o > 0.0 { g } else { 0.0 })
            .collect();
        Tensor::from_vec(dy.n, dy.c, dy.h, dy.w, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks batch items of equal shape.
    pub fn stack(items: &[&Tensor]) -> Tensor {
        let first = items[0];
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        for t in items {
            assert_eq!([t.c, t.h, t.w], [first.c, first.h, first.w]);
            data.extend_from_slice(&t.data);
        }
        let n = items.iter().map(|t| t.n).sum();
        Tensor::from_vec(n, first.c, first.h, first.w, data)
    }
}

/// Channel-wise concatenation of tensors sharing batch and spatial size.
pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    let (n, h, w) = (parts[0].n, parts[0].h, parts[0].w);
    for p in parts {
        assert_eq!((p.n, p.h, p.w), (n, h, w), "concatenated tensors must align");
    }
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut out = Tensor::zeros(n, c, h, w);
    for b in 0..n {
        let mut off = 0;
        let dst = out.item_mut(b);
        for p in parts {
            let src = p.item(b);
            dst[off..off + src.len()].copy_from_slice(src);
            off += src.len();
        }
    }
    out
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels(t: &Tensor, sizes: &[usize]) -> Vec<Tensor> {
    assert_eq!(sizes.iter().sum::<usize>(), t.c);
    let plane = t.plane();
    let mut outs: Vec<Tensor> = sizes.iter().map(|&c| Tensor::zeros(t.n, c, t.h, t.w)).collect();
    for b in 0..t.n {
        let src = t.item(b);
        let mut off = 0;
        for o in outs.iter_mut() {
            let len = o.c * plane;
            o.item_mut(b).copy_from_slice(&src[off..off + len]);
            off += len;
        }
    }
    outs
}
