//! Building blocks of the segmenter. All layers work on token-major maps.

use super::tensor::{gemm, FeatureMap, Init, Mat, Param};

pub const LN_EPS: f64 = 1e-5;
/// Rows of queries scored per attention chunk; bounds the score buffer.
const ATTN_CHUNK: usize = 4096;

pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[in, out]`, row-major.
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(input: usize, output: usize) -> Self {
        Linear {
            weight: Param::new(vec![input, output], Init::Uniform { fan_in: input }),
            bias: Param::new(vec![output], Init::Uniform { fan_in: input }),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        assert_eq!(x.c, self.input(), "linear input width");
        let n = x.tokens();
        let out_c = self.output();
        let mut out = FeatureMap::zeros(x.h, x.w, out_c);
        for row in out.data.chunks_exact_mut(out_c) {
            row.copy_from_slice(&self.bias.data);
        }
        gemm(
            n,
            x.c,
            out_c,
            &x.data,
            Mat::rows(0, x.c),
            &self.weight.data,
            Mat::rows(0, out_c),
            1.0,
            &mut out.data,
            Mat::rows(0, out_c),
        );
        out
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
}

impl LayerNorm {
    pub fn new(c: usize) -> Self {
        LayerNorm {
            gamma: Param::new(vec![c], Init::Ones),
            beta: Param::new(vec![c], Init::Zeros),
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let mut out = x.clone();
        let c = x.c;
        for tok in out.data.chunks_exact_mut(c) {
            let mean = tok.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
            let var = tok.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for (i, v) in tok.iter_mut().enumerate() {
                *v = ((*v as f64 - mean) * inv) as f32 * self.gamma.data[i] + self.beta.data[i];
            }
        }
        out
    }
}

impl Module for LayerNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Inference-mode batch norm with running statistics folded into a
/// per-channel scale and shift. Fresh layers are the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub scale: Param,
    pub shift: Param,
}

impl BatchNorm {
    pub fn new(c: usize) -> Self {
        BatchNorm {
            scale: Param::new(vec![c], Init::Ones),
            shift: Param::new(vec![c], Init::Zeros),
        }
    }

    pub fn forward_inplace(&self, x: &mut FeatureMap) {
        for tok in x.data.chunks_exact_mut(x.c) {
            for (i, v) in tok.iter_mut().enumerate() {
                *v = *v * self.scale.data[i] + self.shift.data[i];
            }
        }
    }
}

impl Module for BatchNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.scale, &self.shift]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.scale, &mut self.shift]
    }
}

/// Output length of a 3x3, pad-1 convolution with `stride`.
pub fn conv_out(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Zero-padded copy with a one-token border.
fn pad1(x: &FeatureMap) -> FeatureMap {
    let (hp, wp) = (x.h + 2, x.w + 2);
    let mut p = FeatureMap::zeros(hp, wp, x.c);
    for r in 0..x.h {
        let src = &x.data[r * x.w * x.c..(r + 1) * x.w * x.c];
        let start = ((r + 1) * wp + 1) * x.c;
        p.data[start..start + src.len()].copy_from_slice(src);
    }
    p
}

/// Full 3x3 convolution, zero padding 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3x3 {
    /// `[9 * in, out]`; row `(dy * 3 + dx) * in + ci`.
    pub weight: Param,
    pub bias: Param,
}

impl Conv3x3 {
    pub fn new(input: usize, output: usize) -> Self {
        let fan_in = 9 * input;
        Conv3x3 {
            weight: Param::new(vec![fan_in, output], Init::Uniform { fan_in }),
            bias: Param::new(vec![output], Init::Uniform { fan_in }),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.shape[0] / 9
    }

    pub fn output(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &FeatureMap, stride: usize) -> FeatureMap {
        let cin = self.input();
        let cout = self.output();
        assert_eq!(x.c, cin, "conv input width");
        let (ho, wo) = (conv_out(x.h, stride), conv_out(x.w, stride));
        let mut out = FeatureMap::zeros(ho, wo, cout);
        for row in out.data.chunks_exact_mut(cout) {
            row.copy_from_slice(&self.bias.data);
        }
        let p = pad1(x);
        for ro in 0..ho {
            for dy in 0..3 {
                for dx in 0..3 {
                    let src = ((stride * ro + dy) * p.w + dx) * cin;
                    gemm(
                        wo,
                        cin,
                        cout,
                        &p.data,
                        Mat::rows(src, stride * cin),
                        &self.weight.data,
                        Mat::rows((dy * 3 + dx) * cin * cout, cout),
                        1.0,
                        &mut out.data,
                        Mat::rows(ro * wo * cout, cout),
                    );
                }
            }
        }
        out
    }
}

impl Module for Conv3x3 {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Depthwise 3x3 convolution, stride 1, zero padding 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DwConv3x3 {
    /// `[9, channels]`; row `dy * 3 + dx`.
    pub weight: Param,
    pub bias: Param,
}

impl DwConv3x3 {
    pub fn new(c: usize) -> Self {
        DwConv3x3 {
            weight: Param::new(vec![9, c], Init::Uniform { fan_in: 9 }),
            bias: Param::new(vec![c], Init::Uniform { fan_in: 9 }),
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let c = x.c;
        assert_eq!(c, self.weight.shape[1], "depthwise conv width");
        let p = pad1(x);
        let mut out = FeatureMap::zeros(x.h, x.w, c);
        for r in 0..x.h {
            for col in 0..x.w {
                let o = &mut out.data[(r * x.w + col) * c..(r * x.w + col + 1) * c];
                o.copy_from_slice(&self.bias.data);
                for dy in 0..3 {
                    for dx in 0..3 {
                        let s = ((r + dy) * p.w + col + dx) * c;
                        let src = &p.data[s..s + c];
                        let wk = &self.weight.data[(dy * 3 + dx) * c..(dy * 3 + dx + 1) * c];
                        for ((o, &v), &w) in o.iter_mut().zip(src).zip(wk) {
                            *o += v * w;
                        }
                    }
                }
            }
        }
        out
    }
}

impl Module for DwConv3x3 {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Non-overlapping `r x r` mean pooling; edge windows average the cells
/// they contain.
pub fn mean_pool(x: &FeatureMap, r: usize) -> FeatureMap {
    let (ho, wo) = (x.h.div_ceil(r), x.w.div_ceil(r));
    let mut out = FeatureMap::zeros(ho, wo, x.c);
    let mut acc = vec![0.0f64; x.c];
    for ro in 0..ho {
        for co in 0..wo {
            acc.fill(0.0);
            let rows = ro * r..((ro + 1) * r).min(x.h);
            let cols = co * r..((co + 1) * r).min(x.w);
            let count = (rows.len() * cols.len()) as f64;
            for i in rows {
                for j in cols.clone() {
                    for (a, &v) in acc.iter_mut().zip(x.token(i * x.w + j)) {
                        *a += v as f64;
                    }
                }
            }
            let o = (ro * wo + co) * x.c;
            for (k, a) in acc.iter().enumerate() {
                out.data[o + k] = (a / count) as f32;
            }
        }
    }
    out
}

/// Key/value sequence reduction: mean pool, linear, layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialReduction {
    pub ratio: usize,
    pub proj: Linear,
    pub norm: LayerNorm,
}

impl SpatialReduction {
    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        self.norm.forward(&self.proj.forward(&mean_pool(x, self.ratio)))
    }
}

/// Tracks the largest deviation of a softmax row sum from one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SoftmaxMonitor {
    pub rows: u64,
    pub max_deviation: f64,
}

impl SoftmaxMonitor {
    fn observe(&mut self, row: &[f32]) {
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        self.rows += 1;
        self.max_deviation = self.max_deviation.max((s - 1.0).abs());
    }
}

pub fn softmax_inplace(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Multi-head attention with optional key/value sequence reduction.
///
/// Each head has width `floor(dim / heads)`; queries, keys and values are
/// projected to `heads * head_dim` and the output projection maps back to
/// `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub heads: usize,
    pub head_dim: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub reduction: Option<SpatialReduction>,
}

impl Attention {
    pub fn new(dim: usize, heads: usize, ratio: usize) -> Self {
        let head_dim = dim / heads;
        let inner = heads * head_dim;
        Attention {
            heads,
            head_dim,
            q: Linear::new(dim, inner),
            k: Linear::new(dim, inner),
            v: Linear::new(dim, inner),
            o: Linear::new(inner, dim),
            reduction: (ratio > 1).then(|| SpatialReduction {
                ratio,
                proj: Linear::new(dim, dim),
                norm: LayerNorm::new(dim),
            }),
        }
    }

    pub fn forward(&self, x: &FeatureMap, monitor: &mut SoftmaxMonitor) -> FeatureMap {
        let q = self.q.forward(x);
        let kv_src = match &self.reduction {
            Some(sr) => sr.forward(x),
            None => x.clone(),
        };
        let k = self.k.forward(&kv_src);
        let v = self.v.forward(&kv_src);
        let (n, m) = (x.tokens(), kv_src.tokens());
        let inner = self.heads * self.head_dim;
        let d = self.head_dim;
        let scale = 1.0 / (d as f32).sqrt();
        let mut ctx = FeatureMap::zeros(x.h, x.w, inner);
        let mut scores = vec![0.0f32; ATTN_CHUNK.min(n) * m];
        for h in 0..self.heads {
            for start in (0..n).step_by(ATTN_CHUNK) {
                let rows = ATTN_CHUNK.min(n - start);
                let s = &mut scores[..rows * m];
                gemm(
                    rows,
                    d,
                    m,
                    &q.data,
                    Mat::rows(start * inner + h * d, inner),
                    &k.data,
                    Mat::transposed(h * d, inner),
                    0.0,
                    s,
                    Mat::rows(0, m),
                );
                for row in s.chunks_exact_mut(m) {
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                    softmax_inplace(row);
                    monitor.observe(row);
                }
                gemm(
                    rows,
                    m,
                    d,
                    s,
                    Mat::rows(0, m),
                    &v.data,
                    Mat::rows(h * d, inner),
                    0.0,
                    &mut ctx.data,
                    Mat::rows(start * inner + h * d, inner),
                );
            }
        }
        self.o.forward(&ctx)
    }
}

impl Module for Attention {
    fn params(&self) -> Vec<&Param> {
        let mut p = Vec::new();
        for l in [&self.q, &self.k, &self.v, &self.o] {
            p.extend(l.params());
        }
        if let Some(sr) = &self.reduction {
            p.extend(sr.proj.params());
            p.extend(sr.norm.params());
        }
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for l in [&mut self.q, &mut self.k, &mut self.v, &mut self.o] {
            p.extend(l.params_mut());
        }
        if let Some(sr) = &mut self.reduction {
            p.extend(sr.proj.params_mut());
            p.extend(sr.norm.params_mut());
        }
        p
    }
}

/// Linear, depthwise 3x3 convolution, GELU, linear. The caller adds the
/// residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Ffn {
    pub fc1: Linear,
    pub dw: DwConv3x3,
    pub fc2: Linear,
}

impl Ffn {
    pub fn new(dim: usize, hidden: usize) -> Self {
        Ffn {
            fc1: Linear::new(dim, hidden),
            dw: DwConv3x3::new(hidden),
            fc2: Linear::new(hidden, dim),
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let mut hdn = self.dw.forward(&self.fc1.forward(x));
        hdn.map_inplace(gelu);
        self.fc2.forward(&hdn)
    }
}

impl Module for Ffn {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.fc1.params();
        p.extend(self.dw.params());
        p.extend(self.fc2.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.fc1.params_mut();
        p.extend(self.dw.params_mut());
        p.extend(self.fc2.params_mut());
        p
    }
}

/// `x + attn(ln1(x))`, then `x + ffn(ln2(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub norm1: LayerNorm,
    pub attn: Attention,
    pub norm2: LayerNorm,
    pub ffn: Ffn,
}

impl Block {
    pub fn new(dim: usize, heads: usize, ratio: usize, mlp_ratio: usize) -> Self {
        Block {
            norm1: LayerNorm::new(dim),
            attn: Attention::new(dim, heads, ratio),
            norm2: LayerNorm::new(dim),
            ffn: Ffn::new(dim, dim * mlp_ratio),
        }
    }

    pub fn forward(&self, x: &FeatureMap, monitor: &mut SoftmaxMonitor) -> FeatureMap {
        let mut y = x.clone();
        y.add_assign(&self.attn.forward(&self.norm1.forward(x), monitor));
        let f = self.ffn.forward(&self.norm2.forward(&y));
        y.add_assign(&f);
        y
    }
}

impl Module for Block {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.norm1.params();
        p.extend(self.attn.params());
        p.extend(self.norm2.params());
        p.extend(self.ffn.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.norm1.params_mut();
        p.extend(self.attn.params_mut());
        p.extend(self.norm2.params_mut());
        p.extend(self.ffn.params_mut());
        p
    }
}

/// Source taps of output index `i` when resizing `in_len` to `out_len`
/// with half-pixel centers: `(i0, i1, frac)`, the value being
/// `(1 - frac) * src[i0] + frac * src[i1]`.
pub fn bilinear_taps(i: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
    (i0, i1, frac)
}

/// The four neighbor weights of output grid `(r, c)`, as
/// `((row, col), weight)` in the order top-left, top-right, bottom-left,
/// bottom-right.
pub fn bilinear_weights(
    r: usize,
    c: usize,
    in_hw: (usize, usize),
    out_hw: (usize, usize),
) -> [((usize, usize), f64); 4] {
    let (r0, r1, fy) = bilinear_taps(r, in_hw.0, out_hw.0);
    let (c0, c1, fx) = bilinear_taps(c, in_hw.1, out_hw.1);
    [
        ((r0, c0), (1.0 - fy) * (1.0 - fx)),
        ((r0, c1), (1.0 - fy) * fx),
        ((r1, c0), fy * (1.0 - fx)),
        ((r1, c1), fy * fx),
    ]
}

pub fn resize_bilinear(x: &FeatureMap, h: usize, w: usize) -> FeatureMap {
    if (x.h, x.w) == (h, w) {
        return x.clone();
    }
    let c = x.c;
    let mut out = FeatureMap::zeros(h, w, c);
    for r in 0..h {
        for col in 0..w {
            let o = &mut out.data[(r * w + col) * c..(r * w + col + 1) * c];
            for ((sr, sc), wt) in bilinear_weights(r, col, (x.h, x.w), (h, w)) {
                if wt == 0.0 {
                    continue;
                }
                let wt = wt as f32;
                for (o, &v) in o.iter_mut().zip(x.token(sr * x.w + sc)) {
                    *o += wt * v;
                }
            }
        }
    }
    out
}
