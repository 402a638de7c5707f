//! Naive f64 reference for the segmenter: plain loops, no matrix kernels.
//! Reads parameters straight from a `Segmenter`.

use rangeview::model::layers::{Attention, Block, Conv3x3, DwConv3x3, LayerNorm, Linear};
use rangeview::model::tensor::FeatureMap;
use rangeview::model::{Segmenter, Stage};

#[derive(Clone, Debug)]
pub struct T {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl T {
    pub fn zeros(h: usize, w: usize, c: usize) -> T {
        T {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn get(&self, r: usize, col: usize, ch: usize) -> f64 {
        self.data[(r * self.w + col) * self.c + ch]
    }

    fn set(&mut self, r: usize, col: usize, ch: usize, v: f64) {
        self.data[(r * self.w + col) * self.c + ch] = v;
    }

    /// Zero outside the map.
    fn padded(&self, r: i64, col: i64, ch: usize) -> f64 {
        if r < 0 || col < 0 || r >= self.h as i64 || col >= self.w as i64 {
            0.0
        } else {
            self.get(r as usize, col as usize, ch)
        }
    }
}

pub fn from_map(m: &FeatureMap) -> T {
    T {
        h: m.h,
        w: m.w,
        c: m.c,
        data: m.data.iter().map(|&v| v as f64).collect(),
    }
}

/// Largest absolute difference over the largest reference magnitude.
pub fn rel_err(got: &FeatureMap, want: &T) -> f64 {
    assert_eq!((got.h, got.w, got.c), (want.h, want.w, want.c), "shape");
    let scale = want.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    let diff = got
        .data
        .iter()
        .zip(&want.data)
        .fold(0.0f64, |m, (&a, &b)| m.max((a as f64 - b).abs()));
    diff / scale
}

fn p(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn linear(x: &T, l: &Linear) -> T {
    let (n_in, n_out) = (l.weight.shape[0], l.weight.shape[1]);
    assert_eq!(x.c, n_in);
    let (w, b) = (p(&l.weight.data), p(&l.bias.data));
    let mut out = T::zeros(x.h, x.w, n_out);
    for t in 0..x.h * x.w {
        for o in 0..n_out {
            let mut s = b[o];
            for i in 0..n_in {
                s += x.data[t * n_in + i] * w[i * n_out + o];
            }
            out.data[t * n_out + o] = s;
        }
    }
    out
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

pub fn map(mut x: T, f: impl Fn(f64) -> f64) -> T {
    for v in &mut x.data {
        *v = f(*v);
    }
    x
}

pub fn layer_norm(x: &T, ln: &LayerNorm) -> T {
    let (g, b) = (p(&ln.gamma.data), p(&ln.beta.data));
    let mut out = x.clone();
    for t in 0..x.h * x.w {
        let tok = &x.data[t * x.c..(t + 1) * x.c];
        let mean = tok.iter().sum::<f64>() / x.c as f64;
        let var = tok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.c as f64;
        for i in 0..x.c {
            out.data[t * x.c + i] = (tok[i] - mean) / (var + 1e-5).sqrt() * g[i] + b[i];
        }
    }
    out
}

pub fn conv3x3(x: &T, conv: &Conv3x3, stride: usize) -> T {
    let cout = conv.weight.shape[1];
    let cin = conv.weight.shape[0] / 9;
    assert_eq!(x.c, cin);
    let (w, b) = (p(&conv.weight.data), p(&conv.bias.data));
    let ho = x.h.div_ceil(stride);
    let wo = x.w.div_ceil(stride);
    let mut out = T::zeros(ho, wo, cout);
    for r in 0..ho {
        for c in 0..wo {
            for o in 0..cout {
                let mut s = b[o];
                for dy in 0..3 {
                    for dx in 0..3 {
                        let (sr, sc) = ((stride * r + dy) as i64 - 1, (stride * c + dx) as i64 - 1);
                        for ci in 0..cin {
                            s += x.padded(sr, sc, ci) * w[((dy * 3 + dx) * cin + ci) * cout + o];
                        }
                    }
                }
                out.set(r, c, o, s);
            }
        }
    }
    out
}

pub fn dwconv(x: &T, dw: &DwConv3x3) -> T {
    let (w, b) = (p(&dw.weight.data), p(&dw.bias.data));
    let mut out = T::zeros(x.h, x.w, x.c);
    for r in 0..x.h {
        for c in 0..x.w {
            for ch in 0..x.c {
                let mut s = b[ch];
                for dy in 0..3 {
                    for dx in 0..3 {
                        s += x.padded(r as i64 + dy as i64 - 1, c as i64 + dx as i64 - 1, ch)
                            * w[(dy * 3 + dx) * x.c + ch];
                    }
                }
                out.set(r, c, ch, s);
            }
        }
    }
    out
}

pub fn mean_pool(x: &T, k: usize) -> T {
    let (ho, wo) = (x.h.div_ceil(k), x.w.div_ceil(k));
    let mut out = T::zeros(ho, wo, x.c);
    for r in 0..ho {
        for c in 0..wo {
            for ch in 0..x.c {
                let (mut s, mut n) = (0.0, 0.0);
                for i in r * k..(r * k + k).min(x.h) {
                    for j in c * k..(c * k + k).min(x.w) {
                        s += x.get(i, j, ch);
                        n += 1.0;
                    }
                }
                out.set(r, c, ch, s / n);
            }
        }
    }
    out
}

pub fn attention(x: &T, a: &Attention) -> T {
    let q = linear(x, &a.q);
    let src = match &a.reduction {
        Some(sr) => layer_norm(&linear(&mean_pool(x, sr.ratio), &sr.proj), &sr.norm),
        None => x.clone(),
    };
    let k = linear(&src, &a.k);
    let v = linear(&src, &a.v);
    let (n, m, d) = (x.h * x.w, src.h * src.w, a.head_dim);
    let inner = a.heads * d;
    let mut ctx = T::zeros(x.h, x.w, inner);
    for h in 0..a.heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..m)
                .map(|j| {
                    (0..d).map(|e| q.data[i * inner + h * d + e] * k.data[j * inner + h * d + e]).sum::<f64>()
                        / (d as f64).sqrt()
                })
                .collect();
            let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = ex.iter().sum();
            for e in 0..d {
                let s: f64 = (0..m).map(|j| ex[j] / z * v.data[j * inner + h * d + e]).sum();
                ctx.data[i * inner + h * d + e] = s;
            }
        }
    }
    linear(&ctx, &a.o)
}

fn add(a: &T, b: &T) -> T {
    let mut out = a.clone();
    for (o, v) in out.data.iter_mut().zip(&b.data) {
        *o += v;
    }
    out
}

pub fn block(x: &T, b: &Block) -> T {
    let y = add(x, &attention(&layer_norm(x, &b.norm1), &b.attn));
    let hdn = map(dwconv(&linear(&layer_norm(&y, &b.norm2), &b.ffn.fc1), &b.ffn.dw), gelu);
    add(&y, &linear(&hdn, &b.ffn.fc2))
}

pub fn stage(x: &T, s: &Stage) -> T {
    let mut y = layer_norm(&conv3x3(x, &s.embed.conv, s.embed.stride), &s.embed.norm);
    for b in &s.blocks {
        y = block(&y, b);
    }
    layer_norm(&y, &s.norm)
}

pub fn rem(x: &T, m: &Segmenter) -> T {
    let mut y = x.clone();
    for (lin, bn) in &m.rem.layers {
        y = linear(&y, lin);
        let (s, t) = (p(&bn.scale.data), p(&bn.shift.data));
        for tok in y.data.chunks_exact_mut(y.c) {
            for (i, v) in tok.iter_mut().enumerate() {
                *v = *v * s[i] + t[i];
            }
        }
        y = map(y, gelu);
    }
    y
}

/// Half-pixel resize written as a tent filter over source samples: the
/// source coordinate is clamped to the sample range, then every sample
/// within distance one contributes `1 - distance`.
pub fn resize(x: &T, h: usize, w: usize) -> T {
    let coord = |i: usize, n_in: usize, n_out: usize| {
        ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
    };
    let tent = |s: f64, j: usize| (1.0 - (s - j as f64).abs()).max(0.0);
    let mut out = T::zeros(h, w, x.c);
    for r in 0..h {
        let sy = coord(r, x.h, h);
        for c in 0..w {
            let sx = coord(c, x.w, w);
            for i in 0..x.h {
                let wy = tent(sy, i);
                if wy == 0.0 {
                    continue;
                }
                for j in 0..x.w {
                    let wt = wy * tent(sx, j);
                    if wt == 0.0 {
                        continue;
                    }
                    for ch in 0..x.c {
                        out.data[(r * w + c) * x.c + ch] += wt * x.get(i, j, ch);
                    }
                }
            }
        }
    }
    out
}

/// Weight of source sample `(i, j)` in output grid `(r, c)`.
pub fn resize_weight(r: usize, c: usize, in_hw: (usize, usize), out_hw: (usize, usize), i: usize, j: usize) -> f64 {
    let coord = |k: usize, n_in: usize, n_out: usize| {
        ((k as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
    };
    let tent = |s: f64, k: usize| (1.0 - (s - k as f64).abs()).max(0.0);
    tent(coord(r, in_hw.0, out_hw.0), i) * tent(coord(c, in_hw.1, out_hw.1), j)
}

pub struct Reference {
    pub rem: T,
    pub stages: Vec<T>,
    pub fused: T,
    pub logits: T,
}

pub fn forward(m: &Segmenter, input: &T) -> Reference {
    let f0 = rem(input, m);
    let mut stages = Vec::new();
    let mut cur = f0.clone();
    for s in &m.stages {
        cur = stage(&cur, s);
        stages.push(cur.clone());
    }
    let d = &m.decoder;
    let resized: Vec<T> = stages
        .iter()
        .zip(&d.unify)
        .map(|(f, l)| resize(&linear(f, l), input.h, input.w))
        .collect();
    let c: usize = resized.iter().map(|r| r.c).sum();
    let mut cat = T::zeros(input.h, input.w, c);
    for t in 0..input.h * input.w {
        let mut o = 0;
        for r in &resized {
            for ch in 0..r.c {
                cat.data[t * c + o + ch] = r.data[t * r.c + ch];
            }
            o += r.c;
        }
    }
    let fused = map(linear(&cat, &d.fuse), gelu);
    let logits = linear(&fused, &d.classify);
    Reference {
        rem: f0,
        stages,
        fused,
        logits,
    }
}
