//! Forward-only transformer segmenter for range images.
//!
//! Pipeline: a pointwise range embedding (three linear + norm + GELU
//! layers), four pyramid stages of overlapping patch embedding followed by
//! transformer blocks, and an all-MLP decoder that unifies stage channels,
//! resizes every stage to the input size, fuses them and predicts classes.
//! One auxiliary head per stage reads the unified stage features.

pub mod layers;
pub mod tensor;
pub mod weights;

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::types::{ClassId, RangeGrid, NUM_CHANNELS};

use layers::{
    gelu, resize_bilinear, BatchNorm, Block, Conv3x3, LayerNorm, Linear, Module, SoftmaxMonitor,
};
use tensor::{FeatureMap, Param};

pub const STAGES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Widths of the three range embedding layers.
    pub embed: [usize; 3],
    pub channels: [usize; STAGES],
    pub heads: [usize; STAGES],
    pub depths: [usize; STAGES],
    /// Key/value reduction ratio per stage.
    pub reductions: [usize; STAGES],
    /// Patch embedding stride per stage.
    pub strides: [usize; STAGES],
    pub mlp_ratio: usize,
    pub decode: usize,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed: [64, 128, 128],
            channels: [128, 128, 320, 512],
            heads: [3, 4, 6, 3],
            depths: [2, 2, 2, 2],
            reductions: [8, 4, 2, 1],
            strides: [1, 2, 2, 2],
            mlp_ratio: 4,
            decode: 256,
            classes: 20,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "embed",
    "channels",
    "heads",
    "depths",
    "reductions",
    "strides",
    "mlp_ratio",
    "decode",
    "classes",
];

fn four(kv: &KeyValues, key: &'static str, slot: &mut [usize; STAGES]) -> Result<()> {
    if let Some(v) = kv.get_list::<usize>(key)? {
        *slot = v.try_into().map_err(|v: Vec<usize>| {
            Error::InvalidConfig(format!("{key} needs {STAGES} entries, found {}", v.len()))
        })?;
    }
    Ok(())
}

impl ModelConfig {
    /// A narrow configuration for tests and quick runs.
    pub fn tiny(classes: usize) -> Self {
        ModelConfig {
            embed: [8, 16, 16],
            channels: [16, 16, 24, 32],
            heads: [1, 2, 3, 2],
            depths: [1, 1, 1, 1],
            reductions: [4, 2, 2, 1],
            strides: [1, 2, 2, 2],
            mlp_ratio: 2,
            decode: 16,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.embed.contains(&0) || self.channels.contains(&0) || self.decode == 0 || self.mlp_ratio == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.classes == 0 {
            return bad("class count must be positive".into());
        }
        for i in 0..STAGES {
            if self.heads[i] == 0 || self.heads[i] > self.channels[i] {
                return bad(format!(
                    "stage {} has {} heads for {} channels",
                    i + 1,
                    self.heads[i],
                    self.channels[i]
                ));
            }
            if self.reductions[i] == 0 {
                return bad(format!("stage {} reduction must be positive", i + 1));
            }
            if !matches!(self.strides[i], 1 | 2) {
                return bad(format!("stage {} stride must be 1 or 2", i + 1));
            }
        }
        Ok(())
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(CONFIG_KEYS, &[])?;
        let mut c = ModelConfig::default();
        if let Some(v) = kv.get_list::<usize>("embed")? {
            c.embed = v.try_into().map_err(|v: Vec<usize>| {
                Error::InvalidConfig(format!("embed needs 3 entries, found {}", v.len()))
            })?;
        }
        four(kv, "channels", &mut c.channels)?;
        four(kv, "heads", &mut c.heads)?;
        four(kv, "depths", &mut c.depths)?;
        four(kv, "reductions", &mut c.reductions)?;
        four(kv, "strides", &mut c.strides)?;
        for (key, slot) in [
            ("mlp_ratio", &mut c.mlp_ratio),
            ("decode", &mut c.decode),
            ("classes", &mut c.classes),
        ] {
            if let Some(v) = kv.get(key)? {
                *slot = v;
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        ModelConfig::from_key_values(&KeyValues::read(path)?)
    }

    pub fn to_key_values(&self) -> String {
        let l = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        format!(
            "embed = {}\nchannels = {}\nheads = {}\ndepths = {}\nreductions = {}\nstrides = {}\n\
             mlp_ratio = {}\ndecode = {}\nclasses = {}\n",
            l(&self.embed),
            l(&self.channels),
            l(&self.heads),
            l(&self.depths),
            l(&self.reductions),
            l(&self.strides),
            self.mlp_ratio,
            self.decode,
            self.classes
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeEmbedding {
    pub layers: [(Linear, BatchNorm); 3],
}

impl RangeEmbedding {
    fn new(widths: [usize; 3]) -> Self {
        let dims = [NUM_CHANNELS, widths[0], widths[1], widths[2]];
        RangeEmbedding {
            layers: std::array::from_fn(|i| (Linear::new(dims[i], dims[i + 1]), BatchNorm::new(dims[i + 1]))),
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let mut y = x.clone();
        for (lin, bn) in &self.layers {
            y = lin.forward(&y);
            bn.forward_inplace(&mut y);
            y.map_inplace(gelu);
        }
        y
    }
}

impl Module for RangeEmbedding {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|(l, b)| l.params().into_iter().chain(b.params())).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|(l, b)| l.params_mut().into_iter().chain(b.params_mut()))
            .collect()
    }
}

/// Overlapping 3x3 patch embedding followed by layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbed {
    pub stride: usize,
    pub conv: Conv3x3,
    pub norm: LayerNorm,
}

impl PatchEmbed {
    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        self.norm.forward(&self.conv.forward(x, self.stride))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub embed: PatchEmbed,
    pub blocks: Vec<Block>,
    pub norm: LayerNorm,
}

impl Module for Stage {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.embed.conv.params();
        p.extend(self.embed.norm.params());
        for b in &self.blocks {
            p.extend(b.params());
        }
        p.extend(self.norm.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.embed.conv.params_mut();
        p.extend(self.embed.norm.params_mut());
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.norm.params_mut());
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    /// Per-stage channel unification to the decode width.
    pub unify: [Linear; STAGES],
    /// Concatenated stages to the decode width (followed by GELU).
    pub fuse: Linear,
    pub classify: Linear,
    pub aux: [Linear; STAGES],
}

impl Module for Decoder {
    fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.unify.iter().flat_map(|l| l.params()).collect();
        p.extend(self.fuse.params());
        p.extend(self.classify.params());
        p.extend(self.aux.iter().flat_map(|l| l.params()));
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.unify.iter_mut().flat_map(|l| l.params_mut()).collect();
        p.extend(self.fuse.params_mut());
        p.extend(self.classify.params_mut());
        p.extend(self.aux.iter_mut().flat_map(|l| l.params_mut()));
        p
    }
}

/// Concatenates maps of equal spatial size along channels.
pub fn concat_channels(maps: &[FeatureMap]) -> FeatureMap {
    let (h, w) = (maps[0].h, maps[0].w);
    let c: usize = maps.iter().map(|m| m.c).sum();
    let mut out = FeatureMap::zeros(h, w, c);
    for t in 0..h * w {
        let mut o = t * c;
        for m in maps {
            out.data[o..o + m.c].copy_from_slice(m.token(t));
            o += m.c;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmenter {
    pub config: ModelConfig,
    pub rem: RangeEmbedding,
    pub stages: Vec<Stage>,
    pub decoder: Decoder,
}

/// Intermediate results of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub input: Option<FeatureMap>,
    pub rem: Option<FeatureMap>,
    /// Per stage: patch embedding output, each block output, final norm.
    pub stages: Vec<StageTrace>,
    pub unified: Vec<FeatureMap>,
    pub resized: Vec<FeatureMap>,
    pub fused: Option<FeatureMap>,
}

#[derive(Clone, Debug, Default)]
pub struct StageTrace {
    pub embedded: Option<FeatureMap>,
    pub blocks: Vec<FeatureMap>,
    pub output: Option<FeatureMap>,
}

#[derive(Clone, Debug)]
pub struct Output {
    /// Main-head logits, `(classes, H, W)` in token-major layout.
    pub logits: FeatureMap,
    pub aux: Vec<FeatureMap>,
    pub softmax: SoftmaxMonitor,
}

impl Output {
    /// Per-grid argmax, row-major; ties go to the smaller class id.
    pub fn predictions(&self) -> Vec<ClassId> {
        argmax(&self.logits)
    }
}

pub fn argmax(logits: &FeatureMap) -> Vec<ClassId> {
    (0..logits.tokens())
        .map(|t| {
            let row = logits.token(t);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best as ClassId
        })
        .collect()
}

impl Segmenter {
    /// Architecture with every parameter at its fill value (weights zero,
    /// norm scales one); see [`weights::init_weights`] for random weights.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut prev = c.embed[2];
        let stages = (0..STAGES)
            .map(|i| {
                let dim = c.channels[i];
                let s = Stage {
                    embed: PatchEmbed {
                        stride: c.strides[i],
                        conv: Conv3x3::new(prev, dim),
                        norm: LayerNorm::new(dim),
                    },
                    blocks: (0..c.depths[i])
                        .map(|_| Block::new(dim, c.heads[i], c.reductions[i], c.mlp_ratio))
                        .collect(),
                    norm: LayerNorm::new(dim),
                };
                prev = dim;
                s
            })
            .collect();
        Ok(Segmenter {
            config: c.clone(),
            rem: RangeEmbedding::new(c.embed),
            stages,
            decoder: Decoder {
                unify: std::array::from_fn(|i| Linear::new(c.channels[i], c.decode)),
                fuse: Linear::new(STAGES * c.decode, c.decode),
                classify: Linear::new(c.decode, c.classes),
                aux: std::array::from_fn(|_| Linear::new(c.decode, c.classes)),
            },
        })
    }

    pub fn input_map(grid: &RangeGrid) -> FeatureMap {
        FeatureMap::from_channel_major(grid.height(), grid.width(), NUM_CHANNELS, grid.channels())
            .expect("grid buffers are consistent")
    }

    pub fn forward(&self, grid: &RangeGrid) -> Result<Output> {
        self.run(Segmenter::input_map(grid), None)
    }

    pub fn forward_traced(&self, grid: &RangeGrid) -> Result<(Output, Trace)> {
        let mut trace = Trace::default();
        let out = self.run(Segmenter::input_map(grid), Some(&mut trace))?;
        Ok((out, trace))
    }

    pub fn predict(&self, grid: &RangeGrid) -> Result<Vec<ClassId>> {
        Ok(self.forward(grid)?.predictions())
    }

    /// Runs one stage on `x`.
    pub fn stage_forward(&self, i: usize, x: &FeatureMap, monitor: &mut SoftmaxMonitor, trace: Option<&mut StageTrace>) -> FeatureMap {
        let st = &self.stages[i];
        let mut y = st.embed.forward(x);
        let mut rec = StageTrace::default();
        let tracing = trace.is_some();
        if tracing {
            rec.embedded = Some(y.clone());
        }
        for b in &st.blocks {
            y = b.forward(&y, monitor);
            if tracing {
                rec.blocks.push(y.clone());
            }
        }
        let y = st.norm.forward(&y);
        if let Some(t) = trace {
            rec.output = Some(y.clone());
            *t = rec;
        }
        y
    }

    fn run(&self, x: FeatureMap, mut trace: Option<&mut Trace>) -> Result<Output> {
        if x.c != NUM_CHANNELS {
            return Err(Error::Tensor(format!("expected {NUM_CHANNELS} input channels, found {}", x.c)));
        }
        if x.h == 0 || x.w == 0 {
            return Err(Error::Tensor("empty input raster".into()));
        }
        let (h, w) = (x.h, x.w);
        let mut monitor = SoftmaxMonitor::default();
        let f0 = self.rem.forward(&x);
        if let Some(t) = trace.as_deref_mut() {
            t.input = Some(x);
            t.rem = Some(f0.clone());
        }

        let mut feats = Vec::with_capacity(STAGES);
        let mut cur = f0;
        for i in 0..STAGES {
            let mut st = StageTrace::default();
            cur = self.stage_forward(i, &cur, &mut monitor, trace.is_some().then_some(&mut st));
            if let Some(t) = trace.as_deref_mut() {
                t.stages.push(st);
            }
            feats.push(cur.clone());
        }

        let d = &self.decoder;
        let mut resized = Vec::with_capacity(STAGES);
        for (f, lin) in feats.iter().zip(&d.unify) {
            let u = lin.forward(f);
            let r = resize_bilinear(&u, h, w);
            if let Some(t) = trace.as_deref_mut() {
                t.unified.push(u);
                t.resized.push(r.clone());
            }
            resized.push(r);
        }
        let mut fused = d.fuse.forward(&concat_channels(&resized));
        fused.map_inplace(gelu);
        let logits = d.classify.forward(&fused);
        let aux = resized.iter().zip(&d.aux).map(|(r, l)| l.forward(r)).collect();
        if let Some(t) = trace {
            t.fused = Some(fused);
        }
        Ok(Output {
            logits,
            aux,
            softmax: monitor,
        })
    }
}

impl Module for Segmenter {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.rem.params();
        for s in &self.stages {
            p.extend(s.params());
        }
        p.extend(self.decoder.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.rem.params_mut();
        for s in &mut self.stages {
            p.extend(s.params_mut());
        }
        p.extend(self.decoder.params_mut());
        p
    }
}
