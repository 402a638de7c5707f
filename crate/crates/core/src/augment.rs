//! Point-level "common" augmentations and grid-level range-view augmentations.
//!
//! Every stochastic operation takes an explicit random source. Draws follow a
//! fixed order so a seeded run is bit-reproducible:
//!
//! * `rand()` is `rng.random::<f64>()`, uniform on `[0, 1)`;
//! * `uniform(lo, hi)` is `lo + (hi - lo) * rand()`;
//! * normal samples are `StandardNormal` scaled by the standard deviation;
//! * integer draws use `random_range` over `usize` with the stated bounds;
//! * a probability gate draws `rand() < p`, except that `p <= 0` and
//!   `p >= 1` decide without drawing.

use std::ops::Range;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::types::{ClassId, PointCloud, RangeGrid, NUM_CHANNELS};

/// Per-operation probabilities of the point-level augmentations, in
/// application order: scaling, rotation, jittering, flipping, dropping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommonProbs {
    pub scale: f64,
    pub rotate: f64,
    pub jitter: f64,
    pub flip: f64,
    pub drop: f64,
}

/// Per-operation probabilities of the range-view augmentations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeProbs {
    pub mix: f64,
    pub union: f64,
    pub paste: f64,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    /// Standard deviation of the global jitter, meters.
    pub jitter_scale: f64,
    /// Scale factors are drawn from `[1, 1 + scale_rate]` and inverted half the time.
    pub scale_rate: f64,
    /// Upper bound on the dropped fraction of points.
    pub drop_rate: f64,
    pub common_probs: CommonProbs,
    /// Candidate band counts for mixing; one is drawn uniformly.
    pub mix_bands: Vec<usize>,
    /// Fraction of eligible empty grids filled by union.
    pub union_fraction: f64,
    pub tail_classes: Vec<ClassId>,
    /// Shift range as fractions of the width.
    pub shift_range: (f64, f64),
    pub range_probs: RangeProbs,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_scale: 0.3,
            scale_rate: 0.05,
            drop_rate: 0.1,
            common_probs: CommonProbs {
                scale: 1.0,
                rotate: 1.0,
                jitter: 1.0,
                flip: 1.0,
                drop: 0.9,
            },
            mix_bands: vec![2, 3, 4, 5, 6],
            union_fraction: 0.5,
            // SemanticKITTI rare classes: bicycle .. motorcyclist, pole, traffic-sign.
            tail_classes: vec![2, 3, 4, 5, 6, 7, 8, 18, 19],
            shift_range: (0.25, 0.75),
            range_probs: RangeProbs {
                mix: 0.9,
                union: 0.2,
                paste: 0.9,
                shift: 1.0,
            },
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "r_j",
    "r_s",
    "r_d",
    "k_mix",
    "k_union",
    "tail_classes",
    "shift_low",
    "shift_high",
    "p_scale",
    "p_rotate",
    "p_jitter",
    "p_flip",
    "p_drop",
    "p_mix",
    "p_union",
    "p_paste",
    "p_shift",
];

impl AugmentConfig {
    /// Reads overrides from a `key = value` file; absent keys keep defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(CONFIG_KEYS, &[])?;
        let mut c = AugmentConfig::default();
        let set = |slot: &mut f64, key: &str| -> Result<()> {
            if let Some(v) = kv.get(key)? {
                *slot = v;
            }
            Ok(())
        };
        set(&mut c.jitter_scale, "r_j")?;
        set(&mut c.scale_rate, "r_s")?;
        set(&mut c.drop_rate, "r_d")?;
        set(&mut c.union_fraction, "k_union")?;
        set(&mut c.shift_range.0, "shift_low")?;
        set(&mut c.shift_range.1, "shift_high")?;
        set(&mut c.common_probs.scale, "p_scale")?;
        set(&mut c.common_probs.rotate, "p_rotate")?;
        set(&mut c.common_probs.jitter, "p_jitter")?;
        set(&mut c.common_probs.flip, "p_flip")?;
        set(&mut c.common_probs.drop, "p_drop")?;
        set(&mut c.range_probs.mix, "p_mix")?;
        set(&mut c.range_probs.union, "p_union")?;
        set(&mut c.range_probs.paste, "p_paste")?;
        set(&mut c.range_probs.shift, "p_shift")?;
        if let Some(v) = kv.get_list("k_mix")? {
            c.mix_bands = v;
        }
        if let Some(v) = kv.get_list("tail_classes")? {
            c.tail_classes = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        AugmentConfig::from_key_values(&KeyValues::read(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("r_s", self.scale_rate)?;
        unit("r_d", self.drop_rate)?;
        unit("k_union", self.union_fraction)?;
        let p = &self.common_probs;
        for (n, v) in [
            ("p_scale", p.scale),
            ("p_rotate", p.rotate),
            ("p_jitter", p.jitter),
            ("p_flip", p.flip),
            ("p_drop", p.drop),
        ] {
            unit(n, v)?;
        }
        let p = &self.range_probs;
        for (n, v) in [
            ("p_mix", p.mix),
            ("p_union", p.union),
            ("p_paste", p.paste),
            ("p_shift", p.shift),
        ] {
            unit(n, v)?;
        }
        if !(self.jitter_scale >= 0.0 && self.jitter_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "r_j = {} must be non-negative",
                self.jitter_scale
            )));
        }
        let (lo, hi) = self.shift_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shift range ({lo}, {hi}) must satisfy 0 <= low <= high <= 1"
            )));
        }
        if self.mix_bands.is_empty() || self.mix_bands.contains(&0) {
            return Err(Error::InvalidConfig(
                "k_mix must be a non-empty list of positive band counts".into(),
            ));
        }
        Ok(())
    }

    /// `key = value` dump of every setting, in config-file syntax.
    pub fn to_key_values(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let tail = self
            .tail_classes
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let c = &self.common_probs;
        let r = &self.range_probs;
        format!(
            "r_j = {}\nr_s = {}\nr_d = {}\nk_mix = {}\nk_union = {}\ntail_classes = {}\n\
             shift_low = {}\nshift_high = {}\np_scale = {}\np_rotate = {}\np_jitter = {}\n\
             p_flip = {}\np_drop = {}\np_mix = {}\np_union = {}\np_paste = {}\np_shift = {}\n",
            self.jitter_scale,
            self.scale_rate,
            self.drop_rate,
            list(&self.mix_bands),
            self.union_fraction,
            tail,
            self.shift_range.0,
            self.shift_range.1,
            c.scale,
            c.rotate,
            c.jitter,
            c.flip,
            c.drop,
            r.mix,
            r.union,
            r.paste,
            r.shift
        )
    }
}

#[inline]
fn rand01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

#[inline]
fn uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    lo + (hi - lo) * rand01(rng)
}

fn gate<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rand01(rng) < p
    }
}

// ---------------------------------------------------------------------------
// Point-level augmentations

/// Multiplies x and y by `s`.
pub fn scale_xy(cloud: &PointCloud, s: f64) -> PointCloud {
    let mut out = cloud.clone();
    for p in &mut out.points {
        p.x *= s;
        p.y *= s;
    }
    out
}

pub fn random_scaling<R: Rng + ?Sized>(cloud: &PointCloud, scale_rate: f64, rng: &mut R) -> PointCloud {
    let mut s = uniform(1.0, 1.0 + scale_rate, rng);
    if rand01(rng) < 0.5 {
        s = 1.0 / s;
    }
    scale_xy(cloud, s)
}

/// Counter-clockwise rotation of (x, y) by `angle` radians.
pub fn rotate_xy(cloud: &PointCloud, angle: f64) -> PointCloud {
    let (s, c) = angle.sin_cos();
    let mut out = cloud.clone();
    for p in &mut out.points {
        let (x, y) = (p.x, p.y);
        p.x = x * c - y * s;
        p.y = x * s + y * c;
    }
    out
}

pub fn global_rotation<R: Rng + ?Sized>(cloud: &PointCloud, rng: &mut R) -> PointCloud {
    rotate_xy(cloud, (rand01(rng) * 360.0).to_radians())
}

/// Adds one jitter vector, each component `N(0, jitter_scale)` clipped to
/// three standard deviations, to every point.
pub fn random_jittering<R: Rng + ?Sized>(cloud: &PointCloud, jitter_scale: f64, rng: &mut R) -> PointCloud {
    let bound = 3.0 * jitter_scale;
    let mut jitter = [0.0f64; 3];
    for j in &mut jitter {
        let z: f64 = rng.sample(StandardNormal);
        *j = (z * jitter_scale).clamp(-bound, bound);
    }
    let mut out = cloud.clone();
    for p in &mut out.points {
        p.x += jitter[0];
        p.y += jitter[1];
        p.z += jitter[2];
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flip {
    None,
    X,
    Y,
    Both,
}

impl Flip {
    fn from_index(i: usize) -> Flip {
        match i {
            0 => Flip::None,
            1 => Flip::X,
            2 => Flip::Y,
            _ => Flip::Both,
        }
    }
}

/// `Flip::X` negates the x coordinate, `Flip::Y` the y coordinate.
pub fn flip(cloud: &PointCloud, kind: Flip) -> PointCloud {
    let mut out = cloud.clone();
    for p in &mut out.points {
        match kind {
            Flip::None => {}
            Flip::X => p.x = -p.x,
            Flip::Y => p.y = -p.y,
            Flip::Both => {
                p.x = -p.x;
                p.y = -p.y;
            }
        }
    }
    out
}

pub fn random_flipping<R: Rng + ?Sized>(cloud: &PointCloud, rng: &mut R) -> PointCloud {
    flip(cloud, Flip::from_index(rng.random_range(0..4usize)))
}

/// Draws a drop count in `[0, floor(N * drop_rate))`, then that many point
/// indices in `[0, N - 1)`; duplicates collapse, so fewer points may go. As
/// in the reference listing, the last point is never a candidate.
pub fn random_dropping<R: Rng + ?Sized>(cloud: &PointCloud, drop_rate: f64, rng: &mut R) -> PointCloud {
    let n = cloud.len();
    let max_drop = (n as f64 * drop_rate).floor() as usize;
    if max_drop == 0 {
        return cloud.clone();
    }
    let count = rng.random_range(0..max_drop);
    let mut dropped = vec![false; n];
    for _ in 0..count {
        dropped[rng.random_range(0..n - 1)] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !dropped[i]).collect();
    cloud.select(&keep)
}

/// Applies the five point-level augmentations in order, each with its
/// configured probability.
pub fn apply_common<R: Rng + ?Sized>(cloud: &PointCloud, config: &AugmentConfig, rng: &mut R) -> PointCloud {
    let p = config.common_probs;
    let mut out = cloud.clone();
    if gate(p.scale, rng) {
        out = random_scaling(&out, config.scale_rate, rng);
    }
    if gate(p.rotate, rng) {
        out = global_rotation(&out, rng);
    }
    if gate(p.jitter, rng) {
        out = random_jittering(&out, config.jitter_scale, rng);
    }
    if gate(p.flip, rng) {
        out = random_flipping(&out, rng);
    }
    if gate(p.drop, rng) {
        out = random_dropping(&out, config.drop_rate, rng);
    }
    out
}

// ---------------------------------------------------------------------------
// Range-view augmentations

/// Row ranges of `k` contiguous bands covering `height` rows. Heights differ
/// by at most one; the earliest bands take the remainder rows.
pub fn mix_bands(height: usize, k: usize) -> Vec<Range<usize>> {
    let base = height / k;
    let extra = height % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn copy_rows(dst: &mut RangeGrid, src: &RangeGrid, rows: Range<usize>) {
    let w = dst.width();
    let hw = dst.grid_count();
    let span = rows.start * w..rows.end * w;
    for c in 0..NUM_CHANNELS {
        let off = c * hw;
        dst.channels_mut()[off + span.start..off + span.end]
            .copy_from_slice(&src.channels()[off + span.start..off + span.end]);
    }
    if let (Some(d), Some(s)) = (dst.labels_mut(), src.labels()) {
        d[span.clone()].copy_from_slice(&s[span]);
    }
}

/// Splits rows into `k` inclination bands; even bands keep `a`, odd bands
/// take `b`.
pub fn range_mix(a: &RangeGrid, b: &RangeGrid, k: usize) -> Result<RangeGrid> {
    a.same_shape(b)?;
    if k == 0 {
        return Err(Error::out_of_range("band count", k, "must be at least 1"));
    }
    let mut out = a.clone();
    for (i, band) in mix_bands(a.height(), k).into_iter().enumerate() {
        if i % 2 == 1 {
            copy_rows(&mut out, b, band);
        }
    }
    Ok(out)
}

/// Grids empty in `a` and occupied in `b`, ascending.
pub fn union_candidates(a: &RangeGrid, b: &RangeGrid) -> Vec<usize> {
    (0..a.grid_count())
        .filter(|&g| !a.is_occupied(g) && b.is_occupied(g))
        .collect()
}

/// Number of grids `range_union` fills out of `eligible` candidates.
pub fn union_fill_count(eligible: usize, fraction: f64) -> usize {
    // Guard against products like 0.1 * 30 = 3.0000000000000004.
    let want = (fraction * eligible as f64 - 1e-9).ceil().max(0.0) as usize;
    want.min(eligible)
}

/// Fills a random `ceil(fraction * |eligible|)` subset of the grids that are
/// empty in `a` and occupied in `b` with `b`'s channels and labels.
pub fn range_union<R: Rng + ?Sized>(
    a: &RangeGrid,
    b: &RangeGrid,
    fraction: f64,
    rng: &mut R,
) -> Result<RangeGrid> {
    a.same_shape(b)?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::out_of_range("union fraction", fraction, "must lie in [0, 1]"));
    }
    let eligible = union_candidates(a, b);
    let take = union_fill_count(eligible.len(), fraction);
    let mut chosen: Vec<usize> = index::sample(rng, eligible.len(), take).into_vec();
    chosen.sort_unstable();
    let mut out = a.clone();
    for i in chosen {
        out.copy_grid_from(b, eligible[i]);
    }
    Ok(out)
}

/// Copies every grid of `b` whose label is a tail class onto `a`.
pub fn range_paste(a: &RangeGrid, b: &RangeGrid, tail_classes: &[ClassId]) -> Result<RangeGrid> {
    let b_labels = b.labels().ok_or(Error::MissingLabels)?;
    a.same_shape(b)?;
    let mut out = a.clone();
    for (g, l) in b_labels.iter().enumerate() {
        if tail_classes.contains(l) {
            out.copy_grid_from(b, g);
        }
    }
    Ok(out)
}

/// Circular shift along the azimuth axis: output column `j` is input column
/// `(j + k) mod W`.
pub fn range_shift(a: &RangeGrid, k: usize) -> Result<RangeGrid> {
    let w = a.width();
    if k > w {
        return Err(Error::out_of_range("shift", k, format!("must lie in [0, {w}]")));
    }
    let k = k % w;
    let mut out = a.clone();
    for c in 0..NUM_CHANNELS {
        let off = c * a.grid_count();
        for r in 0..a.height() {
            let src = &a.channels()[off + r * w..off + (r + 1) * w];
            let dst = &mut out.channels_mut()[off + r * w..off + (r + 1) * w];
            dst[..w - k].copy_from_slice(&src[k..]);
            dst[w - k..].copy_from_slice(&src[..k]);
        }
    }
    if let (Some(dst), Some(src)) = (out.labels_mut(), a.labels()) {
        for r in 0..a.height() {
            let s = &src[r * w..(r + 1) * w];
            let d = &mut dst[r * w..(r + 1) * w];
            d[..w - k].copy_from_slice(&s[k..]);
            d[w - k..].copy_from_slice(&s[..k]);
        }
    }
    Ok(out)
}

/// Inclusive bounds of the shift draw for width `w`.
pub fn shift_bounds(w: usize, range: (f64, f64)) -> (usize, usize) {
    let lo = (range.0 * w as f64).floor() as usize;
    let hi = (range.1 * w as f64).floor() as usize;
    (lo.min(w), hi.min(w))
}

/// Applies mix, paste, union and shift in that order, each with its
/// configured probability. `sample_b` is called at most once, the first time
/// an operation needs a second scan.
///
/// Draw order per operation: the probability gate, then the operation's own
/// draws (band count index for mix, grid subset for union, shift amount).
pub fn apply_range_combo<R, F>(
    a: &RangeGrid,
    sample_b: F,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<RangeGrid>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Result<RangeGrid>,
{
    config.validate()?;
    let p = config.range_probs;
    let mut sampler = Some(sample_b);
    let mut b: Option<RangeGrid> = None;
    let mut second = |b: &mut Option<RangeGrid>| -> Result<RangeGrid> {
        if b.is_none() {
            let f = sampler.take().expect("sampler used once");
            *b = Some(f()?);
        }
        Ok(b.clone().expect("sampled"))
    };

    let mut out = a.clone();
    if gate(p.mix, rng) {
        let other = second(&mut b)?;
        let k = config.mix_bands[rng.random_range(0..config.mix_bands.len())];
        out = range_mix(&out, &other, k)?;
    }
    if gate(p.paste, rng) {
        let other = second(&mut b)?;
        out = range_paste(&out, &other, &config.tail_classes)?;
    }
    if gate(p.union, rng) {
        let other = second(&mut b)?;
        out = range_union(&out, &other, config.union_fraction, rng)?;
    }
    if gate(p.shift, rng) {
        let (lo, hi) = shift_bounds(out.width(), config.shift_range);
        let k = rng.random_range(lo..=hi);
        out = range_shift(&out, k)?;
    }
    Ok(out)
}

/// True when every grid of `out` that was occupied in `before` is unchanged.
pub fn occupied_grids_preserved(before: &RangeGrid, out: &RangeGrid) -> bool {
    let hw = before.grid_count();
    (0..hw).filter(|&g| before.is_occupied(g)).all(|g| {
        (0..NUM_CHANNELS).all(|c| {
            before.channels()[c * hw + g].to_bits() == out.channels()[c * hw + g].to_bits()
        }) && before.labels().map(|l| l[g]) == out.labels().map(|l| l[g])
    })
}
