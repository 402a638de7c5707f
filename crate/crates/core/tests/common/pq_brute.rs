//! Exhaustive panoptic matcher: every (ground truth, prediction) segment pair
//! is scored by scanning all points.

use rangeview::ClassTaxonomy;

pub struct Segment {
    pub class: u32,
    pub mask: Vec<bool>,
}

fn segments(sem: &[u32], inst: &[u32], t: &ClassTaxonomy) -> Vec<Segment> {
    let mut keys: Vec<(u32, u32)> = Vec::new();
    for (&s, &i) in sem.iter().zip(inst) {
        if s == t.ignore() || (t.is_thing(s) && i == 0) {
            continue;
        }
        let key = if t.is_thing(s) { (s, i) } else { (s, 0) };
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(c, id)| Segment {
            class: c,
            mask: sem
                .iter()
                .zip(inst)
                .map(|(&s, &i)| s == c && (!t.is_thing(c) || i == id))
                .collect(),
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct BruteClass {
    pub ious: Vec<f64>,
    pub fp: usize,
    pub fn_: usize,
}

impl BruteClass {
    pub fn present(&self) -> bool {
        !self.ious.is_empty() || self.fp + self.fn_ > 0
    }

    pub fn pq(&self) -> f64 {
        let denom = self.ious.len() as f64 + 0.5 * (self.fp + self.fn_) as f64;
        self.ious.iter().sum::<f64>() / denom
    }

    pub fn sq(&self) -> f64 {
        if self.ious.is_empty() {
            0.0
        } else {
            self.ious.iter().sum::<f64>() / self.ious.len() as f64
        }
    }

    pub fn rq(&self) -> f64 {
        self.ious.len() as f64 / (self.ious.len() as f64 + 0.5 * (self.fp + self.fn_) as f64)
    }
}

pub struct BruteResult {
    pub classes: Vec<BruteClass>,
    /// Largest number of predictions any ground-truth segment matched.
    pub max_matches_per_gt: usize,
    pub max_matches_per_pred: usize,
}

pub fn brute_pq(pred: (&[u32], &[u32]), gt: (&[u32], &[u32]), t: &ClassTaxonomy) -> BruteResult {
    let void: Vec<bool> = gt.0.iter().map(|&s| s == t.ignore()).collect();
    let gs = segments(gt.0, gt.1, t);
    let ps = segments(pred.0, pred.1, t);
    let mut classes = vec![BruteClass::default(); t.num_classes()];
    let mut gt_hits = vec![0usize; gs.len()];
    let mut pred_hits = vec![0usize; ps.len()];
    for (gi, g) in gs.iter().enumerate() {
        for (pi, p) in ps.iter().enumerate() {
            if g.class != p.class {
                continue;
            }
            let n = void.len();
            let inter = (0..n).filter(|&k| g.mask[k] && p.mask[k]).count();
            let union = (0..n).filter(|&k| g.mask[k] || (p.mask[k] && !void[k])).count();
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                classes[g.class as usize].ious.push(iou);
                gt_hits[gi] += 1;
                pred_hits[pi] += 1;
            }
        }
    }
    for (g, &h) in gs.iter().zip(&gt_hits) {
        if h == 0 {
            classes[g.class as usize].fn_ += 1;
        }
    }
    for (p, &h) in ps.iter().zip(&pred_hits) {
        let size = p.mask.iter().filter(|&&m| m).count();
        let in_void = p.mask.iter().zip(&void).filter(|(m, v)| **m && **v).count();
        if h == 0 && in_void * 2 <= size {
            classes[p.class as usize].fp += 1;
        }
    }
    BruteResult {
        classes,
        max_matches_per_gt: gt_hits.into_iter().max().unwrap_or(0),
        max_matches_per_pred: pred_hits.into_iter().max().unwrap_or(0),
    }
}

/// Small random panoptic scene over `t`; with a handful of classes and at
/// most three instances per thing class it stays under twenty segments.
/// Semantic and instance ids of one side of a scene.
pub type Side = (Vec<u32>, Vec<u32>);

pub fn random_scene<R: rand::Rng>(rng: &mut R, t: &ClassTaxonomy, n: usize) -> (Side, Side) {
    let classes = t.num_classes() as u32;
    let mut gs = Vec::with_capacity(n);
    let mut gi = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..classes);
        gs.push(c);
        gi.push(if t.is_thing(c) { rng.random_range(1..4) } else { 0 });
    }
    // predictions: mostly copies with perturbations, so matches happen
    let mut ps = gs.clone();
    let mut pi = gi.clone();
    for k in 0..n {
        if rng.random::<f64>() < 0.3 {
            let c = rng.random_range(0..classes);
            ps[k] = c;
            pi[k] = if t.is_thing(c) { rng.random_range(0..4) } else { 0 };
        }
        if rng.random::<f64>() < 0.1 && t.is_thing(ps[k]) {
            pi[k] = rng.random_range(1..6);
        }
    }
    ((ps, pi), (gs, gi))
}
