//! Semantic (confusion matrix, IoU) and panoptic (PQ, SQ, RQ) evaluation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{ClassId, ClassTaxonomy};

/// Rows are ground truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    ignore: ClassId,
    counts: Vec<u64>,
}

fn check_id(what: &'static str, id: ClassId, classes: usize) -> Result<usize> {
    if (id as usize) < classes {
        Ok(id as usize)
    } else {
        Err(Error::out_of_range(what, id, format!("class ids must be below {classes}")))
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, found })
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize, ignore: ClassId) -> Self {
        ConfusionMatrix {
            classes,
            ignore,
            counts: vec![0; classes * classes],
        }
    }

    pub fn for_taxonomy(t: &ClassTaxonomy) -> Self {
        ConfusionMatrix::new(t.num_classes(), t.ignore())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ignore(&self) -> ClassId {
        self.ignore
    }

    /// Adds every position whose ground truth is not the ignore id. The
    /// matrix is left untouched when any id is out of range.
    pub fn update(&mut self, pred: &[ClassId], gt: &[ClassId]) -> Result<()> {
        check_len("predictions", gt.len(), pred.len())?;
        for (&p, &g) in pred.iter().zip(gt) {
            check_id("predicted class", p, self.classes)?;
            check_id("ground-truth class", g, self.classes)?;
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if g != self.ignore {
                self.counts[g as usize * self.classes + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes || other.ignore != self.ignore {
            return Err(Error::InvalidConfig(format!(
                "cannot merge confusion matrices over {} and {} classes",
                self.classes, other.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn count(&self, gt: ClassId, pred: ClassId) -> u64 {
        self.counts[gt as usize * self.classes + pred as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: ClassId) -> u64 {
        self.count(c, c)
    }

    /// Points predicted `c` whose ground truth is another, non-ignore class.
    pub fn false_positives(&self, c: ClassId) -> u64 {
        (0..self.classes as ClassId)
            .filter(|&g| g != c && g != self.ignore)
            .map(|g| self.count(g, c))
            .sum()
    }

    /// Points of ground truth `c` predicted as anything else, ignore included.
    pub fn false_negatives(&self, c: ClassId) -> u64 {
        (0..self.classes as ClassId)
            .filter(|&p| p != c)
            .map(|p| self.count(c, p))
            .sum()
    }

    /// `None` for the ignore class and for classes with TP + FP + FN = 0.
    pub fn iou(&self, c: ClassId) -> Option<f64> {
        if c == self.ignore {
            return None;
        }
        let tp = self.true_positives(c);
        let denom = tp + self.false_positives(c) + self.false_negatives(c);
        (denom > 0).then(|| tp as f64 / denom as f64)
    }

    pub fn miou(&self) -> IouReport {
        let per_class: Vec<Option<f64>> = (0..self.classes as ClassId).map(|c| self.iou(c)).collect();
        IouReport {
            mean: mean(per_class.iter().flatten().copied()),
            per_class,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    /// Indexed by class id; `None` where undefined.
    pub per_class: Vec<Option<f64>>,
    /// Mean of the defined entries; NaN when none is defined.
    pub mean: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-point semantic and instance ids of one scan.
#[derive(Clone, Copy, Debug)]
pub struct PanopticLabels<'a> {
    pub semantic: &'a [ClassId],
    pub instance: &'a [u32],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ClassAccum {
    /// (intersection, union) of every matched pair.
    matches: Vec<(u64, u64)>,
    fp: u64,
    fn_: u64,
}

/// Accumulates panoptic statistics over scans.
///
/// Segments: every thing class forms one segment per nonzero instance id
/// (instance 0 marks points without an instance and forms none); every stuff
/// class forms one segment per scan. Ground-truth ignore points are void:
/// they are removed from prediction segments before IoU, and a prediction
/// segment lying mostly (over half) in void is never a false positive.
#[derive(Clone, Debug)]
pub struct PanopticEval {
    taxonomy: ClassTaxonomy,
    classes: Vec<ClassAccum>,
    semantic: ConfusionMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassPq {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqReport {
    /// Indexed by class id; `None` for the ignore class and absent classes.
    pub per_class: Vec<Option<ClassPq>>,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_dagger: f64,
    pub pq_things: f64,
    pub sq_things: f64,
    pub rq_things: f64,
    pub pq_stuff: f64,
    pub sq_stuff: f64,
    pub rq_stuff: f64,
    pub miou: f64,
}

type SegKey = (ClassId, u32);

impl PanopticEval {
    pub fn new(taxonomy: &ClassTaxonomy) -> Self {
        PanopticEval {
            taxonomy: taxonomy.clone(),
            classes: vec![ClassAccum::default(); taxonomy.num_classes()],
            semantic: ConfusionMatrix::for_taxonomy(taxonomy),
        }
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.semantic
    }

    fn segment(&self, class: ClassId, inst: u32) -> Option<SegKey> {
        if class == self.taxonomy.ignore() {
            None
        } else if self.taxonomy.is_thing(class) {
            (inst != 0).then_some((class, inst))
        } else {
            Some((class, 0))
        }
    }

    pub fn add_scan(&mut self, pred: PanopticLabels<'_>, gt: PanopticLabels<'_>) -> Result<()> {
        let n = gt.semantic.len();
        check_len("ground-truth instances", n, gt.instance.len())?;
        check_len("predicted classes", n, pred.semantic.len())?;
        check_len("predicted instances", n, pred.instance.len())?;
        self.semantic.update(pred.semantic, gt.semantic)?;

        let ignore = self.taxonomy.ignore();
        let mut gt_size: BTreeMap<SegKey, u64> = BTreeMap::new();
        let mut pred_size: BTreeMap<SegKey, u64> = BTreeMap::new();
        let mut pred_void: BTreeMap<SegKey, u64> = BTreeMap::new();
        let mut overlap: BTreeMap<(SegKey, SegKey), u64> = BTreeMap::new();
        for i in 0..n {
            let g = self.segment(gt.semantic[i], gt.instance[i]);
            let p = self.segment(pred.semantic[i], pred.instance[i]);
            if let Some(p) = p {
                *pred_size.entry(p).or_default() += 1;
                if gt.semantic[i] == ignore {
                    *pred_void.entry(p).or_default() += 1;
                }
            }
            if let Some(g) = g {
                *gt_size.entry(g).or_default() += 1;
            }
            if let (Some(g), Some(p)) = (g, p) {
                *overlap.entry((g, p)).or_default() += 1;
            }
        }

        let mut gt_matched: BTreeMap<SegKey, bool> = gt_size.keys().map(|k| (*k, false)).collect();
        let mut pred_matched: BTreeMap<SegKey, bool> = pred_size.keys().map(|k| (*k, false)).collect();
        for (&(g, p), &inter) in &overlap {
            if g.0 != p.0 {
                continue;
            }
            let union = gt_size[&g] + pred_size[&p] - pred_void.get(&p).copied().unwrap_or(0) - inter;
            // IoU > 0.5, in integers
            if 2 * inter > union {
                self.classes[g.0 as usize].matches.push((inter, union));
                gt_matched.insert(g, true);
                pred_matched.insert(p, true);
            }
        }
        for (g, m) in gt_matched {
            if !m {
                self.classes[g.0 as usize].fn_ += 1;
            }
        }
        for (p, m) in pred_matched {
            let void = pred_void.get(&p).copied().unwrap_or(0);
            if !m && 2 * void <= pred_size[&p] {
                self.classes[p.0 as usize].fp += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &PanopticEval) -> Result<()> {
        if other.taxonomy != self.taxonomy {
            return Err(Error::InvalidConfig("cannot merge panoptic accumulators over different taxonomies".into()));
        }
        self.semantic.merge(&other.semantic)?;
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.matches.extend_from_slice(&b.matches);
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        Ok(())
    }

    fn class_pq(&self, c: usize) -> Option<ClassPq> {
        let acc = &self.classes[c];
        let tp = acc.matches.len() as u64;
        if c as ClassId == self.taxonomy.ignore() || tp + acc.fp + acc.fn_ == 0 {
            return None;
        }
        let denom = tp as f64 + 0.5 * acc.fp as f64 + 0.5 * acc.fn_ as f64;
        // order-independent sums
        let mut m = acc.matches.clone();
        m.sort_unstable();
        let (mut pq, mut sq) = (0.0, 0.0);
        for (inter, union) in m {
            pq += inter as f64 / (union as f64 * denom);
            sq += inter as f64 / (union as f64 * tp as f64);
        }
        Some(ClassPq {
            pq,
            sq,
            rq: tp as f64 / denom,
            tp,
            fp: acc.fp,
            fn_: acc.fn_,
            iou: self.semantic.iou(c as ClassId),
        })
    }

    pub fn report(&self) -> PqReport {
        let per_class: Vec<Option<ClassPq>> = (0..self.classes.len()).map(|c| self.class_pq(c)).collect();
        let present = || {
            per_class
                .iter()
                .enumerate()
                .filter_map(|(c, p)| p.map(|p| (c as ClassId, p)))
        };
        let things = |f: fn(&ClassPq) -> f64| {
            mean(present().filter(|(c, _)| self.taxonomy.is_thing(*c)).map(|(_, p)| f(&p)))
        };
        let stuff = |f: fn(&ClassPq) -> f64| {
            mean(present().filter(|(c, _)| self.taxonomy.is_stuff(*c)).map(|(_, p)| f(&p)))
        };
        PqReport {
            pq: mean(present().map(|(_, p)| p.pq)),
            sq: mean(present().map(|(_, p)| p.sq)),
            rq: mean(present().map(|(_, p)| p.rq)),
            pq_dagger: pq_dagger(&per_class, &self.taxonomy),
            pq_things: things(|p| p.pq),
            sq_things: things(|p| p.sq),
            rq_things: things(|p| p.rq),
            pq_stuff: stuff(|p| p.pq),
            sq_stuff: stuff(|p| p.sq),
            rq_stuff: stuff(|p| p.rq),
            miou: self.semantic.miou().mean,
            per_class,
        }
    }
}

/// Mean over present classes of PQ for things and semantic IoU for stuff.
pub fn pq_dagger(per_class: &[Option<ClassPq>], taxonomy: &ClassTaxonomy) -> f64 {
    mean(per_class.iter().enumerate().filter_map(|(c, p)| {
        let p = (*p)?;
        Some(if taxonomy.is_stuff(c as ClassId) {
            p.iou.unwrap_or(0.0)
        } else {
            p.pq
        })
    }))
}

/// One-scan convenience wrapper around [`PanopticEval`].
pub fn panoptic_quality(
    pred: PanopticLabels<'_>,
    gt: PanopticLabels<'_>,
    taxonomy: &ClassTaxonomy,
) -> Result<PqReport> {
    let mut eval = PanopticEval::new(taxonomy);
    eval.add_scan(pred, gt)?;
    Ok(eval.report())
}
