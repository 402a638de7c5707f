//! Sub-cloud re-rasterization and k-NN label smoothing.
//!
//! A scan is split into `num_sub` stride sub-clouds (`points[j::num_sub]`),
//! each is rasterized and predicted on its own, and the per-point results are
//! written back to their original positions. Fewer points per raster means
//! fewer points lose their grid to a nearer neighbor.

use crate::error::{Error, Result};
use crate::raster::{depth, rasterize, unproject};
use crate::types::{ClassId, Occupant, PointCloud, RangeImage, SensorSpec};

pub const DEFAULT_NUM_SUB: usize = 3;

/// Index lists of the stride sub-clouds: list `j` holds `j, j + num_sub, ...`.
pub fn subcloud_indices(n: usize, num_sub: usize) -> Result<Vec<Vec<usize>>> {
    if num_sub == 0 {
        return Err(Error::out_of_range("num_sub", num_sub, "must be at least 1"));
    }
    Ok((0..num_sub).map(|j| (j..n).step_by(num_sub).collect()).collect())
}

pub fn subcloud_split(cloud: &PointCloud, num_sub: usize) -> Result<Vec<PointCloud>> {
    Ok(subcloud_indices(cloud.len(), num_sub)?
        .iter()
        .map(|idx| cloud.select(idx))
        .collect())
}

/// Writes sub-cloud predictions back to their stride positions.
pub fn subcloud_stitch<T: Copy>(per_sub: &[Vec<T>], num_sub: usize, n: usize) -> Result<Vec<T>> {
    let idx = subcloud_indices(n, num_sub)?;
    if per_sub.len() != num_sub {
        return Err(Error::LengthMismatch {
            what: "sub-cloud predictions",
            expected: num_sub,
            found: per_sub.len(),
        });
    }
    for (pred, want) in per_sub.iter().zip(&idx) {
        if pred.len() != want.len() {
            return Err(Error::LengthMismatch {
                what: "sub-cloud prediction",
                expected: want.len(),
                found: pred.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(per_sub[i % num_sub][i / num_sub]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    /// Odd side length of the square search window, in grids.
    pub window: usize,
    /// Neighbors whose depth differs by more than this (meters) do not vote.
    pub range_cutoff: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 5,
            window: 5,
            range_cutoff: 1.0,
        }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::out_of_range("knn window", self.window, "must be odd and positive"));
        }
        if self.k == 0 || self.k > self.window * self.window {
            return Err(Error::out_of_range(
                "knn k",
                self.k,
                format!("must lie in [1, {}]", self.window * self.window),
            ));
        }
        if self.range_cutoff.is_nan() || self.range_cutoff < 0.0 {
            return Err(Error::out_of_range("knn range cutoff", self.range_cutoff, "must be non-negative"));
        }
        Ok(())
    }
}

/// Majority vote over the `k` occupied grids in the window around each
/// point's grid with the smallest depth difference to the point. The window
/// does not wrap around the azimuth seam. Ties go to the label whose closest
/// voter is nearer in depth, then to the smaller class id. Points with no
/// voter within `range_cutoff` take their own grid's label.
pub fn knn_smooth(
    img: &RangeImage,
    grid_labels: &[ClassId],
    cloud: &PointCloud,
    params: &KnnParams,
) -> Result<Vec<ClassId>> {
    params.validate()?;
    let fallback = unproject(img, grid_labels)?;
    if cloud.len() != img.point_count() {
        return Err(Error::LengthMismatch {
            what: "cloud for knn",
            expected: img.point_count(),
            found: cloud.len(),
        });
    }
    let (h, w) = (img.height() as i64, img.width() as i64);
    let half = (params.window / 2) as i64;
    let grid_depth: Vec<f64> = img
        .occupants()
        .iter()
        .map(|o| match o {
            Occupant::Point(i) => depth(&cloud.points[*i]),
            Occupant::Empty => f64::NAN,
        })
        .collect();

    let mut cands: Vec<(f64, usize)> = Vec::with_capacity(params.window * params.window);
    let mut votes: Vec<(ClassId, usize, f64)> = Vec::with_capacity(params.k);
    let mut out = Vec::with_capacity(cloud.len());
    for (i, slot) in img.point_slots().iter().enumerate() {
        let center = slot.transfer_grid();
        let pd = depth(&cloud.points[i]);
        cands.clear();
        for dr in -half..=half {
            let r = center.row as i64 + dr;
            if r < 0 || r >= h {
                continue;
            }
            for dc in -half..=half {
                let c = center.col as i64 + dc;
                if c < 0 || c >= w {
                    continue;
                }
                let flat = (r * w + c) as usize;
                if matches!(img.occupants()[flat], Occupant::Point(_)) {
                    cands.push(((grid_depth[flat] - pd).abs(), flat));
                }
            }
        }
        // flat order is row-major, so ties resolve by row then column
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        votes.clear();
        for &(d, flat) in cands.iter().take(params.k) {
            if d > params.range_cutoff {
                continue;
            }
            let l = grid_labels[flat];
            match votes.iter_mut().find(|v| v.0 == l) {
                Some(v) => {
                    v.1 += 1;
                    v.2 = v.2.min(d);
                }
                None => votes.push((l, 1, d)),
            }
        }
        let best = votes.iter().min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.2.total_cmp(&b.2))
                .then(a.0.cmp(&b.0))
        });
        out.push(best.map_or(fallback[i], |v| v.0));
    }
    Ok(out)
}

/// Split, per-sub-cloud rasterize and predict, transfer labels to points
/// (k-NN when `knn` is given, plain grid lookup otherwise), stitch.
pub fn range_post<F>(
    cloud: &PointCloud,
    spec: &SensorSpec,
    num_sub: usize,
    mut predictor: F,
    knn: Option<&KnnParams>,
) -> Result<Vec<ClassId>>
where
    F: FnMut(&RangeImage) -> Result<Vec<ClassId>>,
{
    let subs = subcloud_split(cloud, num_sub)?;
    let mut per_sub = Vec::with_capacity(num_sub);
    for sub in &subs {
        let img = rasterize(sub, spec)?;
        let grid = predictor(&img)?;
        per_sub.push(match knn {
            Some(p) => knn_smooth(&img, &grid, sub, p)?,
            None => unproject(&img, &grid)?,
        });
    }
    subcloud_stitch(&per_sub, num_sub, cloud.len())
}

/// Displaced-point counts of each sub-cloud raster.
pub fn subcloud_collisions(cloud: &PointCloud, spec: &SensorSpec, num_sub: usize) -> Result<Vec<usize>> {
    subcloud_split(cloud, num_sub)?
        .iter()
        .map(|s| Ok(rasterize(s, spec)?.displaced().len()))
        .collect()
}
