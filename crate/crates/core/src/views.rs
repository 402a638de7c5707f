//! Azimuth partition of a scan into `Z` disjoint views, per-view
//! rasterization at a finer horizontal granularity, and stitching of
//! per-view predictions back onto the full scan.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::{self, azimuth_fraction, project_point, rasterize_with};
use crate::types::{ClassId, Point, PointCloud, RangeImage, SensorSpec, IGNORE_ID};

/// Left edge of view 0, radians.
pub const BIN_ORIGIN: f64 = -PI;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewPartition {
    views: usize,
    /// View id per point; `None` where the azimuth is undefined.
    assignments: Vec<Option<usize>>,
}

impl ViewPartition {
    pub fn views(&self) -> usize {
        self.views
    }

    pub fn bin_span(&self) -> f64 {
        2.0 * PI / self.views as f64
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Indices of the points in `view`, ascending.
    pub fn members(&self, view: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Some(view))
            .map(|(i, _)| i)
            .collect()
    }

    /// Points on the sensor's vertical axis, which belong to no view.
    pub fn unassigned(&self) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn view_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.views];
        for v in self.assignments.iter().flatten() {
            sizes[*v] += 1;
        }
        sizes
    }

    /// Half-open azimuth window `[lo, hi)` of `view`.
    pub fn window(&self, view: usize) -> (f64, f64) {
        let span = self.bin_span();
        (BIN_ORIGIN + view as f64 * span, BIN_ORIGIN + (view + 1) as f64 * span)
    }
}

/// View of azimuth `theta` among `views` bins starting at -pi.
pub fn view_of(theta: f64, views: usize) -> usize {
    let span = 2.0 * PI / views as f64;
    (((theta - BIN_ORIGIN) / span).floor().max(0.0) as usize).min(views - 1)
}

pub fn partition(cloud: &PointCloud, views: usize) -> Result<ViewPartition> {
    if views == 0 {
        return Err(Error::out_of_range("view count", views, "must be at least 1"));
    }
    cloud.ensure_valid()?;
    let assignments = cloud
        .points
        .iter()
        .map(|p| raster::azimuth(p).ok().map(|t| view_of(t, views)))
        .collect();
    Ok(ViewPartition { views, assignments })
}

/// One view rasterized at width `w_train`.
#[derive(Clone, Debug)]
pub struct ViewRaster {
    pub view: usize,
    pub window: (f64, f64),
    /// Raster of the view's points; its point indices are local.
    pub image: RangeImage,
    /// Global index of each local point.
    pub point_ids: Vec<usize>,
}

/// Column coordinate of azimuth `theta` inside `view` at width `w_train`.
/// Decreasing azimuth maps to increasing column, as in the full-scan
/// projection. With one view this is the full-scan coordinate.
pub fn view_column_coordinate(theta: f64, view: usize, views: usize, w_train: usize) -> f64 {
    let full = azimuth_fraction(theta) * (w_train * views) as f64;
    full - ((views - 1 - view) * w_train) as f64
}

fn view_column(u: f64, views: usize, w_train: usize) -> usize {
    let c = u.floor() as i64;
    if views == 1 {
        c.rem_euclid(w_train as i64) as usize
    } else {
        c.clamp(0, w_train as i64 - 1) as usize
    }
}

/// Rasterizes the points of `view` on a `spec.height() x w_train` grid. Row
/// assignment is the full-scan one.
pub fn rasterize_view(
    cloud: &PointCloud,
    part: &ViewPartition,
    view: usize,
    spec: &SensorSpec,
    w_train: usize,
) -> Result<ViewRaster> {
    let views = part.views();
    if view >= views {
        return Err(Error::out_of_range("view id", view, format!("must be below {views}")));
    }
    if w_train == 0 {
        return Err(Error::out_of_range("view width", w_train, "must be positive"));
    }
    if part.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "view partition",
            expected: cloud.len(),
            found: part.len(),
        });
    }
    let point_ids = part.members(view);
    let sub = cloud.select(&point_ids);
    let locate = |p: &Point| {
        let pr = project_point(p, spec).ok()?;
        let u = view_column_coordinate(p.y.atan2(p.x), view, views, w_train);
        Some((pr.row, view_column(u, views, w_train)))
    };
    let fallback = raster::origin_fallback(spec, w_train, |theta| {
        view_column(view_column_coordinate(theta, view, views, w_train), views, w_train)
    });
    let image = rasterize_with(&sub, spec.height(), w_train, &locate, fallback);
    Ok(ViewRaster {
        view,
        window: part.window(view),
        image,
        point_ids,
    })
}

/// Splits per-point values by view, in view order; each list follows the
/// ascending global index order of the view's members.
pub fn split_by_view<T: Clone>(values: &[T], part: &ViewPartition) -> Result<Vec<Vec<T>>> {
    if values.len() != part.len() {
        return Err(Error::LengthMismatch {
            what: "per-point values",
            expected: part.len(),
            found: values.len(),
        });
    }
    let mut out = vec![Vec::new(); part.views()];
    for (v, a) in values.iter().zip(part.assignments()) {
        if let Some(view) = a {
            out[*view].push(v.clone());
        }
    }
    Ok(out)
}

/// Inverse of [`split_by_view`]. Points with undefined azimuth stay `None`.
pub fn stitch(view_predictions: &[Vec<ClassId>], part: &ViewPartition) -> Result<Vec<Option<ClassId>>> {
    if view_predictions.len() != part.views() {
        return Err(Error::MissingView {
            view: view_predictions.len().min(part.views()),
            views: part.views(),
        });
    }
    for (preds, size) in view_predictions.iter().zip(part.view_sizes()) {
        if preds.len() != size {
            return Err(Error::LengthMismatch {
                what: "view predictions",
                expected: size,
                found: preds.len(),
            });
        }
    }
    let mut cursors = vec![0usize; part.views()];
    Ok(part
        .assignments()
        .iter()
        .map(|a| {
            a.map(|view| {
                let l = view_predictions[view][cursors[view]];
                cursors[view] += 1;
                l
            })
        })
        .collect())
}

/// Rasterizes every view, predicts grid labels with `predictor`, transfers
/// them back to the view's points and stitches. Points with undefined
/// azimuth receive the ignore id.
pub fn infer_all_views<F>(
    cloud: &PointCloud,
    views: usize,
    spec: &SensorSpec,
    w_train: usize,
    mut predictor: F,
) -> Result<Vec<ClassId>>
where
    F: FnMut(&ViewRaster) -> Result<Vec<ClassId>>,
{
    let part = partition(cloud, views)?;
    let mut per_view = Vec::with_capacity(views);
    for view in 0..views {
        let vr = rasterize_view(cloud, &part, view, spec, w_train)?;
        let grid = predictor(&vr)?;
        per_view.push(raster::unproject(&vr.image, &grid)?);
    }
    Ok(stitch(&per_view, &part)?
        .into_iter()
        .map(|l| l.unwrap_or(IGNORE_ID))
        .collect())
}
