//! Spherical projection of points onto the `H x W` range grid and the inverse
//! grid-to-point label transfer.
//!
//! A point `p` with depth `d` maps to continuous coordinates
//!
//! ```text
//! u = 1/2 * (1 - atan2(y, x) / pi) * W
//! v = (1 - (asin(z / d) + fov_down) / (fov_up + fov_down)) * H
//! ```
//!
//! Columns wrap modulo `W`; rows outside `[0, H)` are out of the field of view.
//! When several points land on the same grid the nearest one wins
//! ([`CollisionPolicy::NearestDepth`]); the others are recorded as displaced.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::types::{
    Channel, ClassId, GridIndex, Occupant, Point, PointCloud, PointSlot, RangeGrid, RangeImage,
    SensorSpec, NUM_CHANNELS,
};

/// How continuous coordinates become grid indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantization {
    Floor,
}

/// Which of several colliding points keeps the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollisionPolicy {
    /// Smallest depth wins; equal depths keep the lower point index.
    NearestDepth,
}

pub const QUANTIZATION: Quantization = Quantization::Floor;
pub const COLLISION_POLICY: CollisionPolicy = CollisionPolicy::NearestDepth;

pub fn depth(p: &Point) -> f64 {
    (p.x * p.x + p.y * p.y + p.z * p.z).sqrt()
}

/// Horizontal angle in `(-pi, pi]`.
pub fn azimuth(p: &Point) -> Result<f64> {
    if p.x == 0.0 && p.y == 0.0 {
        return Err(Error::UndefinedAzimuth);
    }
    Ok(p.y.atan2(p.x))
}

/// Vertical angle above the sensor's horizontal plane, in `(-pi/2, pi/2)`.
pub fn inclination(p: &Point) -> Result<f64> {
    if p.x == 0.0 && p.y == 0.0 {
        return Err(Error::UndefinedAzimuth);
    }
    Ok((p.z / p.x.hypot(p.y)).atan())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Continuous column coordinate.
    pub u: f64,
    /// Continuous row coordinate.
    pub v: f64,
    /// Quantized column, already wrapped into `[0, W)`.
    pub col: usize,
    /// Quantized row before any clamping.
    pub row: i64,
    pub in_fov: bool,
}

/// Fraction of the panorama swept from azimuth `pi` down to `theta`; the
/// column is this fraction times the width. Keeping the width multiplication
/// last makes columns at width `2W` an exact refinement of columns at `W`.
#[inline]
pub(crate) fn azimuth_fraction(theta: f64) -> f64 {
    0.5 * (1.0 - theta / PI)
}

#[inline]
pub(crate) fn row_coordinate(p: &Point, d: f64, spec: &SensorSpec) -> f64 {
    (1.0 - ((p.z / d).asin() + spec.fov_down()) / spec.fov_total()) * spec.height() as f64
}

#[inline]
fn quantize(x: f64) -> i64 {
    match QUANTIZATION {
        Quantization::Floor => x.floor() as i64,
    }
}

pub fn project_point(p: &Point, spec: &SensorSpec) -> Result<Projection> {
    let d = depth(p);
    if d == 0.0 {
        return Err(Error::UndefinedProjection);
    }
    let u = azimuth_fraction(p.y.atan2(p.x)) * spec.width() as f64;
    let v = row_coordinate(p, d, spec);
    let row = quantize(v);
    Ok(Projection {
        u,
        v,
        col: quantize(u).rem_euclid(spec.width() as i64) as usize,
        row,
        in_fov: row >= 0 && row < spec.height() as i64,
    })
}

/// Grid location of a point as produced by a column rule; `None` means the
/// point cannot be projected.
pub(crate) type Locator<'a> = dyn Fn(&Point) -> Option<(i64, usize)> + 'a;

fn clamp_row(row: i64, height: usize) -> usize {
    row.clamp(0, height as i64 - 1) as usize
}

/// Rasterization shared by the full-scan and per-view paths. `fallback` is
/// the transfer grid given to points the locator rejects.
pub(crate) fn rasterize_with(
    cloud: &PointCloud,
    height: usize,
    width: usize,
    locate: &Locator<'_>,
    fallback: GridIndex,
) -> RangeImage {
    let hw = height * width;
    let mut occupants = vec![Occupant::Empty; hw];
    let mut best_depth = vec![f64::INFINITY; hw];
    let mut point_slots = Vec::with_capacity(cloud.len());
    let mut displaced = Vec::new();
    let mut out_of_fov = 0;
    let mut origin_points = 0;

    for (i, p) in cloud.points.iter().enumerate() {
        let Some((row, col)) = locate(p) else {
            origin_points += 1;
            out_of_fov += 1;
            point_slots.push(PointSlot::OutOfFov { nearest: fallback });
            continue;
        };
        if row < 0 || row >= height as i64 {
            out_of_fov += 1;
            point_slots.push(PointSlot::OutOfFov {
                nearest: GridIndex {
                    row: clamp_row(row, height),
                    col,
                },
            });
            continue;
        }
        let g = GridIndex {
            row: row as usize,
            col,
        };
        point_slots.push(PointSlot::Grid(g));
        let flat = g.row * width + g.col;
        let d = depth(p);
        match occupants[flat] {
            Occupant::Empty => {
                occupants[flat] = Occupant::Point(i);
                best_depth[flat] = d;
            }
            Occupant::Point(prev) => {
                if d < best_depth[flat] {
                    displaced.push(prev);
                    occupants[flat] = Occupant::Point(i);
                    best_depth[flat] = d;
                } else {
                    displaced.push(i);
                }
            }
        }
    }
    displaced.sort_unstable();

    let mut channels = vec![0.0f32; NUM_CHANNELS * hw];
    let mut labels = cloud.labels.as_ref().map(|_| vec![crate::types::IGNORE_ID; hw]);
    for (flat, occ) in occupants.iter().enumerate() {
        let Occupant::Point(i) = *occ else { continue };
        let p = &cloud.points[i];
        let values = [p.x, p.y, p.z, best_depth[flat], p.intensity, 1.0];
        for (c, v) in values.into_iter().enumerate() {
            channels[c * hw + flat] = v as f32;
        }
        if let (Some(dst), Some(src)) = (labels.as_mut(), cloud.labels.as_ref()) {
            dst[flat] = src[i];
        }
    }
    debug_assert_eq!(Channel::Existence as usize, NUM_CHANNELS - 1);

    RangeImage {
        grid: RangeGrid::from_parts(height, width, channels, labels).expect("sizes consistent"),
        point_slots,
        occupants,
        displaced,
        out_of_fov,
        origin_points,
    }
}

/// Transfer grid for points at the origin: the grid a point straight ahead
/// on the horizon (azimuth 0, inclination 0) would occupy.
pub(crate) fn origin_fallback(spec: &SensorSpec, width: usize, col_of: impl Fn(f64) -> usize) -> GridIndex {
    let ahead = Point::new(1.0, 0.0, 0.0, 0.0);
    GridIndex {
        row: clamp_row(quantize(row_coordinate(&ahead, 1.0, spec)), spec.height()),
        col: col_of(0.0).min(width - 1),
    }
}

/// Projects every point of `cloud` onto the full-scan grid of `spec`.
///
/// Points at the sensor origin cannot be projected; they are counted as out
/// of view (see [`RangeImage::origin_count`]) rather than failing the scan.
pub fn rasterize(cloud: &PointCloud, spec: &SensorSpec) -> Result<RangeImage> {
    cloud.ensure_valid()?;
    let locate = |p: &Point| project_point(p, spec).ok().map(|pr| (pr.row, pr.col));
    let w = spec.width();
    let fallback = origin_fallback(spec, w, |theta| {
        quantize(azimuth_fraction(theta) * w as f64).rem_euclid(w as i64) as usize
    });
    Ok(rasterize_with(cloud, spec.height(), w, &locate, fallback))
}

/// Labels every point with the grid label of its (row-clamped) projection.
pub fn unproject(img: &RangeImage, grid_labels: &[ClassId]) -> Result<Vec<ClassId>> {
    check_grid_len(img, grid_labels.len())?;
    let w = img.width();
    Ok(img
        .point_slots
        .iter()
        .map(|s| {
            let g = s.transfer_grid();
            grid_labels[g.row * w + g.col]
        })
        .collect())
}

pub(crate) fn check_grid_len(img: &RangeImage, len: usize) -> Result<()> {
    if len != img.height() * img.width() {
        return Err(Error::ShapeMismatch {
            expected_h: img.height(),
            expected_w: img.width(),
            found_h: len / img.width().max(1),
            found_w: img.width(),
        });
    }
    Ok(())
}
