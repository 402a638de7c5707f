//! Error maps as binary PPM images: correct predictions gray, wrong ones
//! red, everything else black.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::depth;
use crate::types::{ClassId, PointCloud, RangeGrid};

pub const GRAY: [u8; 3] = [128, 128, 128];
pub const RED: [u8; 3] = [200, 30, 30];
pub const BLACK: [u8; 3] = [0, 0, 0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn black(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![BLACK; width * height],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn count(&self, color: [u8; 3]) -> usize {
        self.pixels.iter().filter(|&&p| p == color).count()
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

fn check_lengths(n: usize, pred: &[ClassId], gt: &[ClassId]) -> Result<()> {
    for (what, len) in [("predictions", pred.len()), ("ground truth", gt.len())] {
        if len != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    Ok(())
}

/// Pixel `(row, col)` of a point in a `px x px` top-down view covering
/// `extent_m` meters on each side, centered on the sensor. Rows grow toward
/// negative y, columns toward positive x.
pub fn bev_pixel(x: f64, y: f64, extent_m: f64, px: usize) -> Option<(usize, usize)> {
    let half = extent_m / 2.0;
    let col = ((x + half) / extent_m * px as f64).floor();
    let row = ((half - y) / extent_m * px as f64).floor();
    let inside = |v: f64| v >= 0.0 && v < px as f64;
    (inside(col) && inside(row)).then_some((row as usize, col as usize))
}

/// Bird's-eye error map. Points with ignore ground truth are skipped; when
/// several points share a pixel the one nearest the sensor decides it.
pub fn error_map_bev(
    cloud: &PointCloud,
    pred: &[ClassId],
    gt: &[ClassId],
    ignore: ClassId,
    extent_m: f64,
    px: usize,
) -> Result<Image> {
    check_lengths(cloud.len(), pred, gt)?;
    if !(extent_m > 0.0 && extent_m.is_finite()) {
        return Err(Error::out_of_range("extent", extent_m, "must be positive"));
    }
    let mut img = Image::black(px, px);
    let mut nearest = vec![f64::INFINITY; px * px];
    for (i, p) in cloud.points.iter().enumerate() {
        if gt[i] == ignore {
            continue;
        }
        let Some((r, c)) = bev_pixel(p.x, p.y, extent_m, px) else {
            continue;
        };
        let d = depth(p);
        let k = r * px + c;
        if d < nearest[k] {
            nearest[k] = d;
            img.pixels[k] = if pred[i] == gt[i] { GRAY } else { RED };
        }
    }
    Ok(img)
}

/// Range-view error map over the occupied grids of `grid`; empty grids and
/// grids with ignore ground truth stay black.
pub fn error_map_range(grid: &RangeGrid, pred: &[ClassId], gt: &[ClassId], ignore: ClassId) -> Result<Image> {
    let hw = grid.grid_count();
    if pred.len() != hw || gt.len() != hw {
        return Err(Error::ShapeMismatch {
            expected_h: grid.height(),
            expected_w: grid.width(),
            found_h: pred.len().min(gt.len()) / grid.width().max(1),
            found_w: grid.width(),
        });
    }
    let mut img = Image::black(grid.width(), grid.height());
    for g in 0..hw {
        if grid.is_occupied(g) && gt[g] != ignore {
            img.pixels[g] = if pred[g] == gt[g] { GRAY } else { RED };
        }
    }
    Ok(img)
}
