//! Grid fill versus point retention across raster widths.

use crate::error::Result;
use crate::raster::rasterize;
use crate::types::{PointCloud, SensorSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccupancyRow {
    pub width: usize,
    pub occupied: usize,
    pub points: usize,
    /// Occupied grids over `H * W`.
    pub grid_fill: f64,
    /// Grid winners over all points; out-of-view points are not retained.
    pub point_retention: f64,
}

pub fn occupancy_point(cloud: &PointCloud, spec: &SensorSpec) -> Result<OccupancyRow> {
    let img = rasterize(cloud, spec)?;
    let occupied = img.occupied_count();
    let n = cloud.len();
    Ok(OccupancyRow {
        width: spec.width(),
        occupied,
        points: n,
        grid_fill: occupied as f64 / spec.grid_count() as f64,
        point_retention: if n == 0 { 0.0 } else { occupied as f64 / n as f64 },
    })
}

/// One row per width, at the height and field of view of `spec`.
pub fn occupancy_curve(cloud: &PointCloud, spec: &SensorSpec, widths: &[usize]) -> Result<Vec<OccupancyRow>> {
    widths
        .iter()
        .map(|&w| occupancy_point(cloud, &spec.with_width(w)?))
        .collect()
}

/// Widths `w, 2w, 4w, ...` not exceeding `max`.
pub fn dyadic_widths(start: usize, max: usize) -> Vec<usize> {
    std::iter::successors(Some(start), |w| w.checked_mul(2))
        .take_while(|&w| w <= max && start > 0)
        .collect()
}

/// First consecutive pair of rows where `grid_fill - point_retention`
/// changes sign (a zero counts as a change unless both ends are zero).
/// Returns the pair's widths.
pub fn find_crossover(table: &[OccupancyRow]) -> Option<(usize, usize)> {
    table.windows(2).find_map(|w| {
        let a = w[0].grid_fill - w[0].point_retention;
        let b = w[1].grid_fill - w[1].point_retention;
        (a * b <= 0.0 && !(a == 0.0 && b == 0.0)).then_some((w[0].width, w[1].width))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point;

    fn row(width: usize, fill: f64, ret: f64) -> OccupancyRow {
        OccupancyRow {
            width,
            occupied: 0,
            points: 0,
            grid_fill: fill,
            point_retention: ret,
        }
    }

    #[test]
    fn single_point() {
        let spec = SensorSpec::new(3.0, 25.0, 4, 8).unwrap();
        let r = occupancy_point(&PointCloud::new(vec![Point::new(5.0, 1.0, -0.5, 0.0)]), &spec).unwrap();
        assert_eq!((r.grid_fill, r.point_retention), (1.0 / 32.0, 1.0));
    }

    #[test]
    fn shared_grid() {
        let spec = SensorSpec::new(3.0, 25.0, 4, 8).unwrap();
        let pts = (1..=4).map(|d| Point::new(d as f64, 0.0, -0.1 * d as f64, 0.0)).collect();
        let r = occupancy_point(&PointCloud::new(pts), &spec).unwrap();
        assert_eq!(r.point_retention, 0.25);
    }

    #[test]
    fn crossover_cases() {
        let never = [row(1, 0.1, 0.5), row(2, 0.2, 0.6), row(4, 0.3, 0.9)];
        assert_eq!(find_crossover(&never), None);
        let crosses = [row(1, 0.1, 0.5), row(2, 0.2, 0.6), row(4, 0.8, 0.7)];
        assert_eq!(find_crossover(&crosses), Some((2, 4)));
        assert_eq!(find_crossover(&crosses[..1]), None);
    }

    #[test]
    fn dyadic_chain() {
        assert_eq!(dyadic_widths(256, 2048), vec![256, 512, 1024, 2048]);
        assert_eq!(dyadic_widths(0, 8), Vec::<usize>::new());
    }
}
