//! Synthetic scans.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeview::{ClassId, Point, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Class of a point from its azimuth sector and height band, so labels are
/// spatially coherent the way real scans are.
pub fn coherent_label(p: &Point, classes: u32) -> ClassId {
    let sector = ((p.y.atan2(p.x) + PI) / (PI / 6.0)).floor() as i64;
    let band = (p.z * 2.0).floor() as i64;
    1 + (sector + band).rem_euclid(classes as i64 - 1) as ClassId
}

/// Points on random rays: azimuth uniform, range in `[1, 80)` m, inclination
/// in `[-30, 8)` degrees, which overshoots a 3/25 degree field of view on
/// both sides. Labels are coherent with 10% noise.
pub fn scan_like<R: Rng>(rng: &mut R, n: usize, classes: u32) -> PointCloud {
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = rng.random_range(-PI..PI);
        let phi = rng.random_range(-30f64..8.0).to_radians();
        let r = rng.random_range(1.0..80.0);
        let p = Point::new(
            r * phi.cos() * theta.cos(),
            r * phi.cos() * theta.sin(),
            r * phi.sin(),
            rng.random::<f64>(),
        );
        let l = if rng.random::<f64>() < 0.1 {
            rng.random_range(0..classes)
        } else {
            coherent_label(&p, classes)
        };
        pts.push(p);
        labels.push(l);
    }
    PointCloud::new(pts).with_labels(labels)
}

/// Uniform points in a box around the sensor.
pub fn uniform_box<R: Rng>(rng: &mut R, n: usize) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-4.0..2.0),
                rng.random::<f64>(),
            )
        })
        .collect();
    PointCloud::new(pts)
}

/// Scan-like cloud whose inclinations stay inside a 3/25 degree field of
/// view, dense enough that many points share grids.
pub fn dense_in_fov<R: Rng>(rng: &mut R, n: usize, classes: u32) -> PointCloud {
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = rng.random_range(-PI..PI);
        let phi = rng.random_range(-24.5f64..2.5).to_radians();
        let r = rng.random_range(2.0..60.0);
        let p = Point::new(
            r * phi.cos() * theta.cos(),
            r * phi.cos() * theta.sin(),
            r * phi.sin(),
            0.5,
        );
        let l = if rng.random::<f64>() < 0.2 {
            rng.random_range(1..classes)
        } else {
            coherent_label(&p, classes)
        };
        pts.push(p);
        labels.push(l);
    }
    PointCloud::new(pts).with_labels(labels)
}

/// Fraction of positions where `pred` equals `gt`.
pub fn accuracy(pred: &[ClassId], gt: &[ClassId]) -> f64 {
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    hits as f64 / gt.len().max(1) as f64
}
