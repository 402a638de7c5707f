//! Synthetic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeview::{Point, PointCloud};

/// A scan-like cloud: `n` points on noisy rings around the sensor, labeled.
pub fn synthetic_scan(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let r = rng.random_range(2.0..60.0);
        let z = rng.random_range(-0.4..0.05) * r;
        pts.push(Point::new(r * theta.cos(), r * theta.sin(), z, rng.random::<f64>()));
        labels.push(rng.random_range(1..20));
    }
    PointCloud::new(pts).with_labels(labels)
}
