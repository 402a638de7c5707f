//! Direct transcription of the CommonAug listing. The scan is an `m x 4`
//! array of `[x, y, z, intensity]` rows; numpy's samplers are spelled out
//! over the same random source the library uses.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

pub type Scan = Vec<[f64; 4]>;

pub struct Np<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> Np<'_, R> {
    #[allow(non_snake_case)]
    pub fn RAND(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    #[allow(non_snake_case)]
    pub fn UNIF(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.RAND()
    }

    #[allow(non_snake_case)]
    pub fn NORM(&mut self, loc: f64, scale: f64, size: usize) -> Vec<f64> {
        (0..size)
            .map(|_| {
                let z: f64 = self.0.sample(StandardNormal);
                loc + scale * z
            })
            .collect()
    }

    #[allow(non_snake_case)]
    pub fn RINT(&mut self, low: usize, high: usize, size: usize) -> Vec<usize> {
        (0..size).map(|_| self.0.random_range(low..high)).collect()
    }
}

fn deg2rad(d: f64) -> f64 {
    d * (PI / 180.0)
}

/// `UNIF(1, r_s)` read as a draw between 1 and `1 + r_s`.
pub fn random_scaling<R: Rng>(mut scan: Scan, r_s: f64, np: &mut Np<R>) -> Scan {
    let mut scale = np.UNIF(1.0, 1.0 + r_s);
    if np.RAND() < 0.5 {
        scale = 1.0 / scale;
    }
    for row in &mut scan {
        row[0] *= scale;
    }
    for row in &mut scan {
        row[1] *= scale;
    }
    scan
}

pub fn global_rotation<R: Rng>(mut scan: Scan, np: &mut Np<R>) -> Scan {
    let rotate_rad = deg2rad(np.RAND() * 360.0);
    let (c, s) = (rotate_rad.cos(), rotate_rad.sin());
    let j = [[c, s], [-s, c]];
    for row in &mut scan {
        let (x, y) = (row[0], row[1]);
        row[0] = x * j[0][0] + y * j[1][0];
        row[1] = x * j[0][1] + y * j[1][1];
    }
    scan
}

/// The jitter has three components and moves x, y and z.
pub fn random_jittering<R: Rng>(mut scan: Scan, r_j: f64, np: &mut Np<R>) -> Scan {
    let jitter: Vec<f64> = np
        .NORM(0.0, r_j, 3)
        .into_iter()
        .map(|v| v.max(-3.0 * r_j).min(3.0 * r_j))
        .collect();
    for row in &mut scan {
        for k in 0..3 {
            row[k] += jitter[k];
        }
    }
    scan
}

pub fn random_flipping<R: Rng>(mut scan: Scan, np: &mut Np<R>) -> Scan {
    let flip_type = np.RINT(0, 4, 1)[0];
    if flip_type == 1 {
        for row in &mut scan {
            row[0] = -row[0];
        }
    } else if flip_type == 2 {
        for row in &mut scan {
            row[1] = -row[1];
        }
    } else if flip_type == 3 {
        for row in &mut scan {
            row[0] = -row[0];
            row[1] = -row[1];
        }
    }
    scan
}

/// numpy rejects `randint(0, 0)`; a zero drop budget returns the scan as is.
pub fn random_dropping<R: Rng>(scan: Scan, label: Vec<u32>, r_d: f64, np: &mut Np<R>) -> (Scan, Vec<u32>) {
    let drop = (scan.len() as f64 * r_d) as usize;
    if drop == 0 {
        return (scan, label);
    }
    let drop = np.RINT(0, drop, 1)[0];
    let mut to_drop = np.RINT(0, scan.len() - 1, drop);
    to_drop.sort_unstable();
    to_drop.dedup();
    let keep = |i: &usize| to_drop.binary_search(i).is_err();
    let scan = scan.iter().enumerate().filter(|(i, _)| keep(i)).map(|(_, r)| *r).collect();
    let label = label.iter().enumerate().filter(|(i, _)| keep(i)).map(|(_, l)| *l).collect();
    (scan, label)
}

pub fn common_aug<R: Rng>(scan: Scan, label: Vec<u32>, r_s: f64, r_j: f64, r_d: f64, np: &mut Np<R>) -> (Scan, Vec<u32>) {
    let scan = random_scaling(scan, r_s, np);
    let scan = global_rotation(scan, np);
    let scan = random_jittering(scan, r_j, np);
    let scan = random_flipping(scan, np);
    random_dropping(scan, label, r_d, np)
}

pub fn to_scan(cloud: &rangeview::PointCloud) -> Scan {
    cloud.points.iter().map(|p| [p.x, p.y, p.z, p.intensity]).collect()
}
