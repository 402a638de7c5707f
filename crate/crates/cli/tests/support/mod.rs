#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rangeview::io::{write_labels, write_scan};
use rangeview::{Point, PointCloud};

pub const TINY_MODEL: &str = "classes = 20\nembed = 8, 16, 16\nchannels = 16, 16, 24, 32\n\
heads = 1, 2, 3, 2\ndepths = 1, 1, 1, 1\nreductions = 4, 2, 2, 1\nmlp_ratio = 2\ndecode = 16\n";

pub const TAXONOMY: &str = "names = unlabeled, car, person, road, building\nignore = 0\nthings = 1, 2\nstuff = 3, 4\n";

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rangeview"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value of `key` in `key=value` stdout.
pub fn value(o: &Output, key: &str) -> Option<String> {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
}

/// Scan-like cloud with labels in `1..classes` and instance ids for
/// classes 1 and 2.
pub fn cloud(seed: u64, n: usize, classes: u32) -> PointCloud {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    let mut sem = Vec::with_capacity(n);
    let mut inst = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = r.random_range(-PI..PI);
        let phi = r.random_range(-24.0f64..2.0).to_radians();
        let d = r.random_range(2.0..50.0);
        pts.push(Point::new(
            d * phi.cos() * theta.cos(),
            d * phi.cos() * theta.sin(),
            d * phi.sin(),
            r.random::<f64>(),
        ));
        let s = 1 + ((theta + PI) / (PI / 4.0)) as u32 % (classes - 1);
        sem.push(s);
        inst.push(if s <= 2 { 1 + (d / 10.0) as u32 } else { 0 });
    }
    PointCloud::new(pts).with_labels(sem).with_instances(inst)
}

pub fn write_cloud(dir: &Path, stem: &str, c: &PointCloud) {
    write_scan(dir.join(format!("{stem}.bin")), c).unwrap();
    write_labels(
        dir.join(format!("{stem}.label")),
        c.labels.as_ref().unwrap(),
        c.instances.as_deref(),
    )
    .unwrap();
}

/// Every file in `dir`, sorted, with its bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}
