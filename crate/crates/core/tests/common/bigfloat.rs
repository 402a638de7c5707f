//! Arbitrary-precision reference for the spherical projection.

use astro_float::{BigFloat, Consts, RoundingMode};

const P: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct ProjectionOracle {
    cc: Consts,
    pi: BigFloat,
}

fn big(v: f64) -> BigFloat {
    BigFloat::from_f64(v, P)
}

pub fn to_f64(b: &BigFloat) -> f64 {
    b.to_string().parse().expect("decimal rendering parses")
}

impl ProjectionOracle {
    pub fn new() -> Self {
        let mut cc = Consts::new().expect("constants cache");
        let pi = cc.pi(P, RM);
        ProjectionOracle { cc, pi }
    }

    /// Four-quadrant arctangent built from the one-argument arctangent.
    pub fn atan2(&mut self, y: f64, x: f64) -> BigFloat {
        let (by, bx) = (big(y), big(x));
        if x == 0.0 {
            let half = self.pi.div(&big(2.0), P, RM);
            return if y > 0.0 { half } else { half.neg() };
        }
        let base = by.div(&bx, P, RM).atan(P, RM, &mut self.cc);
        if x > 0.0 {
            base
        } else if y >= 0.0 {
            base.add(&self.pi, P, RM)
        } else {
            base.sub(&self.pi, P, RM)
        }
    }

    fn radians(&self, deg: f64) -> BigFloat {
        big(deg).mul(&self.pi, P, RM).div(&big(180.0), P, RM)
    }

    /// Continuous `(u, v)` before quantization.
    #[allow(clippy::too_many_arguments)]
    pub fn project(&mut self, x: f64, y: f64, z: f64, fov_up_deg: f64, fov_down_deg: f64, h: usize, w: usize) -> (f64, f64) {
        let one = big(1.0);
        let theta = self.atan2(y, x);
        let u = one
            .sub(&theta.div(&self.pi, P, RM), P, RM)
            .mul(&big(0.5), P, RM)
            .mul(&big(w as f64), P, RM);

        let (bx, by, bz) = (big(x), big(y), big(z));
        let d2 = bx
            .mul(&bx, P, RM)
            .add(&by.mul(&by, P, RM), P, RM)
            .add(&bz.mul(&bz, P, RM), P, RM);
        let d = d2.sqrt(P, RM);
        let phi = bz.div(&d, P, RM).asin(P, RM, &mut self.cc);
        let down = self.radians(fov_down_deg);
        let total = self.radians(fov_up_deg).add(&down, P, RM);
        let v = one
            .sub(&phi.add(&down, P, RM).div(&total, P, RM), P, RM)
            .mul(&big(h as f64), P, RM);
        (to_f64(&u), to_f64(&v))
    }
}
