//! Feature maps, parameters and a bounds-checked matrix product.

use crate::error::{Error, Result};

/// Token-major feature map: value `(row, col, ch)` lives at
/// `(row * w + col) * c + ch`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        FeatureMap {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_data(h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::Tensor(format!(
                "{} values cannot fill a {h}x{w}x{c} map",
                data.len()
            )));
        }
        Ok(FeatureMap { h, w, c, data })
    }

    /// From a channel-major `(c, h, w)` buffer.
    pub fn from_channel_major(h: usize, w: usize, c: usize, planes: &[f32]) -> Result<Self> {
        if planes.len() != h * w * c {
            return Err(Error::Tensor(format!(
                "{} values cannot fill a {c}x{h}x{w} tensor",
                planes.len()
            )));
        }
        let hw = h * w;
        let mut data = vec![0.0; hw * c];
        for ch in 0..c {
            for t in 0..hw {
                data[t * c + ch] = planes[ch * hw + t];
            }
        }
        Ok(FeatureMap { h, w, c, data })
    }

    /// Channel-major `(c, h, w)` copy.
    pub fn to_channel_major(&self) -> Vec<f32> {
        let hw = self.h * self.w;
        let mut out = vec![0.0; hw * self.c];
        for t in 0..hw {
            for ch in 0..self.c {
                out[ch * hw + t] = self.data[t * self.c + ch];
            }
        }
        out
    }

    pub fn tokens(&self) -> usize {
        self.h * self.w
    }

    pub fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.w + col) * self.c + ch]
    }

    pub fn token(&self, t: usize) -> &[f32] {
        &self.data[t * self.c..(t + 1) * self.c]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub init: Init,
}

impl Param {
    pub fn new(shape: Vec<usize>, init: Init) -> Self {
        let n = shape.iter().product();
        let fill = if init == Init::Ones { 1.0 } else { 0.0 };
        Param {
            shape,
            data: vec![fill; n],
            init,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Strided view of a matrix inside a slice.
#[derive(Clone, Copy, Debug)]
pub struct Mat {
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl Mat {
    pub fn rows(offset: usize, row_stride: usize) -> Self {
        Mat {
            offset,
            row_stride,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `row_stride`.
    pub fn transposed(offset: usize, row_stride: usize) -> Self {
        Mat {
            offset,
            row_stride: 1,
            col_stride: row_stride,
        }
    }

    fn last_index(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// `c = a * b + beta * c` for an `m x k` times `k x n` product.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    av: Mat,
    b: &[f32],
    bv: Mat,
    beta: f32,
    c: &mut [f32],
    cv: Mat,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(cv.last_index(m, n) < c.len(), "gemm output out of bounds");
    if k > 0 {
        assert!(av.last_index(m, k) < a.len(), "gemm lhs out of bounds");
        assert!(bv.last_index(k, n) < b.len(), "gemm rhs out of bounds");
    }
    // SAFETY: every index touched lies within the slices (checked above), and
    // `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(av.offset),
            av.row_stride as isize,
            av.col_stride as isize,
            b.as_ptr().add(bv.offset),
            bv.row_stride as isize,
            bv.col_stride as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.row_stride as isize,
            cv.col_stride as isize,
        );
    }
}
