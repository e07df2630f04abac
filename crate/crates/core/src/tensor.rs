//! Dense containers in the layouts the kernels index directly.
//!
//! Feature maps and depthwise filters are stored channel-innermost (HWC), so
//! any four consecutive channels of one pixel form a contiguous vector load.
//! Matrices are row-major. Because the channel axis is innermost, flattening an
//! `H x W x C` feature map into a `(H*W) x C` matrix leaves the flat data
//! untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ConvError, Result};

/// How to populate a freshly allocated container.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Zeros,
    Constant(f32),
    /// `0, 1, 2, ...` in flat storage order.
    Sequential,
    /// Uniform in `[-1, 1)` from a ChaCha8 stream; identical for identical seeds.
    Random(u64),
}

impl Fill {
    fn materialize(self, len: usize) -> Vec<f32> {
        match self {
            Fill::Zeros => vec![0.0; len],
            Fill::Constant(v) => vec![v; len],
            Fill::Sequential => (0..len).map(|i| i as f32).collect(),
            Fill::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
            }
        }
    }
}

fn check_dims(dims: &[(&'static str, usize)]) -> Result<usize> {
    let mut len = 1usize;
    for &(name, d) in dims {
        if d == 0 {
            return Err(ConvError::ZeroDimension(name));
        }
        len = len
            .checked_mul(d)
            .ok_or_else(|| ConvError::ShapeMismatch(format!("{name} overflows element count")))?;
    }
    Ok(len)
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(ConvError::DataLength { expected, actual });
    }
    Ok(())
}

/// A 3-d feature map of `height x width x channels`, channel-innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, fill: Fill) -> Result<Self> {
        let len = check_dims(&[("height", height), ("width", width), ("channels", channels)])?;
        Ok(Self {
            height,
            width,
            channels,
            data: fill.materialize(len),
        })
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let len = check_dims(&[("height", height), ("width", width), ("channels", channels)])?;
        check_len(len, data.len())?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn offset(&self, h: usize, w: usize, c: usize) -> usize {
        debug_assert!(h < self.height && w < self.width && c < self.channels);
        (h * self.width + w) * self.channels + c
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.offset(h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f32) {
        let at = self.offset(h, w, c);
        self.data[at] = v;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Copies the feature map into a `(H*W) x C` matrix.
    pub fn to_matrix(&self) -> Matrix {
        self.clone().into_matrix()
    }

    /// Reinterprets the feature map as a `(H*W) x C` matrix without copying.
    pub fn into_matrix(self) -> Matrix {
        Matrix {
            rows: self.height * self.width,
            cols: self.channels,
            data: self.data,
        }
    }

    pub fn scaled(&self, alpha: f32) -> Tensor3 {
        Tensor3 {
            data: self.data.iter().map(|x| x * alpha).collect(),
            ..*self
        }
    }
}

/// Flattens a feature map into its `G x C` matrix view (`G = H*W`).
pub fn reshape_to_matrix(t: &Tensor3) -> Matrix {
    t.to_matrix()
}

/// Depthwise filter of `fh x fw x channels`, channel-innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct DwFilter {
    fh: usize,
    fw: usize,
    channels: usize,
    data: Vec<f32>,
}

impl DwFilter {
    pub fn new(fh: usize, fw: usize, channels: usize, fill: Fill) -> Result<Self> {
        let len = check_dims(&[("fh", fh), ("fw", fw), ("channels", channels)])?;
        Ok(Self {
            fh,
            fw,
            channels,
            data: fill.materialize(len),
        })
    }

    pub fn from_vec(fh: usize, fw: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let len = check_dims(&[("fh", fh), ("fw", fw), ("channels", channels)])?;
        check_len(len, data.len())?;
        Ok(Self { fh, fw, channels, data })
    }

    pub fn fh(&self) -> usize {
        self.fh
    }

    pub fn fw(&self) -> usize {
        self.fw
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of taps per channel (`fh * fw`).
    pub fn taps(&self) -> usize {
        self.fh * self.fw
    }

    #[inline]
    pub fn offset(&self, n: usize, m: usize, c: usize) -> usize {
        debug_assert!(n < self.fh && m < self.fw && c < self.channels);
        (n * self.fw + m) * self.channels + c
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize, c: usize) -> f32 {
        self.data[self.offset(n, m, c)]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Row-major 2-d matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, fill: Fill) -> Result<Self> {
        let len = check_dims(&[("rows", rows), ("cols", cols)])?;
        Ok(Self {
            rows,
            cols,
            data: fill.materialize(len),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let len = check_dims(&[("rows", rows), ("cols", cols)])?;
        check_len(len, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::new(n, n, Fill::Zeros)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets a `(height*width) x C` matrix as an `height x width x C` feature map.
    pub fn into_tensor(self, height: usize, width: usize) -> Result<Tensor3> {
        if height.checked_mul(width) != Some(self.rows) {
            return Err(ConvError::ShapeMismatch(format!(
                "cannot reshape {} rows into {height}x{width}",
                self.rows
            )));
        }
        Tensor3::from_vec(height, width, self.cols, self.data)
    }
}

/// Valid-mode (unpadded) convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub h_i: usize,
    pub w_i: usize,
    pub channels: usize,
    pub h_f: usize,
    pub w_f: usize,
    pub stride: usize,
    pub h_o: usize,
    pub w_o: usize,
}

impl ConvGeometry {
    pub fn new(h_i: usize, w_i: usize, channels: usize, h_f: usize, w_f: usize, stride: usize) -> Result<Self> {
        check_dims(&[
            ("h_i", h_i),
            ("w_i", w_i),
            ("channels", channels),
            ("h_f", h_f),
            ("w_f", w_f),
        ])?;
        if stride == 0 {
            return Err(ConvError::Geometry("stride must be at least 1".into()));
        }
        if h_i < h_f || w_i < w_f {
            return Err(ConvError::Geometry(format!(
                "input {h_i}x{w_i} is smaller than filter {h_f}x{w_f}"
            )));
        }
        if !(h_i - h_f).is_multiple_of(stride) || !(w_i - w_f).is_multiple_of(stride) {
            return Err(ConvError::Geometry(format!(
                "input {h_i}x{w_i} minus filter {h_f}x{w_f} is not divisible by stride {stride}"
            )));
        }
        Ok(Self {
            h_i,
            w_i,
            channels,
            h_f,
            w_f,
            stride,
            h_o: (h_i - h_f) / stride + 1,
            w_o: (w_i - w_f) / stride + 1,
        })
    }

    /// Geometry of a depthwise convolution, checking that channel counts agree.
    pub fn depthwise(input: &Tensor3, filter: &DwFilter, stride: usize) -> Result<Self> {
        if input.channels() != filter.channels() {
            return Err(ConvError::ShapeMismatch(format!(
                "input has {} channels but filter has {}",
                input.channels(),
                filter.channels()
            )));
        }
        Self::new(
            input.height(),
            input.width(),
            input.channels(),
            filter.fh(),
            filter.fw(),
            stride,
        )
    }
}

/// Anything backed by a flat `f32` buffer with a comparable shape.
pub trait DenseData {
    fn shape(&self) -> Vec<usize>;
    fn values(&self) -> &[f32];
}

impl DenseData for Tensor3 {
    fn shape(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }

    fn values(&self) -> &[f32] {
        &self.data
    }
}

impl DenseData for Matrix {
    fn shape(&self) -> Vec<usize> {
        vec![self.rows, self.cols]
    }

    fn values(&self) -> &[f32] {
        &self.data
    }
}

const REL_DIFF_FLOOR: f64 = 1e-30;

/// Largest element-wise `|a - b| / max(|a|, |b|, 1e-30)`.
///
/// Returns `+inf` when any pair differs through a NaN or infinity.
pub fn max_rel_diff<T: DenseData>(a: &T, b: &T) -> Result<f64> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(ConvError::ShapeMismatch(format!("{sa:?} vs {sb:?}")));
    }
    let mut worst = 0.0f64;
    for (&x, &y) in a.values().iter().zip(b.values()) {
        if x == y {
            continue;
        }
        let (x, y) = (x as f64, y as f64);
        let d = (x - y).abs() / x.abs().max(y.abs()).max(REL_DIFF_FLOOR);
        if !d.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(d);
    }
    Ok(worst)
}
