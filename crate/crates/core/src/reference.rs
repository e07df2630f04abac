//! Scalar, single-threaded oracles. Every optimized kernel is accepted only by
//! agreement with these.
//!
//! Accumulation order is fixed so the results are bit-reproducible:
//! depthwise sums run over `(n, m)` row-major, matrix products over `k`
//! ascending.

use crate::error::{ConvError, Result};
use crate::tensor::{ConvGeometry, DwFilter, Fill, Matrix, Tensor3};

/// Direct depthwise convolution, loop order `l, k, i, n, m`.
pub fn dwconv_naive(input: &Tensor3, filter: &DwFilter, stride: usize) -> Result<Tensor3> {
    let g = ConvGeometry::depthwise(input, filter, stride)?;
    let mut out = Tensor3::new(g.h_o, g.w_o, g.channels, Fill::Zeros)?;
    for l in 0..g.h_o {
        for k in 0..g.w_o {
            for i in 0..g.channels {
                let mut acc = 0.0f32;
                for n in 0..g.h_f {
                    for m in 0..g.w_f {
                        acc += input.get(l * stride + n, k * stride + m, i) * filter.get(n, m, i);
                    }
                }
                out.set(l, k, i, acc);
            }
        }
    }
    Ok(out)
}

/// Triple-loop product in `i, k, j` order.
pub fn mm_naive(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(ConvError::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (rows, inner, cols) = (a.rows(), a.cols(), b.cols());
    let mut d = Matrix::new(rows, cols, Fill::Zeros)?;
    let (av, bv) = (a.as_slice(), b.as_slice());
    let dv = d.as_mut_slice();
    for i in 0..rows {
        let drow = &mut dv[i * cols..(i + 1) * cols];
        for k in 0..inner {
            let aik = av[i * inner + k];
            let brow = &bv[k * cols..(k + 1) * cols];
            for (dj, &bkj) in drow.iter_mut().zip(brow) {
                *dj += aik * bkj;
            }
        }
    }
    Ok(d)
}

/// Direct 1x1 convolution: `O[h, w, j] = sum_i I[h, w, i] * F[i, j]`.
pub fn pwconv_naive(input: &Tensor3, filter: &Matrix) -> Result<Tensor3> {
    let (h, w, c_i) = input.dims();
    if filter.rows() != c_i {
        return Err(ConvError::ShapeMismatch(format!(
            "input has {c_i} channels but filter has {} rows",
            filter.rows()
        )));
    }
    let c_o = filter.cols();
    let mut out = Tensor3::new(h, w, c_o, Fill::Zeros)?;
    for y in 0..h {
        for x in 0..w {
            for i in 0..c_i {
                let v = input.get(y, x, i);
                for j in 0..c_o {
                    let at = out.offset(y, x, j);
                    out.as_mut_slice()[at] += v * filter.get(i, j);
                }
            }
        }
    }
    Ok(out)
}
