//! Pointwise convolution as a matrix product, with two register-tiled GEMMs.
//!
//! `D (G x C_o) = A (G x C_i) * B (C_i x C_o)` where `A` is the flattened
//! input feature map and `B` the flattened 1x1 filter.
//!
//! * [`mm_rtra`] keeps a `g_b x c_ib` block of `A` resident while sweeping
//!   the output columns, streaming `B` and reloading/storing the `D` block on
//!   every kernel call (the usual BLAS arrangement).
//! * [`mm_rtrd`] keeps a `g_b x c_ob` block of `D` resident across the whole
//!   reduction, streaming `A` and `B`, and writes `D` back once.
//!
//! Both parallelize over row blocks of `A`/`D` and accumulate each output
//! element over the reduction index in ascending order.

use std::ops::Range;

use crate::backend::{Backend, Operand, RegisterFile, LANES, NUM_VEC_REGS};
use crate::error::{ConvError, Result};
use crate::parallel::{check_workers, partition, run_on_chunks, KernelRun};
use crate::reference::mm_naive;
use crate::tensor::{Fill, Matrix, Tensor3};

/// GEMM tile sizes: `g_b` rows of `A`/`D`, `c_ib` reduction steps, `c_ob`
/// columns of `B`/`D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmBlocking {
    pub g_b: usize,
    pub c_ib: usize,
    pub c_ob: usize,
}

impl MmBlocking {
    pub fn new(g_b: usize, c_ib: usize, c_ob: usize) -> Self {
        Self { g_b, c_ib, c_ob }
    }

    /// The tiling used by BLAS-style libraries on 32 x 128-bit registers.
    pub const RTRA_DEFAULT: MmBlocking = MmBlocking {
        g_b: 8,
        c_ib: 8,
        c_ob: 4,
    };
    /// The tiling that fills the register file with a resident `D` block.
    pub const RTRD_DEFAULT: MmBlocking = MmBlocking {
        g_b: 8,
        c_ib: 4,
        c_ob: 8,
    };

    fn check_shape(&self) -> Result<()> {
        if self.g_b == 0 || self.c_ib == 0 || self.c_ob == 0 {
            return Err(ConvError::Blocking(format!("{self:?} has a zero dimension")));
        }
        if !self.c_ob.is_multiple_of(LANES) {
            return Err(ConvError::Blocking(format!(
                "c_ob = {} is not a multiple of {LANES}",
                self.c_ob
            )));
        }
        Ok(())
    }

    /// Registers for RTRA: resident `A` block, `D` block and one `B` row.
    pub fn rtra_registers(&self) -> usize {
        self.g_b * self.c_ib.div_ceil(LANES) + self.g_b * self.c_ob / LANES + self.c_ob / LANES
    }

    /// Registers for RTRD: resident `D` block, one broadcast `A` scalar per
    /// row and one `B` row.
    pub fn rtrd_registers(&self) -> usize {
        self.g_b * self.c_ob / LANES + self.g_b + self.c_ob / LANES
    }

    pub fn validate_for(&self, engine: Engine) -> Result<()> {
        if engine == Engine::Naive {
            return Ok(());
        }
        self.check_shape()?;
        let need = match engine {
            Engine::Rtra => self.rtra_registers(),
            _ => self.rtrd_registers(),
        };
        if need > NUM_VEC_REGS {
            return Err(ConvError::Blocking(format!(
                "{self:?} needs {need} vector registers for {engine:?} (have {NUM_VEC_REGS})"
            )));
        }
        Ok(())
    }
}

/// GEMM implementation behind [`pwconv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Naive,
    Rtra,
    Rtrd,
}

fn check_conformable(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(ConvError::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Shared driver: partitions row blocks of `D` across workers.
fn run_row_blocks<B, F>(a: &Matrix, b: &Matrix, g_b: usize, workers: usize, job: F) -> Result<KernelRun<Matrix>>
where
    B: Backend,
    F: Fn(&mut B, Range<usize>, &mut [f32]) + Sync,
{
    check_workers(workers)?;
    check_conformable(a, b)?;
    let (g, c_o) = (a.rows(), b.cols());
    let mut d = Matrix::new(g, c_o, Fill::Zeros)?;
    let ranges = partition(g.div_ceil(g_b), workers);
    let rows_in = |r: &Range<usize>| (r.end * g_b).min(g) - (r.start * g_b).min(g);
    let per_worker = run_on_chunks::<B, _>(&ranges, d.as_mut_slice(), |r| rows_in(r) * c_o, job);
    Ok(KernelRun { output: d, per_worker })
}

/// Extent of block `idx` of size `block` along an axis of length `len`.
#[inline]
fn span(idx: usize, block: usize, len: usize) -> (usize, usize) {
    let start = idx * block;
    (start, block.min(len - start))
}

/// Blocked GEMM reusing the `A` block from registers (`i'` outer, `g'`
/// parallel, `j'` inner).
pub fn mm_rtra<B: Backend>(a: &Matrix, b: &Matrix, blocking: MmBlocking, workers: usize) -> Result<KernelRun<Matrix>> {
    blocking.validate_for(Engine::Rtra)?;
    let (g, c_i, c_o) = (a.rows(), a.cols(), b.cols());
    let MmBlocking { g_b, c_ib, c_ob } = blocking;
    let a_stride = c_ib.div_ceil(LANES);
    let d_stride = c_ob / LANES;
    let reg_a = 0;
    let reg_d = g_b * a_stride;
    let reg_b = reg_d + g_b * d_stride;
    let (av, bv) = (a.as_slice(), b.as_slice());

    run_row_blocks::<B, _>(a, b, g_b, workers, |be, blocks, d| {
        let row0 = blocks.start * g_b;
        let mut regs = RegisterFile::default();
        // Row blocks never share D elements, so walking i' outermost within
        // each worker's own g' range keeps the per-element reduction order.
        for ib in 0..c_i.div_ceil(c_ib) {
            let (i0, bi) = span(ib, c_ib, c_i);
            for gb in blocks.clone() {
                let (g0, bg) = span(gb, g_b, g);
                for r in 0..bg {
                    for v in 0..bi.div_ceil(LANES) {
                        let lanes = (bi - v * LANES).min(LANES);
                        regs[reg_a + r * a_stride + v] =
                            be.load_lanes(Operand::Input, av, (g0 + r) * c_i + i0 + v * LANES, lanes);
                    }
                }
                for jb in 0..c_o.div_ceil(c_ob) {
                    let (j0, bj) = span(jb, c_ob, c_o);
                    let dvecs = bj.div_ceil(LANES);
                    let lanes_of = |v: usize| (bj - v * LANES).min(LANES);
                    let d_at = |r: usize, v: usize| (g0 + r - row0) * c_o + j0 + v * LANES;

                    for r in 0..bg {
                        for v in 0..dvecs {
                            regs[reg_d + r * d_stride + v] = be.load_lanes(Operand::Output, d, d_at(r, v), lanes_of(v));
                        }
                    }
                    for t in 0..bi {
                        for v in 0..dvecs {
                            regs[reg_b + v] =
                                be.load_lanes(Operand::Filter, bv, (i0 + t) * c_o + j0 + v * LANES, lanes_of(v));
                        }
                        for r in 0..bg {
                            let a_reg = regs[reg_a + r * a_stride + t / LANES];
                            for v in 0..dvecs {
                                let o = reg_d + r * d_stride + v;
                                regs[o] = be.fma_by_lane(a_reg, t % LANES, regs[reg_b + v], regs[o], lanes_of(v));
                            }
                        }
                    }
                    for r in 0..bg {
                        for v in 0..dvecs {
                            be.store_lanes(
                                Operand::Output,
                                d,
                                d_at(r, v),
                                regs[reg_d + r * d_stride + v],
                                lanes_of(v),
                            );
                        }
                    }
                }
            }
        }
    })
}

/// Blocked GEMM reusing the `D` block from registers (`g'` parallel outer,
/// `j'` middle, `i'` inner).
pub fn mm_rtrd<B: Backend>(a: &Matrix, b: &Matrix, blocking: MmBlocking, workers: usize) -> Result<KernelRun<Matrix>> {
    blocking.validate_for(Engine::Rtrd)?;
    let (g, c_i, c_o) = (a.rows(), a.cols(), b.cols());
    let MmBlocking { g_b, c_ib, c_ob } = blocking;
    let d_stride = c_ob / LANES;
    let reg_d = 0;
    let reg_a = g_b * d_stride;
    let reg_b = reg_a + g_b;
    let (av, bv) = (a.as_slice(), b.as_slice());
    let i_blocks = c_i.div_ceil(c_ib);

    run_row_blocks::<B, _>(a, b, g_b, workers, |be, blocks, d| {
        let row0 = blocks.start * g_b;
        let mut regs = RegisterFile::default();
        for gb in blocks {
            let (g0, bg) = span(gb, g_b, g);
            for jb in 0..c_o.div_ceil(c_ob) {
                let (j0, bj) = span(jb, c_ob, c_o);
                let dvecs = bj.div_ceil(LANES);
                let lanes_of = |v: usize| (bj - v * LANES).min(LANES);
                let d_at = |r: usize, v: usize| (g0 + r - row0) * c_o + j0 + v * LANES;

                for ib in 0..i_blocks {
                    let (i0, bi) = span(ib, c_ib, c_i);
                    if ib == 0 {
                        for r in 0..bg {
                            for v in 0..dvecs {
                                regs[reg_d + r * d_stride + v] =
                                    be.load_lanes(Operand::Output, d, d_at(r, v), lanes_of(v));
                            }
                        }
                    }
                    for t in 0..bi {
                        for v in 0..dvecs {
                            regs[reg_b + v] =
                                be.load_lanes(Operand::Filter, bv, (i0 + t) * c_o + j0 + v * LANES, lanes_of(v));
                        }
                        for r in 0..bg {
                            regs[reg_a + r] = be.broadcast(Operand::Input, av, (g0 + r) * c_i + i0 + t);
                            for v in 0..dvecs {
                                let o = reg_d + r * d_stride + v;
                                regs[o] = be.fma_lanes(regs[reg_a + r], regs[reg_b + v], regs[o], lanes_of(v));
                            }
                        }
                    }
                    if ib + 1 == i_blocks {
                        for r in 0..bg {
                            for v in 0..dvecs {
                                be.store_lanes(
                                    Operand::Output,
                                    d,
                                    d_at(r, v),
                                    regs[reg_d + r * d_stride + v],
                                    lanes_of(v),
                                );
                            }
                        }
                    }
                }
            }
        }
    })
}

/// Pointwise (1x1) convolution: flatten, multiply, unflatten.
///
/// The naive engine runs the scalar oracle single-threaded and reports no
/// traffic.
pub fn pwconv<B: Backend>(
    input: &Tensor3,
    filter: &Matrix,
    engine: Engine,
    blocking: MmBlocking,
    workers: usize,
) -> Result<KernelRun<Tensor3>> {
    let (h, w, c_i) = input.dims();
    if filter.rows() != c_i {
        return Err(ConvError::ShapeMismatch(format!(
            "input has {c_i} channels but filter has {} rows",
            filter.rows()
        )));
    }
    check_workers(workers)?;
    let a = input.to_matrix();
    let run = match engine {
        Engine::Naive => KernelRun {
            output: mm_naive(&a, filter)?,
            per_worker: Vec::new(),
        },
        Engine::Rtra => mm_rtra::<B>(&a, filter, blocking, workers)?,
        Engine::Rtrd => mm_rtrd::<B>(&a, filter, blocking, workers)?,
    };
    let KernelRun { output, per_worker } = run;
    Ok(KernelRun {
        output: output.into_tensor(h, w)?,
        per_worker,
    })
}
