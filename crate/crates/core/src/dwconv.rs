//! Optimized depthwise convolution.
//!
//! Two kernels share the [`Backend`] abstraction:
//!
//! * [`dwconv_baseline`]: the widely deployed row-parallel schedule. Workers
//!   split the output rows, the output column loop is blocked by `w_ob`, and
//!   the innermost loop walks the channels four at a time. Every FMA reloads
//!   its output vector and stores it back, so the kernel moves three vectors
//!   in and one out per FMA. Optionally one filter row is held across the
//!   `kk` loop, the best case a compiler could manage.
//! * [`dwconv_hp`]: the channel-parallel, register-tiled schedule. Workers own
//!   disjoint groups of four channels. Within a group, the `fh x fw` filter
//!   tile is loaded into the register file once and stays there while the
//!   kernel sweeps `h_ob x w_ob` output tiles. Each output tile is loaded
//!   once, receives `fh * fw` FMAs per element and is stored once.
//!
//! Both kernels accumulate every output element in `(n, m)` row-major order
//! starting from zero, the same order as the scalar oracle.

use std::ops::Range;

use crate::backend::{Backend, Operand, RegisterFile, LANES, NUM_VEC_REGS};
use crate::error::{ConvError, Result};
use crate::parallel::{check_workers, partition, run_on_chunks, run_workers, KernelRun};
use crate::tensor::{ConvGeometry, DwFilter, Fill, Tensor3};

/// Output tile shape for [`dwconv_hp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DwBlocking {
    pub h_ob: usize,
    pub w_ob: usize,
}

impl Default for DwBlocking {
    fn default() -> Self {
        Self { h_ob: 2, w_ob: 2 }
    }
}

impl DwBlocking {
    pub fn new(h_ob: usize, w_ob: usize) -> Self {
        Self { h_ob, w_ob }
    }

    /// Vector registers the kernel needs: filter tile, output tile and one
    /// input scratch register.
    pub fn registers_needed(&self, taps: usize) -> usize {
        taps + self.h_ob * self.w_ob + 1
    }

    pub fn validate(&self, taps: usize) -> Result<()> {
        if self.h_ob == 0 || self.w_ob == 0 {
            return Err(ConvError::Blocking(format!(
                "{}x{} has a zero dimension",
                self.h_ob, self.w_ob
            )));
        }
        let need = self.registers_needed(taps);
        if need > NUM_VEC_REGS {
            return Err(ConvError::Blocking(format!(
                "{}x{} with {taps} filter taps needs {need} vector registers (have {NUM_VEC_REGS})",
                self.h_ob, self.w_ob
            )));
        }
        Ok(())
    }
}

/// Knobs for [`dwconv_baseline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineOptions {
    /// Output column block size.
    pub w_ob: usize,
    /// Hold one filter row (`fw * C` elements) in registers across the `kk` loop.
    pub cache_filter: bool,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            w_ob: 4,
            cache_filter: false,
        }
    }
}

#[inline]
fn lanes_at(channels: usize, c0: usize) -> usize {
    (channels - c0).min(LANES)
}

/// Row-parallel depthwise convolution.
pub fn dwconv_baseline<B: Backend>(
    input: &Tensor3,
    filter: &DwFilter,
    stride: usize,
    opts: BaselineOptions,
    workers: usize,
) -> Result<KernelRun<Tensor3>> {
    check_workers(workers)?;
    if opts.w_ob == 0 {
        return Err(ConvError::Blocking("w_ob must be at least 1".into()));
    }
    let g = ConvGeometry::depthwise(input, filter, stride)?;
    let mut out = Tensor3::new(g.h_o, g.w_o, g.channels, Fill::Zeros)?;
    let row_len = g.w_o * g.channels;
    let ranges = partition(g.h_o, workers);

    let per_worker = run_on_chunks::<B, _>(
        &ranges,
        out.as_mut_slice(),
        |r| r.len() * row_len,
        |be, rows, chunk| baseline_rows(be, input, filter, &g, opts, rows, chunk),
    );
    Ok(KernelRun {
        output: out,
        per_worker,
    })
}

fn baseline_rows<B: Backend>(
    be: &mut B,
    input: &Tensor3,
    filter: &DwFilter,
    g: &ConvGeometry,
    opts: BaselineOptions,
    rows: Range<usize>,
    out: &mut [f32],
) {
    let c = g.channels;
    let groups = c.div_ceil(LANES);
    let (src, flt) = (input.as_slice(), filter.as_slice());
    let mut row_cache = vec![Default::default(); if opts.cache_filter { g.w_f * groups } else { 0 }];
    let row0 = rows.start;

    for l in rows {
        let mut k0 = 0;
        while k0 < g.w_o {
            let bw = opts.w_ob.min(g.w_o - k0);
            for n in 0..g.h_f {
                if opts.cache_filter {
                    for m in 0..g.w_f {
                        for gi in 0..groups {
                            let c0 = gi * LANES;
                            row_cache[m * groups + gi] =
                                be.load_lanes(Operand::Filter, flt, filter.offset(n, m, c0), lanes_at(c, c0));
                        }
                    }
                }
                for kk in 0..bw {
                    let k = k0 + kk;
                    for m in 0..g.w_f {
                        for gi in 0..groups {
                            let c0 = gi * LANES;
                            let lanes = lanes_at(c, c0);
                            let vi = be.load_lanes(
                                Operand::Input,
                                src,
                                input.offset(l * g.stride + n, k * g.stride + m, c0),
                                lanes,
                            );
                            let vf = if opts.cache_filter {
                                row_cache[m * groups + gi]
                            } else {
                                be.load_lanes(Operand::Filter, flt, filter.offset(n, m, c0), lanes)
                            };
                            let at = ((l - row0) * g.w_o + k) * c + c0;
                            let vo = be.load_lanes(Operand::Output, out, at, lanes);
                            let vo = be.fma_lanes(vi, vf, vo, lanes);
                            be.store_lanes(Operand::Output, out, at, vo, lanes);
                        }
                    }
                }
            }
            k0 += bw;
        }
    }
}

/// Channel-parallel, register-tiled depthwise convolution.
pub fn dwconv_hp<B: Backend>(
    input: &Tensor3,
    filter: &DwFilter,
    stride: usize,
    blocking: DwBlocking,
    workers: usize,
) -> Result<KernelRun<Tensor3>> {
    check_workers(workers)?;
    let g = ConvGeometry::depthwise(input, filter, stride)?;
    blocking.validate(filter.taps())?;
    let groups = g.channels.div_ceil(LANES);
    let ranges = partition(groups, workers);

    let results = run_workers::<B, _, _>(&ranges, |be, group_range| {
        hp_channel_groups(be, input, filter, &g, blocking, group_range)
    });

    // Each worker filled an H_o x W_o x (its channels) slab; interleave them.
    let c = g.channels;
    let mut out = Tensor3::new(g.h_o, g.w_o, c, Fill::Zeros)?;
    let dst = out.as_mut_slice();
    let mut per_worker = Vec::with_capacity(results.len());
    for (r, (local, traffic)) in ranges.iter().zip(results) {
        per_worker.push(traffic);
        let (c_lo, c_hi) = (r.start * LANES, (r.end * LANES).min(c));
        if c_lo >= c_hi {
            continue;
        }
        let cw = c_hi - c_lo;
        for (px, slab) in local.chunks_exact(cw).enumerate() {
            dst[px * c + c_lo..px * c + c_hi].copy_from_slice(slab);
        }
    }
    Ok(KernelRun {
        output: out,
        per_worker,
    })
}

/// Runs all channel groups in `group_range`, returning the worker-local output
/// slab in `H_o x W_o x cw` layout.
fn hp_channel_groups<B: Backend>(
    be: &mut B,
    input: &Tensor3,
    filter: &DwFilter,
    g: &ConvGeometry,
    blocking: DwBlocking,
    group_range: Range<usize>,
) -> Vec<f32> {
    let c = g.channels;
    let c_lo = group_range.start * LANES;
    let c_hi = (group_range.end * LANES).min(c);
    if c_lo >= c_hi {
        return Vec::new();
    }
    let cw = c_hi - c_lo;
    let mut local = vec![0.0f32; g.h_o * g.w_o * cw];
    let tile = HpTile {
        input,
        filter,
        g,
        blocking,
        c_lo,
        cw,
    };

    for gi in group_range {
        let mut regs = RegisterFile::default();
        let c0 = gi * LANES;
        let lanes = lanes_at(c, c0);
        for lb in 0..g.h_o.div_ceil(blocking.h_ob) {
            for kb in 0..g.w_o.div_ceil(blocking.w_ob) {
                tile.kernel(be, &mut regs, &mut local, c0, lanes, lb, kb);
            }
        }
    }
    local
}

struct HpTile<'a> {
    input: &'a Tensor3,
    filter: &'a DwFilter,
    g: &'a ConvGeometry,
    blocking: DwBlocking,
    c_lo: usize,
    cw: usize,
}

impl HpTile<'_> {
    #[inline]
    fn out_offset(&self, l: usize, k: usize, c0: usize) -> usize {
        (l * self.g.w_o + k) * self.cw + (c0 - self.c_lo)
    }

    /// One `h_ob x w_ob x 4` output tile. Register map: filter taps in
    /// `[0, taps)`, output tile at `taps + ll * w_ob + kk`, input scratch after.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn kernel<B: Backend>(
        &self,
        be: &mut B,
        regs: &mut RegisterFile,
        out: &mut [f32],
        c0: usize,
        lanes: usize,
        lb: usize,
        kb: usize,
    ) {
        let g = self.g;
        let DwBlocking { h_ob, w_ob } = self.blocking;
        let taps = g.h_f * g.w_f;
        let scratch = taps + h_ob * w_ob;
        let (l0, k0) = (lb * h_ob, kb * w_ob);
        let bh = h_ob.min(g.h_o - l0);
        let bw = w_ob.min(g.w_o - k0);

        // The filter tile persists in the register file across the whole
        // (l', k') sweep of this channel group.
        if lb == 0 && kb == 0 {
            let flt = self.filter.as_slice();
            for n in 0..g.h_f {
                for m in 0..g.w_f {
                    regs[n * g.w_f + m] = be.load_lanes(Operand::Filter, flt, self.filter.offset(n, m, c0), lanes);
                }
            }
        }

        for ll in 0..bh {
            for kk in 0..bw {
                let at = self.out_offset(l0 + ll, k0 + kk, c0);
                regs[taps + ll * w_ob + kk] = be.load_lanes(Operand::Output, out, at, lanes);
            }
        }

        let src = self.input.as_slice();
        for ll in 0..bh {
            for kk in 0..bw {
                let (l, k) = (l0 + ll, k0 + kk);
                let o = taps + ll * w_ob + kk;
                for n in 0..g.h_f {
                    for m in 0..g.w_f {
                        let at = self.input.offset(l * g.stride + n, k * g.stride + m, c0);
                        regs[scratch] = be.load_lanes(Operand::Input, src, at, lanes);
                        regs[o] = be.fma_lanes(regs[scratch], regs[n * g.w_f + m], regs[o], lanes);
                    }
                }
            }
        }

        for ll in 0..bh {
            for kk in 0..bw {
                let at = self.out_offset(l0 + ll, k0 + kk, c0);
                be.store_lanes(Operand::Output, out, at, regs[taps + ll * w_ob + kk], lanes);
            }
        }
    }
}

/// How depthwise work is split across workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    /// Output rows per worker; every worker needs the whole filter.
    RowParallel,
    /// Groups of four channels per worker; each worker needs only its slice.
    ChannelParallel,
}

/// Filter elements each worker must bring in under `scheme`.
pub fn dw_thread_footprint(filter: &DwFilter, workers: usize, scheme: PartitionScheme) -> Result<Vec<usize>> {
    check_workers(workers)?;
    let (taps, c) = (filter.taps(), filter.channels());
    Ok(match scheme {
        PartitionScheme::RowParallel => vec![taps * c; workers],
        PartitionScheme::ChannelParallel => partition(c.div_ceil(LANES), workers)
            .into_iter()
            .map(|r| taps * ((r.end * LANES).min(c).saturating_sub(r.start * LANES)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Counting, Native};
    use crate::reference::dwconv_naive;
    use crate::tensor::max_rel_diff;

    fn case(h: usize, w: usize, c: usize, f: usize, seed: u64) -> (Tensor3, DwFilter) {
        (
            Tensor3::new(h, w, c, Fill::Random(seed)).unwrap(),
            DwFilter::new(f, f, c, Fill::Random(seed + 1)).unwrap(),
        )
    }

    #[test]
    fn baseline_matches_oracle() {
        let (i, f) = case(8, 8, 8, 3, 1);
        let want = dwconv_naive(&i, &f, 1).unwrap();
        for cache_filter in [false, true] {
            let opts = BaselineOptions { w_ob: 4, cache_filter };
            let got = dwconv_baseline::<Native>(&i, &f, 1, opts, 1).unwrap().output;
            assert!(max_rel_diff(&got, &want).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn hp_matches_oracle_both_strides() {
        // s = 2 needs an odd extent under valid-mode divisibility.
        for (hw, s) in [(16, 1), (17, 2)] {
            let (i, f) = case(hw, hw, 16, 3, 2);
            let want = dwconv_naive(&i, &f, s).unwrap();
            let got = dwconv_hp::<Native>(&i, &f, s, DwBlocking::default(), 2).unwrap().output;
            assert!(max_rel_diff(&got, &want).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn channel_and_spatial_tails() {
        let (i, f) = case(11, 13, 7, 3, 3);
        let want = dwconv_naive(&i, &f, 2).unwrap();
        let hp = dwconv_hp::<Native>(&i, &f, 2, DwBlocking::new(2, 2), 3).unwrap().output;
        assert_eq!(hp, want);
        let opts = BaselineOptions {
            w_ob: 4,
            cache_filter: true,
        };
        let base = dwconv_baseline::<Native>(&i, &f, 2, opts, 3).unwrap().output;
        assert_eq!(base, want);
    }

    #[test]
    fn register_budget_enforced() {
        assert!(DwBlocking::new(2, 2).validate(25).is_ok());
        assert!(DwBlocking::new(2, 2).validate(49).is_err());
        assert!(DwBlocking::new(0, 2).validate(9).is_err());
        assert!(DwBlocking::new(4, 5).validate(9).is_ok());
        assert!(DwBlocking::new(4, 6).validate(9).is_err());
        let (i, f) = case(9, 9, 4, 7, 4);
        assert!(matches!(
            dwconv_hp::<Native>(&i, &f, 1, DwBlocking::default(), 1),
            Err(ConvError::Blocking(_))
        ));
    }

    #[test]
    fn bad_arguments_rejected() {
        let (i, f) = case(8, 8, 4, 3, 5);
        assert_eq!(
            dwconv_hp::<Native>(&i, &f, 1, DwBlocking::default(), 0).unwrap_err(),
            ConvError::NoWorkers
        );
        assert!(dwconv_baseline::<Native>(&i, &f, 1, BaselineOptions::default(), 0).is_err());
        let opts = BaselineOptions {
            w_ob: 0,
            cache_filter: false,
        };
        assert!(dwconv_baseline::<Native>(&i, &f, 1, opts, 1).is_err());
        assert!(dwconv_hp::<Native>(&i, &f, 2, DwBlocking::default(), 1).is_err());
    }

    #[test]
    fn zero_filter_same_traffic() {
        let i = Tensor3::new(10, 10, 8, Fill::Random(6)).unwrap();
        let f = DwFilter::new(3, 3, 8, Fill::Random(7)).unwrap();
        let z = DwFilter::new(3, 3, 8, Fill::Zeros).unwrap();
        let a = dwconv_hp::<Counting>(&i, &f, 1, DwBlocking::default(), 2).unwrap();
        let b = dwconv_hp::<Counting>(&i, &z, 1, DwBlocking::default(), 2).unwrap();
        assert!(b.output.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(a.per_worker, b.per_worker);
    }

    #[test]
    fn footprint_formula() {
        let f = DwFilter::new(3, 3, 32, Fill::Zeros).unwrap();
        assert_eq!(
            dw_thread_footprint(&f, 4, PartitionScheme::ChannelParallel).unwrap(),
            vec![72; 4]
        );
        assert_eq!(
            dw_thread_footprint(&f, 4, PartitionScheme::RowParallel).unwrap(),
            vec![288; 4]
        );
        for scheme in [PartitionScheme::RowParallel, PartitionScheme::ChannelParallel] {
            assert_eq!(dw_thread_footprint(&f, 1, scheme).unwrap(), vec![288]);
        }
        // 10 channels = groups of 4, 4, 2; remainder group goes to worker 0.
        let f = DwFilter::new(3, 3, 10, Fill::Zeros).unwrap();
        assert_eq!(
            dw_thread_footprint(&f, 2, PartitionScheme::ChannelParallel).unwrap(),
            vec![72, 18]
        );
        assert!(dw_thread_footprint(&f, 0, PartitionScheme::RowParallel).is_err());
    }

    #[test]
    fn hp_traffic_decomposition() {
        // 6x6 output, 3x3 filter, 8 channels (2 groups), divisible 2x2 tiles.
        let (i, f) = case(8, 8, 8, 3, 8);
        let t = dwconv_hp::<Counting>(&i, &f, 1, DwBlocking::default(), 1)
            .unwrap()
            .traffic();
        let (taps, px, groups) = (9u64, 36u64, 2u64);
        assert_eq!(t.operand(Operand::Filter).bytes_loaded, 16 * taps * groups);
        assert_eq!(
            t.operand(Operand::Output).bytes_loaded + t.operand(Operand::Output).bytes_stored,
            2 * 16 * px * groups
        );
        assert_eq!(t.operand(Operand::Input).bytes_loaded, 16 * px * taps * groups);
        assert_eq!(t.flops, 8 * px * taps * groups);
    }
}
