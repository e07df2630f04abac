//! Four-lane vector execution model shared by every optimized kernel.
//!
//! Kernels never touch their operands directly; every transfer between a
//! buffer and a (virtual) vector register goes through a [`Backend`]. The
//! arithmetic lives in provided trait methods, so the [`Native`] and
//! [`Counting`] backends compute bit-identical results and differ only in
//! the bookkeeping hooks. The counting backend tallies flops and
//! register/cache bytes per instruction, which is exactly the quantity the
//! closed-form arithmetic-intensity models count.

use std::ops::{AddAssign, Index, IndexMut};

use serde::Serialize;

/// Lanes per vector register (128-bit registers of `f32`).
pub const LANES: usize = 4;
/// Bytes moved by one full vector load or store.
pub const VEC_BYTES: u64 = 16;
/// Bytes moved by one scalar load or store.
pub const SCALAR_BYTES: u64 = 4;
/// Floating-point operations performed by one full-width FMA.
pub const FMA_FLOPS: u64 = 2 * LANES as u64;
/// Architectural vector registers available to a kernel.
pub const NUM_VEC_REGS: usize = 32;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VecReg(pub [f32; LANES]);

impl VecReg {
    pub const ZERO: VecReg = VecReg([0.0; LANES]);

    #[inline(always)]
    pub fn splat(x: f32) -> Self {
        VecReg([x; LANES])
    }

    #[inline(always)]
    pub fn lane(&self, i: usize) -> f32 {
        self.0[i]
    }
}

/// Which operand a transfer touches. GEMM operands map as `A -> Input`,
/// `B -> Filter`, `D -> Output`, mirroring the pointwise-convolution reshape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Input,
    Filter,
    Output,
}

impl Operand {
    pub const ALL: [Operand; 3] = [Operand::Input, Operand::Filter, Operand::Output];

    #[inline(always)]
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OperandTraffic {
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    /// Distinct elements of this operand loaded or stored at least once.
    pub elements_touched: u64,
}

/// Flop and register/cache byte tallies for one kernel run (or one worker of it).
///
/// Merging sums every field, so `elements_touched` of a merged value is the
/// sum of per-worker footprints, not the footprint of their union.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrafficCounters {
    pub flops: u64,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    pub operands: [OperandTraffic; 3],
}

impl TrafficCounters {
    pub fn bytes(&self) -> u64 {
        self.bytes_loaded + self.bytes_stored
    }

    pub fn operand(&self, op: Operand) -> &OperandTraffic {
        &self.operands[op.index()]
    }

    /// `flops / bytes`, undefined when nothing was transferred.
    pub fn measured_ai(&self) -> Option<f64> {
        let bytes = self.bytes();
        (bytes > 0).then(|| self.flops as f64 / bytes as f64)
    }

    pub fn merge(&mut self, other: &TrafficCounters) {
        self.flops += other.flops;
        self.bytes_loaded += other.bytes_loaded;
        self.bytes_stored += other.bytes_stored;
        for (a, b) in self.operands.iter_mut().zip(other.operands.iter()) {
            a.bytes_loaded += b.bytes_loaded;
            a.bytes_stored += b.bytes_stored;
            a.elements_touched += b.elements_touched;
        }
    }
}

impl AddAssign<&TrafficCounters> for TrafficCounters {
    fn add_assign(&mut self, rhs: &TrafficCounters) {
        self.merge(rhs);
    }
}

impl<'a> std::iter::Sum<&'a TrafficCounters> for TrafficCounters {
    fn sum<I: Iterator<Item = &'a TrafficCounters>>(iter: I) -> Self {
        let mut total = TrafficCounters::default();
        for c in iter {
            total.merge(c);
        }
        total
    }
}

/// Execution backend. One instance is owned by each worker thread.
///
/// Implementors supply the four bookkeeping hooks; the data-moving and
/// arithmetic methods are provided and must not be overridden in a way that
/// changes results.
pub trait Backend: Default + Send {
    fn record_load(&mut self, op: Operand, at: usize, elems: usize, bytes: u64);
    fn record_store(&mut self, op: Operand, at: usize, elems: usize, bytes: u64);
    fn record_flops(&mut self, flops: u64);
    fn traffic(&self) -> TrafficCounters;

    /// Loads `src[at..at + 4]` into a register.
    #[inline(always)]
    fn vec_load(&mut self, op: Operand, src: &[f32], at: usize) -> VecReg {
        let s = &src[at..at + LANES];
        self.record_load(op, at, LANES, VEC_BYTES);
        VecReg([s[0], s[1], s[2], s[3]])
    }

    /// Loads `lanes` elements; a partial vector is charged as scalar loads
    /// and its unused lanes are zero.
    #[inline(always)]
    fn load_lanes(&mut self, op: Operand, src: &[f32], at: usize, lanes: usize) -> VecReg {
        if lanes == LANES {
            return self.vec_load(op, src, at);
        }
        assert!(lanes > 0 && lanes < LANES, "invalid lane count {lanes}");
        let mut r = VecReg::ZERO;
        r.0[..lanes].copy_from_slice(&src[at..at + lanes]);
        self.record_load(op, at, lanes, SCALAR_BYTES * lanes as u64);
        r
    }

    /// Scalar load of `src[at]` replicated into every lane.
    #[inline(always)]
    fn broadcast(&mut self, op: Operand, src: &[f32], at: usize) -> VecReg {
        let x = src[at];
        self.record_load(op, at, 1, SCALAR_BYTES);
        VecReg::splat(x)
    }

    #[inline(always)]
    fn vec_store(&mut self, op: Operand, dst: &mut [f32], at: usize, v: VecReg) {
        dst[at..at + LANES].copy_from_slice(&v.0);
        self.record_store(op, at, LANES, VEC_BYTES);
    }

    #[inline(always)]
    fn store_lanes(&mut self, op: Operand, dst: &mut [f32], at: usize, v: VecReg, lanes: usize) {
        if lanes == LANES {
            return self.vec_store(op, dst, at, v);
        }
        assert!(lanes > 0 && lanes < LANES, "invalid lane count {lanes}");
        dst[at..at + lanes].copy_from_slice(&v.0[..lanes]);
        self.record_store(op, at, lanes, SCALAR_BYTES * lanes as u64);
    }

    /// Lane-wise `a * b + acc`.
    #[inline(always)]
    fn vec_fma(&mut self, a: VecReg, b: VecReg, acc: VecReg) -> VecReg {
        self.record_flops(FMA_FLOPS);
        mul_add(a, b, acc)
    }

    /// `a * b + acc` on the first `lanes` lanes; charged `2 * lanes` flops.
    #[inline(always)]
    fn fma_lanes(&mut self, a: VecReg, b: VecReg, acc: VecReg, lanes: usize) -> VecReg {
        self.record_flops(2 * lanes as u64);
        mul_add(a, b, acc)
    }

    /// `a[lane] * b + acc` (by-element FMA: the scalar stays in a register).
    #[inline(always)]
    fn fma_by_lane(&mut self, a: VecReg, lane: usize, b: VecReg, acc: VecReg, lanes: usize) -> VecReg {
        self.record_flops(2 * lanes as u64);
        mul_add(VecReg::splat(a.0[lane]), b, acc)
    }
}

#[inline(always)]
fn mul_add(a: VecReg, b: VecReg, acc: VecReg) -> VecReg {
    VecReg([
        a.0[0] * b.0[0] + acc.0[0],
        a.0[1] * b.0[1] + acc.0[1],
        a.0[2] * b.0[2] + acc.0[2],
        a.0[3] * b.0[3] + acc.0[3],
    ])
}

/// Plain execution: arithmetic only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Native;

impl Backend for Native {
    #[inline(always)]
    fn record_load(&mut self, _: Operand, _: usize, _: usize, _: u64) {}

    #[inline(always)]
    fn record_store(&mut self, _: Operand, _: usize, _: usize, _: u64) {}

    #[inline(always)]
    fn record_flops(&mut self, _: u64) {}

    fn traffic(&self) -> TrafficCounters {
        TrafficCounters::default()
    }
}

/// Growable bitset of element indices touched within one operand.
#[derive(Debug, Clone, Default)]
struct Footprint {
    words: Vec<u64>,
    count: u64,
}

impl Footprint {
    #[inline]
    fn mark(&mut self, at: usize, elems: usize) {
        for idx in at..at + elems {
            let (w, bit) = (idx / 64, 1u64 << (idx % 64));
            if w >= self.words.len() {
                self.words.resize(w + 1, 0);
            }
            if self.words[w] & bit == 0 {
                self.words[w] |= bit;
                self.count += 1;
            }
        }
    }
}

/// Arithmetic plus per-instruction traffic accounting.
#[derive(Debug, Clone, Default)]
pub struct Counting {
    counters: TrafficCounters,
    footprints: [Footprint; 3],
}

impl Backend for Counting {
    #[inline]
    fn record_load(&mut self, op: Operand, at: usize, elems: usize, bytes: u64) {
        self.counters.bytes_loaded += bytes;
        self.counters.operands[op.index()].bytes_loaded += bytes;
        self.footprints[op.index()].mark(at, elems);
    }

    #[inline]
    fn record_store(&mut self, op: Operand, at: usize, elems: usize, bytes: u64) {
        self.counters.bytes_stored += bytes;
        self.counters.operands[op.index()].bytes_stored += bytes;
        self.footprints[op.index()].mark(at, elems);
    }

    #[inline]
    fn record_flops(&mut self, flops: u64) {
        self.counters.flops += flops;
    }

    fn traffic(&self) -> TrafficCounters {
        let mut c = self.counters;
        for (t, f) in c.operands.iter_mut().zip(self.footprints.iter()) {
            t.elements_touched = f.count;
        }
        c
    }
}

/// The 32-entry virtual vector register file a kernel tiles into.
#[derive(Debug, Clone)]
pub struct RegisterFile {
    regs: [VecReg; NUM_VEC_REGS],
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self {
            regs: [VecReg::ZERO; NUM_VEC_REGS],
        }
    }
}

impl Index<usize> for RegisterFile {
    type Output = VecReg;

    #[inline(always)]
    fn index(&self, i: usize) -> &VecReg {
        &self.regs[i]
    }
}

impl IndexMut<usize> for RegisterFile {
    #[inline(always)]
    fn index_mut(&mut self, i: usize) -> &mut VecReg {
        &mut self.regs[i]
    }
}
