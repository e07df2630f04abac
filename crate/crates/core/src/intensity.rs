//! Closed-form arithmetic-intensity (register/cache) and roofline
//! (cache/memory) models.
//!
//! Arithmetic intensity counts flops per byte moved between the cache and the
//! vector registers; operational intensity counts flops per byte moved from
//! main memory. The functions here are the analytical side that the counting
//! backend's measurements are checked against.

use serde::Serialize;

use crate::backend::TrafficCounters;
use crate::error::{ConvError, Result};
use crate::layer::{LayerConfig, LayerKind};

/// Machine ceilings for the roofline model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflineParams {
    /// Peak compute in flops/second.
    pub peak_flops: f64,
    /// Sustained memory bandwidth in bytes/second.
    pub mem_bandwidth: f64,
}

impl RooflineParams {
    pub fn new(peak_flops: f64, mem_bandwidth: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(peak_flops) || !ok(mem_bandwidth) {
            return Err(ConvError::Geometry(format!(
                "roofline parameters must be positive (peak {peak_flops}, bandwidth {mem_bandwidth})"
            )));
        }
        Ok(Self {
            peak_flops,
            mem_bandwidth,
        })
    }
}

/// Attainable flops/second at operational intensity `oi`.
pub fn roofline_attainable(params: &RooflineParams, oi: f64) -> f64 {
    params.peak_flops.min(oi * params.mem_bandwidth)
}

/// Row-parallel depthwise kernel: three vector loads and one store per FMA,
/// or `3 + 1/w_ob` transfers when one filter row stays in registers.
pub fn ai_dw_baseline(w_ob: usize, cached_filter: bool) -> f64 {
    if cached_filter {
        1.0 / ((3.0 + 1.0 / w_ob as f64) * 2.0)
    } else {
        1.0 / 8.0
    }
}

/// Register-tiled depthwise kernel for one `h_ob x w_ob` output tile: the
/// filter tile amortized over all tiles of the channel group, the output
/// tile loaded and stored once, one input vector per FMA.
pub fn ai_dw_hp(hf: usize, wf: usize, h_ob: usize, w_ob: usize, h_o: usize, w_o: usize) -> f64 {
    let taps = (hf * wf) as f64;
    let tile = (h_ob * w_ob) as f64;
    let fmas = tile * taps;
    let tiles = (w_o as f64 / w_ob as f64) * (h_o as f64 / h_ob as f64);
    8.0 * fmas / (16.0 * (taps / tiles + 2.0 * tile + fmas))
}

/// [`ai_dw_hp`] with the amortized filter term dropped: `T / ((2 + T) * 2)`
/// for `T = hf * wf` taps. Independent of the tile shape.
pub fn ai_dw_hp_limit(hf: usize, wf: usize) -> f64 {
    let taps = (hf * wf) as f64;
    taps / ((2.0 + taps) * 2.0)
}

/// BLAS-style kernel with the `A` block reused across the `C_o / c_ob`
/// column blocks.
pub fn ai_rtra(g_b: usize, c_ib: usize, c_ob: usize, c_o: usize) -> f64 {
    let (gb, cib, cob) = (g_b as f64, c_ib as f64, c_ob as f64);
    let reuse = c_o as f64 / cob;
    2.0 * gb * cib * cob / ((gb * cob * 2.0 + cib * cob + gb * cib / reuse) * 4.0)
}

/// Kernel with the `D` block reused across the `C_i / c_ib` reduction blocks.
pub fn ai_rtrd(g_b: usize, c_ib: usize, c_ob: usize, c_i: usize) -> f64 {
    let (gb, cib, cob) = (g_b as f64, c_ib as f64, c_ob as f64);
    let reuse = c_i as f64 / cib;
    2.0 * gb * cib * cob / ((gb * cib + cib * cob + gb * cob * 2.0 / reuse) * 4.0)
}

/// [`ai_rtra`] at tiles (8, 8, 4): `4 / (3 + 8 / C_o)`.
pub fn ai_rtra_canonical(c_o: usize) -> f64 {
    4.0 / (3.0 + 8.0 / c_o as f64)
}

/// [`ai_rtrd`] at tiles (8, 4, 8): `2 / (1 + 8 / C_i)`.
pub fn ai_rtrd_canonical(c_i: usize) -> f64 {
    2.0 / (1.0 + 8.0 / c_i as f64)
}

/// Compulsory-traffic operational intensity: every operand crosses the
/// memory bus exactly once.
pub fn oi_conv_layer(config: &LayerConfig) -> f64 {
    let (h_o, w_o) = config.output_dims();
    let (h_f, w_f) = config.filter_dims();
    let input = config.h_i * config.w_i * config.c_i;
    let (filter, output) = match config.kind {
        LayerKind::Dwconv => (h_f * w_f * config.c_i, h_o * w_o * config.c_i),
        LayerKind::Pwconv => (config.c_i * config.out_channels(), h_o * w_o * config.out_channels()),
    };
    let bytes = 4 * (input + filter + output) as u64;
    config.flops() as f64 / bytes as f64
}

/// Analytical and (optionally) measured intensity of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityReport {
    pub strategy: String,
    pub analytical_ai: f64,
    pub measured_ai: Option<f64>,
    pub flops: u64,
    pub bytes: u64,
    /// `|measured - analytical| / analytical`, present with a measurement.
    pub deviation: Option<f64>,
}

impl IntensityReport {
    pub fn analytical(strategy: impl Into<String>, analytical_ai: f64) -> Self {
        Self {
            strategy: strategy.into(),
            analytical_ai,
            measured_ai: None,
            flops: 0,
            bytes: 0,
            deviation: None,
        }
    }

    pub fn measured(strategy: impl Into<String>, analytical_ai: f64, traffic: &TrafficCounters) -> Self {
        let measured_ai = traffic.measured_ai();
        Self {
            strategy: strategy.into(),
            analytical_ai,
            measured_ai,
            flops: traffic.flops,
            bytes: traffic.bytes(),
            deviation: measured_ai.map(|m| relative_deviation(m, analytical_ai)),
        }
    }
}

pub fn relative_deviation(measured: f64, analytical: f64) -> f64 {
    (measured - analytical).abs() / analytical.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn baseline_values() {
        assert_eq!(ai_dw_baseline(1, false), 0.125);
        assert_eq!(ai_dw_baseline(64, false), 0.125);
        assert!(close(ai_dw_baseline(4, true), 1.0 / 6.5, 1e-15));
        assert!(ai_dw_baseline(1_000_000, true) < 1.0 / 6.0);
        assert!(close(ai_dw_baseline(1_000_000, true), 1.0 / 6.0, 1e-6));
    }

    #[test]
    fn hp_values() {
        // 8*36 / (16*(9/3136 + 8 + 36)) evaluated by hand.
        let want = 288.0 / (16.0 * (9.0 / 3136.0 + 44.0));
        assert!(close(ai_dw_hp(3, 3, 2, 2, 112, 112), want, 1e-15));
        assert!(close(ai_dw_hp(3, 3, 2, 2, 112, 112), 0.40906, 1e-5));
        assert!(close(ai_dw_hp_limit(3, 3), 9.0 / 22.0, 1e-15));
        assert!(close(ai_dw_hp(3, 3, 2, 2, 1 << 20, 1 << 20), 9.0 / 22.0, 1e-9));
        assert!(close(ai_dw_hp(5, 5, 2, 2, 1 << 20, 1 << 20), 25.0 / 54.0, 1e-9));
    }

    #[test]
    fn gemm_values() {
        assert!(close(ai_rtra(8, 8, 4, 64), 1.28, 1e-12));
        assert!(close(ai_rtrd(8, 4, 8, 64), 16.0 / 9.0, 1e-12));
        for c in [8, 16, 64, 256, 1024] {
            assert!(close(ai_rtra(8, 8, 4, c), ai_rtra_canonical(c), 1e-12));
            assert!(close(ai_rtrd(8, 4, 8, c), ai_rtrd_canonical(c), 1e-12));
        }
        let ratio = ai_rtrd_canonical(256) / ai_rtra_canonical(256);
        assert!(close(
            ratio,
            (2.0 / (1.0 + 8.0 / 256.0)) / (4.0 / (3.0 + 8.0 / 256.0)),
            1e-12
        ));
        assert!(close(ratio, 1.47, 0.005));
    }

    #[test]
    fn roofline_examples() {
        let p = RooflineParams::new(64e9, 12e9).unwrap();
        assert_eq!(roofline_attainable(&p, 0.0), 0.0);
        assert_eq!(roofline_attainable(&p, f64::INFINITY), 64e9);
        assert_eq!(roofline_attainable(&p, 2.0), 24e9);
        assert!(RooflineParams::new(0.0, 1.0).is_err());
        assert!(RooflineParams::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn oi_examples() {
        let dw = LayerConfig::dwconv("d", 112, 112, 32, 3, 3, 1);
        let flops = 2.0 * 110.0 * 110.0 * 32.0 * 9.0;
        let bytes = 4.0 * (112.0 * 112.0 * 32.0 + 9.0 * 32.0 + 110.0 * 110.0 * 32.0);
        assert!(close(oi_conv_layer(&dw), flops / bytes, 1e-12));

        let pw = LayerConfig::pwconv("p", 1, 1, 1, 1);
        assert!(close(oi_conv_layer(&pw), 2.0 / 12.0, 1e-15));

        let dw2 = LayerConfig::dwconv("d2", 112, 112, 64, 3, 3, 1);
        assert!(close(oi_conv_layer(&dw2), oi_conv_layer(&dw), 1e-12));
    }

    #[test]
    fn report_deviation() {
        let t = TrafficCounters {
            flops: 8,
            bytes_loaded: 48,
            bytes_stored: 16,
            ..Default::default()
        };
        let r = IntensityReport::measured("x", 0.125, &t);
        assert_eq!(r.measured_ai, Some(0.125));
        assert_eq!(r.deviation, Some(0.0));
        assert_eq!(IntensityReport::analytical("y", 1.0).deviation, None);
    }
}
