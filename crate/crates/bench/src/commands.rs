//! The four report-producing passes.

use std::time::Instant;

use mobconv_core::{
    max_rel_diff, oi_conv_layer, roofline_attainable, Counting, LayerConfig, LayerKind, Native, RooflineParams,
};
use serde::Serialize;

use crate::error::CliError;
use crate::strategy::{LayerData, Strategy};

/// Seed for layer `idx`: operand streams differ between layers but depend
/// only on the user seed.
fn layer_seed(seed: u64, idx: usize) -> u64 {
    seed.wrapping_add(1_000 * idx as u64)
}

fn kind_name(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Dwconv => "dwconv",
        LayerKind::Pwconv => "pwconv",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateRow {
    pub layer: String,
    pub strategy: Strategy,
    pub workers: usize,
    pub max_rel_diff: f64,
    pub tolerance: f64,
    pub status: &'static str,
}

pub fn cmd_validate(
    layers: &[LayerConfig],
    seed: u64,
    tolerance: f64,
    workers: &[usize],
) -> Result<Vec<ValidateRow>, CliError> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(CliError::Usage(format!(
            "tolerance must be a finite value >= 0, got {tolerance}"
        )));
    }
    check_workers(workers)?;
    let mut rows = Vec::new();
    for (idx, layer) in layers.iter().enumerate() {
        let data = LayerData::generate(layer, layer_seed(seed, idx))?;
        let want = data.oracle()?;
        for &strategy in Strategy::for_kind(layer.kind) {
            for &w in workers {
                let got = data.run::<Native>(strategy, w)?.output;
                let diff = max_rel_diff(&got, &want)?;
                rows.push(ValidateRow {
                    layer: layer.name.clone(),
                    strategy,
                    workers: w,
                    max_rel_diff: diff,
                    tolerance,
                    status: if diff <= tolerance { "PASS" } else { "FAIL" },
                });
            }
        }
    }
    Ok(rows)
}

pub fn failed_rows(rows: &[ValidateRow]) -> usize {
    rows.iter().filter(|r| r.status != "PASS").count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficRow {
    pub layer: String,
    pub kind: &'static str,
    pub strategy: Strategy,
    pub flops: u64,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    pub measured_ai: Option<f64>,
    pub analytical_ai: f64,
    pub deviation: Option<f64>,
    pub divisible: bool,
}

pub fn cmd_traffic(layers: &[LayerConfig], seed: u64) -> Result<Vec<TrafficRow>, CliError> {
    let mut rows = Vec::new();
    for (idx, layer) in layers.iter().enumerate() {
        let data = LayerData::generate(layer, layer_seed(seed, idx))?;
        for &strategy in Strategy::for_kind(layer.kind) {
            let t = data.run::<Counting>(strategy, 1)?.traffic();
            let analytical_ai = strategy.analytical_ai(layer);
            let measured_ai = t.measured_ai();
            rows.push(TrafficRow {
                layer: layer.name.clone(),
                kind: kind_name(layer.kind),
                strategy,
                flops: t.flops,
                bytes_loaded: t.bytes_loaded,
                bytes_stored: t.bytes_stored,
                measured_ai,
                analytical_ai,
                deviation: measured_ai.map(|m| mobconv_core::relative_deviation(m, analytical_ai)),
                divisible: strategy.divisible(layer),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub layer: String,
    pub strategy: Strategy,
    pub workers: usize,
    pub repeats: usize,
    pub median_seconds: f64,
    pub gflops: f64,
    /// Median time at one worker divided by median time at `workers`.
    pub speedup: f64,
    pub measured_ai: Option<f64>,
    pub analytical_ai: f64,
}

pub fn median(samples: &mut [f64]) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2.0
    }
}

pub fn cmd_bench(
    layers: &[LayerConfig],
    seed: u64,
    workers: &[usize],
    repeats: usize,
) -> Result<Vec<BenchRow>, CliError> {
    if repeats < 3 {
        return Err(CliError::Usage(format!("repeats must be at least 3, got {repeats}")));
    }
    check_workers(workers)?;
    let mut rows = Vec::new();
    for (idx, layer) in layers.iter().enumerate() {
        let data = LayerData::generate(layer, layer_seed(seed, idx))?;
        let flops = layer.flops() as f64;
        for &strategy in Strategy::for_kind(layer.kind) {
            let measured_ai = data.run::<Counting>(strategy, 1)?.measured_ai();
            let time = |w: usize| -> Result<f64, CliError> {
                let mut samples = Vec::with_capacity(repeats);
                for _ in 0..repeats {
                    let start = Instant::now();
                    let run = data.run::<Native>(strategy, w)?;
                    samples.push(start.elapsed().as_secs_f64());
                    std::hint::black_box(run);
                }
                Ok(median(&mut samples))
            };
            let mut timings = Vec::with_capacity(workers.len());
            for &w in workers {
                timings.push((w, time(w)?));
            }
            let single = match timings.iter().find(|(w, _)| *w == 1) {
                Some(&(_, t)) => t,
                None => time(1)?,
            };
            for (w, t) in timings {
                rows.push(BenchRow {
                    layer: layer.name.clone(),
                    strategy,
                    workers: w,
                    repeats,
                    median_seconds: t,
                    gflops: flops / t / 1e9,
                    speedup: if w == 1 { 1.0 } else { single / t },
                    measured_ai,
                    analytical_ai: strategy.analytical_ai(layer),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeRow {
    pub layer: String,
    pub kind: &'static str,
    pub strategy: Strategy,
    pub flops: u64,
    pub oi: f64,
    pub analytical_ai: f64,
    pub attainable_gflops: f64,
    pub peak_gflops: f64,
}

pub fn cmd_analyze(layers: &[LayerConfig], params: &RooflineParams) -> Vec<AnalyzeRow> {
    let mut rows = Vec::new();
    for layer in layers {
        let oi = oi_conv_layer(layer);
        let attainable = roofline_attainable(params, oi);
        for &strategy in Strategy::for_kind(layer.kind) {
            rows.push(AnalyzeRow {
                layer: layer.name.clone(),
                kind: kind_name(layer.kind),
                strategy,
                flops: layer.flops(),
                oi,
                analytical_ai: strategy.analytical_ai(layer),
                attainable_gflops: attainable / 1e9,
                peak_gflops: params.peak_flops / 1e9,
            });
        }
    }
    rows
}

fn check_workers(workers: &[usize]) -> Result<(), CliError> {
    if workers.is_empty() || workers.contains(&0) {
        return Err(CliError::Usage(format!("worker counts must be >= 1, got {workers:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vec<LayerConfig> {
        vec![
            LayerConfig::dwconv("d", 10, 10, 8, 3, 3, 1),
            LayerConfig::pwconv("p", 4, 4, 8, 16),
        ]
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 5.0, 4.0]), 3.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn validate_rows_cover_every_combination() {
        let rows = cmd_validate(&tiny(), 42, 1e-5, &[1, 2, 4]).unwrap();
        assert_eq!(rows.len(), (3 + 2) * 3);
        assert_eq!(failed_rows(&rows), 0);
        let mut bad = rows[0].clone();
        bad.status = "FAIL";
        assert_eq!(failed_rows(&[rows[1].clone(), bad]), 1);
        assert!(cmd_validate(&tiny(), 42, -1.0, &[1]).is_err());
        assert!(cmd_validate(&tiny(), 42, 1e-5, &[0]).is_err());
    }

    #[test]
    fn validate_is_deterministic() {
        assert_eq!(
            cmd_validate(&tiny(), 7, 1e-5, &[1, 2]).unwrap(),
            cmd_validate(&tiny(), 7, 1e-5, &[1, 2]).unwrap()
        );
        assert_eq!(cmd_traffic(&tiny(), 7).unwrap(), cmd_traffic(&tiny(), 7).unwrap());
    }

    #[test]
    fn traffic_rows_on_degenerate_layer() {
        let layers = vec![
            LayerConfig::pwconv("one", 1, 1, 1, 1),
            LayerConfig::dwconv("d1", 3, 3, 1, 3, 3, 1),
        ];
        let rows = cmd_traffic(&layers, 1).unwrap();
        assert_eq!(rows.len(), 2 + 3);
        for r in rows {
            assert!(r.bytes_loaded + r.bytes_stored > 0);
            assert!(r.measured_ai.unwrap() > 0.0);
        }
    }

    #[test]
    fn bench_shape_and_normalization() {
        let rows = cmd_bench(&tiny()[..1], 1, &[1, 2, 4], 3).unwrap();
        assert_eq!(rows.len(), 3 * 3);
        for chunk in rows.chunks(3) {
            assert_eq!(chunk.iter().map(|r| r.workers).collect::<Vec<_>>(), [1, 2, 4]);
            assert_eq!(chunk[0].speedup, 1.0);
            assert!(chunk.iter().all(|r| r.gflops > 0.0 && r.repeats == 3));
        }
        assert!(matches!(cmd_bench(&tiny(), 1, &[1], 2), Err(CliError::Usage(_))));
        let rows = cmd_bench(&tiny()[1..], 1, &[2], 3).unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn analyze_bounded_by_peak() {
        let p = RooflineParams::new(64e9, 12e9).unwrap();
        for r in cmd_analyze(&tiny(), &p) {
            assert!(r.oi > 0.0);
            assert!(r.attainable_gflops <= r.peak_gflops);
        }
    }
}
