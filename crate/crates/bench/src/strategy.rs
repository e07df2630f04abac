//! The kernel variants the CLI runs, with their default tilings and the
//! analytical intensity each should reach.

use std::fmt;

use mobconv_core::{
    ai_dw_baseline, ai_dw_hp, ai_rtra, ai_rtrd, dwconv_baseline, dwconv_hp, dwconv_naive, pwconv, pwconv_naive,
    Backend, BaselineOptions, DwBlocking, DwFilter, Engine, Fill, KernelRun, LayerConfig, LayerKind, Matrix,
    MmBlocking, Tensor3,
};
use serde::Serialize;

use crate::error::CliError;

pub const BASELINE_W_OB: usize = 4;
pub const HP_BLOCKING: DwBlocking = DwBlocking { h_ob: 2, w_ob: 2 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    DwBaseline,
    DwBaselineCached,
    DwHp,
    PwRtra,
    PwRtrd,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::DwBaseline => "dw-baseline",
            Strategy::DwBaselineCached => "dw-baseline-cached",
            Strategy::DwHp => "dw-hp",
            Strategy::PwRtra => "pw-rtra",
            Strategy::PwRtrd => "pw-rtrd",
        })
    }
}

impl Strategy {
    pub fn for_kind(kind: LayerKind) -> &'static [Strategy] {
        match kind {
            LayerKind::Dwconv => &[Strategy::DwBaseline, Strategy::DwBaselineCached, Strategy::DwHp],
            LayerKind::Pwconv => &[Strategy::PwRtra, Strategy::PwRtrd],
        }
    }

    fn baseline_opts(self) -> BaselineOptions {
        BaselineOptions {
            w_ob: BASELINE_W_OB,
            cache_filter: self == Strategy::DwBaselineCached,
        }
    }

    fn mm_blocking(self) -> MmBlocking {
        match self {
            Strategy::PwRtra => MmBlocking::RTRA_DEFAULT,
            _ => MmBlocking::RTRD_DEFAULT,
        }
    }

    /// Closed-form intensity for this strategy on `layer`.
    pub fn analytical_ai(self, layer: &LayerConfig) -> f64 {
        let (h_o, w_o) = layer.output_dims();
        let (h_f, w_f) = layer.filter_dims();
        let MmBlocking { g_b, c_ib, c_ob } = self.mm_blocking();
        match self {
            Strategy::DwBaseline | Strategy::DwBaselineCached => {
                ai_dw_baseline(BASELINE_W_OB, self == Strategy::DwBaselineCached)
            }
            Strategy::DwHp => ai_dw_hp(h_f, w_f, HP_BLOCKING.h_ob, HP_BLOCKING.w_ob, h_o, w_o),
            Strategy::PwRtra => ai_rtra(g_b, c_ib, c_ob, layer.out_channels()),
            Strategy::PwRtrd => ai_rtrd(g_b, c_ib, c_ob, layer.c_i),
        }
    }

    /// Whether every loop of this strategy divides evenly on `layer`, so no
    /// edge tiles or scalar channel tails run and the closed form is exact.
    pub fn divisible(self, layer: &LayerConfig) -> bool {
        let (h_o, w_o) = layer.output_dims();
        match self {
            Strategy::DwBaseline | Strategy::DwBaselineCached => {
                layer.c_i.is_multiple_of(4) && w_o % BASELINE_W_OB == 0
            }
            Strategy::DwHp => layer.c_i.is_multiple_of(4) && h_o % HP_BLOCKING.h_ob == 0 && w_o % HP_BLOCKING.w_ob == 0,
            Strategy::PwRtra | Strategy::PwRtrd => {
                let MmBlocking { g_b, c_ib, c_ob } = self.mm_blocking();
                (h_o * w_o) % g_b == 0 && layer.c_i.is_multiple_of(c_ib) && layer.out_channels().is_multiple_of(c_ob)
            }
        }
    }
}

/// Seeded operands for one layer.
pub enum LayerData {
    Dw {
        input: Tensor3,
        filter: DwFilter,
        stride: usize,
    },
    Pw {
        input: Tensor3,
        filter: Matrix,
    },
}

impl LayerData {
    pub fn generate(layer: &LayerConfig, seed: u64) -> Result<Self, CliError> {
        let input = Tensor3::new(layer.h_i, layer.w_i, layer.c_i, Fill::Random(seed))?;
        let filter_seed = Fill::Random(seed.wrapping_add(1));
        Ok(match layer.kind {
            LayerKind::Dwconv => {
                let (h_f, w_f) = layer.filter_dims();
                LayerData::Dw {
                    input,
                    filter: DwFilter::new(h_f, w_f, layer.c_i, filter_seed)?,
                    stride: layer.stride,
                }
            }
            LayerKind::Pwconv => LayerData::Pw {
                input,
                filter: Matrix::new(layer.c_i, layer.out_channels(), filter_seed)?,
            },
        })
    }

    pub fn oracle(&self) -> Result<Tensor3, CliError> {
        Ok(match self {
            LayerData::Dw { input, filter, stride } => dwconv_naive(input, filter, *stride)?,
            LayerData::Pw { input, filter } => pwconv_naive(input, filter)?,
        })
    }

    pub fn run<B: Backend>(&self, strategy: Strategy, workers: usize) -> Result<KernelRun<Tensor3>, CliError> {
        let run = match (self, strategy) {
            (LayerData::Dw { input, filter, stride }, Strategy::DwBaseline | Strategy::DwBaselineCached) => {
                dwconv_baseline::<B>(input, filter, *stride, strategy.baseline_opts(), workers)?
            }
            (LayerData::Dw { input, filter, stride }, Strategy::DwHp) => {
                dwconv_hp::<B>(input, filter, *stride, HP_BLOCKING, workers)?
            }
            (LayerData::Pw { input, filter }, Strategy::PwRtra) => {
                pwconv::<B>(input, filter, Engine::Rtra, strategy.mm_blocking(), workers)?
            }
            (LayerData::Pw { input, filter }, Strategy::PwRtrd) => {
                pwconv::<B>(input, filter, Engine::Rtrd, strategy.mm_blocking(), workers)?
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "strategy {strategy} does not apply to this layer kind"
                )))
            }
        };
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_stable() {
        let all = [
            Strategy::DwBaseline,
            Strategy::DwBaselineCached,
            Strategy::DwHp,
            Strategy::PwRtra,
            Strategy::PwRtrd,
        ];
        let names: Vec<String> = all.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            names,
            ["dw-baseline", "dw-baseline-cached", "dw-hp", "pw-rtra", "pw-rtrd"]
        );
    }

    #[test]
    fn divisibility() {
        let d = LayerConfig::dwconv("d", 114, 114, 32, 3, 3, 1);
        assert!(Strategy::DwHp.divisible(&d));
        assert!(Strategy::DwBaseline.divisible(&d));
        let d7 = LayerConfig::dwconv("d", 9, 9, 1024, 3, 3, 1);
        assert!(!Strategy::DwHp.divisible(&d7));
        let p = LayerConfig::pwconv("p", 14, 14, 512, 512);
        assert!(!Strategy::PwRtrd.divisible(&p));
        let p = LayerConfig::pwconv("p", 16, 16, 64, 64);
        assert!(Strategy::PwRtra.divisible(&p) && Strategy::PwRtrd.divisible(&p));
    }

    #[test]
    fn mismatched_strategy_is_usage_error() {
        let layer = LayerConfig::pwconv("p", 2, 2, 4, 4);
        let data = LayerData::generate(&layer, 1).unwrap();
        assert!(matches!(
            data.run::<mobconv_core::Native>(Strategy::DwHp, 1),
            Err(CliError::Usage(_))
        ));
    }
}
