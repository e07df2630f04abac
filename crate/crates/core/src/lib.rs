//! Depthwise and pointwise convolution kernels for mobile-style CNN layers,
//! written against a four-lane vector backend that can count register/cache
//! traffic, plus the closed-form intensity models the counts are checked
//! against.
//!
//! ```
//! use mobconv_core::{dwconv_hp, Counting, DwBlocking, DwFilter, Fill, Tensor3};
//!
//! let input = Tensor3::new(10, 10, 8, Fill::Random(1)).unwrap();
//! let filter = DwFilter::new(3, 3, 8, Fill::Random(2)).unwrap();
//! let run = dwconv_hp::<Counting>(&input, &filter, 1, DwBlocking::default(), 2).unwrap();
//! assert_eq!(run.output.dims(), (8, 8, 8));
//! assert!(run.measured_ai().unwrap() > 0.4);
//! ```

pub mod backend;
pub mod dwconv;
pub mod error;
pub mod intensity;
pub mod layer;
pub mod parallel;
pub mod pwconv;
pub mod reference;
pub mod tensor;

pub use backend::{Backend, Counting, Native, Operand, OperandTraffic, RegisterFile, TrafficCounters, VecReg};
pub use dwconv::{dw_thread_footprint, dwconv_baseline, dwconv_hp, BaselineOptions, DwBlocking, PartitionScheme};
pub use error::{ConvError, Result};
pub use intensity::{
    ai_dw_baseline, ai_dw_hp, ai_dw_hp_limit, ai_rtra, ai_rtra_canonical, ai_rtrd, ai_rtrd_canonical, oi_conv_layer,
    relative_deviation, roofline_attainable, IntensityReport, RooflineParams,
};
pub use layer::{LayerConfig, LayerKind};
pub use parallel::{partition, KernelRun};
pub use pwconv::{mm_rtra, mm_rtrd, pwconv, Engine, MmBlocking};
pub use reference::{dwconv_naive, mm_naive, pwconv_naive};
pub use tensor::{max_rel_diff, reshape_to_matrix, ConvGeometry, DenseData, DwFilter, Fill, Matrix, Tensor3};
