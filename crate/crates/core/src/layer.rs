//! Benchmark layer descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{ConvError, Result};
use crate::tensor::ConvGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dwconv,
    Pwconv,
}

/// One convolution layer. Depthwise layers carry `h_f`/`w_f`; pointwise
/// layers carry `c_o`. Input sizes are pre-padded: convolution is valid-mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub name: String,
    pub kind: LayerKind,
    pub h_i: usize,
    pub w_i: usize,
    pub c_i: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_o: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_f: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_f: Option<usize>,
    #[serde(default = "unit_stride")]
    pub stride: usize,
}

fn unit_stride() -> usize {
    1
}

impl LayerConfig {
    pub fn dwconv(name: &str, h_i: usize, w_i: usize, c: usize, h_f: usize, w_f: usize, stride: usize) -> Self {
        Self {
            name: name.to_owned(),
            kind: LayerKind::Dwconv,
            h_i,
            w_i,
            c_i: c,
            c_o: None,
            h_f: Some(h_f),
            w_f: Some(w_f),
            stride,
        }
    }

    pub fn pwconv(name: &str, h_i: usize, w_i: usize, c_i: usize, c_o: usize) -> Self {
        Self {
            name: name.to_owned(),
            kind: LayerKind::Pwconv,
            h_i,
            w_i,
            c_i,
            c_o: Some(c_o),
            h_f: None,
            w_f: None,
            stride: 1,
        }
    }

    /// Checks the kind-specific fields and the convolution geometry.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ConvError::Geometry(format!("layer `{}`: {msg}", self.name)));
        match self.kind {
            LayerKind::Dwconv => {
                let (Some(h_f), Some(w_f)) = (self.h_f, self.w_f) else {
                    return bad("dwconv requires h_f and w_f".into());
                };
                if let Some(c_o) = self.c_o {
                    if c_o != self.c_i {
                        return bad(format!("dwconv c_o ({c_o}) must equal c_i ({})", self.c_i));
                    }
                }
                ConvGeometry::new(self.h_i, self.w_i, self.c_i, h_f, w_f, self.stride)
                    .map_err(|e| ConvError::Geometry(format!("layer `{}`: {e}", self.name)))?;
            }
            LayerKind::Pwconv => {
                let Some(c_o) = self.c_o else {
                    return bad("pwconv requires c_o".into());
                };
                if self.h_f.unwrap_or(1) != 1 || self.w_f.unwrap_or(1) != 1 {
                    return bad("pwconv filter must be 1x1".into());
                }
                if self.stride != 1 {
                    return bad(format!("pwconv stride must be 1, got {}", self.stride));
                }
                if [self.h_i, self.w_i, self.c_i, c_o].contains(&0) {
                    return bad("dimensions must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    /// Output channels (equal to `c_i` for depthwise layers).
    pub fn out_channels(&self) -> usize {
        match self.kind {
            LayerKind::Dwconv => self.c_i,
            LayerKind::Pwconv => self.c_o.unwrap_or(0),
        }
    }

    pub fn filter_dims(&self) -> (usize, usize) {
        (self.h_f.unwrap_or(1), self.w_f.unwrap_or(1))
    }

    /// Output spatial size `(h_o, w_o)` under valid-mode convolution.
    pub fn output_dims(&self) -> (usize, usize) {
        let (h_f, w_f) = self.filter_dims();
        let s = self.stride.max(1);
        (
            self.h_i.saturating_sub(h_f) / s + 1,
            self.w_i.saturating_sub(w_f) / s + 1,
        )
    }

    /// Useful flops: two per multiply-accumulate.
    pub fn flops(&self) -> u64 {
        let (h_o, w_o) = self.output_dims();
        let (h_f, w_f) = self.filter_dims();
        let px = (h_o * w_o) as u64;
        match self.kind {
            LayerKind::Dwconv => 2 * px * self.c_i as u64 * (h_f * w_f) as u64,
            LayerKind::Pwconv => 2 * px * self.c_i as u64 * self.out_channels() as u64,
        }
    }
}
