//! Temporal convolutional network: residual blocks of two weight-normalized
//! dilated causal convolutions with ReLU.

use numcore::{ConvGeom, Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ctx::Ctx;
use super::{Decl, ModelSpec, Stage};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcnConfig {
    pub n_blocks: usize,
    pub n_filters: usize,
    pub kernel_size: usize,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            n_blocks: 5,
            n_filters: 55,
            kernel_size: 16,
        }
    }
}

impl TcnConfig {
    pub(super) fn validate(&self) -> std::result::Result<(), String> {
        if self.n_blocks == 0 || self.n_filters == 0 || self.kernel_size == 0 {
            return Err("all sizes must be positive".into());
        }
        Ok(())
    }

    fn dilation(&self, block: usize) -> usize {
        1 << block
    }

    /// Causal padding keeps every length at `W`; only the last
    /// `W - (RF - 1)` positions see no padding and are kept.
    pub(super) fn stages(&self) -> Vec<Stage> {
        (0..self.n_blocks)
            .flat_map(|b| [Stage::new(self.kernel_size, self.dilation(b), 0); 2])
            .collect()
    }

    pub(super) fn declare(&self, spec: &ModelSpec, d: &mut Decl) {
        let (f, k) = (self.n_filters, self.kernel_size);
        for b in 0..self.n_blocks {
            let c_in = if b == 0 { spec.n_channels } else { f };
            d.weight_norm_conv(&format!("block{b}.conv1"), vec![f, c_in, k]);
            d.weight_norm_conv(&format!("block{b}.conv2"), vec![f, f, k]);
            if c_in != f {
                d.conv(&format!("block{b}.downsample"), vec![f, c_in, 1], true);
            }
        }
        d.conv("classifier.fc", vec![spec.n_classes, f, 1], true);
    }

    pub(super) fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        c: &mut Ctx<'_, T, R>,
        x: Var,
    ) -> Result<Var> {
        let window = c.g.shape(x)[2];
        let mut h = x;
        let mut c_in = c.g.shape(x)[1];
        for b in 0..self.n_blocks {
            let name = format!("block{b}");
            let geom = ConvGeom::causal(self.kernel_size, self.dilation(b));
            let y = c.weight_norm_conv1d(&format!("{name}.conv1"), h, geom)?;
            let y = c.g.relu(y);
            let y = c.dropout(y)?;
            let y = c.weight_norm_conv1d(&format!("{name}.conv2"), y, geom)?;
            let y = c.g.relu(y);
            let y = c.dropout(y)?;
            let res = if c_in != self.n_filters {
                c.conv1d(&format!("{name}.downsample"), h, ConvGeom::default())?
            } else {
                h
            };
            let sum = c.g.add(y, res)?;
            h = c.g.relu(sum);
            c_in = self.n_filters;
            c.record(&name, h);
        }
        let out = c.conv1d("classifier.fc", h, ConvGeom::default())?;
        let rf = super::stack_receptive_field(&self.stages());
        let positions = window + 1 - rf;
        let logits = c.g.slice_last(out, window - positions, positions)?;
        c.record("classifier", logits);
        Ok(logits)
    }
}
