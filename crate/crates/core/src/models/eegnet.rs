//! Compact depthwise-separable network: temporal filters, per-filter spatial
//! filters, a separable convolution and a convolutional classifier.

use numcore::{ConvGeom, Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ctx::Ctx;
use super::{Decl, ModelSpec, Stage};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EegNetConfig {
    /// Temporal filters.
    pub f1: usize,
    /// Spatial filters per temporal filter.
    pub depth: usize,
    /// Pointwise filters of the separable convolution.
    pub f2: usize,
    pub kernel_length: usize,
    pub separable_kernel: usize,
    /// Zero padding on each side of the separable convolution.
    pub separable_pad: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub final_conv_length: usize,
}

impl Default for EegNetConfig {
    fn default() -> Self {
        Self {
            f1: 8,
            depth: 2,
            f2: 16,
            kernel_length: 64,
            separable_kernel: 16,
            separable_pad: 8,
            pool1: 4,
            pool2: 8,
            final_conv_length: 18,
        }
    }
}

impl EegNetConfig {
    pub(super) fn validate(&self) -> std::result::Result<(), String> {
        let sizes = [
            self.f1,
            self.depth,
            self.f2,
            self.kernel_length,
            self.separable_kernel,
            self.pool1,
            self.pool2,
            self.final_conv_length,
        ];
        if sizes.contains(&0) {
            return Err("all sizes must be positive".into());
        }
        Ok(())
    }

    fn temporal_pad(&self) -> usize {
        self.kernel_length / 2
    }

    pub(super) fn stages(&self) -> Vec<Stage> {
        let d2 = self.pool1;
        let d3 = self.pool1 * self.pool2;
        vec![
            Stage::new(self.kernel_length, 1, 2 * self.temporal_pad()),
            Stage::new(self.pool1, 1, 0),
            Stage::new(self.separable_kernel, d2, 2 * self.separable_pad),
            Stage::new(self.pool2, d2, 0),
            Stage::new(self.final_conv_length, d3, 0),
        ]
    }

    pub(super) fn declare(&self, spec: &ModelSpec, d: &mut Decl) {
        let f1d = self.f1 * self.depth;
        d.conv(
            "block0.conv_temporal",
            vec![self.f1, 1, 1, self.kernel_length],
            false,
        );
        d.batch_norm("block0.bn_temporal", self.f1);
        d.conv(
            "block1.conv_spatial",
            vec![f1d, 1, spec.n_channels, 1],
            false,
        );
        d.batch_norm("block1.bn_spatial", f1d);
        d.conv(
            "block2.conv_depthwise",
            vec![f1d, 1, 1, self.separable_kernel],
            false,
        );
        d.conv("block2.conv_pointwise", vec![self.f2, f1d, 1, 1], false);
        d.batch_norm("block2.bn", self.f2);
        d.conv(
            "classifier.conv",
            vec![spec.n_classes, self.f2, 1, self.final_conv_length],
            true,
        );
    }

    pub(super) fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        c: &mut Ctx<'_, T, R>,
        x: Var,
    ) -> Result<Var> {
        let f1d = self.f1 * self.depth;
        let d2 = self.pool1;
        let d3 = self.pool1 * self.pool2;

        let x = c.electrodes_to_height(x)?;
        let h = c.conv2d(
            "block0.conv_temporal",
            x,
            ConvGeom::default().with_padding(self.temporal_pad()),
        )?;
        let h = c.batch_norm("block0.bn_temporal", h)?;
        c.record("block0", h);

        let h = c.conv2d(
            "block1.conv_spatial",
            h,
            ConvGeom::default().with_groups(self.f1),
        )?;
        let h = c.batch_norm("block1.bn_spatial", h)?;
        let h = c.g.elu(h);
        let h = c.mean_pool(h, self.pool1, 1)?;
        let h = c.dropout(h)?;
        c.record("block1", h);

        let h = c.conv2d(
            "block2.conv_depthwise",
            h,
            ConvGeom::dilated(d2)
                .with_groups(f1d)
                .with_padding(self.separable_pad),
        )?;
        let h = c.conv2d("block2.conv_pointwise", h, ConvGeom::default())?;
        let h = c.batch_norm("block2.bn", h)?;
        let h = c.g.elu(h);
        let h = c.mean_pool(h, self.pool2, d2)?;
        let h = c.dropout(h)?;
        c.record("block2", h);

        let h = c.conv2d("classifier.conv", h, ConvGeom::dilated(d3))?;
        let logits = c.squeeze_height(h)?;
        c.record("classifier", logits);
        Ok(logits)
    }
}
