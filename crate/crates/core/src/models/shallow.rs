//! Shallow filter-bank network: temporal then spatial convolution, squaring,
//! mean pooling and a log, followed by a convolutional classifier.

use numcore::{ConvGeom, Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ctx::Ctx;
use super::{Decl, ModelSpec, Stage};
use crate::error::Result;

/// Floor applied before the log of the pooled power.
const LOG_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShallowConfig {
    pub n_filters_time: usize,
    pub filter_time_length: usize,
    pub n_filters_spat: usize,
    pub pool_time_length: usize,
    /// Stride of the pooling in the strided form; becomes the classifier dilation.
    pub pool_time_stride: usize,
    pub final_conv_length: usize,
}

impl Default for ShallowConfig {
    fn default() -> Self {
        Self {
            n_filters_time: 40,
            filter_time_length: 25,
            n_filters_spat: 40,
            pool_time_length: 75,
            pool_time_stride: 21,
            final_conv_length: 25,
        }
    }
}

impl ShallowConfig {
    pub(super) fn validate(&self) -> std::result::Result<(), String> {
        let sizes = [
            self.n_filters_time,
            self.filter_time_length,
            self.n_filters_spat,
            self.pool_time_length,
            self.pool_time_stride,
            self.final_conv_length,
        ];
        if sizes.contains(&0) {
            return Err("all sizes must be positive".into());
        }
        Ok(())
    }

    pub(super) fn stages(&self) -> Vec<Stage> {
        vec![
            Stage::new(self.filter_time_length, 1, 0),
            Stage::new(self.pool_time_length, 1, 0),
            Stage::new(self.final_conv_length, self.pool_time_stride, 0),
        ]
    }

    pub(super) fn declare(&self, spec: &ModelSpec, d: &mut Decl) {
        d.conv(
            "block0.conv_time",
            vec![self.n_filters_time, 1, 1, self.filter_time_length],
            true,
        );
        d.conv(
            "block1.conv_spat",
            vec![self.n_filters_spat, self.n_filters_time, spec.n_channels, 1],
            false,
        );
        d.batch_norm("block1.bn", self.n_filters_spat);
        d.conv(
            "classifier.conv",
            vec![
                spec.n_classes,
                self.n_filters_spat,
                1,
                self.final_conv_length,
            ],
            true,
        );
    }

    pub(super) fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        c: &mut Ctx<'_, T, R>,
        x: Var,
    ) -> Result<Var> {
        let x = c.electrodes_to_height(x)?;
        let h = c.conv2d("block0.conv_time", x, ConvGeom::default())?;
        c.record("block0", h);

        let h = c.conv2d("block1.conv_spat", h, ConvGeom::default())?;
        let h = c.batch_norm("block1.bn", h)?;
        let h = c.g.mul(h, h)?;
        let h = c.mean_pool(h, self.pool_time_length, 1)?;
        let h = c.g.log(h, T::from_f64_lossy(LOG_FLOOR));
        let h = c.dropout(h)?;
        c.record("block1", h);

        let h = c.conv2d(
            "classifier.conv",
            h,
            ConvGeom::dilated(self.pool_time_stride),
        )?;
        let logits = c.squeeze_height(h)?;
        c.record("classifier", logits);
        Ok(logits)
    }
}
