//! Four convolution / max-pool blocks with batch norm and ELU.

use numcore::{ConvGeom, Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ctx::Ctx;
use super::{Decl, ModelSpec, Stage};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Deep4Config {
    /// Filters of the four blocks; the first block splits into a temporal
    /// and a spatial convolution with the same filter count.
    pub n_filters: [usize; 4],
    pub filter_length: usize,
    pub pool_length: usize,
    pub pool_stride: usize,
    pub final_conv_length: usize,
}

impl Default for Deep4Config {
    fn default() -> Self {
        Self {
            n_filters: [25, 50, 100, 200],
            filter_length: 10,
            pool_length: 7,
            pool_stride: 3,
            final_conv_length: 1,
        }
    }
}

impl Deep4Config {
    pub(super) fn validate(&self) -> std::result::Result<(), String> {
        if self.n_filters.contains(&0)
            || [
                self.filter_length,
                self.pool_length,
                self.pool_stride,
                self.final_conv_length,
            ]
            .contains(&0)
        {
            return Err("all sizes must be positive".into());
        }
        Ok(())
    }

    fn dilation(&self, block: usize) -> usize {
        self.pool_stride.pow(block as u32)
    }

    pub(super) fn stages(&self) -> Vec<Stage> {
        let mut s = Vec::new();
        for b in 0..4 {
            s.push(Stage::new(self.filter_length, self.dilation(b), 0));
            s.push(Stage::new(self.pool_length, self.dilation(b), 0));
        }
        s.push(Stage::new(self.final_conv_length, self.dilation(4), 0));
        s
    }

    pub(super) fn declare(&self, spec: &ModelSpec, d: &mut Decl) {
        let f = self.n_filters;
        d.conv(
            "block0.conv_time",
            vec![f[0], 1, 1, self.filter_length],
            true,
        );
        d.conv(
            "block0.conv_spat",
            vec![f[0], f[0], spec.n_channels, 1],
            false,
        );
        d.batch_norm("block0.bn", f[0]);
        for b in 1..4 {
            d.conv(
                &format!("block{b}.conv"),
                vec![f[b], f[b - 1], 1, self.filter_length],
                false,
            );
            d.batch_norm(&format!("block{b}.bn"), f[b]);
        }
        d.conv(
            "classifier.conv",
            vec![spec.n_classes, f[3], 1, self.final_conv_length],
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
        let h = c.conv2d("block0.conv_spat", h, ConvGeom::default())?;
        let h = c.batch_norm("block0.bn", h)?;
        let h = c.g.elu(h);
        let mut h = c.max_pool(h, self.pool_length, 1)?;
        c.record("block0", h);

        for b in 1..4 {
            let d = self.dilation(b);
            let name = format!("block{b}");
            h = c.dropout(h)?;
            h = c.conv2d(&format!("{name}.conv"), h, ConvGeom::dilated(d))?;
            h = c.batch_norm(&format!("{name}.bn"), h)?;
            h = c.g.elu(h);
            h = c.max_pool(h, self.pool_length, d)?;
            c.record(&name, h);
        }

        let h = c.conv2d("classifier.conv", h, ConvGeom::dilated(self.dilation(4)))?;
        let logits = c.squeeze_height(h)?;
        c.record("classifier", logits);
        Ok(logits)
    }
}
