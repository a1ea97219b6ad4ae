use numcore::{BatchStats, ConvGeom, Graph, PoolGeom, Scalar, Var};
use rand::Rng;

use super::{LayerStats, Model};
use crate::error::Result;

/// Shared state while running one architecture's forward pass.
pub(super) struct Ctx<'a, T: Scalar, R: Rng + ?Sized> {
    pub g: &'a mut Graph<T>,
    model: &'a Model<T>,
    params: &'a [Var],
    train: bool,
    tracing: bool,
    rng: &'a mut R,
    stats: Vec<(String, BatchStats<T>)>,
    trace: Vec<(String, Var)>,
}

impl<'a, T: Scalar, R: Rng + ?Sized> Ctx<'a, T, R> {
    pub fn new(
        g: &'a mut Graph<T>,
        model: &'a Model<T>,
        params: &'a [Var],
        train: bool,
        tracing: bool,
        rng: &'a mut R,
    ) -> Self {
        Self {
            g,
            model,
            params,
            train,
            tracing,
            rng,
            stats: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn finish(self) -> (LayerStats<T>, Vec<(String, Var)>) {
        (self.stats, self.trace)
    }

    fn p(&self, name: &str) -> Var {
        let i = self
            .model
            .param_index(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not declared"));
        self.params[i]
    }

    fn has(&self, name: &str) -> bool {
        self.model.param_index(name).is_some()
    }

    pub fn conv2d(&mut self, layer: &str, x: Var, geom: ConvGeom) -> Result<Var> {
        let w = self.p(&format!("{layer}.weight"));
        let bias_name = format!("{layer}.bias");
        let b = self.has(&bias_name).then(|| self.p(&bias_name));
        Ok(self.g.conv2d(x, w, b, geom)?)
    }

    pub fn conv1d(&mut self, layer: &str, x: Var, geom: ConvGeom) -> Result<Var> {
        let w = self.p(&format!("{layer}.weight"));
        let bias_name = format!("{layer}.bias");
        let b = self.has(&bias_name).then(|| self.p(&bias_name));
        Ok(self.g.conv1d(x, w, b, geom)?)
    }

    /// 1-D convolution whose weight is `g * v / ||v||` per output filter.
    pub fn weight_norm_conv1d(&mut self, layer: &str, x: Var, geom: ConvGeom) -> Result<Var> {
        let v = self.p(&format!("{layer}.weight_v"));
        let gain = self.p(&format!("{layer}.weight_g"));
        let b = self.p(&format!("{layer}.bias"));
        let w = self.g.weight_norm(v, gain)?;
        Ok(self.g.conv1d(x, w, Some(b), geom)?)
    }

    pub fn batch_norm(&mut self, layer: &str, x: Var) -> Result<Var> {
        let gamma = self.p(&format!("{layer}.weight"));
        let beta = self.p(&format!("{layer}.bias"));
        if self.train {
            let (y, s) = self.g.batch_norm_train(x, gamma, beta)?;
            self.stats.push((layer.to_string(), s));
            Ok(y)
        } else {
            let mean = self
                .model
                .buffer_index(&format!("{layer}.running_mean"))
                .expect("declared");
            let var = self
                .model
                .buffer_index(&format!("{layer}.running_var"))
                .expect("declared");
            let b = self.model.buffers();
            Ok(self.g.batch_norm_eval(x, gamma, beta, &b[mean], &b[var])?)
        }
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let p = self.model.spec().drop_prob;
        Ok(self.g.dropout(x, p, self.train, self.rng)?)
    }

    pub fn mean_pool(&mut self, x: Var, kernel: usize, dilation: usize) -> Result<Var> {
        Ok(self.g.mean_pool1d(x, PoolGeom::new(kernel, 1, dilation))?)
    }

    pub fn max_pool(&mut self, x: Var, kernel: usize, dilation: usize) -> Result<Var> {
        Ok(self.g.max_pool1d(x, PoolGeom::new(kernel, 1, dilation))?)
    }

    pub fn record(&mut self, group: &str, x: Var) {
        if self.tracing {
            self.trace.push((group.to_string(), x));
        }
    }

    /// `[b, c, 1, t]` to `[b, c, t]`.
    pub fn squeeze_height(&mut self, x: Var) -> Result<Var> {
        let s = self.g.shape(x).to_vec();
        Ok(self.g.reshape(x, &[s[0], s[1], s[3]])?)
    }

    /// `[b, c, t]` to `[b, 1, c, t]`, electrodes on the height axis.
    pub fn electrodes_to_height(&mut self, x: Var) -> Result<Var> {
        let s = self.g.shape(x).to_vec();
        Ok(self.g.reshape(x, &[s[0], 1, s[1], s[2]])?)
    }
}
