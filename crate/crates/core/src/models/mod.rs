//! The four architectures in dense (cropped) form.
//!
//! Every stride of the original strided networks is folded into the dilation
//! of the layers that follow it, so a window of `W` samples yields
//! `P = W - RF + 1` predictions, one per shift of the receptive field.

mod ctx;
mod deep4;
mod eegnet;
mod shallow;
mod tcn;

use std::fmt;
use std::str::FromStr;

use numcore::{BatchStats, Graph, Scalar, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use deep4::Deep4Config;
pub use eegnet::EegNetConfig;
pub use shallow::ShallowConfig;
pub use tcn::TcnConfig;

use crate::error::{Error, Result};
use ctx::Ctx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    EegNet,
    ShallowNet,
    Deep4Net,
    Tcn,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::EegNet, Arch::ShallowNet, Arch::Deep4Net, Arch::Tcn];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::EegNet => "eegnet",
            Arch::ShallowNet => "shallownet",
            Arch::Deep4Net => "deep4net",
            Arch::Tcn => "tcn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Arch::EegNet => "EEGNet",
            Arch::ShallowNet => "ShallowNet",
            Arch::Deep4Net => "Deep4Net",
            Arch::Tcn => "TCN",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownArch(s.to_string()))
    }
}

/// Architecture hyperparameters, one variant per family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ArchConfig {
    #[serde(rename = "eegnet")]
    EegNet(EegNetConfig),
    #[serde(rename = "shallownet")]
    ShallowNet(ShallowConfig),
    #[serde(rename = "deep4net")]
    Deep4Net(Deep4Config),
    #[serde(rename = "tcn")]
    Tcn(TcnConfig),
}

impl ArchConfig {
    pub fn canonical(arch: Arch) -> Self {
        match arch {
            Arch::EegNet => ArchConfig::EegNet(EegNetConfig::default()),
            Arch::ShallowNet => ArchConfig::ShallowNet(ShallowConfig::default()),
            Arch::Deep4Net => ArchConfig::Deep4Net(Deep4Config::default()),
            Arch::Tcn => ArchConfig::Tcn(TcnConfig::default()),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            ArchConfig::EegNet(_) => Arch::EegNet,
            ArchConfig::ShallowNet(_) => Arch::ShallowNet,
            ArchConfig::Deep4Net(_) => Arch::Deep4Net,
            ArchConfig::Tcn(_) => Arch::Tcn,
        }
    }

    fn stages(&self) -> Vec<Stage> {
        match self {
            ArchConfig::EegNet(c) => c.stages(),
            ArchConfig::ShallowNet(c) => c.stages(),
            ArchConfig::Deep4Net(c) => c.stages(),
            ArchConfig::Tcn(c) => c.stages(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ArchConfig::EegNet(c) => c.validate(),
            ArchConfig::ShallowNet(c) => c.validate(),
            ArchConfig::Deep4Net(c) => c.validate(),
            ArchConfig::Tcn(c) => c.validate(),
        };
        ok.map_err(|m| Error::InvalidConfig(format!("{}: {m}", self.arch())))
    }
}

/// One temporal stage for receptive-field arithmetic: a kernel of `kernel`
/// taps spaced `dilation` apart, with `pad` zeros added in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub kernel: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl Stage {
    pub fn new(kernel: usize, dilation: usize, pad: usize) -> Self {
        Self {
            kernel,
            dilation,
            pad,
        }
    }
}

/// Output length of a stack of stride-1 stages, `None` if some stage does not fit.
pub fn stack_out_len(stages: &[Stage], window: usize) -> Option<usize> {
    stages.iter().try_fold(window, |len, s| {
        let span = s.dilation * (s.kernel - 1) + 1;
        (len + s.pad >= span).then(|| len + s.pad - span + 1)
    })
}

/// Smallest window that yields exactly one output position.
pub fn stack_receptive_field(stages: &[Stage]) -> usize {
    (1..)
        .find(|&w| stack_out_len(stages, w).is_some_and(|p| p >= 1))
        .expect("some window always fits")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n_channels: usize,
    pub n_classes: usize,
    pub input_window_samples: usize,
    pub drop_prob: f64,
    pub config: ArchConfig,
}

impl ModelSpec {
    /// Canonical 21-channel, 2-class configuration with the preset dropout
    /// rate and input window of each family.
    pub fn canonical(arch: Arch) -> Self {
        let (drop_prob, window) = match arch {
            Arch::EegNet => (0.25, 1000),
            Arch::ShallowNet => (0.5, 1000),
            Arch::Deep4Net => (0.5, 1000),
            Arch::Tcn => (0.0527015, 1200),
        };
        Self {
            n_channels: 21,
            n_classes: 2,
            input_window_samples: window,
            drop_prob,
            config: ArchConfig::canonical(arch),
        }
    }

    pub fn arch(&self) -> Arch {
        self.config.arch()
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self)
    }

    /// Dense prediction positions for a window of `window` samples.
    pub fn n_positions(&self, window: usize) -> Option<usize> {
        stack_out_len(&self.config.stages(), window).filter(|&p| p >= 1)
    }

    fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.n_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least one channel and two classes, got {} / {}",
                self.n_channels, self.n_classes
            )));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::InvalidConfig(format!(
                "drop probability {} outside [0, 1)",
                self.drop_prob
            )));
        }
        self.config.validate()?;
        let rf = self.receptive_field();
        if self.input_window_samples < rf {
            return Err(Error::WindowTooShort {
                window: self.input_window_samples,
                receptive_field: rf,
            });
        }
        Ok(())
    }
}

/// Input samples needed for one output position.
pub fn receptive_field(spec: &ModelSpec) -> usize {
    stack_receptive_field(&spec.config.stages())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    /// Glorot-uniform with the given fans.
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
    /// Per-output-filter norm of the named parameter (weight-norm gain).
    NormOf(usize),
}

#[derive(Clone, Debug)]
struct ParamDef {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Parameter declarations collected by each architecture.
#[derive(Default)]
struct Decl {
    params: Vec<ParamDef>,
    batch_norms: Vec<(String, usize)>,
}

impl Decl {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.params.push(ParamDef { name, shape, init });
        self.params.len() - 1
    }

    /// Conv weight `[out, in/groups, kh, kt]` (or 3-D for 1-D convs) with Glorot init.
    fn conv(&mut self, layer: &str, shape: Vec<usize>, bias: bool) {
        let receptive: usize = shape[2..].iter().product();
        let init = Init::Glorot {
            fan_in: shape[1] * receptive,
            fan_out: shape[0] * receptive,
        };
        let out = shape[0];
        self.param(format!("{layer}.weight"), shape, init);
        if bias {
            self.param(format!("{layer}.bias"), vec![out], Init::Zeros);
        }
    }

    fn weight_norm_conv(&mut self, layer: &str, shape: Vec<usize>) {
        let receptive: usize = shape[2..].iter().product();
        let out = shape[0];
        let v = self.param(
            format!("{layer}.weight_v"),
            shape.clone(),
            Init::Glorot {
                fan_in: shape[1] * receptive,
                fan_out: out * receptive,
            },
        );
        self.param(format!("{layer}.weight_g"), vec![out], Init::NormOf(v));
        self.param(format!("{layer}.bias"), vec![out], Init::Zeros);
    }

    fn batch_norm(&mut self, layer: &str, channels: usize) {
        self.param(format!("{layer}.weight"), vec![channels], Init::Ones);
        self.param(format!("{layer}.bias"), vec![channels], Init::Zeros);
        self.batch_norms.push((layer.to_string(), channels));
    }
}

fn declare(spec: &ModelSpec) -> Decl {
    let mut d = Decl::default();
    match &spec.config {
        ArchConfig::EegNet(c) => c.declare(spec, &mut d),
        ArchConfig::ShallowNet(c) => c.declare(spec, &mut d),
        ArchConfig::Deep4Net(c) => c.declare(spec, &mut d),
        ArchConfig::Tcn(c) => c.declare(spec, &mut d),
    }
    d
}

/// Batch-norm statistics gathered in one training forward pass, keyed by layer.
pub type LayerStats<T> = Vec<(String, BatchStats<T>)>;

/// Result of a forward pass.
pub struct Forward<T: Scalar> {
    /// `[batch, classes, positions]`.
    pub logits: Var,
    pub batch_stats: LayerStats<T>,
    /// Output of every layer group, input to output, when tracing was requested.
    pub trace: Vec<(String, Var)>,
}

/// Per-layer parameter count, for diagnosing mismatches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub layer: String,
    pub params: usize,
}

/// A built network: named trainable parameters in input-to-output order plus
/// batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar = f32> {
    spec: ModelSpec,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    buffer_names: Vec<String>,
    buffers: Vec<Vec<T>>,
}

/// Build a freshly initialized model. Identical seeds give bit-identical parameters.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model<f32>> {
    spec.validate()?;
    let decl = declare(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: Vec<Tensor<f32>> = Vec::with_capacity(decl.params.len());
    for p in &decl.params {
        let t = match p.init {
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                Tensor::from_fn(&p.shape, |_| rng.random_range(-limit..limit))
            }
            Init::Zeros => Tensor::zeros(&p.shape),
            Init::Ones => Tensor::full(&p.shape, 1.0),
            Init::NormOf(src) => {
                let v = &params[src];
                let per = v.numel() / p.shape[0];
                let norms = v
                    .data()
                    .chunks(per)
                    .map(|c| c.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt() as f32)
                    .collect();
                Tensor::from_vec(p.shape.clone(), norms)?
            }
        };
        params.push(t);
    }
    let mut buffer_names = Vec::new();
    let mut buffers = Vec::new();
    for (layer, c) in &decl.batch_norms {
        buffer_names.push(format!("{layer}.running_mean"));
        buffers.push(vec![0.0; *c]);
        buffer_names.push(format!("{layer}.running_var"));
        buffers.push(vec![1.0; *c]);
    }
    Ok(Model {
        spec: spec.clone(),
        names: decl.params.into_iter().map(|p| p.name).collect(),
        params,
        buffer_names,
        buffers,
    })
}

/// Group of a parameter or buffer name: everything before the first dot.
pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

impl<T: Scalar> Model<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn arch(&self) -> Arch {
        self.spec.arch()
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn buffer_names(&self) -> &[String] {
        &self.buffer_names
    }

    pub fn buffers(&self) -> &[Vec<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.buffers
    }

    pub fn n_trainable(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Parameter count per layer (name without the final `.weight`/`.bias` part).
    pub fn param_breakdown(&self) -> Vec<LayerCount> {
        let mut out: Vec<LayerCount> = Vec::new();
        for (name, t) in self.names.iter().zip(&self.params) {
            let layer = name.rsplit_once('.').map_or(name.as_str(), |(l, _)| l);
            match out.last_mut() {
                Some(last) if last.layer == layer => last.params += t.numel(),
                _ => out.push(LayerCount {
                    layer: layer.to_string(),
                    params: t.numel(),
                }),
            }
        }
        out
    }

    /// Parameter names grouped by block, input to output.
    pub fn layer_groups(&self) -> Vec<(String, Vec<String>)> {
        let mut out: Vec<(String, Vec<String>)> = Vec::new();
        for name in &self.names {
            let g = group_of(name);
            match out.last_mut() {
                Some((last, members)) if last == g => members.push(name.clone()),
                _ => out.push((g.to_string(), vec![name.clone()])),
            }
        }
        out
    }

    /// Index of the layer group each parameter belongs to.
    pub fn group_index_of_params(&self) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.names.len());
        let mut current = 0;
        for (i, name) in self.names.iter().enumerate() {
            if i > 0 && group_of(name) != group_of(&self.names[i - 1]) {
                current += 1;
            }
            idx.push(current);
        }
        idx
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            buffer_names: self.buffer_names.clone(),
            buffers: self
                .buffers
                .iter()
                .map(|b| b.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect())
                .collect(),
        }
    }

    /// Register every parameter as a graph leaf, in `param_names` order.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.clone(), requires_grad))
            .collect()
    }

    /// Forward pass on `x = [batch, channels, window]` with parameters bound
    /// by [`Model::bind`]. In train mode batch norm uses batch statistics
    /// (returned, not applied) and dropout draws from `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        params: &[Var],
        train: bool,
        trace: bool,
        rng: &mut R,
    ) -> Result<Forward<T>> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.spec.n_channels {
            return Err(Error::InvalidInput(format!(
                "expected input [batch, {}, window], got {shape:?}",
                self.spec.n_channels
            )));
        }
        let rf = self.spec.receptive_field();
        if shape[2] < rf {
            return Err(Error::WindowTooShort {
                window: shape[2],
                receptive_field: rf,
            });
        }
        if params.len() != self.params.len() {
            return Err(Error::InvalidInput(format!(
                "{} parameter handles for {} parameters",
                params.len(),
                self.params.len()
            )));
        }
        let mut ctx = Ctx::new(g, self, params, train, trace, rng);
        let logits = match &self.spec.config {
            ArchConfig::EegNet(c) => c.forward(&mut ctx, x)?,
            ArchConfig::ShallowNet(c) => c.forward(&mut ctx, x)?,
            ArchConfig::Deep4Net(c) => c.forward(&mut ctx, x)?,
            ArchConfig::Tcn(c) => c.forward(&mut ctx, x)?,
        };
        let (batch_stats, trace) = ctx.finish();
        Ok(Forward {
            logits,
            batch_stats,
            trace,
        })
    }

    /// Eval-mode logits `[batch, classes, positions]` for a batch of windows.
    pub fn predict_logits(&self, batch: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let x = g.leaf(batch, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, x, &params, false, false, &mut rng)?;
        Ok(g.value(out.logits).clone())
    }

    /// Fold batch statistics into the running estimates (momentum 0.1).
    pub fn update_running_stats(&mut self, stats: &LayerStats<T>) {
        for (layer, s) in stats {
            let m = self.buffer_index(&format!("{layer}.running_mean"));
            let v = self.buffer_index(&format!("{layer}.running_var"));
            if let (Some(m), Some(v)) = (m, v) {
                let (lo, hi) = self.buffers.split_at_mut(v.max(m));
                let (mean, var) = if m < v {
                    (&mut lo[m], &mut hi[0])
                } else {
                    (&mut hi[0], &mut lo[v])
                };
                s.update_running(mean, var, numcore::BN_MOMENTUM);
            }
        }
    }

    fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn buffer_index(&self, name: &str) -> Option<usize> {
        self.buffer_names.iter().position(|n| n == name)
    }

    /// Replace all parameters and buffers from name-indexed tensors. Every
    /// name must be present with the right shape, and no extra names allowed.
    pub fn load_named(&mut self, tensors: &[(String, Vec<usize>, Vec<T>)]) -> Result<()> {
        let expected: Vec<&String> = self.names.iter().chain(&self.buffer_names).collect();
        let missing: Vec<String> = expected
            .iter()
            .filter(|n| !tensors.iter().any(|(t, _, _)| t == **n))
            .map(|n| n.to_string())
            .collect();
        let unexpected: Vec<String> = tensors
            .iter()
            .filter(|(t, _, _)| !expected.contains(&t))
            .map(|(t, _, _)| t.clone())
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(Error::NameMismatch {
                missing,
                unexpected,
            });
        }
        for (name, shape, data) in tensors {
            if let Some(i) = self.param_index(name) {
                if self.params[i].shape() != shape.as_slice() {
                    return Err(Error::InvalidCheckpoint(format!(
                        "`{name}` has shape {shape:?}, model expects {:?}",
                        self.params[i].shape()
                    )));
                }
                self.params[i] = Tensor::from_vec(shape.clone(), data.clone())?;
            } else if let Some(i) = self.buffer_index(name) {
                if shape.as_slice() != [self.buffers[i].len()] {
                    return Err(Error::InvalidCheckpoint(format!(
                        "`{name}` has shape {shape:?}, model expects [{}]",
                        self.buffers[i].len()
                    )));
                }
                self.buffers[i] = data.clone();
            }
        }
        Ok(())
    }

    /// Parameters then buffers as `(name, shape, values)`.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<T>)> {
        let params = self
            .names
            .iter()
            .zip(&self.params)
            .map(|(n, t)| (n.clone(), t.shape().to_vec(), t.data().to_vec()));
        let buffers = self
            .buffer_names
            .iter()
            .zip(&self.buffers)
            .map(|(n, b)| (n.clone(), vec![b.len()], b.clone()));
        params.chain(buffers).collect()
    }

    /// Names of the traced layer outputs, input to output.
    pub fn trace_names(&self) -> Vec<String> {
        self.layer_groups().into_iter().map(|(g, _)| g).collect()
    }
}
