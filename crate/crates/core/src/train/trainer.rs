//! Cropped training loop.

use ndarray::s;
use numcore::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::metrics::balanced_accuracy;
use crate::augment::crop_rng;
use crate::error::{Error, Result};
use crate::models::{build, Model};
use crate::signal::Recording;
use crate::train::checkpoint::Checkpoint;
use crate::train::crops::crop_offsets;
use crate::train::optim::{cosine_schedule, group_learning_rates, AdamW};
use crate::train::plan::{InitFrom, SamplerKind, TrainPlan};
use crate::train::predict::{mean_crop_probs, predict_all};
use crate::train::sampler::{BalancedSampler, Bucket};

// Independent random streams derived from the plan seed.
const DROPOUT_STREAM: u64 = 1;
const ORDER_STREAM: u64 = 2;
const AUGMENT_SALT: u64 = 0x5eed_a096;

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Learning rate of the output group at the last step of the epoch.
    pub lr: f64,
    pub train_loss: f64,
    /// Crop-level balanced accuracy over the crops seen this epoch.
    pub train_bac: f64,
    /// Recording-level balanced accuracy on the validation set.
    pub valid_bac: f64,
}

pub struct TrainOutcome {
    /// Weights of the epoch with the highest validation BAC (earliest on ties).
    pub best: Checkpoint,
    pub last: Model<f32>,
    pub metrics: Vec<EpochMetrics>,
}

/// Train according to `plan.init`, loading the source checkpoint from disk
/// when one is named.
pub fn train(
    plan: &TrainPlan,
    train_set: &[Recording],
    valid_set: &[Recording],
) -> Result<TrainOutcome> {
    match &plan.init {
        InitFrom::Random => train_observed(plan, None, train_set, valid_set, &mut |_, _| Ok(())),
        InitFrom::Checkpoint { path } => {
            fine_tune(plan, &Checkpoint::load(path)?, train_set, valid_set)
        }
    }
}

/// Warm-start from `source` (parameters and batch-norm statistics only) and
/// train with the plan's hyperparameters and optional layer-wise decay.
pub fn fine_tune(
    plan: &TrainPlan,
    source: &Checkpoint,
    train_set: &[Recording],
    valid_set: &[Recording],
) -> Result<TrainOutcome> {
    let model = init_from(plan, source)?;
    train_observed(plan, Some(model), train_set, valid_set, &mut |_, _| Ok(()))
}

/// Model for `plan` holding the weights of `source`.
pub fn init_from(plan: &TrainPlan, source: &Checkpoint) -> Result<Model<f32>> {
    if source.arch() != plan.model.arch() {
        return Err(Error::ArchMismatch {
            expected: plan.model.arch().to_string(),
            found: source.arch().to_string(),
        });
    }
    let mut model = build(&plan.model, plan.seed)?;
    source.load_into(&mut model)?;
    Ok(model)
}

/// Training loop with an observer called after every epoch with that
/// epoch's metrics and the current weights.
pub fn train_observed(
    plan: &TrainPlan,
    init: Option<Model<f32>>,
    train_set: &[Recording],
    valid_set: &[Recording],
    observer: &mut dyn FnMut(&EpochMetrics, &Model<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::EmptyInput(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if let Some(r) = valid_set
        .iter()
        .find(|v| train_set.iter().any(|t| t.id() == v.id()))
    {
        return Err(Error::InvalidInput(format!(
            "recording `{}` is in both the training and validation sets",
            r.id()
        )));
    }
    let mut model = match init {
        Some(m) => {
            if m.spec() != &plan.model {
                return Err(Error::InvalidInput(
                    "initial model does not match the plan's model spec".into(),
                ));
            }
            m
        }
        None => build(&plan.model, plan.seed)?,
    };
    let c = plan.model.n_channels;
    let w = plan.crop_len();
    let stride = plan.stride()?;

    let mut crops: Vec<(usize, usize)> = Vec::new();
    for (i, r) in train_set.iter().enumerate() {
        if r.n_channels() != c {
            return Err(Error::InvalidInput(format!(
                "recording `{}` has {} channels, model expects {c}",
                r.id(),
                r.n_channels()
            )));
        }
        crops.extend(
            crop_offsets(r.id(), r.n_samples(), w, stride)?
                .into_iter()
                .map(|o| (i, o)),
        );
    }
    let labels: Vec<usize> = crops
        .iter()
        .map(|&(i, _)| train_set[i].label().index())
        .collect();
    let sampler = match plan.sampler {
        SamplerKind::Shuffle => None,
        SamplerKind::Balanced => Some(BalancedSampler::new(buckets(train_set, &crops))?),
    };
    let steps_per_epoch = crops.len().div_ceil(plan.batch_size);
    let total_steps = steps_per_epoch * plan.epochs;

    let group_of_param = model.group_index_of_params();
    let n_groups = group_of_param.last().map_or(0, |g| g + 1);
    let group_scale = group_learning_rates(n_groups, 1.0, plan.gamma);
    let mut opt = AdamW::new(model.params());
    let mut dropout_rng = stream(plan.seed, DROPOUT_STREAM);
    let mut order_rng = stream(plan.seed, ORDER_STREAM);
    let mut sample_counter = 0u64;
    let mut step = 0usize;
    let mut metrics = Vec::with_capacity(plan.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=plan.epochs {
        let batches: Vec<Vec<usize>> = match &sampler {
            None => {
                let mut order: Vec<usize> = (0..crops.len()).collect();
                order.shuffle(&mut order_rng);
                order
                    .chunks(plan.batch_size)
                    .map(<[usize]>::to_vec)
                    .collect()
            }
            Some(s) => (0..steps_per_epoch)
                .map(|_| s.batch(plan.batch_size, &mut order_rng))
                .collect(),
        };
        let (mut loss_sum, mut loss_n) = (0.0f64, 0usize);
        let (mut preds, mut truth) = (Vec::new(), Vec::new());
        let mut last_lr = 0.0;
        for batch in &batches {
            let mut data = Vec::with_capacity(batch.len() * c * w);
            let mut targets = Vec::with_capacity(batch.len());
            for &k in batch {
                let (ri, o) = crops[k];
                let mut x = train_set[ri].data.slice(s![.., o..o + w]).to_owned();
                plan.augment.apply(
                    &mut x,
                    &mut crop_rng(plan.seed ^ AUGMENT_SALT, sample_counter),
                )?;
                sample_counter += 1;
                data.extend(x.iter());
                targets.push(labels[k]);
            }
            let mut g = Graph::new();
            let params = model.bind(&mut g, true);
            let x = g.leaf(Tensor::from_vec(vec![batch.len(), c, w], data)?, false);
            let fwd = model.forward(&mut g, x, &params, true, false, &mut dropout_rng)?;
            let loss = g.cross_entropy(fwd.logits, &targets)?;
            let loss_value = g.value(loss).data()[0] as f64;
            if !loss_value.is_finite() {
                return Err(Error::DivergedLoss {
                    epoch,
                    step: step + 1,
                });
            }
            for (p, &t) in mean_crop_probs(g.value(fwd.logits)).iter().zip(&targets) {
                preds.push(usize::from(p[1] > p[0]));
                truth.push(t);
            }
            g.backward(loss)?;
            let grads: Vec<Tensor<f32>> = params
                .iter()
                .zip(model.params())
                .map(|(&v, p)| g.grad(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            let lr_t = cosine_schedule(step, total_steps, plan.lr);
            let lrs: Vec<f64> = group_of_param
                .iter()
                .map(|&gi| lr_t * group_scale[gi])
                .collect();
            let wds: Vec<f64> = lrs.iter().map(|lr| lr * plan.weight_decay).collect();
            opt.step(model.params_mut(), &grads, &lrs, &wds)?;
            model.update_running_stats(&fwd.batch_stats);
            loss_sum += loss_value * batch.len() as f64;
            loss_n += batch.len();
            last_lr = lr_t;
            step += 1;
        }
        let valid_preds = predict_all(&model, valid_set, stride, plan.eval_batch_size)?;
        let valid_bac = balanced_accuracy(
            &valid_preds.iter().map(|p| p.class).collect::<Vec<_>>(),
            &valid_set
                .iter()
                .map(|r| r.label().index())
                .collect::<Vec<_>>(),
        )?;
        let row = EpochMetrics {
            epoch,
            step,
            lr: last_lr,
            train_loss: loss_sum / loss_n as f64,
            train_bac: balanced_accuracy(&preds, &truth).unwrap_or(f64::NAN),
            valid_bac,
        };
        if best.as_ref().is_none_or(|b| valid_bac > b.valid_bac) {
            let mut ck = Checkpoint::from_model(&model, plan.seed, epoch, step as u64, valid_bac);
            ck.moments = Some(opt.clone());
            best = Some(ck);
        }
        observer(&row, &model)?;
        log::info!(
            "epoch {epoch}: loss {:.4} train BAC {:.3} valid BAC {valid_bac:.3}",
            row.train_loss,
            row.train_bac
        );
        metrics.push(row);
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch"),
        last: model,
        metrics,
    })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Crops grouped by (dataset tag, class), in first-seen order.
fn buckets(recs: &[Recording], crops: &[(usize, usize)]) -> Vec<Bucket> {
    let mut out: Vec<Bucket> = Vec::new();
    for (k, &(ri, _)) in crops.iter().enumerate() {
        let (tag, label) = (&recs[ri].meta.dataset_tag, recs[ri].label().index());
        match out
            .iter_mut()
            .find(|b| &b.dataset == tag && b.label == label)
        {
            Some(b) => b.items.push(k),
            None => out.push(Bucket {
                dataset: tag.clone(),
                label,
                items: vec![k],
            }),
        }
    }
    out
}

/// Metrics log as CSV with a fixed header.
pub fn metrics_csv(rows: &[EpochMetrics]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
