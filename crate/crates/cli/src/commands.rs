//! One function per subcommand. Each writes its artifacts into the run's
//! output directory and records per-item failures instead of aborting.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use eegxfer::analysis::harness::{
    evaluate, merged_training_harness, regime_table_csv, rows_csv, scaling_harness,
    summarize_scaling, transfer_harness, MergedData, TransferData,
};
use eegxfer::analysis::{cka_heatmap, probe_activations, MetricsReport};
use eegxfer::signal::{
    load_recording, preprocess, read_manifest, write_container, write_edf, write_manifest,
    ManifestEntry, Recording, Split,
};
use eegxfer::synth::generate;
use eegxfer::train::{
    make_crops, metrics_csv, predict_all, train, Checkpoint, InitFrom, TrainPlan,
};
use serde::Serialize;

use crate::config::{require, RunConfig};
use crate::data::{self, Loaded};
use crate::output::RunOutput;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub threads: usize,
}

impl Ctx<'_> {
    fn plan(&self) -> Result<TrainPlan> {
        require(&self.cfg.plan, "plan")?.resolve(self.cfg.seed)
    }

    fn load(&self, out: &mut RunOutput) -> Result<Loaded> {
        data::load(require(&self.cfg.data, "data")?, self.cfg.seed, out)
    }
}

fn entry_for(rec: &Recording, path: PathBuf) -> ManifestEntry {
    ManifestEntry {
        path,
        label: rec.meta.label,
        split: rec.meta.split,
        dataset_tag: rec.meta.dataset_tag.clone(),
        age: rec.meta.age_years,
        gender: rec.meta.gender,
    }
}

pub fn synth(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.synth, "synth")?;
    let recs = generate(&section.generator(ctx.cfg.seed))?;
    let mut entries = Vec::with_capacity(recs.len());
    for rec in &recs {
        let (ext, bytes) = match section.format.as_str() {
            "edf" => ("edf", write_edf(rec)?.0),
            "eegx" => ("eegx", write_container(rec)),
            other => bail!("unknown synth format `{other}` (expected edf or eegx)"),
        };
        let rel = PathBuf::from("recordings").join(format!("{}.{ext}", rec.id()));
        out.write(&rel.to_string_lossy(), bytes)?;
        entries.push(entry_for(rec, rel));
    }
    write_manifest(&out.path("manifest.csv"), &entries)?;
    log::info!("wrote {} recordings", entries.len());
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    split: &'static str,
    label: &'static str,
    gender: &'static str,
    count: usize,
    age_mean: Option<f64>,
    age_min: Option<f64>,
    age_max: Option<f64>,
}

fn summarize(recs: &[Recording]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<_, Vec<Option<f64>>> = BTreeMap::new();
    for r in recs {
        let gender = r.meta.gender.map_or("unknown", |g| g.as_str());
        groups
            .entry((r.meta.split, r.meta.label, gender))
            .or_default()
            .push(r.meta.age_years);
    }
    groups
        .into_iter()
        .map(|((split, label, gender), ages)| {
            let known: Vec<f64> = ages.iter().flatten().copied().collect();
            let (mean, min, max) = if known.is_empty() {
                (None, None, None)
            } else {
                (
                    Some(known.iter().sum::<f64>() / known.len() as f64),
                    known.iter().copied().reduce(f64::min),
                    known.iter().copied().reduce(f64::max),
                )
            };
            SummaryRow {
                split: split.as_str(),
                label: label.as_str(),
                gender,
                count: ages.len(),
                age_mean: mean,
                age_min: min,
                age_max: max,
            }
        })
        .collect()
}

pub fn preprocess_cmd(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.preprocess, "preprocess")?;
    let entries = read_manifest(&section.manifest)?;
    let base = section
        .manifest
        .parent()
        .unwrap_or(std::path::Path::new("."));
    let mut kept = Vec::new();
    let mut recs = Vec::new();
    for e in &entries {
        let rec = load_recording(e, base, &section.settings.montage)
            .and_then(|r| preprocess(&r, &section.settings));
        match rec {
            Ok(r) => {
                let rel = PathBuf::from("recordings").join(format!("{}.eegx", r.id()));
                out.write(&rel.to_string_lossy(), write_container(&r))?;
                kept.push(entry_for(&r, rel));
                recs.push(r);
            }
            Err(err) => out.item_error(e.path.display().to_string(), err),
        }
    }
    write_manifest(&out.path("manifest.csv"), &kept)?;
    out.write("summary.csv", rows_csv(&summarize(&recs))?)?;
    log::info!(
        "preprocessed {} of {} recordings",
        kept.len(),
        entries.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    best_epoch: usize,
    best_valid_bac: f64,
    n_train: usize,
    n_valid: usize,
    test: Vec<MetricsReport>,
}

fn test_reports(
    model: &eegxfer::models::Model<f32>,
    test: &[Recording],
    plan: &TrainPlan,
) -> Result<Vec<MetricsReport>> {
    let mut tags: Vec<&str> = test.iter().map(|r| r.meta.dataset_tag.as_str()).collect();
    tags.sort_unstable();
    tags.dedup();
    tags.into_iter()
        .map(|t| Ok(evaluate(model, &Loaded::tagged(test, t), plan, t)?))
        .collect()
}

fn train_with(ctx: &Ctx, out: &mut RunOutput, plan: TrainPlan) -> Result<()> {
    let loaded = ctx.load(out)?;
    log::info!(
        "training {} on {} recordings, validating on {}",
        plan.model.arch(),
        loaded.train.len(),
        loaded.valid.len()
    );
    let outcome = train(&plan, &loaded.train, &loaded.valid)?;
    out.write("metrics.csv", metrics_csv(&outcome.metrics)?)?;
    out.write("checkpoint.bin", outcome.best.to_bytes()?)?;
    let best = outcome.best.to_model()?;
    let report = TrainReport {
        best_epoch: outcome.best.epoch,
        best_valid_bac: outcome.best.valid_bac,
        n_train: loaded.train.len(),
        n_valid: loaded.valid.len(),
        test: test_reports(&best, &loaded.test, &plan)?,
    };
    out.write_json("report.json", &report)
}

pub fn train_cmd(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let plan = ctx.plan()?;
    train_with(ctx, out, plan)
}

pub fn finetune(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.finetune, "finetune")?;
    let mut plan = ctx.plan()?;
    plan.init = InitFrom::Checkpoint {
        path: section.checkpoint.clone(),
    };
    train_with(ctx, out, plan)
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    dataset: &'a str,
    label: usize,
    predicted: usize,
    p_abnormal: f64,
}

pub fn eval(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.eval, "eval")?;
    let ckpt = Checkpoint::load(&section.checkpoint)?;
    let model = ckpt.to_model()?;
    let loaded = ctx.load(out)?;
    let recs = match section.split {
        Split::Train => &loaded.train,
        Split::Valid => &loaded.valid,
        Split::Test => &loaded.test,
    };
    let spec = model.spec();
    let stride = match section.crop_stride {
        Some(s) => s,
        None => spec
            .n_positions(spec.input_window_samples)
            .context("checkpoint window is shorter than its receptive field")?,
    };
    let preds = predict_all(&model, recs, stride, 64)?;
    let rows: Vec<_> = recs
        .iter()
        .zip(&preds)
        .map(|(r, p)| PredictionRow {
            id: r.id(),
            dataset: &r.meta.dataset_tag,
            label: r.label().index(),
            predicted: p.class,
            p_abnormal: p.probs[1],
        })
        .collect();
    out.write("predictions.csv", rows_csv(&rows)?)?;
    let report = MetricsReport::new(
        section.split.as_str(),
        &preds.iter().map(|p| p.class).collect::<Vec<_>>(),
        &recs.iter().map(|r| r.label().index()).collect::<Vec<_>>(),
    )?;
    log::info!("balanced accuracy {:.4}", report.bac);
    out.write_json("report.json", &report)
}

/// Evenly spaced crops across all recordings of the test split.
fn probe_crops(recs: &[Recording], window: usize, n: usize) -> Result<Vec<ndarray::Array2<f32>>> {
    let mut all = Vec::new();
    for r in recs {
        all.extend(make_crops(r, window, window)?.into_iter().map(|c| c.data));
    }
    if all.is_empty() {
        bail!("no test recordings to draw probe crops from");
    }
    let take = n.min(all.len());
    Ok((0..take)
        .map(|i| all[i * all.len() / take].clone())
        .collect())
}

pub fn cka(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.cka, "cka")?;
    let a = Checkpoint::load(&section.checkpoint_a)?.to_model()?;
    let b = match &section.checkpoint_b {
        Some(p) => Checkpoint::load(p)?.to_model()?,
        None => a.clone(),
    };
    let window = a.spec().input_window_samples;
    if b.spec().input_window_samples != window {
        bail!("both checkpoints must use the same input window");
    }
    let loaded = ctx.load(out)?;
    let probe = probe_crops(&loaded.test, window, section.probe_size)?;
    let layers = section.layers.as_deref();
    let seed = ctx.cfg.seed;
    let acts_a = probe_activations(&a, &probe, layers, seed, section.batch_size)?;
    let acts_b = probe_activations(&b, &probe, layers, seed, section.batch_size)?;
    let name = |p: &std::path::Path| {
        p.file_stem()
            .map_or("model".into(), |s| s.to_string_lossy().into_owned())
    };
    let row_name = name(&section.checkpoint_a);
    let col_name = section
        .checkpoint_b
        .as_deref()
        .map_or_else(|| row_name.clone(), name);
    let heatmap = cka_heatmap(&row_name, &acts_a, &col_name, &acts_b)?;
    out.write("cka.csv", heatmap.to_csv()?)?;
    out.write_json("cka.json", &heatmap)
}

pub fn scaling(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.scaling, "scaling")?;
    let plan = ctx.plan()?;
    let loaded = ctx.load(out)?;
    let mut pool = loaded.train;
    pool.extend(loaded.valid);
    let rows = scaling_harness(
        &plan,
        &pool,
        &loaded.test,
        &section.sizes,
        &section.seeds,
        ctx.threads,
    )?;
    out.write("scaling.csv", rows_csv(&rows)?)?;
    out.write("summary.csv", rows_csv(&summarize_scaling(&rows))?)
}

pub fn transfer(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.transfer, "transfer")?;
    let plan = ctx.plan()?;
    let source = Checkpoint::load(&section.source_checkpoint)?;
    let loaded = ctx.load(out)?;
    let target_pool = loaded.pool(&section.target_tag);
    let target_test = Loaded::tagged(&loaded.test, &section.target_tag);
    let source_test = Loaded::tagged(&loaded.test, &section.source_tag);
    let gammas: Vec<Option<f64>> = section
        .gammas
        .iter()
        .map(|&g| (g != 1.0).then_some(g))
        .collect();
    let data = TransferData {
        source: &source,
        target_pool: &target_pool,
        target_test: &target_test,
        source_test: &source_test,
    };
    let (rows, forgetting) = transfer_harness(
        &plan,
        &data,
        &section.sizes,
        &section.seeds,
        &gammas,
        ctx.threads,
    )?;
    out.write("transfer.csv", rows_csv(&rows)?)?;
    out.write("forgetting.csv", rows_csv(&forgetting)?)
}

pub fn merged(ctx: &Ctx, out: &mut RunOutput) -> Result<()> {
    let section = require(&ctx.cfg.merged, "merged")?;
    let plan = ctx.plan()?;
    let loaded = ctx.load(out)?;
    let (s, t) = (&section.source_tag, &section.target_tag);
    let source_name = section.source_name.as_deref().unwrap_or(s);
    let target_name = section.target_name.as_deref().unwrap_or(t);
    let split = |recs: &[Recording], tag: &str| Loaded::tagged(recs, tag);
    let (source_train, source_valid, source_test) = (
        split(&loaded.train, s),
        split(&loaded.valid, s),
        split(&loaded.test, s),
    );
    let (target_train, target_valid, target_test) = (
        split(&loaded.train, t),
        split(&loaded.valid, t),
        split(&loaded.test, t),
    );
    let d = MergedData {
        source_name,
        target_name,
        source_train: &source_train,
        source_valid: &source_valid,
        target_train: &target_train,
        target_valid: &target_valid,
        source_test: &source_test,
        target_test: &target_test,
    };
    let rows = merged_training_harness(&plan, &d)?;
    out.write(
        "table.csv",
        regime_table_csv(&rows, source_name, target_name)?,
    )?;
    out.write_json("rows.json", &rows)
}
