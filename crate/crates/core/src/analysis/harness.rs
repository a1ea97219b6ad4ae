//! Experiment grids: data scaling, transfer with forgetting, and the four
//! merged-training regimes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::metrics::{mean_and_sem, MetricsReport};
use crate::error::{Error, Result};
use crate::models::{build, Model};
use crate::signal::{split_train_valid, Label, Recording};
use crate::train::{
    fine_tune, init_from, predict_all, train_observed, Checkpoint, EpochMetrics, SamplerKind,
    TrainPlan,
};

/// Fraction of a subsample used for training; the rest selects the epoch.
pub const TRAIN_RATIO: f64 = 0.8;

/// Evaluate `f` on every cell with up to `threads` workers. Results come
/// back in cell order, so output does not depend on scheduling.
pub fn run_cells<C, T, F>(cells: &[C], threads: usize, f: F) -> Result<Vec<T>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> Result<T> + Sync,
{
    if threads <= 1 || cells.len() <= 1 {
        return cells.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let r = f(&cells[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

/// Recording-level report of `model` on `recs`.
pub fn evaluate(
    model: &Model<f32>,
    recs: &[Recording],
    plan: &TrainPlan,
    name: &str,
) -> Result<MetricsReport> {
    let preds = predict_all(model, recs, plan.stride()?, plan.eval_batch_size)?;
    MetricsReport::new(
        name,
        &preds.iter().map(|p| p.class).collect::<Vec<_>>(),
        &recs.iter().map(|r| r.label().index()).collect::<Vec<_>>(),
    )
}

/// `n` recordings drawn without replacement with classes as balanced as the
/// pool allows, then split into train and validation sides.
pub fn stratified_subsample(
    pool: &[Recording],
    n: usize,
    seed: u64,
) -> Result<(Vec<Recording>, Vec<Recording>)> {
    if n > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "requested {n} recordings from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<&Recording>> = [Label::Normal, Label::Abnormal]
        .iter()
        .map(|&l| pool.iter().filter(|r| r.label() == l).collect())
        .collect();
    for v in &mut by_class {
        v.shuffle(&mut rng);
    }
    let half = n / 2;
    let take0 = half
        .max(n.saturating_sub(by_class[1].len()))
        .min(by_class[0].len());
    let take1 = n - take0;
    let mut picked: Vec<Recording> = by_class[0][..take0]
        .iter()
        .chain(&by_class[1][..take1])
        .map(|r| {
            let mut r = (*r).clone();
            r.meta.split = crate::signal::Split::Train;
            r
        })
        .collect();
    picked.sort_by(|a, b| a.id().cmp(b.id()));
    split_train_valid(picked, TRAIN_RATIO, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub size: usize,
    pub seed: u64,
    pub test_bac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub size: usize,
    pub mean_bac: f64,
    pub sem_bac: f64,
    pub n_seeds: usize,
}

/// Train on subsamples of `pool` of every size for every seed; the test
/// set is the same for all cells.
pub fn scaling_harness(
    plan: &TrainPlan,
    pool: &[Recording],
    test: &[Recording],
    sizes: &[usize],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<ScalingRow>> {
    let cells: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    run_cells(&cells, threads, |&(size, seed)| {
        let (tr, va) = stratified_subsample(pool, size, seed)?;
        let mut p = plan.clone();
        p.seed = seed;
        let out = train_observed(&p, None, &tr, &va, &mut |_, _| Ok(()))?;
        let bac = evaluate(&out.best.to_model()?, test, plan, "test")?.bac;
        Ok(ScalingRow {
            size,
            seed,
            test_bac: bac,
        })
    })
}

/// Mean and standard error of the test BAC per size, in size order.
pub fn summarize_scaling(rows: &[ScalingRow]) -> Vec<ScalingSummary> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.size == size)
                .map(|r| r.test_bac)
                .collect();
            let (mean_bac, sem_bac) = mean_and_sem(&v);
            ScalingSummary {
                size,
                mean_bac,
                sem_bac,
                n_seeds: v.len(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub size: usize,
    pub seed: u64,
    /// `scratch`, `finetune`, or `finetune_gamma{γ}`.
    pub regime: String,
    pub target_bac: f64,
    pub source_bac: f64,
}

/// Source-test BAC after each fine-tuning epoch; epoch 0 is the source model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRow {
    pub size: usize,
    pub seed: u64,
    pub regime: String,
    pub epoch: usize,
    pub source_bac: f64,
    pub target_valid_bac: f64,
}

pub struct TransferData<'a> {
    pub source: &'a Checkpoint,
    pub target_pool: &'a [Recording],
    pub target_test: &'a [Recording],
    /// May be empty: source columns are then NaN and no forgetting curve
    /// is recorded.
    pub source_test: &'a [Recording],
}

fn regime_name(gamma: Option<f64>) -> String {
    match gamma {
        None => "finetune".into(),
        Some(g) => format!("finetune_gamma{g}"),
    }
}

/// Scratch versus warm-started training for every target size and seed,
/// plus the source-test BAC after every fine-tuning epoch.
/// `gammas` lists the fine-tuning variants (`None` is uniform learning
/// rate). Size zero evaluates the untouched source model and a randomly
/// initialised one.
pub fn transfer_harness(
    plan: &TrainPlan,
    data: &TransferData,
    sizes: &[usize],
    seeds: &[u64],
    gammas: &[Option<f64>],
    threads: usize,
) -> Result<(Vec<TransferRow>, Vec<ForgettingRow>)> {
    let cells: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results = run_cells(&cells, threads, |&(size, seed)| {
        transfer_cell(plan, data, size, seed, gammas)
    })?;
    let mut rows = Vec::new();
    let mut forgetting = Vec::new();
    for (r, f) in results {
        rows.extend(r);
        forgetting.extend(f);
    }
    Ok((rows, forgetting))
}

fn transfer_cell(
    plan: &TrainPlan,
    data: &TransferData,
    size: usize,
    seed: u64,
    gammas: &[Option<f64>],
) -> Result<(Vec<TransferRow>, Vec<ForgettingRow>)> {
    let mut rows = Vec::new();
    let mut forgetting = Vec::new();
    let source_bac = |m: &Model<f32>| -> Result<f64> {
        if data.source_test.is_empty() {
            return Ok(f64::NAN);
        }
        Ok(evaluate(m, data.source_test, plan, "source")?.bac)
    };
    let eval = |m: &Model<f32>| -> Result<(f64, f64)> {
        Ok((
            evaluate(m, data.target_test, plan, "target")?.bac,
            source_bac(m)?,
        ))
    };
    let track = !data.source_test.is_empty();
    let mut p = plan.clone();
    p.seed = seed;
    if size == 0 {
        let (t, s) = eval(&build(&p.model, seed)?)?;
        rows.push(TransferRow {
            size,
            seed,
            regime: "scratch".into(),
            target_bac: t,
            source_bac: s,
        });
        let (t, s) = eval(&init_from(&p, data.source)?)?;
        for &g in gammas {
            rows.push(TransferRow {
                size,
                seed,
                regime: regime_name(g),
                target_bac: t,
                source_bac: s,
            });
        }
        return Ok((rows, forgetting));
    }
    let (tr, va) = stratified_subsample(data.target_pool, size, seed)?;
    let scratch = train_observed(&p, None, &tr, &va, &mut |_, _| Ok(()))?;
    let (t, s) = eval(&scratch.best.to_model()?)?;
    rows.push(TransferRow {
        size,
        seed,
        regime: "scratch".into(),
        target_bac: t,
        source_bac: s,
    });
    for &g in gammas {
        let mut pg = p.clone();
        pg.gamma = g;
        let regime = regime_name(g);
        let init = init_from(&pg, data.source)?;
        // epoch 0 is the source model before any target step
        if track {
            forgetting.push(ForgettingRow {
                size,
                seed,
                regime: regime.clone(),
                epoch: 0,
                source_bac: source_bac(&init)?,
                target_valid_bac: evaluate(&init, &va, plan, "valid")?.bac,
            });
        }
        let mut observe = |m: &EpochMetrics, model: &Model<f32>| -> Result<()> {
            if !track {
                return Ok(());
            }
            forgetting.push(ForgettingRow {
                size,
                seed,
                regime: regime.clone(),
                epoch: m.epoch,
                source_bac: source_bac(model)?,
                target_valid_bac: m.valid_bac,
            });
            Ok(())
        };
        let out = train_observed(&pg, Some(init), &tr, &va, &mut observe)?;
        let (t, s) = eval(&out.best.to_model()?)?;
        rows.push(TransferRow {
            size,
            seed,
            regime,
            target_bac: t,
            source_bac: s,
        });
    }
    Ok((rows, forgetting))
}

/// One line of the merged-training table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub model: String,
    pub train_on: String,
    pub bac_source: f64,
    pub bac_target: f64,
    /// BAC over the union of both test sets.
    pub bac_pooled: f64,
}

pub struct MergedData<'a> {
    pub source_name: &'a str,
    pub target_name: &'a str,
    pub source_train: &'a [Recording],
    pub source_valid: &'a [Recording],
    pub target_train: &'a [Recording],
    pub target_valid: &'a [Recording],
    pub source_test: &'a [Recording],
    pub target_test: &'a [Recording],
}

/// Source only, target only, both with the balanced sampler, and
/// pretrain-on-source then fine-tune-on-target.
pub fn merged_training_harness(plan: &TrainPlan, d: &MergedData) -> Result<Vec<RegimeRow>> {
    let model_name = plan.model.arch().display_name().to_string();
    let pooled: Vec<Recording> = d.source_test.iter().chain(d.target_test).cloned().collect();
    let row = |train_on: String, ck: &Checkpoint| -> Result<RegimeRow> {
        let m = ck.to_model()?;
        Ok(RegimeRow {
            model: model_name.clone(),
            train_on,
            bac_source: evaluate(&m, d.source_test, plan, d.source_name)?.bac,
            bac_target: evaluate(&m, d.target_test, plan, d.target_name)?.bac,
            bac_pooled: evaluate(&m, &pooled, plan, "pooled")?.bac,
        })
    };
    let src = train_observed(plan, None, d.source_train, d.source_valid, &mut |_, _| {
        Ok(())
    })?;
    let tgt = train_observed(plan, None, d.target_train, d.target_valid, &mut |_, _| {
        Ok(())
    })?;
    let mut merged_plan = plan.clone();
    merged_plan.sampler = SamplerKind::Balanced;
    let both_train: Vec<Recording> = d
        .source_train
        .iter()
        .chain(d.target_train)
        .cloned()
        .collect();
    let both_valid: Vec<Recording> = d
        .source_valid
        .iter()
        .chain(d.target_valid)
        .cloned()
        .collect();
    let both = train_observed(&merged_plan, None, &both_train, &both_valid, &mut |_, _| {
        Ok(())
    })?;
    let ft = fine_tune(plan, &src.best, d.target_train, d.target_valid)?;
    Ok(vec![
        row(d.source_name.to_string(), &src.best)?,
        row(d.target_name.to_string(), &tgt.best)?,
        row(format!("{}+{}", d.source_name, d.target_name), &both.best)?,
        row(format!("Pt{}>Ft{}", d.source_name, d.target_name), &ft.best)?,
    ])
}

/// The regime table as CSV with header
/// `Model,Train on,BAC {src},BAC {tgt},{src}+{tgt}`.
pub fn regime_table_csv(
    rows: &[RegimeRow],
    source_name: &str,
    target_name: &str,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Model".to_string(),
        "Train on".to_string(),
        format!("BAC {source_name}"),
        format!("BAC {target_name}"),
        format!("{source_name}+{target_name}"),
    ])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.train_on.clone(),
            format!("{:.4}", r.bac_source),
            format!("{:.4}", r.bac_target),
            format!("{:.4}", r.bac_pooled),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Serialize rows with a header derived from the field names.
pub fn rows_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::RecordingMeta;
    use ndarray::Array2;

    fn pool(n0: usize, n1: usize) -> Vec<Recording> {
        (0..n0 + n1)
            .map(|i| {
                let label = if i < n0 {
                    Label::Normal
                } else {
                    Label::Abnormal
                };
                Recording::new(
                    RecordingMeta::new(format!("r{i:03}"), label),
                    vec!["Cz".into()],
                    Array2::zeros((1, 10)),
                    100.0,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn subsample_is_balanced_and_split() {
        let (tr, va) = stratified_subsample(&pool(30, 12), 10, 4).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        let abn = tr
            .iter()
            .chain(&va)
            .filter(|r| r.label() == Label::Abnormal)
            .count();
        assert_eq!(abn, 5);
        assert!(
            va.iter().any(|r| r.label() == Label::Abnormal)
                && va.iter().any(|r| r.label() == Label::Normal)
        );
        // a short class is exhausted before the other class fills the rest
        let (tr, va) = stratified_subsample(&pool(30, 3), 20, 4).unwrap();
        assert_eq!(
            tr.iter()
                .chain(&va)
                .filter(|r| r.label() == Label::Abnormal)
                .count(),
            3
        );
        assert!(stratified_subsample(&pool(3, 3), 7, 0).is_err());
    }

    #[test]
    fn cells_keep_their_order() {
        let cells: Vec<u64> = (0..23).collect();
        let out = run_cells(&cells, 4, |&c| Ok(c * c)).unwrap();
        assert_eq!(out, cells.iter().map(|c| c * c).collect::<Vec<_>>());
        assert!(run_cells(&cells, 3, |&c| if c == 7 {
            Err(Error::EmptyInput("x".into()))
        } else {
            Ok(c)
        })
        .is_err());
    }

    #[test]
    fn spearman_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // ranks x: 1 2 3, y: 1.5 1.5 3 -> rho = sqrt(3)/2
        let rho = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 9.0]);
        assert!((rho - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn regime_header() {
        let rows = vec![RegimeRow {
            model: "EEGNet".into(),
            train_on: "Ptsrc>Fttgt".into(),
            bac_source: 0.8,
            bac_target: 0.7,
            bac_pooled: 0.75,
        }];
        let csv = regime_table_csv(&rows, "TUAB", "NMT").unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "Model,Train on,BAC TUAB,BAC NMT,TUAB+NMT"
        );
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "EEGNet,Ptsrc>Fttgt,0.8000,0.7000,0.7500"
        );
    }

    #[test]
    fn scaling_summary_groups_sizes() {
        let rows = vec![
            ScalingRow {
                size: 50,
                seed: 0,
                test_bac: 0.7,
            },
            ScalingRow {
                size: 10,
                seed: 0,
                test_bac: 0.5,
            },
            ScalingRow {
                size: 50,
                seed: 1,
                test_bac: 0.9,
            },
        ];
        let s = summarize_scaling(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].size, s[0].n_seeds), (10, 1));
        assert!((s[1].mean_bac - 0.8).abs() < 1e-12 && (s[1].sem_bac - 0.1).abs() < 1e-12);
    }
}
