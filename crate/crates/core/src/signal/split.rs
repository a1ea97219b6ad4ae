use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Recording, Split};
use crate::error::{Error, Result};

/// Stratified recording-level split.
///
/// The train side receives `round(ratio * n)` recordings. Per-class quotas are
/// `ratio * n_class` rounded down, with the leftover slots given to the
/// classes with the largest remainders (lower class index first on ties), so
/// every class is within one recording of its exact share.
pub fn split_train_valid(
    recordings: Vec<Recording>,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Recording>, Vec<Recording>)> {
    if recordings.is_empty() {
        return Err(Error::EmptyInput("no recordings to split".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::EmptyInput(format!(
            "ratio {ratio} leaves one side of the split empty"
        )));
    }
    if let Some(r) = recordings.iter().find(|r| r.meta.split != Split::Train) {
        return Err(Error::InvalidInput(format!(
            "recording `{}` is tagged {}, expected train",
            r.meta.id,
            r.meta.split.as_str()
        )));
    }
    let n = recordings.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::EmptyInput(format!(
            "{n} recordings at ratio {ratio} leave one side empty"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in recordings.iter().enumerate() {
        by_class[r.label().index()].push(i);
    }
    let exact: Vec<f64> = by_class.iter().map(|v| ratio * v.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..2).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n_train - quota.iter().sum::<usize>();
    for &c in order.iter().cycle().take(4) {
        if left == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            left -= 1;
        }
    }

    let mut train_idx = Vec::with_capacity(n_train);
    let mut valid_idx = Vec::with_capacity(n - n_train);
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..quota[c]]);
        valid_idx.extend_from_slice(&members[quota[c]..]);
    }
    train_idx.shuffle(&mut rng);
    valid_idx.shuffle(&mut rng);

    let mut slots: Vec<Option<Recording>> = recordings.into_iter().map(Some).collect();
    let mut take = |idx: &[usize], split: Split| -> Vec<Recording> {
        idx.iter()
            .map(|&i| {
                let mut r = slots[i].take().expect("index used once");
                r.meta.split = split;
                r
            })
            .collect()
    };
    let train = take(&train_idx, Split::Train);
    let valid = take(&valid_idx, Split::Valid);
    Ok((train, valid))
}
