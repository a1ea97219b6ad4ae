//! Loading recordings named by a manifest.

use std::path::Path;

use anyhow::Result;
use eegxfer::signal::montage::standard_montage;
use eegxfer::signal::{
    load_recording, preprocess, read_manifest, split_train_valid, Recording, Split,
};

use crate::config::DataConfig;
use crate::output::RunOutput;

pub struct Loaded {
    pub train: Vec<Recording>,
    pub valid: Vec<Recording>,
    pub test: Vec<Recording>,
}

impl Loaded {
    pub fn tagged(recs: &[Recording], tag: &str) -> Vec<Recording> {
        recs.iter()
            .filter(|r| r.meta.dataset_tag == tag)
            .cloned()
            .collect()
    }

    /// Train and validation recordings of one dataset.
    pub fn pool(&self, tag: &str) -> Vec<Recording> {
        let mut v = Self::tagged(&self.train, tag);
        v.extend(Self::tagged(&self.valid, tag));
        v
    }
}

/// Load every selected manifest row. Files that fail are recorded as item
/// errors and skipped. Without validation rows the train rows are split
/// per dataset with `train_ratio`.
pub fn load(cfg: &DataConfig, seed: u64, out: &mut RunOutput) -> Result<Loaded> {
    let entries = read_manifest(&cfg.manifest)?;
    let base = cfg.manifest.parent().unwrap_or(Path::new("."));
    let montage = cfg
        .preprocess
        .as_ref()
        .map_or_else(standard_montage, |p| p.montage.clone());
    let mut loaded = Loaded {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for e in &entries {
        if cfg
            .datasets
            .as_ref()
            .is_some_and(|d| !d.contains(&e.dataset_tag))
        {
            continue;
        }
        let rec = load_recording(e, base, &montage).and_then(|r| match &cfg.preprocess {
            Some(p) => preprocess(&r, p),
            None => Ok(r),
        });
        match rec {
            Ok(r) => match e.split {
                Split::Train => loaded.train.push(r),
                Split::Valid => loaded.valid.push(r),
                Split::Test => loaded.test.push(r),
            },
            Err(err) => out.item_error(e.path.display().to_string(), err),
        }
    }
    if loaded.valid.is_empty() && !loaded.train.is_empty() {
        let mut tags: Vec<String> = loaded
            .train
            .iter()
            .map(|r| r.meta.dataset_tag.clone())
            .collect();
        tags.sort();
        tags.dedup();
        let all = std::mem::take(&mut loaded.train);
        for tag in tags {
            let (tr, va) = split_train_valid(Loaded::tagged(&all, &tag), cfg.train_ratio, seed)?;
            loaded.train.extend(tr);
            loaded.valid.extend(va);
        }
    }
    Ok(loaded)
}
