//! CSV manifest: `path,label,split,dataset_tag,age,gender`, one row per recording.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    parse_edf, read_container, Gender, Label, Recording, RecordingMeta, Split, CONTAINER_MAGIC,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
    pub dataset_tag: String,
    pub age: Option<f64>,
    pub gender: Option<Gender>,
}

impl ManifestEntry {
    /// Recording id: the file stem.
    pub fn id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.to_string_lossy().into_owned())
    }

    pub fn meta(&self) -> RecordingMeta {
        RecordingMeta {
            id: self.id(),
            label: self.label,
            dataset_tag: self.dataset_tag.clone(),
            split: self.split,
            age_years: self.age,
            gender: self.gender,
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load the file behind a manifest row. Relative paths resolve against
/// `base_dir`. The format is sniffed from the first bytes: EEGX containers
/// are read directly, anything else is parsed as EDF.
pub fn load_recording(
    entry: &ManifestEntry,
    base_dir: &Path,
    montage: &[String],
) -> Result<Recording> {
    let path = if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        base_dir.join(&entry.path)
    };
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta = entry.meta();
    if bytes.starts_with(CONTAINER_MAGIC) {
        let rec = read_container(&bytes, meta, Some(montage.to_vec()))?;
        if rec.meta.label != entry.label {
            return Err(Error::InvalidInput(format!(
                "{}: container label {} disagrees with manifest label {}",
                path.display(),
                rec.meta.label.as_str(),
                entry.label.as_str()
            )));
        }
        Ok(rec)
    } else {
        Ok(parse_edf(&bytes, meta, montage)?.0)
    }
}
