//! Raw float container for preprocessed or synthetic recordings.
//!
//! Layout, little-endian: magic `EEGX`, version u32, channel count u32,
//! sample count u64, rate f64, label u8, then the f32 samples channel by
//! channel. Channel names and the remaining metadata live in the manifest.

use ndarray::Array2;

use super::{montage, Label, Recording, RecordingMeta};
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"EEGX";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 1;

pub fn write_container(rec: &Recording) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * rec.data.len());
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend(CONTAINER_VERSION.to_le_bytes());
    out.extend((rec.n_channels() as u32).to_le_bytes());
    out.extend((rec.n_samples() as u64).to_le_bytes());
    out.extend(rec.sample_rate_hz.to_le_bytes());
    out.push(rec.label().index() as u8);
    for row in rec.data.rows() {
        for v in row {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

/// Decode a container. The label stored in the file overrides `meta.label`.
/// Channels are named from `channels`, or the standard montage when `None`.
pub fn read_container(
    bytes: &[u8],
    mut meta: RecordingMeta,
    channels: Option<Vec<String>>,
) -> Result<Recording> {
    let bad = |field: &str, detail: String| Error::MalformedHeader {
        field: field.to_string(),
        detail,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(
            "header",
            format!("{} bytes, need {HEADER_LEN}", bytes.len()),
        ));
    }
    if &bytes[..4] != CONTAINER_MAGIC {
        return Err(bad("magic", "not an EEGX container".into()));
    }
    let u32_at = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CONTAINER_VERSION {
        return Err(bad("version", format!("unsupported version {version}")));
    }
    let n_channels = u32_at(8) as usize;
    let n_samples = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let rate = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    meta.label = Label::from_index(bytes[28] as usize)
        .map_err(|_| bad("label", format!("label byte {}", bytes[28])))?;

    let expected = n_channels
        .checked_mul(n_samples)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("n_samples", "size overflows".into()))?;
    let actual = bytes.len() - HEADER_LEN;
    if actual < expected {
        return Err(Error::TruncatedFile { expected, actual });
    }
    let values: Vec<f32> = bytes[HEADER_LEN..HEADER_LEN + expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array2::from_shape_vec((n_channels, n_samples), values)
        .map_err(|e| bad("payload", e.to_string()))?;
    let channels = channels.unwrap_or_else(montage::standard_montage);
    Recording::new(meta, channels, data, rate)
}
