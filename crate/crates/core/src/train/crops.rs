use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::signal::{Label, Recording};

/// One training window cut from a recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub id: String,
    pub label: Label,
    pub offset: usize,
    /// `[channels, crop_len]`.
    pub data: Array2<f32>,
}

/// Start offsets `0, stride, 2 * stride, ...` of every crop fully inside `n` samples.
pub fn crop_offsets(id: &str, n: usize, crop_len: usize, stride: usize) -> Result<Vec<usize>> {
    if crop_len == 0 || stride == 0 || stride > crop_len {
        return Err(Error::InvalidConfig(format!(
            "crop stride {stride} must lie in 1..={crop_len}"
        )));
    }
    if n < crop_len {
        return Err(Error::TooShort {
            id: id.to_string(),
            samples: n,
            required: crop_len,
        });
    }
    Ok((0..=(n - crop_len) / stride).map(|k| k * stride).collect())
}

pub fn make_crops(rec: &Recording, crop_len: usize, stride: usize) -> Result<Vec<Crop>> {
    let offsets = crop_offsets(rec.id(), rec.n_samples(), crop_len, stride)?;
    Ok(offsets
        .into_iter()
        .map(|o| Crop {
            id: rec.id().to_string(),
            label: rec.label(),
            offset: o,
            data: rec.data.slice(s![.., o..o + crop_len]).to_owned(),
        })
        .collect())
}
