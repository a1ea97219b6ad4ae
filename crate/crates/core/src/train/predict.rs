//! Recording-level inference by averaging crop probabilities.

use ndarray::s;
use numcore::Tensor;

use crate::error::{Error, Result};
use crate::models::Model;
use crate::signal::Recording;
use crate::train::crops::crop_offsets;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: [f64; 2],
}

/// Softmax over classes of `[batch, 2, positions]` logits, averaged over
/// positions: one `[p0, p1]` per batch entry.
pub fn mean_crop_probs(logits: &Tensor<f32>) -> Vec<[f64; 2]> {
    let shape = logits.shape();
    let (b, k, p) = (shape[0], shape[1], shape[2]);
    debug_assert_eq!(k, 2);
    let d = logits.data();
    (0..b)
        .map(|i| {
            let mut acc = [0.0f64; 2];
            for t in 0..p {
                let z0 = d[(i * k) * p + t] as f64;
                let z1 = d[(i * k + 1) * p + t] as f64;
                let m = z0.max(z1);
                let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
                acc[0] += e0 / (e0 + e1);
                acc[1] += e1 / (e0 + e1);
            }
            [acc[0] / p as f64, acc[1] / p as f64]
        })
        .collect()
}

/// Mean of crop probabilities; ties go to class 0.
pub fn aggregate(crop_probs: &[[f64; 2]]) -> Result<Prediction> {
    if crop_probs.is_empty() {
        return Err(Error::EmptyInput(
            "no crop probabilities to aggregate".into(),
        ));
    }
    let n = crop_probs.len() as f64;
    let mut probs = [0.0; 2];
    for p in crop_probs {
        probs[0] += p[0];
        probs[1] += p[1];
    }
    probs[0] /= n;
    probs[1] /= n;
    let class = usize::from(probs[1] > probs[0]);
    Ok(Prediction { class, probs })
}

/// Eval-mode prediction of one recording from all crops at `stride`.
pub fn predict_recording(
    model: &Model<f32>,
    rec: &Recording,
    stride: usize,
    batch_size: usize,
) -> Result<Prediction> {
    let w = model.spec().input_window_samples;
    let c = model.spec().n_channels;
    if rec.n_channels() != c {
        return Err(Error::InvalidInput(format!(
            "recording `{}` has {} channels, model expects {c}",
            rec.id(),
            rec.n_channels()
        )));
    }
    let offsets = crop_offsets(rec.id(), rec.n_samples(), w, stride)?;
    let mut probs = Vec::with_capacity(offsets.len());
    for chunk in offsets.chunks(batch_size.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * c * w);
        for &o in chunk {
            data.extend(rec.data.slice(s![.., o..o + w]).iter());
        }
        let logits = model.predict_logits(Tensor::from_vec(vec![chunk.len(), c, w], data)?)?;
        probs.extend(mean_crop_probs(&logits));
    }
    aggregate(&probs)
}

pub fn predict_all(
    model: &Model<f32>,
    recs: &[Recording],
    stride: usize,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    recs.iter()
        .map(|r| predict_recording(model, r, stride, batch_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_votes() {
        let p = aggregate(&[[0.1, 0.9]; 5]).unwrap();
        assert_eq!(p.class, 1);
        assert!((p.probs[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn hand_mean() {
        let p = aggregate(&[[0.6, 0.4], [0.2, 0.8]]).unwrap();
        assert!((p.probs[0] - 0.4).abs() < 1e-12 && (p.probs[1] - 0.6).abs() < 1e-12);
        assert_eq!(p.class, 1);
    }

    #[test]
    fn tie_goes_to_normal() {
        assert_eq!(aggregate(&[[0.5, 0.5]]).unwrap().class, 0);
    }

    #[test]
    fn position_mean_of_softmax() {
        let logits = Tensor::from_vec(vec![1, 2, 2], vec![0.0, 0.0, 0.0, 2.0f32.ln()]).unwrap();
        let p = mean_crop_probs(&logits)[0];
        assert!((p[1] - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-7);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }
}
