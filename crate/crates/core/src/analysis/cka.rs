//! Linear centred kernel alignment between layer activations.

use ndarray::{s, Array2, Axis};
use numcore::{Graph, Tensor};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

/// Layers wider than this are column-subsampled before comparison.
pub const MAX_FEATURES: usize = 8192;
/// Default number of probe crops.
pub const PROBE_SIZE: usize = 512;

/// Activations of one layer: one row per probe crop, features flattened
/// channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    pub layer: String,
    pub values: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaMatrix {
    pub row_model: String,
    pub col_model: String,
    pub row_layers: Vec<String>,
    pub col_layers: Vec<String>,
    /// Row-major `[row_layers, col_layers]`.
    pub values: Vec<Vec<f64>>,
}

fn center_columns(x: &Array2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    x - &mean
}

/// `X X^T` of the column-centred activations.
pub fn centered_gram(x: &Array2<f64>) -> Array2<f64> {
    let c = center_columns(x);
    c.dot(&c.t())
}

/// CKA from two centred Gram matrices: `<K, L> / (|K| |L|)`. Zero when
/// either layer has no variance across the probe set.
pub fn cka_from_grams(k: &Array2<f64>, l: &Array2<f64>) -> f64 {
    let kl = (k * l).sum();
    let denom = ((k * k).sum() * (l * l).sum()).sqrt();
    if denom <= f64::MIN_POSITIVE || !denom.is_finite() {
        log::warn!("degenerate activations in CKA; reporting 0");
        return 0.0;
    }
    kl / denom
}

/// `|Y^T X|_F^2 / (|X^T X|_F |Y^T Y|_F)` on column-centred inputs.
pub fn linear_cka(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::InvalidInput(format!(
            "CKA needs the same probe set: {} vs {} rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidInput(
            "CKA needs at least two probe rows".into(),
        ));
    }
    Ok(cka_from_grams(&centered_gram(x), &centered_gram(y)))
}

/// Run `probe` (crops `[channels, window]`) through `model` in eval mode and
/// collect the output of the selected layer groups (all when `layers` is
/// `None`), subsampling wide layers to [`MAX_FEATURES`] seeded columns.
pub fn probe_activations(
    model: &Model<f32>,
    probe: &[Array2<f32>],
    layers: Option<&[String]>,
    seed: u64,
    batch_size: usize,
) -> Result<Vec<ActivationMatrix>> {
    if probe.is_empty() {
        return Err(Error::EmptyInput("probe set is empty".into()));
    }
    let names = model.trace_names();
    let selected: Vec<usize> = match layers {
        None => (0..names.len()).collect(),
        Some(wanted) => wanted
            .iter()
            .map(|w| {
                names
                    .iter()
                    .position(|n| n == w)
                    .ok_or_else(|| Error::UnknownLayer(w.clone()))
            })
            .collect::<Result<_>>()?,
    };
    let (c, w) = probe[0].dim();
    let mut columns: Vec<Option<Vec<usize>>> = vec![None; selected.len()];
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); selected.len()];
    let mut widths = vec![0usize; selected.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in probe.chunks(batch_size.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * c * w);
        for x in chunk {
            if x.dim() != (c, w) {
                return Err(Error::InvalidInput("probe crops differ in shape".into()));
            }
            data.extend(x.iter());
        }
        let mut g = Graph::new();
        let params = model.bind(&mut g, false);
        let xv = g.leaf(Tensor::from_vec(vec![chunk.len(), c, w], data)?, false);
        let fwd = model.forward(&mut g, xv, &params, false, true, &mut rng)?;
        for (slot, &li) in selected.iter().enumerate() {
            let (_, var) = &fwd.trace[li];
            let t = g.value(*var);
            let d = t.numel() / chunk.len();
            if columns[slot].is_none() {
                widths[slot] = d.min(MAX_FEATURES);
                if d > MAX_FEATURES {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    r.set_stream(li as u64);
                    let mut cols = sample(&mut r, d, MAX_FEATURES).into_vec();
                    cols.sort_unstable();
                    columns[slot] = Some(cols);
                } else {
                    columns[slot] = Some((0..d).collect());
                }
            }
            let cols = columns[slot].as_ref().unwrap();
            for row in t.data().chunks(d) {
                out[slot].extend(cols.iter().map(|&j| row[j] as f64));
            }
        }
    }
    Ok(selected
        .iter()
        .zip(out)
        .zip(widths)
        .map(|((&li, v), d)| ActivationMatrix {
            layer: names[li].clone(),
            values: Array2::from_shape_vec((probe.len(), d), v).expect("rows times width"),
        })
        .collect())
}

/// All-pairs CKA between the layers of two probe runs over the same crops.
pub fn cka_heatmap(
    row_model: &str,
    rows: &[ActivationMatrix],
    col_model: &str,
    cols: &[ActivationMatrix],
) -> Result<CkaMatrix> {
    let n = rows.first().map(|a| a.values.nrows()).unwrap_or(0);
    if rows.iter().chain(cols).any(|a| a.values.nrows() != n) {
        return Err(Error::InvalidInput(
            "activation matrices cover different probe sets".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidInput(
            "CKA needs at least two probe rows".into(),
        ));
    }
    let grams_r: Vec<Array2<f64>> = rows.iter().map(|a| centered_gram(&a.values)).collect();
    let grams_c: Vec<Array2<f64>> = cols.iter().map(|a| centered_gram(&a.values)).collect();
    let mut values = Vec::with_capacity(rows.len());
    for k in &grams_r {
        let mut row = Vec::with_capacity(cols.len());
        for l in &grams_c {
            let v = cka_from_grams(k, l);
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(Error::InvalidInput(format!("CKA value {v} outside [0, 1]")));
            }
            row.push(v.clamp(0.0, 1.0));
        }
        values.push(row);
    }
    Ok(CkaMatrix {
        row_model: row_model.to_string(),
        col_model: col_model.to_string(),
        row_layers: rows.iter().map(|a| a.layer.clone()).collect(),
        col_layers: cols.iter().map(|a| a.layer.clone()).collect(),
        values,
    })
}

impl CkaMatrix {
    /// Long-format CSV: `row_layer,col_layer,cka`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row_layer", "col_layer", "cka"])?;
        for (r, row) in self.row_layers.iter().zip(&self.values) {
            for (c, v) in self.col_layers.iter().zip(row) {
                w.write_record([r.as_str(), c.as_str(), &v.to_string()])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Mean of each diagonal entry, used to compare early and late layers.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.values.len().min(self.col_layers.len()))
            .map(|i| self.values[i][i])
            .collect()
    }
}

/// Keep every row of `a` but only the first `d` columns. Handy for tests.
pub fn truncate_columns(a: &Array2<f64>, d: usize) -> Array2<f64> {
    a.slice(s![.., ..d.min(a.ncols())]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, Arch, ModelSpec};

    fn rand_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn self_similarity_is_one() {
        let x = rand_matrix(10, 4, 1);
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_layer_is_zero() {
        let x = Array2::from_elem((6, 3), 2.0);
        let y = rand_matrix(6, 3, 2);
        assert_eq!(linear_cka(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn row_count_mismatch_rejected() {
        assert!(linear_cka(&rand_matrix(5, 2, 0), &rand_matrix(6, 2, 0)).is_err());
    }

    #[test]
    fn eegnet_probe_shapes() {
        let mut spec = ModelSpec::canonical(Arch::EegNet);
        spec.input_window_samples = 630;
        let m = build(&spec, 0).unwrap();
        let probe: Vec<Array2<f32>> = (0..5)
            .map(|i| Array2::from_shape_fn((21, 630), |(c, t)| ((i + c * 7 + t) % 13) as f32 * 0.1))
            .collect();
        let acts = probe_activations(&m, &probe, None, 0, 2).unwrap();
        assert!(acts.iter().all(|a| a.values.nrows() == 5));
        let last = acts.last().unwrap();
        assert_eq!(last.layer, "classifier");
        assert_eq!(last.values.ncols(), 2 * (630 - 619 + 1));
        assert_eq!(acts, probe_activations(&m, &probe, None, 0, 3).unwrap());
        assert!(matches!(
            probe_activations(&m, &probe, Some(&["block9".to_string()]), 0, 2),
            Err(Error::UnknownLayer(_))
        ));
    }
}
