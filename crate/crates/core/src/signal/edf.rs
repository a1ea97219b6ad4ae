//! EDF reader and writer (16-bit samples, no EDF+ annotations).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::montage::{match_montage, normalize_label};
use super::{Recording, RecordingMeta};
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;
const PER_SIGNAL: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdfSignal {
    /// Label as stored in the file, before normalization.
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
}

impl EdfSignal {
    fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    fn to_physical(&self, d: i16) -> f64 {
        self.physical_min + (d as i32 - self.digital_min) as f64 * self.gain()
    }

    fn to_digital(&self, x: f64) -> i16 {
        let d = ((x - self.physical_min) / self.gain()).round() + self.digital_min as f64;
        d.clamp(self.digital_min as f64, self.digital_max as f64) as i16
    }

    fn unit_scale(&self) -> f64 {
        match self.physical_dimension.trim() {
            "mV" => 1e3,
            "V" => 1e6,
            "nV" => 1e-3,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdfHeader {
    pub version: String,
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub n_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<EdfSignal>,
}

impl EdfHeader {
    fn record_samples(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record).sum()
    }
}

struct Fields<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn take(&mut self, width: usize, field: &str) -> Result<&'a str> {
        let end = self.pos + width;
        let raw = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedHeader {
                field: field.to_string(),
                detail: "header ends early".into(),
            })?;
        self.pos = end;
        std::str::from_utf8(raw)
            .map(str::trim)
            .map_err(|_| Error::MalformedHeader {
                field: field.to_string(),
                detail: "not ASCII".into(),
            })
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, field: &str) -> Result<T> {
        let s = self.take(width, field)?;
        s.parse().map_err(|_| Error::MalformedHeader {
            field: field.to_string(),
            detail: format!("`{s}` is not a number"),
        })
    }
}

fn parse_header(bytes: &[u8]) -> Result<EdfHeader> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::MalformedHeader {
            field: "header".into(),
            detail: format!("{} bytes, need {FIXED_HEADER}", bytes.len()),
        });
    }
    let mut f = Fields { bytes, pos: 0 };
    let version = f.take(8, "version")?.to_string();
    let patient = f.take(80, "patient")?.to_string();
    let recording = f.take(80, "recording")?.to_string();
    let start_date = f.take(8, "start_date")?.to_string();
    let start_time = f.take(8, "start_time")?.to_string();
    let header_bytes: usize = f.number(8, "header_bytes")?;
    f.take(44, "reserved")?;
    let n_records: i64 = f.number(8, "n_records")?;
    let record_duration_s: f64 = f.number(8, "record_duration")?;
    let ns: usize = f.number(4, "n_signals")?;
    if ns == 0 {
        return Err(Error::MalformedHeader {
            field: "n_signals".into(),
            detail: "zero signals".into(),
        });
    }
    if header_bytes != FIXED_HEADER + ns * PER_SIGNAL {
        return Err(Error::MalformedHeader {
            field: "header_bytes".into(),
            detail: format!("{header_bytes} does not fit {ns} signals"),
        });
    }
    if !(record_duration_s > 0.0 && record_duration_s.is_finite()) {
        return Err(Error::MalformedHeader {
            field: "record_duration".into(),
            detail: format!("{record_duration_s} is not positive"),
        });
    }

    // Per-signal fields are stored column by column.
    let mut texts = |width: usize, field: &str| -> Result<Vec<String>> {
        (0..ns)
            .map(|_| f.take(width, field).map(String::from))
            .collect()
    };
    let labels = texts(16, "label")?;
    let transducers = texts(80, "transducer")?;
    let dims = texts(8, "physical_dimension")?;
    let pmin = texts(8, "physical_min")?;
    let pmax = texts(8, "physical_max")?;
    let dmin = texts(8, "digital_min")?;
    let dmax = texts(8, "digital_max")?;
    let prefilter = texts(80, "prefiltering")?;
    let spr = texts(8, "samples_per_record")?;

    fn num<T: std::str::FromStr>(s: &str, field: &str) -> Result<T> {
        s.parse().map_err(|_| Error::MalformedHeader {
            field: field.to_string(),
            detail: format!("`{s}` is not a number"),
        })
    }

    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let s = EdfSignal {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dimension: dims[i].clone(),
            physical_min: num(&pmin[i], "physical_min")?,
            physical_max: num(&pmax[i], "physical_max")?,
            digital_min: num(&dmin[i], "digital_min")?,
            digital_max: num(&dmax[i], "digital_max")?,
            prefiltering: prefilter[i].clone(),
            samples_per_record: num(&spr[i], "samples_per_record")?,
        };
        if s.digital_max <= s.digital_min {
            return Err(Error::MalformedHeader {
                field: "digital_max".into(),
                detail: format!("signal `{}`: digital range is empty", s.label),
            });
        }
        if s.physical_max == s.physical_min {
            return Err(Error::MalformedHeader {
                field: "physical_max".into(),
                detail: format!("signal `{}`: physical range is empty", s.label),
            });
        }
        if s.samples_per_record == 0 {
            return Err(Error::MalformedHeader {
                field: "samples_per_record".into(),
                detail: format!("signal `{}` has no samples", s.label),
            });
        }
        signals.push(s);
    }

    let record_bytes = 2 * signals.iter().map(|s| s.samples_per_record).sum::<usize>();
    let payload = bytes.len() - header_bytes.min(bytes.len());
    let n_records = if n_records < 0 {
        // -1 marks a file whose writer did not finish the header.
        payload / record_bytes
    } else {
        n_records as usize
    };
    Ok(EdfHeader {
        version,
        patient,
        recording,
        start_date,
        start_time,
        header_bytes,
        n_records,
        record_duration_s,
        signals,
    })
}

/// Parse an EDF byte stream into a recording in microvolts.
///
/// Signals sampled at a rate different from the montage electrodes (for
/// example annotation channels) are dropped. Fails with
/// [`Error::NoOverlapWithMontage`] when any `montage` electrode is absent.
pub fn parse_edf(
    bytes: &[u8],
    meta: RecordingMeta,
    montage: &[String],
) -> Result<(Recording, EdfHeader)> {
    let header = parse_header(bytes)?;
    let expected = header.n_records * header.record_samples() * 2;
    let actual = bytes.len().saturating_sub(header.header_bytes);
    if actual < expected {
        return Err(Error::TruncatedFile { expected, actual });
    }

    let names: Vec<String> = header
        .signals
        .iter()
        .map(|s| normalize_label(&s.label))
        .collect();
    let picked = match_montage(&names, montage).map_err(|missing| Error::NoOverlapWithMontage {
        found: montage.len() - missing.len(),
        required: montage.len(),
        missing,
    })?;
    let spr = header.signals[picked[0]].samples_per_record;
    if let Some(&bad) = picked
        .iter()
        .find(|&&i| header.signals[i].samples_per_record != spr)
    {
        return Err(Error::MalformedHeader {
            field: "samples_per_record".into(),
            detail: format!("montage channel `{}` has a different rate", names[bad]),
        });
    }
    let keep: Vec<usize> = (0..header.signals.len())
        .filter(|&i| header.signals[i].samples_per_record == spr)
        .collect();

    let n_samples = header.n_records * spr;
    let mut data = Array2::<f32>::zeros((keep.len(), n_samples));
    let offsets: Vec<usize> = header
        .signals
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.samples_per_record;
            Some(o)
        })
        .collect();
    let payload = &bytes[header.header_bytes..];
    let rec_len = header.record_samples();
    for (row, &si) in keep.iter().enumerate() {
        let sig = &header.signals[si];
        let scale = sig.unit_scale();
        let mut out = data.row_mut(row);
        for r in 0..header.n_records {
            let base = (r * rec_len + offsets[si]) * 2;
            for k in 0..spr {
                let p = base + 2 * k;
                let d = i16::from_le_bytes([payload[p], payload[p + 1]]);
                out[r * spr + k] = (sig.to_physical(d) * scale) as f32;
            }
        }
    }
    let channels = keep.iter().map(|&i| names[i].clone()).collect();
    let rate = spr as f64 / header.record_duration_s;
    Ok((Recording::new(meta, channels, data, rate)?, header))
}

fn ascii_field(s: &str, width: usize) -> Vec<u8> {
    let mut v: Vec<u8> = s.bytes().filter(u8::is_ascii).take(width).collect();
    v.resize(width, b' ');
    v
}

/// Shortest decimal rendering of `x` that fits in 8 characters.
fn number_field(x: f64) -> String {
    let plain = format!("{x}");
    if plain.len() <= 8 {
        return plain;
    }
    for prec in (0..8).rev() {
        let s = format!("{x:.prec$}");
        if s.len() <= 8 {
            return s;
        }
    }
    format!("{}", x.round() as i64)
}

/// Encode a recording as EDF with one-second records.
///
/// Each channel's physical range is its own min/max. The last record is
/// padded by repeating the final sample when the length is not a whole
/// number of seconds. Returns the bytes and the header as it will parse.
pub fn write_edf(rec: &Recording) -> Result<(Vec<u8>, EdfHeader)> {
    let spr = rec.sample_rate_hz.round() as usize;
    if spr == 0 || (rec.sample_rate_hz - spr as f64).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "EDF writer needs an integer sample rate, got {}",
            rec.sample_rate_hz
        )));
    }
    if rec.n_samples() == 0 {
        return Err(Error::EmptyInput("recording has no samples".into()));
    }
    let n_records = rec.n_samples().div_ceil(spr);
    let mut signals = Vec::with_capacity(rec.n_channels());
    for (c, name) in rec.channels.iter().enumerate() {
        let row = rec.data.row(c);
        let lo = row.iter().fold(f64::INFINITY, |m, &v| m.min(v as f64));
        let hi = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let (lo, hi) = if hi - lo < 1e-3 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        };
        // Round outward so the stored range still covers every sample.
        let pmin: f64 = number_field(lo.floor()).parse().unwrap();
        let pmax: f64 = number_field(hi.ceil()).parse().unwrap();
        signals.push(EdfSignal {
            label: format!("EEG {name}-REF"),
            transducer: String::new(),
            physical_dimension: "uV".into(),
            physical_min: pmin,
            physical_max: pmax,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record: spr,
        });
    }
    let header = EdfHeader {
        version: "0".into(),
        patient: rec.meta.id.clone(),
        recording: String::new(),
        start_date: "01.01.00".into(),
        start_time: "00.00.00".into(),
        header_bytes: FIXED_HEADER + PER_SIGNAL * signals.len(),
        n_records,
        record_duration_s: 1.0,
        signals,
    };

    let mut out = Vec::with_capacity(header.header_bytes + 2 * n_records * spr * rec.n_channels());
    out.extend(ascii_field(&header.version, 8));
    out.extend(ascii_field(&header.patient, 80));
    out.extend(ascii_field(&header.recording, 80));
    out.extend(ascii_field(&header.start_date, 8));
    out.extend(ascii_field(&header.start_time, 8));
    out.extend(ascii_field(&header.header_bytes.to_string(), 8));
    out.extend(ascii_field("", 44));
    out.extend(ascii_field(&n_records.to_string(), 8));
    out.extend(ascii_field(&number_field(header.record_duration_s), 8));
    out.extend(ascii_field(&header.signals.len().to_string(), 4));
    type Column = (usize, fn(&EdfSignal) -> String);
    let columns: [Column; 10] = [
        (16, |s| s.label.clone()),
        (80, |s| s.transducer.clone()),
        (8, |s| s.physical_dimension.clone()),
        (8, |s| number_field(s.physical_min)),
        (8, |s| number_field(s.physical_max)),
        (8, |s| s.digital_min.to_string()),
        (8, |s| s.digital_max.to_string()),
        (80, |s| s.prefiltering.clone()),
        (8, |s| s.samples_per_record.to_string()),
        (32, |_| String::new()),
    ];
    for (width, get) in columns {
        for s in &header.signals {
            out.extend(ascii_field(&get(s), width));
        }
    }
    debug_assert_eq!(out.len(), header.header_bytes);

    let n = rec.n_samples();
    for r in 0..n_records {
        for (c, sig) in header.signals.iter().enumerate() {
            let row = rec.data.row(c);
            for k in 0..spr {
                let i = (r * spr + k).min(n - 1);
                out.extend(sig.to_digital(row[i] as f64).to_le_bytes());
            }
        }
    }
    Ok((out, header))
}
