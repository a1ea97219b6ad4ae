//! Versioned binary checkpoint container.
//!
//! Layout, little-endian: magic `EEGCKPT`, version `u8`, arch id (`u8`
//! length and ASCII), SHA-256 of the config JSON, config JSON (`u32` length + UTF-8),
//! seed `u64`, epoch `u32`, step `u64`, valid BAC `f64`, tensor count `u32`,
//! then per tensor: name (`u16` length + UTF-8), rank `u8`, dims `u32`, f32
//! values. A trailing `u8` flags optimizer moments: step count `u64`, then
//! `m` and `v` for every parameter tensor in order.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{build, Arch, Model, ModelSpec};
use crate::train::optim::AdamW;

pub const MAGIC: &[u8; 7] = b"EEGCKPT";
pub const VERSION: u8 = 1;

pub type NamedTensor = (String, Vec<usize>, Vec<f32>);

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub seed: u64,
    pub epoch: usize,
    pub step: u64,
    pub valid_bac: f64,
    /// Parameters then batch-norm buffers, by name.
    pub tensors: Vec<NamedTensor>,
    pub moments: Option<AdamW>,
}

pub fn config_digest(config_json: &str) -> [u8; 32] {
    Sha256::digest(config_json.as_bytes()).into()
}

impl Checkpoint {
    pub fn from_model(
        model: &Model<f32>,
        seed: u64,
        epoch: usize,
        step: u64,
        valid_bac: f64,
    ) -> Self {
        Self {
            spec: model.spec().clone(),
            seed,
            epoch,
            step,
            valid_bac,
            tensors: model.named_tensors(),
            moments: None,
        }
    }

    pub fn arch(&self) -> Arch {
        self.spec.arch()
    }

    /// Rebuild the model described by the stored spec and tensors.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut m = build(&self.spec, 0)?;
        m.load_named(&self.tensors)?;
        Ok(m)
    }

    /// Copy the stored weights into `model`, which must be of the same family
    /// and expose exactly the same parameter names.
    pub fn load_into(&self, model: &mut Model<f32>) -> Result<()> {
        if model.arch() != self.arch() {
            return Err(Error::ArchMismatch {
                expected: model.arch().to_string(),
                found: self.arch().to_string(),
            });
        }
        model.load_named(&self.tensors)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_string(&self.spec)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let arch = self.arch().as_str();
        out.push(arch.len() as u8);
        out.extend_from_slice(arch.as_bytes());
        out.extend_from_slice(&config_digest(&config));
        put_len(&mut out, config.len())?;
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u32).to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.valid_bac.to_le_bytes());
        put_len(&mut out, self.tensors.len())?;
        for (name, shape, data) in &self.tensors {
            if name.len() > u16::MAX as usize || shape.len() > u8::MAX as usize {
                return Err(Error::InvalidCheckpoint(format!(
                    "tensor `{name}` cannot be encoded"
                )));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &d in shape {
                put_len(&mut out, d)?;
            }
            put_f32s(&mut out, data);
        }
        match &self.moments {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.t.to_le_bytes());
                put_len(&mut out, opt.m.len())?;
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    put_len(&mut out, m.len())?;
                    put_f32s(&mut out, m);
                    put_f32s(&mut out, v);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::InvalidCheckpoint("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::InvalidCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let n = r.u8()? as usize;
        let arch_id = r.str(n)?;
        let arch: Arch = arch_id.parse()?;
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let n = r.u32()? as usize;
        let config = r.str(n)?;
        if config_digest(&config) != digest {
            return Err(Error::InvalidCheckpoint("config digest mismatch".into()));
        }
        let spec: ModelSpec = serde_json::from_str(&config)?;
        if spec.arch() != arch {
            return Err(Error::InvalidCheckpoint(format!(
                "header says `{arch}` but config describes `{}`",
                spec.arch()
            )));
        }
        let seed = r.u64()?;
        let epoch = r.u32()? as usize;
        let step = r.u64()?;
        let valid_bac = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let n = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = r.str(n)?;
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product();
            tensors.push((name, shape, r.f32s(numel)?));
        }
        let moments = match r.u8()? {
            0 => None,
            1 => {
                let t = r.u64()?;
                let k = r.u32()? as usize;
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for _ in 0..k {
                    let len = r.u32()? as usize;
                    m.push(r.f32s(len)?);
                    v.push(r.f32s(len)?);
                }
                Some(AdamW { m, v, t })
            }
            f => return Err(Error::InvalidCheckpoint(format!("bad moments flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::InvalidCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            spec,
            seed,
            epoch,
            step,
            valid_bac,
            tensors,
            moments,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n)
        .map_err(|_| Error::InvalidCheckpoint(format!("length {n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::TruncatedFile {
                expected: self.pos.saturating_add(n),
                actual: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::InvalidCheckpoint("non-UTF-8 string".into()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or(Error::InvalidCheckpoint("tensor too large".into()))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(arch: Arch) -> Checkpoint {
        let m = build(&ModelSpec::canonical(arch), 3).unwrap();
        Checkpoint::from_model(&m, 3, 7, 120, 0.75)
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let mut c = ckpt(Arch::EegNet);
        let params: Vec<_> = c.to_model().unwrap().params().to_vec();
        let mut opt = AdamW::new(&params);
        opt.t = 5;
        opt.m[0][0] = 0.25;
        c.moments = Some(opt);
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn model_survives_round_trip() {
        let c = ckpt(Arch::ShallowNet);
        let m = Checkpoint::from_bytes(&c.to_bytes().unwrap())
            .unwrap()
            .to_model()
            .unwrap();
        assert_eq!(m.named_tensors(), c.tensors);
    }

    #[test]
    fn corrupted_inputs_rejected() {
        let bytes = ckpt(Arch::EegNet).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn wrong_architecture_never_loads() {
        let c = ckpt(Arch::EegNet);
        let mut other = build(&ModelSpec::canonical(Arch::ShallowNet), 0).unwrap();
        assert!(matches!(
            c.load_into(&mut other),
            Err(Error::ArchMismatch { .. })
        ));
    }
}
