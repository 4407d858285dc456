//! Binary codecs for models, datasets, and feature dumps, plus hashing.
//!
//! Three little-endian formats, each opening with an 8-byte magic and a
//! `u32` format version:
//!
//! * `MTPDCKPT` — a model checkpoint: the init seed, the length-prefixed
//!   JSON model spec, then every parameter as an `f64` in declaration order
//!   (backbone weight/bias pairs, neck, head).
//! * `MTPDDATA` — a dataset: generator seed, split tag, sample count and
//!   input dimension, inputs row-major as `f64`, then labels as `u32`.
//! * `MTPDFEAT` — a feature dump: producing model id, per-level
//!   channels×positions shapes, sample count, then all activations as `f32`
//!   level-major (each level's batch×channels×positions block row-major).
//!   The narrower float width keeps dumps small and makes the format easy
//!   for external producers to emit; ingestion widens back to `f64`.
//!
//! Byte-level encoders/decoders are exposed alongside the file helpers so
//! hashes and round-trip tests can work without touching a filesystem.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Dataset, FeatureSet, LevelShape, Model, ModelSpec, Params, Split};
use crate::tensor::Tensor;

const CKPT_MAGIC: &[u8; 8] = b"MTPDCKPT";
const DATA_MAGIC: &[u8; 8] = b"MTPDDATA";
const FEAT_MAGIC: &[u8; 8] = b"MTPDFEAT";
const FORMAT_VERSION: u32 = 1;

/// Sequential reader over a byte buffer with truncation-aware errors.
struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        ByteReader { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated {} file: wanted {} bytes at offset {}, have {}",
                self.what,
                n,
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got = self.take(8)?;
        if got != expected {
            return Err(Error::Format(format!(
                "bad magic for {} file: expected {:?}, got {:?}",
                self.what,
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported {} format version {v} (expected {FORMAT_VERSION})",
                self.what
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} file has {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Encode a model checkpoint.
pub fn model_to_bytes(model: &Model) -> Result<Vec<u8>> {
    let spec_json = serde_json::to_vec(&model.spec)
        .map_err(|e| Error::Format(format!("cannot serialize model spec: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u64(&mut out, model.init_seed);
    push_u32(
        &mut out,
        u32::try_from(spec_json.len())
            .map_err(|_| Error::Format("model spec too large".into()))?,
    );
    out.extend_from_slice(&spec_json);
    for t in model.params.tensors() {
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode a model checkpoint, validating the parameter payload length
/// against the embedded spec.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes, "checkpoint");
    r.magic(CKPT_MAGIC)?;
    r.version()?;
    let init_seed = r.u64()?;
    let spec_len = r.u32()? as usize;
    let spec_bytes = r.take(spec_len)?;
    let spec: ModelSpec = serde_json::from_slice(spec_bytes)
        .map_err(|e| Error::Format(format!("bad model spec in checkpoint: {e}")))?;
    spec.validate()?;
    let mut params = Params::zeros(&spec)?;
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = r.f64()?;
        }
    }
    r.done()?;
    Ok(Model { spec, params, init_seed })
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    Ok(std::fs::write(path, model_to_bytes(model)?)?)
}

pub fn read_model(path: &Path) -> Result<Model> {
    model_from_bytes(&std::fs::read(path)?)
}

/// Encode a dataset.
pub fn dataset_to_bytes(data: &Dataset) -> Result<Vec<u8>> {
    let n = data.len();
    let d = data.inputs.shape()[1];
    let mut out = Vec::new();
    out.extend_from_slice(DATA_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u64(&mut out, data.gen_seed);
    out.push(match data.split {
        Split::Train => 0,
        Split::Val => 1,
    });
    push_u64(&mut out, n as u64);
    push_u32(
        &mut out,
        u32::try_from(d).map_err(|_| Error::Format("input dimension too large".into()))?,
    );
    for &v in data.inputs.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &label in &data.labels {
        push_u32(
            &mut out,
            u32::try_from(label).map_err(|_| Error::Format("label too large".into()))?,
        );
    }
    Ok(out)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes, "dataset");
    r.magic(DATA_MAGIC)?;
    r.version()?;
    let gen_seed = r.u64()?;
    let split = match r.u8()? {
        0 => Split::Train,
        1 => Split::Val,
        other => return Err(Error::Format(format!("bad split tag {other}"))),
    };
    let n = r.u64()? as usize;
    let d = r.u32()? as usize;
    let mut inputs = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        inputs.push(r.f64()?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.u32()? as usize);
    }
    r.done()?;
    Ok(Dataset { inputs: Tensor::from_data(&[n, d], inputs)?, labels, split, gen_seed })
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    Ok(std::fs::write(path, dataset_to_bytes(data)?)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}

/// Encode a feature dump produced by `model_id` (activations narrow to
/// `f32`).
pub fn features_to_bytes(model_id: &str, features: &FeatureSet) -> Result<Vec<u8>> {
    if features.levels.is_empty() {
        return Err(Error::Argument("feature dump needs at least one level".into()));
    }
    let batch = features.batch_size();
    let mut out = Vec::new();
    out.extend_from_slice(FEAT_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    let id_bytes = model_id.as_bytes();
    push_u32(
        &mut out,
        u32::try_from(id_bytes.len()).map_err(|_| Error::Format("model id too long".into()))?,
    );
    out.extend_from_slice(id_bytes);
    push_u32(
        &mut out,
        u32::try_from(features.levels.len())
            .map_err(|_| Error::Format("too many levels".into()))?,
    );
    for shape in features.level_shapes() {
        push_u32(
            &mut out,
            u32::try_from(shape.channels).map_err(|_| Error::Format("channels too large".into()))?,
        );
        push_u32(
            &mut out,
            u32::try_from(shape.positions)
                .map_err(|_| Error::Format("positions too large".into()))?,
        );
    }
    push_u64(&mut out, batch as u64);
    for level in &features.levels {
        if level.shape()[0] != batch {
            return Err(Error::Dimension(format!(
                "level batch {} disagrees with first level's {batch}",
                level.shape()[0]
            )));
        }
        for &v in level.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn features_from_bytes(bytes: &[u8]) -> Result<(String, FeatureSet)> {
    let mut r = ByteReader::new(bytes, "feature dump");
    r.magic(FEAT_MAGIC)?;
    r.version()?;
    let id_len = r.u32()? as usize;
    let model_id = String::from_utf8(r.take(id_len)?.to_vec())
        .map_err(|_| Error::Format("model id is not UTF-8".into()))?;
    let level_count = r.u32()? as usize;
    if level_count == 0 {
        return Err(Error::Format("feature dump has zero levels".into()));
    }
    let mut shapes = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        let channels = r.u32()? as usize;
        let positions = r.u32()? as usize;
        shapes.push(LevelShape::new(channels, positions));
    }
    let batch = r.u64()? as usize;
    let mut levels = Vec::with_capacity(level_count);
    for shape in &shapes {
        let mut data = Vec::with_capacity(batch * shape.volume());
        for _ in 0..batch * shape.volume() {
            data.push(r.f32()? as f64);
        }
        levels.push(Tensor::from_data(&[batch, shape.channels, shape.positions], data)?);
    }
    r.done()?;
    Ok((model_id, FeatureSet { levels }))
}

pub fn write_features(path: &Path, model_id: &str, features: &FeatureSet) -> Result<()> {
    Ok(std::fs::write(path, features_to_bytes(model_id, features)?)?)
}

pub fn read_features(path: &Path) -> Result<(String, FeatureSet)> {
    features_from_bytes(&std::fs::read(path)?)
}

/// Lowercase hex SHA-256 digest of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Content hash of a model: the SHA-256 of its checkpoint encoding, so two
/// models hash equal iff their checkpoints are byte-identical.
pub fn model_hash(model: &Model) -> Result<String> {
    Ok(sha256_hex(&model_to_bytes(model)?))
}
