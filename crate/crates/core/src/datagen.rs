//! Labeled corpora of stacked pilot observations.
//!
//! Each sample is a raw noisy observation `y_p` flattened as
//! `[Re y_1 .. Re y_L, Im y_1 .. Im y_L]` with the activity vector of the
//! generating frame as its multi-hot label. Corpora are generated in fixed
//! size shards, each with its own seeded stream, so the result does not
//! depend on how many workers produced it.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::signal::{self, MeasurementMatrix, SignalError};

pub const DATASET_MAGIC: &[u8] = b"SCMA-AUD-DS1";
const SHARD_SIZE: usize = 4096;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("malformed dataset header: {0}")]
    Header(String),
    #[error("dataset payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dataset payload has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// SNR used when sampling a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrSpec {
    Fixed(f64),
    /// Per-sample SNR drawn uniformly from `[low, high]` dB.
    Uniform { low: f64, high: f64 },
}

impl SnrSpec {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SnrSpec::Fixed(v) => v,
            SnrSpec::Uniform { low, high } if high > low => rng.random_range(low..=high),
            SnrSpec::Uniform { low, .. } => low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DatasetMeta {
    pub L: usize,
    pub N: usize,
    pub m: usize,
    pub snr: SnrSpec,
    pub seed: u64,
    pub count: usize,
}

impl DatasetMeta {
    pub fn input_dim(&self) -> usize {
        2 * self.L
    }
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub input: &'a [f32],
    pub label: &'a [u8],
}

/// Row-major storage: `inputs` is count×2L, `labels` is count×N.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    inputs: Vec<f32>,
    labels: Vec<u8>,
}

/// `[Re y, Im y]` stacking of a complex observation.
pub fn stack_real_imag(y: &[Complex64]) -> Vec<f64> {
    y.iter().map(|v| v.re).chain(y.iter().map(|v| v.im)).collect()
}

impl Dataset {
    pub fn from_parts(meta: DatasetMeta, inputs: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if inputs.len() != meta.count * meta.input_dim() || labels.len() != meta.count * meta.N {
            return Err(DatasetError::Dimension(format!(
                "{} inputs / {} labels do not fit {} samples of {}→{}",
                inputs.len(),
                labels.len(),
                meta.count,
                meta.input_dim(),
                meta.N
            )));
        }
        Ok(Self {
            meta,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.meta.count
    }

    pub fn is_empty(&self) -> bool {
        self.meta.count == 0
    }

    pub fn input_dim(&self) -> usize {
        self.meta.input_dim()
    }

    pub fn label_dim(&self) -> usize {
        self.meta.N
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        let d = self.input_dim();
        let n = self.label_dim();
        Sample {
            input: &self.inputs[i * d..(i + 1) * d],
            label: &self.labels[i * n..(i + 1) * n],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Sample<'_>> {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Contiguous sub-range `[start, start + count)` as a new dataset.
    pub fn slice(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.len() {
            return Err(DatasetError::Invalid(format!(
                "range {start}..{} exceeds {} samples",
                start + count,
                self.len()
            )));
        }
        let d = self.input_dim();
        let n = self.label_dim();
        let meta = DatasetMeta {
            count,
            ..self.meta.clone()
        };
        Ok(Self {
            meta,
            inputs: self.inputs[start * d..(start + count) * d].to_vec(),
            labels: self.labels[start * n..(start + count) * n].to_vec(),
        })
    }

    /// Train/validation/test split by contiguous blocks of the stream.
    pub fn split(&self, train: usize, val: usize, test: usize) -> Result<(Self, Self, Self)> {
        if train + val + test != self.len() {
            return Err(DatasetError::Invalid(format!(
                "split {train}+{val}+{test} does not cover {} samples",
                self.len()
            )));
        }
        Ok((
            self.slice(0, train)?,
            self.slice(train, val)?,
            self.slice(train + val, test)?,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(DATASET_MAGIC)?;
        out.write_all(b"\n")?;
        let header = serde_json::to_string(&self.meta).map_err(|e| DatasetError::Header(e.to_string()))?;
        out.write_all(header.as_bytes())?;
        out.write_all(b"\n")?;
        for v in &self.inputs {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.labels)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut magic = Vec::new();
        reader.read_until(b'\n', &mut magic)?;
        if magic.strip_suffix(b"\n") != Some(DATASET_MAGIC) {
            return Err(DatasetError::BadMagic);
        }
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let meta: DatasetMeta =
            serde_json::from_str(header.trim_end()).map_err(|e| DatasetError::Header(e.to_string()))?;
        if meta.L == 0 || meta.N == 0 {
            return Err(DatasetError::Header("L and N must be positive".into()));
        }
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        let n_inputs = meta.count * meta.input_dim();
        let expected = n_inputs * 4 + meta.count * meta.N;
        if payload.len() < expected {
            return Err(DatasetError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(DatasetError::TrailingBytes(payload.len() - expected));
        }
        let inputs = payload[..n_inputs * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let labels = payload[n_inputs * 4..].to_vec();
        if labels.iter().any(|&b| b > 1) {
            return Err(DatasetError::Header("labels must be 0 or 1".into()));
        }
        Self::from_parts(meta, inputs, labels)
    }
}

/// Samples `count` frames with `active` devices each.
pub fn generate_dataset(
    phi: &MeasurementMatrix,
    active: usize,
    snr: SnrSpec,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    let l = phi.num_resources();
    let n_dev = phi.num_devices();
    if count == 0 {
        return Err(DatasetError::Invalid("count must be at least 1".into()));
    }
    if active == 0 || active > n_dev {
        return Err(SignalError::ActiveCount {
            active,
            devices: n_dev,
        }
        .into());
    }

    let shards = count.div_ceil(SHARD_SIZE);
    let parts: Vec<(Vec<f32>, Vec<u8>)> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let len = SHARD_SIZE.min(count - shard * SHARD_SIZE);
            let mut rng = rng::stream_rng(rng::derive_seed(seed, &[shard as u64]), rng::stream::DATASET);
            let mut inputs = Vec::with_capacity(len * 2 * l);
            let mut labels = Vec::with_capacity(len * n_dev);
            for _ in 0..len {
                let snr_db = snr.draw(&mut rng);
                let frame = signal::sample_frame(phi, active, snr_db, &mut rng)?;
                push_observation(&mut inputs, &frame.y);
                labels.extend(frame.activity.as_slice().iter().map(|&a| a as u8));
            }
            Ok((inputs, labels))
        })
        .collect::<std::result::Result<_, SignalError>>()?;

    let mut inputs = Vec::with_capacity(count * 2 * l);
    let mut labels = Vec::with_capacity(count * n_dev);
    for (i, lab) in parts {
        inputs.extend(i);
        labels.extend(lab);
    }
    let meta = DatasetMeta {
        L: l,
        N: n_dev,
        m: active,
        snr,
        seed,
        count,
    };
    Dataset::from_parts(meta, inputs, labels)
}

fn push_observation(out: &mut Vec<f32>, y: &DVector<Complex64>) {
    out.extend(y.iter().map(|v| v.re as f32));
    out.extend(y.iter().map(|v| v.im as f32));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::System;

    fn phi() -> MeasurementMatrix {
        System::build(4, 6, 2, None, 1).unwrap().phi
    }

    #[test]
    fn stacking() {
        let y = [Complex64::new(1.0, 2.0), Complex64::new(3.0, -1.0)];
        assert_eq!(stack_real_imag(&y), vec![1.0, 3.0, 2.0, -1.0]);
        assert_eq!(stack_real_imag(&[Complex64::new(0.0, 0.0); 3]), vec![0.0; 6]);
        let real = stack_real_imag(&[Complex64::new(4.0, 0.0), Complex64::new(-2.0, 0.0)]);
        assert_eq!(&real[2..], &[0.0, 0.0]);
    }

    #[test]
    fn dimensions_and_labels() {
        let ds = generate_dataset(&phi(), 2, SnrSpec::Fixed(10.0), 1000, 3).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.input_dim(), 8);
        assert_eq!(ds.label_dim(), 6);
        for s in ds.iter() {
            assert_eq!(s.input.len(), 8);
            assert_eq!(s.label.iter().map(|&b| b as usize).sum::<usize>(), 2);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = SnrSpec::Uniform { low: 0.0, high: 30.0 };
        let a = generate_dataset(&phi(), 1, spec, 5000, 9).unwrap();
        let b = generate_dataset(&phi(), 1, spec, 5000, 9).unwrap();
        let c = generate_dataset(&phi(), 1, spec, 5000, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.inputs(), c.inputs());
    }

    #[test]
    fn labels_match_frame_support() {
        // Noiseless single-device samples: the observation lies on the
        // labelled column, so the label is recoverable by correlation.
        let phi = phi();
        let ds = generate_dataset(&phi, 1, SnrSpec::Fixed(f64::INFINITY), 200, 4).unwrap();
        for s in ds.iter() {
            let y: Vec<Complex64> = (0..4)
                .map(|l| Complex64::new(s.input[l] as f64, s.input[4 + l] as f64))
                .collect();
            let best = (0..6)
                .max_by(|&a, &b| {
                    let ca: Complex64 = (0..4).map(|l| phi.matrix()[(l, a)].conj() * y[l]).sum();
                    let cb: Complex64 = (0..4).map(|l| phi.matrix()[(l, b)].conj() * y[l]).sum();
                    ca.norm().total_cmp(&cb.norm())
                })
                .unwrap();
            assert_eq!(s.label[best], 1);
        }
    }

    #[test]
    fn invalid_requests() {
        assert!(generate_dataset(&phi(), 0, SnrSpec::Fixed(0.0), 10, 0).is_err());
        assert!(generate_dataset(&phi(), 7, SnrSpec::Fixed(0.0), 10, 0).is_err());
        assert!(generate_dataset(&phi(), 1, SnrSpec::Fixed(0.0), 0, 0).is_err());
    }

    #[test]
    fn split_is_contiguous() {
        let ds = generate_dataset(&phi(), 1, SnrSpec::Fixed(5.0), 100, 2).unwrap();
        let (tr, va, te) = ds.split(80, 10, 10).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));
        assert_eq!(va.sample(0), ds.sample(80));
        assert_eq!(te.sample(9), ds.sample(99));
        assert!(ds.split(80, 10, 11).is_err());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        let ds = generate_dataset(&phi(), 2, SnrSpec::Uniform { low: 0.0, high: 30.0 }, 300, 5).unwrap();
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);

        let bytes = std::fs::read(&path).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(Dataset::load(&path), Err(DatasetError::BadMagic)));

        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(Dataset::load(&path), Err(DatasetError::Truncated { .. })));

        // header claims more samples than the payload holds
        let text_end = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0;
        let header = std::str::from_utf8(&bytes[13..text_end]).unwrap();
        let mut meta: DatasetMeta = serde_json::from_str(header).unwrap();
        meta.count += 1;
        let mut forged = b"SCMA-AUD-DS1\n".to_vec();
        forged.extend(serde_json::to_string(&meta).unwrap().as_bytes());
        forged.push(b'\n');
        forged.extend(&bytes[text_end + 1..]);
        std::fs::write(&path, &forged).unwrap();
        assert!(matches!(Dataset::load(&path), Err(DatasetError::Truncated { .. })));
    }
}
