//! Model file: `SCMA-AUD-NN1\n`, one JSON header line, then little-endian
//! f32 parameters. Per layer: weight (row-major out×in), bias, and for
//! normalized layers scale, shift, running mean, running variance.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::BatchNorm;
use super::model::{Dense, Layer, Model, ModelConfig};
use super::tensor::Matrix;
use super::{NnError, Result};

pub const MODEL_MAGIC: &[u8] = b"SCMA-AUD-NN1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    trained: bool,
    /// Number of f32 values in the payload.
    values: usize,
}

fn payload_len(config: &ModelConfig) -> usize {
    config
        .layer_shapes()
        .iter()
        .map(|&(i, o, bn)| i * o + o + if bn { 4 * o } else { 0 })
        .sum()
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    let header = Header {
        version: FORMAT_VERSION,
        config: model.config().clone(),
        trained: model.is_trained(),
        values: payload_len(model.config()),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MODEL_MAGIC)?;
    out.write_all(b"\n")?;
    let json = serde_json::to_string(&header).map_err(|e| NnError::Format(e.to_string()))?;
    out.write_all(json.as_bytes())?;
    out.write_all(b"\n")?;
    let mut put = |xs: &[f32]| -> std::io::Result<()> {
        for v in xs {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    for layer in model.layers() {
        put(layer.dense.weight.as_slice())?;
        put(&layer.dense.bias)?;
        if let Some(n) = &layer.norm {
            put(&n.scale)?;
            put(&n.shift)?;
            put(&n.running_mean)?;
            put(&n.running_var)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut magic = Vec::new();
    reader.read_until(b'\n', &mut magic)?;
    if magic.strip_suffix(b"\n") != Some(MODEL_MAGIC) {
        return Err(NnError::Format("bad magic".into()));
    }
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| NnError::Format(e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(NnError::Format(format!("unsupported version {}", header.version)));
    }
    header.config.validate()?;
    let expected = payload_len(&header.config);
    if header.values != expected {
        return Err(NnError::Format(format!(
            "header declares {} values, config needs {expected}",
            header.values
        )));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 4 {
        return Err(NnError::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            expected * 4
        )));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |n: usize| -> Vec<f32> { values.by_ref().take(n).collect() };

    let mut layers = Vec::new();
    for (fan_in, fan_out, bn) in header.config.layer_shapes() {
        let weight = Matrix::from_vec(fan_out, fan_in, take(fan_in * fan_out));
        let bias = take(fan_out);
        let norm = bn.then(|| BatchNorm {
            scale: take(fan_out),
            shift: take(fan_out),
            running_mean: take(fan_out),
            running_var: take(fan_out),
        });
        if let Some(n) = &norm {
            if n.running_var.iter().any(|&v| !(v >= 0.0)) {
                return Err(NnError::Format("negative running variance".into()));
            }
        }
        layers.push(Layer {
            dense: Dense { weight, bias },
            norm,
        });
    }
    Model::from_layers(header.config, layers, header.trained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, Mode};
    use rand::SeedableRng;

    fn config(arch: Architecture) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            input_dim: 8,
            output_dim: 6,
            hidden_width: 16,
            depth: 3,
            dropout: 0.1,
            bn_epsilon: 1e-3,
            bn_momentum: 0.9,
        }
    }

    fn probe() -> Matrix<f32> {
        Matrix::from_vec(5, 8, (0..40).map(|i| ((i as f32) * 0.61).cos()).collect())
    }

    #[test]
    fn round_trip_preserves_inference() {
        let dir = tempfile::tempdir().unwrap();
        for arch in [Architecture::Dff, Architecture::ResNet] {
            let mut model = Model::<f32>::new(config(arch), 3).unwrap();
            // move the running statistics away from their defaults
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            model.forward(&probe(), Mode::Train, &mut rng).unwrap();
            model.mark_trained();
            let path = dir.path().join("m.bin");
            save_model(&model, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded.layers(), model.layers());
            assert_eq!(loaded.config(), model.config());
            assert!(loaded.is_trained());
            assert_eq!(loaded.predict(&probe()).unwrap(), model.predict(&probe()).unwrap());
        }
    }

    #[test]
    fn wrong_probe_width_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&Model::<f32>::new(config(Architecture::Dff), 0).unwrap(), &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let narrow = Matrix::from_vec(2, 6, vec![0.0f32; 12]);
        assert!(matches!(loaded.predict(&narrow), Err(NnError::Dimension(_))));
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&Model::<f32>::new(config(Architecture::ResNet), 0).unwrap(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_model(&path).is_err());

        let mut bad = bytes.clone();
        bad[3] = b'?';
        std::fs::write(&path, &bad).unwrap();
        assert!(load_model(&path).is_err());

        let header_end = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0;
        let mut forged = b"SCMA-AUD-NN1\n".to_vec();
        let header = std::str::from_utf8(&bytes[13..header_end]).unwrap().replace("\"version\":1", "\"version\":9");
        forged.extend(header.as_bytes());
        forged.extend(&bytes[header_end..]);
        std::fs::write(&path, &forged).unwrap();
        assert!(matches!(load_model(&path), Err(NnError::Format(_))));
    }
}
