//! Model files: a text manifest (`<stem>.manifest`) describing the layer
//! stack, and a flat little-endian `f32` blob (`<stem>.weights`) holding all
//! parameters in layer order, weights before bias.
//!
//! ```text
//! format = myogate-model/1
//! seed = 7
//! input_shape = 1x10x20
//! layers = 9
//! layer.0 = conv2d in=1 out=32
//! ...
//! param.0.0 = 32x1x3x3
//! weights_len = 830920
//! checksum = sha256:<hex of the blob>
//! meta.<key> = <value>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{LayerSpec, Network, Tensor};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "myogate-model/1";

/// A network plus free-form metadata entries stored alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub network: Network<f32>,
    pub meta: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn dims(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn parse_dims(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| {
            d.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad dimension list `{s}`"),
            })
        })
        .collect()
}

impl ModelFile {
    pub fn new(network: Network<f32>) -> Self {
        ModelFile {
            network,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("model manifest lacks `meta.{key}`")))
    }

    /// Manifest text and weight blob.
    pub fn encode(&self) -> (String, Vec<u8>) {
        let net = &self.network;
        let mut blob = Vec::with_capacity(net.param_count() * 4);
        for t in net.params().iter().flatten() {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut m = String::new();
        let _ = writeln!(m, "format = {MODEL_FORMAT}");
        let _ = writeln!(m, "seed = {}", net.seed());
        let _ = writeln!(m, "input_shape = {}", dims(net.input_shape()));
        let _ = writeln!(m, "layers = {}", net.layers().len());
        for (i, l) in net.layers().iter().enumerate() {
            let _ = writeln!(m, "layer.{i} = {l}");
        }
        for (i, group) in net.params().iter().enumerate() {
            for (j, t) in group.iter().enumerate() {
                let _ = writeln!(m, "param.{i}.{j} = {}", dims(t.shape()));
            }
        }
        let _ = writeln!(m, "weights_len = {}", net.param_count());
        let _ = writeln!(m, "checksum = sha256:{}", sha256_hex(&blob));
        for (k, v) in &self.meta {
            let _ = writeln!(m, "meta.{k} = {v}");
        }
        (m, blob)
    }

    pub fn decode(manifest: &str, blob: &[u8]) -> Result<Self> {
        let mut entries: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
        for (n, raw) in manifest.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            entries.insert(k.trim(), (v.trim(), n + 1));
        }
        let get = |key: &str| -> Result<(&str, usize)> {
            entries.get(key).copied().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("manifest is missing `{key}`"),
            })
        };
        let int = |key: &str| -> Result<u64> {
            let (v, line) = get(key)?;
            v.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{key}` is not an integer"),
            })
        };

        let (format, _) = get("format")?;
        if format != MODEL_FORMAT {
            return Err(Error::Schema {
                expected: MODEL_FORMAT.into(),
                found: format.into(),
            });
        }
        let seed = int("seed")?;
        let (shape, line) = get("input_shape")?;
        let input_shape = parse_dims(shape, line)?;
        let layer_count = int("layers")? as usize;
        let mut layers = Vec::with_capacity(layer_count);
        for i in 0..layer_count {
            let (spec, line) = get(&format!("layer.{i}"))?;
            layers.push(spec.parse::<LayerSpec>().map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?);
        }

        let weights_len = int("weights_len")? as usize;
        if blob.len() != weights_len * 4 {
            return Err(Error::Data(format!(
                "weight blob holds {} bytes, manifest declares {} floats",
                blob.len(),
                weights_len
            )));
        }
        let (checksum, _) = get("checksum")?;
        let actual = format!("sha256:{}", sha256_hex(blob));
        if checksum != actual {
            return Err(Error::Data(format!("weight checksum mismatch: manifest {checksum}, blob {actual}")));
        }

        let mut floats = blob
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let mut params = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let mut group = Vec::new();
            for (j, expected) in layer.param_shapes().into_iter().enumerate() {
                let (declared, line) = get(&format!("param.{i}.{j}"))?;
                let declared = parse_dims(declared, line)?;
                if declared != expected {
                    return Err(Error::shape(&expected, &declared));
                }
                let n = expected.iter().product();
                let data: Vec<f32> = floats.by_ref().take(n).collect();
                if data.len() != n {
                    return Err(Error::Data("weight blob is shorter than the layer stack".into()));
                }
                group.push(Tensor::new(&expected, data)?);
            }
            params.push(group);
        }
        if floats.next().is_some() {
            return Err(Error::Data("weight blob is longer than the layer stack".into()));
        }
        let network = Network::from_parts(&input_shape, layers, params, seed)?;
        let meta = entries
            .iter()
            .filter_map(|(k, (v, _))| k.strip_prefix("meta.").map(|k| (k.to_string(), v.to_string())))
            .collect();
        Ok(ModelFile { network, meta })
    }

    pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("manifest"), stem.with_extension("weights"))
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let (mpath, wpath) = Self::paths(stem);
        let (manifest, blob) = self.encode();
        std::fs::write(&mpath, manifest).map_err(|e| Error::file(&mpath, e))?;
        std::fs::write(&wpath, blob).map_err(|e| Error::file(&wpath, e))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (mpath, wpath) = Self::paths(stem);
        let manifest = std::fs::read_to_string(&mpath).map_err(|e| Error::file(&mpath, e))?;
        let blob = std::fs::read(&wpath).map_err(|e| Error::file(&wpath, e))?;
        Self::decode(&manifest, &blob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network<f32> {
        Network::new(
            &[1, 3, 4],
            vec![
                LayerSpec::Conv2d { in_channels: 1, kernels: 2 },
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 24, outputs: 3 },
                LayerSpec::Softmax,
            ],
            99,
        )
        .unwrap()
    }

    #[test]
    fn bit_exact_round_trip() {
        let file = ModelFile::new(net()).with_meta("tau", 0.25).with_meta("classes", "3,7,9");
        let (m, b) = file.encode();
        let back = ModelFile::decode(&m, &b).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.encode(), (m, b));
    }

    #[test]
    fn corrupted_blob_detected() {
        let (m, mut b) = ModelFile::new(net()).encode();
        b[5] ^= 0x40;
        assert!(matches!(ModelFile::decode(&m, &b), Err(Error::Data(_))));
        let (m, b) = ModelFile::new(net()).encode();
        assert!(ModelFile::decode(&m, &b[..b.len() - 4]).is_err());
    }

    #[test]
    fn wrong_format_is_a_schema_error() {
        let (m, b) = ModelFile::new(net()).encode();
        let m = m.replace(MODEL_FORMAT, "myogate-model/0");
        assert!(matches!(ModelFile::decode(&m, &b), Err(Error::Schema { .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let (m, b) = ModelFile::new(net()).encode();
        let m = m.replacen("seed = 99", "seed 99", 1);
        match ModelFile::decode(&m, &b) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
