//! Single-file model archive: a JSON header followed by little-endian tensors.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, the
//! UTF-8 JSON header, then every tensor back to back in header order.
//! Tensor names follow `gen.*` for the generator and `psi_g.*`, `psi_l.*`,
//! `psi_c.*` for the discriminator.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::metrics::Segmenter;
use crate::models::{ContextDiscriminator, ContextDiscriminatorConfig, GeneratorConfig, ThresholdSegmenter, UNet};
use crate::nn::{Param, Parameterized};
use crate::{Error, Result, Scalar};

pub const MAGIC: &[u8; 8] = b"CTXSEGCK";
pub const FORMAT_VERSION: u32 = 1;
const GEN_PREFIX: &str = "gen";

/// Any segmenter that can be stored and evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum SegmenterModel<T> {
    UNet(UNet<T>),
    Threshold(ThresholdSegmenter),
}

impl<T: Scalar> SegmenterModel<T> {
    pub fn num_classes(&self) -> usize {
        match self {
            SegmenterModel::UNet(u) => u.config().num_classes,
            SegmenterModel::Threshold(t) => t.num_classes(),
        }
    }

    /// Rejects images the model cannot take, naming expected vs found.
    pub fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        match self {
            SegmenterModel::UNet(u) => u.config().check_input(dims),
            SegmenterModel::Threshold(_) => Ok(()),
        }
    }
}

impl<T: Scalar> Segmenter for SegmenterModel<T> {
    fn segment(&self, image: &Array2<f32>) -> Result<LabelMap> {
        match self {
            SegmenterModel::UNet(u) => u.predict(image),
            SegmenterModel::Threshold(t) => t.segment(image),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Unet { config: GeneratorConfig },
    Threshold { thresholds: Vec<f32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dtype: String,
    pub generator: GeneratorSpec,
    pub discriminator: Option<ContextDiscriminatorConfig>,
    /// Effective run configuration as flat key/value pairs.
    pub config_echo: BTreeMap<String, String>,
    /// Free-form run facts such as the epoch the weights come from.
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

/// A loaded archive.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub generator: SegmenterModel<T>,
    pub discriminator: Option<ContextDiscriminator<T>>,
    pub config_echo: BTreeMap<String, String>,
    pub metadata: BTreeMap<String, String>,
}

fn collect<'a, T: Scalar>(
    generator: &'a SegmenterModel<T>,
    discriminator: Option<&'a ContextDiscriminator<T>>,
) -> Vec<(String, &'a Param<T>)> {
    let mut out = Vec::new();
    if let SegmenterModel::UNet(u) = generator {
        u.visit(GEN_PREFIX, &mut out);
    }
    if let Some(d) = discriminator {
        d.visit("", &mut out);
    }
    out
}

/// Serializes models and the config echo into archive bytes.
pub fn encode<T: Scalar>(
    generator: &SegmenterModel<T>,
    discriminator: Option<&ContextDiscriminator<T>>,
    config_echo: &BTreeMap<String, String>,
    metadata: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let params = collect(generator, discriminator);
    let header = CheckpointHeader {
        dtype: T::DTYPE.to_string(),
        generator: match generator {
            SegmenterModel::UNet(u) => GeneratorSpec::Unet { config: u.config().clone() },
            SegmenterModel::Threshold(t) => GeneratorSpec::Threshold { thresholds: t.thresholds.clone() },
        },
        discriminator: discriminator.map(|d| d.config().clone()),
        config_echo: config_echo.clone(),
        metadata: metadata.clone(),
        tensors: params
            .iter()
            .map(|(name, p)| TensorEntry { name: name.clone(), shape: p.shape.clone() })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let payload_len: usize = params.iter().map(|(_, p)| p.len() * T::BYTES).sum();
    let mut out = Vec::with_capacity(20 + json.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in &params {
        for &v in &p.data {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint archive (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    Ok((header, &body[len..]))
}

/// Reads only the JSON header.
pub fn decode_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    Ok(read_header(bytes)?.0)
}

fn fill_params<T: Scalar>(
    dst: Vec<(String, &mut Param<T>)>,
    entries: &mut std::slice::Iter<'_, TensorEntry>,
    payload: &mut &[u8],
    width: usize,
    read: &dyn Fn(&[u8]) -> T,
) -> Result<()> {
    for (name, p) in dst {
        let e = entries
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing from archive")))?;
        if e.name != name || e.shape != p.shape {
            return Err(Error::Checkpoint(format!(
                "tensor mismatch: expected {name} {:?}, found {} {:?}",
                p.shape, e.name, e.shape
            )));
        }
        let n = p.len() * width;
        if payload.len() < n {
            return Err(Error::Checkpoint(format!("payload truncated in {name}")));
        }
        for (v, chunk) in p.data.iter_mut().zip(payload[..n].chunks_exact(width)) {
            *v = read(chunk);
        }
        *payload = &payload[n..];
    }
    Ok(())
}

/// Rebuilds models from archive bytes. Stored `f32`/`f64` tensors are
/// converted to `T` when the dtypes differ.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let (header, mut payload) = read_header(bytes)?;
    let (width, read): (usize, Box<dyn Fn(&[u8]) -> T>) = match header.dtype.as_str() {
        "f32" => (4, Box::new(|b| T::lit(f32::read_le(b) as f64))),
        "f64" => (8, Box::new(|b| T::lit(f64::read_le(b)))),
        other => return Err(Error::Checkpoint(format!("unknown dtype {other}"))),
    };
    // Construction needs an RNG; every weight is overwritten below.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut generator = match &header.generator {
        GeneratorSpec::Unet { config } => SegmenterModel::UNet(UNet::new(config.clone(), &mut rng)?),
        GeneratorSpec::Threshold { thresholds } => {
            SegmenterModel::Threshold(ThresholdSegmenter::new(thresholds.clone())?)
        }
    };
    let mut discriminator = match &header.discriminator {
        Some(cfg) => Some(ContextDiscriminator::new(cfg.clone(), &mut rng)?),
        None => None,
    };
    let mut entries = header.tensors.iter();
    if let SegmenterModel::UNet(u) = &mut generator {
        let mut dst = Vec::new();
        u.visit_mut(GEN_PREFIX, &mut dst);
        fill_params(dst, &mut entries, &mut payload, width, &*read)?;
    }
    if let Some(d) = &mut discriminator {
        fill_params(d.named_params_mut(), &mut entries, &mut payload, width, &*read)?;
    }
    if entries.next().is_some() || !payload.is_empty() {
        return Err(Error::Checkpoint("archive has trailing tensors or bytes".into()));
    }
    Ok(Checkpoint {
        generator,
        discriminator,
        config_echo: header.config_echo,
        metadata: header.metadata,
    })
}

pub fn save<T: Scalar>(
    path: &Path,
    generator: &SegmenterModel<T>,
    discriminator: Option<&ContextDiscriminator<T>>,
    config_echo: &BTreeMap<String, String>,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let bytes = encode(generator, discriminator, config_echo, metadata)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HeadKind, RoiDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models() -> (UNet<f32>, ContextDiscriminator<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = UNet::new(
            GeneratorConfig { depth: 3, base_channels: 4, ..GeneratorConfig::default() },
            &mut rng,
        )
        .unwrap();
        let d = ContextDiscriminator::new(
            ContextDiscriminatorConfig {
                num_classes: 2,
                full_dims: (16, 16),
                roi_dims: RoiDims::Variable,
                head: HeadKind::Gap,
            },
            &mut rng,
        )
        .unwrap();
        (g, d)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (g, d) = models();
        let echo = BTreeMap::from([("seed".to_string(), "3".to_string())]);
        let bytes = encode(&SegmenterModel::UNet(g.clone()), Some(&d), &echo, &BTreeMap::new()).unwrap();
        let ck: Checkpoint<f32> = decode(&bytes).unwrap();
        assert_eq!(ck.generator, SegmenterModel::UNet(g));
        assert_eq!(ck.discriminator.unwrap(), d);
        assert_eq!(ck.config_echo, echo);
        let names: Vec<_> = decode_header(&bytes).unwrap().tensors.into_iter().map(|t| t.name).collect();
        assert!(names[0].starts_with("gen."));
        for p in ["psi_g.", "psi_l.", "psi_c."] {
            assert!(names.iter().any(|n| n.starts_with(p)), "{p}");
        }
    }

    #[test]
    fn widening_to_f64_preserves_values() {
        let (g, _) = models();
        let bytes = encode(&SegmenterModel::UNet(g.clone()), None, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        let ck: Checkpoint<f64> = decode(&bytes).unwrap();
        let SegmenterModel::UNet(wide) = ck.generator else { panic!("unet expected") };
        for ((_, a), (_, b)) in g.named_params().into_iter().zip(wide.named_params()) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| *x as f64 == *y));
        }
    }

    #[test]
    fn corrupt_archives_rejected() {
        let (g, _) = models();
        let mut bytes = encode(&SegmenterModel::UNet(g), None, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode::<f32>(&bytes), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn threshold_model_has_no_tensors() {
        let t = SegmenterModel::<f32>::Threshold(ThresholdSegmenter::for_synthetic(2).unwrap());
        let bytes = encode(&t, None, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(decode::<f32>(&bytes).unwrap().generator, t);
    }
}
