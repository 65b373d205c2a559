//! Versioned JSON container for networks.
//!
//! Parameters are stored as flat row-major arrays per layer, either as JSON
//! numbers (shortest round-trip decimal) or as hex strings of little-endian
//! `f64` bytes. Both encodings reload bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::PiecewiseLinearActivation;
use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::netgen::InitMetadata;
use crate::network::{Layer, Network};

pub const FORMAT_NAME: &str = "pwl-network";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrayEncoding {
    #[default]
    Decimal,
    HexLe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlatArray {
    Decimal(Vec<f64>),
    Hex(String),
}

impl FlatArray {
    fn encode(values: &[f64], encoding: ArrayEncoding) -> Self {
        match encoding {
            ArrayEncoding::Decimal => Self::Decimal(values.to_vec()),
            ArrayEncoding::HexLe => {
                let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                Self::Hex(hex::encode(bytes))
            }
        }
    }

    fn decode(&self, layer: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Self::Decimal(v) => Ok(v.clone()),
            Self::Hex(s) => {
                let bytes = hex::decode(s).map_err(|e| Error::LayerShape {
                    layer,
                    message: format!("{what}: bad hex ({e})"),
                })?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::LayerShape {
                        layer,
                        message: format!("{what}: {} bytes is not a whole number of f64", bytes.len()),
                    });
                }
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Hidden widths followed by the output width.
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerArrays {
    pub weights: FlatArray,
    pub biases: FlatArray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub encoding: ArrayEncoding,
    pub architecture: Architecture,
    pub activation: ActivationSpec,
    pub layers: Vec<LayerArrays>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitMetadata>,
}

impl NetworkFile {
    pub fn from_network(net: &Network, init: Option<InitMetadata>, encoding: ArrayEncoding) -> Self {
        let act = net.activation();
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            encoding,
            architecture: Architecture {
                input_dim: net.input_dim(),
                widths: net.layers().iter().map(|l| l.rows()).collect(),
            },
            activation: ActivationSpec {
                name: act.name().map(str::to_string),
                breakpoints: act.breakpoints().to_vec(),
                slopes: act.slopes().to_vec(),
                intercepts: act.intercepts().to_vec(),
            },
            layers: net
                .layers()
                .iter()
                .map(|l| LayerArrays {
                    weights: FlatArray::encode(l.weights(), encoding),
                    biases: FlatArray::encode(l.biases(), encoding),
                })
                .collect(),
            init,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        if self.format != FORMAT_NAME {
            return Err(Error::Config(format!("not a network file (format {:?})", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Version(self.version));
        }
        let arch = &self.architecture;
        if self.layers.len() != arch.widths.len() {
            return Err(Error::LayerShape {
                layer: self.layers.len().min(arch.widths.len()),
                message: format!(
                    "architecture lists {} layers, file has {}",
                    arch.widths.len(),
                    self.layers.len()
                ),
            });
        }
        let a = &self.activation;
        let activation = PiecewiseLinearActivation::new(a.breakpoints.clone(), a.slopes.clone(), a.intercepts.clone())?;
        let mut fan_in = arch.input_dim;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, (arrays, &width)) in self.layers.iter().zip(&arch.widths).enumerate() {
            let weights = arrays.weights.decode(i, "weights")?;
            let biases = arrays.biases.decode(i, "biases")?;
            if weights.len() != width * fan_in {
                return Err(Error::LayerShape {
                    layer: i,
                    message: format!(
                        "{} weights for a {width} x {fan_in} layer (expected {})",
                        weights.len(),
                        width * fan_in
                    ),
                });
            }
            if biases.len() != width {
                return Err(Error::LayerShape {
                    layer: i,
                    message: format!("{} biases for width {width}", biases.len()),
                });
            }
            layers.push(Layer::new(width, fan_in, weights, biases)?);
            fan_in = width;
        }
        Network::new(arch.input_dim, layers, activation)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_network(path: &Path, net: &Network, init: Option<InitMetadata>, encoding: ArrayEncoding) -> Result<()> {
    let json = NetworkFile::from_network(net, init, encoding).to_json()?;
    write_atomic(path, json.as_bytes())
}

pub fn load_network(path: &Path) -> Result<(Network, NetworkFile)> {
    let file = NetworkFile::from_json(&std::fs::read_to_string(path)?)?;
    Ok((file.to_network()?, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{build_sawtooth, he_init, InitSpec};
    use crate::region1d::count_regions_on_segment;

    #[test]
    fn round_trip_is_bit_exact_in_both_encodings() {
        let spec = InitSpec::he(7, &[5, 4], 3, 21);
        let net = he_init(&spec).unwrap();
        for enc in [ArrayEncoding::Decimal, ArrayEncoding::HexLe] {
            let json = NetworkFile::from_network(&net, Some(spec.metadata()), enc).to_json().unwrap();
            let file = NetworkFile::from_json(&json).unwrap();
            assert_eq!(file.to_network().unwrap(), net);
            assert_eq!(file.init.as_ref().unwrap().seed, 21);
        }
    }

    #[test]
    fn sawtooth_round_trip_keeps_region_count() {
        let net = build_sawtooth(3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("saw.json");
        save_network(&path, &net, None, ArrayEncoding::HexLe).unwrap();
        let (back, file) = load_network(&path).unwrap();
        assert_eq!(file.activation.name.as_deref(), Some("relu"));
        let before = count_regions_on_segment(&net, &[0.0], &[1.0]).unwrap().region_count();
        let after = count_regions_on_segment(&back, &[0.0], &[1.0]).unwrap().region_count();
        assert_eq!(before, after);
    }

    #[test]
    fn version_and_shape_errors() {
        let net = he_init(&InitSpec::he(3, &[4], 2, 0)).unwrap();
        let mut file = NetworkFile::from_network(&net, None, ArrayEncoding::Decimal);
        file.version = 2;
        assert!(matches!(file.to_network(), Err(Error::Version(2))));
        file.version = FORMAT_VERSION;
        file.architecture.widths[0] = 5;
        match file.to_network() {
            Err(Error::LayerShape { layer, message }) => {
                assert_eq!(layer, 0);
                assert!(message.contains("weights"), "{message}");
            }
            other => panic!("expected a shape error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_activation_is_rejected() {
        let net = he_init(&InitSpec::he(3, &[4], 2, 0)).unwrap();
        let mut file = NetworkFile::from_network(&net, None, ArrayEncoding::Decimal);
        file.activation.intercepts[1] = 1.0;
        assert!(matches!(file.to_network(), Err(Error::InvalidActivation(_))));
    }
}
