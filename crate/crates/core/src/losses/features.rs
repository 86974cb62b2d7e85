use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

/// Channel widths of the default pyramid.
pub const DEFAULT_FEATURE_CHANNELS: [usize; 3] = [8, 16, 32];
pub const DEFAULT_FEATURE_LAYER: usize = 2;
const FEATURE_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    /// `[out, in, k, k]`.
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

/// Fixed convolutional pyramid used for the perceptual half of the event
/// similarity loss. Weights never change after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    layers: Vec<FeatureLayer>,
    layer: usize,
}

#[derive(Serialize, Deserialize)]
struct ExtractorMeta {
    strides: Vec<usize>,
    layer: usize,
}

impl FeatureExtractor {
    /// Seeded He-normal 3x3 layers, stride 2 each, `DEFAULT_FEATURE_CHANNELS` wide.
    pub fn seeded(in_channels: usize, seed: u64) -> Self {
        Self::seeded_with(
            in_channels,
            &DEFAULT_FEATURE_CHANNELS,
            &[2, 2, 2],
            DEFAULT_FEATURE_LAYER,
            seed,
        )
        .expect("default pyramid is valid")
    }

    pub fn seeded_with(
        in_channels: usize,
        channels: &[usize],
        strides: &[usize],
        layer: usize,
        seed: u64,
    ) -> Result<Self> {
        if channels.len() != strides.len() {
            return Err(Error::Config("one stride per feature layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = in_channels;
        let mut layers = Vec::with_capacity(channels.len());
        for (&cout, &stride) in channels.iter().zip(strides) {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let weight = Tensor::from_fn(&[cout, cin, 3, 3], |_| normal.sample(&mut rng));
            layers.push(FeatureLayer {
                weight,
                bias: Tensor::zeros(&[cout]),
                stride,
            });
            cin = cout;
        }
        Self::from_layers(layers, layer)
    }

    pub fn from_layers(layers: Vec<FeatureLayer>, layer: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("feature extractor needs a layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            let ws = l.weight.shape();
            if ws.len() != 4 || ws[2] != ws[3] || l.bias.len() != ws[0] || l.stride == 0 {
                return Err(Error::Config(format!(
                    "feature layer {i} is malformed: {ws:?}"
                )));
            }
            if i > 0 && layers[i - 1].weight.shape()[0] != ws[1] {
                return Err(Error::Config(format!(
                    "feature layer {i} input channels mismatch"
                )));
            }
        }
        let fx = Self { layers, layer: 0 };
        fx.with_layer(layer)
    }

    pub fn with_layer(mut self, layer: usize) -> Result<Self> {
        if layer == 0 || layer > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "feature layer {layer} outside 1..={}",
                self.layers.len()
            )));
        }
        self.layer = layer;
        Ok(self)
    }

    pub fn layers(&self) -> &[FeatureLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Selected layer, 1-based.
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    /// `(C_i, H_i, W_i)` of layer `i` for an `h x w` input.
    pub fn feature_shape(&self, i: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        self.check_layer(i)?;
        let (mut h, mut w) = (h, w);
        for l in &self.layers[..i] {
            let k = l.weight.shape()[2];
            let pad = k / 2;
            h = (h + 2 * pad - k) / l.stride + 1;
            w = (w + 2 * pad - k) / l.stride + 1;
        }
        Ok((self.layers[i - 1].weight.shape()[0], h, w))
    }

    fn check_layer(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "feature layer {i} outside 1..={}",
                self.layers.len()
            )));
        }
        Ok(())
    }

    /// Forward through layers `1..=i` (conv then leaky ReLU) on an NCHW node.
    pub fn forward(&self, g: &mut Graph, x: Var, i: usize) -> Result<Var> {
        self.check_layer(i)?;
        let mut h = x;
        for l in &self.layers[..i] {
            let w = g.constant(l.weight.clone());
            let b = g.constant(l.bias.clone());
            h = g.conv2d(h, w, b, l.stride)?;
            h = g.leaky_relu(h, FEATURE_SLOPE);
        }
        Ok(h)
    }

    /// Features of layer `i` for an NCHW (or CHW / HW) tensor.
    pub fn extract(&self, input: &Tensor, i: usize) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(super::as_batch(input)?);
        let y = self.forward(&mut g, x, i)?;
        Ok(g.value(y).clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, l) in self.layers.iter().enumerate() {
            l.weight
                .save(&dir.join(format!("layer{i}.weight.tns")), DType::F64)?;
            l.bias
                .save(&dir.join(format!("layer{i}.bias.tns")), DType::F64)?;
        }
        let meta = ExtractorMeta {
            strides: self.layers.iter().map(|l| l.stride).collect(),
            layer: self.layer,
        };
        let p = dir.join("extractor.json");
        fs::write(&p, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("extractor.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let meta: ExtractorMeta = serde_json::from_str(&text)?;
        let layers = meta
            .strides
            .iter()
            .enumerate()
            .map(|(i, &stride)| {
                Ok(FeatureLayer {
                    weight: Tensor::load(&dir.join(format!("layer{i}.weight.tns")))?.0,
                    bias: Tensor::load(&dir.join(format!("layer{i}.bias.tns")))?.0,
                    stride,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, meta.layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_arithmetic() {
        let fx = FeatureExtractor::seeded_with(3, &[8, 16], &[2, 2], 2, 1).unwrap();
        assert_eq!(fx.feature_shape(2, 32, 32).unwrap(), (16, 8, 8));
        let f = fx.extract(&Tensor::full(&[1, 3, 32, 32], 0.5), 2).unwrap();
        assert_eq!(f.shape(), &[1, 16, 8, 8]);
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let fx = FeatureExtractor::from_layers(
            vec![FeatureLayer {
                weight: w,
                bias: Tensor::zeros(&[1]),
                stride: 1,
            }],
            1,
        )
        .unwrap();
        let x = Tensor::from_fn(&[1, 1, 5, 4], |i| i as f64 / 20.0);
        assert_eq!(fx.extract(&x, 1).unwrap(), x);
    }

    #[test]
    fn same_seed_same_features() {
        let x = Tensor::from_fn(&[1, 3, 16, 16], |i| (i % 7) as f64 / 7.0);
        let a = FeatureExtractor::seeded(3, 4).extract(&x, 3).unwrap();
        let b = FeatureExtractor::seeded(3, 4).extract(&x, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_layer_index() {
        let fx = FeatureExtractor::seeded(1, 0);
        assert!(fx.extract(&Tensor::zeros(&[1, 1, 8, 8]), 0).is_err());
        assert!(fx.extract(&Tensor::zeros(&[1, 1, 8, 8]), 4).is_err());
        assert!(fx.clone().with_layer(9).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fx = FeatureExtractor::seeded(3, 8);
        fx.save(dir.path()).unwrap();
        assert_eq!(FeatureExtractor::load(dir.path()).unwrap(), fx);
    }
}
