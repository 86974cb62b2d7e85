use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

use super::{Bound, NetSpec};

/// Stored precision for network weights; `f64` keeps reloads bit-exact.
pub const PARAM_DTYPE: DType = DType::F64;

/// Named weights for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    spec: NetSpec,
    seed: u64,
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct ParamsMeta {
    #[serde(flatten)]
    spec: NetSpec,
    seed: u64,
}

impl Params {
    /// He-normal convolutions, zero biases. Residual branches and output heads
    /// start scaled by 0.1 so fresh networks sit near their skip paths and
    /// away from sigmoid saturation.
    pub fn build(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in spec.param_shapes() {
            let t = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let damp = if name.contains(".conv2") || name.starts_with("conv_last") {
                    0.1
                } else {
                    1.0
                };
                let std = damp * (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Tensor::from_fn(&shape, |_| normal.sample(&mut rng))
            };
            tensors.insert(name, t);
        }
        Ok(Self {
            spec: *spec,
            seed,
            tensors,
        })
    }

    /// All weights and biases zero.
    pub fn zeroed(spec: &NetSpec) -> Result<Self> {
        spec.validate()?;
        let tensors = spec
            .param_shapes()
            .into_iter()
            .map(|(n, s)| (n, Tensor::zeros(&s)))
            .collect();
        Ok(Self {
            spec: *spec,
            seed: 0,
            tensors,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Largest absolute elementwise difference to `other`.
    pub fn max_abs_diff(&self, other: &Params) -> f64 {
        self.tensors
            .iter()
            .zip(other.tensors.values())
            .map(|((_, a), b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Places every tensor on `g`, as trainable leaves or constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(n, t)| {
                let v = if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                };
                (n.clone(), v)
            })
            .collect();
        Bound {
            spec: self.spec,
            vars,
        }
    }

    /// Writes `<prefix>.json` and one `<prefix>.<param>.tns` per tensor.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ParamsMeta {
            spec: self.spec,
            seed: self.seed,
        };
        let p = dir.join(format!("{prefix}.json"));
        fs::write(&p, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&p, e))?;
        for (name, t) in &self.tensors {
            t.save(&dir.join(format!("{prefix}.{name}.tns")), PARAM_DTYPE)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, prefix: &str) -> Result<Self> {
        let p = dir.join(format!("{prefix}.json"));
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let meta: ParamsMeta = serde_json::from_str(&text)?;
        meta.spec.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape) in meta.spec.param_shapes() {
            let (t, _) = Tensor::load(&dir.join(format!("{prefix}.{name}.tns")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{prefix}.{name}: shape {:?}, spec expects {shape:?}",
                    t.shape()
                )));
            }
            tensors.insert(name, t);
        }
        Ok(Self {
            spec: meta.spec,
            seed: meta.seed,
            tensors,
        })
    }
}
