//! Adam over named parameter sets.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::networks::{Params, PARAM_DTYPE};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one `Params`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(params: &Params, cfg: AdamConfig) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect()
        };
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update; `grads` maps parameter names to gradients. Missing
    /// gradients are treated as zero.
    pub fn update(
        &mut self,
        params: &mut Params,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let (Some(m), Some(v)) = (self.m.get_mut(name), self.v.get_mut(name)) else {
                return Err(Error::Checkpoint(format!(
                    "optimizer has no state for {name}"
                )));
            };
            let g = grads.get(name);
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::Shape(format!(
                        "gradient for {name}: {:?} vs {:?}",
                        g.shape(),
                        p.shape()
                    )));
                }
            }
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                pd[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Tensor::new(vec![1], vec![self.step as f64])?
            .save(&dir.join(format!("{prefix}.step.tns")), PARAM_DTYPE)?;
        for (n, t) in &self.m {
            t.save(&dir.join(format!("{prefix}.m.{n}.tns")), PARAM_DTYPE)?;
        }
        for (n, t) in &self.v {
            t.save(&dir.join(format!("{prefix}.v.{n}.tns")), PARAM_DTYPE)?;
        }
        Ok(())
    }

    /// Restores moments saved for `params`' layout.
    pub fn load(dir: &Path, prefix: &str, params: &Params, cfg: AdamConfig) -> Result<Self> {
        let mut s = Self::new(params, cfg);
        s.step = Tensor::load(&dir.join(format!("{prefix}.step.tns")))?
            .0
            .data()[0] as u64;
        for (which, map) in [("m", &mut s.m), ("v", &mut s.v)] {
            for (n, t) in map.iter_mut() {
                let (loaded, _) = Tensor::load(&dir.join(format!("{prefix}.{which}.{n}.tns")))?;
                if loaded.shape() != t.shape() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer {which}.{n} shape mismatch"
                    )));
                }
                *t = loaded;
            }
        }
        Ok(s)
    }
}
