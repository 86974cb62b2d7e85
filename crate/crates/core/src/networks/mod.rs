//! Generator, discriminator and feedback networks.
//!
//! * `generator_rd` (G_r, G_d): residual trunk at input resolution, sigmoid head.
//! * `generator_s` (G_s): residual trunk plus one pixel-shuffle x2 stage per
//!   factor of two in `scale`.
//! * `feedback` (F_r, F_d): image to `n`-channel event stack at the same
//!   resolution.
//! * `feedback_s` (F_s): like `feedback` but with one stride-2 stage per
//!   factor of two, bringing an SR image back to stack resolution.
//! * `discriminator` (D_r, D_d, D_s): strided convolutions, global average
//!   pooling and a linear head, so one parameter set accepts any resolution.

mod params;

pub use params::{Params, PARAM_DTYPE};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::losses::as_batch;
use crate::tensor::Tensor;

const SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    GeneratorRd,
    GeneratorS,
    Discriminator,
    Feedback,
    FeedbackS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub kind: NetKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub channels: usize,
    /// Residual blocks, or strided stages for the discriminator.
    pub blocks: usize,
    /// Up- or down-sampling factor (`generator_s`, `feedback_s`); 1 otherwise.
    pub scale: usize,
}

/// Whether the discriminator's scalar is passed through a sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdvMode {
    /// Probability in (0, 1).
    #[default]
    Standard,
    /// Unbounded critic value.
    Relativistic,
}

impl NetSpec {
    pub fn generator_rd(in_channels: usize) -> Self {
        Self {
            kind: NetKind::GeneratorRd,
            in_channels,
            out_channels: 1,
            channels: 16,
            blocks: 4,
            scale: 1,
        }
    }

    pub fn generator_s(scale: usize) -> Self {
        Self {
            kind: NetKind::GeneratorS,
            in_channels: 1,
            out_channels: 1,
            channels: 16,
            blocks: 4,
            scale,
        }
    }

    pub fn discriminator() -> Self {
        Self {
            kind: NetKind::Discriminator,
            in_channels: 1,
            out_channels: 1,
            channels: 16,
            blocks: 3,
            scale: 1,
        }
    }

    pub fn feedback(stack_frames: usize) -> Self {
        Self {
            kind: NetKind::Feedback,
            in_channels: 1,
            out_channels: stack_frames,
            channels: 16,
            blocks: 3,
            scale: 1,
        }
    }

    pub fn feedback_s(stack_frames: usize, scale: usize) -> Self {
        Self {
            kind: NetKind::FeedbackS,
            scale,
            ..Self::feedback(stack_frames)
        }
    }

    pub fn with_width(mut self, channels: usize, blocks: usize) -> Self {
        self.channels = channels;
        self.blocks = blocks;
        self
    }

    /// Number of x2 stages implied by `scale`.
    pub fn stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{:?}: {m}", self.kind)));
        if self.in_channels == 0 || self.out_channels == 0 || self.channels == 0 {
            return bad("channel counts must be positive");
        }
        match self.kind {
            NetKind::GeneratorRd | NetKind::Feedback => {
                if self.scale != 1 {
                    return bad("scale must be 1");
                }
            }
            NetKind::GeneratorS => {
                if !matches!(self.scale, 2 | 4) {
                    return bad("scale must be 2 or 4");
                }
                if self.in_channels != 1 || self.out_channels != 1 {
                    return bad("maps one channel to one channel");
                }
            }
            NetKind::FeedbackS => {
                if !matches!(self.scale, 2 | 4) {
                    return bad("scale must be 2 or 4");
                }
            }
            NetKind::Discriminator => {
                if self.blocks == 0 || self.out_channels != 1 {
                    return bad("needs at least one stage and a scalar output");
                }
            }
        }
        if matches!(self.kind, NetKind::GeneratorRd | NetKind::GeneratorS) && self.out_channels != 1
        {
            return bad("generators output one channel");
        }
        if matches!(self.kind, NetKind::Feedback | NetKind::FeedbackS) && self.in_channels != 1 {
            return bad("feedback networks take one channel");
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter, in construction order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.channels;
        let mut out = Vec::new();
        let mut conv = |name: String, cin: usize, cout: usize, k: usize| {
            out.push((format!("{name}.w"), vec![cout, cin, k, k]));
            out.push((format!("{name}.b"), vec![cout]));
        };
        match self.kind {
            NetKind::Discriminator => {
                let mut cin = self.in_channels;
                for s in 0..self.blocks {
                    let cout = c << s;
                    conv(format!("stage{s}"), cin, cout, 3);
                    cin = cout;
                }
                out.push(("head.w".into(), vec![1, cin]));
                out.push(("head.b".into(), vec![1]));
            }
            kind => {
                conv("conv_first".into(), self.in_channels, c, 3);
                if kind == NetKind::FeedbackS {
                    for s in 0..self.stages() {
                        conv(format!("down{s}"), c, c, 3);
                    }
                }
                for b in 0..self.blocks {
                    conv(format!("block{b}.conv1"), c, c, 3);
                    conv(format!("block{b}.conv2"), c, c, 3);
                }
                conv("conv_body".into(), c, c, 3);
                if kind == NetKind::GeneratorS {
                    for s in 0..self.stages() {
                        conv(format!("up{s}"), c, 4 * c, 3);
                    }
                }
                conv("conv_last".into(), c, self.out_channels, 3);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Parameters placed on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub spec: NetSpec,
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} missing for {:?}", self.spec.kind))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    fn conv(&self, g: &mut Graph, x: Var, name: &str, stride: usize) -> Result<Var> {
        g.conv2d(
            x,
            self.var(&format!("{name}.w")),
            self.var(&format!("{name}.b")),
            stride,
        )
    }

    fn trunk(&self, g: &mut Graph, feat: Var) -> Result<Var> {
        let mut h = feat;
        for b in 0..self.spec.blocks {
            let r = self.conv(g, h, &format!("block{b}.conv1"), 1)?;
            let r = g.leaky_relu(r, SLOPE);
            let r = self.conv(g, r, &format!("block{b}.conv2"), 1)?;
            h = g.add(h, r)?;
        }
        let body = self.conv(g, h, "conv_body", 1)?;
        g.add(feat, body)
    }

    /// Runs the network on an NCHW node. Generators and feedback networks
    /// return sigmoid outputs; the discriminator returns `[N]` logits.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.value(x).shape().to_vec();
        if s.len() != 4 || s[1] != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "{:?} expects [N, {}, H, W], got {s:?}",
                self.spec.kind, self.spec.in_channels
            )));
        }
        match self.spec.kind {
            NetKind::Discriminator => {
                let mut h = x;
                for st in 0..self.spec.blocks {
                    h = self.conv(g, h, &format!("stage{st}"), 2)?;
                    h = g.leaky_relu(h, SLOPE);
                }
                let pooled = g.global_avg_pool(h)?;
                let logit = g.linear(pooled, self.var("head.w"), self.var("head.b"))?;
                g.reshape(logit, &[s[0]])
            }
            NetKind::FeedbackS => {
                let factor = self.spec.scale;
                if s[2] % factor != 0 || s[3] % factor != 0 {
                    return Err(Error::Shape(format!(
                        "feedback_s: {}x{} not divisible by scale {factor}",
                        s[2], s[3]
                    )));
                }
                let mut h = self.conv(g, x, "conv_first", 1)?;
                for st in 0..self.spec.stages() {
                    h = self.conv(g, h, &format!("down{st}"), 2)?;
                    h = g.leaky_relu(h, SLOPE);
                }
                let h = self.trunk(g, h)?;
                let out = self.conv(g, h, "conv_last", 1)?;
                Ok(g.sigmoid(out))
            }
            NetKind::GeneratorS => {
                let feat = self.conv(g, x, "conv_first", 1)?;
                let mut h = self.trunk(g, feat)?;
                for st in 0..self.spec.stages() {
                    h = self.conv(g, h, &format!("up{st}"), 1)?;
                    h = g.pixel_shuffle(h, 2)?;
                    h = g.leaky_relu(h, SLOPE);
                }
                let out = self.conv(g, h, "conv_last", 1)?;
                Ok(g.sigmoid(out))
            }
            NetKind::GeneratorRd | NetKind::Feedback => {
                let feat = self.conv(g, x, "conv_first", 1)?;
                let h = self.trunk(g, feat)?;
                let out = self.conv(g, h, "conv_last", 1)?;
                Ok(g.sigmoid(out))
            }
        }
    }
}

fn run(params: &Params, input: &Tensor, kind: &[NetKind]) -> Result<Tensor> {
    if !kind.contains(&params.spec().kind) {
        return Err(Error::InvalidArgument(format!(
            "expected {kind:?} parameters, got {:?}",
            params.spec().kind
        )));
    }
    let mut g = Graph::new();
    let x = g.constant(as_batch(input)?);
    let bound = params.bind(&mut g, false);
    let y = bound.forward(&mut g, x)?;
    Ok(g.value(y).clone())
}

/// G_r / G_d forward: `[N, C_in, H, W] -> [N, 1, H, W]` in [0, 1].
pub fn forward_generator_rd(params: &Params, input: &Tensor) -> Result<Tensor> {
    run(params, input, &[NetKind::GeneratorRd])
}

/// G_s forward: `[N, 1, H, W] -> [N, 1, sH, sW]` in [0, 1].
pub fn forward_generator_s(params: &Params, input: &Tensor) -> Result<Tensor> {
    run(params, input, &[NetKind::GeneratorS])
}

/// F / F_s forward: image to `[N, n, H / s, W / s]` in [0, 1].
pub fn forward_feedback(params: &Params, image: &Tensor) -> Result<Tensor> {
    run(params, image, &[NetKind::Feedback, NetKind::FeedbackS])
}

/// One score per batch item: probability (standard) or critic value.
pub fn forward_discriminator(params: &Params, image: &Tensor, mode: AdvMode) -> Result<Tensor> {
    let logits = run(params, image, &[NetKind::Discriminator])?;
    Ok(match mode {
        AdvMode::Standard => logits.map(|v| 1.0 / (1.0 + (-v).exp())),
        AdvMode::Relativistic => logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| ((i * 7919) % 101) as f64 / 101.0)
    }

    #[test]
    fn generator_rd_preserves_spatial_dims() {
        let p = Params::build(&NetSpec::generator_rd(3), 1).unwrap();
        let out = forward_generator_rd(&p, &input(&[3, 32, 32])).unwrap();
        assert_eq!(out.shape(), &[1, 1, 32, 32]);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(forward_generator_rd(&p, &input(&[1, 32, 32])).is_err());
    }

    #[test]
    fn zero_weights_give_half() {
        for spec in [
            NetSpec::generator_rd(3),
            NetSpec::generator_s(4),
            NetSpec::feedback(3),
        ] {
            let p = Params::zeroed(&spec).unwrap();
            let x = input(&[spec.in_channels, 8, 8]);
            let out = match spec.kind {
                NetKind::GeneratorRd => forward_generator_rd(&p, &x),
                NetKind::GeneratorS => forward_generator_s(&p, &x),
                _ => forward_feedback(&p, &x),
            }
            .unwrap();
            assert!(out.data().iter().all(|&v| v == 0.5), "{:?}", spec.kind);
        }
        let p = Params::zeroed(&NetSpec::generator_s(4)).unwrap();
        assert_eq!(
            forward_generator_s(&p, &input(&[1, 8, 8])).unwrap().shape(),
            &[1, 1, 32, 32]
        );
    }

    #[test]
    fn generator_s_scales() {
        let p4 = Params::build(&NetSpec::generator_s(4), 2).unwrap();
        assert_eq!(
            forward_generator_s(&p4, &input(&[1, 32, 32]))
                .unwrap()
                .shape(),
            &[1, 1, 128, 128]
        );
        let p2 = Params::build(&NetSpec::generator_s(2), 2).unwrap();
        assert_eq!(
            forward_generator_s(&p2, &input(&[1, 64, 64]))
                .unwrap()
                .shape(),
            &[1, 1, 128, 128]
        );
        let ups = p4
            .names()
            .filter(|n| n.starts_with("up") && n.ends_with(".w"))
            .count();
        assert_eq!(ups, 2);
    }

    #[test]
    fn feedback_shapes() {
        let f = Params::build(&NetSpec::feedback(3), 3).unwrap();
        assert_eq!(
            forward_feedback(&f, &input(&[1, 32, 32])).unwrap().shape(),
            &[1, 3, 32, 32]
        );
        let fs = Params::build(&NetSpec::feedback_s(3, 4), 3).unwrap();
        assert_eq!(
            forward_feedback(&fs, &input(&[1, 128, 128]))
                .unwrap()
                .shape(),
            &[1, 3, 32, 32]
        );
        assert!(forward_feedback(&fs, &input(&[1, 30, 32])).is_err());
        let z = Params::zeroed(&NetSpec::feedback_s(3, 4)).unwrap();
        assert!(forward_feedback(&z, &input(&[1, 16, 16]))
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.5));
    }

    #[test]
    fn discriminator_batches_and_resolutions() {
        let d = Params::build(&NetSpec::discriminator(), 4).unwrap();
        let s = forward_discriminator(&d, &input(&[2, 1, 32, 32]), AdvMode::Standard).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let big =
            forward_discriminator(&d, &input(&[1, 1, 128, 128]), AdvMode::Relativistic).unwrap();
        assert_eq!(big.shape(), &[1]);
    }

    #[test]
    fn toy_parameter_count() {
        // generator_rd, in 2, C 4, 1 block: conv_first 2*4*9+4, block 2*(4*4*9+4),
        // conv_body 4*4*9+4, conv_last 4*1*9+1.
        let spec = NetSpec::generator_rd(2).with_width(4, 1);
        let want = (2 * 4 * 9 + 4) + 2 * (4 * 4 * 9 + 4) + (4 * 4 * 9 + 4) + (4 * 9 + 1);
        assert_eq!(spec.param_count(), want);
        let p = Params::build(&spec, 0).unwrap();
        assert_eq!(p.numel(), want);

        // discriminator, C 4, 2 stages: 1*4*9+4, 4*8*9+8, head 8+1.
        let d = NetSpec::discriminator().with_width(4, 2);
        assert_eq!(d.param_count(), (36 + 4) + (288 + 8) + 9);
    }

    #[test]
    fn invalid_specs() {
        assert!(NetSpec::generator_s(3).validate().is_err());
        assert!(NetSpec::feedback_s(3, 8).validate().is_err());
        let mut g = NetSpec::generator_rd(3);
        g.scale = 2;
        assert!(g.validate().is_err());
    }
}
