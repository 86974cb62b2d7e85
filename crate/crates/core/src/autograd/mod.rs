//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value and
//! the indices of its inputs. [`Graph::backward`] walks the tape in reverse.
//! Networks, losses and the trainer all build on this one substrate, so the
//! gradients used for training are the ones the finite-difference checks see.

pub mod conv;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use conv::ConvGeom;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    SubScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softplus(Var),
    Log(Var),
    Sqrt(Var),
    PixelShuffle(Var, usize),
    GlobalAvgPool(Var),
    RepeatChannels(Var),
    SumSqPerItem(Var),
    Mean(Var),
    TvField(Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn nchw(t: &Tensor, op: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(Error::Shape(format!("{op}: expected NCHW, got {s:?}"))),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Same-padded (`pad = k / 2`) convolution, NCHW input, `[out, in, k, k]` weight.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let [n, c, h, wd] = nchw(self.value(x), "conv2d")?;
        let ws = self.value(w).shape().to_vec();
        let [co, ci, k, k2] = ws[..] else {
            return Err(Error::Shape(format!("conv2d weight: {ws:?}")));
        };
        if ci != c || k != k2 || self.value(b).len() != co || stride == 0 {
            return Err(Error::Shape(format!(
                "conv2d: input channels {c}, weight {ws:?}, bias {}",
                self.value(b).len()
            )));
        }
        let geom = ConvGeom {
            batch: n,
            in_ch: c,
            out_ch: co,
            h,
            w: wd,
            k,
            stride,
            pad: k / 2,
        };
        if h + 2 * geom.pad < k || wd + 2 * geom.pad < k {
            return Err(Error::Shape(format!(
                "conv2d: {h}x{wd} input smaller than kernel {k}"
            )));
        }
        let (ho, wo) = geom.out_hw();
        let out = conv::forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let value = Tensor::new(vec![n, co, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, &[x, w, b]))
    }

    /// `[N, in] x [out, in]^T + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let (&[n, fin], &[fout, fin2]) = (&xs[..], &ws[..]) else {
            return Err(Error::Shape(format!("linear: {xs:?} x {ws:?}")));
        };
        if fin != fin2 || self.value(b).len() != fout {
            return Err(Error::Shape(format!("linear: {xs:?} x {ws:?}")));
        }
        let (xd, wd, bd) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let mut out = vec![0.0; n * fout];
        for i in 0..n {
            for o in 0..fout {
                let mut acc = bd[o];
                for k in 0..fin {
                    acc += xd[i * fin + k] * wd[o * fin + k];
                }
                out[i * fout + o] = acc;
            }
        }
        let value = Tensor::new(vec![n, fout], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        same_shape("elementwise", self.value(a), self.value(b))?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `a - s` with `s` a single-element node broadcast over `a`.
    pub fn sub_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Shape(
                "sub_scalar: subtrahend must hold one element".into(),
            ));
        }
        let sv = self.scalar(s);
        let value = self.value(a).map(|v| v - sv);
        Ok(self.push(value, Op::SubScalar(a, s), &[a, s]))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |v| v * c)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |v| v + c)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |v| {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// `ln(1 + e^a)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    /// `[N, C*r*r, H, W] -> [N, C, H*r, W*r]`.
    pub fn pixel_shuffle(&mut self, a: Var, r: usize) -> Result<Var> {
        let [n, c, h, w] = nchw(self.value(a), "pixel_shuffle")?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::Shape(format!(
                "pixel_shuffle: {c} channels, factor {r}"
            )));
        }
        let co = c / (r * r);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for b in 0..n {
            for cc in 0..co {
                for i in 0..r {
                    for j in 0..r {
                        let ci = cc * r * r + i * r + j;
                        for y in 0..h {
                            for x in 0..w {
                                out[((b * co + cc) * h * r + y * r + i) * w * r + x * r + j] =
                                    src[((b * c + ci) * h + y) * w + x];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, co, h * r, w * r], out)?;
        Ok(self.push(value, Op::PixelShuffle(a, r), &[a]))
    }

    /// `[N, C, H, W] -> [N, C]` by spatial mean.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let [n, c, h, w] = nchw(self.value(a), "global_avg_pool")?;
        let src = self.value(a).data();
        let plane = h * w;
        let data = src
            .chunks_exact(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect();
        let value = Tensor::new(vec![n, c], data)?;
        Ok(self.push(value, Op::GlobalAvgPool(a), &[a]))
    }

    /// `[N, 1, H, W] -> [N, copies, H, W]`.
    pub fn repeat_channels(&mut self, a: Var, copies: usize) -> Result<Var> {
        let [n, c, h, w] = nchw(self.value(a), "repeat_channels")?;
        if c != 1 {
            return Err(Error::Shape(format!(
                "repeat_channels: expected 1 channel, got {c}"
            )));
        }
        let src = self.value(a).data();
        let plane = h * w;
        let mut out = Vec::with_capacity(n * copies * plane);
        for b in 0..n {
            for _ in 0..copies {
                out.extend_from_slice(&src[b * plane..(b + 1) * plane]);
            }
        }
        let value = Tensor::new(vec![n, copies, h, w], out)?;
        Ok(self.push(value, Op::RepeatChannels(a), &[a]))
    }

    /// `[N, ...] -> [N]`, sum of squares per leading index.
    pub fn sum_sq_per_item(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = *t
            .shape()
            .first()
            .ok_or_else(|| Error::Shape("sum_sq_per_item: scalar input".into()))?;
        let per = t.len() / n.max(1);
        let data = t
            .data()
            .chunks_exact(per.max(1))
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        let value = Tensor::new(vec![n], data)?;
        Ok(self.push(value, Op::SumSqPerItem(a), &[a]))
    }

    /// Mean of all elements, as a shape-`[]` scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let value = Tensor::new(vec![], vec![m]).expect("scalar");
        self.push(value, Op::Mean(a), &[a])
    }

    /// Forward-difference gradient field `d/dh + d/dw` of an NCHW tensor. The
    /// last row (for `d/dh`) and last column (for `d/dw`) contribute zero.
    pub fn tv_field(&mut self, a: Var) -> Result<Var> {
        let [n, c, h, w] = nchw(self.value(a), "tv_field")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for p in 0..n * c {
            let base = p * h * w;
            for y in 0..h {
                for x in 0..w {
                    let i = base + y * w + x;
                    let mut g = 0.0;
                    if y + 1 < h {
                        g += src[i + w] - src[i];
                    }
                    if x + 1 < w {
                        g += src[i + 1] - src[i];
                    }
                    out[i] = g;
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, Op::TvField(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Gradients of the single-element node `loss` with respect to every node
    /// that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward: loss must be scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                if self.requires_grad(x) {
                    let gx = conv::backward_input(&geom, gd, self.value(w).data());
                    self.accumulate(grads, x, Tensor::new(self.value(x).shape().to_vec(), gx)?);
                }
                if self.requires_grad(w) || self.requires_grad(b) {
                    let (gw, gb) = conv::backward_params(&geom, gd, self.value(x).data());
                    self.accumulate(grads, w, Tensor::new(self.value(w).shape().to_vec(), gw)?);
                    self.accumulate(grads, b, Tensor::new(self.value(b).shape().to_vec(), gb)?);
                }
            }
            Op::Linear { x, w, b } => {
                let (xd, wd) = (self.value(x).data(), self.value(w).data());
                let [n, fin] = self.value(x).shape()[..] else {
                    unreachable!()
                };
                let fout = self.value(b).len();
                let mut gx = vec![0.0; n * fin];
                let mut gw = vec![0.0; fout * fin];
                let mut gb = vec![0.0; fout];
                for i in 0..n {
                    for o in 0..fout {
                        let go = gd[i * fout + o];
                        gb[o] += go;
                        for k in 0..fin {
                            gx[i * fin + k] += go * wd[o * fin + k];
                            gw[o * fin + k] += go * xd[i * fin + k];
                        }
                    }
                }
                self.accumulate(grads, x, Tensor::new(vec![n, fin], gx)?);
                self.accumulate(grads, w, Tensor::new(vec![fout, fin], gw)?);
                self.accumulate(grads, b, Tensor::new(vec![fout], gb)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let ga = Tensor::new(
                    g.shape().to_vec(),
                    gd.iter().zip(bv.data()).map(|(x, y)| x * y).collect(),
                )?;
                let gb = Tensor::new(
                    g.shape().to_vec(),
                    gd.iter().zip(av.data()).map(|(x, y)| x * y).collect(),
                )?;
                self.accumulate(grads, a, ga);
                self.accumulate(grads, b, gb);
            }
            Op::SubScalar(a, s) => {
                self.accumulate(grads, a, g.clone());
                let total: f64 = gd.iter().sum();
                self.accumulate(grads, s, Tensor::full(self.value(s).shape(), -total));
            }
            Op::Scale(a, c) => self.accumulate(grads, a, g.map(|v| v * c)),
            Op::Offset(a) | Op::Reshape(a) => {
                let shaped = g.clone().reshape(self.value(a).shape())?;
                self.accumulate(grads, a, shaped)
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(a).data();
                let data = gd
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { slope * gv })
                    .collect();
                self.accumulate(grads, a, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let data = gd
                    .iter()
                    .zip(y)
                    .map(|(&gv, &s)| gv * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, a, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Softplus(a) => {
                let x = self.value(a).data();
                let data = gd
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| gv * sigmoid(xv))
                    .collect();
                self.accumulate(grads, a, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Log(a) => {
                let x = self.value(a).data();
                let data = gd.iter().zip(x).map(|(&gv, &xv)| gv / xv).collect();
                self.accumulate(grads, a, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Sqrt(a) => {
                // Subgradient 0 at the origin.
                let y = node.value.data();
                let data = gd
                    .iter()
                    .zip(y)
                    .map(|(&gv, &s)| if s > 0.0 { gv * 0.5 / s } else { 0.0 })
                    .collect();
                self.accumulate(grads, a, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::PixelShuffle(a, r) => {
                let [n, c, h, w] = nchw(self.value(a), "pixel_shuffle")?;
                let co = c / (r * r);
                let mut out = vec![0.0; gd.len()];
                for b in 0..n {
                    for cc in 0..co {
                        for i in 0..r {
                            for j in 0..r {
                                let ci = cc * r * r + i * r + j;
                                for y in 0..h {
                                    for x in 0..w {
                                        out[((b * c + ci) * h + y) * w + x] =
                                            gd[((b * co + cc) * h * r + y * r + i) * w * r
                                                + x * r
                                                + j];
                                    }
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, a, Tensor::new(vec![n, c, h, w], out)?);
            }
            Op::GlobalAvgPool(a) => {
                let [n, c, h, w] = nchw(self.value(a), "global_avg_pool")?;
                let plane = h * w;
                let mut out = Vec::with_capacity(n * c * plane);
                for &gv in gd {
                    out.extend(std::iter::repeat_n(gv / plane as f64, plane));
                }
                self.accumulate(grads, a, Tensor::new(vec![n, c, h, w], out)?);
            }
            Op::RepeatChannels(a) => {
                let [n, copies, h, w] = nchw(g, "repeat_channels")?;
                let plane = h * w;
                let mut out = vec![0.0; n * plane];
                for b in 0..n {
                    for k in 0..copies {
                        let src = &gd[(b * copies + k) * plane..][..plane];
                        for (o, v) in out[b * plane..][..plane].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
                self.accumulate(grads, a, Tensor::new(vec![n, 1, h, w], out)?);
            }
            Op::SumSqPerItem(a) => {
                let x = self.value(a);
                let per = x.len() / gd.len().max(1);
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| 2.0 * v * gd[i / per])
                    .collect();
                self.accumulate(grads, a, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Mean(a) => {
                let x = self.value(a);
                let gv = gd[0] / x.len() as f64;
                self.accumulate(grads, a, Tensor::full(x.shape(), gv));
            }
            Op::TvField(a) => {
                let [n, c, h, w] = nchw(self.value(a), "tv_field")?;
                let mut out = vec![0.0; gd.len()];
                for p in 0..n * c {
                    let base = p * h * w;
                    for y in 0..h {
                        for x in 0..w {
                            let i = base + y * w + x;
                            let gv = gd[i];
                            if y + 1 < h {
                                out[i + w] += gv;
                                out[i] -= gv;
                            }
                            if x + 1 < w {
                                out[i + 1] += gv;
                                out[i] -= gv;
                            }
                        }
                    }
                }
                self.accumulate(grads, a, Tensor::new(vec![n, c, h, w], out)?);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor, i: usize, h: f64) -> f64 {
        let mut p = x.clone();
        p.data_mut()[i] += h;
        let mut m = x.clone();
        m.data_mut()[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    }

    fn ramp(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| ((i * 37 % 23) as f64 / 23.0) - 0.4)
    }

    #[test]
    fn conv_chain_matches_finite_differences() {
        let x0 = ramp(&[1, 2, 5, 6]);
        let w0 = ramp(&[3, 2, 3, 3]);
        let f = |x: &Tensor| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let wv = g.constant(w0.clone());
            let bv = g.constant(Tensor::full(&[3], 0.1));
            let y = g.conv2d(xv, wv, bv, 2).unwrap();
            let y = g.sigmoid(y);
            let s = g.sum_sq_per_item(y).unwrap();
            let r = g.sqrt(s);
            let m = g.mean(r);
            g.scalar(m)
        };
        let mut g = Graph::new();
        let xv = g.param(x0.clone());
        let wv = g.constant(w0.clone());
        let bv = g.constant(Tensor::full(&[3], 0.1));
        let y = g.conv2d(xv, wv, bv, 2).unwrap();
        let y = g.sigmoid(y);
        let s = g.sum_sq_per_item(y).unwrap();
        let r = g.sqrt(s);
        let m = g.mean(r);
        let grads = g.backward(m).unwrap();
        let gx = grads.get(xv).unwrap();
        for i in 0..x0.len() {
            let n = numeric_grad(f, &x0, i, 1e-5);
            assert!(
                (gx.data()[i] - n).abs() < 1e-8,
                "coord {i}: {} vs {n}",
                gx.data()[i]
            );
        }
    }

    #[test]
    fn pixel_shuffle_layout() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 4, 1, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap());
        let y = g.pixel_shuffle(x, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 2]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.add(a, b).is_err());
        assert!(g.backward(a).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
