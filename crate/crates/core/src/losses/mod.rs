//! Training objectives.
//!
//! Each phase minimises
//!
//! ```text
//! L = L_adv + lambda1 * L_sim + lambda2 * L_id + lambda3 * L_var
//! ```
//!
//! Norms `||.||_2` are root-sum-square over all elements of one batch item,
//! and expectations are means over the batch. The graph-building functions
//! here are what the trainer differentiates; the `*_value` helpers evaluate
//! the same graphs on plain tensors.

mod features;

pub use features::{
    FeatureExtractor, FeatureLayer, DEFAULT_FEATURE_CHANNELS, DEFAULT_FEATURE_LAYER,
};

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Event similarity.
    pub lambda1: f64,
    /// Identity.
    pub lambda2: f64,
    /// Total variation.
    pub lambda3: f64,
    /// Pixel vs. feature interpolation inside the event similarity term.
    pub alpha: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if [self.lambda1, self.lambda2, self.lambda3]
            .iter()
            .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Generator side of the standard adversarial loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    /// `-E[log(1 - D(G(E)))]`, the literal printed form.
    Paper,
    /// `-E[log D(G(E))]`.
    #[default]
    NonSaturating,
}

/// Lifts `[H, W]` and `[C, H, W]` to NCHW with a batch of one.
pub fn as_batch(t: &Tensor) -> Result<Tensor> {
    let s = t.shape();
    let shape = match *s {
        [h, w] => vec![1, 1, h, w],
        [c, h, w] => vec![1, c, h, w],
        [_, _, _, _] => return Ok(t.clone()),
        _ => return Err(Error::Shape(format!("expected HW, CHW or NCHW, got {s:?}"))),
    };
    t.clone().reshape(&shape)
}

fn check_same(g: &Graph, a: Var, b: Var, what: &str) -> Result<()> {
    if g.value(a).shape() != g.value(b).shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            g.value(a).shape(),
            g.value(b).shape()
        )));
    }
    Ok(())
}

fn check_probabilities(g: &Graph, v: Var) -> Result<()> {
    if let Some(p) = g.value(v).data().iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "discriminator score {p} outside (0, 1)"
        )));
    }
    Ok(())
}

/// `E[||a - b||_2]` over the leading (batch) axis.
pub fn mean_l2_distance(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    check_same(g, a, b, "l2 distance")?;
    let d = g.sub(a, b)?;
    let ss = g.sum_sq_per_item(d)?;
    let n = g.sqrt(ss);
    Ok(g.mean(n))
}

/// `-E[log(1 - d)]` (paper) or `-E[log d]` (non-saturating), `d` in (0, 1).
pub fn adversarial_generator(g: &mut Graph, d_fake: Var, mode: GeneratorMode) -> Result<Var> {
    check_probabilities(g, d_fake)?;
    let term = match mode {
        GeneratorMode::Paper => {
            let neg = g.scale(d_fake, -1.0);
            let one_minus = g.offset(neg, 1.0);
            g.log(one_minus)
        }
        GeneratorMode::NonSaturating => g.log(d_fake),
    };
    let m = g.mean(term);
    Ok(g.scale(m, -1.0))
}

/// Same as [`adversarial_generator`] on pre-sigmoid logits, without overflow:
/// `-log(1 - sigmoid(z)) = softplus(z)`, `-log sigmoid(z) = softplus(-z)`.
pub fn adversarial_generator_logits(g: &mut Graph, logits: Var, mode: GeneratorMode) -> Var {
    let sp = match mode {
        GeneratorMode::Paper => g.softplus(logits),
        GeneratorMode::NonSaturating => {
            let neg = g.scale(logits, -1.0);
            g.softplus(neg)
        }
    };
    g.mean(sp)
}

/// Binary cross-entropy `-E[log d_real] - E[log(1 - d_fake)]`.
pub fn adversarial_discriminator(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<Var> {
    check_probabilities(g, d_real)?;
    check_probabilities(g, d_fake)?;
    let lr = g.log(d_real);
    let real = g.mean(lr);
    let neg = g.scale(d_fake, -1.0);
    let om = g.offset(neg, 1.0);
    let lf = g.log(om);
    let fake = g.mean(lf);
    let s = g.add(real, fake)?;
    Ok(g.scale(s, -1.0))
}

/// [`adversarial_discriminator`] on logits.
pub fn adversarial_discriminator_logits(g: &mut Graph, real: Var, fake: Var) -> Result<Var> {
    let nr = g.scale(real, -1.0);
    let a = g.softplus(nr);
    let a = g.mean(a);
    let b = g.softplus(fake);
    let b = g.mean(b);
    g.add(a, b)
}

/// Relativistic-average losses on critic outputs; returns `(g_loss, d_loss)`.
///
/// ```text
/// d_loss = BCE(sigmoid(c_real - mean c_fake), 1) + BCE(sigmoid(c_fake - mean c_real), 0)
/// g_loss = BCE(sigmoid(c_fake - mean c_real), 1) + BCE(sigmoid(c_real - mean c_fake), 0)
/// ```
pub fn relativistic_adversarial(g: &mut Graph, c_real: Var, c_fake: Var) -> Result<(Var, Var)> {
    let mean_real = g.mean(c_real);
    let mean_fake = g.mean(c_fake);
    let real_rel = g.sub_scalar(c_real, mean_fake)?;
    let fake_rel = g.sub_scalar(c_fake, mean_real)?;
    // BCE(sigmoid(z), 1) = softplus(-z); BCE(sigmoid(z), 0) = softplus(z).
    let bce1 = |g: &mut Graph, z: Var| {
        let n = g.scale(z, -1.0);
        let s = g.softplus(n);
        g.mean(s)
    };
    let bce0 = |g: &mut Graph, z: Var| {
        let s = g.softplus(z);
        g.mean(s)
    };
    let d_a = bce1(g, real_rel);
    let d_b = bce0(g, fake_rel);
    let d_loss = g.add(d_a, d_b)?;
    let g_a = bce1(g, fake_rel);
    let g_b = bce0(g, real_rel);
    let g_loss = g.add(g_a, g_b)?;
    Ok((g_loss, d_loss))
}

/// `E[alpha ||rec - inp||_2 + (1 - alpha) / (C H W) ||phi(rec) - phi(inp)||_2]`.
/// With `alpha == 1` the feature term is skipped entirely.
pub fn event_similarity(
    g: &mut Graph,
    rec: Var,
    inp: Var,
    alpha: f64,
    phi: &FeatureExtractor,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    check_same(g, rec, inp, "event similarity")?;
    let pixel = mean_l2_distance(g, rec, inp)?;
    let pixel = g.scale(pixel, alpha);
    if alpha == 1.0 {
        return Ok(pixel);
    }
    let fr = phi.forward(g, rec, phi.layer())?;
    let fi = phi.forward(g, inp, phi.layer())?;
    let s = g.value(fr).shape();
    let chw = (s[1] * s[2] * s[3]) as f64;
    let feat = mean_l2_distance(g, fr, fi)?;
    let feat = g.scale(feat, (1.0 - alpha) / chw);
    g.add(pixel, feat)
}

/// `E[||out - target||_2]`.
pub fn identity(g: &mut Graph, out: Var, target: Var) -> Result<Var> {
    mean_l2_distance(g, out, target)
}

/// `E[||grad_h x + grad_w x||_2]` with forward differences; the last row and
/// column contribute zero.
pub fn total_variation(g: &mut Graph, image: Var) -> Result<Var> {
    let s = g.value(image).shape();
    if s.len() != 4 || s[2] < 2 || s[3] < 2 {
        return Err(Error::Shape(format!(
            "total variation needs an NCHW image of at least 2x2, got {s:?}"
        )));
    }
    let field = g.tv_field(image)?;
    let ss = g.sum_sq_per_item(field)?;
    let n = g.sqrt(ss);
    Ok(g.mean(n))
}

/// `adv + lambda1 * sim + lambda2 * id + lambda3 * var`.
pub fn phase_total(adv: f64, sim: f64, id: f64, var: f64, w: &LossWeights) -> f64 {
    adv + w.lambda1 * sim + w.lambda2 * id + w.lambda3 * var
}

/// Graph form of [`phase_total`].
pub fn phase_total_graph(
    g: &mut Graph,
    adv: Var,
    sim: Var,
    id: Var,
    var: Var,
    w: &LossWeights,
) -> Result<Var> {
    let s = g.scale(sim, w.lambda1);
    let i = g.scale(id, w.lambda2);
    let v = g.scale(var, w.lambda3);
    let t = g.add(adv, s)?;
    let t = g.add(t, i)?;
    g.add(t, v)
}

fn eval1(t: &Tensor, f: impl FnOnce(&mut Graph, Var) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(t.clone());
    let y = f(&mut g, x)?;
    Ok(g.scalar(y))
}

fn eval2(
    a: &Tensor,
    b: &Tensor,
    f: impl FnOnce(&mut Graph, Var, Var) -> Result<Var>,
) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(a.clone());
    let y = g.constant(b.clone());
    let z = f(&mut g, x, y)?;
    Ok(g.scalar(z))
}

pub fn adversarial_generator_value(d_fake: &Tensor, mode: GeneratorMode) -> Result<f64> {
    eval1(d_fake, |g, d| adversarial_generator(g, d, mode))
}

pub fn adversarial_discriminator_value(d_real: &Tensor, d_fake: &Tensor) -> Result<f64> {
    eval2(d_real, d_fake, adversarial_discriminator)
}

/// Returns `(g_loss, d_loss)`.
pub fn relativistic_adversarial_value(c_real: &Tensor, c_fake: &Tensor) -> Result<(f64, f64)> {
    if c_real
        .data()
        .iter()
        .chain(c_fake.data())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument(
            "critic outputs must be finite".into(),
        ));
    }
    let mut g = Graph::new();
    let r = g.constant(c_real.clone());
    let f = g.constant(c_fake.clone());
    let (gl, dl) = relativistic_adversarial(&mut g, r, f)?;
    Ok((g.scalar(gl), g.scalar(dl)))
}

pub fn event_similarity_value(
    rec: &Tensor,
    inp: &Tensor,
    alpha: f64,
    phi: &FeatureExtractor,
) -> Result<f64> {
    eval2(&as_batch(rec)?, &as_batch(inp)?, |g, a, b| {
        event_similarity(g, a, b, alpha, phi)
    })
}

pub fn identity_value(out: &Tensor, target: &Tensor) -> Result<f64> {
    eval2(&as_batch(out)?, &as_batch(target)?, identity)
}

pub fn total_variation_value(image: &Tensor) -> Result<f64> {
    eval1(&as_batch(image)?, total_variation)
}
