use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BICUBIC_A: f64 = -0.5;

fn cubic(x: f64) -> f64 {
    let x = x.abs();
    let a = BICUBIC_A;
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Four taps and weights for the output sample centred on input coordinate `c`.
fn taps(c: f64, len: usize) -> [(usize, f64); 4] {
    let base = c.floor();
    let mut out = [(0, 0.0); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let pos = base + k as f64 - 1.0;
        let idx = (pos.max(0.0) as usize).min(len - 1);
        *slot = (idx, cubic(c - pos));
    }
    out
}

fn image_hw(image: &Tensor) -> Result<(usize, usize)> {
    match *image.shape() {
        [h, w] => Ok((h, w)),
        ref s => Err(Error::Shape(format!("expected an HxW image, got {s:?}"))),
    }
}

/// Bicubic (a = -0.5) downsampling with edge clamping. Output pixel `o`
/// samples the input at `(o + 0.5) * factor - 0.5`.
pub fn downsample_bicubic(image: &Tensor, factor: usize) -> Result<Tensor> {
    let (h, w) = image_hw(image)?;
    if factor < 2 {
        return Err(Error::InvalidArgument(format!(
            "factor must be >= 2, got {factor}"
        )));
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} is not divisible by factor {factor}"
        )));
    }
    let (ho, wo) = (h / factor, w / factor);
    let centre = |o: usize| (o as f64 + 0.5) * factor as f64 - 0.5;
    let src = image.data();

    // Separable: rows first, then columns.
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for ox in 0..wo {
            rows[y * wo + ox] = taps(centre(ox), w)
                .iter()
                .map(|&(ix, wt)| wt * src[y * w + ix])
                .sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for oy in 0..ho {
        let ty = taps(centre(oy), h);
        for ox in 0..wo {
            out[oy * wo + ox] = ty.iter().map(|&(iy, wt)| wt * rows[iy * wo + ox]).sum();
        }
    }
    Tensor::new(vec![ho, wo], out)
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, edge clamped. `sigma == 0`
/// returns the input unchanged.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Result<Tensor> {
    let (h, w) = image_hw(image)?;
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("blur sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;

    let src = image.data();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * src[y * w + clamp(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * tmp[clamp(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    Tensor::new(vec![h, w], out)
}

/// Gaussian blur followed by seeded additive Gaussian noise, clipped to [0, 1].
pub fn degrade_aps(image: &Tensor, blur_sigma: f64, noise_sigma: f64, seed: u64) -> Result<Tensor> {
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma}")));
    }
    let mut out = gaussian_blur(image, blur_sigma)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("sigma validated");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}
