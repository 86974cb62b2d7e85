//! Independent reference implementations shared by the integration tests.
//! Everything here is plain scalar loops over `Vec<f64>`, written without
//! calling the library code it checks.
#![allow(dead_code)]

use eventsr::events::Event;
use eventsr::losses::FeatureExtractor;
use eventsr::Tensor;
use rand::Rng;

/// Frame index of every consumed event, assigned one at a time by counters.
pub fn brute_force_frames(len: usize, n_e: usize, n: usize, start: usize) -> Vec<Vec<usize>> {
    let mut frames = vec![Vec::new(); n];
    let (mut frame, mut in_frame) = (0, 0);
    for i in 0..len {
        if i < start || frame == n {
            continue;
        }
        frames[frame].push(i);
        in_frame += 1;
        if in_frame == n_e {
            frame += 1;
            in_frame = 0;
        }
    }
    frames
}

/// Scalar per-pixel event simulator. Returns `(t, x, y, p)` tuples sorted.
pub fn reference_events(
    frames: &[Vec<f64>],
    ts: &[u64],
    w: usize,
    c: f64,
    eps: f64,
) -> Vec<(u64, u16, u16, i8)> {
    let mut out = Vec::new();
    let tol = 1e-9 * c;
    for idx in 0..frames[0].len() {
        let logs: Vec<f64> = frames.iter().map(|f| (f[idx] + eps).ln()).collect();
        let mut reference = logs[0];
        for k in 1..logs.len() {
            let (a, b) = (logs[k - 1], logs[k]);
            let (ta, tb) = (ts[k - 1], ts[k]);
            let time_of = |level: f64| {
                let mut frac = (level - a) / (b - a);
                if frac < 0.0 {
                    frac = 0.0;
                }
                if frac > 1.0 {
                    frac = 1.0;
                }
                ta + (frac * (tb - ta) as f64).round() as u64
            };
            if b > a {
                while reference + c <= b + tol {
                    reference += c;
                    out.push((time_of(reference), (idx % w) as u16, (idx / w) as u16, 1));
                }
            }
            if b < a {
                while reference - c >= b - tol {
                    reference -= c;
                    out.push((time_of(reference), (idx % w) as u16, (idx / w) as u16, -1));
                }
            }
        }
    }
    out.sort();
    out
}

pub fn tuples(events: &[Event]) -> Vec<(u64, u16, u16, i8)> {
    let mut v: Vec<_> = events.iter().map(|e| (e.t, e.x, e.y, e.p)).collect();
    v.sort();
    v
}

/// Uniform values in `[lo, hi)`.
pub fn random_values<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), random_values(rng, n, lo, hi)).unwrap()
}

/// Root of the sum of squares of `a - b`.
pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// `[C, H, W]` feature map as nested loops: same-padded conv then leaky ReLU.
pub fn reference_features(
    fx: &FeatureExtractor,
    image: &[f64],
    c: usize,
    h: usize,
    w: usize,
    upto: usize,
) -> Vec<f64> {
    let (mut x, mut c, mut h, mut w) = (image.to_vec(), c, h, w);
    for layer in &fx.layers()[..upto] {
        let ws = layer.weight.shape();
        let (co, k) = (ws[0], ws[2]);
        let pad = k / 2;
        let s = layer.stride;
        let ho = (h + 2 * pad - k) / s + 1;
        let wo = (w + 2 * pad - k) / s + 1;
        let wt = layer.weight.data();
        let mut y = vec![0.0; co * ho * wo];
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = layer.bias.data()[o];
                    for i in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * s + ky) as isize - pad as isize;
                                let ix = (ox * s + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += wt[((o * c + i) * k + ky) * k + kx]
                                    * x[(i * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    y[(o * ho + oy) * wo + ox] = if acc >= 0.0 { acc } else { 0.2 * acc };
                }
            }
        }
        (x, c, h, w) = (y, co, ho, wo);
    }
    x
}

/// Single item event similarity: pixel distance blended with the
/// size-normalised feature distance.
pub fn reference_event_similarity(
    rec: &[f64],
    inp: &[f64],
    c: usize,
    h: usize,
    w: usize,
    alpha: f64,
    fx: &FeatureExtractor,
) -> f64 {
    let pixel = l2(rec, inp);
    if alpha == 1.0 {
        return pixel;
    }
    let fr = reference_features(fx, rec, c, h, w, fx.layer());
    let fi = reference_features(fx, inp, c, h, w, fx.layer());
    alpha * pixel + (1.0 - alpha) / fr.len() as f64 * l2(&fr, &fi)
}

/// Forward differences, summed per pixel, zero past the last row and column.
pub fn reference_tv(img: &[f64], h: usize, w: usize) -> f64 {
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let mut g = 0.0;
            if y + 1 < h {
                g += img[(y + 1) * w + x] - img[y * w + x];
            }
            if x + 1 < w {
                g += img[y * w + x + 1] - img[y * w + x];
            }
            s += g * g;
        }
    }
    s.sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `(generator, discriminator)` relativistic-average losses.
pub fn reference_relativistic(real: &[f64], fake: &[f64]) -> (f64, f64) {
    let (mr, mf) = (mean(real), mean(fake));
    let d = mean(&real.iter().map(|r| softplus(-(r - mf))).collect::<Vec<_>>())
        + mean(&fake.iter().map(|f| softplus(f - mr)).collect::<Vec<_>>());
    let g = mean(&fake.iter().map(|f| softplus(-(f - mr))).collect::<Vec<_>>())
        + mean(&real.iter().map(|r| softplus(r - mf)).collect::<Vec<_>>());
    (g, d)
}

/// Central difference of `f` at coordinate `i` with step `h`.
pub fn central_difference(x: &Tensor, i: usize, h: f64, f: impl Fn(&Tensor) -> f64) -> f64 {
    let mut plus = x.clone();
    plus.data_mut()[i] += h;
    let mut minus = x.clone();
    minus.data_mut()[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|)`, with the denominator floored at `1e-8`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Mean SSIM by explicit loops over every window.
pub fn reference_ssim(
    a: &[f64],
    b: &[f64],
    h: usize,
    w: usize,
    win: usize,
    k1: f64,
    k2: f64,
) -> f64 {
    let (c1, c2) = (k1 * k1, k2 * k2);
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - win {
        for x0 in 0..=w - win {
            let (mut ma, mut mb) = (0.0, 0.0);
            for y in y0..y0 + win {
                for x in x0..x0 + win {
                    ma += a[y * w + x];
                    mb += b[y * w + x];
                }
            }
            ma /= n;
            mb /= n;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for y in y0..y0 + win {
                for x in x0..x0 + win {
                    let (p, q) = (a[y * w + x] - ma, b[y * w + x] - mb);
                    va += p * p;
                    vb += q * q;
                    cov += p * q;
                }
            }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Index of the closest reference by scanning all of them; the first wins ties.
pub fn exhaustive_match(t: u64, refs: &[u64]) -> usize {
    let mut best = 0;
    for (j, &r) in refs.iter().enumerate() {
        if t.abs_diff(r) < t.abs_diff(refs[best]) {
            best = j;
        }
    }
    best
}

/// `[n, h, w]` stack of random event-frame-like values.
pub fn random_stack<R: Rng>(rng: &mut R, n: usize, h: usize, w: usize) -> Tensor {
    random_tensor(rng, &[n, h, w], 0.0, 1.0)
}
