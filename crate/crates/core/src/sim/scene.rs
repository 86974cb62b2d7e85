//! Procedural moving scenes used as simulator input for demos and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

use super::VideoSequence;

#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

/// A textured pattern of Gaussian blobs over a sinusoidal grating, translating
/// at a constant velocity. Coordinates are normalized so the same seed gives
/// the same scene content at any resolution.
#[derive(Debug, Clone)]
pub struct MovingScene {
    blobs: Vec<Blob>,
    grating: (f64, f64, f64, f64),
    /// Normalized displacement per frame.
    velocity: (f64, f64),
}

impl MovingScene {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs = (0..7)
            .map(|_| Blob {
                cx: rng.random_range(-0.1..1.1),
                cy: rng.random_range(-0.1..1.1),
                sigma: rng.random_range(0.05..0.16),
                amp: rng.random_range(0.15..0.35) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            })
            .collect();
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let freq = rng.random_range(2.0..4.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = rng.random_range(0.025..0.035);
        let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        Self {
            blobs,
            grating: (theta.cos() * freq, theta.sin() * freq, phase, 0.12),
            velocity: (speed * dir.cos(), speed * dir.sin()),
        }
    }

    /// Intensity at normalized coordinates `(u, v)` and frame index `k`.
    pub fn intensity(&self, u: f64, v: f64, k: f64) -> f64 {
        let u = u - self.velocity.0 * k;
        let v = v - self.velocity.1 * k;
        let (fu, fv, phase, amp) = self.grating;
        let mut i = 0.5 + amp * (std::f64::consts::TAU * (fu * u + fv * v) + phase).sin();
        for b in &self.blobs {
            let d2 = (u - b.cx).powi(2) + (v - b.cy).powi(2);
            i += b.amp * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
        }
        i.clamp(0.08, 0.92)
    }

    /// Renders frame `k` at `size x size`, sampling pixel centres.
    pub fn render(&self, size: usize, k: usize) -> Tensor {
        let s = size as f64;
        Tensor::from_fn(&[size, size], |i| {
            let (y, x) = (i / size, i % size);
            self.intensity((x as f64 + 0.5) / s, (y as f64 + 0.5) / s, k as f64)
        })
    }

    pub fn video(&self, size: usize, frames: usize, frame_dt_us: u64) -> Result<VideoSequence> {
        let imgs = (0..frames).map(|k| self.render(size, k)).collect();
        let ts = (0..frames as u64).map(|k| k * frame_dt_us).collect();
        VideoSequence::new(imgs, ts)
    }
}
