//! Event simulation from intensity video.
//!
//! Each pixel tracks log intensity `L = ln(I + eps)` against a reference level
//! `L_ref`. Between frames `L` is linear in time; every time it reaches
//! `L_ref + C` (or `L_ref - C`) an event is emitted at the interpolated crossing
//! time and `L_ref` moves by `C` in the same direction.

mod dataset;
mod resample;
pub mod scene;

pub use dataset::{
    build_dataset, Asset, AssetKind, DatasetConfig, DatasetManifest, Role, Usage, MANIFEST_FILE,
};
pub use resample::{degrade_aps, downsample_bicubic, gaussian_blur};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::{Event, EventStream};
use crate::tensor::Tensor;

/// Ordered grayscale frames with strictly increasing microsecond timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Tensor>,
    timestamps: Vec<u64>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Tensor>, timestamps: Vec<u64>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a video needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if frames.len() != timestamps.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frames but {} timestamps",
                frames.len(),
                timestamps.len()
            )));
        }
        let shape = frames[0].shape();
        if shape.len() != 2 {
            return Err(Error::Shape(format!("frames must be HxW, got {shape:?}")));
        }
        if let Some(i) = frames.iter().position(|f| f.shape() != shape) {
            return Err(Error::Shape(format!(
                "frame {i} has shape {:?}, expected {shape:?}",
                frames[i].shape()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument(format!(
                "timestamps must strictly increase: t[{i}]={} >= t[{}]={}",
                timestamps[i],
                i + 1,
                timestamps[i + 1]
            )));
        }
        Ok(Self { frames, timestamps })
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].hw()
    }

    pub fn map_frames(&self, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Self> {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(frames, self.timestamps.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Log-intensity change per event.
    pub contrast_threshold: f64,
    pub log_eps: f64,
    pub seed: u64,
    /// Events closer than this to the previous event at the same pixel are
    /// dropped (the reference level still moves). 0 disables.
    pub refractory_us: u64,
    /// Standard deviation of a per-pixel threshold offset. 0 disables.
    pub threshold_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.15,
            log_eps: 1e-3,
            seed: 0,
            refractory_us: 0,
            threshold_sigma: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0) || !(self.log_eps > 0.0) {
            return Err(Error::Config(format!(
                "contrast threshold ({}) and log eps ({}) must be positive",
                self.contrast_threshold, self.log_eps
            )));
        }
        if !(self.threshold_sigma >= 0.0) {
            return Err(Error::Config("threshold sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-pixel thresholds, row-major.
    fn thresholds(&self, pixels: usize) -> Vec<f64> {
        if self.threshold_sigma == 0.0 {
            return vec![self.contrast_threshold; pixels];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.threshold_sigma).expect("sigma validated");
        (0..pixels)
            .map(|_| {
                (self.contrast_threshold + normal.sample(&mut rng))
                    .max(0.01 * self.contrast_threshold)
            })
            .collect()
    }
}

/// Relative slack for treating an exact boundary hit as a crossing.
const CROSS_TOL: f64 = 1e-9;

/// Emits the crossings of one pixel over one linear segment, updating `l_ref`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pixel_segment(
    l_a: f64,
    l_b: f64,
    t_a: u64,
    t_b: u64,
    c: f64,
    l_ref: &mut f64,
    mut emit: impl FnMut(u64, i8),
) {
    let span = (t_b - t_a) as f64;
    let at = |level: f64| -> u64 {
        let frac = ((level - l_a) / (l_b - l_a)).clamp(0.0, 1.0);
        t_a + (frac * span).round() as u64
    };
    let tol = CROSS_TOL * c;
    if l_b > l_a {
        while *l_ref + c <= l_b + tol {
            *l_ref += c;
            emit(at(*l_ref), 1);
        }
    } else if l_b < l_a {
        while *l_ref - c >= l_b - tol {
            *l_ref -= c;
            emit(at(*l_ref), -1);
        }
    }
}

/// Converts a video into a time-sorted event stream; ties are ordered by
/// `(t, y, x)` and then by generation order within a pixel.
pub fn simulate_events(video: &VideoSequence, cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    let (h, w) = video.dims();
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::Shape(format!(
            "{w}x{h} exceeds the u16 sensor range"
        )));
    }
    let logs: Vec<Vec<f64>> = video
        .frames()
        .iter()
        .map(|f| f.data().iter().map(|&v| (v + cfg.log_eps).ln()).collect())
        .collect();
    let thresholds = cfg.thresholds(h * w);
    let ts = video.timestamps();

    let per_pixel: Vec<Vec<Event>> = (0..h * w)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = ((idx % w) as u16, (idx / w) as u16);
            let c = thresholds[idx];
            let mut l_ref = logs[0][idx];
            let mut last_t: Option<u64> = None;
            let mut out = Vec::new();
            for k in 1..logs.len() {
                pixel_segment(
                    logs[k - 1][idx],
                    logs[k][idx],
                    ts[k - 1],
                    ts[k],
                    c,
                    &mut l_ref,
                    |t, p| {
                        let blocked = cfg.refractory_us > 0
                            && last_t.is_some_and(|lt| t - lt < cfg.refractory_us);
                        if !blocked {
                            out.push(Event::new(t, x, y, p));
                            last_t = Some(t);
                        }
                    },
                );
            }
            out
        })
        .collect();

    let mut events: Vec<Event> = per_pixel.into_iter().flatten().collect();
    events.sort_by_key(|e| (e.t, e.y, e.x));
    EventStream::new(events, w as u16, h as u16)
}
