use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::io::load_evt1;
use crate::events::{stack_by_number, EventStack, EventStream, StackOptions};
use crate::imageio::load_png;
use crate::sim::{AssetKind, DatasetManifest, MANIFEST_FILE};
use crate::tensor::Tensor;

/// An event stack with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StackItem {
    pub sequence: usize,
    /// Timestamp of the last event in the stack.
    pub t_end: u64,
    /// `[n, H, W]`.
    pub tensor: Tensor,
}

/// Training material for one phase: event stacks and an unpaired target set.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub stacks: Vec<StackItem>,
    /// `[H, W]` each; stack resolution times the phase's upscaling.
    pub targets: Vec<Tensor>,
}

impl TrainData {
    pub fn new(stacks: Vec<StackItem>, targets: Vec<Tensor>) -> Result<Self> {
        if stacks.is_empty() {
            return Err(Error::MissingAsset("no event stacks".into()));
        }
        if targets.is_empty() {
            return Err(Error::MissingAsset("no target images".into()));
        }
        let s0 = stacks[0].tensor.shape().to_vec();
        if s0.len() != 3 || stacks.iter().any(|s| s.tensor.shape() != s0.as_slice()) {
            return Err(Error::Shape(format!(
                "event stacks must share one [n, H, W] shape; first is {s0:?}"
            )));
        }
        let t0 = targets[0].shape().to_vec();
        if t0.len() != 2 || targets.iter().any(|t| t.shape() != t0.as_slice()) {
            return Err(Error::Shape(format!(
                "target images must share one [H, W] shape; first is {t0:?}"
            )));
        }
        Ok(Self { stacks, targets })
    }

    /// `(n, H, W)` of the stacks.
    pub fn stack_dims(&self) -> (usize, usize, usize) {
        let s = self.stacks[0].tensor.shape();
        (s[0], s[1], s[2])
    }

    pub fn target_dims(&self) -> (usize, usize) {
        self.targets[0].hw()
    }
}

/// Consecutive disjoint stacks of `n` frames with `events_per_frame` events
/// each, from the start of the stream; a trailing remainder is dropped.
pub fn stacks_from_stream(
    stream: &EventStream,
    events_per_frame: usize,
    n: usize,
) -> Result<Vec<EventStack>> {
    let per = events_per_frame * n;
    if per == 0 {
        return Err(Error::InvalidArgument(
            "events per frame and frame count must be at least 1".into(),
        ));
    }
    let count = stream.len() / per;
    if count == 0 {
        // Reports the shortfall for the first stack.
        stack_by_number(stream, events_per_frame, n, 0, StackOptions::default())?;
    }
    (0..count)
        .map(|k| {
            stack_by_number(
                stream,
                events_per_frame,
                n,
                k * per,
                StackOptions::default(),
            )
        })
        .collect()
}

/// Accepts a manifest file or a directory holding `manifest.json`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if path.is_dir() {
        DatasetManifest::load(&path.join(MANIFEST_FILE))
    } else {
        DatasetManifest::load(path)
    }
}

/// Every stack of every events asset in `manifest`, in asset order.
pub fn load_event_stacks(
    manifest: &DatasetManifest,
    events_per_frame: usize,
    n: usize,
) -> Result<Vec<StackItem>> {
    let mut out = Vec::new();
    for asset in manifest.assets_of(AssetKind::Events) {
        let stream = load_evt1(&manifest.resolve(asset))?;
        for st in stacks_from_stream(&stream, events_per_frame, n)? {
            out.push(StackItem {
                sequence: asset.sequence,
                t_end: st.t_span.1,
                tensor: st.to_tensor(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::MissingAsset(format!(
            "{} has no events assets",
            manifest.role
        )));
    }
    Ok(out)
}

/// Images of `kind` from a manifest, or every `*.png` of a directory
/// without a manifest, in sorted filename order.
pub fn load_targets(path: &Path, kind: AssetKind) -> Result<Vec<Tensor>> {
    if path.is_dir() && !path.join(MANIFEST_FILE).exists() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::MissingAsset(format!(
                "no PNG images in {}",
                path.display()
            )));
        }
        return files.iter().map(|p| load_png(p)).collect();
    }
    let m = load_manifest(path)?;
    let imgs = m
        .assets_of(kind)
        .map(|a| load_png(&m.resolve(a)))
        .collect::<Result<Vec<_>>>()?;
    if imgs.is_empty() {
        return Err(Error::MissingAsset(format!(
            "{} has no {kind:?} images",
            m.role
        )));
    }
    Ok(imgs)
}

/// One geometric augmentation: `k` counter-clockwise quarter turns, then an
/// optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugDraw {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl AugDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            quarter_turns: rng.random_range(0..4),
            flip: rng.random_bool(0.5),
        }
    }

    /// Source pixel for output `(x, y)` on a square `size x size` grid.
    ///
    /// One quarter turn moves input `(x, y)` to `(y, size - 1 - x)`.
    pub fn source(&self, x: usize, y: usize, size: usize) -> (usize, usize) {
        let (mut x, mut y) = (x, y);
        if self.flip {
            x = size - 1 - x;
        }
        for _ in 0..self.quarter_turns {
            (x, y) = (size - 1 - y, x);
        }
        (x, y)
    }

    /// Applies the draw to every channel of an `[H, W]` or `[C, H, W]` tensor.
    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        let (h, w) = match *t.shape() {
            [h, w] | [_, h, w] => (h, w),
            ref s => {
                return Err(Error::Shape(format!(
                    "augment expects HW or CHW, got {s:?}"
                )))
            }
        };
        if h != w {
            return Err(Error::Shape(format!(
                "rotation needs square images, got {h}x{w}"
            )));
        }
        if *self == Self::default() {
            return Ok(t.clone());
        }
        let plane = h * w;
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for (c, dst) in out.chunks_mut(plane).enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = self.source(x, y, w);
                    dst[y * w + x] = src[c * plane + sy * w + sx];
                }
            }
        }
        Tensor::new(t.shape().to_vec(), out)
    }
}

/// Independent draws for the stack and the image; training is unpaired.
pub fn augment<R: Rng + ?Sized>(
    stack: &Tensor,
    image: &Tensor,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    let ds = AugDraw::sample(rng);
    let di = AugDraw::sample(rng);
    Ok((ds.apply(stack)?, di.apply(image)?))
}
