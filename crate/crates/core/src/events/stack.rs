use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Event, EventStream};

/// Default clip bound `c`: a pixel saturates after 3 net events of one sign.
pub const DEFAULT_CLIP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackOptions {
    /// Net polarity count at which a pixel saturates.
    pub clip: f64,
    /// Emit prefix unions (frame k holds the first k * N_e events) instead of
    /// disjoint slices.
    pub cumulative: bool,
}

impl Default for StackOptions {
    fn default() -> Self {
        Self {
            clip: DEFAULT_CLIP,
            cumulative: false,
        }
    }
}

/// `n` rendered event frames, each `height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStack {
    pub frames: Vec<Tensor>,
    /// Half-open index ranges into the source stream, one per frame.
    pub frame_event_ranges: Vec<(usize, usize)>,
    /// Events per frame; 0 for time-window stacks.
    pub events_per_frame: usize,
    /// First and last timestamp covered, in microseconds.
    pub t_span: (u64, u64),
}

impl EventStack {
    pub fn n(&self) -> usize {
        self.frames.len()
    }

    /// `[n, height, width]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::stack(&self.frames).expect("frames share a shape")
    }
}

/// Signed polarity sum per pixel, clipped to `[-clip, clip]` and mapped to
/// `0.5 + s / (2 * clip)`. Pixels without events sit at 0.5.
pub fn render_frame(events: &[Event], width: u16, height: u16, clip: f64) -> Tensor {
    let (w, h) = (width as usize, height as usize);
    let mut sums = vec![0i64; w * h];
    for e in events {
        sums[e.y as usize * w + e.x as usize] += e.p as i64;
    }
    let data = sums
        .into_iter()
        .map(|s| 0.5 + (s as f64).clamp(-clip, clip) / (2.0 * clip))
        .collect();
    Tensor::new(vec![h, w], data).expect("sized from dims")
}

/// Frame `k` renders events `[start + k * N_e, start + (k + 1) * N_e)`.
pub fn stack_by_number(
    stream: &EventStream,
    events_per_frame: usize,
    n: usize,
    start: usize,
    opts: StackOptions,
) -> Result<EventStack> {
    if events_per_frame == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "events per frame and frame count must be at least 1".into(),
        ));
    }
    let needed = start + n * events_per_frame;
    let available = stream.len();
    if available < needed {
        return Err(Error::InsufficientEvents {
            needed,
            available,
            shortfall: needed - available,
        });
    }
    let events = stream.events();
    let mut frames = Vec::with_capacity(n);
    let mut ranges = Vec::with_capacity(n);
    for k in 0..n {
        let lo = if opts.cumulative {
            start
        } else {
            start + k * events_per_frame
        };
        let hi = start + (k + 1) * events_per_frame;
        frames.push(render_frame(
            &events[lo..hi],
            stream.width(),
            stream.height(),
            opts.clip,
        ));
        ranges.push((lo, hi));
    }
    Ok(EventStack {
        frames,
        frame_event_ranges: ranges,
        events_per_frame,
        t_span: (events[start].t, events[needed - 1].t),
    })
}

/// Frame `k` renders events with `t0 + k * dt <= t < t0 + (k + 1) * dt`.
pub fn stack_by_time(
    stream: &EventStream,
    window_dt: u64,
    n: usize,
    t0: u64,
    opts: StackOptions,
) -> Result<EventStack> {
    if window_dt == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "window length and frame count must be at least 1".into(),
        ));
    }
    let events = stream.events();
    let first = events.partition_point(|e| e.t < t0);
    let mut frames = Vec::with_capacity(n);
    let mut ranges = Vec::with_capacity(n);
    let mut lo = first;
    for k in 0..n {
        let end_t = t0.saturating_add((k as u64 + 1).saturating_mul(window_dt));
        let hi = events.partition_point(|e| e.t < end_t);
        let from = if opts.cumulative { first } else { lo };
        frames.push(render_frame(
            &events[from..hi],
            stream.width(),
            stream.height(),
            opts.clip,
        ));
        ranges.push((from, hi));
        lo = hi;
    }
    let span_end = t0.saturating_add((n as u64).saturating_mul(window_dt)) - 1;
    Ok(EventStack {
        frames,
        frame_event_ranges: ranges,
        events_per_frame: 0,
        t_span: (t0, span_end),
    })
}

/// Population variance of the pixel values; a sharper frame scores higher.
pub fn focus_variance(frame: &Tensor) -> f64 {
    let data = frame.data();
    if data.is_empty() {
        return 0.0;
    }
    // Shifting by the first value keeps a constant frame exactly zero.
    let n = data.len() as f64;
    let shift = data[0];
    let mean = data.iter().map(|v| v - shift).sum::<f64>() / n;
    data.iter()
        .map(|v| (v - shift - mean) * (v - shift - mean))
        .sum::<f64>()
        / n
}

/// Mean focus variance over a stack's frames.
pub fn stack_score(stack: &EventStack) -> f64 {
    if stack.frames.is_empty() {
        return 0.0;
    }
    stack.frames.iter().map(focus_variance).sum::<f64>() / stack.frames.len() as f64
}

/// Keeps stacks scoring at least `threshold`. A threshold of 0 keeps all.
pub fn filter_by_focus(stacks: Vec<EventStack>, threshold: f64) -> Vec<EventStack> {
    stacks
        .into_iter()
        .filter(|s| stack_score(s) >= threshold)
        .collect()
}

/// Frames already inside `[0, 1]` pass through unchanged; others are min-max
/// rescaled (constant frames map to 0.5).
pub fn normalize_stack(stack: &EventStack) -> EventStack {
    let frames = stack
        .frames
        .iter()
        .map(|f| {
            let (lo, hi) = f
                .data()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if f.is_empty() || (lo >= 0.0 && hi <= 1.0) {
                f.clone()
            } else if hi > lo {
                f.map(|v| (v - lo) / (hi - lo))
            } else {
                f.map(|_| 0.5)
            }
        })
        .collect();
    EventStack {
        frames,
        ..stack.clone()
    }
}
