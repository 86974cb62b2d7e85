//! Event data model, stream validation and stacking into frame tensors.

pub mod io;
mod stack;

pub use stack::{
    filter_by_focus, focus_variance, normalize_stack, render_frame, stack_by_number, stack_by_time,
    stack_score, EventStack, StackOptions, DEFAULT_CLIP,
};

use crate::error::{Error, Result};

/// Events per frame used for training inputs.
pub const DEFAULT_EVENTS_PER_FRAME: usize = 10_000;
/// Frames per stack.
pub const DEFAULT_FRAMES_PER_STACK: usize = 3;

/// A single brightness change: pixel column `x`, row `y`, timestamp `t` in
/// microseconds and polarity `p` of +1 or -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: i8) -> Self {
        Self { t, x, y, p }
    }
}

/// Time-sorted events on a `width` x `height` sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
}

impl EventStream {
    /// Validates bounds and polarity, then sorts stably by timestamp.
    pub fn new(mut events: Vec<Event>, width: u16, height: u16) -> Result<Self> {
        for (index, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(Error::OutOfBounds {
                    index,
                    x: e.x as u32,
                    y: e.y as u32,
                    width: width as u32,
                    height: height as u32,
                });
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::InvalidPolarity {
                    index,
                    polarity: e.p as i32,
                });
            }
        }
        events.sort_by_key(|e| e.t);
        Ok(Self {
            events,
            width,
            height,
        })
    }

    pub fn empty(width: u16, height: u16) -> Self {
        Self {
            events: Vec::new(),
            width,
            height,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Builds an [`EventStream`] from raw events; see [`EventStream::new`].
pub fn validate_stream(raw: Vec<Event>, width: u16, height: u16) -> Result<EventStream> {
    EventStream::new(raw, width, height)
}
