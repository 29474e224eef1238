//! Event data model and time windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    /// Signed weight used when accumulating: ON is +1, OFF is -1.
    pub fn sign(self) -> f64 {
        match self {
            Polarity::On => 1.0,
            Polarity::Off => -1.0,
        }
    }

    /// On-disk encoding: 1 = ON, 0 = OFF.
    pub fn bit(self) -> u8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            1 => Some(Polarity::On),
            0 => Some(Polarity::Off),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Original,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Seconds.
    pub t: f64,
    pub polarity: Polarity,
    pub origin: Origin,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, polarity: Polarity) -> Self {
        Self {
            x,
            y,
            t,
            polarity,
            origin: Origin::Original,
        }
    }

    pub fn generated(x: u16, y: u16, t: f64, polarity: Polarity) -> Self {
        Self {
            origin: Origin::Generated,
            ..Self::new(x, y, t, polarity)
        }
    }
}

/// Sensor size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: u16,
    pub height: u16,
}

impl Geometry {
    pub fn new(width: u16, height: u16) -> Self {
        Self { width, height }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }
}

/// A time-bounded batch of events, sorted by timestamp.
///
/// Ties keep their insertion order. The window is immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    events: Vec<Event>,
    geometry: Geometry,
    t_start: f64,
    t_end: f64,
}

impl EventWindow {
    /// Builds a window whose bounds are the min/max event timestamps
    /// (both zero when there are no events).
    pub fn new(mut events: Vec<Event>, geometry: Geometry) -> Self {
        sort_by_time(&mut events);
        let (t_start, t_end) = match (events.first(), events.last()) {
            (Some(first), Some(last)) => (first.t, last.t),
            _ => (0.0, 0.0),
        };
        Self {
            events,
            geometry,
            t_start,
            t_end,
        }
    }

    /// Builds a window with explicit bounds. Every event must lie in
    /// `[t_start, t_end]`.
    pub fn with_bounds(
        mut events: Vec<Event>,
        geometry: Geometry,
        t_start: f64,
        t_end: f64,
    ) -> Result<Self> {
        if !(t_start <= t_end) {
            return Err(Error::InvalidRange {
                t0: t_start,
                t1: t_end,
            });
        }
        if let Some(e) = events.iter().find(|e| e.t < t_start || e.t > t_end) {
            return Err(Error::InvalidParameter(format!(
                "event at t = {} outside window [{t_start}, {t_end}]",
                e.t
            )));
        }
        sort_by_time(&mut events);
        Ok(Self {
            events,
            geometry,
            t_start,
            t_end,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t0 <= t < t1`. The result's bounds are `[t0, t1]`
    /// clipped to this window's bounds.
    pub fn slice(&self, t0: f64, t1: f64) -> Result<EventWindow> {
        if !(t0 <= t1) {
            return Err(Error::InvalidRange { t0, t1 });
        }
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        let events = self.events[lo..hi.max(lo)].to_vec();
        let t_start = t0.max(self.t_start);
        let t_end = t1.min(self.t_end).max(t_start);
        Ok(EventWindow {
            events,
            geometry: self.geometry,
            t_start,
            t_end,
        })
    }

    /// Consecutive slices of width `step` covering `[t_start, t_end]`.
    /// The last slice is closed on the right so no event is lost.
    pub fn batches(&self, step: f64) -> Result<Vec<EventWindow>> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "batch width must be positive, got {step}"
            )));
        }
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let t0 = self.t_start + i as f64 * step;
            let t1 = self.t_start + (i + 1) as f64 * step;
            if t1 > self.t_end {
                let mut last = self.slice(t0, f64::INFINITY)?;
                last.t_end = self.t_end.max(last.t_start);
                out.push(last);
                break;
            }
            out.push(self.slice(t0, t1)?);
            i += 1;
        }
        Ok(out)
    }
}

/// Free-function form of [`EventWindow::slice`].
pub fn slice_window(window: &EventWindow, t0: f64, t1: f64) -> Result<EventWindow> {
    window.slice(t0, t1)
}

fn sort_by_time(events: &mut [Event]) {
    // stable: ties keep input order
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
}
