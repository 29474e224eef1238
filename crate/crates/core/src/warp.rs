//! Warping events along a constant 2-D velocity and the count image whose
//! variance is the contrast objective.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow, Geometry, Polarity};

/// Image-plane velocity in pixels per second.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { vx: 0.0, vy: 0.0 };

    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }
}

impl std::ops::Neg for Velocity {
    type Output = Velocity;
    fn neg(self) -> Velocity {
        Velocity::new(-self.vx, -self.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpedEvent {
    pub xw: f64,
    pub yw: f64,
    pub polarity: Polarity,
    pub t: f64,
    pub source_index: usize,
}

/// How each warped event contributes to its pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Accumulation {
    /// ON adds +1, OFF adds -1.
    #[default]
    Signed,
    /// Every event adds +1.
    Unsigned,
}

impl Accumulation {
    fn weight(self, p: Polarity) -> f64 {
        match self {
            Accumulation::Signed => p.sign(),
            Accumulation::Unsigned => 1.0,
        }
    }
}

/// Row-major per-pixel accumulation on the reference time plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CountImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub t_ref: f64,
    /// Warped events that fell outside the image and were dropped.
    pub out_of_bounds: usize,
}

impl CountImage {
    pub fn zeros(geometry: Geometry, t_ref: f64) -> Self {
        Self {
            width: geometry.width as usize,
            height: geometry.height as usize,
            values: vec![0.0; geometry.pixel_count()],
            t_ref,
            out_of_bounds: 0,
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "value count must match size");
        Self {
            width,
            height,
            values,
            t_ref: 0.0,
            out_of_bounds: 0,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Binary 8-bit PGM, min-max normalised. A constant image maps to 0.
    pub fn write_pgm<W: Write>(&self, mut sink: W) -> Result<()> {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        write!(sink, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((v - lo) / span * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect();
        sink.write_all(&bytes)?;
        sink.flush()?;
        Ok(())
    }

    /// One CSV row per image row, exact values.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        for row in self.values.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(sink, "{}", line.join(","))?;
        }
        sink.flush()?;
        Ok(())
    }
}

/// Round half up: `floor(v + 0.5)`.
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Timestamp of the last event.
pub fn reference_time(window: &EventWindow) -> Result<f64> {
    window
        .events()
        .iter()
        .map(|e| e.t)
        .reduce(f64::max)
        .ok_or(Error::EmptyWindow)
}

pub fn warp_event(e: &Event, theta: Velocity, t_ref: f64) -> WarpedEvent {
    warp_indexed(e, 0, theta, t_ref)
}

fn warp_indexed(e: &Event, source_index: usize, theta: Velocity, t_ref: f64) -> WarpedEvent {
    let dt = t_ref - e.t;
    WarpedEvent {
        xw: e.x as f64 + dt * theta.vx,
        yw: e.y as f64 + dt * theta.vy,
        polarity: e.polarity,
        t: e.t,
        source_index,
    }
}

/// Warps every event of the window, keeping the source index.
pub fn warp_window(window: &EventWindow, theta: Velocity, t_ref: f64) -> Vec<WarpedEvent> {
    window
        .events()
        .iter()
        .enumerate()
        .map(|(i, e)| warp_indexed(e, i, theta, t_ref))
        .collect()
}

/// Nearest pixel of a warped event, or `None` if it leaves the sensor.
pub fn warped_pixel(w: &WarpedEvent, geometry: Geometry) -> Option<(u16, u16)> {
    let x = round_half_up(w.xw);
    let y = round_half_up(w.yw);
    geometry.contains(x, y).then_some((x as u16, y as u16))
}

/// Signed count image of the window warped to `t_ref`.
pub fn accumulate(
    window: &EventWindow,
    theta: Velocity,
    t_ref: f64,
    mode: Accumulation,
) -> CountImage {
    let mut img = CountImage::zeros(window.geometry(), t_ref);
    accumulate_into(&mut img, window.events(), theta, t_ref, mode);
    img
}

/// Like [`accumulate`] but reuses `img`'s buffer, which is cleared first.
pub fn accumulate_into(
    img: &mut CountImage,
    events: &[Event],
    theta: Velocity,
    t_ref: f64,
    mode: Accumulation,
) {
    img.values.iter_mut().for_each(|v| *v = 0.0);
    img.t_ref = t_ref;
    img.out_of_bounds = 0;
    let (w, h) = (img.width as i64, img.height as i64);
    for e in events {
        let dt = t_ref - e.t;
        let x = round_half_up(e.x as f64 + dt * theta.vx);
        let y = round_half_up(e.y as f64 + dt * theta.vy);
        if x < 0 || y < 0 || x >= w || y >= h {
            img.out_of_bounds += 1;
            continue;
        }
        img.values[(y * w + x) as usize] += mode.weight(e.polarity);
    }
}

/// Population variance of the pixel values.
pub fn variance_objective(img: &CountImage) -> f64 {
    let n = img.values.len();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mean = img.values.iter().sum::<f64>() / n;
    img.values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum::<f64>()
        / n
}
