#![allow(dead_code)]

use evup::eval::{synth_scene, Pattern, PolarityScheme, SceneSpec};
use evup::{Event, EventWindow, Geometry, Polarity, Velocity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SENSOR: Geometry = Geometry {
    width: 64,
    height: 64,
};

/// 64x64 moving edge with about 2000 events, `noise` of them background.
pub fn edge_scene(seed: u64, velocity: Velocity, noise: f64) -> EventWindow {
    let total = 2000.0;
    let spec = SceneSpec {
        geometry: SENSOR,
        duration: 1.0,
        pattern: Pattern::Edge { length: 32 },
        true_velocity: velocity,
        edge_rate: total * (1.0 - noise) / 32.0,
        noise_rate: total * noise / SENSOR.pixel_count() as f64,
        polarity: PolarityScheme::PerSource,
        seed,
    };
    synth_scene(&spec).unwrap()
}

pub fn strip_scene(seed: u64, velocity: Velocity, noise: f64) -> EventWindow {
    let total = 2000.0;
    let pattern = Pattern::TexturedStrip {
        length: 24,
        width: 4,
    };
    let spec = SceneSpec {
        geometry: SENSOR,
        duration: 1.0,
        pattern,
        true_velocity: velocity,
        edge_rate: total * (1.0 - noise) / pattern.area() as f64,
        noise_rate: total * noise / SENSOR.pixel_count() as f64,
        polarity: PolarityScheme::PerSource,
        seed,
    };
    synth_scene(&spec).unwrap()
}

/// Velocity uniform in `[-limit, limit]^2`, drawn from its own stream.
pub fn random_velocity(seed: u64, limit: f64) -> Velocity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
    Velocity::new(
        rng.random_range(-limit..=limit),
        rng.random_range(-limit..=limit),
    )
}

/// Events with nanosecond timestamps so the text format round-trips them.
pub fn arb_window(max_events: usize) -> impl Strategy<Value = EventWindow> {
    (1u16..48, 1u16..48).prop_flat_map(move |(w, h)| {
        prop::collection::vec(
            (0..w, 0..h, 0u64..5_000_000_000, any::<bool>()),
            0..max_events,
        )
        .prop_map(move |raw| {
            let events = raw
                .into_iter()
                .map(|(x, y, ns, on)| {
                    let p = if on { Polarity::On } else { Polarity::Off };
                    Event::new(x, y, ns as f64 / 1e9, p)
                })
                .collect();
            EventWindow::new(events, Geometry::new(w, h))
        })
    })
}

pub fn arb_velocity(limit: f64) -> impl Strategy<Value = Velocity> {
    (-limit..=limit, -limit..=limit).prop_map(|(vx, vy)| Velocity::new(vx, vy))
}
