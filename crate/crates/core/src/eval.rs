//! Evaluation helpers: projected-image metrics, rank consistency between
//! original and generated trajectory counts, and synthetic scenes with known
//! motion.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow, Geometry, Polarity};
use crate::upsampler::UpsampleReport;
use crate::warp::{
    accumulate, reference_time, round_half_up, variance_objective, Accumulation, CountImage,
    Velocity,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GradientOperator {
    /// `(I[x+1] - I[x-1]) / 2` on each axis.
    #[default]
    CentralDifference,
    Sobel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variance: f64,
    pub gradient: f64,
    pub variance_per_event: f64,
    pub gradient_per_event: f64,
    pub events: usize,
    pub theta: Velocity,
}

impl MetricReport {
    /// Field-wise mean; `theta` and `events` are averaged too.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            variance: avg(|r| r.variance),
            gradient: avg(|r| r.gradient),
            variance_per_event: avg(|r| r.variance_per_event),
            gradient_per_event: avg(|r| r.gradient_per_event),
            events: (reports.iter().map(|r| r.events).sum::<usize>() as f64 / n).round() as usize,
            theta: Velocity::new(avg(|r| r.theta.vx), avg(|r| r.theta.vy)),
        })
    }
}

/// Mean gradient magnitude over interior pixels.
pub fn mean_gradient(img: &CountImage, op: GradientOperator) -> f64 {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let at = |x: usize, y: usize| img.values[y * w + x];
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (gx, gy) = match op {
                GradientOperator::CentralDifference => (
                    (at(x + 1, y) - at(x - 1, y)) / 2.0,
                    (at(x, y + 1) - at(x, y - 1)) / 2.0,
                ),
                GradientOperator::Sobel => (
                    (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                        - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1)),
                    (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                        - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1)),
                ),
            };
            total += gx.hypot(gy);
        }
    }
    total / ((w - 2) * (h - 2)) as f64
}

/// Variance and gradient of the window projected along `theta` onto its
/// last timestamp.
pub fn projected_metrics(
    window: &EventWindow,
    theta: Velocity,
    op: GradientOperator,
) -> Result<MetricReport> {
    let t_ref = reference_time(window)?;
    let img = accumulate(window, theta, t_ref, Accumulation::Signed);
    Ok(metrics_of_image(&img, window.len(), theta, op))
}

pub fn metrics_of_image(
    img: &CountImage,
    events: usize,
    theta: Velocity,
    op: GradientOperator,
) -> MetricReport {
    let variance = variance_objective(img);
    let gradient = mean_gradient(img, op);
    let per = |v: f64| if events > 0 { v / events as f64 } else { 0.0 };
    MetricReport {
        variance,
        gradient,
        variance_per_event: per(variance),
        gradient_per_event: per(gradient),
        events,
        theta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub anchor: (u16, u16),
    pub original_on: usize,
    pub original_off: usize,
    pub generated_on: usize,
    pub generated_off: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyStats {
    /// Rank correlation of total original vs generated counts.
    pub spearman_rho: f64,
    pub spearman_rho_on: f64,
    pub spearman_rho_off: f64,
    pub table: Vec<ConsistencyRow>,
}

/// Average ranks (1-based), ties share their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation with midranks; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (midranks(a), midranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

pub fn consistency_stats(report: &UpsampleReport) -> Result<ConsistencyStats> {
    let rows: Vec<ConsistencyRow> = report
        .trajectories
        .iter()
        .map(|t| ConsistencyRow {
            anchor: t.anchor,
            original_on: t.original_on,
            original_off: t.original_off,
            generated_on: t.generated_on,
            generated_off: t.generated_off,
        })
        .collect();
    if rows.len() < 3 {
        return Err(Error::TooFewTrajectories(rows.len()));
    }
    let column = |f: fn(&ConsistencyRow) -> usize| rows.iter().map(|r| f(r) as f64).collect::<Vec<_>>();
    Ok(ConsistencyStats {
        spearman_rho: spearman(
            &column(|r| r.original_on + r.original_off),
            &column(|r| r.generated_on + r.generated_off),
        ),
        spearman_rho_on: spearman(&column(|r| r.original_on), &column(|r| r.generated_on)),
        spearman_rho_off: spearman(&column(|r| r.original_off), &column(|r| r.generated_off)),
        table: rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pattern {
    /// A one-pixel-wide vertical edge whose rows alternate between firing
    /// and silent in a seeded order, so both motion axes are observable.
    Edge { length: u16 },
    /// A `width`-wide bar with a seeded firing rate per row.
    Bar { length: u16, width: u16 },
    /// A `width`-wide strip with a seeded firing rate per pixel.
    TexturedStrip { length: u16, width: u16 },
}

impl Pattern {
    fn size(&self) -> (u16, u16) {
        match *self {
            Pattern::Edge { length } => (1, length),
            Pattern::Bar { length, width } | Pattern::TexturedStrip { length, width } => {
                (width, length)
            }
        }
    }

    /// Number of source pixels on the pattern.
    pub fn area(&self) -> usize {
        let (w, h) = self.size();
        w as usize * h as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PolarityScheme {
    AllOn,
    AllOff,
    /// Every source pixel gets a fixed, seeded polarity.
    #[default]
    PerSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub geometry: Geometry,
    /// Seconds; events fall in `[0, duration]`.
    pub duration: f64,
    pub pattern: Pattern,
    pub true_velocity: Velocity,
    /// Events per pattern pixel per second.
    pub edge_rate: f64,
    /// Events per sensor pixel per second.
    pub noise_rate: f64,
    pub polarity: PolarityScheme,
    pub seed: u64,
}

impl SceneSpec {
    /// Expected event count before clipping at the sensor border.
    pub fn expected_count(&self) -> f64 {
        self.edge_rate * self.pattern.area() as f64 * self.duration
            + self.noise_rate * self.geometry.pixel_count() as f64 * self.duration
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.edge_rate >= 0.0) || !(self.noise_rate >= 0.0) {
            return Err(Error::InvalidParameter("rates must be >= 0".into()));
        }
        if !self.true_velocity.is_finite() {
            return Err(Error::InvalidParameter("velocity must be finite".into()));
        }
        let (w, h) = self.pattern.size();
        if w == 0 || h == 0 {
            return Err(Error::InvalidParameter("pattern must be non-empty".into()));
        }
        if w > self.geometry.width || h > self.geometry.height {
            return Err(Error::GeometryTooSmall(format!(
                "{}x{} pattern on a {}x{} sensor",
                w, h, self.geometry.width, self.geometry.height
            )));
        }
        Ok(())
    }
}

struct Source {
    dx: u16,
    dy: u16,
    weight: f64,
    polarity: Polarity,
}

fn pattern_sources(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Source> {
    let (w, h) = spec.pattern.size();
    let weights: Vec<f64> = match spec.pattern {
        Pattern::Edge { length } => {
            let mut fires: Vec<bool> = (0..length).map(|i| i % 2 == 0).collect();
            fires.shuffle(rng);
            fires.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect()
        }
        Pattern::Bar { length, width } => {
            let rows: Vec<f64> = (0..length).map(|_| rng.random_range(0.0..2.0)).collect();
            (0..length as usize * width as usize)
                .map(|i| rows[i / width as usize])
                .collect()
        }
        Pattern::TexturedStrip { length, width } => (0..length as usize * width as usize)
            .map(|_| rng.random_range(0.0..2.0))
            .collect(),
    };
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let mut sources = Vec::with_capacity(weights.len());
    for dy in 0..h {
        for dx in 0..w {
            let weight = weights[dy as usize * w as usize + dx as usize];
            let polarity = match spec.polarity {
                PolarityScheme::AllOn => Polarity::On,
                PolarityScheme::AllOff => Polarity::Off,
                PolarityScheme::PerSource => {
                    if rng.random_bool(0.5) {
                        Polarity::On
                    } else {
                        Polarity::Off
                    }
                }
            };
            sources.push(Source {
                dx,
                dy,
                weight: if mean > 0.0 { weight / mean } else { 1.0 },
                polarity,
            });
        }
    }
    sources
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    }
}

/// A pattern translating at `true_velocity` plus uniform background noise.
///
/// The pattern sits centred on the sensor at mid-window and lands on whole
/// pixels at `t = duration`, so events warped there along the true velocity
/// stack exactly.
pub fn synth_scene(spec: &SceneSpec) -> Result<EventWindow> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sources = pattern_sources(spec, &mut rng);
    let geometry = spec.geometry;
    let (pw, ph) = spec.pattern.size();
    let v = spec.true_velocity;
    let d = spec.duration;
    let left = (geometry.width - pw) as f64 / 2.0;
    let top = (geometry.height - ph) as f64 / 2.0;
    let anchor_x = round_half_up(left + v.vx * d / 2.0) as f64;
    let anchor_y = round_half_up(top + v.vy * d / 2.0) as f64;

    let mut events = Vec::new();
    let picker = WeightedIndex::new(sources.iter().map(|s| s.weight));
    let edge_events = poisson_count(&mut rng, spec.edge_rate * sources.len() as f64 * d);
    if let Ok(picker) = picker {
        for _ in 0..edge_events {
            let src = &sources[picker.sample(&mut rng)];
            let t = rng.random_range(0.0..=d);
            let x = round_half_up(anchor_x + src.dx as f64 + v.vx * (t - d));
            let y = round_half_up(anchor_y + src.dy as f64 + v.vy * (t - d));
            if geometry.contains(x, y) {
                events.push(Event::new(x as u16, y as u16, t, src.polarity));
            }
        }
    }
    let noise_events = poisson_count(&mut rng, spec.noise_rate * geometry.pixel_count() as f64 * d);
    for _ in 0..noise_events {
        let x = rng.random_range(0..geometry.width);
        let y = rng.random_range(0..geometry.height);
        let t = rng.random_range(0.0..=d);
        let p = if rng.random_bool(0.5) {
            Polarity::On
        } else {
            Polarity::Off
        };
        events.push(Event::new(x, y, t, p));
    }
    Ok(EventWindow::new(events, geometry))
}
