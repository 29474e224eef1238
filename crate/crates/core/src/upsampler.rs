//! End-to-end temporal up-sampling of one event window.
//!
//! 1. Estimate the velocity that maximises contrast.
//! 2. Group events into trajectories and split them into main and noise.
//! 3. Run a Hawkes process on each main trajectory and a self-correcting
//!    process on each noise trajectory, conditioned on its original events.
//! 4. Place every generated time back on its trajectory and merge with the
//!    originals in time order.
//!
//! Per-trajectory base rates come from [`trajectory_intensity`] and are then
//! scaled by one factor shared by the whole window so that the expected
//! output size is `r` times the input size.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow, Polarity};
use crate::optimizer::{estimate_trajectory, ContrastObjective, OptimizerConfig};
use crate::point_process::{
    expected_hawkes_count, simulate_hawkes_with, simulate_self_correcting_with,
    trajectory_intensity, trajectory_rng, HawkesParams, MapStats, SelfCorrectingParams,
    TrajectoryIntensity,
};
use crate::trajectory::{
    build_trajectories, classify, point_on_trajectory, Trajectory, TrajectoryKind,
};
use crate::warp::{reference_time, round_half_up, Velocity};

/// How new event times are drawn on each trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Generator {
    /// Hawkes on main trajectories, self-correcting on noise trajectories.
    #[default]
    PointProcesses,
    /// Memoryless baseline: every trajectory gets a homogeneous Poisson
    /// process at the base rate the point processes would have used, with
    /// no conditioning on its history.
    HomogeneousPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsampleConfig {
    pub optimizer: OptimizerConfig,
    /// Trajectories with more than `phi` events are main, the rest noise.
    pub phi: usize,
    /// Target ratio of output to input event counts.
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub include_originals: bool,
    /// Skip estimation and use this velocity.
    pub fixed_velocity: Option<Velocity>,
    pub generator: Generator,
}

impl Default for UpsampleConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            phi: 1,
            r: 2.0,
            alpha: 0.5,
            beta: 1.0,
            seed: 0,
            include_originals: true,
            fixed_velocity: None,
            generator: Generator::PointProcesses,
        }
    }
}

impl UpsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!("r must be positive, got {}", self.r)));
        }
        if self.phi < 1 {
            return Err(Error::InvalidParameter("phi must be >= 1".into()));
        }
        HawkesParams {
            mu: 0.0,
            alpha: self.alpha,
        }
        .validate()?;
        SelfCorrectingParams {
            mu: 0.0,
            beta: self.beta,
        }
        .validate()?;
        if let Some(v) = self.fixed_velocity {
            if !v.is_finite() {
                return Err(Error::InvalidParameter("fixed velocity must be finite".into()));
            }
        }
        if self.fixed_velocity.is_none() {
            self.optimizer.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub anchor: (u16, u16),
    pub kind: TrajectoryKind,
    pub original_on: usize,
    pub original_off: usize,
    /// Generated events that landed on the sensor.
    pub generated_on: usize,
    pub generated_off: usize,
    /// Generated events whose rounded position left the sensor.
    pub dropped: usize,
    pub intensity: TrajectoryIntensity,
    /// Rate handed to the simulator, events/s.
    pub base_rate: f64,
}

impl TrajectoryRecord {
    pub fn original(&self) -> usize {
        self.original_on + self.original_off
    }

    pub fn generated(&self) -> usize {
        self.generated_on + self.generated_off
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpsampleReport {
    pub theta_star: Velocity,
    pub f_star: f64,
    pub t_ref: f64,
    pub k: usize,
    pub main_trajectories: usize,
    pub noise_trajectories: usize,
    pub original: usize,
    /// Simulated on main trajectories, before spatial dropping.
    pub generated_main: usize,
    /// Simulated on noise trajectories, before spatial dropping.
    pub generated_noise: usize,
    pub dropped_out_of_bounds: usize,
    /// Originals warped off the sensor (they are not on any trajectory).
    pub original_out_of_bounds: usize,
    /// Expected number of generated events the rates were scaled to.
    pub generation_budget: f64,
    /// Common factor applied to every trajectory intensity.
    pub rate_scale: f64,
    pub trajectories: Vec<TrajectoryRecord>,
}

impl UpsampleReport {
    pub fn generated(&self) -> usize {
        self.generated_main + self.generated_noise
    }

    /// Size of the output window for the given `include_originals` setting.
    pub fn output_count(&self, include_originals: bool) -> usize {
        let originals = if include_originals { self.original } else { 0 };
        originals + self.generated() - self.dropped_out_of_bounds
    }
}

/// Bernoulli polarity with the trajectory's empirical ON fraction.
pub fn assign_polarity<R: Rng + ?Sized>(traj: &Trajectory, rng: &mut R) -> Polarity {
    let p_on = traj.on_fraction();
    if rng.random::<f64>() < p_on {
        Polarity::On
    } else {
        Polarity::Off
    }
}

struct Simulated {
    events: Vec<Event>,
    raw: usize,
    dropped: usize,
}

fn place_events<R: Rng + ?Sized>(
    traj: &Trajectory,
    times: &[f64],
    window: &EventWindow,
    rng: &mut R,
) -> Result<Simulated> {
    let geometry = window.geometry();
    let mut events = Vec::with_capacity(times.len());
    let mut dropped = 0;
    for &t in times {
        let polarity = assign_polarity(traj, rng);
        let (x, y) = point_on_trajectory(traj, t)?;
        let (px, py) = (round_half_up(x), round_half_up(y));
        if geometry.contains(px, py) {
            events.push(Event::generated(px as u16, py as u16, t, polarity));
        } else {
            dropped += 1;
        }
    }
    Ok(Simulated {
        events,
        raw: times.len(),
        dropped,
    })
}

/// Up-samples `window`, returning the merged stream and a report.
pub fn upsample(window: &EventWindow, cfg: &UpsampleConfig) -> Result<(EventWindow, UpsampleReport)> {
    cfg.validate()?;
    if window.len() < 2 {
        return Err(Error::TooFewEvents(window.len()));
    }
    if !(window.duration() > 0.0) {
        return Err(Error::ZeroTimeSpan);
    }

    let (theta, f_star) = match cfg.fixed_velocity {
        Some(v) => {
            let mut objective = ContrastObjective::new(window, cfg.optimizer.accumulation)?;
            (v, objective.eval(v))
        }
        None => {
            let est = estimate_trajectory(window, &cfg.optimizer)?;
            (est.theta_star, est.f_star)
        }
    };
    let t_ref = reference_time(window)?;
    let map = classify(build_trajectories(window, theta, t_ref), cfg.phi)?;
    let events = window.events();
    let histories: Vec<Vec<f64>> = map
        .trajectories
        .iter()
        .map(|t| t.member_indices.iter().map(|&i| events[i].t).collect())
        .collect();

    let stats = MapStats {
        n: map.total_events(),
        k: map.k(),
        duration: window.duration(),
    };
    let (main_trajs, n_main) = map.count_kind(TrajectoryKind::Main);
    let (noise_trajs, n_noise) = map.count_kind(TrajectoryKind::Noise);
    let intensities = map
        .trajectories
        .iter()
        .zip(&histories)
        .map(|(_, h)| trajectory_intensity(stats, h, n_main, n_noise, cfg.r))
        .collect::<Result<Vec<_>>>()?;

    let (t0, t1) = (window.t_start(), window.t_end());
    let originals = window.len() as f64;
    let target_output = cfg.r * originals;
    let budget = if cfg.include_originals {
        (target_output - originals).max(0.0)
    } else {
        target_output
    };

    // Scale the raw intensities so the expected generated count matches the
    // budget, counting what the original events already trigger.
    let unit = HawkesParams {
        mu: 1.0,
        alpha: cfg.alpha,
    };
    let history_driven = HawkesParams {
        mu: 0.0,
        alpha: cfg.alpha,
    };
    let mut triggered = 0.0;
    let mut per_unit_scale = 0.0;
    for ((traj, hist), intensity) in map.trajectories.iter().zip(&histories).zip(&intensities) {
        match traj.kind {
            TrajectoryKind::Main => {
                triggered += expected_hawkes_count(hist, history_driven, t0, t1);
                per_unit_scale += intensity.lambda * expected_hawkes_count(&[], unit, t0, t1);
            }
            TrajectoryKind::Noise => per_unit_scale += intensity.lambda * (t1 - t0),
        }
    }
    let rate_scale = if budget > 0.0 && per_unit_scale > 0.0 {
        (budget - triggered).max(0.0) / per_unit_scale
    } else {
        0.0
    };
    let base_rates: Vec<f64> = intensities.iter().map(|i| i.lambda * rate_scale).collect();

    let simulated: Vec<Simulated> = map
        .trajectories
        .par_iter()
        .zip(histories.par_iter())
        .zip(base_rates.par_iter())
        .map(|((traj, hist), &rate)| -> Result<Simulated> {
            let mut rng = trajectory_rng(cfg.seed, traj.anchor);
            if budget <= 0.0 {
                return Ok(Simulated {
                    events: Vec::new(),
                    raw: 0,
                    dropped: 0,
                });
            }
            let times = match (cfg.generator, traj.kind) {
                (Generator::HomogeneousPoisson, _) => simulate_hawkes_with(
                    &[],
                    HawkesParams {
                        mu: rate,
                        alpha: 0.0,
                    },
                    t0,
                    t1,
                    &mut rng,
                )?,
                (Generator::PointProcesses, TrajectoryKind::Main) => simulate_hawkes_with(
                    hist,
                    HawkesParams {
                        mu: rate,
                        alpha: cfg.alpha,
                    },
                    t0,
                    t1,
                    &mut rng,
                )?,
                (Generator::PointProcesses, TrajectoryKind::Noise) => simulate_self_correcting_with(
                    hist,
                    SelfCorrectingParams {
                        mu: rate,
                        beta: cfg.beta,
                    },
                    t0,
                    t1,
                    &mut rng,
                )?,
            };
            place_events(traj, &times, window, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = UpsampleReport {
        theta_star: theta,
        f_star,
        t_ref,
        k: map.k(),
        main_trajectories: main_trajs,
        noise_trajectories: noise_trajs,
        original: window.len(),
        generated_main: 0,
        generated_noise: 0,
        dropped_out_of_bounds: 0,
        original_out_of_bounds: map.out_of_bounds.len(),
        generation_budget: budget,
        rate_scale,
        trajectories: Vec::with_capacity(map.k()),
    };
    let mut merged: Vec<Event> = if cfg.include_originals {
        events.to_vec()
    } else {
        Vec::new()
    };
    for (((traj, sim), intensity), &rate) in map
        .trajectories
        .iter()
        .zip(simulated)
        .zip(intensities)
        .zip(&base_rates)
    {
        match traj.kind {
            TrajectoryKind::Main => report.generated_main += sim.raw,
            TrajectoryKind::Noise => report.generated_noise += sim.raw,
        }
        report.dropped_out_of_bounds += sim.dropped;
        let generated_on = sim.events.iter().filter(|e| e.polarity == Polarity::On).count();
        report.trajectories.push(TrajectoryRecord {
            anchor: traj.anchor,
            kind: traj.kind,
            original_on: traj.on_count,
            original_off: traj.off_count,
            generated_on,
            generated_off: sim.events.len() - generated_on,
            dropped: sim.dropped,
            intensity,
            base_rate: rate,
        });
        merged.extend(sim.events);
    }
    let out = EventWindow::with_bounds(merged, window.geometry(), t0, t1)?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Geometry;
    use crate::point_process::trajectory_rng;

    fn traj(on: usize, off: usize) -> Trajectory {
        Trajectory {
            anchor: (1, 1),
            t_ref: 1.0,
            theta: Velocity::ZERO,
            member_indices: (0..on + off).collect(),
            on_count: on,
            off_count: off,
            kind: TrajectoryKind::Main,
            t_start: 0.0,
            t_end: 1.0,
        }
    }

    #[test]
    fn polarity_follows_pure_trajectories() {
        let mut rng = trajectory_rng(5, (1, 1));
        let on = traj(4, 0);
        let off = traj(0, 3);
        for _ in 0..1000 {
            assert_eq!(assign_polarity(&on, &mut rng), Polarity::On);
            assert_eq!(assign_polarity(&off, &mut rng), Polarity::Off);
        }
    }

    #[test]
    fn polarity_matches_on_fraction() {
        let t = traj(3, 7);
        let mut rng = trajectory_rng(9, (2, 2));
        let n = 10_000;
        let ons = (0..n).filter(|_| assign_polarity(&t, &mut rng) == Polarity::On).count();
        let p = 0.3;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((ons as f64 - n as f64 * p).abs() < 3.0 * sigma, "{ons}");
    }

    fn line_window() -> EventWindow {
        let mut events = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            events.push(Event::new((2.0 + 10.0 * t).round() as u16, 5, t, Polarity::On));
            events.push(Event::new((2.0 + 10.0 * t).round() as u16, 9, t + 0.001, Polarity::Off));
        }
        EventWindow::new(events, Geometry::new(16, 16))
    }

    #[test]
    fn rejects_degenerate_input() {
        let g = Geometry::new(4, 4);
        let cfg = UpsampleConfig::default();
        let one = EventWindow::new(vec![Event::new(0, 0, 0.0, Polarity::On)], g);
        assert!(matches!(upsample(&one, &cfg), Err(Error::TooFewEvents(1))));
        let flat = EventWindow::new(
            vec![Event::new(0, 0, 0.1, Polarity::On), Event::new(1, 0, 0.1, Polarity::On)],
            g,
        );
        assert!(matches!(upsample(&flat, &cfg), Err(Error::ZeroTimeSpan)));
        let bad = UpsampleConfig { r: 0.0, ..cfg };
        assert!(upsample(&line_window(), &bad).is_err());
        let bad = UpsampleConfig { alpha: 1.0, ..cfg };
        assert!(upsample(&line_window(), &bad).is_err());
    }

    #[test]
    fn fixed_velocity_report_is_consistent() {
        let cfg = UpsampleConfig {
            fixed_velocity: Some(Velocity::new(10.0, 0.0)),
            seed: 3,
            ..UpsampleConfig::default()
        };
        let (out, report) = upsample(&line_window(), &cfg).unwrap();
        assert_eq!(out.len(), report.output_count(true));
        assert_eq!(report.theta_star, Velocity::new(10.0, 0.0));
        let per_traj: usize = report.trajectories.iter().map(|t| t.generated() + t.dropped).sum();
        assert_eq!(per_traj, report.generated());
        assert!(report.generated() > 0);
        // the two rows never mix polarity, so neither do their generated events
        for e in out.events() {
            let expect = if e.y == 5 { Polarity::On } else { Polarity::Off };
            assert_eq!(e.polarity, expect);
        }
    }

    #[test]
    fn excluding_originals_keeps_only_generated() {
        let cfg = UpsampleConfig {
            fixed_velocity: Some(Velocity::new(10.0, 0.0)),
            include_originals: false,
            ..UpsampleConfig::default()
        };
        let (out, report) = upsample(&line_window(), &cfg).unwrap();
        assert!(out.events().iter().all(|e| e.origin == crate::event::Origin::Generated));
        assert_eq!(out.len(), report.output_count(false));
    }

    #[test]
    fn poisson_generator_keeps_base_rates() {
        let cfg = UpsampleConfig {
            fixed_velocity: Some(Velocity::new(10.0, 0.0)),
            ..UpsampleConfig::default()
        };
        let poisson = UpsampleConfig {
            generator: Generator::HomogeneousPoisson,
            ..cfg
        };
        let (_, a) = upsample(&line_window(), &cfg).unwrap();
        let (_, b) = upsample(&line_window(), &poisson).unwrap();
        assert!(a.trajectories.iter().any(|t| t.base_rate > 0.0));
        for (x, y) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(x.base_rate, y.base_rate);
        }
    }
}
