//! Grouping events by the reference-plane pixel they warp onto.
//!
//! Binning matches [`crate::warp::accumulate`] exactly, so the member counts
//! of the trajectories are the unsigned count image.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{EventWindow, Polarity};
use crate::warp::{warp_window, warped_pixel, Velocity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Main,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Reference-plane pixel `(x, y)`.
    pub anchor: (u16, u16),
    pub t_ref: f64,
    pub theta: Velocity,
    /// Indices into the source window, ascending (so also time-sorted).
    pub member_indices: Vec<usize>,
    pub on_count: usize,
    pub off_count: usize,
    pub kind: TrajectoryKind,
    /// Bounds of the parent window.
    pub t_start: f64,
    pub t_end: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn on_fraction(&self) -> f64 {
        self.on_count as f64 / (self.on_count + self.off_count) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMap {
    /// Sorted by anchor, row-major (y, then x).
    pub trajectories: Vec<Trajectory>,
    pub theta: Velocity,
    pub t_ref: f64,
    pub width: u16,
    pub height: u16,
    pub t_start: f64,
    pub t_end: f64,
    /// Source indices of events warped off the sensor.
    pub out_of_bounds: Vec<usize>,
}

impl TrajectoryMap {
    /// Number of trajectories (`k`).
    pub fn k(&self) -> usize {
        self.trajectories.len()
    }

    /// Events assigned to a trajectory (`N`).
    pub fn total_events(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Window duration (`T`).
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn count_kind(&self, kind: TrajectoryKind) -> (usize, usize) {
        self.trajectories
            .iter()
            .filter(|t| t.kind == kind)
            .fold((0, 0), |(n, m), t| (n + 1, m + t.len()))
    }

    /// `anchor_x,anchor_y,members,on,off,kind` per trajectory.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "anchor_x,anchor_y,members,on,off,kind")?;
        for t in &self.trajectories {
            let kind = match t.kind {
                TrajectoryKind::Main => "main",
                TrajectoryKind::Noise => "noise",
            };
            writeln!(
                sink,
                "{},{},{},{},{},{}",
                t.anchor.0,
                t.anchor.1,
                t.len(),
                t.on_count,
                t.off_count,
                kind
            )?;
        }
        sink.flush()?;
        Ok(())
    }
}

/// Groups in-bounds events by rounded warped pixel. Every trajectory starts
/// as `Main`; run [`classify`] to assign kinds.
pub fn build_trajectories(window: &EventWindow, theta: Velocity, t_ref: f64) -> TrajectoryMap {
    let geometry = window.geometry();
    let events = window.events();
    let mut keyed: Vec<(usize, usize)> = Vec::with_capacity(events.len());
    let mut out_of_bounds = Vec::new();
    for w in warp_window(window, theta, t_ref) {
        match warped_pixel(&w, geometry) {
            Some((x, y)) => {
                let key = y as usize * geometry.width as usize + x as usize;
                keyed.push((key, w.source_index));
            }
            None => out_of_bounds.push(w.source_index),
        }
    }
    keyed.sort_unstable();

    let mut trajectories = Vec::new();
    for group in keyed.chunk_by(|a, b| a.0 == b.0) {
        let key = group[0].0;
        let anchor = (
            (key % geometry.width as usize) as u16,
            (key / geometry.width as usize) as u16,
        );
        let member_indices: Vec<usize> = group.iter().map(|&(_, i)| i).collect();
        let on_count = member_indices
            .iter()
            .filter(|&&i| events[i].polarity == Polarity::On)
            .count();
        let off_count = member_indices.len() - on_count;
        trajectories.push(Trajectory {
            anchor,
            t_ref,
            theta,
            member_indices,
            on_count,
            off_count,
            kind: TrajectoryKind::Main,
            t_start: window.t_start(),
            t_end: window.t_end(),
        });
    }
    TrajectoryMap {
        trajectories,
        theta,
        t_ref,
        width: geometry.width,
        height: geometry.height,
        t_start: window.t_start(),
        t_end: window.t_end(),
        out_of_bounds,
    }
}

/// Main iff the trajectory has more than `phi` members.
pub fn classify(mut map: TrajectoryMap, phi: usize) -> Result<TrajectoryMap> {
    if phi < 1 {
        return Err(Error::InvalidParameter("phi must be >= 1".into()));
    }
    for t in &mut map.trajectories {
        t.kind = if t.len() > phi {
            TrajectoryKind::Main
        } else {
            TrajectoryKind::Noise
        };
    }
    Ok(map)
}

/// Sub-pixel position of the trajectory at time `t`.
pub fn point_on_trajectory(traj: &Trajectory, t: f64) -> Result<(f64, f64)> {
    if !(t >= traj.t_start && t <= traj.t_end) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} outside window [{}, {}]",
            traj.t_start, traj.t_end
        )));
    }
    let dt = traj.t_ref - t;
    Ok((
        traj.anchor.0 as f64 - dt * traj.theta.vx,
        traj.anchor.1 as f64 - dt * traj.theta.vy,
    ))
}
