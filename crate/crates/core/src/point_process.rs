//! Temporal point processes simulated by Ogata thinning.
//!
//! The Hawkes process has conditional intensity
//!
//! ```text
//! λ(t) = μ + α Σ_{t_i < t} exp(-(t - t_i))
//! ```
//!
//! with a unit-rate exponential kernel, and the self-correcting process
//!
//! ```text
//! λ(t) = exp(μ (t - t0) - β N(t))
//! ```
//!
//! where `N(t)` counts events before `t`. Both are conditioned on a sorted
//! history and add every accepted event to it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest inter-event gap used by [`trajectory_intensity`]; the text
/// format resolves nanoseconds.
pub const MIN_GAP: f64 = 1e-9;

/// Largest log-intensity the self-correcting simulator accepts (about
/// 2e17 events/s, far beyond nanosecond resolution).
pub const MAX_LOG_INTENSITY: f64 = 40.0;

/// Most events one self-correcting run may produce before it is treated as
/// having exploded (only possible with little or no inhibition).
pub const MAX_SELF_CORRECTING_EVENTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Base intensity, events/s.
    pub mu: f64,
    /// Jump per event of the unit-rate kernel; must stay below 1.
    pub alpha: f64,
}

impl HawkesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfCorrectingParams {
    /// Drift rate, 1/s.
    pub mu: f64,
    /// Log-intensity drop per event.
    pub beta: f64,
}

impl SelfCorrectingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.beta >= 0.0) || self.beta.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Window-level quantities shared by every trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapStats {
    /// Events on trajectories.
    pub n: usize,
    /// Number of trajectories.
    pub k: usize,
    /// Window duration, seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIntensity {
    /// Events per second.
    pub lambda: f64,
    pub lambda0: f64,
    pub n_k: usize,
    /// `n_main / max(n_noise, 1)`.
    pub main_noise_ratio: f64,
    pub r: f64,
    /// `None` for single-event trajectories.
    pub delta_t_min: Option<f64>,
    /// `max(ln(1 + 1/Δt_min), 1)`, or 1 without a gap.
    pub denominator: f64,
}

/// Base intensity of one trajectory:
///
/// ```text
/// λ0 = (N / k) / T
/// λ  = λ0 · n_k · (n_main / n_noise + r) / D
/// ```
///
/// `n_main` and `n_noise` are event counts on main and noise trajectories.
/// `D` replaces the raw `log(Δt_min)`, which is negative for sub-second
/// gaps, by `max(ln(1 + 1/Δt_min), 1)`; `n_noise = 0` is treated as 1.
pub fn trajectory_intensity(
    stats: MapStats,
    member_times: &[f64],
    n_main: usize,
    n_noise: usize,
    r: f64,
) -> Result<TrajectoryIntensity> {
    if !(stats.duration > 0.0) || !stats.duration.is_finite() {
        return Err(Error::ZeroTimeSpan);
    }
    if stats.n == 0 || stats.k == 0 {
        return Err(Error::InvalidParameter("N and k must be >= 1".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
    }
    if member_times.is_empty() {
        return Err(Error::InvalidParameter("trajectory has no members".into()));
    }
    let lambda0 = (stats.n as f64 / stats.k as f64) / stats.duration;
    let n_k = member_times.len();
    let delta_t_min = member_times
        .windows(2)
        .map(|w| w[1] - w[0])
        .reduce(f64::min)
        .map(|gap| gap.max(MIN_GAP));
    let denominator = delta_t_min.map_or(1.0, |gap| (1.0 / gap).ln_1p().max(1.0));
    let main_noise_ratio = n_main as f64 / n_noise.max(1) as f64;
    let lambda = lambda0 * n_k as f64 * (main_noise_ratio + r) / denominator;
    Ok(TrajectoryIntensity {
        lambda,
        lambda0,
        n_k,
        main_noise_ratio,
        r,
        delta_t_min,
        denominator,
    })
}

/// CSV dump of intensity derivations, one row per trajectory.
pub fn write_intensity_csv<W: Write>(
    mut sink: W,
    rows: &[((u16, u16), TrajectoryIntensity)],
) -> Result<()> {
    writeln!(
        sink,
        "anchor_x,anchor_y,lambda,lambda0,n_k,main_noise_ratio,r,delta_t_min,denominator"
    )?;
    for ((x, y), i) in rows {
        let gap = i.delta_t_min.map(|g| g.to_string()).unwrap_or_default();
        writeln!(
            sink,
            "{x},{y},{},{},{},{},{},{gap},{}",
            i.lambda, i.lambda0, i.n_k, i.main_noise_ratio, i.r, i.denominator
        )?;
    }
    sink.flush()?;
    Ok(())
}

fn check_inputs(history: &[f64], t0: f64, t1: f64) -> Result<()> {
    if !(t0 <= t1) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidRange { t0, t1 });
    }
    if history.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::UnsortedHistory);
    }
    Ok(())
}

fn exp_gap<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = rng.sample(Exp1);
        e / rate
    } else {
        f64::INFINITY
    }
}

/// Seeded form of [`simulate_hawkes_with`].
pub fn simulate_hawkes(
    history: &[f64],
    params: HawkesParams,
    t0: f64,
    t1: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_hawkes_with(history, params, t0, t1, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Hawkes event times in `(t0, t1]` given `history`.
///
/// The kernel sum is carried forward recursively, so the cost is linear in
/// the number of candidates plus history events.
pub fn simulate_hawkes_with<R: Rng + ?Sized>(
    history: &[f64],
    params: HawkesParams,
    t0: f64,
    t1: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_inputs(history, t0, t1)?;
    params.validate()?;
    let HawkesParams { mu, alpha } = params;

    // history up to and including t0 excites everything after t0
    let mut next = history.partition_point(|&h| h <= t0);
    let mut excitation: f64 = history[..next].iter().map(|&h| (-(t0 - h)).exp()).sum();
    let mut s = t0;
    let mut out = Vec::new();
    loop {
        let bound = mu + alpha * excitation;
        let candidate = s + exp_gap(rng, bound);
        let next_hist = history.get(next).copied().unwrap_or(f64::INFINITY);
        if next_hist <= candidate && next_hist <= t1 {
            // memoryless: jump to the history event and redraw
            excitation = excitation * (-(next_hist - s)).exp() + 1.0;
            s = next_hist;
            next += 1;
            continue;
        }
        if candidate > t1 {
            break;
        }
        let decayed = excitation * (-(candidate - s)).exp();
        let intensity = mu + alpha * decayed;
        let u: f64 = rng.random();
        s = candidate;
        excitation = decayed;
        if u * bound <= intensity && out.last().is_none_or(|&last| candidate > last) && candidate > t0 {
            out.push(candidate);
            excitation += 1.0;
        }
    }
    Ok(out)
}

/// Expected number of Hawkes events in `(t0, t1]` given `history`.
///
/// Uses the resolvent `α exp(-(1-α) s)` of the unit-rate exponential kernel.
/// Nothing is simulated before `t0`, so a history event at `h < t0` only
/// reaches the window through its own kernel, decayed by `exp(-(t0 - h))`.
pub fn expected_hawkes_count(history: &[f64], params: HawkesParams, t0: f64, t1: f64) -> f64 {
    let HawkesParams { mu, alpha } = params;
    let span = t1 - t0;
    if span <= 0.0 {
        return 0.0;
    }
    let decay = 1.0 - alpha;
    let base = mu * (span / decay - alpha / (decay * decay) * (1.0 - (-decay * span).exp()));
    let triggered: f64 = history
        .iter()
        .take_while(|&&h| h < t1)
        .map(|&h| {
            let from = h.max(t0);
            alpha / decay * (-(from - h)).exp() * (1.0 - (-decay * (t1 - from)).exp())
        })
        .sum();
    base + triggered
}

/// Seeded form of [`simulate_self_correcting_with`].
pub fn simulate_self_correcting(
    history: &[f64],
    params: SelfCorrectingParams,
    t0: f64,
    t1: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_self_correcting_with(history, params, t0, t1, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Self-correcting event times in `(t0, t1]` given `history`, with time
/// measured from `t0`.
///
/// The intensity only grows between events, so each thinning step bounds it
/// by its value at the end of a short look-ahead segment (at most `1/μ`
/// long, ending early at the next history event or `t1`).
pub fn simulate_self_correcting_with<R: Rng + ?Sized>(
    history: &[f64],
    params: SelfCorrectingParams,
    t0: f64,
    t1: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_inputs(history, t0, t1)?;
    params.validate()?;
    let SelfCorrectingParams { mu, beta } = params;
    let log_intensity = |t: f64, n: usize| {
        let inhibition = if n == 0 || beta == 0.0 { 0.0 } else { beta * n as f64 };
        mu * (t - t0) - inhibition
    };
    let lookahead = if mu > 0.0 { 1.0 / mu } else { f64::INFINITY };

    let mut next = history.partition_point(|&h| h <= t0);
    let mut count = next;
    let mut s = t0;
    let mut out = Vec::new();
    while s < t1 {
        let next_hist = history.get(next).copied().unwrap_or(f64::INFINITY);
        let seg_end = t1.min(next_hist).min(s + lookahead);
        let log_bound = log_intensity(seg_end, count);
        if log_bound > MAX_LOG_INTENSITY {
            return Err(Error::IntensityOverflow(seg_end));
        }
        let bound = log_bound.exp();
        let candidate = s + exp_gap(rng, bound);
        if candidate > seg_end {
            s = seg_end;
            while history.get(next).is_some_and(|&h| h <= s) {
                next += 1;
                count += 1;
            }
            continue;
        }
        let intensity = log_intensity(candidate, count).exp();
        let u: f64 = rng.random();
        s = candidate;
        if u * bound <= intensity && out.last().is_none_or(|&last| candidate > last) && candidate > t0 {
            if out.len() == MAX_SELF_CORRECTING_EVENTS {
                return Err(Error::Runaway(MAX_SELF_CORRECTING_EVENTS));
            }
            out.push(candidate);
            count += 1;
        }
    }
    Ok(out)
}

/// Per-trajectory RNG: `seed` xor a hash of the anchor pixel.
pub fn trajectory_rng(seed: u64, anchor: (u16, u16)) -> ChaCha8Rng {
    let key = ((anchor.0 as u64) << 16) | anchor.1 as u64;
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(key))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
