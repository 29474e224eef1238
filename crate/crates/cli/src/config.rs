use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use evup::eval::{GradientOperator, PolarityScheme};
use evup::optimizer::OptimizerConfig;
use evup::upsampler::{Generator, UpsampleConfig};
use evup::warp::Accumulation;
use evup::{Geometry, Velocity};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorArg {
    /// Hawkes on main trajectories, self-correcting on noise.
    Tpp,
    /// Homogeneous Poisson at the same base rates.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientArg {
    Central,
    Sobel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternArg {
    Edge,
    Bar,
    Strip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityArg {
    On,
    Off,
    Mixed,
}

/// Every tunable, as given on the command line or in a `--config` file.
///
/// File keys are the long flag names, e.g. `v-max = 50`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Sensor width in pixels.
    #[arg(long)]
    pub width: Option<u16>,
    /// Sensor height in pixels.
    #[arg(long)]
    pub height: Option<u16>,
    /// Drop events before this time (seconds).
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    /// Drop events at or after this time (seconds).
    #[arg(long, allow_hyphen_values = true)]
    pub t1: Option<f64>,
    /// Process consecutive windows of this many milliseconds independently.
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Search box half-width in px/s.
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Initial simplex edge in px/s.
    #[arg(long)]
    pub simplex_scale: Option<f64>,
    #[arg(long)]
    pub f_tol: Option<f64>,
    #[arg(long)]
    pub x_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Count events without polarity sign.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unsigned: Option<bool>,

    /// Velocity x component in px/s; skips estimation when given with --vy.
    #[arg(long, allow_hyphen_values = true)]
    pub vx: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub vy: Option<f64>,

    /// Trajectories with more than this many events are main.
    #[arg(long)]
    pub phi: Option<usize>,
    /// Up-sampling rate: target output / input event count.
    #[arg(long)]
    pub r: Option<f64>,
    /// Hawkes excitation weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Self-correcting inhibition per event.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Output only generated events.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_originals: Option<bool>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    /// Append a fifth column: 0 original, 1 generated.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub emit_origin_column: Option<bool>,

    #[arg(long, value_enum)]
    pub gradient: Option<GradientArg>,

    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    /// Pattern length in pixels.
    #[arg(long)]
    pub length: Option<u16>,
    /// Pattern width in pixels (bar and strip).
    #[arg(long)]
    pub pattern_width: Option<u16>,
    /// Scene duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Events per pattern pixel per second.
    #[arg(long)]
    pub edge_rate: Option<f64>,
    /// Background events per sensor pixel per second.
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub polarity: Option<PolarityArg>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),+ $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// `self` with every value set in `flags` replaced.
    pub fn overridden_by(mut self, flags: &Settings) -> Settings {
        overlay!(
            self, flags, width, height, t0, t1, window_ms, seed, v_max, restarts, simplex_scale,
            f_tol, x_tol, max_iters, unsigned, vx, vy, phi, r, alpha, beta, no_originals,
            generator, emit_origin_column, gradient, pattern, length, pattern_width, duration,
            edge_rate, noise_rate, polarity,
        );
        self
    }

    pub fn geometry(&self) -> Result<Geometry, CliError> {
        match (self.width, self.height) {
            (Some(w), Some(h)) if w > 0 && h > 0 => Ok(Geometry::new(w, h)),
            (Some(_), Some(_)) => Err(CliError::Usage("--width and --height must be positive".into())),
            _ => Err(CliError::Usage("--width and --height are required".into())),
        }
    }

    pub fn fixed_velocity(&self) -> Result<Option<Velocity>, CliError> {
        match (self.vx, self.vy) {
            (Some(vx), Some(vy)) if vx.is_finite() && vy.is_finite() => Ok(Some(Velocity::new(vx, vy))),
            (None, None) => Ok(None),
            (Some(_), Some(_)) => Err(CliError::Usage("--vx and --vy must be finite".into())),
            _ => Err(CliError::Usage("--vx and --vy must be given together".into())),
        }
    }

    pub fn window_seconds(&self) -> Result<Option<f64>, CliError> {
        match self.window_ms {
            Some(ms) if ms > 0.0 && ms.is_finite() => Ok(Some(ms / 1000.0)),
            Some(ms) => Err(CliError::Usage(format!("--window-ms must be positive, got {ms}"))),
            None => Ok(None),
        }
    }

    pub fn range(&self) -> Result<(f64, f64), CliError> {
        let t0 = self.t0.unwrap_or(f64::NEG_INFINITY);
        let t1 = self.t1.unwrap_or(f64::INFINITY);
        if t0.is_nan() || t1.is_nan() || t0 > t1 {
            return Err(CliError::Usage(format!("invalid time range [{t0}, {t1})")));
        }
        Ok((t0, t1))
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig, CliError> {
        let d = OptimizerConfig::default();
        let cfg = OptimizerConfig {
            v_max: self.v_max.unwrap_or(d.v_max),
            n_restarts: self.restarts.unwrap_or(d.n_restarts),
            simplex_init_scale: self.simplex_scale.unwrap_or(d.simplex_init_scale),
            f_tol: self.f_tol.unwrap_or(d.f_tol),
            x_tol: self.x_tol.unwrap_or(d.x_tol),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            seed: self.seed.unwrap_or(d.seed),
            accumulation: if self.unsigned.unwrap_or(false) {
                Accumulation::Unsigned
            } else {
                Accumulation::Signed
            },
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn upsample(&self) -> Result<UpsampleConfig, CliError> {
        let d = UpsampleConfig::default();
        let cfg = UpsampleConfig {
            optimizer: self.optimizer()?,
            phi: self.phi.unwrap_or(d.phi),
            r: self.r.unwrap_or(d.r),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            seed: self.seed.unwrap_or(d.seed),
            include_originals: !self.no_originals.unwrap_or(false),
            fixed_velocity: self.fixed_velocity()?,
            generator: match self.generator {
                Some(GeneratorArg::Poisson) => Generator::HomogeneousPoisson,
                Some(GeneratorArg::Tpp) | None => Generator::PointProcesses,
            },
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn gradient_operator(&self) -> GradientOperator {
        match self.gradient {
            Some(GradientArg::Sobel) => GradientOperator::Sobel,
            Some(GradientArg::Central) | None => GradientOperator::CentralDifference,
        }
    }

    pub fn polarity_scheme(&self) -> PolarityScheme {
        match self.polarity {
            Some(PolarityArg::On) => PolarityScheme::AllOn,
            Some(PolarityArg::Off) => PolarityScheme::AllOff,
            Some(PolarityArg::Mixed) | None => PolarityScheme::PerSource,
        }
    }
}
