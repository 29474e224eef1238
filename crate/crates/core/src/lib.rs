//! Temporal up-sampling of asynchronous event-camera streams.
//!
//! Events in a window are warped along a constant image-plane velocity chosen
//! to maximise the variance of the warped count image. Events that land on
//! the same reference pixel form a trajectory; new events are drawn along
//! each trajectory with a Hawkes process (well-populated trajectories) or a
//! self-correcting process (isolated events), then merged with the input.
//!
//! ```
//! use evup::eval::{synth_scene, Pattern, PolarityScheme, SceneSpec};
//! use evup::upsampler::{upsample, UpsampleConfig};
//! use evup::{Geometry, Velocity};
//!
//! let scene = synth_scene(&SceneSpec {
//!     geometry: Geometry::new(32, 32),
//!     duration: 1.0,
//!     pattern: Pattern::Edge { length: 8 },
//!     true_velocity: Velocity::new(6.0, 0.0),
//!     edge_rate: 40.0,
//!     noise_rate: 0.01,
//!     polarity: PolarityScheme::AllOn,
//!     seed: 1,
//! })
//! .unwrap();
//! let (dense, report) = upsample(&scene, &UpsampleConfig::default()).unwrap();
//! assert!(dense.len() >= scene.len());
//! assert_eq!(dense.len(), report.output_count(true));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod event;
pub mod io;
pub mod optimizer;
pub mod point_process;
pub mod trajectory;
pub mod upsampler;
pub mod warp;

pub use error::{Error, Result};
pub use event::{slice_window, Event, EventWindow, Geometry, Origin, Polarity};
pub use warp::Velocity;
