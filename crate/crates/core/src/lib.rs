//! Model of a detuned Fabry-Pérot cavity whose end mirror is a movable
//! micro-oscillator, used as a source of ponderomotively squeezed light.
//!
//! Internal angular frequencies are rad/s. Every public configuration and
//! reporting quantity is in Hz. Noise spectra are single-sided and
//! normalized so that shot noise equals 1.

pub mod analytic;
pub mod cavity;
pub mod consts;
pub mod detection;
pub mod error;
pub mod mechanics;
pub mod metrics;
pub mod optomech;
pub mod parallel;
pub mod quantum;
pub mod sweep;

pub use cavity::{
    CavityConfig, DerivedCavity, LambdaParams, LaserNoise, MeasurementPort, PowerSpec,
};
pub use error::{Error, Result};
pub use mechanics::{DampingKind, MechMode, Oscillator};
pub use metrics::{NoiseModel, Source, SqueezeGrid, SqueezeSummary};
pub use num_complex::Complex64;
pub use quantum::{Cov2, PortCovariance};
pub use sweep::{SweepRow, SweepSpec};
