//! Business process simulation with probabilistic resource availability and
//! multitasking, plus discovery of those models from event logs and metrics
//! comparing simulated and real logs.
//!
//! The numeric kernels ([`multitask::Mdpd`], [`calendar_discovery::trapezoidal_weights`],
//! [`metrics::wasserstein_1d`]) are generic over [`scalar::Scalar`]; the aliases
//! below fix the usual choices.

pub mod calendar;
pub mod calendar_discovery;
pub mod discovery;
pub mod distribution;
pub mod error;
pub mod evaluation;
pub mod event_log;
pub mod metrics;
pub mod multitask;
pub mod scalar;
pub mod sim;
pub mod synthgen;

pub use error::{Error, Result};

/// Exact rational used where results must match hand computations.
pub type Rational = num_rational::Ratio<i64>;

pub type Mdpd = multitask::Mdpd<f64>;
pub type Mdpd32 = multitask::Mdpd<f32>;
pub type ExactMdpd = multitask::Mdpd<Rational>;
pub type GlobalMultitask = multitask::GlobalMultitask<f64>;
pub type LocalMultitask = multitask::LocalMultitask<f64>;
