//! State-evolution prediction, fixed-point analysis of the precision update,
//! and recovery metrics.

pub mod fixed_point;
pub mod metrics;
pub mod se;
