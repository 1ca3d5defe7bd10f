//! Urban vehicular ad hoc network simulator with link-duration kinematics
//! and DSDV, DYMO and OLSR routing.

pub mod diagnostics;
pub mod engine;
pub mod experiments;
pub mod kinematics;
pub mod metrics;
pub mod mobility;
pub mod protocols;
pub mod rng;
pub mod scenario;
