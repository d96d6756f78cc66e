//! Resolving occlusion of a physical workspace inside a virtual forest.
//!
//! Two strategies share one pose search ([`resolver`]): redirected walking
//! ([`redirect`]) nudges the world mapping while the user walks, and
//! automatic teleport rotation ([`teleport`]) adjusts the teleport preview.
//! [`agent`] drives both through scripted trials over generated scenes
//! ([`scenario`]); [`metrics`] turns the resulting traces into efficacy and
//! pointing-error reports.

// Validation writes `!(x > 0.0)` on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod geometry;
pub mod mapping;
pub mod metrics;
pub mod redirect;
pub mod resolver;
pub mod rng;
pub mod scenario;
pub mod teleport;

pub use geometry::{normalize_angle, Circle, FovWedge, OrientedRect, Pose2, Vec2};
pub use mapping::WorldMapping;
pub use resolver::{
    find_occlusion_free, ResolutionConstraints, ResolutionOutcome, ResolutionQuery, ResolutionStatus, RotationSign,
};
