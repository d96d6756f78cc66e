//! Redirected walking toward an occlusion-free desk placement.
//!
//! Each frame the resolver is queried with the user as origin. When it
//! finds a target, a small share of the user's own motion is injected into
//! the world mapping: rotation and curvature gains turn the world about the
//! user, the directional translation gain shifts it along the desk-to-user
//! axis. Nothing is applied while the desk is in view.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, rect_in_fov, Circle, FovWedge, OrientedRect, Pose2, Vec2};
use crate::mapping::WorldMapping;
use crate::resolver::{
    find_occlusion_free, ResolutionConstraints, ResolutionOutcome, ResolutionQuery, ResolutionStatus, ResolveError,
    RotationSign,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RedirectError {
    #[error("degenerate geometry: user stands on the desk center")]
    DegenerateGeometry,
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainConfig {
    /// Fraction of walked distance added along the desk-to-user axis.
    pub translation_gain: f64,
    /// Fraction of head yaw change added as world rotation.
    pub rotation_gain: f64,
    /// Degrees of world rotation per meter walked.
    pub curvature_gain: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        GainConfig {
            translation_gain: 0.06,
            rotation_gain: 0.06,
            curvature_gain: 2.6,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let all = [self.translation_gain, self.rotation_gain, self.curvature_gain];
        if all.iter().all(|g| g.is_finite() && *g >= 0.0) {
            Ok(())
        } else {
            Err("gains must be finite and non-negative")
        }
    }

    /// Upper bound on the world rotation one frame may inject, in radians.
    pub fn rotation_cap(&self, yaw_change: f64, walked: f64) -> f64 {
        self.rotation_gain * yaw_change + self.curvature_gain.to_radians() * walked
    }

    pub fn translation_cap(&self, walked: f64) -> f64 {
        self.translation_gain * walked
    }
}

/// The user's virtual pose this frame and the motion since the last one.
/// Motion is frame-independent under a rigid mapping; callers holding
/// physical poses should measure it there, away from large virtual
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserKinematics {
    pub current: Pose2,
    /// Absolute head yaw change, radians.
    pub yaw_change: f64,
    /// Distance walked, meters.
    pub walked: f64,
}

impl UserKinematics {
    /// Motion measured between two poses in the same frame.
    pub fn between(previous: Pose2, current: Pose2) -> Self {
        UserKinematics {
            current,
            yaw_change: normalize_angle(current.yaw - previous.yaw).abs(),
            walked: current.position.distance(previous.position),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedirectState {
    pub locked_direction: Option<RotationSign>,
    /// Signed rotation still to inject.
    pub remaining_rotation: f64,
    pub remaining_translation: f64,
    pub active: bool,
}

impl RedirectState {
    pub fn new(constraints: &ResolutionConstraints) -> Self {
        RedirectState {
            locked_direction: None,
            remaining_rotation: constraints.max_rotation,
            remaining_translation: constraints.max_translation,
            active: false,
        }
    }
}

/// Rigid change to the world mapping: a turn about the user's virtual
/// position followed by a shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldAdjustment {
    pub rotation_about_user: f64,
    pub translation: Vec2,
}

impl WorldAdjustment {
    pub const IDENTITY: WorldAdjustment = WorldAdjustment {
        rotation_about_user: 0.0,
        translation: Vec2::ZERO,
    };

    pub fn is_identity(&self) -> bool {
        self.rotation_about_user == 0.0 && self.translation == Vec2::ZERO
    }

    pub fn apply_to(&self, mapping: &WorldMapping, user_virtual: Vec2) -> WorldMapping {
        mapping
            .rotated_about(user_virtual, self.rotation_about_user)
            .translated(self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedirectDecision {
    /// The desk was visible; gains paused.
    InView,
    AlreadyFree,
    Unresolved,
    Applied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedirectStep {
    pub state: RedirectState,
    pub adjustment: WorldAdjustment,
    pub decision: RedirectDecision,
    pub outcome: Option<ResolutionOutcome>,
}

/// One frame of the controller.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &RedirectState,
    kin: &UserKinematics,
    desk_virtual: &OrientedRect,
    obstacles: &[Circle],
    fov: &FovWedge,
    gains: &GainConfig,
    constraints: &ResolutionConstraints,
) -> Result<RedirectStep, RedirectError> {
    if rect_in_fov(fov, desk_virtual) {
        return Ok(RedirectStep {
            state: *state,
            adjustment: WorldAdjustment::IDENTITY,
            decision: RedirectDecision::InView,
            outcome: None,
        });
    }
    if kin.current.position == desk_virtual.center {
        return Err(RedirectError::DegenerateGeometry);
    }
    let query = ResolutionQuery {
        origin: kin.current.position,
        desk: *desk_virtual,
        obstacles: obstacles.to_vec(),
        constraints: constraints.with_lock(state.locked_direction),
    };
    let outcome = find_occlusion_free(&query)?;
    let decision = match outcome.status {
        ResolutionStatus::AlreadyFree => RedirectDecision::AlreadyFree,
        ResolutionStatus::Unresolved => RedirectDecision::Unresolved,
        ResolutionStatus::Resolved => RedirectDecision::Applied,
    };
    if decision != RedirectDecision::Applied {
        let mut next = *state;
        next.active = false;
        return Ok(RedirectStep {
            state: next,
            adjustment: WorldAdjustment::IDENTITY,
            decision,
            outcome: Some(outcome),
        });
    }

    let target = RedirectState {
        locked_direction: state.locked_direction.or(RotationSign::of(outcome.rotation_delta)),
        remaining_rotation: outcome.rotation_delta,
        remaining_translation: outcome.translation_delta,
        active: true,
    };
    let (next, adjustment) = advance(&target, kin, desk_virtual.center, gains);
    Ok(RedirectStep {
        state: next,
        adjustment,
        decision,
        outcome: Some(outcome),
    })
}

/// Spends this frame's gain budget against the remaining target, without
/// re-running the resolver.
pub fn advance(
    state: &RedirectState,
    kin: &UserKinematics,
    desk_center: Vec2,
    gains: &GainConfig,
) -> (RedirectState, WorldAdjustment) {
    let yaw_change = kin.yaw_change;
    let walked = kin.walked;

    let rotation = match state.locked_direction {
        Some(sign) if state.remaining_rotation * sign.signum() > 0.0 => {
            let mag = gains
                .rotation_cap(yaw_change, walked)
                .min(state.remaining_rotation.abs());
            mag * sign.signum()
        }
        _ => 0.0,
    };

    let translation = match (kin.current.position - desk_center).normalized() {
        Some(dir) if state.remaining_translation > 0.0 => {
            let mag = gains.translation_cap(walked).min(state.remaining_translation);
            // A unit vector times `mag` can round one ulp past `mag`.
            let mut t = dir * mag;
            while t.norm() > mag {
                t = t * (1.0 - f64::EPSILON);
            }
            t
        }
        _ => Vec2::ZERO,
    };

    let next = RedirectState {
        remaining_rotation: state.remaining_rotation - rotation,
        remaining_translation: (state.remaining_translation - translation.norm()).max(0.0),
        ..*state
    };
    (
        next,
        WorldAdjustment {
            rotation_about_user: rotation,
            translation,
        },
    )
}

/// Releases the direction lock and restores the full budget. Nothing of
/// the previous state survives a teleport.
pub fn on_teleport(_state: &RedirectState, constraints: &ResolutionConstraints) -> RedirectState {
    RedirectState::new(constraints)
}
