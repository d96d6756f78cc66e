//! Teleport stages and automatic teleport rotation (ATR).
//!
//! The preview places the whole workspace (center, desk, and the user's
//! avatar) at the requested pose. With ATR enabled, an occluded preview is
//! turned about the workspace center and pulled along the desk axis until
//! the desk lands clear of obstacles, and the adjusted preview is what the
//! transition commits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{is_occluded, Circle, OrientedRect, Pose2, Vec2};
use crate::mapping::WorldMapping;
use crate::redirect::{on_teleport, RedirectState};
use crate::resolver::{find_occlusion_free, ResolutionConstraints, ResolutionQuery, ResolutionStatus, ResolveError};
use crate::scenario::{Bounds, WorkspaceLayout};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TeleportError {
    #[error("teleport target ({x:.3}, {y:.3}) lies outside the scene bounds")]
    InvalidTarget { x: f64, y: f64 },
    #[error("illegal stage transition {from:?} -> {to:?}")]
    IllegalTransition { from: TeleportStage, to: TeleportStage },
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleportStage {
    Idle,
    TargetSpecification,
    PreTravelInformation,
    Transition,
    PostTravelFeedback,
}

impl TeleportStage {
    pub const ALL: [TeleportStage; 5] = [
        TeleportStage::Idle,
        TeleportStage::TargetSpecification,
        TeleportStage::PreTravelInformation,
        TeleportStage::Transition,
        TeleportStage::PostTravelFeedback,
    ];

    /// Stages only move forward along the cycle. Target specification and
    /// pre-travel information may share a frame, but are still entered in
    /// order.
    pub fn can_advance_to(self, next: TeleportStage) -> bool {
        use TeleportStage::*;
        matches!(
            (self, next),
            (Idle, TargetSpecification)
                | (TargetSpecification, PreTravelInformation)
                | (PreTravelInformation, Transition)
                | (Transition, PostTravelFeedback)
                | (PostTravelFeedback, Idle)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeleportMachine {
    stage: TeleportStage,
}

impl Default for TeleportMachine {
    fn default() -> Self {
        TeleportMachine {
            stage: TeleportStage::Idle,
        }
    }
}

impl TeleportMachine {
    pub fn stage(&self) -> TeleportStage {
        self.stage
    }

    pub fn advance(&mut self, next: TeleportStage) -> Result<(), TeleportError> {
        if !self.stage.can_advance_to(next) {
            return Err(TeleportError::IllegalTransition {
                from: self.stage,
                to: next,
            });
        }
        self.stage = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleportRequest {
    pub target: Vec2,
    pub facing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreviewState {
    pub workspace_center: Vec2,
    pub workspace_yaw: f64,
    pub avatar: Pose2,
    pub desk_preview: OrientedRect,
    pub adjustment_rotation: f64,
    pub adjustment_translation: f64,
    pub resolved: bool,
    /// Whether the unadjusted placement would have occluded the desk.
    pub naive_occluded: bool,
    /// Mapping that realizes this preview on commit.
    pub mapping: WorldMapping,
}

/// Builds the teleport preview for `request`, adjusting it when ATR is on.
pub fn make_preview(
    request: &TeleportRequest,
    layout: &WorkspaceLayout,
    user_physical: Pose2,
    bounds: &Bounds,
    obstacles: &[Circle],
    atr_enabled: bool,
    constraints: &ResolutionConstraints,
) -> Result<PreviewState, TeleportError> {
    if !request.target.is_finite() || !request.facing.is_finite() || !bounds.contains(request.target) {
        return Err(TeleportError::InvalidTarget {
            x: request.target.x,
            y: request.target.y,
        });
    }
    let workspace = Pose2::new(request.target, request.facing);
    let naive_mapping = WorldMapping::aligning(layout.home, workspace);
    let desk_physical = layout.desk_physical();
    let naive_desk = layout.desk_at(workspace);
    let naive_occluded = is_occluded(&naive_desk, obstacles);

    let naive = PreviewState {
        workspace_center: workspace.position,
        workspace_yaw: workspace.yaw,
        avatar: naive_mapping.apply_pose(user_physical),
        desk_preview: naive_desk,
        adjustment_rotation: 0.0,
        adjustment_translation: 0.0,
        resolved: !naive_occluded,
        naive_occluded,
        mapping: naive_mapping,
    };
    if !atr_enabled || !naive_occluded {
        return Ok(naive);
    }

    let outcome = find_occlusion_free(&ResolutionQuery {
        origin: workspace.position,
        desk: naive_desk,
        obstacles: obstacles.to_vec(),
        constraints: constraints.with_lock(None),
    })?;
    if outcome.status != ResolutionStatus::Resolved {
        return Ok(naive);
    }

    // Turn the whole preview about the workspace center, then shift it by
    // the same vector that carried the candidate desk toward the center.
    let turned = naive_mapping.rotated_about(workspace.position, outcome.rotation_delta);
    let turned_desk_center = turned.apply_point(desk_physical.center);
    let shift = outcome.resolved_desk.center - turned_desk_center;
    let mapping = turned.translated(shift);
    let desk_preview = mapping.apply_rect(&desk_physical);
    if is_occluded(&desk_preview, obstacles) {
        // Only reachable when rounding nudges a tangent candidate into
        // contact; keep the naive preview rather than claim success.
        return Ok(naive);
    }
    Ok(PreviewState {
        workspace_center: mapping.apply_point(layout.home.position),
        workspace_yaw: mapping.apply_pose(layout.home).yaw,
        avatar: mapping.apply_pose(user_physical),
        desk_preview,
        adjustment_rotation: outcome.rotation_delta,
        adjustment_translation: outcome.translation_delta,
        resolved: true,
        naive_occluded,
        mapping,
    })
}

/// Executes the transition: the world mapping becomes the preview's, and
/// the redirect lock is released.
pub fn commit_teleport(
    preview: &PreviewState,
    layout: &WorkspaceLayout,
    redirect_state: &RedirectState,
    constraints: &ResolutionConstraints,
) -> Result<(WorldMapping, RedirectState), TeleportError> {
    let desk = preview.mapping.apply_rect(&layout.desk_physical());
    let drift = desk.center.distance(preview.desk_preview.center);
    if drift > 1e-9 || (desk.yaw - preview.desk_preview.yaw).abs() > 1e-9 {
        return Err(TeleportError::Internal(format!(
            "preview desk is not a rigid image of the physical desk (drift {drift:e} m)"
        )));
    }
    Ok((preview.mapping, on_teleport(redirect_state, constraints)))
}
