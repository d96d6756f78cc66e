//! Nearest occlusion-free desk pose.
//!
//! The desk may be rotated about an origin (the user for redirected
//! walking, the preview's workspace center for teleport rotation) and then
//! pulled toward that origin. Candidates form a grid over (rotation,
//! translation); the search expands it best-first by cost and returns the
//! first candidate whose footprint is clear of every obstacle.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{is_occluded, normalize_angle, Circle, OrientedRect, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolveError {
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(&'static str),
    #[error("degenerate geometry: rotated desk center coincides with the origin")]
    DegenerateGeometry,
}

/// Sign of a rotation about the origin; counterclockwise is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSign {
    Clockwise,
    CounterClockwise,
}

impl RotationSign {
    pub fn of(angle: f64) -> Option<RotationSign> {
        if angle > 0.0 {
            Some(RotationSign::CounterClockwise)
        } else if angle < 0.0 {
            Some(RotationSign::Clockwise)
        } else {
            None
        }
    }

    pub fn signum(self) -> f64 {
        match self {
            RotationSign::Clockwise => -1.0,
            RotationSign::CounterClockwise => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolutionConstraints {
    pub max_rotation: f64,
    pub max_translation: f64,
    pub rotation_step: f64,
    pub translation_step: f64,
    pub direction_lock: Option<RotationSign>,
}

impl Default for ResolutionConstraints {
    fn default() -> Self {
        ResolutionConstraints {
            max_rotation: FRAC_PI_2,
            max_translation: 1.0,
            rotation_step: 1f64.to_radians(),
            translation_step: 0.05,
            direction_lock: None,
        }
    }
}

impl ResolutionConstraints {
    pub fn validate(&self) -> Result<(), ResolveError> {
        let finite = [
            self.max_rotation,
            self.max_translation,
            self.rotation_step,
            self.translation_step,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(ResolveError::InvalidConstraints("non-finite value"));
        }
        if !(self.max_rotation > 0.0) {
            return Err(ResolveError::InvalidConstraints("max_rotation must be positive"));
        }
        if self.max_translation < 0.0 {
            return Err(ResolveError::InvalidConstraints("max_translation must be non-negative"));
        }
        if !(self.rotation_step > 0.0 && self.translation_step > 0.0) {
            return Err(ResolveError::InvalidConstraints("steps must be positive"));
        }
        if self.rotation_step > self.max_rotation {
            return Err(ResolveError::InvalidConstraints("rotation_step exceeds max_rotation"));
        }
        if self.max_translation > 0.0 && self.translation_step > self.max_translation {
            return Err(ResolveError::InvalidConstraints(
                "translation_step exceeds max_translation",
            ));
        }
        Ok(())
    }

    pub fn with_lock(mut self, lock: Option<RotationSign>) -> Self {
        self.direction_lock = lock;
        self
    }

    /// Number of rotation steps on each side of zero.
    pub fn rotation_cells(&self) -> i64 {
        cell_count(self.max_rotation, self.rotation_step)
    }

    /// Number of translation steps beyond zero.
    pub fn translation_cells(&self) -> i64 {
        if self.max_translation == 0.0 {
            0
        } else {
            cell_count(self.max_translation, self.translation_step)
        }
    }

    /// Rotation angle of grid column `i`, clamped to the bound.
    pub fn rotation_at(&self, i: i64) -> f64 {
        let mag = (i.unsigned_abs() as f64 * self.rotation_step).min(self.max_rotation);
        if i < 0 {
            -mag
        } else {
            mag
        }
    }

    pub fn translation_at(&self, j: i64) -> f64 {
        (j as f64 * self.translation_step).min(self.max_translation)
    }

    /// Inclusive range of rotation indices permitted by the lock.
    pub fn rotation_index_range(&self) -> (i64, i64) {
        let n = self.rotation_cells();
        match self.direction_lock {
            None => (-n, n),
            Some(RotationSign::CounterClockwise) => (0, n),
            Some(RotationSign::Clockwise) => (-n, 0),
        }
    }
}

// Ratios like (π/2)/(π/180) land a hair off the integer; snap those.
fn cell_count(max: f64, step: f64) -> i64 {
    let ratio = max / step;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest as i64
    } else {
        ratio.floor() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionQuery {
    pub origin: Vec2,
    pub desk: OrientedRect,
    pub obstacles: Vec<Circle>,
    pub constraints: ResolutionConstraints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Resolved,
    AlreadyFree,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOutcome {
    pub status: ResolutionStatus,
    pub rotation_delta: f64,
    pub translation_delta: f64,
    pub resolved_desk: OrientedRect,
    /// `None` when unresolved (no reachable free pose, cost is unbounded).
    pub cost: Option<f64>,
}

impl ResolutionOutcome {
    pub fn is_free(&self) -> bool {
        self.status != ResolutionStatus::Unresolved
    }

    /// Cost with unresolved mapped to +∞, for ordering outcomes.
    pub fn effective_cost(&self) -> f64 {
        self.cost.unwrap_or(f64::INFINITY)
    }
}

/// `|d_theta|/max_rotation + d_trans/max_translation`.
pub fn resolution_cost(d_theta: f64, d_trans: f64, constraints: &ResolutionConstraints) -> f64 {
    let rot = d_theta.abs() / constraints.max_rotation;
    let trans = if constraints.max_translation > 0.0 {
        d_trans / constraints.max_translation
    } else {
        0.0
    };
    rot + trans
}

/// Rotates the desk about `origin` by `d_theta`, then moves it `d_trans`
/// toward `origin` from its rotated center.
pub fn candidate_desk(
    desk: &OrientedRect,
    origin: Vec2,
    d_theta: f64,
    d_trans: f64,
) -> Result<OrientedRect, ResolveError> {
    let rotated_center = if d_theta == 0.0 {
        desk.center
    } else {
        desk.center.rotated_about(origin, d_theta)
    };
    let center = if d_trans == 0.0 {
        rotated_center
    } else {
        let dir = (origin - rotated_center)
            .normalized()
            .ok_or(ResolveError::DegenerateGeometry)?;
        rotated_center + dir * d_trans
    };
    if rotated_center == origin {
        return Err(ResolveError::DegenerateGeometry);
    }
    Ok(OrientedRect {
        center,
        yaw: normalize_angle(desk.yaw + d_theta),
        ..*desk
    })
}

/// Priority key for one grid cell. Orders by cost, then translation, then
/// rotation magnitude, then counterclockwise before clockwise.
#[derive(Debug, Clone, Copy)]
struct CellKey {
    cost: f64,
    j: i64,
    i: i64,
}

impl CellKey {
    fn cmp_key(&self, o: &Self) -> Ordering {
        self.cost
            .total_cmp(&o.cost)
            .then(self.j.cmp(&o.j))
            .then(self.i.abs().cmp(&o.i.abs()))
            .then(o.i.cmp(&self.i))
    }
}

impl PartialEq for CellKey {
    fn eq(&self, o: &Self) -> bool {
        self.cmp_key(o) == Ordering::Equal
    }
}
impl Eq for CellKey {}
impl PartialOrd for CellKey {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for CellKey {
    // Reversed so BinaryHeap pops the smallest key.
    fn cmp(&self, o: &Self) -> Ordering {
        o.cmp_key(self)
    }
}

/// Obstacles that can touch any candidate: candidate centers stay inside an
/// annulus around the origin, so anything outside it padded by the desk's
/// circumradius is irrelevant.
fn relevant_obstacles(query: &ResolutionQuery) -> Vec<Circle> {
    let start = query.desk.center.distance(query.origin);
    let max_t = query.constraints.max_translation;
    // A long pull can carry the desk through the origin and out the far side.
    let reach = start.max(max_t - start);
    let inner = (start - max_t).max(0.0);
    let pad = query.desk.circumradius();
    query
        .obstacles
        .iter()
        .copied()
        .filter(|c| {
            let d = c.center.distance(query.origin);
            let slack = pad + c.radius + 1e-9;
            d <= reach + slack && d >= inner - slack
        })
        .collect()
}

fn validate_query(query: &ResolutionQuery) -> Result<(), ResolveError> {
    query.constraints.validate()?;
    if !query.origin.is_finite() {
        return Err(ResolveError::InvalidQuery("origin is not finite"));
    }
    if query.origin == query.desk.center {
        return Err(ResolveError::InvalidQuery("origin coincides with the desk center"));
    }
    Ok(())
}

/// Best-first search of the rotation/translation grid.
pub fn find_occlusion_free(query: &ResolutionQuery) -> Result<ResolutionOutcome, ResolveError> {
    validate_query(query)?;
    let c = &query.constraints;
    let obstacles = relevant_obstacles(query);
    if !is_occluded(&query.desk, &obstacles) {
        return Ok(ResolutionOutcome {
            status: ResolutionStatus::AlreadyFree,
            rotation_delta: 0.0,
            translation_delta: 0.0,
            resolved_desk: query.desk,
            cost: Some(0.0),
        });
    }

    let (i_lo, i_hi) = c.rotation_index_range();
    let j_hi = c.translation_cells();
    let key = |i: i64, j: i64| CellKey {
        cost: resolution_cost(c.rotation_at(i), c.translation_at(j), c),
        j,
        i,
    };

    // Every successor moves outward in |i| or up in j, so its cost is never
    // below its parent's and pops come out in key order.
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(key(0, 0));
    seen.insert((0i64, 0i64));
    while let Some(cell) = heap.pop() {
        let (i, j) = (cell.i, cell.j);
        let d_theta = c.rotation_at(i);
        let d_trans = c.translation_at(j);
        let desk = candidate_desk(&query.desk, query.origin, d_theta, d_trans)?;
        if !is_occluded(&desk, &obstacles) {
            return Ok(ResolutionOutcome {
                status: ResolutionStatus::Resolved,
                rotation_delta: d_theta,
                translation_delta: d_trans,
                resolved_desk: desk,
                cost: Some(cell.cost),
            });
        }
        let mut succ = Vec::with_capacity(3);
        if i >= 0 && i < i_hi {
            succ.push((i + 1, j));
        }
        if i <= 0 && i > i_lo {
            succ.push((i - 1, j));
        }
        if j < j_hi {
            succ.push((i, j + 1));
        }
        for (si, sj) in succ {
            if seen.insert((si, sj)) {
                heap.push(key(si, sj));
            }
        }
    }

    Ok(ResolutionOutcome {
        status: ResolutionStatus::Unresolved,
        rotation_delta: 0.0,
        translation_delta: 0.0,
        resolved_desk: query.desk,
        cost: None,
    })
}
