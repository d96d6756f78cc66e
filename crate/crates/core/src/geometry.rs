//! Planar primitives and the predicates the strategies are built on.
//!
//! Everything lives in the ground plane, in meters and radians. Predicates
//! use closed sets (tangency counts as contact) and compare computed
//! distances exactly, without epsilon fuzzing.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,
    #[error("invalid shape: {0}")]
    InvalidShape(&'static str),
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite(), "non-finite Vec2");
        Vec2 { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Vec2 { x, y })
        } else {
            Err(GeometryError::NonFinite)
        }
    }

    /// Unit vector pointing along `angle`.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2 { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Bearing of this vector, `atan2(y, x)`.
    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 {
            Some(Vec2::new(self.x / n, self.y / n))
        } else {
            None
        }
    }

    /// Counterclockwise rotation about the origin.
    #[inline]
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn rotated_about(self, pivot: Vec2, angle: f64) -> Vec2 {
        (self - pivot).rotated(angle) + pivot
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Position plus heading; yaw is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Vec2,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(position: Vec2, yaw: f64) -> Self {
        Pose2 {
            position,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.yaw)
    }

    /// Maps a point given in this pose's local frame (x forward, y left)
    /// into the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.position + local.rotated(self.yaw)
    }
}

/// Rectangle footprint. `half_depth` runs along the facing direction
/// `yaw`, `half_width` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub half_width: f64,
    pub half_depth: f64,
    pub yaw: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, half_width: f64, half_depth: f64, yaw: f64) -> Result<Self, GeometryError> {
        if !(half_width > 0.0 && half_depth > 0.0) || !half_width.is_finite() || !half_depth.is_finite() {
            return Err(GeometryError::InvalidShape("rectangle half extents must be positive"));
        }
        if !center.is_finite() || !yaw.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(OrientedRect {
            center,
            half_width,
            half_depth,
            yaw,
        })
    }

    pub fn circumradius(&self) -> f64 {
        self.half_width.hypot(self.half_depth)
    }

    /// Expresses `p` in the rectangle frame: x along the facing
    /// (depth) axis, y along the width axis.
    #[inline]
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotated(-self.yaw)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let pose = Pose2 {
            position: self.center,
            yaw: self.yaw,
        };
        let (d, w) = (self.half_depth, self.half_width);
        [
            pose.transform_point(Vec2::new(d, w)),
            pose.transform_point(Vec2::new(-d, w)),
            pose.transform_point(Vec2::new(-d, -w)),
            pose.transform_point(Vec2::new(d, -w)),
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.half_depth && l.y.abs() <= self.half_width
    }

    /// Squared distance from `p` to the closed rectangle (zero inside).
    #[inline]
    pub fn distance_squared_to(&self, p: Vec2) -> f64 {
        let l = self.to_local(p);
        let dx = (l.x.abs() - self.half_depth).max(0.0);
        let dy = (l.y.abs() - self.half_width).max(0.0);
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidShape("circle radius must be positive"));
        }
        if !center.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Circle { center, radius })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (p - self.center).norm_squared() <= self.radius * self.radius
    }
}

/// Horizontal view cone of the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovWedge {
    pub apex: Vec2,
    pub heading: f64,
    pub half_angle: f64,
    pub range: f64,
}

impl FovWedge {
    pub fn new(apex: Vec2, heading: f64, half_angle: f64, range: f64) -> Result<Self, GeometryError> {
        if !(half_angle > 0.0 && half_angle < PI) {
            return Err(GeometryError::InvalidShape("half angle must lie in (0, π)"));
        }
        if !(range > 0.0) || !range.is_finite() {
            return Err(GeometryError::InvalidShape("range must be positive"));
        }
        Ok(FovWedge {
            apex,
            heading,
            half_angle,
            range,
        })
    }

    /// Closed membership; the apex itself is inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.apex;
        if d.norm() > self.range {
            return false;
        }
        if d == Vec2::ZERO {
            return true;
        }
        normalize_angle(d.angle() - self.heading).abs() <= self.half_angle
    }
}

/// Closed rectangle vs closed disk, via the closest point on the rectangle.
pub fn rect_circle_intersects(rect: &OrientedRect, circle: &Circle) -> bool {
    rect.distance_squared_to(circle.center) <= circle.radius * circle.radius
}

/// True when any obstacle footprint overlaps the desk footprint.
pub fn is_occluded(desk: &OrientedRect, obstacles: &[Circle]) -> bool {
    obstacles.iter().any(|c| rect_circle_intersects(desk, c))
}

fn segment_distance_squared(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (a + ab * t - p).norm_squared()
}

/// True when any circle touches the closed segment `a`–`b`.
pub fn segment_blocked(a: Vec2, b: Vec2, obstacles: &[Circle]) -> Result<bool, GeometryError> {
    if a == b {
        return Err(GeometryError::DegenerateSegment);
    }
    // Distances are measured from the lexicographically smaller endpoint so
    // the predicate is bit-for-bit symmetric in endpoint order.
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    Ok(obstacles
        .iter()
        .any(|c| segment_distance_squared(a, b, c.center) <= c.radius * c.radius))
}

/// Corner/center sampling of the rectangle against the wedge.
pub fn rect_in_fov(wedge: &FovWedge, rect: &OrientedRect) -> bool {
    wedge.contains(rect.center) || rect.corners().iter().any(|&c| wedge.contains(c))
}
