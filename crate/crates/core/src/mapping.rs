//! Registration of the physical room inside the virtual world.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, OrientedRect, Pose2, Vec2};

/// Rigid transform taking physical-room coordinates to virtual-world
/// coordinates: `virtual = R(rotation) · physical + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldMapping {
    pub rotation: f64,
    pub translation: Vec2,
}

impl Default for WorldMapping {
    fn default() -> Self {
        WorldMapping::IDENTITY
    }
}

impl WorldMapping {
    pub const IDENTITY: WorldMapping = WorldMapping {
        rotation: 0.0,
        translation: Vec2::ZERO,
    };

    pub fn new(rotation: f64, translation: Vec2) -> Self {
        WorldMapping {
            rotation: normalize_angle(rotation),
            translation,
        }
    }

    /// The mapping that carries `physical` onto `virtual_pose`.
    pub fn aligning(physical: Pose2, virtual_pose: Pose2) -> Self {
        let rotation = normalize_angle(virtual_pose.yaw - physical.yaw);
        let translation = virtual_pose.position - physical.position.rotated(rotation);
        WorldMapping { rotation, translation }
    }

    pub fn apply_point(&self, p: Vec2) -> Vec2 {
        p.rotated(self.rotation) + self.translation
    }

    pub fn apply_pose(&self, pose: Pose2) -> Pose2 {
        Pose2::new(self.apply_point(pose.position), pose.yaw + self.rotation)
    }

    pub fn apply_rect(&self, rect: &OrientedRect) -> OrientedRect {
        OrientedRect {
            center: self.apply_point(rect.center),
            yaw: normalize_angle(rect.yaw + self.rotation),
            ..*rect
        }
    }

    pub fn inverse(&self) -> WorldMapping {
        WorldMapping {
            rotation: normalize_angle(-self.rotation),
            translation: (-self.translation).rotated(-self.rotation),
        }
    }

    pub fn inverse_point(&self, p: Vec2) -> Vec2 {
        (p - self.translation).rotated(-self.rotation)
    }

    /// Post-composes a rotation of the virtual world about `pivot`.
    pub fn rotated_about(&self, pivot: Vec2, angle: f64) -> WorldMapping {
        WorldMapping {
            rotation: normalize_angle(self.rotation + angle),
            translation: self.translation.rotated_about(pivot, angle),
        }
    }

    /// Post-composes a shift of the virtual world.
    pub fn translated(&self, offset: Vec2) -> WorldMapping {
        WorldMapping {
            rotation: self.rotation,
            translation: self.translation + offset,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Vec2, b: Vec2) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn aligning_maps_pose_exactly_enough() {
        let phys = Pose2::new(Vec2::new(0.0, -0.75), PI / 2.0);
        let virt = Pose2::new(Vec2::new(120.0, 80.0), -2.0);
        let m = WorldMapping::aligning(phys, virt);
        let out = m.apply_pose(phys);
        assert!(close(out.position, virt.position));
        assert!((normalize_angle(out.yaw - virt.yaw)).abs() < 1e-12);
    }

    #[test]
    fn inverse_round_trips() {
        let m = WorldMapping::new(0.7, Vec2::new(3.0, -4.0));
        let p = Vec2::new(1.25, -2.0);
        assert!(close(m.inverse_point(m.apply_point(p)), p));
        assert!(close(m.inverse().apply_point(m.apply_point(p)), p));
    }

    #[test]
    fn rotation_about_pivot_keeps_pivot() {
        let m = WorldMapping::new(0.2, Vec2::new(5.0, 5.0));
        let user_phys = Vec2::new(0.3, 0.4);
        let pivot = m.apply_point(user_phys);
        let r = m.rotated_about(pivot, 0.5);
        assert!(close(r.apply_point(user_phys), pivot));
        let desk_phys = Vec2::new(0.3, 1.4);
        let before = m.apply_point(desk_phys);
        let after = r.apply_point(desk_phys);
        assert!(close(after, before.rotated_about(pivot, 0.5)));
    }
}
