use std::f64::consts::PI;

use avocc_core::geometry::{rect_in_fov, Circle, FovWedge, OrientedRect, Pose2, Vec2};
use avocc_core::mapping::WorldMapping;
use avocc_core::redirect::{advance, step, GainConfig, RedirectState, UserKinematics};
use avocc_core::resolver::{ResolutionConstraints, RotationSign};
use proptest::prelude::*;

fn caps_hold(g: &GainConfig, k: &UserKinematics, rotation: f64, translation: Vec2) -> bool {
    let rot_cap = g.rotation_gain * k.yaw_change + g.curvature_gain.to_radians() * k.walked;
    let trans_cap = g.translation_gain * k.walked;
    rotation.abs() <= rot_cap && translation.norm() <= trans_cap
}

fn pose() -> impl Strategy<Value = Pose2> {
    (-3.0..3.0f64, -3.0..3.0f64, -PI..PI).prop_map(|(x, y, a)| Pose2::new(Vec2::new(x, y), a))
}

fn kinematics() -> impl Strategy<Value = UserKinematics> {
    (pose(), -0.05..0.05f64, -0.05..0.05f64, -0.2..0.2f64)
        .prop_map(|(p, dx, dy, da)| UserKinematics::between(p, Pose2::new(p.position + Vec2::new(dx, dy), p.yaw + da)))
}

fn state() -> impl Strategy<Value = RedirectState> {
    (prop::option::of(any::<bool>()), 0.0..(PI / 2.0), 0.0..1.0f64).prop_map(|(lock, rot, trans)| {
        let locked_direction = lock.map(|ccw| {
            if ccw {
                RotationSign::CounterClockwise
            } else {
                RotationSign::Clockwise
            }
        });
        RedirectState {
            locked_direction,
            remaining_rotation: rot * locked_direction.map_or(1.0, RotationSign::signum),
            remaining_translation: trans,
            active: true,
        }
    })
}

/// Walks a fixed physical path (a quarter arc of radius 2 m, then a
/// straight 3 m) with the desk behind a trunk, feeding every adjustment
/// back into the mapping. Returns the cumulative applied rotation.
fn walk(frames_per_meter: usize) -> f64 {
    let g = GainConfig::default();
    let c = ResolutionConstraints::default();
    let desk_phys = OrientedRect::new(Vec2::new(0.0, -1.5), 0.8, 0.4, 0.0).unwrap();
    let trees: Vec<Circle> = (0..7)
        .map(|k| Circle::new(Vec2::new(-0.9 + 0.4 * k as f64, -1.6), 0.35).unwrap())
        .collect();
    let path = |s: f64| -> Pose2 {
        // Arc length parameter s in [0, π + 3].
        if s <= PI {
            let a = s / 2.0;
            Pose2::new(Vec2::new(2.0 * a.sin(), 2.0 - 2.0 * a.cos()), a)
        } else {
            let end = Vec2::new(2.0, 2.0);
            Pose2::new(end + Vec2::new(0.0, s - PI), PI / 2.0)
        }
    };
    let length = PI + 3.0;
    let n = (length * frames_per_meter as f64).round() as usize;
    let mut mapping = WorldMapping::IDENTITY;
    let mut st = RedirectState::new(&c);
    let mut total = 0.0;
    for f in 1..=n {
        let prev = path(length * (f - 1) as f64 / n as f64);
        let cur = path(length * f as f64 / n as f64);
        let k = UserKinematics {
            current: mapping.apply_pose(cur),
            ..UserKinematics::between(prev, cur)
        };
        let desk = mapping.apply_rect(&desk_phys);
        let fov = FovWedge::new(k.current.position, k.current.yaw, 57.5f64.to_radians(), 20.0).unwrap();
        let out = step(&st, &k, &desk, &trees, &fov, &g, &c).unwrap();
        st = out.state;
        total += out.adjustment.rotation_about_user;
        mapping = out.adjustment.apply_to(&mapping, k.current.position);
    }
    total
}

#[test]
fn halving_the_frame_time_keeps_cumulative_rotation() {
    let coarse = walk(90);
    let fine = walk(180);
    assert!(coarse.abs() > 1e-3, "path must trigger redirection, got {coarse}");
    let rel = (coarse - fine).abs() / coarse.abs();
    assert!(rel < 1e-3, "coarse {coarse} fine {fine} rel {rel}");
}

proptest! {
    #[test]
    fn advance_respects_caps_lock_and_budget(s in state(), k in kinematics(), desk in (-5.0..5.0f64, -5.0..5.0f64)) {
        let g = GainConfig::default();
        let (next, adj) = advance(&s, &k, Vec2::new(desk.0, desk.1), &g);
        prop_assert!(caps_hold(&g, &k, adj.rotation_about_user, adj.translation));
        prop_assert!(adj.rotation_about_user.abs() <= s.remaining_rotation.abs());
        prop_assert!(adj.translation.norm() <= s.remaining_translation);
        match s.locked_direction {
            Some(sign) => prop_assert!(adj.rotation_about_user * sign.signum() >= 0.0),
            None => prop_assert_eq!(adj.rotation_about_user, 0.0),
        }
        prop_assert!(next.remaining_rotation.abs() <= s.remaining_rotation.abs());
        prop_assert!(next.remaining_translation >= 0.0);
        if let Some(sign) = next.locked_direction {
            prop_assert!(next.remaining_rotation * sign.signum() >= 0.0);
        }
    }

    #[test]
    fn step_gates_and_caps(
        k in kinematics(),
        desk in (-3.0..3.0f64, -3.0..3.0f64, -PI..PI),
        trees in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64, 0.1..0.6f64), 0..12),
        half_angle in 0.3..1.5f64,
    ) {
        let desk = OrientedRect::new(Vec2::new(desk.0, desk.1), 0.8, 0.4, desk.2).unwrap();
        prop_assume!(desk.center != k.current.position);
        let trees: Vec<Circle> = trees.iter().map(|t| Circle::new(Vec2::new(t.0, t.1), t.2).unwrap()).collect();
        let fov = FovWedge::new(k.current.position, k.current.yaw, half_angle, 20.0).unwrap();
        let c = ResolutionConstraints::default();
        let g = GainConfig::default();
        let out = step(&RedirectState::new(&c), &k, &desk, &trees, &fov, &g, &c).unwrap();
        if rect_in_fov(&fov, &desk) {
            prop_assert!(out.adjustment.is_identity());
        }
        prop_assert!(caps_hold(&g, &k, out.adjustment.rotation_about_user, out.adjustment.translation));
        let rem = out.state.remaining_rotation;
        prop_assert!(rem.abs() <= c.max_rotation);
        prop_assert!(out.state.remaining_translation <= c.max_translation);
    }

    #[test]
    fn standing_still_is_identity(s in state(), p in pose()) {
        let k = UserKinematics::between(p, p);
        let (_, adj) = advance(&s, &k, Vec2::new(10.0, 0.0), &GainConfig::default());
        prop_assert!(adj.is_identity());
    }
}
