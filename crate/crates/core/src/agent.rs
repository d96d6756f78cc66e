//! Scripted trials: travel by teleport, survey on foot, point back.
//!
//! The agent is a stylized user. It teleports toward the target tree in
//! hops, walks one circuit around the tree inside the tracking space and
//! returns to the desk, then points at the previous target. Strategies hook
//! in at the teleport preview (ATR) or on every survey frame (RDW). Every
//! change to the world mapping is logged so a trace replays to the same
//! mapping bit for bit.

use std::f64::consts::{FRAC_PI_3, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{is_occluded, normalize_angle, rect_in_fov, Circle, FovWedge, OrientedRect, Pose2, Vec2};
pub use crate::mapping::WorldMapping;
use crate::metrics::{PointingSample, TrialOutcome};
use crate::redirect::{
    self, GainConfig, RedirectDecision, RedirectError, RedirectState, UserKinematics, WorldAdjustment,
};
use crate::resolver::{ResolutionConstraints, RotationSign};
use crate::rng::{substream, Stream};
use crate::scenario::{Scene, WorkspaceLayout};
use crate::teleport::{commit_teleport, make_preview, TeleportError, TeleportMachine, TeleportRequest, TeleportStage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Teleport(#[from] TeleportError),
    #[error(transparent)]
    Redirect(#[from] RedirectError),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<AgentError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Rdw,
    Atr,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::Rdw => "rdw",
            Strategy::Atr => "atr",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Strategy::None),
            "rdw" => Ok(Strategy::Rdw),
            "atr" => Ok(Strategy::Atr),
            other => Err(format!("unknown strategy `{other}` (expected none, rdw, atr)")),
        }
    }
}

/// Where the agent looks while surveying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeMode {
    /// Look where you walk.
    Path,
    /// Keep staring at the desk (test override).
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Frame period, seconds.
    pub dt: f64,
    pub walk_speed: f64,
    /// Radians per second.
    pub turn_rate: f64,
    pub orbit_clearance: f64,
    /// Circuits walked around the trunk.
    pub survey_laps: f64,
    /// Radians.
    pub fov_half_angle: f64,
    pub fov_range: f64,
    /// Degrees.
    pub pointing_noise_sd: f64,
    pub interaction_distance: f64,
    pub teleport_hop_min: f64,
    pub teleport_hop_max: f64,
    /// Gap between the final landing point and the target trunk.
    pub arrival_standoff_min: f64,
    pub arrival_standoff_max: f64,
    /// Seconds spent aiming each teleport.
    pub aim_time: f64,
    pub pointing_time: f64,
    pub gaze: GazeMode,
    /// Let the agent see the desk in the preview and re-aim the final hop
    /// when it would land occluded.
    pub show_desk_in_preview: bool,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            dt: 1.0 / 90.0,
            walk_speed: 1.0,
            turn_rate: PI / 2.0,
            orbit_clearance: 0.5,
            survey_laps: 1.0,
            fov_half_angle: 57.5f64.to_radians(),
            fov_range: 20.0,
            pointing_noise_sd: 0.0,
            interaction_distance: 2.0,
            teleport_hop_min: 4.0,
            teleport_hop_max: 8.0,
            arrival_standoff_min: 0.2,
            arrival_standoff_max: 1.5,
            aim_time: 3.0,
            pointing_time: 1.0,
            gaze: GazeMode::Path,
            show_desk_in_preview: false,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.walk_speed > 0.0 && self.turn_rate > 0.0) {
            return bad("speeds must be positive");
        }
        if !(self.pointing_noise_sd >= 0.0) {
            return bad("pointing noise must be non-negative");
        }
        if !(self.orbit_clearance >= 0.0) {
            return bad("orbit clearance must be non-negative");
        }
        if !(self.survey_laps > 0.0 && self.survey_laps.is_finite()) {
            return bad("survey laps must be positive");
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < PI && self.fov_range > 0.0) {
            return bad("field of view must have half angle in (0, π) and positive range");
        }
        if !(self.teleport_hop_min > 0.0 && self.teleport_hop_min <= self.teleport_hop_max) {
            return bad("teleport hop range must satisfy 0 < min <= max");
        }
        if !(self.arrival_standoff_min >= 0.0
            && self.arrival_standoff_min <= self.arrival_standoff_max
            && self.arrival_standoff_max <= self.interaction_distance)
        {
            return bad("arrival standoff must satisfy 0 <= min <= max <= interaction_distance");
        }
        if !(self.aim_time >= 0.0 && self.pointing_time >= 0.0) {
            return bad("phase times must be non-negative");
        }
        Ok(())
    }

    fn frames(&self, seconds: f64) -> u64 {
        ((seconds / self.dt).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    Travel,
    Survey,
    Pointing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub time: f64,
    pub phase: TrialPhase,
    pub physical: Pose2,
    #[serde(rename = "virtual")]
    pub virtual_pose: Pose2,
    pub desk: OrientedRect,
    pub desk_in_fov: bool,
    pub occluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportEvent {
    pub frame: u64,
    pub time: f64,
    pub hop: usize,
    pub final_hop: bool,
    pub request: TeleportRequest,
    /// Stage entry times, in order.
    pub stages: Vec<(TeleportStage, f64)>,
    pub naive_occluded: bool,
    pub resolved: bool,
    pub adjustment_rotation: f64,
    pub adjustment_translation: f64,
    pub occluded_after_commit: bool,
    /// World mapping in effect after the commit.
    pub mapping: WorldMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedirectEvent {
    pub frame: u64,
    pub time: f64,
    /// User's virtual position the rotation turns about.
    pub pivot: Vec2,
    pub rotation: f64,
    pub translation: Vec2,
    /// Frame yaw change of the user, radians.
    pub yaw_change: f64,
    /// Frame walking distance, meters.
    pub walked: f64,
    pub locked_direction: Option<RotationSign>,
    pub target_rotation: f64,
    pub target_translation: f64,
}

impl RedirectEvent {
    pub fn adjustment(&self) -> WorldAdjustment {
        WorldAdjustment {
            rotation_about_user: self.rotation,
            translation: self.translation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEvent {
    pub frame: u64,
    pub time: f64,
    pub phase: TrialPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Frame(FrameRecord),
    Phase(PhaseEvent),
    Teleport(TeleportEvent),
    Redirect(RedirectEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub target_tree: usize,
    pub strategy: Strategy,
    pub start_mapping: WorldMapping,
    pub end_mapping: WorldMapping,
    pub records: Vec<TraceRecord>,
    pub travel_time: f64,
    pub survey_time: f64,
    pub pointing: Option<PointingSample>,
    /// Sum of every strategy rotation applied this trial, degrees.
    pub applied_rotation_total: f64,
    pub teleport_rotation_total: f64,
    pub redirect_rotation_total: f64,
    pub occluded_at_travel_end: bool,
    pub occluded_after_commit: bool,
    pub occluded_at_survey_end: bool,
}

impl TrialTrace {
    pub fn frames(&self) -> impl Iterator<Item = &FrameRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Frame(f) => Some(f),
            _ => None,
        })
    }

    pub fn teleports(&self) -> impl Iterator<Item = &TeleportEvent> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Teleport(t) => Some(t),
            _ => None,
        })
    }

    pub fn redirects(&self) -> impl Iterator<Item = &RedirectEvent> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Redirect(e) => Some(e),
            _ => None,
        })
    }

    pub fn outcome(&self) -> TrialOutcome {
        TrialOutcome {
            occluded_at_travel_end: self.occluded_at_travel_end,
            occluded_after_commit: self.occluded_after_commit,
            occluded_at_survey_end: self.occluded_at_survey_end,
        }
    }

    /// Re-applies the logged mapping changes to the starting mapping.
    pub fn replay(&self) -> WorldMapping {
        replay_records(self.start_mapping, &self.records)
    }

    /// Signed pointing error in degrees, if this trial pointed.
    pub fn pointing_error(&self) -> Option<f64> {
        self.pointing.map(|p| p.signed_error())
    }
}

/// Applies the mapping-changing records in order.
pub fn replay_records<'a>(start: WorldMapping, records: impl IntoIterator<Item = &'a TraceRecord>) -> WorldMapping {
    records.into_iter().fold(start, |m, r| match r {
        TraceRecord::Teleport(t) => t.mapping,
        TraceRecord::Redirect(e) => e.adjustment().apply_to(&m, e.pivot),
        _ => m,
    })
}

/// State carried from one trial to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub mapping: WorldMapping,
    pub redirect: RedirectState,
    pub user_physical: Pose2,
    /// Where the previous travel plan ended; the next plan starts here.
    pub planned_position: Vec2,
}

impl SimState {
    /// User at the desk, workspace at the scene start facing the first
    /// target.
    pub fn initial(scene: &Scene, layout: &WorkspaceLayout, constraints: &ResolutionConstraints) -> Self {
        let start = scene.start();
        let facing = scene.target_tree(0).map(|t| (t.center - start).angle()).unwrap_or(0.0);
        SimState {
            mapping: WorldMapping::aligning(layout.home, Pose2::new(start, facing)),
            redirect: RedirectState::new(constraints),
            user_physical: layout.home,
            planned_position: start,
        }
    }
}

/// Everything a trial reads but does not change.
#[derive(Debug, Clone, Copy)]
pub struct TrialContext<'a> {
    pub scene: &'a Scene,
    pub strategy: Strategy,
    pub layout: &'a WorkspaceLayout,
    pub agent: &'a AgentConfig,
    pub gains: &'a GainConfig,
    pub constraints: &'a ResolutionConstraints,
}

pub struct TrialRngs {
    pub agent: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl TrialRngs {
    pub fn from_seed(seed: u64) -> Self {
        TrialRngs {
            agent: substream(seed, Stream::Agent),
            noise: substream(seed, Stream::Noise),
        }
    }
}

/// Trees close enough to matter for a trial around `center`.
fn nearby(trees: &[Circle], center: Vec2, radius: f64) -> Vec<Circle> {
    trees
        .iter()
        .copied()
        .filter(|t| t.center.distance(center) <= radius + t.radius)
        .collect()
}

/// Any tree farther than this from the target trunk cannot reach the desk
/// during that trial's survey.
const SURVEY_NEIGHBORHOOD: f64 = 40.0;

/// Survey frames beyond this are treated as a stuck agent.
const MAX_SURVEY_SECONDS: f64 = 600.0;

struct Recorder<'a> {
    ctx: &'a TrialContext<'a>,
    records: Vec<TraceRecord>,
    frame: u64,
    desk_physical: OrientedRect,
}

impl<'a> Recorder<'a> {
    fn time(&self) -> f64 {
        self.frame as f64 * self.ctx.agent.dt
    }

    fn fov(&self, virtual_pose: Pose2) -> FovWedge {
        FovWedge {
            apex: virtual_pose.position,
            heading: virtual_pose.yaw,
            half_angle: self.ctx.agent.fov_half_angle,
            range: self.ctx.agent.fov_range,
        }
    }

    /// Logs a frame and returns its virtual desk footprint.
    fn push_frame(
        &mut self,
        phase: TrialPhase,
        physical: Pose2,
        mapping: &WorldMapping,
        trees: &[Circle],
    ) -> FrameRecord {
        let virtual_pose = mapping.apply_pose(physical);
        let desk = mapping.apply_rect(&self.desk_physical);
        let rec = FrameRecord {
            frame: self.frame,
            time: self.time(),
            phase,
            physical,
            virtual_pose,
            desk,
            desk_in_fov: rect_in_fov(&self.fov(virtual_pose), &desk),
            occluded: is_occluded(&desk, trees),
        };
        self.records.push(TraceRecord::Frame(rec));
        rec
    }

    fn next_frame(&mut self) {
        self.frame += 1;
    }

    fn phase(&mut self, phase: TrialPhase) {
        let time = self.time();
        self.records.push(TraceRecord::Phase(PhaseEvent {
            frame: self.frame,
            time,
            phase,
        }));
    }
}

/// Planned landing points from `from` toward `tree`, ending `standoff`
/// meters short of the trunk.
fn plan_hops(
    from: Vec2,
    tree: &Circle,
    standoff: f64,
    cfg: &AgentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec2>, AgentError> {
    let dir = (tree.center - from)
        .normalized()
        .ok_or_else(|| AgentError::Scenario("travel start coincides with the target tree".into()))?;
    let arrival = tree.center - dir * (tree.radius + standoff);
    let mut hops = Vec::new();
    let mut cur = from;
    loop {
        let hop = rng.random_range(cfg.teleport_hop_min..=cfg.teleport_hop_max);
        let remaining = arrival.distance(cur);
        if remaining <= hop {
            hops.push(arrival);
            return Ok(hops);
        }
        cur += dir * hop;
        hops.push(cur);
    }
}

fn turn_toward(yaw: f64, goal: f64, max_step: f64) -> f64 {
    let err = normalize_angle(goal - yaw);
    if err.abs() <= max_step {
        goal
    } else {
        yaw + max_step * err.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SurveyLeg {
    Approach,
    Orbit { start_angle: f64, swept: f64 },
    Return,
    Face,
}

/// One trial: travel to `scene.targets[target_position]`, survey it, then
/// point at the previous target.
pub fn run_trial(
    ctx: &TrialContext,
    trial: usize,
    target_position: usize,
    state: SimState,
    rngs: &mut TrialRngs,
) -> Result<(TrialTrace, SimState), AgentError> {
    let cfg = ctx.agent;
    cfg.validate()?;
    ctx.layout
        .validate()
        .map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
    let scene = ctx.scene;
    let tree = *scene
        .target_tree(target_position)
        .ok_or_else(|| AgentError::Scenario(format!("target position {target_position} does not exist")))?;
    let target_tree = scene.targets[target_position];
    let desk_physical = ctx.layout.desk_physical();
    let local_trees = nearby(&scene.trees, tree.center, SURVEY_NEIGHBORHOOD);

    let mut rec = Recorder {
        ctx,
        records: Vec::new(),
        frame: 0,
        desk_physical,
    };
    let mut mapping = state.mapping;
    let mut redirect_state = state.redirect;
    let mut user = state.user_physical;
    let start_mapping = mapping;

    // Travel.
    rec.phase(TrialPhase::Travel);
    let standoff = rngs
        .agent
        .random_range(cfg.arrival_standoff_min..=cfg.arrival_standoff_max);
    let hops = plan_hops(state.planned_position, &tree, standoff, cfg, &mut rngs.agent)?;
    let aim_frames = cfg.frames(cfg.aim_time);
    let mut teleport_rotation_total = 0.0;
    let mut final_flags = (false, false);
    let mut travel_frames = 0u64;
    for (hop, &landing) in hops.iter().enumerate() {
        for _ in 0..aim_frames {
            rec.push_frame(TrialPhase::Travel, user, &mapping, &scene.trees);
            rec.next_frame();
            travel_frames += 1;
        }
        let final_hop = hop + 1 == hops.len();
        let mut request = TeleportRequest {
            target: landing,
            facing: (tree.center - landing).angle(),
        };
        if !scene.bounds.contains(landing) {
            return Err(AgentError::Scenario(format!(
                "landing point ({:.2}, {:.2}) outside the scene",
                landing.x, landing.y
            )));
        }
        let time = rec.time();
        let mut machine = TeleportMachine::default();
        let mut stages = Vec::with_capacity(5);
        machine.advance(TeleportStage::TargetSpecification)?;
        stages.push((TeleportStage::TargetSpecification, time));
        let atr = ctx.strategy == Strategy::Atr;
        let mut preview = make_preview(
            &request,
            ctx.layout,
            user,
            &scene.bounds,
            &scene.trees,
            atr,
            ctx.constraints,
        )?;
        if final_hop && cfg.show_desk_in_preview && preview.naive_occluded {
            // Re-aim along the approach line while the desk preview is blocked.
            let dir = (tree.center - landing).normalized().unwrap_or(Vec2::new(1.0, 0.0));
            for k in 1..=8 {
                let alt = tree.center - dir * (tree.radius + cfg.interaction_distance * k as f64 / 8.0);
                if !scene.bounds.contains(alt) {
                    continue;
                }
                let alt_req = TeleportRequest {
                    target: alt,
                    facing: (tree.center - alt).angle(),
                };
                let p = make_preview(
                    &alt_req,
                    ctx.layout,
                    user,
                    &scene.bounds,
                    &scene.trees,
                    atr,
                    ctx.constraints,
                )?;
                if !p.naive_occluded {
                    request = alt_req;
                    preview = p;
                    break;
                }
            }
        }
        machine.advance(TeleportStage::PreTravelInformation)?;
        stages.push((TeleportStage::PreTravelInformation, time));
        machine.advance(TeleportStage::Transition)?;
        stages.push((TeleportStage::Transition, time));
        let (m, r) = commit_teleport(&preview, ctx.layout, &redirect_state, ctx.constraints)?;
        mapping = m;
        redirect_state = r;
        machine.advance(TeleportStage::PostTravelFeedback)?;
        stages.push((TeleportStage::PostTravelFeedback, time));
        machine.advance(TeleportStage::Idle)?;
        stages.push((TeleportStage::Idle, time));

        let occluded_after_commit = is_occluded(&mapping.apply_rect(&desk_physical), &scene.trees);
        teleport_rotation_total += preview.adjustment_rotation.to_degrees();
        if final_hop {
            final_flags = (preview.naive_occluded, occluded_after_commit);
        }
        rec.records.push(TraceRecord::Teleport(TeleportEvent {
            frame: rec.frame,
            time,
            hop,
            final_hop,
            request,
            stages,
            naive_occluded: preview.naive_occluded,
            resolved: preview.resolved,
            adjustment_rotation: preview.adjustment_rotation,
            adjustment_translation: preview.adjustment_translation,
            occluded_after_commit,
            mapping,
        }));
    }
    let travel_time = travel_frames as f64 * cfg.dt;

    // Survey: approach the trunk, circle it while scanning, return to the desk.
    rec.phase(TrialPhase::Survey);
    let orbit_radius = tree.radius + cfg.orbit_clearance;
    let orbit_sign = if trial.is_multiple_of(2) { 1.0 } else { -1.0 };
    let orbit_total = TAU * cfg.survey_laps;
    let walk_step = cfg.walk_speed * cfg.dt;
    let turn_step = cfg.turn_rate * cfg.dt;
    let mut leg = SurveyLeg::Approach;
    let mut survey_frames = 0u64;
    let mut redirect_rotation_total = 0.0;
    let mut occluded_at_survey_end;
    let max_frames = (MAX_SURVEY_SECONDS / cfg.dt) as u64;
    loop {
        if survey_frames > max_frames {
            return Err(AgentError::Scenario("survey did not finish".into()));
        }
        let tree_phys = mapping.inverse_point(tree.center);
        let previous = user;

        let away = (user.position - tree_phys)
            .normalized()
            .unwrap_or(-ctx.layout.home.forward());
        let mut done_leg = false;
        match &mut leg {
            SurveyLeg::Approach | SurveyLeg::Return => {
                let goal = if leg == SurveyLeg::Approach {
                    ctx.layout.clamp_to_tracking(tree_phys + away * orbit_radius)
                } else {
                    ctx.layout.home.position
                };
                let to_goal = goal - user.position;
                let dist = to_goal.norm();
                if dist <= walk_step {
                    user.position = goal;
                    done_leg = true;
                } else {
                    let heading = to_goal.angle();
                    // Turn toward the goal before striding off.
                    if cfg.gaze == GazeMode::Desk || normalize_angle(heading - user.yaw).abs() <= FRAC_PI_3 {
                        user.position = ctx
                            .layout
                            .clamp_to_tracking(user.position + to_goal * (walk_step / dist));
                    }
                    user.yaw = normalize_angle(turn_toward(user.yaw, heading, turn_step));
                }
            }
            SurveyLeg::Orbit { start_angle, swept } => {
                *swept = (*swept + walk_step / orbit_radius).min(orbit_total);
                let a = *start_angle + orbit_sign * *swept;
                let goal = ctx
                    .layout
                    .clamp_to_tracking(tree_phys + Vec2::from_angle(a) * orbit_radius);
                let to_goal = goal - user.position;
                let dist = to_goal.norm();
                // Side-step along the circle, catching up when the goal jumps.
                let reach = 2.0 * walk_step;
                if dist <= reach {
                    user.position = goal;
                    done_leg = *swept >= orbit_total;
                } else {
                    user.position = ctx.layout.clamp_to_tracking(user.position + to_goal * (reach / dist));
                }
                if dist > 0.0 {
                    user.yaw = normalize_angle(turn_toward(user.yaw, to_goal.angle(), turn_step));
                }
            }
            SurveyLeg::Face => {
                user.yaw = normalize_angle(turn_toward(user.yaw, ctx.layout.home.yaw, turn_step));
                done_leg = user.yaw == ctx.layout.home.yaw || cfg.gaze == GazeMode::Desk;
            }
        }
        if cfg.gaze == GazeMode::Desk {
            if let Some(d) = (desk_physical.center - user.position).normalized() {
                user.yaw = d.angle();
            }
        }

        let frame = rec.push_frame(TrialPhase::Survey, user, &mapping, &local_trees);
        occluded_at_survey_end = frame.occluded;
        if ctx.strategy == Strategy::Rdw {
            // Motion measured physically; the mapping is rigid.
            let kin = UserKinematics {
                current: frame.virtual_pose,
                ..UserKinematics::between(previous, user)
            };
            let fov = rec.fov(frame.virtual_pose);
            let step = redirect::step(
                &redirect_state,
                &kin,
                &frame.desk,
                &local_trees,
                &fov,
                ctx.gains,
                ctx.constraints,
            );
            match step {
                Ok(s) => {
                    redirect_state = s.state;
                    if !s.adjustment.is_identity() {
                        let target = s.outcome.expect("applied steps carry an outcome");
                        mapping = s.adjustment.apply_to(&mapping, kin.current.position);
                        redirect_rotation_total += s.adjustment.rotation_about_user.to_degrees();
                        debug_assert_eq!(s.decision, RedirectDecision::Applied);
                        rec.records.push(TraceRecord::Redirect(RedirectEvent {
                            frame: rec.frame,
                            time: rec.time(),
                            pivot: kin.current.position,
                            rotation: s.adjustment.rotation_about_user,
                            translation: s.adjustment.translation,
                            yaw_change: kin.yaw_change,
                            walked: kin.walked,
                            locked_direction: s.state.locked_direction,
                            target_rotation: target.rotation_delta,
                            target_translation: target.translation_delta,
                        }));
                    }
                }
                // User exactly on the desk center: no direction to work with.
                Err(RedirectError::DegenerateGeometry) => {}
                Err(e) => return Err(e.into()),
            }
        }
        rec.next_frame();
        survey_frames += 1;

        if done_leg {
            leg = match leg {
                SurveyLeg::Approach => SurveyLeg::Orbit {
                    start_angle: (user.position - mapping.inverse_point(tree.center)).angle(),
                    swept: 0.0,
                },
                SurveyLeg::Orbit { .. } => SurveyLeg::Return,
                SurveyLeg::Return => SurveyLeg::Face,
                SurveyLeg::Face => break,
            };
        }
    }
    if ctx.strategy == Strategy::Rdw {
        // The last frame's adjustment lands after its flag was taken.
        occluded_at_survey_end = is_occluded(&mapping.apply_rect(&desk_physical), &local_trees);
    }
    let survey_time = survey_frames as f64 * cfg.dt;

    // Pointing, from the desk, at the previous target.
    rec.phase(TrialPhase::Pointing);
    for _ in 0..cfg.frames(cfg.pointing_time) {
        rec.push_frame(TrialPhase::Pointing, user, &mapping, &local_trees);
        rec.next_frame();
    }
    let pointing = match target_position.checked_sub(1).and_then(|p| scene.target_tree(p)) {
        Some(prev) => {
            let from = mapping.apply_point(user.position);
            let truth = (prev.center - from).angle();
            let noise = if cfg.pointing_noise_sd > 0.0 {
                Normal::new(0.0, cfg.pointing_noise_sd.to_radians())
                    .map_err(|e| AgentError::InvalidConfig(e.to_string()))?
                    .sample(&mut rngs.noise)
            } else {
                0.0
            };
            Some(PointingSample::new(truth + noise, truth))
        }
        None => None,
    };

    let planned_position = *hops.last().expect("at least one hop");
    let trace = TrialTrace {
        trial,
        target_tree,
        strategy: ctx.strategy,
        start_mapping,
        end_mapping: mapping,
        records: rec.records,
        travel_time,
        survey_time,
        pointing,
        applied_rotation_total: teleport_rotation_total + redirect_rotation_total,
        teleport_rotation_total,
        redirect_rotation_total,
        occluded_at_travel_end: final_flags.0,
        occluded_after_commit: final_flags.1,
        occluded_at_survey_end,
    };
    let next = SimState {
        mapping,
        redirect: redirect_state,
        user_physical: user,
        planned_position,
    };
    Ok((trace, next))
}

/// Runs `n_trials` consecutive trials, threading mapping and redirect
/// state from one to the next.
pub fn run_experiment(
    scene: &Scene,
    strategy: Strategy,
    n_trials: usize,
    layout: &WorkspaceLayout,
    agent: &AgentConfig,
    gains: &GainConfig,
    constraints: &ResolutionConstraints,
) -> Result<Vec<TrialTrace>, AgentError> {
    if n_trials > scene.targets.len() {
        return Err(AgentError::Scenario(format!(
            "{n_trials} trials requested but the scene has {} targets",
            scene.targets.len()
        )));
    }
    constraints
        .validate()
        .map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
    gains.validate().map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
    let ctx = TrialContext {
        scene,
        strategy,
        layout,
        agent,
        gains,
        constraints,
    };
    let mut rngs = TrialRngs::from_seed(agent.seed);
    let mut state = SimState::initial(scene, layout, constraints);
    let mut traces = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let (trace, next) = run_trial(&ctx, trial, trial, state, &mut rngs).map_err(|e| AgentError::Trial {
            trial,
            source: Box::new(e),
        })?;
        traces.push(trace);
        state = next;
    }
    Ok(traces)
}
