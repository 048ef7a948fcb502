//! Goal-directed effort modulation.
//!
//! Each engageable entity turns its active goal and its subjective view into
//! an [`EffortPlan`] for the next tick: which channels to use, how hard, in
//! which direction, and whether to move. Plans are applied together at the
//! tick boundary by [`apply_plans`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Snapshot;
use crate::group::{classify_position, FFormation, Region};
use crate::model::{
    angle_diff, normalize_angle, Channel, ChannelSetting, Entity, EntityId, Point, RelationState,
    World,
};
use crate::perception::{competitor_ei, unit_ei, RequiredEffort, SubjectiveView};

/// Channels in order of social intrusiveness.
pub const LADDER: [Channel; 5] = [
    Channel::Body,
    Channel::Gaze,
    Channel::Gesture,
    Channel::Talking,
    Channel::Touch,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalKind {
    Engage { target: EntityId },
    Disengage { target: EntityId },
    AvoidFocus,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub kind: GoalKind,
    #[serde(default)]
    pub priority: i32,
    /// Upper multiplier on the required effort (κ).
    #[serde(default = "default_politeness_bound")]
    pub politeness_bound: f64,
}

fn default_politeness_bound() -> f64 {
    2.0
}

impl Goal {
    pub fn idle() -> Self {
        Self::new(GoalKind::Idle)
    }

    pub fn new(kind: GoalKind) -> Self {
        Self {
            kind,
            priority: 0,
            politeness_bound: default_politeness_bound(),
        }
    }

    pub fn engage(target: u32) -> Self {
        Self::new(GoalKind::Engage {
            target: EntityId(target),
        })
    }

    pub fn target(&self) -> Option<EntityId> {
        match self.kind {
            GoalKind::Engage { target } | GoalKind::Disengage { target } => Some(target),
            _ => None,
        }
    }
}

/// Highest priority wins; among equals the first declared.
pub fn select_goal(goals: &[Goal]) -> Goal {
    let mut best: Option<&Goal> = None;
    for g in goals {
        if best.map(|b| g.priority > b.priority).unwrap_or(true) {
            best = Some(g);
        }
    }
    best.copied().unwrap_or_else(Goal::idle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyParams {
    /// Walking speed, meters per tick.
    pub speed: f64,
    /// Preferred distance to a partner after alignment repair.
    pub interaction_distance: f64,
    /// Extra effort above the requirement while holding an engagement.
    pub maintenance_headroom: f64,
    /// Largest total magnitude an entity will spend before moving instead.
    pub max_magnitude: f64,
    /// Body magnitude an entity trying to go unnoticed keeps.
    pub min_presence: f64,
    /// Idle entities point their gaze at whatever they focus on.
    pub reveal_focus: bool,
    pub arrival_tolerance: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            speed: 0.5,
            interaction_distance: 1.2,
            maintenance_headroom: 0.1,
            max_magnitude: 10.0,
            min_presence: 0.1,
            reveal_focus: true,
            arrival_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    /// Heading after the move.
    pub heading: f64,
    /// Meters per tick; 0 turns in place.
    pub speed: f64,
    /// Destination; the step never overshoots it.
    pub waypoint: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortPlan {
    pub entity: EntityId,
    /// Replacement settings for the listed channels; others are kept.
    pub settings: BTreeMap<Channel, ChannelSetting>,
    pub movement: Option<Movement>,
    /// Required effort the plan was sized against, when finite.
    pub required_effort: Option<f64>,
    /// Total magnitude the plan spends on scalable channels toward its target.
    pub planned_effort: f64,
    pub politeness_bound: f64,
}

impl EffortPlan {
    fn hold(entity: &Entity) -> Self {
        Self {
            entity: entity.id,
            settings: BTreeMap::new(),
            movement: None,
            required_effort: None,
            planned_effort: 0.0,
            politeness_bound: entity.goal.politeness_bound,
        }
    }

    /// Whether the plan respects `used ≤ κ·required` (vacuous when the
    /// requirement is not finite).
    pub fn is_polite(&self) -> bool {
        match self.required_effort {
            Some(r) => self.planned_effort <= self.politeness_bound * r * (1.0 + 1e-12) + 1e-15,
            None => true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("{entity} pursues a goal toward missing entity {target}")]
    DanglingGoal { entity: EntityId, target: EntityId },
    #[error("{0} is not engageable and cannot plan")]
    NotEngageable(EntityId),
}

/// Plans the next tick's effort for `entity` from its goal and view.
/// `formations` are the F-formations currently known to the planner.
pub fn plan_effort(
    entity: &Entity,
    view: &SubjectiveView,
    snap: &Snapshot<'_>,
    formations: &[FFormation],
) -> Result<EffortPlan, StrategyError> {
    if !entity.engageable {
        return Err(StrategyError::NotEngageable(entity.id));
    }
    match entity.goal.kind {
        GoalKind::Idle => Ok(plan_idle(entity, view, &snap.params.strategy)),
        GoalKind::Engage { target } => {
            let t = snap.world.get(target).ok_or(StrategyError::DanglingGoal {
                entity: entity.id,
                target,
            })?;
            Ok(plan_engage(entity, t, view, snap))
        }
        GoalKind::Disengage { target } => {
            let t = snap.world.get(target).ok_or(StrategyError::DanglingGoal {
                entity: entity.id,
                target,
            })?;
            Ok(plan_disengage(entity, t, snap))
        }
        GoalKind::AvoidFocus => Ok(plan_avoid(
            entity,
            snap.world,
            &snap.params.strategy,
            formations,
        )),
    }
}

fn plan_idle(entity: &Entity, view: &SubjectiveView, params: &StrategyParams) -> EffortPlan {
    let mut plan = EffortPlan::hold(entity);
    if params.reveal_focus {
        if let Some(gaze) = entity.setting(Channel::Gaze) {
            let focus = view
                .estimated_focus
                .get(&entity.id)
                .map(|e| e.target)
                .unwrap_or(entity.id);
            let target = (focus != entity.id).then_some(focus);
            if gaze.target != target {
                plan.settings.insert(
                    Channel::Gaze,
                    ChannelSetting::new(gaze.magnitude, gaze.contribution, target),
                );
            }
        }
    }
    plan
}

fn contribution_of(entity: &Entity, channel: Channel) -> f64 {
    entity
        .setting(channel)
        .map(|s| s.contribution)
        .filter(|&c| c > 0.0)
        .unwrap_or(1.0)
}

/// Pursuit always includes Body and Gaze, so the sought partner can read
/// where the effort is going.
const OPENING_RUNGS: usize = 2;

/// Equal-magnitude settings over the first `len` ladder channels, directed at `target`.
fn ladder_settings(
    entity: &Entity,
    target: EntityId,
    len: usize,
    per_channel: f64,
) -> BTreeMap<Channel, ChannelSetting> {
    LADDER[..len]
        .iter()
        .map(|&c| {
            let t = c.is_directed().then_some(target);
            (
                c,
                ChannelSetting::new(per_channel, contribution_of(entity, c), t),
            )
        })
        .collect()
}

fn direction(from: Point, to: Point, fallback: f64) -> f64 {
    let d = to - from;
    if d.norm() == 0.0 {
        fallback
    } else {
        normalize_angle(d.angle())
    }
}

/// Like the required effort, but without credit for derived channels:
/// footsteps and bumps of this tick are gone once the plan takes effect.
fn planning_requirement(
    snap: &Snapshot<'_>,
    entity: &Entity,
    target: &Entity,
    settings: &BTreeMap<Channel, ChannelSetting>,
) -> RequiredEffort {
    let need = competitor_ei(snap, entity.id, target.id) + snap.params.perception.epsilon;
    let u = unit_ei(snap, entity, target, settings);
    if u > 0.0 {
        RequiredEffort::Reachable(need / u)
    } else {
        RequiredEffort::CannotAttract
    }
}

fn plan_engage(
    entity: &Entity,
    target: &Entity,
    view: &SubjectiveView,
    snap: &Snapshot<'_>,
) -> EffortPlan {
    let sp = &snap.params.strategy;
    let state = view
        .state(entity.id, target.id)
        .unwrap_or(RelationState::Passive);
    let headroom = if state == RelationState::Engaged {
        sp.maintenance_headroom
    } else {
        snap.params.perception.epsilon
    };
    let kappa = entity.goal.politeness_bound;

    let mut chosen: Option<(usize, f64)> = None;
    let mut fallback: Option<(usize, f64)> = None;
    for len in OPENING_RUNGS..=LADDER.len() {
        let settings = ladder_settings(entity, target.id, len, 1.0);
        if let RequiredEffort::Reachable(r) = planning_requirement(snap, entity, target, &settings)
        {
            if fallback.is_none() {
                fallback = Some((len, r));
            }
            if r * (1.0 + headroom) <= sp.max_magnitude {
                chosen = Some((len, r));
                break;
            }
        }
    }

    let mut plan = EffortPlan::hold(entity);
    let (len, total, required, repair) = match (chosen, fallback) {
        (Some((len, r)), _) => (len, (r * (1.0 + headroom)).min(kappa * r), Some(r), false),
        (None, Some((len, r))) => (
            len,
            (r * (1.0 + headroom)).min(kappa * r).min(sp.max_magnitude),
            Some(r),
            true,
        ),
        (None, None) => (LADDER.len(), LADDER.len() as f64, None, true),
    };
    let per_channel = total / len as f64;
    plan.settings = ladder_settings(entity, target.id, len, per_channel);
    for &c in &LADDER[len..] {
        if let Some(s) = entity.setting(c) {
            plan.settings
                .insert(c, ChannelSetting::new(0.0, s.contribution, s.target));
        }
    }
    plan.required_effort = required;
    plan.planned_effort = total;

    let me = entity.pose.position;
    let face_target = direction(me, target.pose.position, entity.pose.heading);
    plan.movement = if repair {
        let waypoint = snap
            .world
            .environment
            .bounds
            .clamp(repair_point(entity, target, sp));
        if me.distance(waypoint) <= sp.arrival_tolerance {
            Some(Movement {
                heading: face_target,
                speed: 0.0,
                waypoint: None,
            })
        } else {
            Some(Movement {
                heading: direction(me, waypoint, entity.pose.heading),
                speed: sp.speed,
                waypoint: Some(waypoint),
            })
        }
    } else if angle_diff(face_target, entity.pose.heading) > 1e-9 {
        Some(Movement {
            heading: face_target,
            speed: 0.0,
            waypoint: None,
        })
    } else {
        None
    };
    plan
}

/// Nearest point at interaction distance inside the target's field of view.
pub fn repair_point(entity: &Entity, target: &Entity, params: &StrategyParams) -> Point {
    let cone = 0.8 * target.fov_half_angle;
    let samples = 32;
    let mut best =
        target.pose.position + Point::from_polar(params.interaction_distance, target.pose.heading);
    let mut best_d = best.distance(entity.pose.position);
    for i in 0..=samples {
        let phi = target.pose.heading - cone + 2.0 * cone * i as f64 / samples as f64;
        let p = target.pose.position + Point::from_polar(params.interaction_distance, phi);
        let d = p.distance(entity.pose.position);
        if d < best_d - 1e-12 {
            best = p;
            best_d = d;
        }
    }
    best
}

fn plan_disengage(entity: &Entity, target: &Entity, snap: &Snapshot<'_>) -> EffortPlan {
    let mut plan = EffortPlan::hold(entity);
    for (&c, s) in &entity.channel_settings {
        if c.is_directed() && s.target == Some(target.id) {
            plan.settings
                .insert(c, ChannelSetting::new(0.0, s.contribution, Some(target.id)));
        }
    }
    let me = entity.pose.position;
    let toward_target = direction(me, target.pose.position, entity.pose.heading);
    // look at the nearest entity on the far side from the former partner
    let elsewhere = snap
        .world
        .entities()
        .iter()
        .filter(|o| o.id != entity.id && o.id != target.id)
        .filter(|o| {
            let d = o.pose.position - me;
            d.norm() > 0.0 && angle_diff(d.angle(), toward_target) > PI / 2.0
        })
        .min_by(|a, b| {
            me.distance(a.pose.position)
                .total_cmp(&me.distance(b.pose.position))
                .then(a.id.cmp(&b.id))
        });
    let gaze = entity.setting(Channel::Gaze).copied();
    let heading = match elsewhere {
        Some(o) => {
            if let Some(g) = gaze {
                plan.settings.insert(
                    Channel::Gaze,
                    ChannelSetting::new(g.magnitude, g.contribution, Some(o.id)),
                );
            }
            direction(me, o.pose.position, entity.pose.heading)
        }
        None => {
            if let Some(g) = gaze {
                plan.settings.insert(
                    Channel::Gaze,
                    ChannelSetting::new(g.magnitude, g.contribution, None),
                );
            }
            normalize_angle(toward_target + PI)
        }
    };
    plan.movement = Some(Movement {
        heading,
        speed: 0.0,
        waypoint: None,
    });
    plan
}

fn in_inner_space(p: Point, formations: &[FFormation]) -> bool {
    formations
        .iter()
        .any(|f| matches!(classify_position(p, f), Region::O | Region::P))
}

fn plan_avoid(
    entity: &Entity,
    world: &World,
    params: &StrategyParams,
    formations: &[FFormation],
) -> EffortPlan {
    let mut plan = EffortPlan::hold(entity);
    for (&c, s) in &entity.channel_settings {
        if c.is_derived() {
            continue;
        }
        let m = if c == Channel::Body {
            s.magnitude.min(params.min_presence)
        } else {
            0.0
        };
        if m != s.magnitude {
            plan.settings
                .insert(c, ChannelSetting::new(m, s.contribution, s.target));
        }
    }

    let me = entity.pose.position;
    let nearest = formations
        .iter()
        .filter(|f| classify_position(me, f) != Region::Outside)
        .min_by(|a, b| me.distance(a.o_center).total_cmp(&me.distance(b.o_center)));
    let Some(f) = nearest else {
        return plan;
    };

    let away = direction(f.o_center, me, entity.pose.heading);
    let clearance = f.r_outer_radius + entity.pose.body_radius + 0.05;
    let samples = 24;
    let mut candidates: Vec<Point> = (0..samples)
        .map(|i| {
            // alternate around the away direction: 0, +1, -1, +2, ...
            let k = ((i + 1) / 2) as f64 * if i % 2 == 1 { 1.0 } else { -1.0 };
            let phi = away + k * 2.0 * PI / samples as f64;
            world
                .environment
                .bounds
                .clamp(f.o_center + Point::from_polar(clearance, phi))
        })
        .collect();
    candidates.sort_by(|a, b| me.distance(*a).total_cmp(&me.distance(*b)));
    if let Some(&waypoint) = candidates.iter().find(|p| !in_inner_space(**p, formations)) {
        plan.movement = Some(Movement {
            heading: direction(me, waypoint, entity.pose.heading),
            speed: params.speed,
            waypoint: Some(waypoint),
        });
    }
    plan
}

/// Next-tick world: plans replace channel settings and move entities.
/// Entities without a plan keep their settings and stand still; objects
/// ignore plans.
pub fn apply_plans(world: &World, plans: &[EffortPlan]) -> World {
    let mut next = world.clone();
    next.tick = world.tick + 1;
    let bounds = next.environment.bounds;
    for e in next.entities_mut() {
        e.last_displacement = 0.0;
    }
    for plan in plans {
        let Some(e) = next.get_mut(plan.entity) else {
            continue;
        };
        if !e.engageable {
            continue;
        }
        for (&c, &s) in &plan.settings {
            e.channel_settings.insert(c, s);
        }
        if let Some(mv) = plan.movement {
            let from = e.pose.position;
            let step = match mv.waypoint {
                Some(w) => {
                    let d = w - from;
                    let dist = d.norm();
                    if dist <= mv.speed || dist == 0.0 {
                        d
                    } else {
                        d * (mv.speed / dist)
                    }
                }
                None => Point::from_polar(mv.speed, mv.heading),
            };
            let to = bounds.clamp(from + step);
            e.pose.position = to;
            e.pose.heading = normalize_angle(mv.heading);
            e.last_displacement = from.distance(to);
        }
    }
    next
}
