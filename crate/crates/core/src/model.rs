//! Domain types shared by every stage of the loop: identifiers, planar
//! geometry, channels, emissions, relation states and the world container.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::{Goal, GoalKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A point (or displacement) in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (other - self).norm()
    }

    /// Direction angle of this vector, in `(-π, π]`.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Absolute difference between two headings, in `[0, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: points coincide at ({x}, {y})")]
    Coincident { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Point,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    pub body_radius: f64,
}

impl Pose {
    pub fn new(position: Point, heading: f64, body_radius: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
            body_radius,
        }
    }

    pub fn facing(&self) -> Point {
        Point::from_polar(1.0, self.heading)
    }
}

/// Angle between `pose`'s heading and the direction from its position to `target`.
pub fn angle_between(pose: &Pose, target: Point) -> Result<f64, GeometryError> {
    let delta = target - pose.position;
    if delta.x == 0.0 && delta.y == 0.0 {
        return Err(GeometryError::Coincident {
            x: target.x,
            y: target.y,
        });
    }
    Ok(angle_diff(delta.angle(), pose.heading))
}

/// The seven effort output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Walking,
    Body,
    Gaze,
    Touch,
    Gesture,
    Talking,
    Bumping,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Walking,
        Channel::Body,
        Channel::Gaze,
        Channel::Touch,
        Channel::Gesture,
        Channel::Talking,
        Channel::Bumping,
    ];

    /// Channels that point at a specific receiver.
    pub fn is_directed(self) -> bool {
        matches!(
            self,
            Channel::Gaze | Channel::Gesture | Channel::Talking | Channel::Touch
        )
    }

    /// Channels that require the sender to be inside the receiver's field of view.
    pub fn is_visual(self) -> bool {
        matches!(
            self,
            Channel::Body | Channel::Gaze | Channel::Gesture | Channel::Bumping
        )
    }

    pub fn is_audio(self) -> bool {
        matches!(self, Channel::Walking | Channel::Talking)
    }

    /// Channels that only reach receivers in physical contact.
    pub fn is_contact(self) -> bool {
        matches!(self, Channel::Touch | Channel::Bumping)
    }

    /// Walking and Bumping are produced by motion and overlap, never set directly.
    pub fn is_derived(self) -> bool {
        matches!(self, Channel::Walking | Channel::Bumping)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Walking => "walking",
            Channel::Body => "body",
            Channel::Gaze => "gaze",
            Channel::Touch => "touch",
            Channel::Gesture => "gesture",
            Channel::Talking => "talking",
            Channel::Bumping => "bumping",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What an entity broadcasts on one channel during one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortEmission {
    pub sender: EntityId,
    pub channel: Channel,
    pub magnitude: f64,
    pub contribution: f64,
    pub target: Option<EntityId>,
}

/// The sender-controlled part of an emission: magnitude, contribution and
/// (for directed channels) the receiver it is pointed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSetting {
    pub magnitude: f64,
    #[serde(default = "one")]
    pub contribution: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<EntityId>,
}

fn one() -> f64 {
    1.0
}

impl ChannelSetting {
    pub fn new(magnitude: f64, contribution: f64, target: Option<EntityId>) -> Self {
        Self {
            magnitude,
            contribution,
            target,
        }
    }

    /// A setting emits when it has positive magnitude and, for directed
    /// channels, a target.
    pub fn is_active(&self, channel: Channel) -> bool {
        self.magnitude > 0.0 && (!channel.is_directed() || self.target.is_some())
    }
}

/// Receiver-side scaling per channel. Channels without an entry weigh 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Preference {
    pub per_channel: BTreeMap<Channel, f64>,
}

impl Preference {
    pub fn get(&self, channel: Channel) -> f64 {
        self.per_channel.get(&channel).copied().unwrap_or(1.0)
    }

    pub fn uniform(value: f64) -> Self {
        Self {
            per_channel: Channel::ALL.iter().map(|&c| (c, value)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            min: Point::new(-10.0, -10.0),
            max: Point::new(10.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// Background noise per channel in `[0, 1]`; missing channels are silent.
    #[serde(default)]
    pub noise: BTreeMap<Channel, f64>,
    #[serde(default)]
    pub bounds: Bounds,
}

impl Environment {
    pub fn noise(&self, channel: Channel) -> f64 {
        self.noise.get(&channel).copied().unwrap_or(0.0)
    }
}

/// Relationship of one entity toward another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationState {
    Passive,
    Requested,
    Buildup,
    Engaged,
}

impl RelationState {
    pub const ALL: [RelationState; 4] = [
        RelationState::Passive,
        RelationState::Requested,
        RelationState::Buildup,
        RelationState::Engaged,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationState::Passive => "passive",
            RelationState::Requested => "requested",
            RelationState::Buildup => "buildup",
            RelationState::Engaged => "engaged",
        }
    }
}

impl fmt::Display for RelationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub pose: Pose,
    /// Half-angle of the visual field, radians in `(0, π]`.
    pub fov_half_angle: f64,
    pub engageable: bool,
    pub preferences: Preference,
    /// Current focus; equal to `id` when the entity attends to nobody else.
    pub focus: EntityId,
    pub goal: Goal,
    pub channel_settings: BTreeMap<Channel, ChannelSetting>,
    /// Distance moved during the previous tick; drives the Walking channel.
    #[serde(default)]
    pub last_displacement: f64,
}

impl Entity {
    /// A fresh engageable entity with a unit Body presence and a unit Gaze
    /// that has no target yet.
    pub fn person(id: u32, name: &str, position: Point, heading: f64) -> Self {
        let mut channel_settings = BTreeMap::new();
        channel_settings.insert(Channel::Body, ChannelSetting::new(1.0, 1.0, None));
        channel_settings.insert(Channel::Gaze, ChannelSetting::new(1.0, 1.0, None));
        Self {
            id: EntityId(id),
            name: name.to_string(),
            pose: Pose::new(position, heading, 0.3),
            fov_half_angle: PI / 4.0,
            engageable: true,
            preferences: Preference::default(),
            focus: EntityId(id),
            goal: Goal::idle(),
            channel_settings,
            last_displacement: 0.0,
        }
    }

    /// A non-engageable entity with only a Body presence.
    pub fn object(id: u32, name: &str, position: Point, body_magnitude: f64) -> Self {
        let mut channel_settings = BTreeMap::new();
        channel_settings.insert(
            Channel::Body,
            ChannelSetting::new(body_magnitude, 1.0, None),
        );
        Self {
            id: EntityId(id),
            name: name.to_string(),
            pose: Pose::new(position, 0.0, 0.3),
            fov_half_angle: PI,
            engageable: false,
            preferences: Preference::default(),
            focus: EntityId(id),
            goal: Goal::idle(),
            channel_settings,
            last_displacement: 0.0,
        }
    }

    pub fn setting(&self, channel: Channel) -> Option<&ChannelSetting> {
        self.channel_settings.get(&channel)
    }

    pub fn set_channel(&mut self, channel: Channel, setting: ChannelSetting) {
        self.channel_settings.insert(channel, setting);
    }

    pub fn has_external_focus(&self) -> bool {
        self.focus != self.id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub tick: u64,
    /// Sorted by id; every stage iterates in this order.
    entities: Vec<Entity>,
    pub environment: Environment,
    pub rng_seed: u64,
}

impl World {
    /// Builds a world; entities are reordered by id so that declaration
    /// order never leaks into results.
    pub fn new(entities: Vec<Entity>, environment: Environment, rng_seed: u64) -> Self {
        let mut entities = entities;
        entities.sort_by_key(|e| e.id);
        Self {
            tick: 0,
            entities,
            environment,
            rng_seed,
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entities_mut(&mut self) -> &mut [Entity] {
        &mut self.entities
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entities.iter().map(|e| e.id)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn index_of(&self, id: EntityId) -> Option<usize> {
        self.entities.binary_search_by_key(&id, |e| e.id).ok()
    }

    pub fn get(&self, id: EntityId) -> Option<&Entity> {
        self.index_of(id).map(|i| &self.entities[i])
    }

    pub fn get_mut(&mut self, id: EntityId) -> Option<&mut Entity> {
        self.index_of(id).map(move |i| &mut self.entities[i])
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.index_of(id).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    InvalidPose,
    InvalidFieldOfView,
    NegativeEffort,
    NegativePreference,
    NoiseOutOfRange,
    InvalidBounds,
    ObjectChannel,
    ObjectFocus,
    DanglingFocus,
    DanglingTarget,
    MisdirectedChannel,
    InvalidGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: Option<EntityId>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.entity {
            Some(id) => write!(f, "entity {id}: {:?}: {}", self.kind, self.detail),
            None => write!(f, "world: {:?}: {}", self.kind, self.detail),
        }
    }
}

/// Checks every structural invariant of the world. An empty result means the
/// world is well formed.
pub fn validate_world(world: &World) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: Option<EntityId>, kind: ViolationKind, detail: String| {
        out.push(Violation {
            entity,
            kind,
            detail,
        })
    };

    let mut seen = BTreeSet::new();
    for e in &world.entities {
        if !seen.insert(e.id) {
            push(
                Some(e.id),
                ViolationKind::DuplicateId,
                format!("id {} declared more than once", e.id.0),
            );
        }
    }

    let env = &world.environment;
    for (&channel, &n) in &env.noise {
        if !(0.0..=1.0).contains(&n) || n.is_nan() {
            push(
                None,
                ViolationKind::NoiseOutOfRange,
                format!("noise on {channel} is {n}, expected [0, 1]"),
            );
        }
    }
    let b = env.bounds;
    if !(b.min.x < b.max.x && b.min.y < b.max.y) {
        push(
            None,
            ViolationKind::InvalidBounds,
            "bounds min must be strictly below max".to_string(),
        );
    }

    for e in &world.entities {
        let id = Some(e.id);
        let pose = &e.pose;
        if !(pose.body_radius > 0.0) || !pose.body_radius.is_finite() {
            push(
                id,
                ViolationKind::InvalidPose,
                format!("body radius {} must be > 0", pose.body_radius),
            );
        }
        if !(0.0..TAU).contains(&pose.heading) {
            push(
                id,
                ViolationKind::InvalidPose,
                format!("heading {} not in [0, 2π)", pose.heading),
            );
        }
        if !pose.position.x.is_finite() || !pose.position.y.is_finite() {
            push(
                id,
                ViolationKind::InvalidPose,
                "non-finite position".to_string(),
            );
        }
        if !(e.fov_half_angle > 0.0 && e.fov_half_angle <= PI) {
            push(
                id,
                ViolationKind::InvalidFieldOfView,
                format!("fov half-angle {} not in (0, π]", e.fov_half_angle),
            );
        }
        for (&channel, &p) in &e.preferences.per_channel {
            if !(p >= 0.0) {
                push(
                    id,
                    ViolationKind::NegativePreference,
                    format!("preference for {channel} is {p}"),
                );
            }
        }
        if !world.contains(e.focus) {
            push(
                id,
                ViolationKind::DanglingFocus,
                format!("focus {} does not exist", e.focus),
            );
        }
        if !e.engageable && e.focus != e.id {
            push(
                id,
                ViolationKind::ObjectFocus,
                format!("object focuses {}", e.focus),
            );
        }

        for (&channel, s) in &e.channel_settings {
            if !(s.magnitude >= 0.0) || !(s.contribution >= 0.0) {
                push(
                    id,
                    ViolationKind::NegativeEffort,
                    format!(
                        "{channel}: magnitude {} contribution {}",
                        s.magnitude, s.contribution
                    ),
                );
            }
            if !e.engageable && channel != Channel::Body && s.magnitude > 0.0 {
                push(
                    id,
                    ViolationKind::ObjectChannel,
                    format!("object emits on {channel}"),
                );
            }
            if channel.is_derived() && s.magnitude > 0.0 {
                push(
                    id,
                    ViolationKind::MisdirectedChannel,
                    format!("{channel} is produced by motion and cannot be set"),
                );
            }
            match s.target {
                Some(t) if !channel.is_directed() => push(
                    id,
                    ViolationKind::MisdirectedChannel,
                    format!("{channel} is omnidirectional but targets {t}"),
                ),
                Some(t) if t == e.id => push(
                    id,
                    ViolationKind::MisdirectedChannel,
                    format!("{channel} targets its own sender"),
                ),
                Some(t) if !world.contains(t) => push(
                    id,
                    ViolationKind::DanglingTarget,
                    format!("{channel} targets missing entity {t}"),
                ),
                _ => {}
            }
        }

        match e.goal.kind {
            GoalKind::Idle => {}
            _ if !e.engageable => push(
                id,
                ViolationKind::InvalidGoal,
                "objects cannot pursue goals".to_string(),
            ),
            GoalKind::Engage { target } | GoalKind::Disengage { target } => {
                match world.get(target) {
                    None => push(
                        id,
                        ViolationKind::InvalidGoal,
                        format!("goal target {target} does not exist"),
                    ),
                    Some(t) if t.id == e.id => push(
                        id,
                        ViolationKind::InvalidGoal,
                        "goal targets its own entity".to_string(),
                    ),
                    Some(t) if !t.engageable => push(
                        id,
                        ViolationKind::InvalidGoal,
                        format!("goal target {target} is not engageable"),
                    ),
                    _ => {}
                }
            }
            GoalKind::AvoidFocus => {}
        }
        if !(e.goal.politeness_bound >= 1.0) {
            push(
                id,
                ViolationKind::InvalidGoal,
                format!("politeness bound {} must be >= 1", e.goal.politeness_bound),
            );
        }
    }
    out
}
