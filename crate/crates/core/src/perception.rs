//! Subjective views: what one entity can infer about the others' focus from
//! the directed effort it observes, and the diagnostics built on top of
//! that (miscommunication, effectiveness, required effort, politeness).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Snapshot;
use crate::focus::{EiTable, FocusMap};
use crate::model::EffortEmission;
use crate::model::{angle_diff, Channel, ChannelSetting, Entity, EntityId, RelationState};
use crate::relation::{compute_state_matrix, StateMatrix};
use crate::signal::{compute_channel_ei, contrast, emission_direction, Emitted};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionParams {
    /// Entities closer than this are perceived even without any signal.
    pub perception_radius: f64,
    /// Margin by which a sender must exceed the strongest competitor.
    pub epsilon: f64,
    /// Default upper politeness multiplier on the required effort.
    pub kappa: f64,
    /// Exponential smoothing of estimate confidences across ticks; `None` keeps views memoryless.
    pub smoothing: Option<f64>,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self {
            perception_radius: 1.0,
            epsilon: 0.01,
            kappa: 2.0,
            smoothing: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusEstimate {
    pub target: EntityId,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveView {
    pub observer: EntityId,
    /// The observer itself plus every entity it perceives.
    pub estimated_focus: BTreeMap<EntityId, FocusEstimate>,
    pub estimated_states: StateMatrix,
    pub last_update_tick: u64,
}

impl SubjectiveView {
    pub fn state(&self, a: EntityId, b: EntityId) -> Option<RelationState> {
        self.estimated_states.get(a, b)
    }

    pub fn focus_map(&self) -> FocusMap {
        self.estimated_focus
            .iter()
            .map(|(&id, est)| (id, est.target))
            .collect()
    }

    /// A view that knows the true focus of the given entities.
    pub fn omniscient(
        observer: EntityId,
        ids: &[EntityId],
        focus_map: &FocusMap,
        tick: u64,
    ) -> Self {
        let members: BTreeSet<EntityId> = ids.iter().copied().chain([observer]).collect();
        let estimated_focus: BTreeMap<EntityId, FocusEstimate> = members
            .iter()
            .map(|&id| {
                let f = focus_map.get(&id).copied().unwrap_or(id);
                let target = if members.contains(&f) { f } else { id };
                (
                    id,
                    FocusEstimate {
                        target,
                        confidence: 1.0,
                    },
                )
            })
            .collect();
        let map = estimated_focus
            .iter()
            .map(|(&k, v)| (k, v.target))
            .collect();
        let mut estimated_states = compute_state_matrix(&map);
        estimated_states.tick = tick;
        Self {
            observer,
            estimated_focus,
            estimated_states,
            last_update_tick: tick,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiscommunicationEvent {
    pub tick: u64,
    pub observer: EntityId,
    pub pair: (EntityId, EntityId),
    pub subjective_state: RelationState,
    pub objective_state: RelationState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Politeness {
    Insufficient,
    Polite,
    Rude,
}

impl Politeness {
    pub fn name(self) -> &'static str {
        match self {
            Politeness::Insufficient => "insufficient",
            Politeness::Polite => "polite",
            Politeness::Rude => "rude",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolitenessReport {
    pub tick: u64,
    pub sender: EntityId,
    pub target: EntityId,
    pub used_effort: f64,
    /// `None` when no magnitude can attract the target.
    pub required_effort: Option<f64>,
    pub classification: Politeness,
}

/// Minimal total magnitude for a sender to take over a target's focus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredEffort {
    Reachable(f64),
    CannotAttract,
}

impl RequiredEffort {
    pub fn finite(self) -> Option<f64> {
        match self {
            RequiredEffort::Reachable(m) => Some(m),
            RequiredEffort::CannotAttract => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("{observer} does not perceive {subject}")]
    NotPerceived {
        observer: EntityId,
        subject: EntityId,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("{0} is not engageable")]
    NotEngageable(EntityId),
}

/// Whether `observer` perceives `subject`: some positive interpreted effort
/// reaches it, or the subject is within the perception radius.
pub fn perceives(snap: &Snapshot<'_>, observer: &Entity, subject: &Entity) -> bool {
    if observer.id == subject.id {
        return false;
    }
    if observer.pose.position.distance(subject.pose.position)
        <= snap.params.perception.perception_radius
    {
        return true;
    }
    snap.table(observer.id)
        .map(|t| t.total(subject.id) > 0.0)
        .unwrap_or(false)
}

/// Entities `observer` perceives, in id order.
pub fn perceived_set(snap: &Snapshot<'_>, observer: &Entity) -> Vec<EntityId> {
    snap.world
        .entities()
        .iter()
        .filter(|s| perceives(snap, observer, s))
        .map(|s| s.id)
        .collect()
}

/// Whether `observer` can see where `subject`'s emission on `channel` points.
fn cue_visible(snap: &Snapshot<'_>, observer: &Entity, subject: &Entity, channel: Channel) -> bool {
    if contrast(&snap.world.environment, channel) <= 0.0 {
        return false;
    }
    let delta = subject.pose.position - observer.pose.position;
    let in_view = delta.norm() == 0.0
        || angle_diff(delta.angle(), observer.pose.heading) <= observer.fov_half_angle + 1e-12;
    match channel {
        Channel::Talking => true,
        Channel::Touch => {
            in_view
                || delta.norm()
                    <= snap
                        .params
                        .alignment
                        .contact_threshold(channel, subject, observer)
        }
        _ => in_view,
    }
}

/// Reconstructs the receiver a directed emission points at, among the
/// `candidates` the observer knows about.
fn reconstruct_target(
    snap: &Snapshot<'_>,
    subject: &Entity,
    emitted: &Emitted,
    candidates: &[EntityId],
) -> Option<EntityId> {
    let dir = emitted.direction?;
    let half = snap
        .params
        .alignment
        .get(emitted.emission.channel)
        .cone_half_angle;
    let mut best: Option<(EntityId, f64)> = None;
    for &c in candidates {
        if c == subject.id {
            continue;
        }
        let Some(ce) = snap.world.get(c) else {
            continue;
        };
        let delta = ce.pose.position - subject.pose.position;
        let dev = if delta.norm() == 0.0 {
            0.0
        } else {
            angle_diff(dir, delta.angle())
        };
        if dev >= half {
            continue;
        }
        if best.map(|(_, d)| dev < d).unwrap_or(true) {
            best = Some((c, dev));
        }
    }
    best.map(|(c, _)| c)
}

fn estimate_with_candidates(
    snap: &Snapshot<'_>,
    observer: &Entity,
    subject: &Entity,
    candidates: &[EntityId],
) -> FocusEstimate {
    let Some(idx) = snap.world.index_of(subject.id) else {
        return FocusEstimate {
            target: subject.id,
            confidence: 0.0,
        };
    };
    let mut weights: BTreeMap<EntityId, f64> = BTreeMap::new();
    let mut visible_total = 0.0;
    for em in &snap.emissions[idx] {
        let channel = em.emission.channel;
        if !channel.is_directed() || !cue_visible(snap, observer, subject, channel) {
            continue;
        }
        let w = em.emission.magnitude * em.emission.contribution;
        if w <= 0.0 {
            continue;
        }
        visible_total += w;
        if let Some(t) = reconstruct_target(snap, subject, em, candidates) {
            *weights.entry(t).or_insert(0.0) += w;
        }
    }
    let mut best: Option<(EntityId, f64)> = None;
    for (&t, &w) in &weights {
        if best.map(|(_, b)| w > b).unwrap_or(true) {
            best = Some((t, w));
        }
    }
    match best {
        Some((t, w)) => FocusEstimate {
            target: t,
            confidence: w / visible_total,
        },
        None => FocusEstimate {
            target: subject.id,
            confidence: 0.0,
        },
    }
}

/// The observer's estimate of `subject`'s focus from its visible directed
/// effort. A subject showing no directed effort appears self-focused with
/// zero confidence.
pub fn estimate_focus_of(
    snap: &Snapshot<'_>,
    observer: EntityId,
    subject: EntityId,
) -> Result<FocusEstimate, PerceptionError> {
    let o = snap
        .world
        .get(observer)
        .ok_or(PerceptionError::UnknownEntity(observer))?;
    let s = snap
        .world
        .get(subject)
        .ok_or(PerceptionError::UnknownEntity(subject))?;
    if !perceives(snap, o, s) {
        return Err(PerceptionError::NotPerceived { observer, subject });
    }
    let mut candidates = perceived_set(snap, o);
    candidates.push(observer);
    candidates.sort();
    Ok(estimate_with_candidates(snap, o, s, &candidates))
}

pub fn build_subjective_view(
    snap: &Snapshot<'_>,
    observer: EntityId,
) -> Result<SubjectiveView, PerceptionError> {
    let o = snap
        .world
        .get(observer)
        .ok_or(PerceptionError::UnknownEntity(observer))?;
    if !o.engageable {
        return Err(PerceptionError::NotEngageable(observer));
    }
    let own_focus = snap.focus_map.get(&observer).copied().unwrap_or(observer);
    let mut members = perceived_set(snap, o);
    members.push(observer);
    if snap.world.contains(own_focus) {
        members.push(own_focus);
    }
    members.sort();
    members.dedup();

    let mut estimated_focus = BTreeMap::new();
    for &id in &members {
        let est = if id == observer {
            FocusEstimate {
                target: own_focus,
                confidence: 1.0,
            }
        } else {
            let s = snap.world.get(id).expect("member exists");
            estimate_with_candidates(snap, o, s, &members)
        };
        estimated_focus.insert(id, est);
    }
    let map: FocusMap = estimated_focus
        .iter()
        .map(|(&k, v)| (k, v.target))
        .collect();
    let mut estimated_states = compute_state_matrix(&map);
    estimated_states.tick = snap.world.tick;
    Ok(SubjectiveView {
        observer,
        estimated_focus,
        estimated_states,
        last_update_tick: snap.world.tick,
    })
}

/// Blends confidences with the previous view: estimates that persist keep
/// `alpha` of their old confidence.
pub fn smooth_view(previous: &SubjectiveView, current: &mut SubjectiveView, alpha: f64) {
    for (id, est) in current.estimated_focus.iter_mut() {
        if *id == current.observer {
            continue;
        }
        if let Some(prev) = previous.estimated_focus.get(id) {
            if prev.target == est.target {
                est.confidence = alpha * prev.confidence + (1.0 - alpha) * est.confidence;
            }
        }
    }
}

/// Every `(observer, pair)` whose subjective state differs from the objective one.
pub fn detect_miscommunication(
    objective: &StateMatrix,
    views: &[SubjectiveView],
) -> Vec<MiscommunicationEvent> {
    let mut out = Vec::new();
    for view in views {
        for (a, b, subjective) in view.estimated_states.iter() {
            let Some(actual) = objective.get(a, b) else {
                continue;
            };
            if actual != subjective {
                out.push(MiscommunicationEvent {
                    tick: objective.tick,
                    observer: view.observer,
                    pair: (a, b),
                    subjective_state: subjective,
                    objective_state: actual,
                });
            }
        }
    }
    out
}

/// Engaged objectively and in the eyes of both participants.
pub fn is_effective(
    pair: (EntityId, EntityId),
    objective: &StateMatrix,
    view_a: &SubjectiveView,
    view_b: &SubjectiveView,
) -> bool {
    let (a, b) = pair;
    objective.get(a, b) == Some(RelationState::Engaged)
        && view_a.state(a, b) == Some(RelationState::Engaged)
        && view_b.state(b, a) == Some(RelationState::Engaged)
}

/// Channels the sender can scale, with their current settings.
pub fn scalable_settings(sender: &Entity) -> BTreeMap<Channel, ChannelSetting> {
    sender
        .channel_settings
        .iter()
        .filter(|(c, s)| !c.is_derived() && s.is_active(**c))
        .map(|(&c, &s)| (c, s))
        .collect()
}

/// Sum of the magnitudes the sender currently spends on scalable channels.
pub fn used_effort(sender: &Entity) -> f64 {
    scalable_settings(sender)
        .values()
        .map(|s| s.magnitude)
        .sum()
}

/// Interpreted effort `target` gets from `sender` per unit of total
/// magnitude spread over `settings` in proportion to their magnitudes.
pub fn unit_ei(
    snap: &Snapshot<'_>,
    sender: &Entity,
    target: &Entity,
    settings: &BTreeMap<Channel, ChannelSetting>,
) -> f64 {
    let total: f64 = settings.values().map(|s| s.magnitude).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut u = 0.0;
    for (&channel, s) in settings {
        if s.magnitude <= 0.0 {
            continue;
        }
        let direction = if channel.is_directed() {
            match s.target.and_then(|t| snap.world.get(t)) {
                Some(t) => Some(emission_direction(sender, t)),
                None => continue,
            }
        } else {
            None
        };
        let emitted = Emitted {
            emission: EffortEmission {
                sender: sender.id,
                channel,
                magnitude: s.magnitude / total,
                contribution: s.contribution,
                target: s.target,
            },
            direction,
        };
        u += compute_channel_ei(
            &emitted,
            sender,
            target,
            &snap.world.environment,
            &snap.params.alignment,
        )
        .value;
    }
    u
}

/// Effort `target` receives from `sender` on derived channels, which the
/// sender cannot scale.
fn fixed_ei(snap: &Snapshot<'_>, sender: &Entity, target: &Entity) -> f64 {
    let Some(idx) = snap.world.index_of(sender.id) else {
        return 0.0;
    };
    snap.emissions[idx]
        .iter()
        .filter(|e| e.emission.channel.is_derived())
        .map(|e| {
            compute_channel_ei(
                e,
                sender,
                target,
                &snap.world.environment,
                &snap.params.alignment,
            )
            .value
        })
        .sum()
}

/// Strongest competing effort at `target`, its idle baseline included.
pub fn competitor_ei(snap: &Snapshot<'_>, sender: EntityId, target: EntityId) -> f64 {
    snap.table(target)
        .map(|t: &EiTable| t.max_excluding(sender))
        .unwrap_or(snap.params.idle_baseline)
}

/// Minimal total magnitude, spread over `settings` in their proportions,
/// that makes `target`'s total from `sender` exceed every other source by
/// the margin ε.
pub fn required_effort_for(
    snap: &Snapshot<'_>,
    sender: &Entity,
    target: &Entity,
    settings: &BTreeMap<Channel, ChannelSetting>,
) -> RequiredEffort {
    let competitor = competitor_ei(snap, sender.id, target.id);
    let need = competitor + snap.params.perception.epsilon - fixed_ei(snap, sender, target);
    if need <= 0.0 {
        return RequiredEffort::Reachable(0.0);
    }
    let u = unit_ei(snap, sender, target, settings);
    if u > 0.0 {
        RequiredEffort::Reachable(need / u)
    } else {
        RequiredEffort::CannotAttract
    }
}

/// Required effort over the sender's current active channels; a sender with
/// none is evaluated on Body presence alone.
pub fn required_effort(
    snap: &Snapshot<'_>,
    sender: EntityId,
    target: EntityId,
) -> Result<RequiredEffort, PerceptionError> {
    let s = snap
        .world
        .get(sender)
        .ok_or(PerceptionError::UnknownEntity(sender))?;
    let t = snap
        .world
        .get(target)
        .ok_or(PerceptionError::UnknownEntity(target))?;
    if !t.engageable {
        return Err(PerceptionError::NotEngageable(target));
    }
    let mut settings = scalable_settings(s);
    if settings.is_empty() {
        settings.insert(Channel::Body, ChannelSetting::new(1.0, 1.0, None));
    }
    Ok(required_effort_for(snap, s, t, &settings))
}

pub fn classify_politeness(used: f64, required: RequiredEffort, kappa: f64) -> Politeness {
    match required {
        RequiredEffort::CannotAttract => Politeness::Insufficient,
        RequiredEffort::Reachable(r) if used < r => Politeness::Insufficient,
        RequiredEffort::Reachable(r) if used <= kappa * r => Politeness::Polite,
        RequiredEffort::Reachable(_) => Politeness::Rude,
    }
}

pub fn politeness_score(
    snap: &Snapshot<'_>,
    sender: EntityId,
    target: EntityId,
    kappa: f64,
) -> Result<PolitenessReport, PerceptionError> {
    let required = required_effort(snap, sender, target)?;
    let s = snap
        .world
        .get(sender)
        .ok_or(PerceptionError::UnknownEntity(sender))?;
    let used = used_effort(s);
    Ok(PolitenessReport {
        tick: snap.world.tick,
        sender,
        target,
        used_effort: used,
        required_effort: required.finite(),
        classification: classify_politeness(used, required, kappa),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimParams;
    use crate::model::{Environment, Point, World};
    use std::f64::consts::PI;

    fn gaze_at(e: &mut Entity, t: u32) {
        e.set_channel(
            Channel::Gaze,
            ChannelSetting::new(1.0, 1.0, Some(EntityId(t))),
        );
    }

    #[test]
    fn single_target_gets_full_confidence() {
        let mut a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
        let b = Entity::person(2, "b", Point::new(2.0, 0.0), PI);
        let o = Entity::person(3, "o", Point::new(1.0, -2.0), PI / 2.0);
        gaze_at(&mut a, 2);
        a.set_channel(
            Channel::Gesture,
            ChannelSetting::new(1.0, 1.0, Some(EntityId(2))),
        );
        let w = World::new(vec![a, b, o], Environment::default(), 0);
        let params = SimParams::default();
        let snap = Snapshot::build(&w, &params);
        let est = estimate_focus_of(&snap, EntityId(3), EntityId(1)).unwrap();
        assert_eq!(est.target, EntityId(2));
        assert_eq!(est.confidence, 1.0);
    }

    #[test]
    fn body_only_subject_appears_passive() {
        let a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
        let mut o = Entity::person(2, "o", Point::new(2.0, 0.0), PI);
        o.channel_settings.remove(&Channel::Gaze);
        let w = World::new(vec![a, o], Environment::default(), 0);
        let params = SimParams::default();
        let snap = Snapshot::build(&w, &params);
        let est = estimate_focus_of(&snap, EntityId(2), EntityId(1)).unwrap();
        assert_eq!(est.target, EntityId(1));
        assert_eq!(est.confidence, 0.0);
    }

    #[test]
    fn split_effort_picks_larger_share() {
        // subject 1 gazes at 2 (M=1) and talks toward 3 (M=1, C=0.5)
        let mut s = Entity::person(1, "s", Point::new(0.0, 0.0), 0.0);
        gaze_at(&mut s, 2);
        s.set_channel(
            Channel::Talking,
            ChannelSetting::new(1.0, 0.5, Some(EntityId(3))),
        );
        let x = Entity::person(2, "x", Point::new(2.0, 0.0), PI);
        let y = Entity::person(3, "y", Point::new(0.0, 2.0), -PI / 2.0);
        let obs = Entity::person(4, "obs", Point::new(-2.0, 0.5), 0.0);
        let w = World::new(vec![s, x, y, obs], Environment::default(), 0);
        let mut params = SimParams::default();
        params.perception.perception_radius = 10.0;
        let snap = Snapshot::build(&w, &params);
        let est = estimate_focus_of(&snap, EntityId(4), EntityId(1)).unwrap();
        // gaze weight 1.0 vs talking weight 0.5: share 1 / 1.5
        assert_eq!(est.target, EntityId(2));
        assert!((est.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unperceived_subject_is_an_error() {
        let a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
        let b = Entity::person(2, "b", Point::new(-5.0, 0.0), PI);
        let w = World::new(vec![a, b], Environment::default(), 0);
        let params = SimParams::default();
        let snap = Snapshot::build(&w, &params);
        assert!(matches!(
            estimate_focus_of(&snap, EntityId(1), EntityId(2)),
            Err(PerceptionError::NotPerceived { .. })
        ));
    }

    #[test]
    fn lone_observer_view() {
        let a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
        let w = World::new(vec![a], Environment::default(), 0);
        let params = SimParams::default();
        let snap = Snapshot::build(&w, &params);
        let v = build_subjective_view(&snap, EntityId(1)).unwrap();
        assert_eq!(v.estimated_focus.len(), 1);
        assert!(v.estimated_states.iter().next().is_none());
    }

    fn matrix(pairs: &[(u32, u32)]) -> StateMatrix {
        compute_state_matrix(
            &pairs
                .iter()
                .map(|&(a, b)| (EntityId(a), EntityId(b)))
                .collect(),
        )
    }

    fn view(observer: u32, pairs: &[(u32, u32)]) -> SubjectiveView {
        let m: FocusMap = pairs
            .iter()
            .map(|&(a, b)| (EntityId(a), EntityId(b)))
            .collect();
        let ids: Vec<_> = m.keys().copied().collect();
        SubjectiveView::omniscient(EntityId(observer), &ids, &m, 0)
    }

    #[test]
    fn miscommunication_cases() {
        let objective = matrix(&[(1, 2), (2, 1), (3, 1)]);
        assert!(
            detect_miscommunication(&objective, &[view(1, &[(1, 2), (2, 1), (3, 1)])]).is_empty()
        );

        // observer 3 believes 1 focuses it
        let wrong = view(3, &[(1, 3), (2, 1), (3, 1)]);
        let events = detect_miscommunication(&objective, std::slice::from_ref(&wrong));
        assert!(!events.is_empty());
        for e in &events {
            assert_ne!(e.subjective_state, e.objective_state);
            assert_eq!(wrong.state(e.pair.0, e.pair.1), Some(e.subjective_state));
        }
        let e13 = events
            .iter()
            .find(|e| e.pair == (EntityId(3), EntityId(1)))
            .unwrap();
        assert_eq!(e13.subjective_state, RelationState::Engaged);
        assert_eq!(e13.objective_state, RelationState::Buildup);
    }

    #[test]
    fn effectiveness() {
        let engaged = matrix(&[(1, 2), (2, 1)]);
        let agree = view(1, &[(1, 2), (2, 1)]);
        let agree_b = view(2, &[(1, 2), (2, 1)]);
        let doubt = view(2, &[(1, 1), (2, 1)]);
        let pair = (EntityId(1), EntityId(2));
        assert!(is_effective(pair, &engaged, &agree, &agree_b));
        assert!(!is_effective(pair, &engaged, &agree, &doubt));
        let passive = matrix(&[(1, 1), (2, 2)]);
        assert!(!is_effective(pair, &passive, &agree, &agree_b));
    }

    #[test]
    fn politeness_thresholds() {
        let r = RequiredEffort::Reachable(2.0);
        assert_eq!(classify_politeness(2.0, r, 2.0), Politeness::Polite);
        assert_eq!(classify_politeness(20.0, r, 2.0), Politeness::Rude);
        assert_eq!(classify_politeness(1.0, r, 2.0), Politeness::Insufficient);
        assert_eq!(classify_politeness(4.0, r, 2.0), Politeness::Polite);
        assert_eq!(
            classify_politeness(9.0, RequiredEffort::CannotAttract, 2.0),
            Politeness::Insufficient
        );
    }
}
