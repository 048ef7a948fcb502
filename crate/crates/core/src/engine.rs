//! The closed loop. One tick runs, against the tick-start snapshot:
//! signals → interpreted effort → focus → relation states → subjective
//! views and diagnostics → groups → plans, and then applies all plans at
//! once (synchronous update).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::focus::{build_tables, compute_all_focus, EiTable, FocusMap};
use crate::group::{compute_f_formation, detect_groups, FFormation, FormationParams, Group};
use crate::model::{
    validate_world, Channel, ChannelSetting, EffortEmission, EntityId, Point, Pose, RelationState,
    Violation, World,
};
use crate::perception::{
    build_subjective_view, detect_miscommunication, politeness_score, smooth_view,
    MiscommunicationEvent, PerceptionError, PerceptionParams, PolitenessReport, SubjectiveView,
};
use crate::relation::{compute_state_matrix, StateMatrix};
use crate::signal::{
    compute_all_ei_from, effective_emissions, AlignmentModel, ChannelEi, EmissionConfig, Emitted,
};
use crate::strategy::{
    apply_plans, plan_effort, EffortPlan, Goal, GoalKind, StrategyError, StrategyParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub alignment: AlignmentModel,
    pub emission: EmissionConfig,
    /// Interpreted effort an entity assigns to itself.
    pub idle_baseline: f64,
    /// Hysteresis margin in favour of the previous focus.
    pub focus_margin: f64,
    pub perception: PerceptionParams,
    pub formation: FormationParams,
    pub strategy: StrategyParams,
    /// Build per-entity subjective views; off gives the objective-only loop.
    pub subjective_views: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            alignment: AlignmentModel::default(),
            emission: EmissionConfig::default(),
            idle_baseline: 0.05,
            focus_margin: 0.0,
            perception: PerceptionParams::default(),
            formation: FormationParams::default(),
            strategy: StrategyParams::default(),
            subjective_views: true,
        }
    }
}

/// Stage 1 and 2 results for one world state, shared read-only by every
/// later stage.
pub struct Snapshot<'a> {
    pub world: &'a World,
    pub params: &'a SimParams,
    /// Indexed like `world.entities()`.
    pub emissions: Vec<Vec<Emitted>>,
    pub channel_eis: Vec<ChannelEi>,
    /// One per engageable entity, id order.
    pub tables: Vec<EiTable>,
    pub focus_map: FocusMap,
}

impl<'a> Snapshot<'a> {
    pub fn build(world: &'a World, params: &'a SimParams) -> Self {
        let emissions = effective_emissions(world, &params.emission);
        let channel_eis = compute_all_ei_from(world, &emissions, &params.alignment);
        let tables = build_tables(world, &channel_eis, params.idle_baseline);
        let focus_map = compute_all_focus(world, &tables, params.focus_margin);
        Self {
            world,
            params,
            emissions,
            channel_eis,
            tables,
            focus_map,
        }
    }

    pub fn table(&self, receiver: EntityId) -> Option<&EiTable> {
        self.tables
            .binary_search_by_key(&receiver, |t| t.receiver)
            .ok()
            .map(|i| &self.tables[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptAction {
    SetChannel {
        channel: Channel,
        setting: ChannelSetting,
    },
    SetPose {
        position: Point,
        heading: f64,
    },
    SetGoal {
        goal: Goal,
    },
}

/// A scripted change applied at the end of `tick`, visible from `tick + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEvent {
    pub tick: u64,
    pub entity: EntityId,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopPredicate {
    Engaged { a: EntityId, b: EntityId },
    Focus { entity: EntityId, target: EntityId },
}

impl StopPredicate {
    pub fn holds(&self, record: &TickRecord) -> bool {
        match *self {
            StopPredicate::Engaged { a, b } => {
                record.states.get(a, b) == Some(RelationState::Engaged)
            }
            StopPredicate::Focus { entity, target } => {
                record.focus_map.get(&entity) == Some(&target)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySnapshot {
    pub id: EntityId,
    pub name: String,
    pub pose: Pose,
    pub fov_half_angle: f64,
    pub engageable: bool,
    pub goal: GoalKind,
    pub emissions: Vec<EffortEmission>,
}

/// Everything one tick computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub entities: Vec<EntitySnapshot>,
    pub ei_tables: Vec<EiTable>,
    pub focus_map: FocusMap,
    pub states: StateMatrix,
    pub views: Vec<SubjectiveView>,
    pub miscommunication: Vec<MiscommunicationEvent>,
    pub politeness: Vec<PolitenessReport>,
    pub groups: Vec<Group>,
    pub formations: Vec<FFormation>,
    pub plans: Vec<EffortPlan>,
}

impl TickRecord {
    pub fn entity(&self, id: EntityId) -> Option<&EntitySnapshot> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn table(&self, receiver: EntityId) -> Option<&EiTable> {
        self.ei_tables.iter().find(|t| t.receiver == receiver)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid world at tick {tick}: {}", format_violations(.violations))]
    InvalidWorld {
        tick: u64,
        violations: Vec<Violation>,
    },
    #[error("invalid alignment model parameters")]
    InvalidParams,
    #[error("planning failed at tick {tick}: {source}")]
    Strategy { tick: u64, source: StrategyError },
    #[error("perception failed at tick {tick}: {source}")]
    Perception { tick: u64, source: PerceptionError },
    #[error("script event at tick {tick} refers to missing entity {entity}")]
    Script { tick: u64, entity: EntityId },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// One synchronous tick. Every stage reads the tick-start world; the
/// returned world carries tick + 1.
pub fn step(
    world: &World,
    params: &SimParams,
    script: &[ScriptEvent],
) -> Result<(World, TickRecord), EngineError> {
    step_with_history(world, params, script, None)
}

pub fn step_with_history(
    world: &World,
    params: &SimParams,
    script: &[ScriptEvent],
    previous_views: Option<&[SubjectiveView]>,
) -> Result<(World, TickRecord), EngineError> {
    let tick = world.tick;
    let violations = validate_world(world);
    if !violations.is_empty() {
        return Err(EngineError::InvalidWorld { tick, violations });
    }
    if !params.alignment.is_valid() {
        return Err(EngineError::InvalidParams);
    }

    let snap = Snapshot::build(world, params);
    let mut states = compute_state_matrix(&snap.focus_map);
    states.tick = tick;

    let mut views = Vec::new();
    if params.subjective_views {
        for e in world.entities().iter().filter(|e| e.engageable) {
            let mut v = build_subjective_view(&snap, e.id)
                .map_err(|source| EngineError::Perception { tick, source })?;
            if let (Some(alpha), Some(prev)) = (params.perception.smoothing, previous_views) {
                if let Some(p) = prev.iter().find(|p| p.observer == e.id) {
                    smooth_view(p, &mut v, alpha);
                }
            }
            views.push(v);
        }
    }
    let miscommunication = detect_miscommunication(&states, &views);

    let mut politeness = Vec::new();
    for e in world.entities() {
        if let GoalKind::Engage { target } = e.goal.kind {
            let report = politeness_score(&snap, e.id, target, e.goal.politeness_bound)
                .map_err(|source| EngineError::Perception { tick, source })?;
            politeness.push(report);
        }
    }

    let groups = detect_groups(&snap.focus_map);
    let formations: Vec<FFormation> = groups
        .iter()
        .filter_map(|g| compute_f_formation(g, world, &params.formation).ok())
        .collect();

    let mut plans = Vec::new();
    for e in world.entities().iter().filter(|e| e.engageable) {
        let fallback;
        let view = match views.iter().find(|v| v.observer == e.id) {
            Some(v) => v,
            None => {
                let ids: Vec<EntityId> = e.goal.target().into_iter().collect();
                fallback = SubjectiveView::omniscient(e.id, &ids, &snap.focus_map, tick);
                &fallback
            }
        };
        let plan = plan_effort(e, view, &snap, &formations)
            .map_err(|source| EngineError::Strategy { tick, source })?;
        plans.push(plan);
    }

    let mut next = apply_plans(world, &plans);
    for e in next.entities_mut() {
        if let Some(&f) = snap.focus_map.get(&e.id) {
            e.focus = f;
        }
    }
    for ev in script.iter().filter(|ev| ev.tick == tick) {
        let e = next.get_mut(ev.entity).ok_or(EngineError::Script {
            tick,
            entity: ev.entity,
        })?;
        match &ev.action {
            ScriptAction::SetChannel { channel, setting } => {
                e.channel_settings.insert(*channel, *setting);
            }
            ScriptAction::SetPose { position, heading } => {
                e.last_displacement = e.pose.position.distance(*position);
                e.pose = Pose::new(*position, *heading, e.pose.body_radius);
            }
            ScriptAction::SetGoal { goal } => e.goal = *goal,
        }
    }

    let entities = world
        .entities()
        .iter()
        .zip(&snap.emissions)
        .map(|(e, em)| EntitySnapshot {
            id: e.id,
            name: e.name.clone(),
            pose: e.pose,
            fov_half_angle: e.fov_half_angle,
            engageable: e.engageable,
            goal: e.goal.kind,
            emissions: em.iter().map(|x| x.emission).collect(),
        })
        .collect();

    let record = TickRecord {
        tick,
        entities,
        ei_tables: snap.tables,
        focus_map: snap.focus_map,
        states,
        views,
        miscommunication,
        politeness,
        groups,
        formations,
        plans,
    };
    Ok((next, record))
}

/// Stateful driver over [`step`] that carries the world (and the previous
/// views when confidence smoothing is enabled).
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: World,
    pub params: SimParams,
    pub script: Vec<ScriptEvent>,
    previous_views: Option<Vec<SubjectiveView>>,
}

impl Simulation {
    pub fn new(world: World, params: SimParams, script: Vec<ScriptEvent>) -> Self {
        Self {
            world,
            params,
            script,
            previous_views: None,
        }
    }

    pub fn step(&mut self) -> Result<TickRecord, EngineError> {
        let (next, record) = step_with_history(
            &self.world,
            &self.params,
            &self.script,
            self.previous_views.as_deref(),
        )?;
        self.world = next;
        if self.params.perception.smoothing.is_some() {
            self.previous_views = Some(record.views.clone());
        }
        Ok(record)
    }

    /// Runs up to `ticks` ticks, stopping after the first record that
    /// satisfies `stop`.
    pub fn run(
        &mut self,
        ticks: u64,
        stop: Option<&StopPredicate>,
    ) -> Result<Vec<TickRecord>, EngineError> {
        let mut out = Vec::with_capacity(ticks.min(4096) as usize);
        for _ in 0..ticks {
            let record = self.step()?;
            let done = stop.map(|p| p.holds(&record)).unwrap_or(false);
            out.push(record);
            if done {
                break;
            }
        }
        Ok(out)
    }
}

pub fn run(
    world: World,
    params: SimParams,
    script: Vec<ScriptEvent>,
    ticks: u64,
    stop: Option<&StopPredicate>,
) -> Result<Vec<TickRecord>, EngineError> {
    Simulation::new(world, params, script).run(ticks, stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, Environment};
    use std::f64::consts::PI;

    #[test]
    fn zero_ticks_is_empty() {
        let w = World::new(
            vec![Entity::person(1, "a", Point::new(0.0, 0.0), 0.0)],
            Environment::default(),
            0,
        );
        assert!(run(w, SimParams::default(), vec![], 0, None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn invalid_world_aborts() {
        let mut a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
        a.focus = EntityId(7);
        let w = World::new(vec![a], Environment::default(), 0);
        match step(&w, &SimParams::default(), &[]) {
            Err(EngineError::InvalidWorld {
                tick: 0,
                violations,
            }) => assert_eq!(violations.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn static_scene_is_a_fixed_point() {
        // two entities with their backs to each other, body only
        let mut a = Entity::person(1, "a", Point::new(0.0, 0.0), PI);
        let mut b = Entity::person(2, "b", Point::new(3.0, 0.0), 0.0);
        a.channel_settings.remove(&Channel::Gaze);
        b.channel_settings.remove(&Channel::Gaze);
        let mut sim = Simulation::new(
            World::new(vec![a, b], Environment::default(), 0),
            SimParams::default(),
            vec![],
        );
        let r0 = sim.step().unwrap();
        for _ in 0..5 {
            let mut r = sim.step().unwrap();
            assert_ne!(r.tick, r0.tick);
            r.tick = r0.tick;
            r.states.tick = r0.states.tick;
            for v in &mut r.views {
                v.last_update_tick = r0.tick;
                v.estimated_states.tick = r0.tick;
            }
            assert_eq!(r, r0);
        }
    }

    #[test]
    fn script_event_lands_next_tick() {
        let a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
        let b = Entity::person(2, "b", Point::new(2.0, 0.0), PI);
        let script = vec![ScriptEvent {
            tick: 1,
            entity: EntityId(1),
            action: ScriptAction::SetChannel {
                channel: Channel::Gesture,
                setting: ChannelSetting::new(1.0, 1.0, Some(EntityId(2))),
            },
        }];
        let recs = run(
            World::new(vec![a, b], Environment::default(), 0),
            SimParams::default(),
            script,
            3,
            None,
        )
        .unwrap();
        let has_gesture = |r: &TickRecord| {
            r.entity(EntityId(1))
                .unwrap()
                .emissions
                .iter()
                .any(|e| e.channel == Channel::Gesture)
        };
        assert!(!has_gesture(&recs[1]));
        assert!(has_gesture(&recs[2]));
    }
}
