//! Scenario files: JSON descriptions of a scene, its parameters, scripted
//! events and stop condition.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{ScriptAction, ScriptEvent, SimParams, StopPredicate};
use crate::group::FormationParams;
use crate::model::{
    validate_world, Bounds, Channel, ChannelSetting, Entity, EntityId, Environment, Point, Pose,
    Preference, Violation, World,
};
use crate::perception::PerceptionParams;
use crate::signal::{ChannelAlignment, EmissionConfig};
use crate::strategy::{select_goal, Goal, GoalKind, StrategyParams};

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: &[(&str, &str)] = &[
    ("fig4", include_str!("../scenarios/fig4.json")),
    (
        "two_agent_engage",
        include_str!("../scenarios/two_agent_engage.json"),
    ),
    (
        "group_of_three",
        include_str!("../scenarios/group_of_three.json"),
    ),
    (
        "occluded_observer",
        include_str!("../scenarios/occluded_observer.json"),
    ),
    ("noisy_room", include_str!("../scenarios/noisy_room.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("scenario describes an invalid world: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("no scenario file or bundled scenario named {0:?}")]
    NotFound(String),
}

impl ScenarioError {
    /// Validation failures map to exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ScenarioError::Invalid(_) | ScenarioError::Schema { .. }
        )
    }
}

/// Per-channel alignment override; missing fields keep the channel default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentOverride {
    pub cone_half_angle: Option<f64>,
    pub attenuation_exponent: Option<f64>,
    pub contact_reach: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub idle_baseline: f64,
    pub focus_margin: f64,
    pub subjective_views: bool,
    pub emission: EmissionConfig,
    pub perception: PerceptionParams,
    pub formation: FormationParams,
    pub strategy: StrategyParams,
}

impl Default for EngineSection {
    fn default() -> Self {
        let p = SimParams::default();
        Self {
            idle_baseline: p.idle_baseline,
            focus_margin: p.focus_margin,
            subjective_views: p.subjective_views,
            emission: p.emission,
            perception: p.perception,
            formation: p.formation,
            strategy: p.strategy,
        }
    }
}

fn default_radius() -> f64 {
    0.3
}

fn default_fov() -> f64 {
    PI / 4.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySpec {
    pub id: EntityId,
    pub name: String,
    pub position: Point,
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_radius")]
    pub body_radius: f64,
    #[serde(default = "default_fov")]
    pub fov_half_angle: f64,
    #[serde(default = "default_true")]
    pub engageable: bool,
    #[serde(default)]
    pub preferences: BTreeMap<Channel, f64>,
    /// Initial channel settings; defaults to a unit Body presence.
    #[serde(default)]
    pub channels: Option<BTreeMap<Channel, ChannelSetting>>,
    /// Initial focus; defaults to the entity itself.
    #[serde(default)]
    pub focus: Option<EntityId>,
    /// Candidate goals; the highest priority one is active.
    #[serde(default)]
    pub goals: Vec<Goal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    #[serde(default)]
    pub environment: Environment,
    #[serde(default)]
    pub alignment: BTreeMap<Channel, AlignmentOverride>,
    #[serde(default)]
    pub engine: EngineSection,
    pub entities: Vec<EntitySpec>,
    #[serde(default)]
    pub script: Vec<ScriptEvent>,
    #[serde(default)]
    pub stop: Option<StopPredicate>,
}

fn default_ticks() -> u64 {
    20
}

/// A loaded scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub world: World,
    pub params: SimParams,
    pub script: Vec<ScriptEvent>,
    pub stop: Option<StopPredicate>,
    pub ticks: u64,
    pub seed: u64,
    /// SHA-256 of the source text, hex.
    pub hash: String,
}

pub fn scenario_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

/// Parses, schema-checks and validates scenario text.
pub fn parse_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(source).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut scenario = file.build()?;
    scenario.hash = scenario_hash(source);
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&source)
}

/// Loads `arg` as a file path, or as a bundled scenario name when no such
/// file exists.
pub fn load_scenario_or_bundled(arg: &str) -> Result<Scenario, ScenarioError> {
    if Path::new(arg).exists() {
        return load_scenario(arg);
    }
    match bundled_source(arg) {
        Some(src) => parse_scenario(src),
        None => Err(ScenarioError::NotFound(arg.to_string())),
    }
}

fn schema(path: String, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        path,
        message: message.into(),
    }
}

fn check_non_negative(path: String, v: f64) -> Result<(), ScenarioError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(schema(
            path,
            format!("must be a finite number >= 0, got {v}"),
        ))
    }
}

impl ScenarioFile {
    fn check_schema(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Version {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.entities.is_empty() {
            return Err(schema("entities".into(), "at least one entity is required"));
        }
        for (&c, &n) in &self.environment.noise {
            if !(0.0..=1.0).contains(&n) {
                return Err(schema(
                    format!("environment.noise.{c}"),
                    format!("must be in [0, 1], got {n}"),
                ));
            }
        }
        for (&c, o) in &self.alignment {
            if let Some(a) = o.cone_half_angle {
                if !(a > 0.0 && a <= PI) {
                    return Err(schema(
                        format!("alignment.{c}.cone_half_angle"),
                        "must be in (0, π]",
                    ));
                }
            }
            if let Some(k) = o.attenuation_exponent {
                check_non_negative(format!("alignment.{c}.attenuation_exponent"), k)?;
            }
            if let Some(r) = o.contact_reach {
                check_non_negative(format!("alignment.{c}.contact_reach"), r)?;
            }
        }
        let e = &self.engine;
        check_non_negative("engine.idle_baseline".into(), e.idle_baseline)?;
        check_non_negative("engine.focus_margin".into(), e.focus_margin)?;
        check_non_negative("engine.perception.epsilon".into(), e.perception.epsilon)?;
        check_non_negative(
            "engine.perception.perception_radius".into(),
            e.perception.perception_radius,
        )?;
        if !(e.perception.kappa >= 1.0) {
            return Err(schema("engine.perception.kappa".into(), "must be >= 1"));
        }
        if let Some(a) = e.perception.smoothing {
            if !(0.0..1.0).contains(&a) {
                return Err(schema(
                    "engine.perception.smoothing".into(),
                    "must be in [0, 1)",
                ));
            }
        }
        check_non_negative("engine.strategy.speed".into(), e.strategy.speed)?;
        check_non_negative(
            "engine.strategy.max_magnitude".into(),
            e.strategy.max_magnitude,
        )?;
        check_non_negative("engine.formation.r_width".into(), e.formation.r_width)?;
        check_non_negative(
            "engine.formation.min_o_radius".into(),
            e.formation.min_o_radius,
        )?;

        for (i, ent) in self.entities.iter().enumerate() {
            let base = format!("entities[{i}]");
            if !(ent.body_radius > 0.0) {
                return Err(schema(format!("{base}.body_radius"), "must be > 0"));
            }
            if !(ent.fov_half_angle > 0.0 && ent.fov_half_angle <= PI) {
                return Err(schema(
                    format!("{base}.fov_half_angle"),
                    "must be in (0, π]",
                ));
            }
            for (&c, &p) in &ent.preferences {
                check_non_negative(format!("{base}.preferences.{c}"), p)?;
            }
            if let Some(chs) = &ent.channels {
                for (&c, s) in chs {
                    check_non_negative(format!("{base}.channels.{c}.magnitude"), s.magnitude)?;
                    check_non_negative(
                        format!("{base}.channels.{c}.contribution"),
                        s.contribution,
                    )?;
                }
            }
            for (j, g) in ent.goals.iter().enumerate() {
                if !(g.politeness_bound >= 1.0) {
                    return Err(schema(
                        format!("{base}.goals[{j}].politeness_bound"),
                        "must be >= 1",
                    ));
                }
            }
        }
        for (i, ev) in self.script.iter().enumerate() {
            if let ScriptAction::SetChannel { channel, setting } = &ev.action {
                check_non_negative(
                    format!("script[{i}].action.setting.magnitude"),
                    setting.magnitude,
                )?;
                check_non_negative(
                    format!("script[{i}].action.setting.contribution"),
                    setting.contribution,
                )?;
                if channel.is_derived() {
                    return Err(schema(
                        format!("script[{i}].action.channel"),
                        "derived channels cannot be scripted",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> SimParams {
        let mut params = SimParams {
            idle_baseline: self.engine.idle_baseline,
            focus_margin: self.engine.focus_margin,
            subjective_views: self.engine.subjective_views,
            emission: self.engine.emission,
            perception: self.engine.perception,
            formation: self.engine.formation,
            strategy: self.engine.strategy,
            ..SimParams::default()
        };
        for (&c, o) in &self.alignment {
            let mut a = ChannelAlignment::default_for(c);
            if let Some(v) = o.cone_half_angle {
                a.cone_half_angle = v;
            }
            if let Some(v) = o.attenuation_exponent {
                a.attenuation_exponent = v;
            }
            if let Some(v) = o.contact_reach {
                a.contact_reach = v;
            }
            params.alignment.channels.insert(c, a);
        }
        params
    }

    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        self.check_schema()?;
        let params = self.params();
        let entities: Vec<Entity> = self
            .entities
            .iter()
            .map(|s| {
                let channel_settings = s.channels.clone().unwrap_or_else(|| {
                    let mut m = BTreeMap::new();
                    m.insert(Channel::Body, ChannelSetting::new(1.0, 1.0, None));
                    m
                });
                let mut goal = select_goal(&s.goals);
                if s.goals.is_empty() {
                    goal.politeness_bound = params.perception.kappa;
                }
                Entity {
                    id: s.id,
                    name: s.name.clone(),
                    pose: Pose::new(s.position, s.heading, s.body_radius),
                    fov_half_angle: s.fov_half_angle,
                    engageable: s.engageable,
                    preferences: Preference {
                        per_channel: s.preferences.clone(),
                    },
                    focus: s.focus.unwrap_or(s.id),
                    goal,
                    channel_settings,
                    last_displacement: 0.0,
                }
            })
            .collect();
        let world = World::new(entities, self.environment.clone(), self.seed);
        let mut violations = validate_world(&world);
        for (i, ev) in self.script.iter().enumerate() {
            if !world.contains(ev.entity) {
                violations.push(Violation {
                    entity: Some(ev.entity),
                    kind: crate::model::ViolationKind::DanglingTarget,
                    detail: format!("script[{i}] refers to a missing entity"),
                });
            }
        }
        if let Some(stop) = &self.stop {
            let ids = match *stop {
                StopPredicate::Engaged { a, b } => [a, b],
                StopPredicate::Focus { entity, target } => [entity, target],
            };
            for id in ids {
                if !world.contains(id) {
                    violations.push(Violation {
                        entity: Some(id),
                        kind: crate::model::ViolationKind::DanglingTarget,
                        detail: "stop predicate refers to a missing entity".into(),
                    });
                }
            }
        }
        if !violations.is_empty() {
            return Err(ScenarioError::Invalid(violations));
        }
        Ok(Scenario {
            name: self.name.clone(),
            world,
            params,
            script: self.script.clone(),
            stop: self.stop,
            ticks: self.ticks,
            seed: self.seed,
            hash: String::new(),
        })
    }
}

/// A random crowd of `n` entities (about one in five an object) in a square
/// sized for roughly one entity per 4 m², drawn from `seed`.
pub fn random_scenario(n: usize, seed: u64) -> ScenarioFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = ((n.max(1) as f64) * 4.0).sqrt() / 2.0;
    let mut entities = Vec::with_capacity(n);
    let ids: Vec<u32> = (1..=n as u32).collect();
    for &id in &ids {
        let position = Point::new(rng.gen_range(-half..half), rng.gen_range(-half..half));
        let heading = rng.gen_range(0.0..2.0 * PI);
        let engageable = rng.gen_bool(0.8);
        let mut channels = BTreeMap::new();
        channels.insert(
            Channel::Body,
            ChannelSetting::new(rng.gen_range(0.5..2.0), 1.0, None),
        );
        let mut goals = Vec::new();
        if engageable {
            let gaze_target = ids[rng.gen_range(0..n)];
            let target = (gaze_target != id).then_some(EntityId(gaze_target));
            channels.insert(Channel::Gaze, ChannelSetting::new(1.0, 1.0, target));
            if rng.gen_bool(0.3) {
                let m = rng.gen_range(0.5..3.0);
                let t = ids[rng.gen_range(0..n)];
                if t != id {
                    channels.insert(
                        Channel::Talking,
                        ChannelSetting::new(m, 1.0, Some(EntityId(t))),
                    );
                }
            }
            if rng.gen_bool(0.2) {
                goals.push(Goal::new(GoalKind::AvoidFocus));
            }
        }
        entities.push(EntitySpec {
            id: EntityId(id),
            name: format!("e{id}"),
            position,
            heading,
            body_radius: 0.3,
            fov_half_angle: rng.gen_range(PI / 6.0..PI / 2.0),
            engageable,
            preferences: BTreeMap::new(),
            channels: Some(channels),
            focus: None,
            goals,
        });
    }
    // engage goals point only at engageable entities
    let engageable: Vec<EntityId> = entities
        .iter()
        .filter(|e| e.engageable)
        .map(|e| e.id)
        .collect();
    for e in entities
        .iter_mut()
        .filter(|e| e.engageable && e.goals.is_empty())
    {
        if rng.gen_bool(0.3) && engageable.len() > 1 {
            let t = engageable[rng.gen_range(0..engageable.len())];
            if t != e.id {
                e.goals.push(Goal::new(GoalKind::Engage { target: t }));
            }
        }
    }
    ScenarioFile {
        schema_version: SCHEMA_VERSION,
        name: format!("random_{n}_{seed}"),
        description: String::new(),
        seed,
        ticks: 100,
        environment: Environment {
            noise: BTreeMap::new(),
            bounds: Bounds {
                min: Point::new(-half - 1.0, -half - 1.0),
                max: Point::new(half + 1.0, half + 1.0),
            },
        },
        alignment: BTreeMap::new(),
        engine: EngineSection::default(),
        entities,
        script: Vec::new(),
        stop: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_scenarios_load() {
        for name in bundled_names() {
            let s = load_scenario_or_bundled(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn fig4_has_three_named_entities() {
        let s = load_scenario_or_bundled("fig4").unwrap();
        let names: Vec<_> = s.world.entities().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["Alex", "Bob", "Carla"]);
    }

    #[test]
    fn negative_magnitude_names_the_field() {
        let src = r#"{"schema_version": 1, "entities": [
            {"id": 1, "name": "a", "position": {"x": 0, "y": 0}},
            {"id": 2, "name": "b", "position": {"x": 1, "y": 0},
             "channels": {"body": {"magnitude": -1}}}
        ]}"#;
        match parse_scenario(src) {
            Err(ScenarioError::Schema { path, .. }) => {
                assert_eq!(path, "entities[1].channels.body.magnitude")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(
            parse_scenario(""),
            Err(ScenarioError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let src = r#"{"schema_version": 1, "entities": [], "colour": "red"}"#;
        assert!(matches!(
            parse_scenario(src),
            Err(ScenarioError::Parse { .. })
        ));
        let src = r#"{"schema_version": 9, "entities": [{"id": 1, "name": "a", "position": {"x": 0, "y": 0}}]}"#;
        assert!(matches!(
            parse_scenario(src),
            Err(ScenarioError::Version { found: 9, .. })
        ));
    }

    #[test]
    fn invalid_world_is_reported() {
        let src = r#"{"schema_version": 1, "entities": [
            {"id": 1, "name": "a", "position": {"x": 0, "y": 0}},
            {"id": 1, "name": "b", "position": {"x": 1, "y": 0}}
        ]}"#;
        match parse_scenario(src) {
            Err(ScenarioError::Invalid(v)) => assert_eq!(v.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_scenarios_are_valid_and_seeded() {
        for seed in 0..20 {
            let f = random_scenario(30, seed);
            f.build().unwrap();
            assert_eq!(f, random_scenario(30, seed));
        }
    }
}
