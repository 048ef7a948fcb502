//! Conversion of emitted effort into receiver-specific interpreted effort.
//!
//! Every emission reaching a receiver is scored as the product of five
//! factors: contrast against the background, the sender's magnitude and
//! contribution, the geometric alignment between the two entities and the
//! receiver's preference for the channel. Alignment folds together sender
//! directivity, the receiver's field of view, distance attenuation and the
//! contact gate of touch-like channels.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{angle_diff, Channel, EffortEmission, Entity, EntityId, Environment, World};

/// Geometry parameters for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelAlignment {
    /// Half-angle of the sender's emission cone (directed channels only).
    pub cone_half_angle: f64,
    /// Exponent `k` of the `(1 + d)^-k` distance law.
    pub attenuation_exponent: f64,
    /// Reach beyond touching bodies for contact channels, meters. The
    /// contact threshold is the sum of both body radii plus this reach.
    pub contact_reach: f64,
}

impl ChannelAlignment {
    pub fn default_for(channel: Channel) -> Self {
        let (cone, exponent, reach) = match channel {
            Channel::Walking => (PI, 2.0, 0.0),
            Channel::Body => (PI, 1.0, 0.0),
            Channel::Gaze => (PI / 4.0, 1.0, 0.0),
            Channel::Touch => (PI / 2.0, 0.0, 0.3),
            Channel::Gesture => (PI / 3.0, 1.0, 0.0),
            Channel::Talking => (PI / 2.0, 2.0, 0.0),
            Channel::Bumping => (PI, 1.0, 0.0),
        };
        Self {
            cone_half_angle: cone,
            attenuation_exponent: exponent,
            contact_reach: reach,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlignmentModel {
    pub channels: BTreeMap<Channel, ChannelAlignment>,
}

impl Default for AlignmentModel {
    fn default() -> Self {
        Self {
            channels: Channel::ALL
                .iter()
                .map(|&c| (c, ChannelAlignment::default_for(c)))
                .collect(),
        }
    }
}

impl AlignmentModel {
    pub fn get(&self, channel: Channel) -> ChannelAlignment {
        self.channels
            .get(&channel)
            .copied()
            .unwrap_or_else(|| ChannelAlignment::default_for(channel))
    }

    pub fn contact_threshold(&self, channel: Channel, a: &Entity, b: &Entity) -> f64 {
        a.pose.body_radius + b.pose.body_radius + self.get(channel).contact_reach
    }

    pub fn is_valid(&self) -> bool {
        self.channels.values().all(|c| {
            c.cone_half_angle > 0.0
                && c.cone_half_angle <= PI
                && c.attenuation_exponent >= 0.0
                && c.contact_reach >= 0.0
        })
    }
}

/// How derived channels are produced and whether magnitudes are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmissionConfig {
    /// Walking magnitude while the entity moved during the previous tick.
    pub walking_magnitude: f64,
    /// Bumping magnitude while bodies overlap.
    pub bumping_magnitude: f64,
    /// Relative uniform jitter applied to every emitted magnitude; 0 disables.
    pub magnitude_jitter: f64,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        Self {
            walking_magnitude: 1.0,
            bumping_magnitude: 5.0,
            magnitude_jitter: 0.0,
        }
    }
}

/// The five factors whose product is the interpreted effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EiFactors {
    pub contrast: f64,
    pub magnitude: f64,
    pub contribution: f64,
    pub alignment: f64,
    pub preference: f64,
}

impl EiFactors {
    pub fn product(&self) -> f64 {
        self.contrast * self.magnitude * self.contribution * self.alignment * self.preference
    }

    pub fn any_zero(&self) -> bool {
        self.contrast == 0.0
            || self.magnitude == 0.0
            || self.contribution == 0.0
            || self.alignment == 0.0
            || self.preference == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEi {
    pub receiver: EntityId,
    pub sender: EntityId,
    pub channel: Channel,
    pub value: f64,
    pub factors: EiFactors,
}

/// Direction (radians) in which a directed emission from `sender` toward
/// `target` points.
pub fn emission_direction(sender: &Entity, target: &Entity) -> f64 {
    let delta = target.pose.position - sender.pose.position;
    if delta.x == 0.0 && delta.y == 0.0 {
        sender.pose.heading
    } else {
        delta.angle()
    }
}

/// An emission with its resolved pointing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitted {
    pub emission: EffortEmission,
    /// Absolute direction of a directed emission; `None` for omnidirectional.
    pub direction: Option<f64>,
}

/// Emissions of one entity built from its settings, plus derived Walking
/// and Bumping. Jitter is not applied here.
pub fn emissions_of(entity: &Entity, world: &World, cfg: &EmissionConfig) -> Vec<Emitted> {
    let mut out = Vec::new();
    for channel in Channel::ALL {
        match channel {
            Channel::Walking => {
                if entity.engageable
                    && entity.last_displacement > 0.0
                    && cfg.walking_magnitude > 0.0
                {
                    out.push(Emitted {
                        emission: EffortEmission {
                            sender: entity.id,
                            channel,
                            magnitude: cfg.walking_magnitude,
                            contribution: 1.0,
                            target: None,
                        },
                        direction: None,
                    });
                }
            }
            Channel::Bumping => {
                if entity.engageable && cfg.bumping_magnitude > 0.0 && overlaps_any(entity, world) {
                    out.push(Emitted {
                        emission: EffortEmission {
                            sender: entity.id,
                            channel,
                            magnitude: cfg.bumping_magnitude,
                            contribution: 1.0,
                            target: None,
                        },
                        direction: None,
                    });
                }
            }
            _ => {
                let Some(s) = entity.setting(channel) else {
                    continue;
                };
                if !s.is_active(channel) || (!entity.engageable && channel != Channel::Body) {
                    continue;
                }
                let direction = if channel.is_directed() {
                    match s.target.and_then(|t| world.get(t)) {
                        Some(t) => Some(emission_direction(entity, t)),
                        None => continue,
                    }
                } else {
                    None
                };
                out.push(Emitted {
                    emission: EffortEmission {
                        sender: entity.id,
                        channel,
                        magnitude: s.magnitude,
                        contribution: s.contribution,
                        target: if channel.is_directed() {
                            s.target
                        } else {
                            None
                        },
                    },
                    direction,
                });
            }
        }
    }
    out
}

fn overlaps_any(entity: &Entity, world: &World) -> bool {
    world.entities().iter().any(|o| {
        o.id != entity.id
            && entity.pose.position.distance(o.pose.position)
                < entity.pose.body_radius + o.pose.body_radius
    })
}

/// Emissions of every entity, indexed like `world.entities()`, with jitter
/// drawn from a generator seeded by `(rng_seed, tick)` in id/channel order.
pub fn effective_emissions(world: &World, cfg: &EmissionConfig) -> Vec<Vec<Emitted>> {
    let mut all: Vec<Vec<Emitted>> = world
        .entities()
        .iter()
        .map(|e| emissions_of(e, world, cfg))
        .collect();
    if cfg.magnitude_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(world.rng_seed);
        rng.set_stream(world.tick);
        for em in all.iter_mut().flatten() {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            em.emission.magnitude =
                (em.emission.magnitude * (1.0 + cfg.magnitude_jitter * u)).max(0.0);
        }
    }
    all
}

/// Background contrast of a channel: `1 - noise`.
pub fn contrast(environment: &Environment, channel: Channel) -> f64 {
    (1.0 - environment.noise(channel)).clamp(0.0, 1.0)
}

/// Geometric alignment in `[0, 1]` of an emission from `sender` as seen by
/// `receiver`.
pub fn alignment(
    sender: &Entity,
    emitted: &Emitted,
    receiver: &Entity,
    model: &AlignmentModel,
) -> f64 {
    let channel = emitted.emission.channel;
    let params = model.get(channel);
    let delta = receiver.pose.position - sender.pose.position;
    let d = delta.norm();
    let coincident = d == 0.0;

    if channel.is_contact() && d > model.contact_threshold(channel, sender, receiver) {
        return 0.0;
    }

    let directivity = match (channel.is_directed(), emitted.direction) {
        (false, _) => 1.0,
        (true, None) => 0.0,
        (true, Some(_)) if coincident => 1.0,
        (true, Some(dir)) => cone_falloff(angle_diff(dir, delta.angle()), params.cone_half_angle),
    };
    if directivity == 0.0 {
        return 0.0;
    }

    let reception = if channel.is_visual() && !coincident {
        let seen_at = angle_diff(
            (sender.pose.position - receiver.pose.position).angle(),
            receiver.pose.heading,
        );
        if seen_at <= receiver.fov_half_angle + 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0
    };
    if reception == 0.0 {
        return 0.0;
    }

    directivity * (1.0 + d).powf(-params.attenuation_exponent)
}

/// Raised-cosine falloff: 1 on the axis, 0 at and beyond the cone edge.
pub fn cone_falloff(off_axis: f64, half_angle: f64) -> f64 {
    if off_axis >= half_angle {
        return 0.0;
    }
    (off_axis / half_angle * FRAC_PI_2).cos().max(0.0)
}

pub fn compute_channel_ei(
    emitted: &Emitted,
    sender: &Entity,
    receiver: &Entity,
    environment: &Environment,
    model: &AlignmentModel,
) -> ChannelEi {
    let channel = emitted.emission.channel;
    let factors = EiFactors {
        contrast: contrast(environment, channel),
        magnitude: emitted.emission.magnitude,
        contribution: emitted.emission.contribution,
        alignment: alignment(sender, emitted, receiver, model),
        preference: receiver.preferences.get(channel),
    };
    ChannelEi {
        receiver: receiver.id,
        sender: sender.id,
        channel,
        value: factors.product(),
        factors,
    }
}

/// Every `(receiver, sender, channel)` interpretation for the world snapshot,
/// ordered by receiver id, then sender id, then channel.
pub fn compute_all_ei(
    world: &World,
    model: &AlignmentModel,
    cfg: &EmissionConfig,
) -> Vec<ChannelEi> {
    let emissions = effective_emissions(world, cfg);
    compute_all_ei_from(world, &emissions, model)
}

pub fn compute_all_ei_from(
    world: &World,
    emissions: &[Vec<Emitted>],
    model: &AlignmentModel,
) -> Vec<ChannelEi> {
    let entities = world.entities();
    let mut out = Vec::new();
    for receiver in entities {
        for (sender, emitted) in entities.iter().zip(emissions) {
            if sender.id == receiver.id {
                continue;
            }
            for em in emitted {
                out.push(compute_channel_ei(
                    em,
                    sender,
                    receiver,
                    &world.environment,
                    model,
                ));
            }
        }
    }
    out
}
