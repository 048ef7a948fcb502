#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use engagesim::focus::FocusMap;
use engagesim::model::{Bounds, ChannelSetting, Environment};
use engagesim::{Channel, Entity, EntityId, Point, World};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SCALABLE: [Channel; 5] = [
    Channel::Body,
    Channel::Gaze,
    Channel::Gesture,
    Channel::Talking,
    Channel::Touch,
];

/// A random scene of `n` entities in a 6 m square. Entity 1 and 2 are
/// always engageable people; the rest are people or objects.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> World {
    let mut entities = Vec::with_capacity(n);
    for i in 1..=n as u32 {
        let pos = Point::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let heading = rng.gen_range(-PI..PI);
        let engageable = i <= 2 || rng.gen_bool(0.75);
        let mut e = if engageable {
            Entity::person(i, &format!("p{i}"), pos, heading)
        } else {
            Entity::object(i, &format!("o{i}"), pos, rng.gen_range(0.2..3.0))
        };
        if engageable {
            e.fov_half_angle = rng.gen_range(PI / 6.0..=PI);
            e.channel_settings.clear();
            for c in SCALABLE {
                if rng.gen_bool(0.6) || c == Channel::Body {
                    let target = if c.is_directed() {
                        let t = rng.gen_range(1..=n as u32);
                        (t != i).then_some(EntityId(t))
                    } else {
                        None
                    };
                    let m = rng.gen_range(0.1..3.0);
                    let contribution = rng.gen_range(0.2..1.5);
                    e.channel_settings
                        .insert(c, ChannelSetting::new(m, contribution, target));
                }
            }
            for c in Channel::ALL {
                if rng.gen_bool(0.3) {
                    e.preferences.per_channel.insert(c, rng.gen_range(0.0..2.0));
                }
            }
            if rng.gen_bool(0.2) {
                e.last_displacement = rng.gen_range(0.1..0.5);
            }
        }
        entities.push(e);
    }
    let mut noise = BTreeMap::new();
    for c in Channel::ALL {
        if rng.gen_bool(0.3) {
            noise.insert(c, rng.gen_range(0.0..0.9));
        }
    }
    World::new(
        entities,
        Environment {
            noise,
            bounds: Bounds::default(),
        },
        rng.gen(),
    )
}

pub fn random_focus_map(rng: &mut ChaCha8Rng, n: usize) -> FocusMap {
    (1..=n as u32)
        .map(|i| (EntityId(i), EntityId(rng.gen_range(1..=n as u32))))
        .collect()
}

/// Connected components by repeated minimum-label propagation over the
/// undirected focus edges; components of size one are dropped.
pub fn brute_force_groups(map: &FocusMap) -> Vec<Vec<EntityId>> {
    let ids: Vec<EntityId> = map.keys().copied().collect();
    let mut label: BTreeMap<EntityId, EntityId> = ids.iter().map(|&i| (i, i)).collect();
    loop {
        let mut changed = false;
        for (&a, &b) in map {
            if a == b || !label.contains_key(&b) {
                continue;
            }
            let m = label[&a].min(label[&b]);
            for x in [a, b] {
                if label[&x] != m {
                    label.insert(x, m);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut comps: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
    for (&id, &l) in &label {
        comps.entry(l).or_default().push(id);
    }
    comps.into_values().filter(|c| c.len() > 1).collect()
}

fn wrap(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    if x < -PI {
        x += 2.0 * PI;
    }
    x.abs()
}

/// Interpreted effort written out from first principles, for checking the
/// library's computation. Uses the default alignment parameters.
pub fn oracle_ei(world: &World, sender: &Entity, receiver: &Entity, channel: Channel) -> f64 {
    if sender.id == receiver.id {
        return 0.0;
    }
    let (cone, k, reach) = match channel {
        Channel::Walking => (PI, 2.0, 0.0),
        Channel::Body => (PI, 1.0, 0.0),
        Channel::Gaze => (PI / 4.0, 1.0, 0.0),
        Channel::Touch => (PI / 2.0, 0.0, 0.3),
        Channel::Gesture => (PI / 3.0, 1.0, 0.0),
        Channel::Talking => (PI / 2.0, 2.0, 0.0),
        Channel::Bumping => (PI, 1.0, 0.0),
    };
    let (m, c, target) = match channel {
        Channel::Walking => {
            if !sender.engageable || sender.last_displacement <= 0.0 {
                return 0.0;
            }
            (1.0, 1.0, None)
        }
        Channel::Bumping => {
            let overlapping = world.entities().iter().any(|o| {
                o.id != sender.id
                    && o.pose.position.distance(sender.pose.position)
                        < o.pose.body_radius + sender.pose.body_radius
            });
            if !sender.engageable || !overlapping {
                return 0.0;
            }
            (5.0, 1.0, None)
        }
        _ => match sender.channel_settings.get(&channel) {
            Some(s) if sender.engageable || channel == Channel::Body => {
                (s.magnitude, s.contribution, s.target)
            }
            _ => return 0.0,
        },
    };
    let noise = world
        .environment
        .noise
        .get(&channel)
        .copied()
        .unwrap_or(0.0);
    let t = 1.0 - noise;
    let p = receiver
        .preferences
        .per_channel
        .get(&channel)
        .copied()
        .unwrap_or(1.0);

    let dx = receiver.pose.position.x - sender.pose.position.x;
    let dy = receiver.pose.position.y - sender.pose.position.y;
    let d = (dx * dx + dy * dy).sqrt();
    let directed = matches!(
        channel,
        Channel::Gaze | Channel::Gesture | Channel::Talking | Channel::Touch
    );
    let visual = matches!(
        channel,
        Channel::Body | Channel::Gaze | Channel::Gesture | Channel::Bumping
    );
    let contact = matches!(channel, Channel::Touch | Channel::Bumping);

    if contact && d > sender.pose.body_radius + receiver.pose.body_radius + reach {
        return 0.0;
    }
    let mut a = 1.0;
    if directed {
        let Some(tid) = target else { return 0.0 };
        let Some(tgt) = world.get(tid) else {
            return 0.0;
        };
        if d > 0.0 {
            let tx = tgt.pose.position.x - sender.pose.position.x;
            let ty = tgt.pose.position.y - sender.pose.position.y;
            let aim = if tx == 0.0 && ty == 0.0 {
                sender.pose.heading
            } else {
                ty.atan2(tx)
            };
            let off = wrap(dy.atan2(dx) - aim);
            if off >= cone {
                return 0.0;
            }
            a *= (off / cone * PI / 2.0).cos();
        }
    }
    if visual && d > 0.0 {
        let seen_at = wrap((-dy).atan2(-dx) - receiver.pose.heading);
        if seen_at > receiver.fov_half_angle + 1e-12 {
            return 0.0;
        }
    }
    a *= (1.0 + d).powf(-k);
    t * m * c * a * p
}

/// Total EI `receiver` gets from `sender` across every channel.
pub fn oracle_total(world: &World, sender: &Entity, receiver: &Entity) -> f64 {
    Channel::ALL
        .iter()
        .map(|&c| oracle_ei(world, sender, receiver, c))
        .sum()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

/// The sender's scalable settings rescaled to a total magnitude `m`, in
/// their current proportions (Body alone at unit weight when none is active).
pub fn scaled_sender(sender: &Entity, m: f64) -> Entity {
    let mut active: Vec<(Channel, ChannelSetting)> = sender
        .channel_settings
        .iter()
        .filter(|(c, s)| {
            SCALABLE.contains(c) && s.magnitude > 0.0 && (!c.is_directed() || s.target.is_some())
        })
        .map(|(&c, &s)| (c, s))
        .collect();
    if active.is_empty() {
        active.push((Channel::Body, ChannelSetting::new(1.0, 1.0, None)));
    }
    let total: f64 = active.iter().map(|(_, s)| s.magnitude).sum();
    let mut e = sender.clone();
    for (c, s) in active {
        e.channel_settings.insert(
            c,
            ChannelSetting::new(s.magnitude / total * m, s.contribution, s.target),
        );
    }
    e
}

pub fn with_entity(world: &World, replacement: Entity) -> World {
    let mut w = world.clone();
    let id = replacement.id;
    *w.get_mut(id).unwrap() = replacement;
    w
}

/// Smallest total magnitude at which `target` gets at least the strongest
/// competitor plus `epsilon` from `sender`, found by bisection over the
/// first-principles EI. `None` when no magnitude reaches it.
pub fn bisect_required(
    world: &World,
    sender: EntityId,
    target: EntityId,
    baseline: f64,
    epsilon: f64,
) -> Option<f64> {
    let s = world.get(sender)?;
    let t = world.get(target)?;
    let competitor = world
        .entities()
        .iter()
        .filter(|o| o.id != sender && o.id != target)
        .map(|o| oracle_total(world, o, t))
        .fold(baseline, f64::max);
    let need = competitor + epsilon;
    let gain = |m: f64| {
        let w = with_entity(world, scaled_sender(s, m));
        oracle_total(&w, w.get(sender).unwrap(), w.get(target).unwrap())
    };
    if gain(0.0) >= need {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while gain(hi) < need {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gain(mid) >= need {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Some(hi)
}
