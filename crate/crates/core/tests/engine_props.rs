mod common;

use common::random_scene;
use engagesim::group::detect_groups;
use engagesim::relation::compute_state_matrix;
use engagesim::scenario::{bundled_source, random_scenario, ScenarioFile};
use engagesim::{run, Channel, EntityId, SimParams, World};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn runs_are_deterministic_and_consistent(seed in any::<u64>(), n in 1usize..8, jitter in prop::sample::select(vec![0.0, 0.2])) {
        let w = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let mut params = SimParams::default();
        params.emission.magnitude_jitter = jitter;
        let a = run(w.clone(), params.clone(), vec![], 8, None).unwrap();
        let b = run(w.clone(), params, vec![], 8, None).unwrap();
        prop_assert_eq!(&a, &b);
        for (i, r) in a.iter().enumerate() {
            prop_assert_eq!(r.tick, i as u64);
            let mut m = compute_state_matrix(&r.focus_map);
            m.tick = r.tick;
            prop_assert_eq!(&r.states, &m);
            prop_assert_eq!(&r.groups, &detect_groups(&r.focus_map));
            for e in &r.entities {
                if !e.engageable {
                    prop_assert_eq!(r.focus_map[&e.id], e.id);
                    prop_assert!(r.plans.iter().all(|p| p.entity != e.id));
                }
            }
        }
    }

    #[test]
    fn entity_order_is_irrelevant(seed in any::<u64>(), n in 2usize..12) {
        let file = random_scenario(n, seed);
        let mut shuffled = file.clone();
        shuffled.entities.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let a = file.build().unwrap();
        let b = shuffled.build().unwrap();
        let ra = run(a.world, a.params, a.script, 6, None).unwrap();
        let rb = run(b.world, b.params, b.script, 6, None).unwrap();
        prop_assert_eq!(ra, rb);
    }
}

#[test]
fn jitter_depends_on_seed() {
    let mut w = random_scene(&mut ChaCha8Rng::seed_from_u64(9), 4);
    let mut params = SimParams::default();
    params.emission.magnitude_jitter = 0.3;
    let a = run(w.clone(), params.clone(), vec![], 1, None).unwrap();
    w.rng_seed ^= 1;
    let b = run(w, params, vec![], 1, None).unwrap();
    assert_ne!(a[0].ei_tables, b[0].ei_tables);
}

#[test]
fn scripted_gesture_is_visible_from_the_next_tick() {
    let file: ScenarioFile = serde_json::from_str(bundled_source("fig4").unwrap()).unwrap();
    let s = file.build().unwrap();
    let recs = run(s.world, s.params, s.script, 5, None).unwrap();
    let gestures = |t: usize| {
        recs[t]
            .entity(EntityId(2))
            .unwrap()
            .emissions
            .iter()
            .any(|e| e.channel == Channel::Gesture)
    };
    assert!(!gestures(2));
    assert!(gestures(3));
}

#[test]
fn empty_world_steps() {
    let w = World::new(vec![], Default::default(), 0);
    let recs = run(w, SimParams::default(), vec![], 3, None).unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs
        .iter()
        .all(|r| r.focus_map.is_empty() && r.groups.is_empty()));
}
