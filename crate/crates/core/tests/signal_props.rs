mod common;

use common::{oracle_ei, random_scene, rel_close};
use engagesim::focus::{build_tables, compute_focus, EiTable};
use engagesim::signal::{
    compute_all_ei, compute_channel_ei, effective_emissions, AlignmentModel, EiFactors,
    EmissionConfig,
};
use engagesim::{Channel, EntityId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scene(seed: u64, n: usize) -> engagesim::World {
    random_scene(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ei_matches_first_principles(seed in any::<u64>(), n in 2usize..6) {
        let w = scene(seed, n);
        let eis = compute_all_ei(&w, &AlignmentModel::default(), &EmissionConfig::default());
        for r in w.entities() {
            for s in w.entities() {
                for c in Channel::ALL {
                    let got: f64 = eis
                        .iter()
                        .filter(|e| e.receiver == r.id && e.sender == s.id && e.channel == c)
                        .map(|e| e.value)
                        .sum();
                    let want = oracle_ei(&w, s, r, c);
                    prop_assert!(rel_close(got, want, 1e-9) || (got - want).abs() < 1e-15,
                        "{} -> {} on {}: {} vs {}", s.id, r.id, c, got, want);
                }
            }
        }
    }

    #[test]
    fn ei_is_product_non_negative_and_annihilated(seed in any::<u64>(), n in 2usize..6) {
        let w = scene(seed, n);
        for e in compute_all_ei(&w, &AlignmentModel::default(), &EmissionConfig::default()) {
            prop_assert!(e.value >= 0.0);
            prop_assert_ne!(e.receiver, e.sender);
            prop_assert_eq!(e.value, e.factors.product());
            if e.factors.any_zero() {
                prop_assert_eq!(e.value, 0.0);
            }
            prop_assert!(e.factors.alignment <= 1.0);
        }
    }

    #[test]
    fn ei_monotone_in_magnitude_and_contribution(seed in any::<u64>(), k in 1.0f64..5.0) {
        let w = scene(seed, 4);
        let em = effective_emissions(&w, &EmissionConfig::default());
        let model = AlignmentModel::default();
        for (i, s) in w.entities().iter().enumerate() {
            for e in &em[i] {
                for r in w.entities() {
                    if r.id == s.id { continue; }
                    let base = compute_channel_ei(e, s, r, &w.environment, &model).value;
                    let mut bigger = *e;
                    bigger.emission.magnitude *= k;
                    prop_assert!(compute_channel_ei(&bigger, s, r, &w.environment, &model).value >= base);
                    let mut wider = *e;
                    wider.emission.contribution *= k;
                    prop_assert!(compute_channel_ei(&wider, s, r, &w.environment, &model).value >= base);
                }
            }
        }
    }

    #[test]
    fn zero_factor_annihilates(f in prop::array::uniform5(0.0f64..10.0), which in 0usize..5) {
        let mut f = f;
        f[which] = 0.0;
        let factors = EiFactors { contrast: f[0], magnitude: f[1], contribution: f[2], alignment: f[3], preference: f[4] };
        prop_assert!(factors.any_zero());
        prop_assert_eq!(factors.product(), 0.0);
    }

    #[test]
    fn argmax_is_scale_invariant(vals in prop::collection::vec(0.0f64..5.0, 2..10), k in 0.01f64..100.0, prev in 0u32..10) {
        let totals: Vec<(EntityId, f64)> = vals.iter().enumerate().map(|(i, &v)| (EntityId(i as u32), v)).collect();
        let scaled: Vec<(EntityId, f64)> = totals.iter().map(|&(id, v)| (id, v * k)).collect();
        let a = compute_focus(&EiTable { receiver: EntityId(0), totals }, EntityId(prev));
        let b = compute_focus(&EiTable { receiver: EntityId(0), totals: scaled }, EntityId(prev));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn full_noise_silences_channel(seed in any::<u64>()) {
        let mut w = scene(seed, 4);
        w.environment.noise.insert(Channel::Body, 1.0);
        for e in compute_all_ei(&w, &AlignmentModel::default(), &EmissionConfig::default()) {
            if e.channel == Channel::Body {
                prop_assert_eq!(e.value, 0.0);
            }
        }
    }

    #[test]
    fn ei_tables_cover_every_sender(seed in any::<u64>(), n in 1usize..7) {
        let w = scene(seed, n);
        let eis = compute_all_ei(&w, &AlignmentModel::default(), &EmissionConfig::default());
        let tables = build_tables(&w, &eis, 0.05);
        prop_assert_eq!(tables.len(), w.entities().iter().filter(|e| e.engageable).count());
        for t in &tables {
            prop_assert_eq!(t.totals.len(), w.len());
            prop_assert_eq!(t.total(t.receiver), 0.05);
            for &(id, v) in &t.totals {
                if id == t.receiver { continue; }
                let s = w.get(id).unwrap();
                let r = w.get(t.receiver).unwrap();
                let want = common::oracle_total(&w, s, r);
                prop_assert!(rel_close(v, want, 1e-9) || (v - want).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn worked_example_values() {
    // face to face at 2 m, unit gaze: 1 / (1 + 2)
    use engagesim::model::{ChannelSetting, Environment};
    use engagesim::{Entity, Point, World};
    let mut a = Entity::person(1, "a", Point::new(0.0, 0.0), 0.0);
    let b = Entity::person(2, "b", Point::new(2.0, 0.0), std::f64::consts::PI);
    a.channel_settings.insert(
        Channel::Gaze,
        ChannelSetting::new(1.0, 1.0, Some(EntityId(2))),
    );
    let w = World::new(vec![a, b], Environment::default(), 0);
    let eis = compute_all_ei(&w, &AlignmentModel::default(), &EmissionConfig::default());
    let gaze = eis
        .iter()
        .find(|e| {
            e.sender == EntityId(1) && e.receiver == EntityId(2) && e.channel == Channel::Gaze
        })
        .unwrap();
    assert!((gaze.value - 1.0 / 3.0).abs() < 1e-15);
}
