use std::collections::BTreeMap;

use exfront::lattice::{enabled_events, simulate, BoundaryPolicy, FrontState, RecorderSpec, SimConfig};
use exfront::map_check::{round_trip, round_trip_zr};
use exfront::regen::{regen_replicas, RegenMode, RegenParams, RegenRecord};
use exfront::stats::basic::tv_distance;
use exfront::stats::estimates::{cycle_estimates, EstimateOptions};
use exfront::stats::front_law::{mu_t, FrontEngine};
use exfront::zero_range::{commutes, ZeroRangeState};
use proptest::prelude::*;

fn word(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 1..max)
}

fn dist() -> impl Strategy<Value = BTreeMap<u8, f64>> {
    prop::collection::btree_map(0u8..12, 0.01f64..1.0, 1..8).prop_map(|m| {
        let s: f64 = m.values().sum();
        m.into_iter().map(|(k, v)| (k, v / s)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exclusion_round_trip(w in word(40), front in -30i64..30, counter in 0i64..30) {
        let window = w.len() - 1 + 3;
        let s = FrontState::from_word_at(front, counter, &w, window, BoundaryPolicy::Frozen);
        let rt = round_trip(&s).unwrap();
        prop_assert!(rt != Some(false));
        if w.contains(&0) {
            prop_assert_eq!(rt, Some(true));
        }
    }

    #[test]
    fn zero_range_round_trip(stacks in prop::collection::vec(0u32..5, 2..20), front in -30i64..30, counter in 0i64..30) {
        let window = stacks.iter().map(|&h| h as usize + 1).sum::<usize>() - 1;
        let z = ZeroRangeState { zfront: front - counter, counter, stacks };
        prop_assert!(round_trip_zr(&z, front, window).unwrap());
    }

    #[test]
    fn every_enabled_event_commutes(w in word(30), pick in any::<prop::sample::Index>(), rho in 0.05f64..0.95) {
        let s = FrontState::from_word(&w, w.len() + 4, BoundaryPolicy::Frozen);
        let evs = enabled_events(&s, rho);
        prop_assume!(!evs.is_empty());
        let (ev, rate) = evs[pick.index(evs.len())];
        prop_assert!(rate > 0.0);
        prop_assert!(commutes(&s, ev).unwrap() != Some(false));
    }

    #[test]
    fn tv_is_a_metric_on_laws(a in dist(), b in dist(), c in dist()) {
        let ab = tv_distance(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - tv_distance(&b, &a)).abs() < 1e-12);
        prop_assert!(tv_distance(&a, &a).abs() < 1e-12);
        prop_assert!(ab <= tv_distance(&a, &c) + tv_distance(&c, &b) + 1e-12);
    }

    #[test]
    fn ratio_speeds_add_up(
        cycles in prop::collection::vec((0.1f64..50.0, 0i64..20, 0i64..20), 30..80),
    ) {
        let records: Vec<RegenRecord> = cycles
            .iter()
            .enumerate()
            .map(|(i, &(kappa, dp, dq))| RegenRecord {
                replica: 0,
                cycle: i + 2,
                kappa,
                dr: dp + dq,
                dp,
                dq,
                confirmed: true,
                initial: false,
                attempt: 1,
                start: 0.0,
            })
            .collect();
        let est = cycle_estimates(&records, &EstimateOptions { resamples: 50, ..Default::default() }).unwrap();
        prop_assert!((est.v_hat.value - est.v1_hat.value - est.v2_hat.value).abs() < 1e-9);
        prop_assert!(est.sigma_r_hat.value >= 0.0 && est.sigma_p_hat.value >= 0.0);
        prop_assert!(est.v_hat.se >= 0.0 && est.w_hat.se >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fronts_are_monotone(seed in any::<u64>(), rho in 0.05f64..0.95) {
        let cfg = SimConfig { rho, window: 32, horizon: 40.0, seed, ..Default::default() };
        let tr = simulate(&cfg, &RecorderSpec::front_only()).unwrap();
        for pair in tr.records.windows(2) {
            prop_assert!(pair[0].t <= pair[1].t);
            prop_assert!(pair[0].r <= pair[1].r && pair[0].p <= pair[1].p);
        }
    }

    #[test]
    fn cycle_increments_split(seed in any::<u64>(), zr in any::<bool>()) {
        let mut p = RegenParams::new(0.5, 0.3 * 0.16, 0.8 * 0.16, 400.0).unwrap();
        if !zr {
            p.mode = RegenMode::AltHoles;
        }
        for run in regen_replicas(&p, 1, seed).unwrap() {
            for r in &run.records {
                prop_assert_eq!(r.dr, r.dp + r.dq);
                prop_assert!(r.kappa > 0.0);
            }
        }
    }

    #[test]
    fn front_histograms_are_normalised(seed in any::<u64>()) {
        let cfg = SimConfig { rho: 0.5, window: 24, ..Default::default() };
        let law = mu_t(&cfg, 4, &[5.0, 20.0], 200, FrontEngine::Holes, seed).unwrap();
        for h in &law.histograms {
            prop_assert!((h.total() - 1.0).abs() < 1e-9);
            prop_assert!(h.weights.keys().all(|w| w.len() == 4));
        }
    }
}
