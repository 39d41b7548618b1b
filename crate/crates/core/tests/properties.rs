use proptest::prelude::*;

use memristor_rl::checkpoint;
use memristor_rl::config::{Config, Scale};
use memristor_rl::device::{Crossbar, DeviceCell, DeviceParams, VariationMode};
use memristor_rl::harness::{build_population, compute_metrics, DESK_VARIATIONS, VARIATION_LEVELS};
use memristor_rl::network::{SeparateNetWeights, SharedNetWeights, WeightLayout};
use memristor_rl::pendulum::{step, Action, PendulumConfig, PendulumState};
use memristor_rl::training::TrialRecord;

fn variation() -> impl Strategy<Value = VariationMode> {
    prop_oneof![
        Just(VariationMode::Ideal),
        Just(VariationMode::Pct30),
        Just(VariationMode::FullRange)
    ]
}

proptest! {
    #[test]
    fn conductance_stays_in_range(
        g in 0.0f64..=1.0,
        vth_set in 1.0f64..5.5,
        vth_reset in 1.0f64..5.5,
        pulses in prop::collection::vec((-8.0f64..8.0, 1e-9f64..1e-2), 1..50),
    ) {
        let p = DeviceParams::default();
        let mut c = DeviceCell::new(g, vth_set, vth_reset);
        for (v, d) in pulses {
            c.apply_pulse(v, d, &p);
            prop_assert!((p.g_min..=p.g_max).contains(&c.g));
        }
    }

    #[test]
    fn set_pulses_never_lower_conductance(g in 0.0f64..=1.0, v in 0.0f64..8.0, d in 1e-9f64..1e-2) {
        let p = DeviceParams::default();
        let mut up = DeviceCell::ideal(g);
        up.apply_pulse(v, d, &p);
        prop_assert!(up.g >= g);
        let mut down = DeviceCell::ideal(g);
        down.apply_pulse(-v, d, &p);
        prop_assert!(down.g <= g);
    }

    #[test]
    fn blocked_devices_ignore_manhattan_pulses(seed in any::<u64>(), sign in prop_oneof![Just(-1i8), Just(1i8)]) {
        use rand::SeedableRng;
        let p = DeviceParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut xbar = Crossbar::new(1, 1, p, VariationMode::FullRange, &mut rng);
        let pair = *xbar.pairs().first().unwrap();
        let blocked = pair.pos.vth_set.min(pair.pos.vth_reset).min(pair.neg.vth_set).min(pair.neg.vth_reset)
            > p.manhattan_amplitude;
        let before = xbar.read_weights();
        xbar.manhattan_update(&[sign]).unwrap();
        if blocked {
            prop_assert_eq!(xbar.read_weights(), before);
        }
    }

    #[test]
    fn exact_write_round_trips(w in -3.0f64..=3.0, mode in variation(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let p = DeviceParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut xbar = Crossbar::new(1, 1, p, mode, &mut rng);
        xbar.write_exact(&[w]).unwrap();
        prop_assert!((xbar.read_weights()[0] - w).abs() < 1e-9);
    }

    #[test]
    fn checkpoints_round_trip(values in prop::collection::vec(-1e3f64..1e3, 72)) {
        let w = SeparateNetWeights::from_flat(&values).unwrap();
        let back: SeparateNetWeights = checkpoint::from_str(&checkpoint::to_string(&w)).unwrap();
        prop_assert_eq!(back, w);
        let shared = SharedNetWeights::from_flat(&values[..42]).unwrap();
        prop_assert!(checkpoint::from_str::<SeparateNetWeights>(&checkpoint::to_string(&shared)).is_err());
    }

    #[test]
    fn plant_is_mirror_symmetric(
        theta in -0.5f64..0.5,
        theta_dot in -0.5f64..0.5,
        alpha in -0.15f64..0.15,
        alpha_dot in -1.0f64..1.0,
        ccw in any::<bool>(),
    ) {
        let cfg = PendulumConfig::default();
        let s = PendulumState::new(theta, theta_dot, alpha, alpha_dot);
        let a = Action::from_bit(ccw);
        let direct = step(s, a, &cfg).unwrap();
        let mirrored = step(s.mirrored(), a.flipped(), &cfg).unwrap();
        prop_assert_eq!(direct.state.mirrored(), mirrored.state);
        prop_assert_eq!(direct.reward, mirrored.reward);
    }

    #[test]
    fn metrics_mean_matches_trials(steps in prop::collection::vec(1usize..=5000, 1..200), pre in 0.0f64..5000.0) {
        let trials: Vec<TrialRecord> = steps
            .iter()
            .map(|&s| TrialRecord { steps_survived: s, updates_applied: 0, success: s == 5000, diverged: false })
            .collect();
        let m = compute_metrics(&trials, pre, 100.0).unwrap();
        let mean = steps.iter().map(|&s| s as f64).sum::<f64>() / steps.len() as f64;
        prop_assert!((m.mean_t2f - mean).abs() < 1e-9);
        prop_assert!((m.efficiency.unwrap() - (mean - pre) / 100.0).abs() < 1e-9);
    }
}

#[test]
fn full_population_covers_every_variation_equally() {
    let pop = build_population(Scale::Full, 3);
    assert_eq!(pop.len(), 2500);
    for &m in &VARIATION_LEVELS {
        for &l in &VARIATION_LEVELS {
            let n = pop.iter().filter(|a| a.mass_pct == m && a.length_pct == l).count();
            assert_eq!(n, 100, "mass {m} length {l}");
        }
    }
}

#[test]
fn desk_population_is_a_latin_square() {
    let pop = build_population(Scale::Desk, 3);
    assert_eq!(pop.len(), 25);
    for &(m, l) in &DESK_VARIATIONS {
        assert_eq!(pop.iter().filter(|a| a.mass_pct == m && a.length_pct == l).count(), 5);
    }
    for &level in &VARIATION_LEVELS {
        assert_eq!(DESK_VARIATIONS.iter().filter(|v| v.0 == level).count(), 1);
        assert_eq!(DESK_VARIATIONS.iter().filter(|v| v.1 == level).count(), 1);
    }
}

#[test]
fn same_seed_gives_same_population() {
    assert_eq!(build_population(Scale::Desk, 9), build_population(Scale::Desk, 9));
    assert_ne!(build_population(Scale::Desk, 9), build_population(Scale::Desk, 10));
}

#[test]
fn config_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let mut c = Config::default();
    c.harness.test_states = 42;
    c.training.pretrain_c = 20;
    std::fs::write(&path, c.to_toml().unwrap()).unwrap();
    let back = Config::load(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash().unwrap(), c.hash().unwrap());
}
