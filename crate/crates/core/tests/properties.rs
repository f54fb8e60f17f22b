use mamemq_core::belief::{likelihood, BeliefGrid, CellBox, MASS_TOL};
use mamemq_core::cousins::{cousin_ptt, ensemble_weights, estimate_ptt, relative_eps_w, TransitionCounts};
use mamemq_core::joint::JointSpace;
use mamemq_core::mdp::{LearningSchedule, QRole, QTable};
use mamemq_core::wireless::{dequantize, quantize_arss, NetworkConfig, Position};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimated_and_powered_tensors_are_stochastic(
        n_s in 1usize..7,
        n_a in 1usize..3,
        draws in prop::collection::vec((0usize..7, 0usize..3, 0usize..7), 0..80),
        smoothing in 0.0f64..2.0,
        order in 1u32..9,
    ) {
        let mut counts = TransitionCounts::new(n_s, n_a);
        for (s, a, s2) in draws {
            counts.record(s % n_s, a % n_a, s2 % n_s).unwrap();
        }
        let p = estimate_ptt(&counts, smoothing).unwrap();
        prop_assert!(p.max_row_error() <= 1e-9);
        prop_assert!(cousin_ptt(&p, order).unwrap().max_row_error() <= 1e-9);
    }

    #[test]
    fn ensemble_weights_are_a_distribution(
        base in prop::collection::vec(-5.0f64..5.0, 6),
        noise in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..4),
    ) {
        let mut tables = vec![QTable::from_values(3, 2, base.clone(), QRole::Individual { order: 1 }).unwrap()];
        for (k, n) in noise.iter().enumerate() {
            let v = base.iter().zip(n).map(|(b, e)| b + e).collect();
            tables.push(QTable::from_values(3, 2, v, QRole::Individual { order: k as u32 + 2 }).unwrap());
        }
        let w = ensemble_weights(&tables, relative_eps_w(&tables).unwrap()).unwrap().w;
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x > 0.0));
        prop_assert!(w.iter().all(|x| *x <= w[0] + 1e-15));
    }

    #[test]
    fn belief_stays_normalized(
        ops in prop::collection::vec(0u8..3, 1..25),
        seeds in prop::collection::vec(0.0f64..1.0, 64),
        ax in 0usize..9, ay in 0usize..9,
    ) {
        let side = 9;
        let anchors = [Position::new(ax, ay), Position::new(8 - ax, ay)];
        let boxes = |h: usize| -> Vec<CellBox> { anchors.iter().map(|&a| CellBox::around(a, h, side).unwrap()).collect() };
        let mut grid = BeliefGrid::uniform(side, boxes(1)).unwrap();
        for (k, op) in ops.iter().enumerate() {
            match op {
                0 => {
                    let d: Vec<f64> = (0..grid.len()).map(|i| seeds[(i + k) % seeds.len()]).collect();
                    grid.update(&d).unwrap();
                }
                1 => grid.diffuse(),
                _ => grid.expand(&boxes(1 + k % 3)).unwrap(),
            }
            prop_assert!((grid.total_mass() - 1.0).abs() <= MASS_TOL);
            prop_assert!(grid.mass().iter().all(|m| *m >= 0.0));
        }
    }

    #[test]
    fn likelihood_peaks_at_one(obs in -80.0f64..0.0, preds in prop::collection::vec(-80.0f64..0.0, 1..30), sigma in 0.1f64..5.0) {
        let d = likelihood(obs, &preds, sigma);
        let best = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!((best - 1.0).abs() < 1e-12);
        prop_assert!(d.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn schedules_stay_in_range(t in 0u64..1_000_000) {
        let s = LearningSchedule::default();
        prop_assert!(s.alpha(t) > 0.0 && s.alpha(t) <= 1.0);
        prop_assert!(s.epsilon(t) >= 0.01 && s.epsilon(t) <= 1.0);
        prop_assert!((0.0..1.0 + 1e-15).contains(&s.u(t)));
        prop_assert!(s.u(t + 1) >= s.u(t));
        prop_assert!(s.alpha(t + 1) <= s.alpha(t));
    }

    #[test]
    fn joint_keys_roundtrip(n in 1usize..5, states in prop::collection::vec(0usize..75, 4), actions in prop::collection::vec(0usize..3, 4)) {
        let j = JointSpace::new(n, 75, 3).unwrap();
        let s = &states[..n];
        let a = &actions[..n];
        prop_assert_eq!(j.decode_state(j.state_key(s)), s.to_vec());
        prop_assert_eq!(j.decode_action(j.action_index(a)), a.to_vec());
    }

    #[test]
    fn quantization_is_idempotent_on_levels(bins in 2usize..12, b in 0usize..12) {
        let cfg = NetworkConfig { n_bins: bins, ..NetworkConfig::default() };
        let b = b % bins;
        prop_assert_eq!(quantize_arss(dequantize(b, &cfg), &cfg), b);
    }
}
