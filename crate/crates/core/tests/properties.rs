use amp_biped::amp::{discriminator_loss, style_reward, Discriminator, AMP_TRANSITION_DIM};
use amp_biped::distill::{distill_loss, history_window, ObservationHistory};
use amp_biped::harness::{success_rate, tracking_accuracy, EpisodeLog, EpisodeRow};
use amp_biped::rl::{
    clipped_surrogate, compose_reward, gae, regularization_reward, task_reward, RewardTerms, RewardWeights,
    PROPRIO_DIM,
};
use amp_biped::sim::TerminationReason;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn row(cmd: f64, vx: f64) -> EpisodeRow {
    EpisodeRow {
        time: 0.0,
        cmd_vx: cmd,
        vx,
        cmd_yaw_rate: 0.0,
        yaw_rate: 0.0,
        joints: [0.0; 4],
        joint_vel: [0.0; 4],
        foot_force: [[0.0; 2]; 2],
        reward: RewardTerms::default(),
    }
}

proptest! {
    #[test]
    fn style_reward_bounded_and_symmetric(d in -50.0f64..50.0, e in 0.0f64..10.0) {
        let r = style_reward(d);
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((style_reward(1.0 + e) - style_reward(1.0 - e)).abs() <= 1e-12);
        if d != 1.0 {
            prop_assert!(r < 1.0);
        }
    }

    #[test]
    fn least_squares_targets_cannot_both_be_met(s in -1e3f64..1e3) {
        prop_assert!((s - 1.0).powi(2) + (s + 1.0).powi(2) >= 2.0);
    }

    #[test]
    fn discriminator_loss_is_non_negative(seed in 0u64..1000, gp in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let disc = Discriminator::new(&[6], &mut rng);
        let demo = Array2::from_shape_fn((5, AMP_TRANSITION_DIM), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
        let agent = Array2::from_shape_fn((4, AMP_TRANSITION_DIM), |(i, j)| ((i * 3 + j) as f64 * 0.91).cos());
        let (loss, grads, terms) = discriminator_loss(&disc, demo.view(), agent.view(), gp).unwrap();
        prop_assert!(loss >= 0.0 && terms.penalty >= 0.0);
        prop_assert!(grads.is_finite());
    }

    #[test]
    fn task_reward_in_range(c in -3.0f64..3.0, v in -3.0f64..3.0, cw in -2.0f64..2.0, w in -2.0f64..2.0) {
        let r = task_reward(c, v, cw, w, 1.0, 0.5);
        prop_assert!(r > 0.0 && r <= 1.5 + 1e-15);
        prop_assert_eq!(task_reward(c, c, cw, cw, 1.0, 0.5), 1.5);
    }

    #[test]
    fn compose_is_additive(t in -10.0f64..10.0, s in 0.0f64..1.0, g in -10.0f64..0.0) {
        let total = compose_reward(t, s, g);
        prop_assert!((total - (t + s + g)).abs() <= 1e-12);
        let terms = RewardTerms { task: t, style: s, regularization: g };
        prop_assert!((terms.total() - total).abs() <= 1e-12);
    }

    #[test]
    fn regularization_never_positive(
        vz in -2.0f64..2.0,
        a in prop::array::uniform4(-1.0f64..1.0),
        p in prop::array::uniform4(-1.0f64..1.0),
        tau in prop::array::uniform4(-20.0f64..20.0),
        viol in 0.0f64..1.0,
    ) {
        prop_assert!(regularization_reward(&RewardWeights::default(), vz, &a, &p, &tau, viol) <= 0.0);
    }

    #[test]
    fn surrogate_never_exceeds_unclipped(r in 0.0f64..3.0, a in -5.0f64..5.0) {
        prop_assert!(clipped_surrogate(r, a, 0.2) <= r * a + 1e-15);
    }

    #[test]
    fn gae_lambda_one_is_discounted_return(
        rewards in prop::collection::vec(-2.0f64..2.0, 1..30),
        values in prop::collection::vec(-2.0f64..2.0, 31),
        done_mask in prop::collection::vec(prop::bool::weighted(0.15), 30),
        gamma in 0.5f64..0.999,
    ) {
        let n = rewards.len();
        let v = &values[..=n];
        let dones = &done_mask[..n];
        let (adv, ret) = gae(&rewards, v, dones, gamma, 1.0).unwrap();
        // oracle: backward discounted sum that restarts at terminations
        let mut g = v[n];
        for t in (0..n).rev() {
            g = rewards[t] + if dones[t] { 0.0 } else { gamma * g };
            prop_assert!((ret[t] - g).abs() <= 1e-9 * (1.0 + g.abs()));
            prop_assert!((adv[t] - (g - v[t])).abs() <= 1e-9 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn gae_lambda_zero_is_td_error(
        rewards in prop::collection::vec(-2.0f64..2.0, 1..20),
        values in prop::collection::vec(-2.0f64..2.0, 21),
        gamma in 0.5f64..0.999,
    ) {
        let n = rewards.len();
        let dones = vec![false; n];
        let (adv, _) = gae(&rewards, &values[..=n], &dones, gamma, 0.0).unwrap();
        for t in 0..n {
            prop_assert!((adv[t] - (rewards[t] + gamma * values[t + 1] - values[t])).abs() <= 1e-12);
        }
    }

    #[test]
    fn distill_loss_non_negative(
        a in prop::array::uniform4(-1.0f64..1.0),
        b in prop::array::uniform4(-1.0f64..1.0),
        la in prop::collection::vec(-3.0f64..3.0, 24),
        lb in prop::collection::vec(-3.0f64..3.0, 24),
        lambda in 0.0f64..5.0,
    ) {
        prop_assert!(distill_loss(&a, &b, &la, &lb, lambda) >= 0.0);
        prop_assert_eq!(distill_loss(&a, &a, &la, &la, lambda), 0.0);
    }

    #[test]
    fn tracking_accuracy_is_a_percentage(pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..50)) {
        let log = EpisodeLog { rows: pairs.iter().map(|&(c, v)| row(c, v)).collect(), horizon: pairs.len(), termination: None };
        let a = tracking_accuracy(&log).unwrap();
        prop_assert!(a > 0.0 && a <= 100.0);
    }

    #[test]
    fn success_rate_is_a_percentage(outcomes in prop::collection::vec(any::<bool>(), 1..40)) {
        let logs: Vec<EpisodeLog> = outcomes
            .iter()
            .map(|&ok| EpisodeLog {
                rows: vec![row(0.5, 0.5); 3],
                horizon: 3,
                termination: if ok { None } else { Some(TerminationReason::Fall) },
            })
            .collect();
        let s = success_rate(&logs).unwrap();
        let expected = 100.0 * outcomes.iter().filter(|&&o| o).count() as f64 / outcomes.len() as f64;
        prop_assert!((0.0..=100.0).contains(&s));
        prop_assert_eq!(s, expected);
    }

    #[test]
    fn history_ring_matches_window(len in 1usize..8, steps in 0usize..30) {
        let seq: Vec<[f64; PROPRIO_DIM]> = (0..steps).map(|k| [k as f64 + 1.0; PROPRIO_DIM]).collect();
        let mut h = ObservationHistory::new(len).unwrap();
        for o in &seq {
            h.push(*o);
        }
        let mut dst = vec![f64::NAN; len * PROPRIO_DIM];
        history_window(&seq, steps, len, &mut dst);
        prop_assert_eq!(dst, h.flatten());
        prop_assert_eq!(h.filled(), steps.min(len));
    }
}
