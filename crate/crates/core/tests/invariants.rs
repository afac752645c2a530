use std::sync::{Arc, OnceLock};

use dsn_sched::env::SchedulingEnv;
use dsn_sched::eval::Histogram;
use dsn_sched::policy::{masked_softmax, sample_action, ActorCritic, Architecture};
use dsn_sched::ppo::compute_gae;
use dsn_sched::problem::WeekProblem;
use dsn_sched::synth::{generate_week, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn desk() -> Arc<WeekProblem> {
    static P: OnceLock<Arc<WeekProblem>> = OnceLock::new();
    P.get_or_init(|| Arc::new(generate_week(&SynthConfig::desk()).unwrap())).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn episodes_keep_their_contract(seed in any::<u64>(), picks in prop::collection::vec(any::<prop::sample::Index>(), 0..200)) {
        let problem = desk();
        let mut env = SchedulingEnv::new(problem.clone()).unwrap();
        env.reset(seed);
        let mut total = 0.0;
        let mut picks = picks.into_iter();
        while !env.is_done() {
            let mask = env.action_mask();
            let open: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            prop_assert!(!open.is_empty());
            let a = picks.next().map_or(open[0], |ix| open[ix.index(open.len())]);
            let before = env.remaining()[a];
            let step = env.step(a).unwrap();
            prop_assert!((0.0..=1.0).contains(&step.reward));
            prop_assert_eq!(before - env.remaining()[a], step.info.allocated_s);
            total += step.reward;
        }
        prop_assert!(env.n_steps() <= env.step_cap());
        prop_assert!(total <= problem.n_requests() as f64);
        for (_, busy) in env.schedule().busy_by_antenna() {
            prop_assert!(busy.is_canonical());
        }
        let busy_total: i64 = env.schedule().tracks.iter().map(|t| t.busy_window().duration() * t.antennas.len() as i64).sum();
        let union_total: i64 = env.schedule().busy_by_antenna().values().map(|s| s.total_duration()).sum();
        prop_assert_eq!(busy_total, union_total, "busy windows overlap");
    }

    #[test]
    fn masked_softmax_is_a_distribution_on_open_actions(
        logits in prop::collection::vec(-50.0f64..50.0, 1..40),
        bits in prop::collection::vec(any::<bool>(), 40),
        keep in any::<prop::sample::Index>(),
    ) {
        let mut mask: Vec<bool> = bits[..logits.len()].to_vec();
        mask[keep.index(logits.len())] = true;
        let p = masked_softmax(&logits, &mask);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (pi, m) in p.iter().zip(&mask) {
            prop_assert!(*m || *pi == 0.0);
        }
    }

    #[test]
    fn sampled_actions_are_never_masked(seed in any::<u64>(), bits in prop::collection::vec(any::<bool>(), 12), keep in 0usize..12) {
        let mut mask = bits;
        mask[keep] = true;
        let arch = Architecture { obs_dim: 5, hidden: [8, 8], n_actions: 12, ..Architecture::for_problem(12) };
        let net = ActorCritic::new(arch, seed);
        let out = net.act(&[1.0, 0.0, -1.0, 0.5, 2.0], &mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let (a, lp) = sample_action(&out, &mut rng);
            prop_assert!(mask[a]);
            prop_assert!(lp <= 0.0);
        }
    }

    #[test]
    fn gae_with_unit_lambda_is_discounted_return(
        rewards in prop::collection::vec(0.0f64..1.0, 1..50),
        gamma in 0.5f64..1.0,
        bootstrap in -3.0f64..3.0,
    ) {
        let n = rewards.len();
        let values: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let dones = vec![false; n];
        let (_, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, 1.0);
        let mut g = bootstrap;
        for t in (0..n).rev() {
            g = rewards[t] + gamma * g;
            prop_assert!((ret[t] - g).abs() < 1e-9);
        }
    }

    #[test]
    fn histogram_counts_every_in_range_value(values in prop::collection::vec(-5.0f64..105.0, 0..300), n in 1usize..30) {
        let h = Histogram::new(&values, 0.0, 100.0, n);
        prop_assert_eq!(h.bins.len(), n);
        prop_assert_eq!(h.total(), values.iter().filter(|v| (0.0..=100.0).contains(*v)).count());
    }
}
