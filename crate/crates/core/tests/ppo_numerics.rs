use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spiking_snake::controllers::{Controller, ControllerKind, ControllerParams};
use spiking_snake::ppo::gae::{compute_gae, normalize};
use spiking_snake::ppo::policy::{LossCoefficients, Minibatch, Policy};

const COEF: LossCoefficients = LossCoefficients {
    clip: 0.2,
    value: 0.5,
    entropy: 0.01,
};

fn random_batch(policy: &Policy, rng: &mut ChaCha8Rng, size: usize) -> Minibatch {
    let mut batch = Minibatch::default();
    for _ in 0..size {
        let obs: Vec<f64> = (0..policy.obs_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mean = policy.mean_action(&obs);
        let action: Vec<f64> = mean.iter().map(|m| m + rng.gen_range(-1.0..1.0)).collect();
        // Ratios land either well inside the clip range or well outside it.
        let shift = if rng.gen_bool(0.5) {
            rng.gen_range(-0.1..0.1)
        } else {
            rng.gen_range(0.4..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
        };
        batch.old_log_probs.push(policy.log_prob(&mean, &action) + shift);
        batch.obs.push(obs);
        batch.actions.push(action);
        batch.advantages.push(rng.gen_range(-2.0..2.0));
        batch.returns.push(rng.gen_range(-3.0..3.0));
    }
    batch
}

fn loss_at(policy: &Policy, params: &[f64], batch: &Minibatch) -> f64 {
    let mut p = policy.clone();
    p.set_flat_params(params).unwrap();
    p.loss_and_grad(batch, &COEF).unwrap().0.total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_gradient_matches_central_differences(
        seed in 0u64..10_000,
        obs_dim in 1usize..5,
        act_dim in 1usize..4,
        hidden in prop::collection::vec(2usize..6, 1..3),
        size in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = Policy::new(obs_dim, act_dim, &hidden, -0.3, false, &mut rng).unwrap();
        // Larger output weights than the default init so every layer matters.
        let params: Vec<f64> = policy.flat_params().iter().map(|_| rng.gen_range(-0.8..0.8)).collect();
        policy.set_flat_params(&params).unwrap();
        let batch = random_batch(&policy, &mut rng, size);
        let (_, grad) = policy.loss_and_grad(&batch, &COEF).unwrap();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (loss_at(&policy, &up, &batch) - loss_at(&policy, &down, &batch)) / (2.0 * h);
            let err = (grad[i] - fd).abs();
            prop_assert!(
                err <= 1e-5 * (grad[i].abs() + fd.abs()) + 1e-8,
                "param {}: analytic {} numeric {}", i, grad[i], fd
            );
        }
    }

    #[test]
    fn gae_matches_discounted_sums(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..=10),
        values_seed in prop::collection::vec(-5.0f64..5.0, 11),
        terminal_bits in prop::collection::vec(any::<bool>(), 10),
        gamma in 0.0f64..1.0,
        lambda in 0.0f64..1.0,
    ) {
        let n = rewards.len();
        let values = &values_seed[..=n];
        let terminals = &terminal_bits[..n];
        let (adv, ret) = compute_gae(&rewards, values, terminals, gamma, lambda).unwrap();
        for t in 0..n {
            let mut expected = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                let live = if terminals[k] { 0.0 } else { 1.0 };
                let delta = rewards[k] + gamma * live * values[k + 1] - values[k];
                expected += weight * delta;
                if terminals[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            prop_assert!((adv[t] - expected).abs() < 1e-9, "t {}: {} vs {}", t, adv[t], expected);
            prop_assert!((ret[t] - (expected + values[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn normalized_advantages_have_unit_moments(
        mut xs in prop::collection::vec(-100.0f64..100.0, 2..200),
    ) {
        let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-6);
        normalize(&mut xs);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn any_finite_action_lands_inside_the_declared_ranges(
        raw in prop::collection::vec(-1e6f64..1e6, 6),
        m in 1usize..4,
    ) {
        let params = ControllerParams::default();
        for kind in ControllerKind::ALL {
            let mut c = Controller::new(kind, m, &params).unwrap();
            let (lo, hi) = kind.action_bounds();
            c.set_action(&raw[..kind.action_dim(m)]).unwrap();
            match &c {
                Controller::SpikingSoft(s) => {
                    for t in &s.thresholds {
                        let (mu, half) = (0.5 * (t.u_n + t.u_p), 0.5 * (t.u_p - t.u_n));
                        prop_assert!(mu >= lo && mu <= hi);
                        prop_assert!(half >= 0.0 && half <= hi.max(-lo));
                    }
                }
                Controller::Vanilla(v) => {
                    prop_assert!(v.torques.iter().all(|g| *g >= lo && *g <= hi));
                }
                Controller::Cpg(cpg) => {
                    prop_assert!(cpg.tonic.iter().all(|u| *u >= lo && *u <= hi));
                }
            }
        }
    }
}
