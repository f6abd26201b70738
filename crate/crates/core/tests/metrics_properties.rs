use proptest::prelude::*;
use spiking_snake::controllers::ControllerKind;
use spiking_snake::env::EnvConfig;
use spiking_snake::exec::Workers;
use spiking_snake::metrics::{evaluate, Agent, AggregateReport, EpisodeResult, MetricSet};

fn episode() -> impl Strategy<Value = EpisodeResult> {
    (any::<bool>(), 0.001f64..50.0, -6000.0f64..300.0, 0.0f64..=1.0, any::<bool>()).prop_map(
        |(success, t, reward, silence, destroyed)| EpisodeResult {
            seed: 0,
            target_x: 0.0,
            target_y: 0.0,
            success,
            game_time: if success { t } else { 50.0 },
            total_reward: reward,
            silence_rate: silence,
            destroyed,
            steps: 1,
        },
    )
}

fn close(a: &MetricSet, b: &MetricSet) -> bool {
    let pairs = [
        (a.success_rate, b.success_rate),
        (a.game_time, b.game_time),
        (a.total_reward, b.total_reward),
        (a.silence_rate, b.silence_rate),
    ];
    pairs.iter().all(|(x, y)| {
        (x.mean - y.mean).abs() <= 1e-9 * (1.0 + x.mean.abs())
            && (x.std - y.std).abs() <= 1e-9 * (1.0 + x.std.abs())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rates_and_times_stay_in_range(eps in prop::collection::vec(episode(), 1..60)) {
        let m = MetricSet::over_episodes(&eps).unwrap();
        for rate in [m.success_rate.mean, m.silence_rate.mean] {
            prop_assert!((0.0..=1.0).contains(&rate));
        }
        prop_assert!(m.game_time.mean > 0.0 && m.game_time.mean <= 50.0);
        prop_assert!(m.success_rate.std >= 0.0 && m.success_rate.std <= 0.5 + 1e-12);
    }

    #[test]
    fn order_of_episodes_does_not_matter(
        eps in prop::collection::vec(episode(), 1..60),
        rotate in 0usize..60,
    ) {
        let mut shuffled = eps.clone();
        shuffled.reverse();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let a = MetricSet::over_episodes(&eps).unwrap();
        let b = MetricSet::over_episodes(&shuffled).unwrap();
        prop_assert!(close(&a, &b));
    }
}

#[test]
fn same_seed_gives_the_same_report_for_any_worker_count() {
    let mut cfg = EnvConfig::new(ControllerKind::SpikingSoft, 1, 3);
    cfg.time_limit_s = 5.0;
    let report = |workers| {
        let eps = evaluate(&Agent::Random, &cfg, 12, 99, workers).unwrap();
        let r = AggregateReport::new("random", "spikingsoft-1x3", &[eps.clone()]).unwrap();
        (eps, serde_json::to_string(&r).unwrap())
    };
    let (a, ja) = report(Workers::SINGLE);
    let (b, jb) = report(Workers::SINGLE);
    let (c, jc) = report(Workers::new(3).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(ja, jb);
    assert_eq!(ja, jc);
    for e in &a {
        assert!(e.game_time > 0.0 && e.game_time <= 5.0);
        assert!((0.0..=1.0).contains(&e.silence_rate));
    }
}
