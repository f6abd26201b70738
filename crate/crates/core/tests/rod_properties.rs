use proptest::prelude::*;
use spiking_snake::rod::{EnvPhysics, Mat3, RodMaterial, RodState, Vec3};
use spiking_snake::snake::{Snake, SnakeConfig};

const DT: f64 = 1e-3;

fn undamped() -> RodMaterial {
    RodMaterial {
        rayleigh_damping: 0.0,
        ..RodMaterial::default()
    }
}

fn straight(n: usize, material: &RodMaterial) -> RodState {
    RodState::build(n, 0.1 * (n - 1) as f64, material, Vec3::zeros(), Vec3::x()).unwrap()
}

fn kick(rod: &mut RodState, drift: Vec3, wiggle: &[f64]) {
    for (i, v) in rod.velocities.iter_mut().enumerate() {
        let w = wiggle[i % wiggle.len()];
        *v = drift + Vec3::new(0.3 * w, w, -0.5 * w);
    }
    for (e, w) in rod.angular_velocities.iter_mut().enumerate() {
        *w = Vec3::new(0.0, 0.0, 2.0 * wiggle[e % wiggle.len()]);
    }
}

fn orthonormality_error(q: &Mat3) -> f64 {
    (q.transpose() * q - Mat3::identity()).abs().max()
}

fn max_abs_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().max())
        .fold(0.0, f64::max)
}

fn driven_snake(m: usize, n: usize) -> Snake {
    Snake::new(SnakeConfig::new(m, n), RodMaterial::default(), EnvPhysics::default(), DT).unwrap()
}

#[test]
fn free_rod_conserves_momentum_over_ten_thousand_steps() {
    let mat = undamped();
    let env = EnvPhysics::free();
    let mut rod = straight(10, &mat);
    kick(&mut rod, Vec3::new(0.2, -0.1, 0.05), &[0.1, -0.2, 0.05, 0.15]);
    let p0 = rod.linear_momentum(&mat);
    for _ in 0..10_000 {
        rod.step(&mat, &env, DT).unwrap();
    }
    let drift = (rod.linear_momentum(&mat) - p0).norm() / p0.norm();
    assert!(drift < 1e-8, "relative momentum drift {drift:e}");
}

#[test]
fn straight_rod_at_rest_stays_exactly_put() {
    let mat = RodMaterial::default();
    let env = EnvPhysics::free();
    let mut rod = straight(7, &mat);
    let start = rod.clone();
    for _ in 0..1000 {
        rod.step(&mat, &env, DT).unwrap();
    }
    assert_eq!(rod.positions, start.positions);
    assert_eq!(rod.frames, start.frames);
}

#[test]
fn frames_stay_orthonormal_under_driving() {
    let mut snake = driven_snake(3, 3);
    for k in 0..3000 {
        for s in 0..3 {
            snake.apply_couple(s, 0.1 * ((k as f64) * 0.01 + s as f64).sin()).unwrap();
        }
        snake.step().unwrap();
        for q in &snake.rod.frames {
            let err = orthonormality_error(q);
            assert!(err < 1e-8, "step {k}: |QtQ - I| = {err:e}");
        }
    }
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let run = || {
        let mut snake = driven_snake(1, 3);
        let mut states = Vec::new();
        for k in 0..1500 {
            snake.apply_couple(0, if k % 300 < 150 { 0.1 } else { -0.1 }).unwrap();
            snake.step().unwrap();
            if k % 100 == 0 {
                states.push(snake.rod.clone());
            }
        }
        states
    };
    assert!(run() == run());
}

#[test]
fn reflected_start_and_couples_give_reflected_trajectory() {
    let mut a = driven_snake(3, 3);
    kick(&mut a.rod, Vec3::new(0.05, 0.02, 0.0), &[0.02, -0.01, 0.03]);
    let mut b = a.clone();
    b.rod = a.rod.mirrored_xz();
    for k in 0..2000 {
        for s in 0..3 {
            let gamma = 0.1 * ((k as f64) * 0.005 + 1.7 * s as f64).sin();
            a.apply_couple(s, gamma).unwrap();
            b.apply_couple(s, -gamma).unwrap();
        }
        a.step().unwrap();
        b.step().unwrap();
        let r = a.rod.mirrored_xz();
        let dx = max_abs_diff(&r.positions, &b.rod.positions);
        let dv = max_abs_diff(&r.velocities, &b.rod.velocities);
        assert!(dx < 1e-9 && dv < 1e-9, "step {k}: position {dx:e}, velocity {dv:e}");
    }
}

#[test]
fn couple_alone_leaves_momentum_near_zero() {
    let mat = undamped();
    let env = EnvPhysics::free();
    let mut rod = straight(4, &mat);
    for _ in 0..2000 {
        rod.apply_node_torque(0, Vec3::new(0.0, 0.0, 0.05)).unwrap();
        rod.apply_torque_ending_at(3, Vec3::new(0.0, 0.0, -0.05)).unwrap();
        rod.step(&mat, &env, DT).unwrap();
    }
    let p = rod.linear_momentum(&mat).norm();
    assert!(p < 1e-10, "momentum {p:e}");
    let bent = rod.curvatures().iter().map(|k| k.norm()).fold(0.0, f64::max);
    assert!(bent > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn damped_free_rod_never_gains_energy(
        wiggle in prop::collection::vec(-0.2f64..0.2, 1..6),
        n in 3usize..10,
    ) {
        let mat = RodMaterial { rayleigh_damping: 1.0, ..RodMaterial::default() };
        let env = EnvPhysics::free();
        let mut rod = straight(n, &mat);
        kick(&mut rod, Vec3::zeros(), &wiggle);
        let mut e = rod.energy(&mat, &env).total();
        for k in 0..400 {
            rod.step(&mat, &env, DT).unwrap();
            let next = rod.energy(&mat, &env).total();
            prop_assert!(next <= e * (1.0 + 1e-6) + 1e-15, "step {}: {} -> {}", k, e, next);
            e = next;
        }
    }

    #[test]
    fn free_momentum_is_conserved_for_any_kick(
        wiggle in prop::collection::vec(-0.3f64..0.3, 1..6),
        drift in prop::array::uniform3(-0.5f64..0.5),
        n in 2usize..8,
    ) {
        let mat = undamped();
        let env = EnvPhysics::free();
        let mut rod = straight(n, &mat);
        let d = Vec3::from(drift);
        prop_assume!(d.norm() > 0.05);
        kick(&mut rod, d, &wiggle);
        let p0 = rod.linear_momentum(&mat);
        for _ in 0..500 {
            rod.step(&mat, &env, DT).unwrap();
        }
        let drift = (rod.linear_momentum(&mat) - p0).norm() / p0.norm();
        prop_assert!(drift < 1e-10, "drift {:e}", drift);
    }
}
