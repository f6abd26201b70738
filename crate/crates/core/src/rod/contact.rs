//! Penalty ground contact with anisotropic Coulomb friction.

use super::{EnvPhysics, Vec3};

/// Totals from one contact evaluation, mostly for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContactReport {
    pub nodes_in_contact: usize,
    pub total_normal: f64,
    pub total_friction: f64,
}

/// Horizontal unit vector pointing from node `i` toward the head (node 0).
fn forward_direction(positions: &[Vec3], i: usize) -> Option<Vec3> {
    let n = positions.len();
    let mut t = Vec3::zeros();
    if i > 0 {
        t += (positions[i - 1] - positions[i]).try_normalize(1e-15).unwrap_or_default();
    }
    if i + 1 < n {
        t += (positions[i] - positions[i + 1]).try_normalize(1e-15).unwrap_or_default();
    }
    t.z = 0.0;
    t.try_normalize(1e-12)
}

/// Magnitude of friction along one axis: Coulomb bound `mu * normal`, never
/// more than what stops the predicted slip within the step.
#[inline]
fn axis_friction(predicted_slip: f64, mu: f64, normal: f64, mass: f64, dt: f64, eps: f64) -> f64 {
    let direction = predicted_slip / (predicted_slip * predicted_slip + eps * eps).sqrt();
    let stop = mass * predicted_slip.abs() / dt;
    -direction * (mu * normal).min(stop)
}

/// Adds normal and friction forces of every grounded node to `out`.
///
/// `other_forces` are the non-contact forces acting this step; they set the
/// predicted slip that friction opposes.
#[allow(clippy::too_many_arguments)]
pub fn contact_loads(
    positions: &[Vec3],
    velocities: &[Vec3],
    masses: &[f64],
    other_forces: &[Vec3],
    radius: f64,
    env: &EnvPhysics,
    dt: f64,
    out: &mut [Vec3],
) -> ContactReport {
    let mut report = ContactReport::default();
    if !env.ground_enabled {
        return report;
    }
    let omega = env.contact_frequency;
    for i in 0..positions.len() {
        let x = positions[i];
        let penetration = env.ground_height + radius - x.z;
        if penetration <= 0.0 {
            continue;
        }
        let m = masses[i];
        let v = velocities[i];
        let stiffness = m * omega * omega;
        let damping = 2.0 * env.contact_damping_ratio * m * omega;
        let normal = (stiffness * penetration - damping * v.z).max(0.0);
        report.nodes_in_contact += 1;
        report.total_normal += normal;
        let mut force = Vec3::new(0.0, 0.0, normal);

        if normal > 0.0 && env.mu_base > 0.0 {
            let mut predicted = v + other_forces[i] * (dt / m);
            predicted.z = 0.0;
            let eps = env.slip_epsilon;
            let friction = match forward_direction(positions, i) {
                Some(forward) => {
                    let lateral = Vec3::z().cross(&forward);
                    let v_axial = predicted.dot(&forward);
                    let v_lateral = predicted.dot(&lateral);
                    let mu_axial = if v_axial > 0.0 {
                        env.forward_mu()
                    } else {
                        env.backward_mu()
                    };
                    forward * axis_friction(v_axial, mu_axial, normal, m, dt, eps)
                        + lateral * axis_friction(v_lateral, env.lateral_mu(), normal, m, dt, eps)
                }
                None => {
                    let speed = predicted.norm();
                    if speed > 0.0 {
                        predicted
                            * (axis_friction(speed, env.lateral_mu(), normal, m, dt, eps) / speed)
                    } else {
                        Vec3::zeros()
                    }
                }
            };
            report.total_friction += friction.norm();
            force += friction;
        }
        out[i] += force;
    }
    report
}
