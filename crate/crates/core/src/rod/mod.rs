//! Discrete Cosserat rod.
//!
//! Nodes carry positions and velocities; the elements between them carry an
//! orthonormal frame (columns are the directors `d1, d2, d3`, lab coordinates)
//! and a body-frame angular velocity. Elastic loads are the exact gradients of
//!
//! ```text
//! U = sum_e  1/2 l_e  sigma_e^T S sigma_e   +   sum_j 1/2 D_j kappa_j^T B kappa_j
//! sigma_e = Q_e^T (x_{e+1} - x_e) / l_e - e3          S = diag(GA, GA, EA)
//! kappa_j = log(Q_j^T Q_{j+1}) / D_j                   B = diag(EI, EI, GJ)
//! ```
//!
//! where `l_e` are rest lengths and `D_j` the rest Voronoi lengths. Time
//! stepping is the drift–kick–drift position Verlet scheme on translations and
//! rotations.

mod contact;
pub mod so3;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use contact::{contact_loads, ContactReport};
pub use so3::{Mat3, Vec3};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodMaterial {
    /// kg/m^3
    pub density: f64,
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Mass-proportional damping rate (1/s) on linear and angular velocity.
    pub rayleigh_damping: f64,
    /// Cross-section radius (m); also the contact radius of each node.
    pub base_radius: f64,
}

impl Default for RodMaterial {
    fn default() -> Self {
        Self {
            density: 1.0,
            youngs_modulus: 50.0,
            poisson_ratio: 0.5,
            rayleigh_damping: 2e-3,
            base_radius: 0.25,
        }
    }
}

impl RodMaterial {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("density", self.density),
            ("youngs_modulus", self.youngs_modulus),
            ("base_radius", self.base_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=0.5).contains(&self.poisson_ratio) {
            return Err(Error::invalid(format!(
                "poisson_ratio must lie in [0, 0.5], got {}",
                self.poisson_ratio
            )));
        }
        if !(self.rayleigh_damping >= 0.0 && self.rayleigh_damping.is_finite()) {
            return Err(Error::invalid("rayleigh_damping must be >= 0"));
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.base_radius * self.base_radius
    }

    /// Second moment of area about a cross-section axis.
    pub fn second_moment(&self) -> f64 {
        std::f64::consts::PI * self.base_radius.powi(4) / 4.0
    }

    pub fn polar_moment(&self) -> f64 {
        2.0 * self.second_moment()
    }

    /// `diag(GA, GA, EA)`.
    pub fn shear_stretch_stiffness(&self) -> Vec3 {
        let ga = self.shear_modulus() * self.area();
        Vec3::new(ga, ga, self.youngs_modulus * self.area())
    }

    /// `diag(EI, EI, GJ)`.
    pub fn bend_twist_stiffness(&self) -> Vec3 {
        let ei = self.youngs_modulus * self.second_moment();
        Vec3::new(ei, ei, self.shear_modulus() * self.polar_moment())
    }

    pub fn element_mass(&self, rest_length: f64) -> f64 {
        self.density * self.area() * rest_length
    }

    /// Diagonal body-frame inertia of an element.
    pub fn element_inertia(&self, rest_length: f64) -> Vec3 {
        let i = self.second_moment();
        Vec3::new(i, i, 2.0 * i) * (self.density * rest_length)
    }
}

/// Ground and gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvPhysics {
    /// Signed vertical gravitational acceleration (m/s^2).
    pub gravity: f64,
    pub froude: f64,
    /// Base Coulomb coefficient the directional multipliers scale.
    pub mu_base: f64,
    /// Multipliers `[backward, forward, lateral]` on `mu_base`. "Forward" is
    /// slip toward the head (node 0).
    pub friction_coeffs: [f64; 3],
    pub ground_height: f64,
    /// Disables the ground plane entirely (free rod).
    pub ground_enabled: bool,
    /// Natural frequency (rad/s) of a node resting on the penalty contact.
    pub contact_frequency: f64,
    pub contact_damping_ratio: f64,
    /// Slip-velocity regularization (m/s) of the friction direction.
    pub slip_epsilon: f64,
}

impl Default for EnvPhysics {
    fn default() -> Self {
        let mut env = Self {
            gravity: -9.80665,
            froude: 0.1,
            mu_base: 0.0,
            friction_coeffs: [1.0, 1e-4, 1.0],
            ground_height: 0.0,
            ground_enabled: true,
            contact_frequency: 100.0,
            contact_damping_ratio: 1.0,
            slip_epsilon: 1e-6,
        };
        env.set_friction_length(1.0);
        env
    }
}

impl EnvPhysics {
    /// No gravity, no ground.
    pub fn free() -> Self {
        Self {
            gravity: 0.0,
            ground_enabled: false,
            ..Self::default()
        }
    }

    /// `mu_base = length / (froude * |gravity|)`.
    pub fn set_friction_length(&mut self, length: f64) {
        let g = self.gravity.abs();
        self.mu_base = if g > 0.0 && self.froude > 0.0 {
            length / (self.froude * g)
        } else {
            0.0
        };
    }

    pub fn with_friction_length(mut self, length: f64) -> Self {
        self.set_friction_length(length);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.froude > 0.0) {
            return Err(Error::invalid("froude must be > 0"));
        }
        if self.friction_coeffs.iter().any(|c| !(*c >= 0.0)) || !(self.mu_base >= 0.0) {
            return Err(Error::invalid("friction coefficients must be >= 0"));
        }
        if !(self.contact_frequency > 0.0 && self.contact_damping_ratio >= 0.0) {
            return Err(Error::invalid("contact frequency must be > 0"));
        }
        if !(self.slip_epsilon > 0.0) {
            return Err(Error::invalid("slip_epsilon must be > 0"));
        }
        if !self.gravity.is_finite() || !self.ground_height.is_finite() {
            return Err(Error::NonFinite {
                context: "environment physics",
            });
        }
        Ok(())
    }

    pub fn backward_mu(&self) -> f64 {
        self.friction_coeffs[0] * self.mu_base
    }

    pub fn forward_mu(&self) -> f64 {
        self.friction_coeffs[1] * self.mu_base
    }

    pub fn lateral_mu(&self) -> f64 {
        self.friction_coeffs[2] * self.mu_base
    }
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    forces: Vec<Vec3>,
    torques: Vec<Vec3>,
    masses: Vec<f64>,
}

/// Kinematic state of a rod plus its load accumulators.
#[derive(Debug, Clone)]
pub struct RodState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Element frames; columns are the directors in lab coordinates.
    pub frames: Vec<Mat3>,
    /// Body-frame angular velocities.
    pub angular_velocities: Vec<Vec3>,
    pub rest_lengths: Vec<f64>,
    /// Rest Voronoi lengths of the interior nodes.
    pub rest_voronoi: Vec<f64>,
    /// External forces on nodes (lab frame), cleared every step.
    pub external_forces: Vec<Vec3>,
    /// External torques on elements (lab frame), cleared every step.
    pub external_torques: Vec<Vec3>,
    pub time: f64,
    pub step_count: u64,
    scratch: Scratch,
}

impl PartialEq for RodState {
    fn eq(&self, other: &Self) -> bool {
        self.positions == other.positions
            && self.velocities == other.velocities
            && self.frames == other.frames
            && self.angular_velocities == other.angular_velocities
            && self.rest_lengths == other.rest_lengths
            && self.rest_voronoi == other.rest_voronoi
            && self.external_forces == other.external_forces
            && self.external_torques == other.external_torques
            && self.time == other.time
            && self.step_count == other.step_count
    }
}

/// Internal elastic and damping loads.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalLoads {
    /// Node forces, lab frame.
    pub forces: Vec<Vec3>,
    /// Element torques, body frame.
    pub torques: Vec<Vec3>,
}

/// Breakdown of the mechanical energy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Energy {
    pub translational: f64,
    pub rotational: f64,
    pub stretch_shear: f64,
    pub bend_twist: f64,
    pub gravity: f64,
    pub contact: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.translational
            + self.rotational
            + self.stretch_shear
            + self.bend_twist
            + self.gravity
            + self.contact
    }
}

/// One row of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub node_index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl RodState {
    /// Builds a straight rod at rest.
    ///
    /// `start_position` is the ground point beneath node 0; every node is lifted
    /// by `material.base_radius` so the rod rests on the plane. Nodes are spaced
    /// evenly along `direction`.
    pub fn build(
        n_nodes: usize,
        total_length: f64,
        material: &RodMaterial,
        start_position: Vec3,
        direction: Vec3,
    ) -> Result<Self> {
        material.validate()?;
        if n_nodes < 2 {
            return Err(Error::invalid(format!("a rod needs >= 2 nodes, got {n_nodes}")));
        }
        if !(total_length > 0.0 && total_length.is_finite()) {
            return Err(Error::invalid("total_length must be > 0"));
        }
        let norm = direction.norm();
        if !(norm.is_finite() && (norm - 1.0).abs() < 1e-9) {
            return Err(Error::Degenerate(format!(
                "direction must be a unit vector, got norm {norm}"
            )));
        }
        let normal = if direction.z.abs() > 0.9 {
            Vec3::x()
        } else {
            Vec3::z()
        };
        let frame = so3::frame_from_tangent(&direction, &normal)
            .ok_or_else(|| Error::Degenerate("direction".into()))?;

        let n_el = n_nodes - 1;
        let spacing = total_length / n_el as f64;
        let base = start_position + Vec3::z() * material.base_radius;
        let positions: Vec<Vec3> = (0..n_nodes)
            .map(|i| base + direction * (spacing * i as f64))
            .collect();
        let rest_lengths: Vec<f64> = positions
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .collect();
        let rest_voronoi = rest_lengths.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();

        Ok(Self {
            velocities: vec![Vec3::zeros(); n_nodes],
            frames: vec![frame; n_el],
            angular_velocities: vec![Vec3::zeros(); n_el],
            external_forces: vec![Vec3::zeros(); n_nodes],
            external_torques: vec![Vec3::zeros(); n_el],
            positions,
            rest_lengths,
            rest_voronoi,
            time: 0.0,
            step_count: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn n_elements(&self) -> usize {
        self.frames.len()
    }

    pub fn total_rest_length(&self) -> f64 {
        self.rest_lengths.iter().sum()
    }

    pub fn node_masses(&self, material: &RodMaterial) -> Vec<f64> {
        let mut m = vec![0.0; self.n_nodes()];
        self.fill_node_masses(material, &mut m);
        m
    }

    fn fill_node_masses(&self, material: &RodMaterial, out: &mut [f64]) {
        out.iter_mut().for_each(|m| *m = 0.0);
        for (e, &l) in self.rest_lengths.iter().enumerate() {
            let half = 0.5 * material.element_mass(l);
            out[e] += half;
            out[e + 1] += half;
        }
    }

    pub fn element_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm())
    }

    /// Shear/stretch strains `sigma` of every element.
    pub fn strains(&self) -> Vec<Vec3> {
        (0..self.n_elements())
            .map(|e| {
                let dx = self.positions[e + 1] - self.positions[e];
                self.frames[e].transpose() * dx / self.rest_lengths[e] - Vec3::z()
            })
            .collect()
    }

    /// Curvature vectors `kappa` at the interior nodes (body frame).
    pub fn curvatures(&self) -> Vec<Vec3> {
        (0..self.rest_voronoi.len())
            .map(|j| {
                so3::log(&(self.frames[j].transpose() * self.frames[j + 1])) / self.rest_voronoi[j]
            })
            .collect()
    }

    pub fn linear_momentum(&self, material: &RodMaterial) -> Vec3 {
        self.node_masses(material)
            .iter()
            .zip(&self.velocities)
            .map(|(m, v)| v * *m)
            .sum()
    }

    pub fn center_of_mass(&self, material: &RodMaterial) -> Vec3 {
        let masses = self.node_masses(material);
        let total: f64 = masses.iter().sum();
        masses
            .iter()
            .zip(&self.positions)
            .map(|(m, x)| x * *m)
            .sum::<Vec3>()
            / total
    }

    pub fn energy(&self, material: &RodMaterial, env: &EnvPhysics) -> Energy {
        let masses = self.node_masses(material);
        let s = material.shear_stretch_stiffness();
        let b = material.bend_twist_stiffness();
        let mut energy = Energy::default();
        for (m, v) in masses.iter().zip(&self.velocities) {
            energy.translational += 0.5 * m * v.norm_squared();
        }
        for (e, w) in self.angular_velocities.iter().enumerate() {
            let j = material.element_inertia(self.rest_lengths[e]);
            energy.rotational += 0.5 * w.component_mul(&j).dot(w);
        }
        for (e, sigma) in self.strains().iter().enumerate() {
            energy.stretch_shear += 0.5 * self.rest_lengths[e] * sigma.component_mul(&s).dot(sigma);
        }
        for (j, kappa) in self.curvatures().iter().enumerate() {
            energy.bend_twist += 0.5 * self.rest_voronoi[j] * kappa.component_mul(&b).dot(kappa);
        }
        for (m, x) in masses.iter().zip(&self.positions) {
            energy.gravity -= m * env.gravity * x.z;
        }
        if env.ground_enabled {
            for (m, x) in masses.iter().zip(&self.positions) {
                let pen = env.ground_height + material.base_radius - x.z;
                if pen > 0.0 {
                    let k = m * env.contact_frequency * env.contact_frequency;
                    energy.contact += 0.5 * k * pen * pen;
                }
            }
        }
        energy
    }

    /// Elastic and damping loads of the current configuration.
    pub fn compute_internal_loads(&self, material: &RodMaterial) -> Result<InternalLoads> {
        let mut forces = vec![Vec3::zeros(); self.n_nodes()];
        let mut torques = vec![Vec3::zeros(); self.n_elements()];
        let masses = self.node_masses(material);
        self.accumulate_internal_loads(material, &masses, &mut forces, &mut torques)?;
        Ok(InternalLoads { forces, torques })
    }

    fn accumulate_internal_loads(
        &self,
        material: &RodMaterial,
        masses: &[f64],
        forces: &mut [Vec3],
        torques: &mut [Vec3],
    ) -> Result<()> {
        let s = material.shear_stretch_stiffness();
        let b = material.bend_twist_stiffness();
        let damping = material.rayleigh_damping;

        for e in 0..self.n_elements() {
            let dx = self.positions[e + 1] - self.positions[e];
            if dx.norm_squared() < 1e-24 {
                return Err(Error::Degenerate(format!("element {e} has zero length")));
            }
            let rest = self.rest_lengths[e];
            let q = &self.frames[e];
            let a = q.tr_mul(&dx) / rest;
            let sigma = a - Vec3::z();
            let n = sigma.component_mul(&s);
            let f = q * n;
            forces[e] += f;
            forces[e + 1] -= f;
            torques[e] += a.cross(&n) * rest;
        }

        for j in 0..self.rest_voronoi.len() {
            let rel = self.frames[j].tr_mul(&self.frames[j + 1]);
            let phi = so3::log(&rel);
            let m = phi.component_mul(&b) / self.rest_voronoi[j];
            torques[j] += so3::left_jacobian_inv(&phi).tr_mul(&m);
            torques[j + 1] -= so3::right_jacobian_inv(&phi).tr_mul(&m);
        }

        if damping > 0.0 {
            for (i, v) in self.velocities.iter().enumerate() {
                forces[i] -= v * (damping * masses[i]);
            }
            for (e, w) in self.angular_velocities.iter().enumerate() {
                let j = material.element_inertia(self.rest_lengths[e]);
                torques[e] -= w.component_mul(&j) * damping;
            }
        }
        Ok(())
    }

    /// Adds ground contact and friction loads to the external force
    /// accumulator. Friction is limited so that it cannot reverse the slip a
    /// node would have after one step under the forces already accumulated.
    pub fn apply_ground_contact(
        &mut self,
        material: &RodMaterial,
        env: &EnvPhysics,
        dt: f64,
    ) -> ContactReport {
        let masses = self.node_masses(material);
        let other = self.external_forces.clone();
        contact::contact_loads(
            &self.positions,
            &self.velocities,
            &masses,
            &other,
            material.base_radius,
            env,
            dt,
            &mut self.external_forces,
        )
    }

    /// Adds a lab-frame torque to the element that starts at `node` (the last
    /// node maps onto the final element).
    pub fn apply_node_torque(&mut self, node: usize, torque: Vec3) -> Result<()> {
        if node >= self.n_nodes() {
            return Err(Error::IndexOutOfRange {
                index: node,
                len: self.n_nodes(),
            });
        }
        let element = node.min(self.n_elements() - 1);
        self.external_torques[element] += torque;
        Ok(())
    }

    /// Adds a lab-frame torque to the element that ends at `node`.
    pub fn apply_torque_ending_at(&mut self, node: usize, torque: Vec3) -> Result<()> {
        if node == 0 || node >= self.n_nodes() {
            return Err(Error::IndexOutOfRange {
                index: node,
                len: self.n_nodes(),
            });
        }
        self.external_torques[node - 1] += torque;
        Ok(())
    }

    pub fn apply_element_torque(&mut self, element: usize, torque: Vec3) -> Result<()> {
        let len = self.n_elements();
        let slot = self
            .external_torques
            .get_mut(element)
            .ok_or(Error::IndexOutOfRange { index: element, len })?;
        *slot += torque;
        Ok(())
    }

    pub fn apply_node_force(&mut self, node: usize, force: Vec3) -> Result<()> {
        let len = self.n_nodes();
        let slot = self
            .external_forces
            .get_mut(node)
            .ok_or(Error::IndexOutOfRange { index: node, len })?;
        *slot += force;
        Ok(())
    }

    pub fn clear_accumulators(&mut self) {
        self.external_forces.iter_mut().for_each(|f| *f = Vec3::zeros());
        self.external_torques.iter_mut().for_each(|t| *t = Vec3::zeros());
    }

    fn drift(&mut self, h: f64) {
        for (x, v) in self.positions.iter_mut().zip(&self.velocities) {
            *x += v * h;
        }
        for (q, w) in self.frames.iter_mut().zip(&self.angular_velocities) {
            *q *= so3::exp(&(w * h));
        }
    }

    /// One drift–kick–drift step.
    pub fn step(&mut self, material: &RodMaterial, env: &EnvPhysics, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        let n = self.n_nodes();
        let ne = self.n_elements();
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.forces.clear();
        scratch.forces.resize(n, Vec3::zeros());
        scratch.torques.clear();
        scratch.torques.resize(ne, Vec3::zeros());
        scratch.masses.resize(n, 0.0);
        self.fill_node_masses(material, &mut scratch.masses);

        self.drift(0.5 * dt);

        let result = self.kick(material, env, dt, &mut scratch);
        self.scratch = scratch;
        result?;

        self.drift(0.5 * dt);
        for q in &mut self.frames {
            so3::reorthonormalize(q);
        }
        self.clear_accumulators();
        self.step_count += 1;
        self.time = self.step_count as f64 * dt;
        self.check_finite()
    }

    fn kick(
        &mut self,
        material: &RodMaterial,
        env: &EnvPhysics,
        dt: f64,
        scratch: &mut Scratch,
    ) -> Result<()> {
        let Scratch {
            forces,
            torques,
            masses,
        } = scratch;
        self.accumulate_internal_loads(material, masses, forces, torques)
            .map_err(|e| Error::Divergence {
                step: self.step_count,
                reason: e.to_string(),
            })?;
        for (i, f) in forces.iter_mut().enumerate() {
            *f += self.external_forces[i];
            f.z += masses[i] * env.gravity;
        }
        if env.ground_enabled {
            let snapshot: Vec<Vec3> = forces.clone();
            contact::contact_loads(
                &self.positions,
                &self.velocities,
                masses,
                &snapshot,
                material.base_radius,
                env,
                dt,
                forces,
            );
        }
        for (i, v) in self.velocities.iter_mut().enumerate() {
            *v += forces[i] * (dt / masses[i]);
        }
        for e in 0..self.frames.len() {
            let inertia = material.element_inertia(self.rest_lengths[e]);
            let w = self.angular_velocities[e];
            let tau = torques[e] + self.frames[e].tr_mul(&self.external_torques[e])
                - w.cross(&w.component_mul(&inertia));
            self.angular_velocities[e] += tau.component_div(&inertia) * dt;
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self
            .positions
            .iter()
            .chain(&self.velocities)
            .chain(&self.angular_velocities)
            .all(|v| v.iter().all(|c| c.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(Error::Divergence {
                step: self.step_count,
                reason: "non-finite rod state".into(),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.check_finite().is_ok() && self.frames.iter().all(|q| q.iter().all(|c| c.is_finite()))
    }

    pub fn snapshot(&self) -> Vec<TrajectoryRecord> {
        self.positions
            .iter()
            .zip(&self.velocities)
            .enumerate()
            .map(|(i, (x, v))| TrajectoryRecord {
                t: self.time,
                node_index: i,
                x: x.x,
                y: x.y,
                z: x.z,
                vx: v.x,
                vy: v.y,
                vz: v.z,
            })
            .collect()
    }

    /// Reflects the state across the x–z plane.
    pub fn mirrored_xz(&self) -> Self {
        let p = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        let flip = |v: &Vec3| Vec3::new(v.x, -v.y, v.z);
        // Axial vectors pick up the determinant of the reflection.
        let flip_axial = |w: &Vec3| Vec3::new(-w.x, w.y, -w.z);
        let mut out = self.clone();
        out.positions = self.positions.iter().map(flip).collect();
        out.velocities = self.velocities.iter().map(flip).collect();
        out.external_forces = self.external_forces.iter().map(flip).collect();
        // Q' = P Q P keeps det +1 and maps directors consistently.
        out.frames = self.frames.iter().map(|q| p * q * p).collect();
        out.angular_velocities = self.angular_velocities.iter().map(flip_axial).collect();
        out.external_torques = self.external_torques.iter().map(flip_axial).collect();
        out
    }
}

pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    io::write_csv_atomic(path, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize, len: f64) -> RodState {
        RodState::build(
            n,
            len,
            &RodMaterial::default(),
            Vec3::zeros(),
            Vec3::new(-1.0, 0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn build_places_nodes_on_the_ground() {
        let rod = straight(10, 9.0);
        for (i, x) in rod.positions.iter().enumerate() {
            assert_eq!(*x, Vec3::new(-(i as f64), 0.0, 0.25));
        }
        assert!(rod.velocities.iter().all(|v| *v == Vec3::zeros()));
        let two = straight(2, 3.5);
        assert_eq!(two.n_elements(), 1);
        assert_eq!(two.rest_lengths, vec![3.5]);
        assert_eq!(straight(10, 9.0), straight(10, 9.0));
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let m = RodMaterial::default();
        assert!(RodState::build(1, 1.0, &m, Vec3::zeros(), Vec3::x()).is_err());
        assert!(RodState::build(3, 0.0, &m, Vec3::zeros(), Vec3::x()).is_err());
        assert!(RodState::build(3, 1.0, &m, Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0)).is_err());
        assert!(RodState::build(3, 1.0, &m, Vec3::zeros(), Vec3::zeros()).is_err());
    }

    #[test]
    fn rest_configuration_is_load_free() {
        let rod = straight(10, 9.0);
        let loads = rod.compute_internal_loads(&RodMaterial::default()).unwrap();
        assert!(loads.forces.iter().all(|f| *f == Vec3::zeros()));
        assert!(loads.torques.iter().all(|t| *t == Vec3::zeros()));
    }

    #[test]
    fn stretched_element_pulls_nodes_together() {
        let material = RodMaterial {
            rayleigh_damping: 0.0,
            ..RodMaterial::default()
        };
        let mut rod = RodState::build(2, 1.0, &material, Vec3::zeros(), Vec3::x()).unwrap();
        rod.positions[1].x = rod.positions[0].x + 1.1;
        let loads = rod.compute_internal_loads(&material).unwrap();
        let ea = material.youngs_modulus * material.area();
        assert!((loads.forces[0].x - ea * 0.1).abs() < 1e-12 * ea);
        assert!((loads.forces[1].x + ea * 0.1).abs() < 1e-12 * ea);
        assert!(loads.forces[0].yz().norm() < 1e-15);
    }

    #[test]
    fn zero_length_element_is_an_error() {
        let mut rod = straight(3, 2.0);
        rod.positions[1] = rod.positions[0];
        assert!(matches!(
            rod.compute_internal_loads(&RodMaterial::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn bent_three_node_rod_has_balanced_loads() {
        let material = RodMaterial::default();
        let mut rod = RodState::build(3, 2.0, &material, Vec3::zeros(), Vec3::x()).unwrap();
        // Second element turned by 0.3 rad about z, frames following tangents.
        let angle: f64 = 0.3;
        let dir = Vec3::new(angle.cos(), angle.sin(), 0.0);
        rod.positions[2] = rod.positions[1] + dir;
        rod.frames[1] = so3::frame_from_tangent(&dir, &Vec3::z()).unwrap();
        let loads = rod.compute_internal_loads(&material).unwrap();
        let net: Vec3 = loads.forces.iter().sum();
        assert!(net.norm() < 1e-14);
        let lab0 = rod.frames[0] * loads.torques[0];
        let lab1 = rod.frames[1] * loads.torques[1];
        assert!((lab0 + lab1).norm() < 1e-14);
        let expected = material.bend_twist_stiffness().x * angle / rod.rest_voronoi[0];
        assert!((lab0.z - expected).abs() < 1e-12);
    }

    #[test]
    fn elastic_loads_are_energy_gradients() {
        let material = RodMaterial {
            rayleigh_damping: 0.0,
            ..RodMaterial::default()
        };
        let env = EnvPhysics::free();
        let mut rod = straight(5, 2.0);
        rod.positions[2] += Vec3::new(0.05, 0.1, -0.02);
        rod.positions[4] += Vec3::new(-0.03, 0.02, 0.04);
        rod.frames[1] *= so3::exp(&Vec3::new(0.1, -0.2, 0.3));
        rod.frames[3] *= so3::exp(&Vec3::new(-0.2, 0.05, 0.1));
        let loads = rod.compute_internal_loads(&material).unwrap();
        let h = 1e-6;
        let energy = |r: &RodState| r.energy(&material, &env).total();
        for i in 0..rod.n_nodes() {
            for c in 0..3 {
                let mut p = rod.clone();
                p.positions[i][c] += h;
                let mut m = rod.clone();
                m.positions[i][c] -= h;
                let fd = -(energy(&p) - energy(&m)) / (2.0 * h);
                assert!((fd - loads.forces[i][c]).abs() < 1e-6, "node {i} c {c}");
            }
        }
        for e in 0..rod.n_elements() {
            for c in 0..3 {
                let mut d = Vec3::zeros();
                d[c] = h;
                let mut p = rod.clone();
                p.frames[e] *= so3::exp(&d);
                let mut m = rod.clone();
                m.frames[e] *= so3::exp(&-d);
                let fd = -(energy(&p) - energy(&m)) / (2.0 * h);
                assert!((fd - loads.torques[e][c]).abs() < 1e-6, "element {e} c {c}");
            }
        }
    }

    #[test]
    fn free_rod_at_rest_is_unchanged() {
        let material = RodMaterial::default();
        let mut rod = straight(6, 5.0);
        let start = rod.clone();
        for _ in 0..100 {
            rod.step(&material, &EnvPhysics::free(), 1e-3).unwrap();
        }
        assert_eq!(rod.positions, start.positions);
        assert_eq!(rod.frames, start.frames);
        assert!(rod.velocities.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn torque_accumulates_without_moving() {
        let mut rod = straight(4, 3.0);
        let before = rod.clone();
        rod.apply_node_torque(0, Vec3::zeros()).unwrap();
        assert_eq!(rod, before);
        rod.apply_node_torque(1, Vec3::z()).unwrap();
        rod.apply_node_torque(3, -Vec3::z()).unwrap();
        assert_eq!(rod.positions, before.positions);
        let net: Vec3 = rod.external_torques.iter().sum();
        assert_eq!(net, Vec3::zeros());
        assert_eq!(rod.external_torques[2], -Vec3::z());
        assert!(rod.apply_node_torque(4, Vec3::z()).is_err());
        assert!(rod.apply_torque_ending_at(0, Vec3::z()).is_err());
    }

    #[test]
    fn accumulators_clear_after_step() {
        let material = RodMaterial::default();
        let mut rod = straight(4, 3.0);
        rod.apply_node_torque(0, Vec3::z()).unwrap();
        rod.apply_node_force(2, Vec3::x()).unwrap();
        rod.step(&material, &EnvPhysics::default(), 1e-3).unwrap();
        assert!(rod.external_forces.iter().all(|f| *f == Vec3::zeros()));
        assert!(rod.external_torques.iter().all(|t| *t == Vec3::zeros()));
    }

    #[test]
    fn divergence_reports_step() {
        let material = RodMaterial::default();
        let mut rod = straight(3, 2.0);
        rod.velocities[1].x = f64::NAN;
        let err = rod.step(&material, &EnvPhysics::free(), 1e-3).unwrap_err();
        assert!(err.is_divergence());
    }
}
