//! An `m`-segment snake laid out on a single rod.
//!
//! Segment `i` owns rod nodes `i*n ..= (i+1)*n`; neighbouring segments share
//! their boundary node, so the rod has `m*n + 1` nodes. Node 0 is the head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rod::{EnvPhysics, RodMaterial, RodState, Vec3};

/// Torque axis of the segment couple. A positive couple bends the segment
/// toward positive deformation.
pub const COUPLE_AXIS: Vec3 = Vec3::new(0.0, 0.0, -1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnakeConfig {
    /// Segment count.
    pub m: usize,
    /// Nodes per segment.
    pub n: usize,
    pub node_radius: f64,
    pub segment_length: f64,
    /// Ground point beneath the head.
    pub start_position: [f64; 3],
    /// Unit direction from the head toward the tail.
    pub heading: [f64; 3],
    /// Length entering the friction coefficient; `None` uses the whole body.
    pub friction_length: Option<f64>,
}

impl SnakeConfig {
    /// Rod spacing between neighbouring nodes used by [`SnakeConfig::new`].
    pub const DEFAULT_NODE_SPACING: f64 = 0.1;

    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            node_radius: 0.25,
            segment_length: n as f64 * Self::DEFAULT_NODE_SPACING,
            start_position: [0.0; 3],
            heading: [-1.0, 0.0, 0.0],
            friction_length: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::invalid("a snake needs at least one segment"));
        }
        if self.n < 3 {
            return Err(Error::invalid(format!(
                "segments need at least 3 nodes, got {}",
                self.n
            )));
        }
        if !(self.node_radius > 0.0 && self.segment_length > 0.0) {
            return Err(Error::invalid("node radius and segment length must be > 0"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.m * self.n + 1
    }

    pub fn total_length(&self) -> f64 {
        self.m as f64 * self.segment_length
    }

    pub fn segment(&self, index: usize) -> Result<SegmentNodes> {
        if index >= self.m {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.m,
            });
        }
        let first = index * self.n;
        Ok(SegmentNodes {
            index,
            first,
            third: first + self.n / 3,
            two_thirds: first + 2 * self.n / 3,
            last: first + self.n,
        })
    }
}

/// Reference nodes of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentNodes {
    pub index: usize,
    pub first: usize,
    pub third: usize,
    pub two_thirds: usize,
    pub last: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentView {
    pub nodes: SegmentNodes,
    pub deformation: f64,
}

/// Signed turning angle (top view) from `a -> b` to `b -> c`; positive is a
/// counter-clockwise turn.
pub fn signed_turn(a: Vec3, b: Vec3, c: Vec3) -> Result<f64> {
    let u = (b - a).xy();
    let v = (c - b).xy();
    if u.norm_squared() < 1e-24 || v.norm_squared() < 1e-24 {
        return Err(Error::Degenerate("coincident reference nodes".into()));
    }
    let cross = u.x * v.y - u.y * v.x;
    Ok(cross.atan2(u.dot(&v)))
}

pub fn segment_deformation(rod: &RodState, segment: &SegmentNodes) -> Result<f64> {
    let p = &rod.positions;
    if segment.last >= p.len() {
        return Err(Error::IndexOutOfRange {
            index: segment.last,
            len: p.len(),
        });
    }
    signed_turn(p[segment.first], p[segment.third], p[segment.two_thirds])
}

/// `+gamma` on the segment's first element, `-gamma` on its last.
pub fn apply_segment_couple(rod: &mut RodState, segment: &SegmentNodes, gamma: f64) -> Result<()> {
    if gamma == 0.0 {
        return Ok(());
    }
    rod.apply_node_torque(segment.first, COUPLE_AXIS * gamma)?;
    rod.apply_torque_ending_at(segment.last, -COUPLE_AXIS * gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DestructionBounds {
    /// Largest admissible |node position| (m).
    pub max_position: f64,
    /// Largest admissible ratio between current and rest element length (and
    /// its inverse).
    pub max_strain_factor: f64,
}

impl Default for DestructionBounds {
    fn default() -> Self {
        Self {
            max_position: 1e3,
            max_strain_factor: 3.0,
        }
    }
}

pub fn detect_destruction(rod: &RodState, bounds: &DestructionBounds) -> bool {
    if !rod.is_finite() {
        return true;
    }
    if rod
        .positions
        .iter()
        .any(|x| x.norm() > bounds.max_position)
    {
        return true;
    }
    rod.element_lengths()
        .zip(&rod.rest_lengths)
        .any(|(l, rest)| {
            let ratio = l / rest;
            !(ratio.is_finite()
                && ratio <= bounds.max_strain_factor
                && ratio * bounds.max_strain_factor >= 1.0)
        })
}

/// A snake body together with the physics it is simulated under.
#[derive(Debug, Clone)]
pub struct Snake {
    pub config: SnakeConfig,
    pub material: RodMaterial,
    pub physics: EnvPhysics,
    pub bounds: DestructionBounds,
    pub dt: f64,
    pub rod: RodState,
    segments: Vec<SegmentNodes>,
}

/// One row of a per-step segment export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub t: f64,
    pub segment: usize,
    pub d: f64,
    pub gamma: f64,
}

impl Snake {
    /// Builds the snake at rest. The node radius overrides the material's
    /// cross-section radius and `mu_base` is derived from the friction length.
    pub fn new(
        config: SnakeConfig,
        material: RodMaterial,
        physics: EnvPhysics,
        dt: f64,
    ) -> Result<Self> {
        config.validate()?;
        let material = RodMaterial {
            base_radius: config.node_radius,
            ..material
        };
        let physics = physics.with_friction_length(
            config.friction_length.unwrap_or_else(|| config.total_length()),
        );
        physics.validate()?;
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be > 0"));
        }
        let rod = RodState::build(
            config.node_count(),
            config.total_length(),
            &material,
            Vec3::from(config.start_position),
            Vec3::from(config.heading),
        )?;
        let segments = (0..config.m)
            .map(|i| config.segment(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            material,
            physics,
            bounds: DestructionBounds::default(),
            dt,
            rod,
            segments,
        })
    }

    pub fn segments(&self) -> &[SegmentNodes] {
        &self.segments
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn deformation(&self, segment: usize) -> Result<f64> {
        let s = self
            .segments
            .get(segment)
            .ok_or(Error::IndexOutOfRange {
                index: segment,
                len: self.segments.len(),
            })?;
        segment_deformation(&self.rod, s)
    }

    pub fn views(&self) -> Result<Vec<SegmentView>> {
        self.segments
            .iter()
            .map(|s| {
                Ok(SegmentView {
                    nodes: *s,
                    deformation: segment_deformation(&self.rod, s)?,
                })
            })
            .collect()
    }

    pub fn apply_couple(&mut self, segment: usize, gamma: f64) -> Result<()> {
        let s = *self.segments.get(segment).ok_or(Error::IndexOutOfRange {
            index: segment,
            len: self.segments.len(),
        })?;
        apply_segment_couple(&mut self.rod, &s, gamma)
    }

    /// Advances the rod by one physics step.
    pub fn step(&mut self) -> Result<()> {
        self.rod.step(&self.material, &self.physics, self.dt)
    }

    pub fn is_destroyed(&self) -> bool {
        detect_destruction(&self.rod, &self.bounds)
    }

    pub fn head(&self) -> Vec3 {
        self.rod.positions[0]
    }

    /// Planar distance from the head to `target`.
    pub fn head_distance(&self, target: [f64; 2]) -> f64 {
        let h = self.head();
        ((target[0] - h.x).powi(2) + (target[1] - h.y).powi(2)).sqrt()
    }

    pub fn time(&self) -> f64 {
        self.rod.time
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn node_counts() {
        for (m, n, count) in [(1, 3, 4), (3, 3, 10), (5, 3, 16), (3, 6, 19)] {
            assert_eq!(SnakeConfig::new(m, n).node_count(), count);
        }
    }

    #[test]
    fn segment_partition_shares_boundaries() {
        let cfg = SnakeConfig::new(3, 3);
        let s: Vec<_> = (0..3).map(|i| cfg.segment(i).unwrap()).collect();
        assert_eq!((s[0].first, s[0].third, s[0].two_thirds, s[0].last), (0, 1, 2, 3));
        assert_eq!(s[1].first, s[0].last);
        assert_eq!(s[2].last, 9);
        let six = SnakeConfig::new(1, 6).segment(0).unwrap();
        assert_eq!((six.third, six.two_thirds, six.last), (2, 4, 6));
        assert!(cfg.segment(3).is_err());
        assert!(SnakeConfig::new(1, 2).validate().is_err());
        assert!(SnakeConfig::new(0, 3).validate().is_err());
    }

    #[test]
    fn signed_turn_geometry() {
        let p = |x: f64, y: f64| Vec3::new(x, y, 0.0);
        assert_eq!(signed_turn(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)).unwrap(), 0.0);
        let up = signed_turn(p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)).unwrap();
        assert!((up - FRAC_PI_2).abs() < 1e-15);
        let down = signed_turn(p(0.0, 0.0), p(1.0, 0.0), p(1.0, -1.0)).unwrap();
        assert_eq!(down, -up);
        assert!(signed_turn(p(0.0, 0.0), p(0.0, 0.0), p(1.0, 0.0)).is_err());
    }

    #[test]
    fn destruction_criteria() {
        let snake = Snake::new(
            SnakeConfig::new(3, 3),
            RodMaterial::default(),
            EnvPhysics::default(),
            1e-3,
        )
        .unwrap();
        let bounds = DestructionBounds::default();
        assert!(!detect_destruction(&snake.rod, &bounds));

        let mut nan = snake.rod.clone();
        nan.positions[4].x = f64::NAN;
        assert!(detect_destruction(&nan, &bounds));

        let mut stretched = snake.rod.clone();
        let rest = stretched.rest_lengths[0];
        let shift = Vec3::new(-4.0 * rest, 0.0, 0.0);
        for x in stretched.positions.iter_mut().skip(1) {
            *x += shift;
        }
        assert!(detect_destruction(&stretched, &bounds));

        let mut far = snake.rod.clone();
        for x in far.positions.iter_mut() {
            x.x += 2e3;
        }
        assert!(detect_destruction(&far, &bounds));
    }

    #[test]
    fn zero_couple_is_a_noop() {
        let mut snake = Snake::new(
            SnakeConfig::new(2, 3),
            RodMaterial::default(),
            EnvPhysics::default(),
            1e-3,
        )
        .unwrap();
        let before = snake.rod.clone();
        snake.apply_couple(1, 0.0).unwrap();
        assert_eq!(snake.rod, before);
        snake.apply_couple(1, 0.5).unwrap();
        assert_eq!(snake.rod.positions, before.positions);
        assert_eq!(snake.rod.external_torques[3], COUPLE_AXIS * 0.5);
        assert_eq!(snake.rod.external_torques[5], -COUPLE_AXIS * 0.5);
        assert!(snake.apply_couple(2, 1.0).is_err());
    }
}
