use serde::{Deserialize, Serialize};

use crate::math::{Mat3, Pose, Vec3};

/// Index of a body inside its [`super::WorldState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BodyId(pub u32);

impl BodyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Convex collision shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Axis-aligned box in body frame, given by half-extents.
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    /// Static half-space `dot(n, x) <= offset`, with `normal` pointing out of
    /// the solid. Only valid on static bodies.
    HalfSpace { normal: [f64; 3], offset: f64 },
}

impl Shape {
    pub fn half_extents(&self) -> Option<Vec3> {
        match self {
            Shape::Box { half_extents } => Some(Vec3::from_column_slice(half_extents)),
            _ => None,
        }
    }

    /// Smallest feature size, used as the tunneling threshold for the swept
    /// collision pre-pass.
    pub fn thickness(&self) -> f64 {
        match self {
            Shape::Box { half_extents } => 2.0 * half_extents.iter().cloned().fold(f64::INFINITY, f64::min),
            Shape::Sphere { radius } => 2.0 * radius,
            Shape::HalfSpace { .. } => f64::INFINITY,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            Shape::Box { half_extents } => half_extents.iter().any(|h| *h <= 0.0),
            Shape::Sphere { radius } => *radius <= 0.0,
            Shape::HalfSpace { normal, .. } => {
                Vec3::from_column_slice(normal).norm() < 1e-12
            }
        }
    }

    /// Inertia tensor about the centroid for the given mass.
    pub fn inertia(&self, mass: f64) -> Mat3 {
        match self {
            Shape::Box { half_extents } => {
                let [hx, hy, hz] = *half_extents;
                let (x2, y2, z2) = (4.0 * hx * hx, 4.0 * hy * hy, 4.0 * hz * hz);
                Mat3::from_diagonal(&Vec3::new(
                    mass / 12.0 * (y2 + z2),
                    mass / 12.0 * (x2 + z2),
                    mass / 12.0 * (x2 + y2),
                ))
            }
            Shape::Sphere { radius } => {
                let i = 0.4 * mass * radius * radius;
                Mat3::from_diagonal(&Vec3::new(i, i, i))
            }
            Shape::HalfSpace { .. } => Mat3::zeros(),
        }
    }
}

/// A rigid body: pose, velocities, mass properties, shape, and its friction
/// pair (static and dynamic coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub id: BodyId,
    pub name: String,
    pub mass: f64,
    /// Body-frame inertia tensor.
    pub inertia: Mat3,
    pub pose: Pose,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    pub shape: Shape,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    pub is_static: bool,
}

impl RigidBody {
    pub fn new_dynamic(name: &str, shape: Shape, mass: f64, pose: Pose) -> Self {
        RigidBody {
            id: BodyId(0),
            name: name.to_string(),
            mass,
            inertia: shape.inertia(mass),
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            shape,
            mu_static: 0.5,
            mu_dynamic: 0.4,
            is_static: false,
        }
    }

    pub fn new_static(name: &str, shape: Shape, pose: Pose) -> Self {
        RigidBody {
            id: BodyId(0),
            name: name.to_string(),
            mass: 0.0,
            inertia: Mat3::zeros(),
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            shape,
            mu_static: 0.5,
            mu_dynamic: 0.4,
            is_static: true,
        }
    }

    pub fn with_friction(mut self, mu_static: f64, mu_dynamic: f64) -> Self {
        self.mu_static = mu_static;
        self.mu_dynamic = mu_dynamic;
        self
    }

    pub fn inv_mass(&self) -> f64 {
        if self.is_static {
            0.0
        } else {
            1.0 / self.mass
        }
    }

    /// World-frame inertia tensor `R I R^T`.
    pub fn world_inertia(&self) -> Mat3 {
        if self.is_static {
            return Mat3::zeros();
        }
        let r = self.pose.orientation.to_rotation_matrix();
        r * self.inertia * r.transpose()
    }

    /// Velocity of the world-frame point `p` carried by this body.
    pub fn velocity_at(&self, p: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(&(p - self.pose.position))
    }

    pub fn kinetic_energy(&self) -> f64 {
        if self.is_static {
            return 0.0;
        }
        let lin = 0.5 * self.mass * self.linear_velocity.norm_squared();
        let ang = 0.5 * self.angular_velocity.dot(&(self.world_inertia() * self.angular_velocity));
        lin + ang
    }
}
