//! Math aliases and small geometric helpers shared across the crate.

pub use nalgebra::{Matrix3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vec3::zeros(),
            orientation: Quat::identity(),
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Pose {
            position,
            orientation: Quat::identity(),
        }
    }

    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.orientation * local + self.position
    }

    pub fn transform_vector(&self, local: &Vec3) -> Vec3 {
        self.orientation * local
    }

    pub fn inverse_transform_point(&self, world: &Vec3) -> Vec3 {
        self.orientation.inverse() * (world - self.position)
    }

    pub fn inverse_transform_vector(&self, world: &Vec3) -> Vec3 {
        self.orientation.inverse() * world
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Deterministic orthonormal basis completing a unit normal.
///
/// Picks the world axis least aligned with `n` as the seed, so the result
/// depends only on `n` and is stable under small perturbations away from
/// the axis-switch boundaries.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let seed = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let t1 = (seed - n * seed.dot(n)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Rotation error as a scaled-axis vector taking `from` to `to`.
pub fn rotation_error(from: &Quat, to: &Quat) -> Vec3 {
    (to * from.inverse()).scaled_axis()
}

pub fn is_finite_vec(v: &Vec3) -> bool {
    v.x.is_finite() && v.y.is_finite() && v.z.is_finite()
}
