//! Contact detection: swept broad phase, GJK proximity queries, and
//! analytic manifold generation.

pub mod gjk;
mod manifold;

use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::physics::body::{BodyId, RigidBody};
use crate::physics::world::{WorldState, SLIP_SPEED_EPSILON};

/// Proximity band within which separated pairs still produce contact rows.
/// Must stay below scene clearances that are meant to be contact-free (the
/// narrowest shipped clearance is 2.25 mm per side).
pub const CONTACT_MARGIN: f64 = 1e-3;

/// Friction regime of a contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrictionState {
    Separated,
    Static,
    Dynamic,
}

impl FrictionState {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrictionState::Separated => "separated",
            FrictionState::Static => "static",
            FrictionState::Dynamic => "dynamic",
        }
    }
}

/// Identity of a contact across steps: body pair plus feature tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ContactKey {
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub feature: u32,
}

/// A single contact point between two bodies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub body_a: BodyId,
    pub body_b: BodyId,
    /// World-frame contact point.
    pub point: Vec3,
    /// Unit normal from `body_b` toward `body_a`.
    pub normal: Vec3,
    /// Overlap depth along the normal; zero for separated contacts.
    pub penetration_depth: f64,
    /// Remaining gap along the normal for speculative contacts; zero once
    /// touching or penetrating.
    pub separation: f64,
    /// Relative velocity of A with respect to B at the contact point.
    pub relative_velocity: Vec3,
    /// Component of the relative velocity along the normal (negative while
    /// approaching).
    pub normal_speed: f64,
    /// Magnitude of the tangential relative velocity.
    pub tangential_speed: f64,
    /// Normal relative speed frozen at detection time (pre-solve); the
    /// collision transient amplitude is derived from it.
    pub approach_speed: f64,
    pub friction_state: FrictionState,
    pub feature: u32,
}

impl Contact {
    pub fn key(&self) -> ContactKey {
        ContactKey {
            body_a: self.body_a,
            body_b: self.body_b,
            feature: self.feature,
        }
    }
}

fn aabb(body: &RigidBody) -> (Vec3, Vec3) {
    match body.shape {
        crate::physics::body::Shape::Sphere { radius } => {
            let r = Vec3::new(radius, radius, radius);
            (body.pose.position - r, body.pose.position + r)
        }
        crate::physics::body::Shape::Box { half_extents } => {
            let r = body.pose.orientation.to_rotation_matrix();
            let m = r.matrix().abs();
            let h = m * Vec3::from_column_slice(&half_extents);
            (body.pose.position - h, body.pose.position + h)
        }
        crate::physics::body::Shape::HalfSpace { .. } => (
            Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        ),
    }
}

fn swept_aabb(body: &RigidBody, dt: f64, margin: f64) -> (Vec3, Vec3) {
    let (mut lo, mut hi) = aabb(body);
    let sweep = body.linear_velocity * dt;
    for k in 0..3 {
        if sweep[k] > 0.0 {
            hi[k] += sweep[k];
        } else {
            lo[k] += sweep[k];
        }
        lo[k] -= margin;
        hi[k] += margin;
    }
    (lo, hi)
}

fn aabb_overlap(a: &(Vec3, Vec3), b: &(Vec3, Vec3)) -> bool {
    (0..3).all(|k| a.0[k] <= b.1[k] && b.0[k] <= a.1[k])
}

/// Detect all touching, penetrating, and imminent contacts in the world.
///
/// Pairs whose relative motion this step exceeds their thickness are run
/// through a GJK conservative-advancement pre-pass so they cannot tunnel;
/// a hit is materialized as a separated contact whose gap the velocity
/// solver is allowed to close but not cross.
pub fn detect_contacts(world: &WorldState) -> Vec<Contact> {
    let dt = world.dt;
    let mut contacts = Vec::new();

    for i in 0..world.bodies.len() {
        for j in (i + 1)..world.bodies.len() {
            let a = &world.bodies[i];
            let b = &world.bodies[j];
            if a.is_static && b.is_static {
                continue;
            }
            if !aabb_overlap(&swept_aabb(a, dt, CONTACT_MARGIN), &swept_aabb(b, dt, CONTACT_MARGIN)) {
                continue;
            }

            let mut points = manifold::collide(&a.shape, &a.pose, &b.shape, &b.pose, CONTACT_MARGIN);

            if points.is_empty() {
                // Swept pre-pass: only worth running when the pair moves far
                // enough to skip the proximity band in a single step.
                let rel = (a.linear_velocity - b.linear_velocity) * dt;
                let thickness = a.shape.thickness().min(b.shape.thickness());
                if rel.norm() > 0.5 * thickness.min(f64::MAX) && rel.norm() > CONTACT_MARGIN {
                    if !matches!(a.shape, crate::physics::body::Shape::HalfSpace { .. })
                        && !matches!(b.shape, crate::physics::body::Shape::HalfSpace { .. })
                    {
                        if let Some(t) = gjk::time_of_impact(
                            &a.shape,
                            &a.pose,
                            &a.linear_velocity,
                            &b.shape,
                            &b.pose,
                            &b.linear_velocity,
                            dt,
                            CONTACT_MARGIN,
                        ) {
                            let _ = t;
                            if let gjk::GjkResult::Separated {
                                distance,
                                point_a,
                                point_b,
                                normal,
                            } = gjk::distance(&a.shape, &a.pose, &b.shape, &b.pose)
                            {
                                points.push(manifold::ManifoldPoint {
                                    point: 0.5 * (point_a + point_b),
                                    normal,
                                    penetration: 0.0,
                                    separation: distance,
                                    feature: 200,
                                });
                            }
                        }
                    }
                }
            }

            for p in points {
                let rel_vel = a.velocity_at(&p.point) - b.velocity_at(&p.point);
                let normal_speed = rel_vel.dot(&p.normal);
                let tangential = rel_vel - p.normal * normal_speed;
                let tangential_speed = tangential.norm();
                let friction_state = if p.penetration <= 0.0 && p.separation > 0.0 {
                    FrictionState::Separated
                } else if tangential_speed < SLIP_SPEED_EPSILON {
                    FrictionState::Static
                } else {
                    FrictionState::Dynamic
                };
                contacts.push(Contact {
                    body_a: a.id,
                    body_b: b.id,
                    point: p.point,
                    normal: p.normal,
                    penetration_depth: p.penetration,
                    separation: p.separation,
                    relative_velocity: rel_vel,
                    normal_speed,
                    tangential_speed,
                    approach_speed: normal_speed,
                    friction_state,
                    feature: p.feature,
                });
            }
        }
    }

    contacts.sort_by(|x, y| {
        x.body_a
            .cmp(&y.body_a)
            .then(x.body_b.cmp(&y.body_b))
            .then(x.point.x.partial_cmp(&y.point.x).unwrap())
            .then(x.point.y.partial_cmp(&y.point.y).unwrap())
            .then(x.point.z.partial_cmp(&y.point.z).unwrap())
            .then(x.feature.cmp(&y.feature))
    });
    contacts
}
