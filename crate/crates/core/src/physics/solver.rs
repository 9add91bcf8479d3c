//! Projected Gauss–Seidel solve of the mixed velocity-level LCP: unilateral
//! contact rows with Coulomb friction, bilateral ball-joint rows, and
//! virtual-coupling springs folded into the effective mass matrix.
//!
//! Penetration and joint drift are corrected by a second, positional pass
//! whose pseudo-impulses never enter the real velocities, so the velocity
//! solve stays dissipative.

use std::collections::BTreeMap;

use crate::math::{tangent_basis, Mat3, Vec3};
use crate::physics::collision::{Contact, ContactKey, FrictionState};
use crate::physics::world::WorldState;

/// Impulse carried over from the previous step to warm-start PGS.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct WarmImpulse {
    pub normal: f64,
    pub tangential_world: Vec3,
}

pub(crate) type WarmStart = BTreeMap<ContactKey, WarmImpulse>;

/// Iteration and stabilization parameters for the contact solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    pub iterations: usize,
    pub tolerance: f64,
    /// Fraction of the remaining penetration corrected per step.
    pub baumgarte: f64,
    /// Penetration left uncorrected to avoid jitter.
    pub slop: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            iterations: 60,
            tolerance: 1e-8,
            baumgarte: 0.2,
            slop: 1e-4,
        }
    }
}

/// Impulse solved for one contact, expressed in its tangent basis.
#[derive(Debug, Clone, Copy)]
pub struct ContactImpulse {
    /// Index into the contact list handed to the solver.
    pub contact: usize,
    /// Normal impulse, non-negative.
    pub normal_impulse: f64,
    /// Tangential impulse components along `tangent1`/`tangent2`.
    pub tangential_impulse: [f64; 2],
    pub tangent1: Vec3,
    pub tangent2: Vec3,
    /// Friction coefficient the cone was clamped with.
    pub mu: f64,
}

impl ContactImpulse {
    pub fn tangential_magnitude(&self) -> f64 {
        (self.tangential_impulse[0].powi(2) + self.tangential_impulse[1].powi(2)).sqrt()
    }

    pub fn tangential_world(&self) -> Vec3 {
        self.tangent1 * self.tangential_impulse[0] + self.tangent2 * self.tangential_impulse[1]
    }
}

/// Per-body quantities entering the solve.
pub(crate) struct SolveInputs {
    /// Unconstrained end-of-step velocities (gravity, external forces, and
    /// implicit coupling springs already applied).
    pub free_lin: Vec<Vec3>,
    pub free_ang: Vec<Vec3>,
    /// Inverse of the coupling-augmented masses.
    pub inv_mass: Vec<f64>,
    pub inv_inertia: Vec<Mat3>,
}

pub(crate) struct SolveOutcome {
    pub impulses: Vec<ContactImpulse>,
    pub post_lin: Vec<Vec3>,
    pub post_ang: Vec<Vec3>,
    pub pseudo_lin: Vec<Vec3>,
    pub pseudo_ang: Vec<Vec3>,
    pub residual: f64,
    pub iterations: usize,
}

struct ContactRow {
    a: usize,
    b: usize,
    ra: Vec3,
    rb: Vec3,
    normal: Vec3,
    t1: Vec3,
    t2: Vec3,
    /// Allowed approach speed: separation / dt for speculative contacts.
    allowed_approach: f64,
    inv_k_normal: f64,
    inv_k_t1: f64,
    inv_k_t2: f64,
    mu: f64,
    lambda_n: f64,
    lambda_t: [f64; 2],
}

struct JointRow {
    a: usize,
    b: usize,
    ra: Vec3,
    rb: Vec3,
    inv_k: Mat3,
    /// Anchor separation vector (a minus b) for the positional pass.
    drift: Vec3,
    impulse: Vec3,
}

fn rel_velocity(
    lin: &[Vec3],
    ang: &[Vec3],
    row_a: usize,
    row_b: usize,
    ra: &Vec3,
    rb: &Vec3,
) -> Vec3 {
    lin[row_a] + ang[row_a].cross(ra) - lin[row_b] - ang[row_b].cross(rb)
}

fn effective_mass_along(
    inputs: &SolveInputs,
    a: usize,
    b: usize,
    ra: &Vec3,
    rb: &Vec3,
    dir: &Vec3,
) -> f64 {
    let ra_x_d = ra.cross(dir);
    let rb_x_d = rb.cross(dir);
    inputs.inv_mass[a]
        + inputs.inv_mass[b]
        + ra_x_d.dot(&(inputs.inv_inertia[a] * ra_x_d))
        + rb_x_d.dot(&(inputs.inv_inertia[b] * rb_x_d))
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn apply_impulse(
    lin: &mut [Vec3],
    ang: &mut [Vec3],
    inputs: &SolveInputs,
    a: usize,
    b: usize,
    ra: &Vec3,
    rb: &Vec3,
    p: &Vec3,
) {
    lin[a] += p * inputs.inv_mass[a];
    ang[a] += inputs.inv_inertia[a] * ra.cross(p);
    lin[b] -= p * inputs.inv_mass[b];
    ang[b] -= inputs.inv_inertia[b] * rb.cross(p);
}

pub(crate) fn solve(
    world: &WorldState,
    contacts: &[Contact],
    inputs: &SolveInputs,
    dt: f64,
    params: &SolverParams,
    warm: Option<&WarmStart>,
) -> SolveOutcome {
    let n_bodies = world.bodies.len();
    let mut lin = inputs.free_lin.clone();
    let mut ang = inputs.free_ang.clone();

    // Build contact rows.
    let mut rows: Vec<ContactRow> = Vec::with_capacity(contacts.len());
    for c in contacts {
        let a = c.body_a.index();
        let b = c.body_b.index();
        let ra = c.point - world.bodies[a].pose.position;
        let rb = c.point - world.bodies[b].pose.position;

        // Friction basis: first tangent opposes the pre-solve slip direction
        // when there is one, otherwise a deterministic frame off the normal.
        let tangential = c.relative_velocity - c.normal * c.normal_speed;
        let (t1, t2) = if c.tangential_speed >= crate::physics::world::SLIP_SPEED_EPSILON {
            let t1 = tangential / c.tangential_speed;
            (t1, c.normal.cross(&t1))
        } else {
            tangent_basis(&c.normal)
        };

        // Coefficient selection is friction-state aware: a contact observed
        // slipping is resolved against the kinetic coefficient.
        let body_mu = |body: &crate::physics::RigidBody| match c.friction_state {
            FrictionState::Dynamic => body.mu_dynamic,
            _ => body.mu_static,
        };
        let mu = body_mu(&world.bodies[a]).min(body_mu(&world.bodies[b]));

        // Warm start from the previous step's solution for this feature.
        let (lambda_n, lambda_t) = match warm.and_then(|w| w.get(&c.key())) {
            Some(wi) => {
                let lt = [wi.tangential_world.dot(&t1), wi.tangential_world.dot(&t2)];
                (wi.normal, lt)
            }
            None => (0.0, [0.0, 0.0]),
        };

        rows.push(ContactRow {
            a,
            b,
            ra,
            rb,
            normal: c.normal,
            t1,
            t2,
            allowed_approach: c.separation / dt,
            inv_k_normal: 1.0 / effective_mass_along(inputs, a, b, &ra, &rb, &c.normal),
            inv_k_t1: 1.0 / effective_mass_along(inputs, a, b, &ra, &rb, &t1),
            inv_k_t2: 1.0 / effective_mass_along(inputs, a, b, &ra, &rb, &t2),
            mu,
            lambda_n,
            lambda_t,
        });
    }

    // Apply warm-start impulses up front.
    for r in &mut rows {
        if r.lambda_n != 0.0 || r.lambda_t != [0.0, 0.0] {
            let limit = r.mu * r.lambda_n;
            let mag = (r.lambda_t[0].powi(2) + r.lambda_t[1].powi(2)).sqrt();
            if mag > limit {
                let scale = if mag > 0.0 { limit / mag } else { 0.0 };
                r.lambda_t[0] *= scale;
                r.lambda_t[1] *= scale;
            }
            let p = r.normal * r.lambda_n + r.t1 * r.lambda_t[0] + r.t2 * r.lambda_t[1];
            apply_impulse(&mut lin, &mut ang, inputs, r.a, r.b, &r.ra, &r.rb, &p);
        }
    }

    // Ball-joint rows with a precomputed 3x3 effective-mass inverse.
    let mut joints: Vec<JointRow> = Vec::with_capacity(world.joints.len());
    for j in &world.joints {
        let a = j.body_a.index();
        let b = j.body_b.index();
        let pa = world.bodies[a].pose.transform_point(&j.anchor_a);
        let pb = world.bodies[b].pose.transform_point(&j.anchor_b);
        let ra = pa - world.bodies[a].pose.position;
        let rb = pb - world.bodies[b].pose.position;
        let sa = skew(&ra);
        let sb = skew(&rb);
        let k = Mat3::identity() * (inputs.inv_mass[a] + inputs.inv_mass[b])
            - sa * inputs.inv_inertia[a] * sa
            - sb * inputs.inv_inertia[b] * sb;
        let inv_k = k.try_inverse().unwrap_or_else(Mat3::zeros);
        joints.push(JointRow {
            a,
            b,
            ra,
            rb,
            inv_k,
            drift: pa - pb,
            impulse: Vec3::zeros(),
        });
    }

    // Velocity pass.
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..params.iterations {
        iterations = it + 1;
        for j in &mut joints {
            let v = rel_velocity(&lin, &ang, j.a, j.b, &j.ra, &j.rb);
            let dp = -(j.inv_k * v);
            j.impulse += dp;
            apply_impulse(&mut lin, &mut ang, inputs, j.a, j.b, &j.ra, &j.rb, &dp);
        }
        // Normal rows first so their transient torque imbalances cancel
        // before friction sees them; otherwise resting manifolds accumulate
        // spurious saturated tangential impulses.
        for r in &mut rows {
            let v = rel_velocity(&lin, &ang, r.a, r.b, &r.ra, &r.rb);
            let w = v.dot(&r.normal) + r.allowed_approach;
            let d_lambda = (-w * r.inv_k_normal).max(-r.lambda_n);
            r.lambda_n += d_lambda;
            let p = r.normal * d_lambda;
            apply_impulse(&mut lin, &mut ang, inputs, r.a, r.b, &r.ra, &r.rb, &p);
        }
        // Friction rows, projected jointly onto the cone disc.
        for r in &mut rows {
            let limit = r.mu * r.lambda_n;
            let v = rel_velocity(&lin, &ang, r.a, r.b, &r.ra, &r.rb);
            let old = r.lambda_t;
            r.lambda_t[0] -= v.dot(&r.t1) * r.inv_k_t1;
            r.lambda_t[1] -= v.dot(&r.t2) * r.inv_k_t2;
            let mag = (r.lambda_t[0].powi(2) + r.lambda_t[1].powi(2)).sqrt();
            if mag > limit {
                let scale = if mag > 0.0 { limit / mag } else { 0.0 };
                r.lambda_t[0] *= scale;
                r.lambda_t[1] *= scale;
            }
            let dp = r.t1 * (r.lambda_t[0] - old[0]) + r.t2 * (r.lambda_t[1] - old[1]);
            apply_impulse(&mut lin, &mut ang, inputs, r.a, r.b, &r.ra, &r.rb, &dp);
        }

        residual = compute_residual(&lin, &ang, &rows, &joints);
        if residual <= params.tolerance {
            break;
        }
    }

    // Positional pass: pseudo velocities that move poses but not momenta.
    let mut pseudo_lin = vec![Vec3::zeros(); n_bodies];
    let mut pseudo_ang = vec![Vec3::zeros(); n_bodies];
    let mut pos_rows: Vec<(usize, f64)> = Vec::new();
    for (i, c) in contacts.iter().enumerate() {
        let depth = c.penetration_depth - params.slop;
        if depth > 0.0 {
            pos_rows.push((i, params.baumgarte * depth / dt));
        }
    }
    if !pos_rows.is_empty() || !joints.is_empty() {
        let mut pos_lambda = vec![0.0f64; pos_rows.len()];
        for _ in 0..params.iterations.min(20) {
            for j in &joints {
                let v = rel_velocity(&pseudo_lin, &pseudo_ang, j.a, j.b, &j.ra, &j.rb);
                let target = j.drift * (params.baumgarte / dt);
                let dp = -(j.inv_k * (v + target));
                apply_impulse(
                    &mut pseudo_lin,
                    &mut pseudo_ang,
                    inputs,
                    j.a,
                    j.b,
                    &j.ra,
                    &j.rb,
                    &dp,
                );
            }
            for (k, &(i, push)) in pos_rows.iter().enumerate() {
                let r = &rows[i];
                let v = rel_velocity(&pseudo_lin, &pseudo_ang, r.a, r.b, &r.ra, &r.rb);
                let w = v.dot(&r.normal) - push;
                let d = (-w * r.inv_k_normal).max(-pos_lambda[k]);
                pos_lambda[k] += d;
                let p = r.normal * d;
                apply_impulse(
                    &mut pseudo_lin,
                    &mut pseudo_ang,
                    inputs,
                    r.a,
                    r.b,
                    &r.ra,
                    &r.rb,
                    &p,
                );
            }
        }
    }

    let impulses = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ContactImpulse {
            contact: i,
            normal_impulse: r.lambda_n,
            tangential_impulse: r.lambda_t,
            tangent1: r.t1,
            tangent2: r.t2,
            mu: r.mu,
        })
        .collect();

    SolveOutcome {
        impulses,
        post_lin: lin,
        post_ang: ang,
        pseudo_lin,
        pseudo_ang,
        residual,
        iterations,
    }
}

fn compute_residual(lin: &[Vec3], ang: &[Vec3], rows: &[ContactRow], joints: &[JointRow]) -> f64 {
    let mut res = 0.0f64;
    for r in rows {
        let v = rel_velocity(lin, ang, r.a, r.b, &r.ra, &r.rb);
        let w = v.dot(&r.normal) + r.allowed_approach;
        // Complementarity: no residual approach, and no impulse against a
        // separating contact.
        res = res.max(-w);
        res = res.max(r.lambda_n * w.max(0.0));
        // Friction stick condition: impulses strictly inside the cone must
        // have cancelled the tangential velocity. Saturated rows slide.
        let limit = r.mu * r.lambda_n;
        let mag = (r.lambda_t[0].powi(2) + r.lambda_t[1].powi(2)).sqrt();
        if mag < limit - 1e-12 {
            let vt = (v.dot(&r.t1).powi(2) + v.dot(&r.t2).powi(2)).sqrt();
            res = res.max(vt);
        }
    }
    for j in joints {
        let v = rel_velocity(lin, ang, j.a, j.b, &j.ra, &j.rb);
        res = res.max(v.norm());
    }
    res
}

/// Solve the contact LCP for a world snapshot, with gravity and coupling
/// springs as the only applied forces. Returns one impulse per contact.
pub fn solve_contacts(
    world: &WorldState,
    contacts: &[Contact],
    dt: f64,
) -> Vec<ContactImpulse> {
    let inputs = crate::physics::world::free_velocities(world, None, dt);
    solve(world, contacts, &inputs, dt, &world.solver_params, None).impulses
}
