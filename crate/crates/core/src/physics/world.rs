//! World state and the fixed-timestep stepping pipeline.
//!
//! Stepping is linearly implicit at the velocity level: gravity, external
//! wrenches, and virtual-coupling springs are folded into an unconstrained
//! end-of-step velocity with coupling-augmented masses, contacts and ball
//! joints are resolved by the PGS pass, and poses advance with the solved
//! velocities. Identical world snapshots step to bit-identical successors.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::math::{is_finite_vec, rotation_error, Mat3, Quat, Vec3};
use crate::physics::body::{BodyId, RigidBody, Shape};
use crate::physics::collision::{detect_contacts, Contact, FrictionState};
use crate::physics::solver::{self, ContactImpulse, SolveInputs, SolverParams};

/// Slip-speed threshold separating static from dynamic friction.
pub const SLIP_SPEED_EPSILON: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("step dt {got} does not match world dt {expected}")]
    DtMismatch { got: f64, expected: f64 },
    #[error("non-finite state after integrating step {step_index}; step rejected")]
    NonFiniteState { step_index: u64 },
    #[error("body '{name}' rejected: {reason}")]
    InvalidBody { name: String, reason: String },
}

/// Spring-damper link from a kinematic target pose to a simulated body.
/// The spring is integrated implicitly inside the velocity solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub body: BodyId,
    pub target_position: Vec3,
    pub target_orientation: Quat,
    pub target_linear_velocity: Vec3,
    pub target_angular_velocity: Vec3,
    pub linear_stiffness: f64,
    pub linear_damping: f64,
    pub angular_stiffness: f64,
    pub angular_damping: f64,
}

impl Coupling {
    pub fn new(body: BodyId, linear_stiffness: f64, linear_damping: f64) -> Self {
        Coupling {
            body,
            target_position: Vec3::zeros(),
            target_orientation: Quat::identity(),
            target_linear_velocity: Vec3::zeros(),
            target_angular_velocity: Vec3::zeros(),
            linear_stiffness,
            linear_damping,
            angular_stiffness: 0.0,
            angular_damping: 0.0,
        }
    }

    /// Coupling wrench for the current pose error, evaluated explicitly.
    pub fn wrench(&self, body: &RigidBody) -> (Vec3, Vec3) {
        let force = (self.target_position - body.pose.position) * self.linear_stiffness
            + (self.target_linear_velocity - body.linear_velocity) * self.linear_damping;
        let torque = rotation_error(&body.pose.orientation, &self.target_orientation)
            * self.angular_stiffness
            + (self.target_angular_velocity - body.angular_velocity) * self.angular_damping;
        (force, torque)
    }
}

/// Bilateral point-to-point constraint between two bodies.
#[derive(Debug, Clone, PartialEq)]
pub struct BallJoint {
    pub body_a: BodyId,
    pub body_b: BodyId,
    /// Anchor in body A's local frame.
    pub anchor_a: Vec3,
    /// Anchor in body B's local frame.
    pub anchor_b: Vec3,
}

impl BallJoint {
    /// World-frame distance between the two anchor points.
    pub fn separation(&self, world: &WorldState) -> f64 {
        let pa = world.bodies[self.body_a.index()].pose.transform_point(&self.anchor_a);
        let pb = world.bodies[self.body_b.index()].pose.transform_point(&self.anchor_b);
        (pa - pb).norm()
    }
}

/// Per-body external wrenches for one step.
#[derive(Debug, Clone, Default)]
pub struct ExternalForces {
    entries: BTreeMap<BodyId, (Vec3, Vec3)>,
}

impl ExternalForces {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn add_force(&mut self, body: BodyId, force: Vec3) {
        let e = self.entries.entry(body).or_insert((Vec3::zeros(), Vec3::zeros()));
        e.0 += force;
    }

    pub fn add_torque(&mut self, body: BodyId, torque: Vec3) {
        let e = self.entries.entry(body).or_insert((Vec3::zeros(), Vec3::zeros()));
        e.1 += torque;
    }

    pub fn get(&self, body: BodyId) -> (Vec3, Vec3) {
        self.entries
            .get(&body)
            .copied()
            .unwrap_or((Vec3::zeros(), Vec3::zeros()))
    }
}

/// Contact begin / stick-slip transition at body-pair granularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub kind: PairEventKind,
    /// Simulation time of the step that resolved the event.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairEventKind {
    /// Contact began; carries the normal approach speed at detection.
    Began { approach_speed: f64 },
    StaticToDynamic,
    DynamicToStatic,
}

/// Per-step solver and timing report.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub step_index: u64,
    /// Time at the start of the step (events are stamped with this).
    pub time: f64,
    pub contact_count: usize,
    pub solver_residual: f64,
    pub solver_iterations: usize,
    pub events: Vec<PairEvent>,
    /// Wall-clock cost of the step in milliseconds. Not serialized into
    /// traces (they must be byte-identical across runs).
    pub wall_time_ms: f64,
}

/// Complete simulation state. `time` is always `step_index * dt` — it is
/// derived, never accumulated.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub bodies: Vec<RigidBody>,
    pub joints: Vec<BallJoint>,
    pub couplings: Vec<Coupling>,
    pub gravity: Vec3,
    pub dt: f64,
    pub step_index: u64,
    pub solver_params: SolverParams,
    /// Aggregate friction state per touching body pair, persisted across
    /// steps to edge-detect stick-slip transitions.
    pair_states: BTreeMap<(BodyId, BodyId), FrictionState>,
    /// Contacts of the most recent step, annotated with post-solve
    /// velocities and classified friction states.
    pub last_contacts: Vec<Contact>,
    pub last_impulses: Vec<ContactImpulse>,
}

impl WorldState {
    pub fn new(dt: f64) -> Self {
        WorldState {
            bodies: Vec::new(),
            joints: Vec::new(),
            couplings: Vec::new(),
            gravity: Vec3::new(0.0, 0.0, -9.81),
            dt,
            step_index: 0,
            solver_params: SolverParams::default(),
            pair_states: BTreeMap::new(),
            last_contacts: Vec::new(),
            last_impulses: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn add_body(&mut self, mut body: RigidBody) -> Result<BodyId, PhysicsError> {
        if body.shape.is_degenerate() {
            return Err(PhysicsError::InvalidBody {
                name: body.name.clone(),
                reason: "degenerate shape (non-positive extent)".into(),
            });
        }
        if !body.is_static && body.mass <= 0.0 {
            return Err(PhysicsError::InvalidBody {
                name: body.name.clone(),
                reason: "dynamic body requires mass > 0".into(),
            });
        }
        if matches!(body.shape, Shape::HalfSpace { .. }) && !body.is_static {
            return Err(PhysicsError::InvalidBody {
                name: body.name.clone(),
                reason: "half-space shapes must be static".into(),
            });
        }
        if body.mu_dynamic < 0.0 || body.mu_dynamic > body.mu_static {
            return Err(PhysicsError::InvalidBody {
                name: body.name.clone(),
                reason: "friction must satisfy 0 <= mu_dynamic <= mu_static".into(),
            });
        }
        let id = BodyId(self.bodies.len() as u32);
        body.id = id;
        self.bodies.push(body);
        Ok(id)
    }

    pub fn add_joint(&mut self, joint: BallJoint) {
        self.joints.push(joint);
    }

    pub fn body(&self, id: BodyId) -> &RigidBody {
        &self.bodies[id.index()]
    }

    pub fn body_by_name(&self, name: &str) -> Option<&RigidBody> {
        self.bodies.iter().find(|b| b.name == name)
    }

    /// Replace or insert the coupling attached to `body`.
    pub fn set_coupling(&mut self, coupling: Coupling) {
        if let Some(c) = self.couplings.iter_mut().find(|c| c.body == coupling.body) {
            *c = coupling;
        } else {
            self.couplings.push(coupling);
            self.couplings.sort_by_key(|c| c.body);
        }
    }

    pub fn coupling(&self, body: BodyId) -> Option<&Coupling> {
        self.couplings.iter().find(|c| c.body == body)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies.iter().map(|b| b.kinetic_energy()).sum()
    }

    /// Aggregate friction state of a body pair as of the last step.
    pub fn pair_state(&self, a: BodyId, b: BodyId) -> FrictionState {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pair_states
            .get(&key)
            .copied()
            .unwrap_or(FrictionState::Separated)
    }
}

/// Unconstrained end-of-step velocities and coupling-augmented inverse
/// masses, the inputs of the PGS solve.
pub(crate) fn free_velocities(
    world: &WorldState,
    external: Option<&ExternalForces>,
    dt: f64,
) -> SolveInputs {
    let n = world.bodies.len();
    let mut free_lin = vec![Vec3::zeros(); n];
    let mut free_ang = vec![Vec3::zeros(); n];
    let mut inv_mass = vec![0.0f64; n];
    let mut inv_inertia = vec![Mat3::zeros(); n];

    for (i, body) in world.bodies.iter().enumerate() {
        if body.is_static {
            continue;
        }
        let (ext_f, ext_t) = external.map(|e| e.get(body.id)).unwrap_or_default();

        let mut mass_aug = 0.0;
        let mut inertia_aug = 0.0;
        let mut lin_rhs = body.linear_velocity * body.mass + (world.gravity * body.mass + ext_f) * dt;
        let world_inertia = body.world_inertia();
        let mut ang_rhs = world_inertia * body.angular_velocity + ext_t * dt;

        for c in world.couplings.iter().filter(|c| c.body == body.id) {
            mass_aug += dt * (dt * c.linear_stiffness + c.linear_damping);
            inertia_aug += dt * (dt * c.angular_stiffness + c.angular_damping);
            lin_rhs += ((c.target_position - body.pose.position) * c.linear_stiffness
                + c.target_linear_velocity * c.linear_damping)
                * dt;
            ang_rhs += (rotation_error(&body.pose.orientation, &c.target_orientation)
                * c.angular_stiffness
                + c.target_angular_velocity * c.angular_damping)
                * dt;
        }

        let m_eff = body.mass + mass_aug;
        inv_mass[i] = 1.0 / m_eff;
        free_lin[i] = lin_rhs / m_eff;

        let i_eff = world_inertia + Mat3::identity() * inertia_aug;
        let i_inv = i_eff.try_inverse().unwrap_or_else(Mat3::zeros);
        inv_inertia[i] = i_inv;
        free_ang[i] = i_inv * ang_rhs;
    }

    SolveInputs {
        free_lin,
        free_ang,
        inv_mass,
        inv_inertia,
    }
}

/// Classify a solved contact's friction regime.
///
/// `Dynamic` when the post-solve tangential speed exceeds the slip
/// threshold, or when the friction impulse ended up clamped onto the cone
/// boundary (incipient slip); `Static` when the impulse lies strictly
/// inside the cone at negligible slip speed.
pub fn classify_friction(
    contact: &Contact,
    impulse: &ContactImpulse,
    slip_speed_epsilon: f64,
) -> FrictionState {
    if impulse.normal_impulse <= 0.0 && contact.penetration_depth <= 0.0 {
        return FrictionState::Separated;
    }
    if contact.tangential_speed >= slip_speed_epsilon {
        return FrictionState::Dynamic;
    }
    let limit = impulse.mu * impulse.normal_impulse;
    let mag = impulse.tangential_magnitude();
    if mag <= 1e-12 || mag < limit - 1e-12 {
        FrictionState::Static
    } else {
        FrictionState::Dynamic
    }
}

/// Advance the world by one fixed step.
pub fn step(
    world: &WorldState,
    external: &ExternalForces,
    dt: f64,
) -> Result<StepOutput, PhysicsError> {
    if (dt - world.dt).abs() > 1e-15 {
        return Err(PhysicsError::DtMismatch { got: dt, expected: world.dt });
    }
    #[cfg(not(target_arch = "wasm32"))]
    let t_start = std::time::Instant::now();

    let step_time = world.time();
    let mut next = world.clone();

    let contacts = detect_contacts(world);
    let inputs = free_velocities(world, Some(external), dt);
    let warm: solver::WarmStart = world
        .last_contacts
        .iter()
        .zip(world.last_impulses.iter())
        .map(|(c, i)| {
            (
                c.key(),
                solver::WarmImpulse {
                    normal: i.normal_impulse,
                    tangential_world: i.tangential_world(),
                },
            )
        })
        .collect();
    let outcome = solver::solve(world, &contacts, &inputs, dt, &world.solver_params, Some(&warm));

    // Annotate contacts with post-solve kinematics and classify friction.
    let mut annotated = contacts.clone();
    for (i, c) in annotated.iter_mut().enumerate() {
        let a = c.body_a.index();
        let b = c.body_b.index();
        let ra = c.point - world.bodies[a].pose.position;
        let rb = c.point - world.bodies[b].pose.position;
        let v = outcome.post_lin[a] + outcome.post_ang[a].cross(&ra)
            - outcome.post_lin[b]
            - outcome.post_ang[b].cross(&rb);
        c.relative_velocity = v;
        c.normal_speed = v.dot(&c.normal);
        c.tangential_speed = (v - c.normal * c.normal_speed).norm();
        c.friction_state = classify_friction(c, &outcome.impulses[i], SLIP_SPEED_EPSILON);
    }

    // Aggregate per-pair states and edge-detect events. Slip at pair level
    // is judged on manifold totals: post-solve slip speed, or the vector sum
    // of tangential impulses reaching the summed cone capacity. Summing
    // cancels the internal preload impulses PGS leaves on multi-point
    // manifolds, which would otherwise read as spurious slip.
    let mut events: Vec<PairEvent> = Vec::new();
    let mut new_pair_states: BTreeMap<(BodyId, BodyId), FrictionState> = BTreeMap::new();
    let mut pair_approach: BTreeMap<(BodyId, BodyId), f64> = BTreeMap::new();
    {
        struct PairAccum {
            sum_n: f64,
            sum_t: Vec3,
            max_slip: f64,
            mu: f64,
        }
        let mut accum: BTreeMap<(BodyId, BodyId), PairAccum> = BTreeMap::new();
        for (i, c) in annotated.iter().enumerate() {
            let imp = &outcome.impulses[i];
            let active = c.penetration_depth > 0.0 || imp.normal_impulse > 1e-12;
            if !active {
                continue;
            }
            let key = (c.body_a, c.body_b);
            let e = accum.entry(key).or_insert(PairAccum {
                sum_n: 0.0,
                sum_t: Vec3::zeros(),
                max_slip: 0.0,
                mu: 0.0,
            });
            e.sum_n += imp.normal_impulse;
            e.sum_t += imp.tangential_world();
            e.max_slip = e.max_slip.max(c.tangential_speed);
            e.mu = e.mu.max(imp.mu);
            let ap = pair_approach.entry(key).or_insert(0.0);
            *ap = ap.min(c.approach_speed);
        }
        for (key, e) in accum {
            let capacity = e.mu * e.sum_n;
            let saturated = e.sum_t.norm() >= capacity - (1e-9 * e.sum_n + 1e-12);
            let dynamic = e.max_slip >= SLIP_SPEED_EPSILON || (saturated && capacity > 0.0);
            new_pair_states.insert(
                key,
                if dynamic {
                    FrictionState::Dynamic
                } else {
                    FrictionState::Static
                },
            );
        }
    }
    for (key, st) in &new_pair_states {
        match world.pair_states.get(key) {
            None => {
                events.push(PairEvent {
                    body_a: key.0,
                    body_b: key.1,
                    kind: PairEventKind::Began {
                        approach_speed: -pair_approach.get(key).copied().unwrap_or(0.0),
                    },
                    time: step_time,
                });
                if *st == FrictionState::Dynamic {
                    events.push(PairEvent {
                        body_a: key.0,
                        body_b: key.1,
                        kind: PairEventKind::StaticToDynamic,
                        time: step_time,
                    });
                }
            }
            Some(prev) => {
                if *prev == FrictionState::Static && *st == FrictionState::Dynamic {
                    events.push(PairEvent {
                        body_a: key.0,
                        body_b: key.1,
                        kind: PairEventKind::StaticToDynamic,
                        time: step_time,
                    });
                } else if *prev == FrictionState::Dynamic && *st == FrictionState::Static {
                    events.push(PairEvent {
                        body_a: key.0,
                        body_b: key.1,
                        kind: PairEventKind::DynamicToStatic,
                        time: step_time,
                    });
                }
            }
        }
    }

    // Integrate poses with solved plus positional pseudo velocities.
    for (i, body) in next.bodies.iter_mut().enumerate() {
        if body.is_static {
            continue;
        }
        body.linear_velocity = outcome.post_lin[i];
        body.angular_velocity = outcome.post_ang[i];
        body.pose.position += (outcome.post_lin[i] + outcome.pseudo_lin[i]) * dt;
        let dw = (outcome.post_ang[i] + outcome.pseudo_ang[i]) * dt;
        body.pose.orientation = Quat::from_scaled_axis(dw) * body.pose.orientation;
        body.pose.orientation.renormalize();
    }

    for body in &next.bodies {
        if !is_finite_vec(&body.pose.position)
            || !is_finite_vec(&body.linear_velocity)
            || !is_finite_vec(&body.angular_velocity)
            || !body.pose.orientation.as_ref().coords.iter().all(|x| x.is_finite())
        {
            return Err(PhysicsError::NonFiniteState { step_index: world.step_index });
        }
    }

    next.step_index = world.step_index + 1;
    next.pair_states = new_pair_states;
    next.last_contacts = annotated;
    next.last_impulses = outcome.impulses;

    #[cfg(not(target_arch = "wasm32"))]
    let wall_time_ms = t_start.elapsed().as_secs_f64() * 1e3;
    #[cfg(target_arch = "wasm32")]
    let wall_time_ms = 0.0;

    let diagnostics = StepDiagnostics {
        step_index: next.step_index,
        time: step_time,
        contact_count: next.last_contacts.len(),
        solver_residual: outcome.residual,
        solver_iterations: outcome.iterations,
        events,
        wall_time_ms,
    };

    Ok(StepOutput { world: next, diagnostics })
}

/// Result of advancing the world by one step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub world: WorldState,
    pub diagnostics: StepDiagnostics,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Pose;
    use crate::physics::solver::solve_contacts;
    use approx::assert_relative_eq;

    fn ground() -> RigidBody {
        RigidBody::new_static(
            "ground",
            Shape::HalfSpace { normal: [0.0, 0.0, 1.0], offset: 0.0 },
            Pose::identity(),
        )
    }

    fn sphere_at(name: &str, r: f64, m: f64, z: f64) -> RigidBody {
        RigidBody::new_dynamic(name, Shape::Sphere { radius: r }, m, Pose::from_position(Vec3::new(0.0, 0.0, z)))
    }

    #[test]
    fn resting_sphere_normal_impulse_is_weight_times_dt() {
        let mut w = WorldState::new(0.01);
        w.add_body(ground()).unwrap();
        w.add_body(sphere_at("ball", 0.05, 0.3, 0.05)).unwrap();
        let contacts = detect_contacts(&w);
        assert_eq!(contacts.len(), 1);
        let impulses = solve_contacts(&w, &contacts, 0.01);
        assert_relative_eq!(impulses[0].normal_impulse, 0.3 * 9.81 * 0.01, epsilon = 1e-6);
    }

    #[test]
    fn inelastic_impact_kills_normal_velocity() {
        let mut w = WorldState::new(0.01);
        w.add_body(ground()).unwrap();
        w.add_body(sphere_at("ball", 0.05, 0.3, 0.05)).unwrap();
        w.bodies[1].linear_velocity = Vec3::new(0.0, 0.0, -1.0);
        let out = step(&w, &ExternalForces::none(), 0.01).unwrap();
        let vz = out.world.bodies[1].linear_velocity.z;
        assert!(vz <= 1e-9 && vz >= -1e-6, "post normal velocity {vz}");
    }

    #[test]
    fn ballistic_drop_matches_velocity_level_closed_form() {
        let mut w = WorldState::new(0.01);
        w.add_body(sphere_at("ball", 0.05, 1.0, 100.0)).unwrap();
        let mut world = w;
        for _ in 0..100 {
            world = step(&world, &ExternalForces::none(), 0.01).unwrap().world;
        }
        let t = 1.0;
        let drop = 100.0 - world.bodies[0].pose.position.z;
        // Velocity-level implicit Euler drops exactly g/2 * t * (t + dt).
        assert_relative_eq!(drop, 0.5 * 9.81 * t * (t + 0.01), epsilon = 1e-10);
        assert_eq!(world.step_index, 100);
        assert_relative_eq!(world.time(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn stiff_coupling_spring_stays_bounded_where_explicit_euler_diverges() {
        // 1 g proxy on a k = 100 N/m spring: omega_n ~ 316 rad/s, h*omega > 3.
        let dt = 0.01;
        let (k, m) = (100.0, 0.001);

        // Oracle: explicit Euler on the same oscillator diverges fast.
        let (mut x, mut v) = (0.01f64, 0.0f64);
        for _ in 0..1000 {
            let a = -k / m * x;
            x += dt * v;
            v += dt * a;
        }
        assert!(!(x.abs() <= 1e3), "explicit oracle should diverge, got {x}");

        let mut w = WorldState::new(dt);
        w.gravity = Vec3::zeros();
        let id = w
            .add_body(RigidBody::new_dynamic(
                "proxy",
                Shape::Sphere { radius: 0.008 },
                m,
                Pose::from_position(Vec3::new(0.01, 0.0, 0.0)),
            ))
            .unwrap();
        w.set_coupling(Coupling::new(id, k, 0.0));
        let mut world = w;
        let mut max_pos: f64 = 0.0;
        for _ in 0..10_000 {
            world = step(&world, &ExternalForces::none(), dt).unwrap().world;
            max_pos = max_pos.max(world.bodies[0].pose.position.norm());
        }
        assert!(max_pos <= 0.011, "implicit coupling must not diverge, max {max_pos}");
    }

    #[test]
    fn tangential_ramp_slips_within_one_step_of_coulomb_threshold() {
        let dt = 0.01;
        let (m, mu_s) = (1.0, 0.15);
        let mut w = WorldState::new(dt);
        w.add_body(ground().with_friction(1.0, 1.0)).unwrap();
        w.add_body(
            RigidBody::new_dynamic(
                "block",
                Shape::Box { half_extents: [0.05, 0.05, 0.05] },
                m,
                Pose::from_position(Vec3::new(0.0, 0.0, 0.05)),
            )
            .with_friction(mu_s, 0.10),
        )
        .unwrap();

        // Analytic crossing of F(t) = ramp_rate * t over mu_s * m * g.
        let ramp_rate = 1.0;
        let t_star = mu_s * m * 9.81 / ramp_rate;

        let mut world = w;
        let mut transition_times = Vec::new();
        for _ in 0..300 {
            let mut ext = ExternalForces::none();
            ext.add_force(BodyId(1), Vec3::new(ramp_rate * world.time(), 0.0, 0.0));
            let out = step(&world, &ext, dt).unwrap();
            for e in &out.diagnostics.events {
                if e.kind == PairEventKind::StaticToDynamic {
                    transition_times.push(e.time);
                }
            }
            world = out.world;
        }
        assert_eq!(transition_times.len(), 1, "exactly one static-to-dynamic event");
        assert!(
            (transition_times[0] - t_star).abs() <= dt + 1e-12,
            "event at {} vs analytic {}",
            transition_times[0],
            t_star
        );
        // Block is sliding afterwards.
        assert!(world.bodies[1].linear_velocity.x > 0.0);
    }

    #[test]
    fn scripted_ramp_crossing_lands_on_exact_step() {
        // Ramp tuned so the analytic crossing sits inside step 137:
        // timestamps are stamped with the start time of the resolving step.
        let dt = 0.01;
        let (m, mu_s) = (1.0, 0.15);
        let t_star = 1.3655;
        let ramp_rate = mu_s * m * 9.81 / t_star;

        let mut w = WorldState::new(dt);
        w.add_body(ground().with_friction(1.0, 1.0)).unwrap();
        w.add_body(
            RigidBody::new_dynamic(
                "block",
                Shape::Box { half_extents: [0.05, 0.05, 0.05] },
                m,
                Pose::from_position(Vec3::new(0.0, 0.0, 0.05)),
            )
            .with_friction(mu_s, 0.10),
        )
        .unwrap();

        let mut world = w;
        let mut event_time = None;
        for _ in 0..200 {
            let mut ext = ExternalForces::none();
            ext.add_force(BodyId(1), Vec3::new(ramp_rate * world.time(), 0.0, 0.0));
            let out = step(&world, &ext, dt).unwrap();
            for e in &out.diagnostics.events {
                if e.kind == PairEventKind::StaticToDynamic && event_time.is_none() {
                    event_time = Some(e.time);
                }
            }
            world = out.world;
        }
        assert_relative_eq!(event_time.unwrap(), 1.37, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_external_force_rejects_step() {
        let mut w = WorldState::new(0.01);
        w.add_body(sphere_at("ball", 0.05, 1.0, 1.0)).unwrap();
        let before = w.clone();
        let mut ext = ExternalForces::none();
        ext.add_force(BodyId(0), Vec3::new(f64::NAN, 0.0, 0.0));
        let err = step(&w, &ext, 0.01).unwrap_err();
        assert!(matches!(err, PhysicsError::NonFiniteState { .. }));
        // Caller's world untouched.
        assert_eq!(w.bodies[0].pose.position, before.bodies[0].pose.position);
    }

    #[test]
    fn stepping_is_bit_deterministic() {
        let build = || {
            let mut w = WorldState::new(0.01);
            w.add_body(ground()).unwrap();
            for i in 0..5 {
                let mut b = sphere_at(&format!("b{i}"), 0.04, 0.2, 0.3 + 0.1 * i as f64);
                b.pose.position.x = 0.02 * i as f64;
                w.add_body(b).unwrap();
            }
            w
        };
        let run = |mut w: WorldState| {
            for _ in 0..200 {
                w = step(&w, &ExternalForces::none(), 0.01).unwrap().world;
            }
            w
        };
        let w1 = run(build());
        let w2 = run(build());
        for (a, b) in w1.bodies.iter().zip(w2.bodies.iter()) {
            assert_eq!(a.pose.position.x.to_bits(), b.pose.position.x.to_bits());
            assert_eq!(a.pose.position.z.to_bits(), b.pose.position.z.to_bits());
            assert_eq!(a.linear_velocity.z.to_bits(), b.linear_velocity.z.to_bits());
        }
    }

    #[test]
    fn quaternion_stays_normalized() {
        let mut w = WorldState::new(0.01);
        w.gravity = Vec3::zeros();
        w.add_body(RigidBody::new_dynamic(
            "spinner",
            Shape::Box { half_extents: [0.1, 0.05, 0.02] },
            1.0,
            Pose::identity(),
        ))
        .unwrap();
        w.bodies[0].angular_velocity = Vec3::new(3.0, 5.0, 7.0);
        let mut world = w;
        for _ in 0..2000 {
            world = step(&world, &ExternalForces::none(), 0.01).unwrap().world;
            let n = world.bodies[0].pose.orientation.as_ref().norm();
            assert!((n - 1.0).abs() < 1e-9, "quaternion norm {n}");
        }
    }

    #[test]
    fn contact_steps_never_gain_kinetic_energy() {
        // Same drop height so every contact-resolving step has no body in
        // free fall; restitution is structurally zero.
        let mut w = WorldState::new(0.01);
        w.add_body(ground()).unwrap();
        for i in 0..4 {
            let mut b = sphere_at(&format!("s{i}"), 0.03, 0.1 + 0.05 * i as f64, 0.25);
            b.pose.position.x = 0.5 * i as f64;
            b.linear_velocity = Vec3::new(0.3 * (i as f64 - 1.5), 0.0, 0.0);
            w.add_body(b).unwrap();
        }
        let mut world = w;
        for _ in 0..400 {
            let ke_before = world.kinetic_energy();
            let out = step(&world, &ExternalForces::none(), 0.01).unwrap();
            let resolved = out
                .world
                .last_impulses
                .iter()
                .any(|i| i.normal_impulse > 1e-12);
            let ke_after = out.world.kinetic_energy();
            if resolved {
                assert!(
                    ke_after <= ke_before + 1e-9,
                    "KE rose across contact step: {ke_before} -> {ke_after}"
                );
            }
            world = out.world;
        }
    }

    #[test]
    fn resting_penetration_stays_below_one_millimeter() {
        let mut w = WorldState::new(0.01);
        w.add_body(ground()).unwrap();
        w.add_body(sphere_at("ball", 0.05, 0.3, 0.0495)).unwrap(); // starts 0.5 mm deep
        let mut world = w;
        for _ in 0..300 {
            world = step(&world, &ExternalForces::none(), 0.01).unwrap().world;
        }
        let pen = world
            .last_contacts
            .iter()
            .map(|c| c.penetration_depth)
            .fold(0.0, f64::max);
        assert!(pen <= 1e-3, "steady-state penetration {pen}");
        // And it should have relaxed toward the slop band.
        assert!(pen <= 2.0 * world.solver_params.slop, "penetration {pen}");
    }

    #[test]
    fn complementarity_holds_on_resting_stack() {
        let mut w = WorldState::new(0.01);
        w.add_body(ground()).unwrap();
        for i in 0..3 {
            w.add_body(
                RigidBody::new_dynamic(
                    &format!("box{i}"),
                    Shape::Box { half_extents: [0.05, 0.05, 0.05] },
                    0.5,
                    Pose::from_position(Vec3::new(0.0, 0.0, 0.05 + 0.1 * i as f64)),
                ),
            )
            .unwrap();
        }
        let mut world = w;
        for _ in 0..50 {
            world = step(&world, &ExternalForces::none(), 0.01).unwrap().world;
        }
        for (c, imp) in world.last_contacts.iter().zip(world.last_impulses.iter()) {
            assert!(imp.normal_impulse >= 0.0);
            let w_n = c.normal_speed + c.separation / world.dt;
            assert!(w_n >= -1e-6, "separation velocity {w_n}");
            assert!(imp.normal_impulse * w_n.max(0.0) <= 1e-8, "complementarity product");
            // Friction cone.
            let limit = imp.mu * imp.normal_impulse;
            assert!(imp.tangential_magnitude() <= limit + 1e-8);
        }
    }

    #[test]
    fn began_event_carries_approach_speed() {
        let mut w = WorldState::new(0.01);
        w.add_body(ground()).unwrap();
        w.add_body(sphere_at("ball", 0.05, 0.3, 0.052)).unwrap();
        w.bodies[1].linear_velocity = Vec3::new(0.0, 0.0, -1.0);
        let mut world = w;
        let mut began = None;
        for _ in 0..10 {
            let out = step(&world, &ExternalForces::none(), 0.01).unwrap();
            for e in &out.diagnostics.events {
                if let PairEventKind::Began { approach_speed } = e.kind {
                    began = Some(approach_speed);
                }
            }
            world = out.world;
            if began.is_some() {
                break;
            }
        }
        let v = began.expect("contact must begin");
        assert!(v > 0.9 && v < 1.2, "approach speed {v}");
    }
}
