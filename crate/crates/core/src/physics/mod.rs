//! Fixed-timestep rigid-body simulation: convex collision detection with a
//! swept pre-pass, LCP-based contact and friction resolution, ball joints,
//! and implicit virtual-coupling springs.

mod body;
pub mod collision;
mod solver;
mod world;

pub use body::{BodyId, RigidBody, Shape};
pub use collision::{detect_contacts, Contact, ContactKey, FrictionState};
pub use solver::{solve_contacts, ContactImpulse, SolverParams};
pub use world::{
    classify_friction, step, BallJoint, Coupling, ExternalForces, PairEvent, PairEventKind,
    PhysicsError, StepDiagnostics, StepOutput, WorldState, SLIP_SPEED_EPSILON,
};
