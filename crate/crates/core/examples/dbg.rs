use hapsim_core::math::*;
use hapsim_core::physics::*;

fn main() {
    let dt = 0.01;
    let mut w = WorldState::new(dt);
    w.add_body(RigidBody::new_static(
        "ground",
        Shape::HalfSpace { normal: [0.0, 0.0, 1.0], offset: 0.0 },
        Pose::identity(),
    ).with_friction(1.0, 1.0)).unwrap();
    w.add_body(
        RigidBody::new_dynamic(
            "block",
            Shape::Box { half_extents: [0.05, 0.05, 0.05] },
            1.0,
            Pose::from_position(Vector3::new(0.0, 0.0, 0.05)),
        )
        .with_friction(0.15, 0.10),
    ).unwrap();
    let mut world = w;
    for s in 0..5 {
        let ext = ExternalForces::none();
        let out = step(&world, &ext, dt).unwrap();
        println!("step {s}: events {:?}", out.diagnostics.events);
        for (c, i) in out.world.last_contacts.iter().zip(out.world.last_impulses.iter()) {
            println!("  pen={:.2e} sep={:.2e} vt={:.2e} ln={:.3e} lt={:.3e} mu={} state={:?}",
                c.penetration_depth, c.separation, c.tangential_speed, i.normal_impulse,
                i.tangential_magnitude(), i.mu, c.friction_state);
        }
        world = out.world;
    }
}
