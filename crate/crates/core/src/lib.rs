//! Simulation pipeline for a string-driven fingertip haptic device.
//!
//! The crate covers the full software side of the device: a deterministic
//! fixed-step rigid-body world with LCP contact resolution
//! ([`physics`]), a virtual-coupling hand model ([`hand`]), synthesis of the
//! collide / press / stick-slip / slide force signals ([`synth`]), a
//! parametric motor-string actuator model ([`actuator`]), scripted
//! manipulation scenarios with metric extraction ([`scenario`]), and
//! text-based trace persistence ([`trace_io`]).

pub mod actuator;
pub mod hand;
pub mod math;
pub mod physics;
pub mod scenario;
pub mod spectrum;
pub mod synth;
pub mod trace_io;
