//! Deterministic 2D driving simulator.
//!
//! Fixed-step explicit Euler integration of a kinematic bicycle model, with
//! oriented-box collision checks and rule-violation sensing. All state is `f64`
//! and stepping is a pure function of its inputs, so equal inputs produce
//! bit-equal outputs on every platform.

pub mod map;
pub mod trace;
pub mod world;

use crate::error::{CoreError, Result};
use crate::geom::{wrap_angle, Obb, Vec2};
use serde::{Deserialize, Serialize};

/// Integration step (s).
pub const DT: f64 = 0.05;
/// Episode wall-clock cap (s).
pub const EPISODE_CAP_S: f64 = 60.0;
/// Maximum ticks per episode (`EPISODE_CAP_S / DT`).
pub const MAX_TICKS: u32 = 1200;

/// Acceleration command bounds (m/s^2). Full braking reaches -8; forward
/// acceleration saturates at 3.
pub const ACCEL_MIN: f64 = -8.0;
pub const ACCEL_MAX: f64 = 3.0;
/// Steering command bound (rad), symmetric.
pub const STEER_MAX: f64 = 0.3;

/// Rigid-body pose plus scalar speed and axle geometry for one road user.
///
/// `heading` is kept in (-pi, pi]; `speed` is body-frame longitudinal and
/// never negative (no reverse gear in this world).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Distance from the center of gravity to the front axle (m).
    pub front_axle: f64,
    /// Distance from the center of gravity to the rear axle (m).
    pub rear_axle: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl VehicleState {
    /// Passenger car: 4.8 m x 2.0 m, symmetric 2.8 m wheelbase.
    pub fn car(pos: Vec2, heading: f64, speed: f64) -> Self {
        VehicleState {
            x: pos.x,
            y: pos.y,
            heading,
            speed,
            front_axle: 1.4,
            rear_axle: 1.4,
            half_length: 2.4,
            half_width: 1.0,
        }
    }

    /// Cyclist: 1.8 m x 0.6 m.
    pub fn cyclist(pos: Vec2, heading: f64, speed: f64) -> Self {
        VehicleState {
            x: pos.x,
            y: pos.y,
            heading,
            speed,
            front_axle: 0.6,
            rear_axle: 0.6,
            half_length: 0.9,
            half_width: 0.3,
        }
    }

    /// Pedestrian, modelled as a small box.
    pub fn pedestrian(pos: Vec2, heading: f64, speed: f64) -> Self {
        VehicleState {
            x: pos.x,
            y: pos.y,
            heading,
            speed,
            front_axle: 0.3,
            rear_axle: 0.3,
            half_length: 0.3,
            half_width: 0.3,
        }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn wheelbase(&self) -> f64 {
        self.front_axle + self.rear_axle
    }

    /// Footprint as an oriented box.
    pub fn obb(&self) -> Obb {
        Obb::new(self.pos(), self.heading, self.half_length, self.half_width)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite()
    }
}

/// Longitudinal acceleration plus front-wheel steering angle.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer: f64,
}

impl Control {
    pub const ZERO: Control = Control {
        accel: 0.0,
        steer: 0.0,
    };

    /// Clamp into the simulator's command bounds.
    pub fn clamped(accel: f64, steer: f64) -> Self {
        Control {
            accel: accel.clamp(ACCEL_MIN, ACCEL_MAX),
            steer: steer.clamp(-STEER_MAX, STEER_MAX),
        }
    }

    pub fn in_bounds(&self) -> bool {
        (ACCEL_MIN..=ACCEL_MAX).contains(&self.accel)
            && (-STEER_MAX..=STEER_MAX).contains(&self.steer)
    }
}

/// Pedal-level view of an acceleration command.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedalAction {
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
}

/// Convert an (acceleration, steering) command into throttle/brake pedals.
///
/// Acceleration is clipped to [-8, 3] and steering to [-0.3, 0.3] first.
/// Positive acceleration maps to `throttle = acc / 3`, negative to
/// `brake = -acc / 8`; both pedals are clipped into [0, 1] and exactly one of
/// them is nonzero unless the command is zero.
pub fn control_from_action(accel: f64, steer: f64) -> PedalAction {
    let acc = accel.clamp(ACCEL_MIN, ACCEL_MAX);
    let steer = steer.clamp(-STEER_MAX, STEER_MAX);
    let (throttle, brake) = if acc > 0.0 {
        ((acc / 3.0).clamp(0.0, 1.0), 0.0)
    } else {
        (0.0, (-acc / 8.0).clamp(0.0, 1.0))
    };
    PedalAction {
        throttle,
        brake,
        steer,
    }
}

/// Advance one vehicle by `dt` seconds under `control`.
///
/// Kinematic bicycle model about the center of gravity with slip angle
/// `beta = atan(lr / (lf + lr) * tan(steer))`:
///
/// ```text
/// x'     = x + v cos(heading + beta) dt
/// y'     = y + v sin(heading + beta) dt
/// psi'   = wrap(heading + v sin(beta) / lr * dt)
/// v'     = max(0, v + a dt)
/// ```
///
/// Rejects non-finite state or control.
pub fn step_vehicle(state: &VehicleState, control: Control, dt: f64) -> Result<VehicleState> {
    if !state.is_finite() {
        return Err(CoreError::NonFinite("vehicle state"));
    }
    if !(control.accel.is_finite() && control.steer.is_finite() && dt.is_finite()) {
        return Err(CoreError::NonFinite("control or dt"));
    }
    let beta = slip_angle(state, control.steer);
    let course = state.heading + beta;
    let mut next = *state;
    next.x = state.x + state.speed * course.cos() * dt;
    next.y = state.y + state.speed * course.sin() * dt;
    next.heading = wrap_angle(state.heading + yaw_rate(state, control.steer) * dt);
    next.speed = (state.speed + control.accel * dt).max(0.0);
    Ok(next)
}

/// Slip angle of the velocity vector relative to the body axis.
pub fn slip_angle(state: &VehicleState, steer: f64) -> f64 {
    (state.rear_axle / state.wheelbase() * steer.tan()).atan()
}

/// Yaw rate `v sin(beta) / lr` implied by the current speed and steering.
pub fn yaw_rate(state: &VehicleState, steer: f64) -> f64 {
    state.speed * slip_angle(state, steer).sin() / state.rear_axle
}
