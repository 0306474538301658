//! Torque-limited pendulum swing-up. `theta` is measured from the hanging
//! position, so the stable equilibrium is `theta = 0` and upright is `±π`.

use std::f64::consts::PI;

pub const DT: f64 = 0.05;
/// `3g / 2l` for g = 10, l = 1.
pub const GRAVITY_TERM: f64 = 15.0;
/// `3 / (m l²)` for m = l = 1.
pub const TORQUE_TERM: f64 = 3.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;

pub const ENERGY_GAIN: f64 = 0.5;
pub const BALANCE_BAND: f64 = 0.5;
pub const BALANCE_KP: f64 = 10.0;
pub const BALANCE_KD: f64 = 2.0;

pub const MIN_REWARD: f64 = -(PI * PI + 0.1 * MAX_SPEED * MAX_SPEED + 0.001 * MAX_TORQUE * MAX_TORQUE);

/// Wraps an angle into `[−π, π)`.
pub fn wrap(angle: f64) -> f64 {
    (angle + PI).rem_euclid(2.0 * PI) - PI
}

pub fn observation(theta: f64, theta_dot: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin(), theta_dot / MAX_SPEED]
}

pub fn reward(theta: f64, theta_dot: f64, action: f64) -> f64 {
    let from_top = wrap(theta - PI);
    let torque = MAX_TORQUE * action;
    -(from_top * from_top + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque)
}

pub fn step(theta: f64, theta_dot: f64, action: f64) -> (f64, f64) {
    let torque = MAX_TORQUE * action;
    let nd = (theta_dot + (-GRAVITY_TERM * theta.sin() + TORQUE_TERM * torque) * DT).clamp(-MAX_SPEED, MAX_SPEED);
    (wrap(theta + nd * DT), nd)
}

/// Energy pumping away from the top, PD stabilisation near it.
pub fn expert_action(theta: f64, theta_dot: f64) -> f64 {
    let from_top = wrap(theta - PI);
    if from_top.abs() < BALANCE_BAND {
        return ((-BALANCE_KP * from_top - BALANCE_KD * theta_dot) / MAX_TORQUE).clamp(-1.0, 1.0);
    }
    let energy = 0.5 * theta_dot * theta_dot + GRAVITY_TERM * (1.0 - theta.cos());
    let target = 2.0 * GRAVITY_TERM;
    let direction = if theta_dot >= 0.0 { 1.0 } else { -1.0 };
    (ENERGY_GAIN * (target - energy)).clamp(-1.0, 1.0) * direction
}
