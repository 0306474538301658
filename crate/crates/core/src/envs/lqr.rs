//! Damped spring-mass double integrator with quadratic cost.
//!
//! `x' = x + dt·v`, `v' = −k·dt·x + (1 − c·dt)·v + dt·b·a`, reward `−x² − 0.1·a²`.
//! The dynamics are exactly linear inside the position/velocity walls, so the
//! infinite-horizon LQR gain is the optimal unconstrained controller.

pub const DT: f64 = 0.1;
pub const FORCE: f64 = 2.0;
pub const SPRING: f64 = 1.0;
pub const DAMPING: f64 = 1.0;
pub const X_MAX: f64 = 4.0;
pub const V_MAX: f64 = 4.0;
pub const STATE_COST: f64 = 1.0;
pub const ACTION_COST: f64 = 0.1;

/// State-transition matrix `A` (row-major) of the linear model.
pub const A: [[f64; 2]; 2] = [[1.0, DT], [-SPRING * DT, 1.0 - DAMPING * DT]];
/// Control matrix `B`.
pub const B: [f64; 2] = [0.0, DT * FORCE];

/// Discrete-time LQR gain `K` for cost `x'Qx + a'Ra` with `Q = diag(1, 0)`,
/// `R = 0.1`; the expert plays `a = clip(−K·[x, v])`.
pub const LQR_GAIN: [f64; 2] = [2.316414990521622, 1.2605215024961853];

pub const MIN_REWARD: f64 = -(STATE_COST * X_MAX * X_MAX + ACTION_COST);

pub fn reward(x: f64, a: f64) -> f64 {
    -STATE_COST * x * x - ACTION_COST * a * a
}

pub fn step(x: f64, v: f64, a: f64) -> (f64, f64) {
    let mut nx = A[0][0] * x + A[0][1] * v;
    let mut nv = A[1][0] * x + A[1][1] * v + B[1] * a;
    if nx.abs() > X_MAX {
        nx = nx.clamp(-X_MAX, X_MAX);
        nv = 0.0;
    }
    (nx, nv.clamp(-V_MAX, V_MAX))
}

pub fn expert_action(x: f64, v: f64) -> f64 {
    (-(LQR_GAIN[0] * x + LQR_GAIN[1] * v)).clamp(-1.0, 1.0)
}
