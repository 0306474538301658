//! Planar point mass driven toward a randomly placed goal.

pub const DT: f64 = 0.1;
pub const FORCE: f64 = 1.0;
pub const DAMPING: f64 = 0.5;
pub const ARENA: f64 = 2.0;
pub const V_MAX: f64 = 2.0;
pub const START_BOX: f64 = 1.0;
pub const KP: f64 = 1.0;
pub const KD: f64 = 1.0;

/// Largest possible position-to-goal distance (position in the arena, goal in the start box).
pub const MAX_DISTANCE: f64 = 4.242640687119286; // (ARENA + START_BOX)·√2

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMass {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub goal: [f64; 2],
}

impl PointMass {
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
        ]
    }

    pub fn reward(&self) -> f64 {
        -((self.pos[0] - self.goal[0]).powi(2) + (self.pos[1] - self.goal[1]).powi(2)).sqrt()
    }

    pub fn step(&self, action: &[f64]) -> PointMass {
        let mut next = *self;
        for i in 0..2 {
            let v = ((1.0 - DAMPING * DT) * self.vel[i] + DT * FORCE * action[i]).clamp(-V_MAX, V_MAX);
            let p = self.pos[i] + DT * v;
            if p.abs() > ARENA {
                next.pos[i] = p.clamp(-ARENA, ARENA);
                next.vel[i] = 0.0;
            } else {
                next.pos[i] = p;
                next.vel[i] = v;
            }
        }
        next
    }

    /// PD controller toward the goal.
    pub fn expert_action(&self) -> Vec<f64> {
        (0..2)
            .map(|i| (KP * (self.goal[i] - self.pos[i]) - KD * self.vel[i]).clamp(-1.0, 1.0))
            .collect()
    }
}
