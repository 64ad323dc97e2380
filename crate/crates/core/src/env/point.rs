use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{Env, EnvStep, Episode};
use crate::error::{invalid, shape, Result};
use crate::nn::{DenseNet, Matrix};
use crate::rng::Rng;

pub const POINT_STATE_DIM: usize = 6;
pub const POINT_ACTION_DIM: usize = 2;

/// Geometry and dynamics of the point-mass maze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointEnvParams {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Height of the horizontal wall.
    pub wall_y: f64,
    /// Wall spans `wall_x.0 ..= wall_x.1`.
    pub wall_x: (f64, f64),
    pub accel_scale: f64,
    pub max_speed: f64,
    pub horizon: usize,
    pub discount: f64,
    /// Half-width of the uniform jitter added to the start position.
    pub start_noise: f64,
}

impl Default for PointEnvParams {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0],
            goal: [0.0, 6.0],
            wall_y: 2.5,
            wall_x: (-3.0, 3.0),
            accel_scale: 0.2,
            max_speed: 0.5,
            horizon: 50,
            discount: 0.99,
            start_noise: 0.0,
        }
    }
}

/// A point mass pushed by bounded accelerations towards a goal that sits
/// behind a wall. The per-step reward is the negative distance to the goal,
/// so heading straight for it ends against the wall.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEnv {
    params: PointEnvParams,
}

/// Position and velocity of the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

const WALL_GAP: f64 = 1e-6;

impl PointEnv {
    pub fn new(params: PointEnvParams) -> Result<Self> {
        let p = &params;
        if p.horizon == 0 || !(p.accel_scale > 0.0) || !(p.max_speed > 0.0) || !(p.start_noise >= 0.0) {
            return Err(invalid("point environment needs positive horizon, acceleration and speed"));
        }
        if !(0.0..1.0).contains(&p.discount) || p.wall_x.0 > p.wall_x.1 {
            return Err(invalid("discount must lie in [0, 1) and the wall span must be ordered"));
        }
        let side = |y: f64| (y - p.wall_y).signum();
        if side(p.start[1]) == 0.0 || side(p.goal[1]) == 0.0 {
            return Err(invalid("start and goal must not lie on the wall line"));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &PointEnvParams {
        &self.params
    }

    pub fn reset(&self, rng: &mut Rng) -> PointState {
        let mut pos = self.params.start;
        if self.params.start_noise > 0.0 {
            let u = Uniform::new_inclusive(-self.params.start_noise, self.params.start_noise).expect("finite noise");
            pos[0] += u.sample(rng);
            pos[1] += u.sample(rng);
        }
        PointState { pos, vel: [0.0, 0.0] }
    }

    pub fn observe(&self, s: &PointState) -> Vec<f64> {
        let g = self.params.goal;
        vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1], g[0] - s.pos[0], g[1] - s.pos[1]]
    }

    pub fn distance_to_goal(&self, s: &PointState) -> f64 {
        let g = self.params.goal;
        ((s.pos[0] - g[0]).powi(2) + (s.pos[1] - g[1]).powi(2)).sqrt()
    }

    /// Applies one clipped acceleration and resolves wall contact.
    pub fn step(&self, s: &PointState, action: [f64; 2]) -> (PointState, f64) {
        let p = &self.params;
        let mut vel = [0.0; 2];
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            let a = if a.is_nan() { 0.0 } else { a };
            vel[i] = (s.vel[i] + p.accel_scale * a).clamp(-p.max_speed, p.max_speed);
        }
        let mut pos = [s.pos[0] + vel[0], s.pos[1] + vel[1]];
        let (before, after) = (s.pos[1] - p.wall_y, pos[1] - p.wall_y);
        if before != 0.0 && before.signum() != after.signum() {
            let frac = before / (before - after);
            let x_cross = s.pos[0] + frac * vel[0];
            if (p.wall_x.0..=p.wall_x.1).contains(&x_cross) {
                pos[1] = p.wall_y + before.signum() * WALL_GAP;
                vel[1] = 0.0;
            }
        }
        let next = PointState { pos, vel };
        let reward = -self.distance_to_goal(&next);
        (next, reward)
    }

    /// Rolls out a state-feedback controller.
    pub fn run_controller(&self, start: PointState, mut controller: impl FnMut(&[f64]) -> [f64; 2]) -> (Vec<EnvStep>, PointState) {
        let mut s = start;
        let mut steps = Vec::with_capacity(self.params.horizon);
        for _ in 0..self.params.horizon {
            let obs = self.observe(&s);
            let a = controller(&obs);
            let (next, reward) = self.step(&s, a);
            steps.push(EnvStep { state: obs, action: a.to_vec(), reward, next_state: self.observe(&next) });
            s = next;
        }
        (steps, s)
    }

    /// Final distance to the goal reached by `policy` from the unjittered start.
    pub fn final_distance(&self, policy: &DenseNet) -> Result<f64> {
        check_policy(policy)?;
        let start = PointState { pos: self.params.start, vel: [0.0, 0.0] };
        let (_, end) = self.run_controller(start, |obs| act(policy, obs));
        Ok(self.distance_to_goal(&end))
    }
}

fn check_policy(policy: &DenseNet) -> Result<()> {
    let arch = policy.architecture();
    if arch.input != POINT_STATE_DIM || arch.output() != POINT_ACTION_DIM {
        return Err(shape(format!(
            "point policy must map {POINT_STATE_DIM} inputs to {POINT_ACTION_DIM} outputs, got {} -> {}",
            arch.input,
            arch.output()
        )));
    }
    Ok(())
}

fn act(policy: &DenseNet, obs: &[f64]) -> [f64; 2] {
    let y = policy.predict(&Matrix::row_vector(obs)).expect("shape checked").into_vec();
    [y[0], y[1]]
}

impl Env for PointEnv {
    fn state_dim(&self) -> usize {
        POINT_STATE_DIM
    }

    fn action_dim(&self) -> usize {
        POINT_ACTION_DIM
    }

    fn is_discrete(&self) -> bool {
        false
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn rollout(&self, policy: &DenseNet, rng: &mut Rng) -> Result<Episode> {
        check_policy(policy)?;
        let start = self.reset(rng);
        let (mut steps, _) = self.run_controller(start, |obs| act(policy, obs));
        for st in &mut steps {
            st.action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        }
        Ok(Episode::new(steps, self.params.discount))
    }
}
