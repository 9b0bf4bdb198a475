use rand::{Rng, RngCore};

use super::{EnvSpec, Environment, ProcessNoise, StepResult};
use crate::error::{check_dim, Result};
use crate::rng::StreamRng;

pub const DT: f64 = 0.05;

/// Stage cost weights: `r = -(position p^2 + velocity v^2 + control u^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticCost {
    pub position: f64,
    pub velocity: f64,
    pub control: f64,
}

impl Default for QuadraticCost {
    /// The control weight is the smallest round value for which the optimal
    /// unconstrained controller stays inside `[-1, 1]` from every initial
    /// state in `[-1, 1]^2` (peak |u| is about 0.93).
    fn default() -> Self {
        Self {
            position: 1.0,
            velocity: 0.1,
            control: 8.0,
        }
    }
}

/// Walls of the state box `|p| <= 3`, `|v| <= 2`. Optimal trajectories from
/// the reset box peak at |p| 1.67 and |v| 0.99, so they never touch them.
pub const STATE_BOUND: [f64; 2] = [3.0, 2.0];

/// Point mass on a line: `p' = p + dt v`, `v' = v + dt u`, `u in [-1, 1]`,
/// with the next state projected onto the state box when one is set.
#[derive(Clone, Debug)]
pub struct DoubleIntegrator {
    spec: EnvSpec,
    cost: QuadraticCost,
    bound: Option<[f64; 2]>,
    position: f64,
    velocity: f64,
    steps: usize,
    noise: Option<ProcessNoise>,
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        Self::new()
    }
}

impl DoubleIntegrator {
    pub fn new() -> Self {
        Self::with_cost(QuadraticCost::default())
    }

    pub fn with_cost(cost: QuadraticCost) -> Self {
        Self {
            spec: EnvSpec {
                name: "lqr2d",
                state_dim: 2,
                control_dim: 1,
                control_low: vec![-1.0],
                control_high: vec![1.0],
                max_episode_steps: 200,
                gamma_hint: 0.99,
            },
            cost,
            bound: Some(STATE_BOUND),
            position: 0.0,
            velocity: 0.0,
            steps: 0,
            noise: None,
        }
    }

    /// Adds zero-mean Gaussian noise of standard deviation `std` to both
    /// state components after every step.
    pub fn with_process_noise(mut self, std: f64, rng: StreamRng) -> Result<Self> {
        self.noise = Some(ProcessNoise::new(std, rng)?);
        Ok(self)
    }

    /// Replaces the state box; `None` leaves the state unbounded.
    pub fn with_state_bound(mut self, bound: Option<[f64; 2]>) -> Self {
        self.bound = bound;
        self
    }

    pub fn cost(&self) -> QuadraticCost {
        self.cost
    }

    pub fn state_bound(&self) -> Option<[f64; 2]> {
        self.bound
    }

    /// Smallest reward over the state box and the control box; `None` when
    /// the state is unbounded.
    pub fn min_reward(&self) -> Option<f64> {
        self.bound.map(|[p, v]| self.reward(&[p, v], 1.0))
    }

    /// State transition matrix `A` (row-major) and input vector `B`.
    pub fn linear_dynamics(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        ([[1.0, DT], [0.0, 1.0]], [0.0, DT])
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        check_dim("DoubleIntegrator::set_state", 2, state.len())?;
        self.position = state[0];
        self.velocity = state[1];
        Ok(())
    }

    pub fn reward(&self, state: &[f64], control: f64) -> f64 {
        let c = &self.cost;
        -(c.position * state[0] * state[0]
            + c.velocity * state[1] * state[1]
            + c.control * control * control)
    }
}

impl Environment for DoubleIntegrator {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.position = rng.random_range(-1.0..=1.0);
        self.velocity = rng.random_range(-1.0..=1.0);
        self.steps = 0;
        self.state()
    }

    fn step(&mut self, control: &[f64]) -> Result<StepResult> {
        check_dim("DoubleIntegrator::step control", 1, control.len())?;
        let u = control[0];
        let reward = self.reward(&[self.position, self.velocity], u);
        let p = self.position + DT * self.velocity;
        let v = self.velocity + DT * u;
        self.position = p;
        self.velocity = v;
        if let Some(noise) = &mut self.noise {
            self.position += noise.sample();
            self.velocity += noise.sample();
        }
        if let Some([p, v]) = self.bound {
            self.position = self.position.clamp(-p, p);
            self.velocity = self.velocity.clamp(-v, v);
        }
        self.steps += 1;
        Ok(StepResult {
            next_state: self.state(),
            reward,
            terminal: false,
            truncated: self.steps >= self.spec.max_episode_steps,
        })
    }

    fn state(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }

    fn elapsed(&self) -> usize {
        self.steps
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn unforced_step_from_rest() {
        let mut env = DoubleIntegrator::new();
        env.set_state(&[1.0, 0.0]).unwrap();
        let s = env.step(&[0.0]).unwrap();
        assert_eq!(s.next_state, vec![1.0, 0.0]);
        assert_eq!(s.reward, -1.0);
        assert!(!s.terminal && !s.truncated);
    }

    #[test]
    fn reset_support_and_determinism() {
        let mut env = DoubleIntegrator::new();
        let mut rng = stream(4, Stream::Env);
        let a: Vec<_> = (0..100).map(|_| env.reset(&mut rng)).collect();
        assert!(a.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        let mut rng = stream(4, Stream::Env);
        let b: Vec<_> = (0..100).map(|_| env.reset(&mut rng)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncates_after_exactly_max_steps() {
        let mut env = DoubleIntegrator::new();
        env.reset(&mut stream(0, Stream::Env));
        for k in 1..=200 {
            let s = env.step(&[0.0]).unwrap();
            assert_eq!(s.truncated, k == 200);
            assert!(!s.terminal);
        }
    }

    #[test]
    fn saturated_control_stays_in_box() {
        let mut env = DoubleIntegrator::new();
        let floor = env.min_reward().unwrap();
        assert!((floor + 17.4).abs() < 1e-12);
        env.set_state(&[2.9, 1.9]).unwrap();
        for _ in 0..400 {
            let s = env.step(&[1.0]).unwrap();
            assert!(s.reward >= floor);
            assert!(s.next_state[0].abs() <= 3.0 && s.next_state[1].abs() <= 2.0);
        }
        assert_eq!(env.state(), vec![3.0, 2.0]);
    }

    #[test]
    fn unbounded_state_keeps_linear_dynamics() {
        let mut env = DoubleIntegrator::new().with_state_bound(None);
        assert_eq!(env.min_reward(), None);
        env.set_state(&[2.9, 1.9]).unwrap();
        let s = env.step(&[1.0]).unwrap();
        assert!((s.next_state[0] - (2.9 + DT * 1.9)).abs() < 1e-15);
        assert!((s.next_state[1] - (1.9 + DT)).abs() < 1e-15);
    }

    #[test]
    fn rejects_wrong_control_dim() {
        let mut env = DoubleIntegrator::new();
        assert!(env.step(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn process_noise_perturbs_state() {
        let mut env = DoubleIntegrator::new()
            .with_process_noise(0.1, stream(0, Stream::Env))
            .unwrap();
        env.set_state(&[1.0, 0.0]).unwrap();
        let s = env.step(&[0.0]).unwrap();
        assert_ne!(s.next_state, vec![1.0, 0.0]);
    }
}
