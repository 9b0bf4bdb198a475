use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{EnvSpec, Environment, ProcessNoise, StepResult};
use crate::error::{check_dim, Result};
use crate::rng::StreamRng;

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Uniform rod pivoting at one end; angle 0 is upright.
///
/// Observations are `(cos theta, sin theta, omega)` so the policy never sees
/// the wrap-around discontinuity. Integration is semi-implicit Euler: the
/// angular velocity is updated first and the new velocity moves the angle.
#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    omega: f64,
    steps: usize,
    noise: Option<ProcessNoise>,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum",
                state_dim: 3,
                control_dim: 1,
                control_low: vec![-MAX_TORQUE],
                control_high: vec![MAX_TORQUE],
                max_episode_steps: 200,
                gamma_hint: 0.99,
            },
            theta: 0.0,
            omega: 0.0,
            steps: 0,
            noise: None,
        }
    }

    pub fn with_process_noise(mut self, std: f64, rng: StreamRng) -> Result<Self> {
        self.noise = Some(ProcessNoise::new(std, rng)?);
        Ok(self)
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.omega
    }

    pub fn set_angle(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
    }

    fn inertia() -> f64 {
        MASS * LENGTH * LENGTH / 3.0
    }

    /// Kinetic plus potential energy, potential measured from the pivot.
    pub fn mechanical_energy(&self) -> f64 {
        0.5 * Self::inertia() * self.omega * self.omega
            + MASS * GRAVITY * LENGTH / 2.0 * self.theta.cos()
    }

    /// First-order modified energy conserved by the semi-implicit scheme
    /// under zero torque; it differs from the true energy by `O(dt)`.
    pub fn shadow_energy(&self) -> f64 {
        self.mechanical_energy()
            + 0.5 * DT * self.omega * MASS * GRAVITY * LENGTH / 2.0 * self.theta.sin()
    }

    pub fn reward(theta: f64, omega: f64, torque: f64) -> f64 {
        let a = wrap_angle(theta);
        -(a * a + 0.1 * omega * omega + 0.001 * torque * torque)
    }

    /// Reward at the bottom, spinning at full speed under full torque.
    pub fn min_reward() -> f64 {
        Self::reward(-PI, MAX_SPEED, MAX_TORQUE)
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.theta = rng.random_range(-PI..=PI);
        self.omega = rng.random_range(-1.0..=1.0);
        self.steps = 0;
        self.state()
    }

    fn step(&mut self, control: &[f64]) -> Result<StepResult> {
        check_dim("Pendulum::step control", 1, control.len())?;
        let u = control[0];
        let reward = Self::reward(self.theta, self.omega, u);
        let accel =
            3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.omega = (self.omega + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.omega * DT;
        if let Some(noise) = &mut self.noise {
            self.theta += noise.sample();
            self.omega += noise.sample();
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
        vec![self.theta.cos(), self.theta.sin(), self.omega]
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
    fn upright_rest_is_zero_cost_fixed_point() {
        let mut env = Pendulum::new();
        env.set_angle(0.0, 0.0);
        let s = env.step(&[0.0]).unwrap();
        assert_eq!(s.reward, 0.0);
        assert_eq!(env.angle(), 0.0);
        assert_eq!(env.angular_velocity(), 0.0);
    }

    #[test]
    fn reset_support() {
        let mut env = Pendulum::new();
        let mut rng = stream(2, Stream::Env);
        for _ in 0..500 {
            let obs = env.reset(&mut rng);
            assert!((-PI..=PI).contains(&env.angle()));
            assert!((-1.0..=1.0).contains(&env.angular_velocity()));
            assert!((obs[0] * obs[0] + obs[1] * obs[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rewards_are_non_positive() {
        let mut env = Pendulum::new();
        let mut rng = stream(5, Stream::Env);
        env.reset(&mut rng);
        for k in 0..200 {
            let u = if k % 3 == 0 { MAX_TORQUE } else { -MAX_TORQUE };
            assert!(env.step(&[u]).unwrap().reward <= 0.0);
        }
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.9);
            assert!((-PI..PI).contains(&a));
            let turns = (k as f64 * 0.9 - a) / (2.0 * PI);
            assert!((turns - turns.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_has_no_secular_drift() {
        // Shadow energy is conserved to O(dt^2); measured against the
        // potential-energy scale m g l over one full episode.
        let scale = MASS * GRAVITY * LENGTH;
        let mut env = Pendulum::new();
        let mut rng = stream(11, Stream::Env);
        for _ in 0..50 {
            env.reset(&mut rng);
            let e0 = env.shadow_energy();
            for _ in 0..200 {
                env.step(&[0.0]).unwrap();
                assert!((env.shadow_energy() - e0).abs() < 0.01 * scale);
                assert!(env.angular_velocity().abs() < MAX_SPEED);
            }
        }
    }
}
