//! Continuous-control environments with bounded control boxes.
//!
//! * `lqr2d`: a discretized double integrator with quadratic cost inside a
//!   state box the optimal controller never reaches, so its optimal
//!   discounted return is available in closed form via a Riccati
//!   recursion ([`lqr`]).
//! * `pendulum`: torque-limited pendulum swing-up.

pub mod double_integrator;
pub mod lqr;
pub mod pendulum;

use rand::RngCore;
use rand_distr::{Distribution, Normal};

pub use double_integrator::{DoubleIntegrator, QuadraticCost};
pub use pendulum::Pendulum;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub control_dim: usize,
    pub control_low: Vec<f64>,
    pub control_high: Vec<f64>,
    pub max_episode_steps: usize,
    pub gamma_hint: f64,
}

impl EnvSpec {
    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.control_dim
            && u.iter()
                .zip(self.control_low.iter().zip(&self.control_high))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for (v, (lo, hi)) in u
            .iter_mut()
            .zip(self.control_low.iter().zip(&self.control_high))
        {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Per-dimension `(high - low) / 2`.
    pub fn half_range(&self) -> Vec<f64> {
        self.control_low
            .iter()
            .zip(&self.control_high)
            .map(|(lo, hi)| 0.5 * (hi - lo))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.control_low
            .iter()
            .zip(&self.control_high)
            .map(|(lo, hi)| 0.5 * (hi + lo))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The episode reached a genuine end state.
    pub terminal: bool,
    /// The episode was cut by the step limit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Draws an initial state and zeroes the step counter.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one step. The control must already lie inside the box.
    fn step(&mut self, control: &[f64]) -> Result<StepResult>;

    /// Current observation.
    fn state(&self) -> Vec<f64>;

    /// Steps taken since the last reset.
    fn elapsed(&self) -> usize;

    /// Sets the step limit; `usize::MAX` disables truncation.
    fn set_max_episode_steps(&mut self, steps: usize);
}

/// Environment names accepted by [`make_env`].
pub const ENV_NAMES: [&str; 2] = ["lqr2d", "pendulum"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "lqr2d" => Ok(Box::new(DoubleIntegrator::new())),
        "pendulum" => Ok(Box::new(Pendulum::new())),
        other => Err(Error::Config(format!(
            "unknown environment `{other}` (expected one of {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

/// Optional Gaussian disturbance added to the state after each step.
#[derive(Clone, Debug)]
pub(crate) struct ProcessNoise {
    dist: Normal<f64>,
    rng: StreamRng,
}

impl ProcessNoise {
    pub(crate) fn new(std: f64, rng: StreamRng) -> Result<Self> {
        let dist =
            Normal::new(0.0, std).map_err(|e| Error::Config(format!("process noise: {e}")))?;
        Ok(Self { dist, rng })
    }

    pub(crate) fn sample(&mut self) -> f64 {
        self.dist.sample(&mut self.rng)
    }
}
