//! Optimal discounted return of the double integrator via the Riccati
//! recursion
//!
//! ```text
//! P <- Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA
//! ```
//!
//! The value of the optimal controller from `x0` is `-x0' P x0`.

use rand::RngCore;

use super::{DoubleIntegrator, Environment};
use crate::error::{Error, Result};

pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100_000;
pub const DEFAULT_INITIAL_STATES: usize = 10_000;

/// How far ahead rewards are summed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    /// Fixed point of the recursion.
    Infinite,
    /// Exactly this many rewards, `k = 0 .. steps - 1`.
    Steps(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiSolution {
    /// Cost-to-go matrix, row-major.
    pub cost_to_go: [[f64; 2]; 2],
    /// Feedback gain of the first step: `u = -gain . x`.
    pub gain: [f64; 2],
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn value(&self, x: &[f64]) -> f64 {
        let p = &self.cost_to_go;
        -(x[0] * (p[0][0] * x[0] + p[0][1] * x[1]) + x[1] * (p[1][0] * x[0] + p[1][1] * x[1]))
    }

    pub fn control(&self, x: &[f64]) -> f64 {
        -(self.gain[0] * x[0] + self.gain[1] * x[1])
    }
}

type M2 = [[f64; 2]; 2];

fn riccati_update(p: &M2, a: &M2, b: &[f64; 2], q: &M2, r: f64, gamma: f64) -> (M2, [f64; 2]) {
    // PA, PB
    let mut pa = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            pa[i][j] = p[i][0] * a[0][j] + p[i][1] * a[1][j];
        }
    }
    let pb = [
        p[0][0] * b[0] + p[0][1] * b[1],
        p[1][0] * b[0] + p[1][1] * b[1],
    ];
    let s = r + gamma * (b[0] * pb[0] + b[1] * pb[1]);
    // B'PA (1 x 2)
    let bpa = [
        b[0] * pa[0][0] + b[1] * pa[1][0],
        b[0] * pa[0][1] + b[1] * pa[1][1],
    ];
    let gain = [gamma * bpa[0] / s, gamma * bpa[1] / s];
    let mut next = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let apa = a[0][i] * pa[0][j] + a[1][i] * pa[1][j];
            next[i][j] = q[i][j] + gamma * apa - gamma * gamma * bpa[i] * bpa[j] / s;
        }
    }
    (next, gain)
}

/// Solves the discounted LQ problem of `env`, ignoring the control and
/// state boxes.
pub fn solve(env: &DoubleIntegrator, gamma: f64, horizon: Horizon) -> Result<RiccatiSolution> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Precondition(format!(
            "discount must lie in [0, 1), got {gamma}"
        )));
    }
    let (a, b) = env.linear_dynamics();
    let c = env.cost();
    let q = [[c.position, 0.0], [0.0, c.velocity]];
    let r = c.control;
    if !(r > 0.0) {
        return Err(Error::Precondition(
            "control weight must be positive".into(),
        ));
    }
    let mut p = [[0.0; 2]; 2];
    let mut gain = [0.0; 2];
    match horizon {
        Horizon::Steps(steps) => {
            for _ in 0..steps {
                let (next, g) = riccati_update(&p, &a, &b, &q, r, gamma);
                p = next;
                gain = g;
            }
            Ok(RiccatiSolution {
                cost_to_go: p,
                gain,
                iterations: steps,
            })
        }
        Horizon::Infinite => {
            for it in 1..=MAX_ITERATIONS {
                let (next, g) = riccati_update(&p, &a, &b, &q, r, gamma);
                let change = (0..4)
                    .map(|k| (next[k / 2][k % 2] - p[k / 2][k % 2]).abs())
                    .fold(0.0, f64::max);
                p = next;
                gain = g;
                if !change.is_finite() {
                    break;
                }
                if change < FIXED_POINT_TOLERANCE {
                    return Ok(RiccatiSolution {
                        cost_to_go: p,
                        gain,
                        iterations: it,
                    });
                }
            }
            Err(Error::Numerical(format!(
                "Riccati recursion did not converge within {MAX_ITERATIONS} iterations"
            )))
        }
    }
}

/// Mean optimal discounted return over the given initial states.
pub fn lqr_optimal_return(
    env: &DoubleIntegrator,
    gamma: f64,
    initial_states: &[Vec<f64>],
    horizon: Horizon,
) -> Result<f64> {
    if initial_states.is_empty() {
        return Err(Error::Precondition(
            "need at least one initial state".into(),
        ));
    }
    let sol = solve(env, gamma, horizon)?;
    Ok(initial_states.iter().map(|x| sol.value(x)).sum::<f64>() / initial_states.len() as f64)
}

/// `count` draws from the environment's reset distribution.
pub fn sample_initial_states(count: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    let mut env = DoubleIntegrator::new();
    (0..count).map(|_| env.reset(rng)).collect()
}
