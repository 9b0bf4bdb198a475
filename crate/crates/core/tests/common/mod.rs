//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ddpgpp::agent::{Agent, AgentConfig};
use ddpgpp::envs::make_env;
use ddpgpp::nn::{Activation, Grads, Matrix, Mlp};
use ddpgpp::rng::{stream, Stream};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const REL: f64 = 1e-4;
pub const ABS: f64 = 1e-6;
pub const H: f64 = 1e-6;

pub fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS.max(REL * analytic.abs().max(numeric.abs()))
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, Stream::Sampling);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Checks d(sum_i c_i . net(x_i)) against finite differences, for parameters
/// and inputs.
pub fn check_net(net: &Mlp, seed: u64) {
    let x = random_matrix(5, net.input_dim(), seed);
    let c = random_matrix(5, net.output_dim(), seed + 1);
    let f = |n: &Mlp, x: &Matrix| -> f64 {
        let y = n.forward_batch(x).unwrap();
        y.as_slice()
            .iter()
            .zip(c.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    };
    let trace = net.forward_trace(&x).unwrap();
    let mut grads = Grads::zeros_like(net);
    let dx = net.backward_batch(&trace, &c, Some(&mut grads)).unwrap();

    let mut probe = net.clone();
    for k in 0..net.num_params() {
        let p = probe.params()[k];
        probe.params_mut()[k] = p + H;
        let up = f(&probe, &x);
        probe.params_mut()[k] = p - H;
        let down = f(&probe, &x);
        probe.params_mut()[k] = p;
        let numeric = (up - down) / (2.0 * H);
        assert!(
            close(grads.as_slice()[k], numeric),
            "param {k}: {} vs {numeric}",
            grads.as_slice()[k]
        );
    }
    let mut xp = x.clone();
    for k in 0..x.as_slice().len() {
        let v = xp.as_slice()[k];
        xp.as_mut_slice()[k] = v + H;
        let up = f(net, &xp);
        xp.as_mut_slice()[k] = v - H;
        let down = f(net, &xp);
        xp.as_mut_slice()[k] = v;
        let numeric = (up - down) / (2.0 * H);
        assert!(
            close(dx.as_slice()[k], numeric),
            "input {k}: {} vs {numeric}",
            dx.as_slice()[k]
        );
    }
}

/// Actor and critic shapes for both environments, at test-friendly widths.
pub fn check_architectures() {
    let mut rng = stream(1, Stream::AgentInit);
    for (sizes, out) in [
        (vec![2, 16, 16, 1], Activation::Tanh),
        (vec![3, 16, 16, 1], Activation::Tanh),
        (vec![3, 16, 16, 1], Activation::Identity),
        (vec![4, 16, 16, 1], Activation::Identity),
        (vec![3, 8, 2], Activation::Tanh),
    ] {
        let net = Mlp::init(&sizes, Activation::Relu, out, None, &mut rng).unwrap();
        check_net(&net, sizes.iter().sum::<usize>() as u64);
    }
}

pub fn actor_objective_check(preset: &str, env: &str, seed: u64) {
    let spec = make_env(env).unwrap().spec().clone();
    let mut cfg = AgentConfig::preset(preset).unwrap();
    cfg.hidden_sizes = vec![16, 16];
    let agent = Agent::new(cfg, &spec, &mut stream(seed, Stream::AgentInit)).unwrap();
    let states = random_matrix(12, spec.state_dim, seed + 10);
    let mut rng = stream(seed, Stream::Exploration);
    let weights: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
    let g = agent.actor_gradient(&states, &weights).unwrap();

    let mut probe = agent.clone();
    for k in 0..agent.actor().num_params() {
        let p = probe.actor().params()[k];
        probe.actor_mut().params_mut()[k] = p + H;
        let up = probe.actor_gradient(&states, &weights).unwrap().objective;
        probe.actor_mut().params_mut()[k] = p - H;
        let down = probe.actor_gradient(&states, &weights).unwrap().objective;
        probe.actor_mut().params_mut()[k] = p;
        let numeric = (up - down) / (2.0 * H);
        let analytic = g.grads.as_slice()[k];
        assert!(
            close(analytic, numeric),
            "{preset}/{env} param {k}: {analytic} vs {numeric}"
        );
    }
}

/// Enough iterations for the gradient-norm stop to trigger on 4000 points.
pub const FULL_FIT_ITERS: usize = 10_000;

/// Newton iterations on the regularized logistic objective, written
/// independently of the library: features augmented with a trailing 1.
pub fn newton_oracle(pos: &[Vec<f64>], neg: &[Vec<f64>], c: f64) -> Vec<f64> {
    let d = pos[0].len() + 1;
    let n = (pos.len() + neg.len()) as f64;
    let rows: Vec<(Vec<f64>, f64)> = pos
        .iter()
        .map(|x| (x.clone(), 1.0))
        .chain(neg.iter().map(|x| (x.clone(), -1.0)))
        .map(|(mut x, z)| {
            x.push(1.0);
            (x, z)
        })
        .collect();
    let mut w = vec![0.0; d];
    for _ in 0..100 {
        let mut g = vec![0.0; d];
        let mut h = vec![vec![0.0; d]; d];
        for (x, z) in &rows {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (z * s).exp()); // sigmoid(-z s)
            for i in 0..d {
                g[i] -= z * p * x[i] / n;
                for j in 0..d {
                    h[i][j] += p * (1.0 - p) * x[i] * x[j] / n;
                }
            }
        }
        for i in 0..d {
            g[i] += 2.0 * c * w[i];
            h[i][i] += 2.0 * c;
        }
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            return w;
        }
        let step = solve(h, g);
        for i in 0..d {
            w[i] -= step[i];
        }
    }
    panic!("Newton oracle did not reach gradient norm 1e-10");
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn gaussian(n: usize, mean: &[f64], std: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, Stream::Sampling);
    let dist = Normal::new(0.0, std).unwrap();
    (0..n)
        .map(|_| mean.iter().map(|m| m + dist.sample(&mut rng)).collect())
        .collect()
}
