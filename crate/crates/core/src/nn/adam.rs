use super::mlp::{Grads, Mlp};
use crate::error::{check_dim, Error, Result};

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.num_params(), lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// One descent step. Non-finite gradients leave both the parameters and
    /// the optimizer state untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &Grads) -> Result<()> {
        check_dim(
            "AdamState::step moments",
            self.first.len(),
            params.num_params(),
        )?;
        if !grads.fits(params) {
            return Err(Error::Precondition(
                "gradient layout does not match parameters".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Numerical(
                "non-finite gradient, Adam step skipped".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Precondition(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .params_mut()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            // Moments of idle units decay geometrically; subnormals are
            // orders of magnitude slower to compute with.
            if m.abs() < f64::MIN_POSITIVE {
                *m = 0.0;
            }
            if *v < f64::MIN_POSITIVE {
                *v = 0.0;
            }
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
