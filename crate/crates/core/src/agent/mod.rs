//! Off-policy deterministic actor-critic learner.
//!
//! One call to [`Agent::train_step`] performs, in order:
//!
//! 1. sample a mini-batch from the replay buffer;
//! 2. compute the bootstrapped target
//!    `y = r + gamma * min_i q_target_i(x', u_target(x'))` (no bootstrap on
//!    terminal tuples);
//! 3. one Adam step on every critic toward the shared `y`;
//! 4. every `policy_delay` critic updates, optionally fit the propensity
//!    classifier on the batch and derive per-tuple weights `beta~`;
//! 5. one Adam ascent step on `(1/|B|) sum beta~ * min_i q_i(x, u(x))`;
//! 6. exponential averaging of every target network.

mod config;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use config::{AgentConfig, PRESETS};

use crate::envs::EnvSpec;
use crate::error::{check_dim, Error, Result};
use crate::nn::{checkpoint, soft_update, Activation, AdamState, Grads, Matrix, Mlp};
use crate::propensity;
use crate::replay::{ReplayBuffer, TransitionBatch};

/// Bound of the last actor layer at initialization; keeps early controls
/// near the center of the box.
pub const ACTOR_FINAL_INIT: f64 = 3e-3;

/// Deterministic controller: a tanh network rescaled to the control box.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
}

impl Policy {
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let a = self.net.forward(state)?;
        Ok(self.scale(&a))
    }

    pub fn act_batch(&self, states: &Matrix) -> Result<Matrix> {
        let mut a = self.net.forward_batch(states)?;
        self.scale_in_place(&mut a);
        Ok(a)
    }

    fn scale(&self, squashed: &[f64]) -> Vec<f64> {
        squashed
            .iter()
            .zip(self.center.iter().zip(&self.half_range))
            .map(|(a, (c, h))| c + h * a)
            .collect()
    }

    fn scale_in_place(&self, m: &mut Matrix) {
        let d = self.center.len();
        for (k, v) in m.as_mut_slice().iter_mut().enumerate() {
            *v = self.center[k % d] + self.half_range[k % d] * *v;
        }
    }
}

/// Online critic, its target copy and its optimizer.
#[derive(Clone, Debug)]
pub struct Critic {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: AdamState,
}

/// Per-step learning diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateDiagnostics {
    /// Mean squared TD error of the critics before their update.
    pub critic_loss: f64,
    /// Weighted policy objective before the actor update, if one happened.
    pub actor_objective: Option<f64>,
    pub mean_q1: f64,
    pub mean_q2: Option<f64>,
    /// Mean normalized importance weight; exactly 1 with propensity off.
    pub mean_beta_tilde: f64,
    pub classifier_accuracy: Option<f64>,
    pub actor_updated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticStats {
    pub loss: f64,
    pub mean_q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorStats {
    pub objective: f64,
    pub mean_beta_tilde: f64,
    pub classifier_accuracy: Option<f64>,
}

/// Policy objective and its gradient with respect to the actor parameters.
#[derive(Clone, Debug)]
pub struct ActorGradient {
    pub objective: f64,
    /// `d objective / d theta` (ascent direction).
    pub grads: Grads,
}

#[derive(Clone, Debug)]
pub struct Agent {
    cfg: AgentConfig,
    spec: EnvSpec,
    policy: Policy,
    actor_target: Mlp,
    actor_optimizer: AdamState,
    critics: Vec<Critic>,
    critic_updates: u64,
    actor_updates: u64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, spec: &EnvSpec, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut actor_sizes = vec![spec.state_dim];
        actor_sizes.extend(&cfg.hidden_sizes);
        actor_sizes.push(spec.control_dim);
        let actor = Mlp::init(
            &actor_sizes,
            Activation::Relu,
            Activation::Tanh,
            Some(ACTOR_FINAL_INIT),
            rng,
        )?;

        let mut critic_sizes = vec![spec.state_dim + spec.control_dim];
        critic_sizes.extend(&cfg.hidden_sizes);
        critic_sizes.push(1);
        let n_critics = if cfg.twin_critics { 2 } else { 1 };
        let critics = (0..n_critics)
            .map(|_| {
                let online = Mlp::init(
                    &critic_sizes,
                    Activation::Relu,
                    Activation::Identity,
                    None,
                    rng,
                )?;
                Ok(Critic {
                    target: online.clone(),
                    optimizer: AdamState::for_net(&online, cfg.critic_lr),
                    online,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            actor_target: actor.clone(),
            actor_optimizer: AdamState::for_net(&actor, cfg.actor_lr),
            policy: Policy {
                net: actor,
                center: spec.center(),
                half_range: spec.half_range(),
            },
            critics,
            cfg,
            spec: spec.clone(),
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn actor(&self) -> &Mlp {
        &self.policy.net
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.policy.net
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn actor_target_mut(&mut self) -> &mut Mlp {
        &mut self.actor_target
    }

    pub fn critics(&self) -> &[Critic] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [Critic] {
        &mut self.critics
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// Policy scaled through the target actor instead of the online one.
    pub fn target_policy(&self) -> Policy {
        Policy {
            net: self.actor_target.clone(),
            center: self.policy.center.clone(),
            half_range: self.policy.half_range.clone(),
        }
    }

    /// Control for environment interaction.
    ///
    /// During the first `burn_in` environment steps the control is uniform in
    /// the box. Afterwards it is the actor's output, plus clamped Gaussian
    /// noise when `explore` is set.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        explore: bool,
        env_step: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        check_dim(
            "Agent::select_action state",
            self.spec.state_dim,
            state.len(),
        )?;
        if explore && env_step < self.cfg.burn_in {
            return Ok(self
                .spec
                .control_low
                .iter()
                .zip(&self.spec.control_high)
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect());
        }
        let mut u = self.policy.act(state)?;
        if explore && self.cfg.exploration_noise_std > 0.0 {
            for (v, h) in u.iter_mut().zip(&self.policy.half_range) {
                let noise = Normal::new(0.0, self.cfg.exploration_noise_std * h)
                    .map_err(|e| Error::Numerical(format!("exploration noise: {e}")))?;
                *v += noise.sample(rng);
            }
        }
        self.spec.clamp(&mut u);
        Ok(u)
    }

    /// Q-values of every critic at `(states, controls)`, one vector per critic.
    pub fn q_values(&self, states: &Matrix, controls: &Matrix) -> Result<Vec<Vec<f64>>> {
        let input = states.hcat(controls)?;
        self.critics
            .iter()
            .map(|c| Ok(c.online.forward_batch(&input)?.into_vec()))
            .collect()
    }

    /// Per-tuple regression targets `y`.
    pub fn compute_target<R: Rng + ?Sized>(
        &self,
        batch: &TransitionBatch,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty batch".into()));
        }
        let mut next_u = self.target_policy().act_batch(&batch.next_states)?;
        if self.cfg.target_noise_std > 0.0 {
            let d = self.spec.control_dim;
            for (k, v) in next_u.as_mut_slice().iter_mut().enumerate() {
                let h = self.policy.half_range[k % d];
                let dist = Normal::new(0.0, self.cfg.target_noise_std * h)
                    .map_err(|e| Error::Numerical(format!("target noise: {e}")))?;
                let clip = self.cfg.target_noise_clip * h;
                *v += dist.sample(rng).clamp(-clip, clip);
            }
            for i in 0..next_u.rows() {
                self.spec.clamp(next_u.row_mut(i));
            }
        }
        let input = batch.next_states.hcat(&next_u)?;
        let mut bootstrap = vec![f64::INFINITY; batch.len()];
        for critic in &self.critics {
            let q = critic.target.forward_batch(&input)?;
            for (b, q) in bootstrap.iter_mut().zip(q.as_slice()) {
                *b = b.min(*q);
            }
        }
        Ok(batch
            .rewards
            .iter()
            .zip(&batch.terminals)
            .zip(&bootstrap)
            .map(|((r, terminal), q)| {
                if *terminal {
                    *r
                } else {
                    r + self.cfg.gamma * q
                }
            })
            .collect())
    }

    /// One Adam step on every critic toward the same targets.
    pub fn update_critics(
        &mut self,
        batch: &TransitionBatch,
        targets: &[f64],
    ) -> Result<CriticStats> {
        check_dim("Agent::update_critics targets", batch.len(), targets.len())?;
        let input = batch.states.hcat(&batch.controls)?;
        let n = batch.len() as f64;
        let mut staged = Vec::with_capacity(self.critics.len());
        let mut losses = Vec::with_capacity(self.critics.len());
        let mut mean_q = Vec::with_capacity(self.critics.len());
        for critic in &self.critics {
            let trace = critic.online.forward_trace(&input)?;
            let q = trace.output().as_slice();
            let residual: Vec<f64> = q.iter().zip(targets).map(|(q, y)| q - y).collect();
            let loss = residual.iter().map(|e| e * e).sum::<f64>() / n;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite critic loss after {} updates; step skipped",
                    self.critic_updates
                )));
            }
            let upstream = Matrix::from_vec(
                residual.len(),
                1,
                residual.iter().map(|e| 2.0 * e / n).collect(),
            )?;
            let mut grads = Grads::zeros_like(&critic.online);
            critic
                .online
                .backward_batch(&trace, &upstream, Some(&mut grads))?;
            losses.push(loss);
            mean_q.push(q.iter().sum::<f64>() / n);
            staged.push(grads);
        }
        if staged.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(
                "non-finite critic gradient; step skipped".into(),
            ));
        }
        for (critic, grads) in self.critics.iter_mut().zip(&staged) {
            critic.optimizer.step(&mut critic.online, grads)?;
        }
        self.critic_updates += 1;
        Ok(CriticStats {
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            mean_q,
        })
    }

    /// `(1/|B|) sum_i w_i * q(x_i, u(x_i))` and its actor gradient, where `q`
    /// is the smaller critic when `actor_uses_min` is set and the first critic
    /// otherwise. Ties go to the first critic.
    pub fn actor_gradient(&self, states: &Matrix, weights: &[f64]) -> Result<ActorGradient> {
        check_dim(
            "Agent::actor_gradient weights",
            states.rows(),
            weights.len(),
        )?;
        let n = states.rows();
        let sd = self.spec.state_dim;
        let actor_trace = self.policy.net.forward_trace(states)?;
        let mut controls = actor_trace.output().clone();
        self.policy.scale_in_place(&mut controls);
        let input = states.hcat(&controls)?;

        let used = if self.cfg.actor_uses_min {
            self.critics.len()
        } else {
            1
        };
        let traces = self.critics[..used]
            .iter()
            .map(|c| c.online.forward_trace(&input))
            .collect::<Result<Vec<_>>>()?;
        let mut chosen = vec![0usize; n];
        let mut q_min = traces[0].output().as_slice().to_vec();
        for (k, t) in traces.iter().enumerate().skip(1) {
            for (i, q) in t.output().as_slice().iter().enumerate() {
                if *q < q_min[i] {
                    q_min[i] = *q;
                    chosen[i] = k;
                }
            }
        }
        let objective = q_min.iter().zip(weights).map(|(q, w)| w * q).sum::<f64>() / n as f64;

        let mut d_controls = Matrix::zeros(n, self.spec.control_dim);
        for (k, trace) in traces.iter().enumerate() {
            let upstream: Vec<f64> = (0..n)
                .map(|i| {
                    if chosen[i] == k {
                        weights[i] / n as f64
                    } else {
                        0.0
                    }
                })
                .collect();
            if upstream.iter().all(|u| *u == 0.0) {
                continue;
            }
            let upstream = Matrix::from_vec(n, 1, upstream)?;
            let d_input = self.critics[k]
                .online
                .backward_batch(trace, &upstream, None)?;
            for i in 0..n {
                for (acc, g) in d_controls.row_mut(i).iter_mut().zip(&d_input.row(i)[sd..]) {
                    *acc += g;
                }
            }
        }
        // u = center + half * tanh(.)
        let d = self.spec.control_dim;
        for (k, v) in d_controls.as_mut_slice().iter_mut().enumerate() {
            *v *= self.policy.half_range[k % d];
        }
        let mut grads = Grads::zeros_like(&self.policy.net);
        self.policy
            .net
            .backward_batch(&actor_trace, &d_controls, Some(&mut grads))?;
        Ok(ActorGradient { objective, grads })
    }

    /// Per-tuple policy weights: normalized importance ratios when propensity
    /// weighting is on, otherwise all ones.
    pub fn policy_weights(
        &self,
        batch: &TransitionBatch,
    ) -> Result<(Vec<f64>, Option<propensity::PropensityReport>)> {
        if !self.cfg.use_propensity {
            return Ok((vec![1.0; batch.len()], None));
        }
        let policy_u = self.policy.act_batch(&batch.states)?;
        let dataset: Vec<Vec<f64>> = (0..batch.len())
            .map(|i| batch.controls.row(i).to_vec())
            .collect();
        let current: Vec<Vec<f64>> = (0..batch.len()).map(|i| policy_u.row(i).to_vec()).collect();
        let report = propensity::report(
            &dataset,
            &current,
            self.cfg.propensity_c,
            self.cfg.propensity_iters,
        )?;
        Ok((report.beta_tilde.clone(), Some(report)))
    }

    /// One Adam ascent step on the (optionally propensity-weighted) policy
    /// objective. The caller decides when the delay condition allows it.
    pub fn update_actor(&mut self, batch: &TransitionBatch) -> Result<ActorStats> {
        let (weights, report) = self.policy_weights(batch)?;
        let ActorGradient {
            objective,
            mut grads,
        } = self.actor_gradient(&batch.states, &weights)?;
        if !objective.is_finite() || !grads.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite policy objective after {} actor updates; step skipped",
                self.actor_updates
            )));
        }
        grads.scale(-1.0);
        self.actor_optimizer.step(&mut self.policy.net, &grads)?;
        self.actor_updates += 1;
        Ok(ActorStats {
            objective,
            mean_beta_tilde: weights.iter().sum::<f64>() / weights.len() as f64,
            classifier_accuracy: report.map(|r| r.accuracy),
        })
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        let tau = self.cfg.tau;
        for c in &mut self.critics {
            soft_update(&mut c.target, &c.online, tau)?;
        }
        soft_update(&mut self.actor_target, &self.policy.net, tau)
    }

    /// Whether the next actor update is due after the latest critic update.
    pub fn actor_due(&self) -> bool {
        self.critic_updates.is_multiple_of(self.cfg.policy_delay as u64)
    }

    /// One full inner iteration of the learner on a fresh mini-batch.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<UpdateDiagnostics> {
        if buffer.len() < self.cfg.batch_size {
            return Err(Error::Precondition(format!(
                "replay holds {} transitions, need at least {}",
                buffer.len(),
                self.cfg.batch_size
            )));
        }
        let batch = buffer.sample_batch(self.cfg.batch_size, rng)?;
        let targets = self.compute_target(&batch, rng)?;
        let critic = self.update_critics(&batch, &targets)?;
        let actor = if self.actor_due() {
            Some(self.update_actor(&batch)?)
        } else {
            None
        };
        self.soft_update_targets()?;
        Ok(UpdateDiagnostics {
            critic_loss: critic.loss,
            actor_objective: actor.as_ref().map(|a| a.objective),
            mean_q1: critic.mean_q[0],
            mean_q2: critic.mean_q.get(1).copied(),
            mean_beta_tilde: actor.as_ref().map_or(1.0, |a| a.mean_beta_tilde),
            classifier_accuracy: actor.as_ref().and_then(|a| a.classifier_accuracy),
            actor_updated: actor.is_some(),
        })
    }

    /// Writes every network as `actor.mlp`, `actor_target.mlp`,
    /// `critic{k}.mlp` and `critic{k}_target.mlp`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save(&self.policy.net, dir.join("actor.mlp"))?;
        checkpoint::save(&self.actor_target, dir.join("actor_target.mlp"))?;
        for (k, c) in self.critics.iter().enumerate() {
            checkpoint::save(&c.online, dir.join(format!("critic{}.mlp", k + 1)))?;
            checkpoint::save(&c.target, dir.join(format!("critic{}_target.mlp", k + 1)))?;
        }
        Ok(())
    }

    /// Loads the deterministic policy from a checkpoint directory.
    pub fn load_policy(dir: &Path, spec: &EnvSpec) -> Result<Policy> {
        let net = checkpoint::load(dir.join("actor.mlp"))?;
        check_dim("checkpointed actor input", spec.state_dim, net.input_dim())?;
        check_dim(
            "checkpointed actor output",
            spec.control_dim,
            net.output_dim(),
        )?;
        Ok(Policy {
            net,
            center: spec.center(),
            half_range: spec.half_range(),
        })
    }
}
