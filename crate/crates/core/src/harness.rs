//! Run configuration, the collect/update loop, evaluation and CSV logging.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;

use crate::agent::{Agent, AgentConfig, Policy, UpdateDiagnostics};
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{child_seeds, stream, Stream, StreamRng};

pub const CSV_HEADER: &str = "env_steps,return_mean,return_std,mean_q1,mean_q2,mean_beta_tilde,classifier_accuracy,wall_seconds";
pub const CONFIG_FILE: &str = "config.txt";
pub const PROGRESS_FILE: &str = "progress.csv";
/// Output root for relative `--out` paths.
pub const OUT_ROOT_VAR: &str = "DDPGPP_OUT_ROOT";

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub algo: String,
    /// Agent settings applied on top of the preset, in order.
    pub overrides: Vec<(String, String)>,
    pub total_env_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub replay_capacity: usize,
    /// Write elapsed time into the CSV; `false` writes 0 so that repeated
    /// runs produce identical files.
    pub record_wall_time: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "lqr2d".into(),
            algo: "ddpgpp".into(),
            overrides: Vec::new(),
            total_env_steps: 100_000,
            eval_every: 5_000,
            eval_episodes: 10,
            seed: 0,
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            record_wall_time: true,
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Applies one `key = value` setting: a run key or any agent field.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "env" => self.env = value.to_string(),
            "algo" => self.algo = value.to_string(),
            "total_env_steps" | "steps" => self.total_env_steps = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "replay_capacity" => self.replay_capacity = parse(key, value)?,
            "record_wall_time" => self.record_wall_time = parse(key, value)?,
            _ if AgentConfig::is_key(key) => {
                // Parse now so bad values fail early.
                AgentConfig::preset("ddpg")?.set(key, value)?;
                self.overrides.push((key.to_string(), value.to_string()));
            }
            _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Applies every line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_config_text(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// The preset with all overrides applied.
    pub fn agent_config(&self) -> Result<AgentConfig> {
        let mut cfg = AgentConfig::preset(&self.algo)?;
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<AgentConfig> {
        make_env(&self.env)?;
        let agent = self.agent_config()?;
        agent.validate()?;
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.total_env_steps > 0 && self.eval_every > self.total_env_steps {
            return Err(Error::Config(format!(
                "eval_every ({}) exceeds total_env_steps ({})",
                self.eval_every, self.total_env_steps
            )));
        }
        if self.replay_capacity < agent.batch_size {
            return Err(Error::Config(
                "replay_capacity must hold at least one batch".into(),
            ));
        }
        if self.total_env_steps > agent.burn_in && agent.burn_in < agent.batch_size {
            return Err(Error::Config(format!(
                "burn_in ({}) must be at least batch_size ({}) so every step after it can update",
                agent.burn_in, agent.batch_size
            )));
        }
        Ok(agent)
    }

    /// Re-runnable dump of the effective configuration.
    pub fn echo(&self) -> Result<String> {
        let agent = self.agent_config()?;
        let mut s = String::from("# effective run configuration\n");
        for (k, v) in [
            ("env", self.env.clone()),
            ("algo", self.algo.clone()),
            ("seed", self.seed.to_string()),
            ("total_env_steps", self.total_env_steps.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("replay_capacity", self.replay_capacity.to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
        ] {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&agent.to_string());
        Ok(s)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                n + 1
            ))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolves an output directory against [`OUT_ROOT_VAR`] when it is relative.
pub fn resolve_out_dir(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_VAR) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// One evaluation row of `progress.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub env_steps: usize,
    pub return_mean: f64,
    pub return_std: f64,
    /// Running means since the previous record; `None` when no update ran.
    pub mean_q1: Option<f64>,
    pub mean_q2: Option<f64>,
    pub mean_beta_tilde: f64,
    pub classifier_accuracy: f64,
    pub wall_seconds: f64,
}

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env_steps,
            self.return_mean,
            self.return_std,
            opt(self.mean_q1),
            opt(self.mean_q2),
            self.mean_beta_tilde,
            self.classifier_accuracy,
            self.wall_seconds
        )
    }
}

#[derive(Default)]
struct RunningMeans {
    updates: usize,
    q1: f64,
    q2: f64,
    q2_count: usize,
    prop_updates: usize,
    beta: f64,
    accuracy: f64,
}

impl RunningMeans {
    fn add(&mut self, d: &UpdateDiagnostics) {
        self.updates += 1;
        self.q1 += d.mean_q1;
        if let Some(q2) = d.mean_q2 {
            self.q2 += q2;
            self.q2_count += 1;
        }
        if let Some(acc) = d.classifier_accuracy {
            self.prop_updates += 1;
            self.beta += d.mean_beta_tilde;
            self.accuracy += acc;
        }
    }

    fn take(&mut self) -> (Option<f64>, Option<f64>, f64, f64) {
        let m = std::mem::take(self);
        let q1 = (m.updates > 0).then(|| m.q1 / m.updates as f64);
        let q2 = (m.q2_count > 0).then(|| m.q2 / m.q2_count as f64);
        if m.prop_updates > 0 {
            let n = m.prop_updates as f64;
            (q1, q2, m.beta / n, m.accuracy / n)
        } else {
            (q1, q2, 1.0, -1.0)
        }
    }
}

pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub agent: Agent,
}

/// Runs the interleaved collect/update loop.
///
/// Each environment step stores one transition; every step after `burn_in`
/// is followed by exactly one [`Agent::train_step`]. Every `eval_every`
/// steps, and after the last one, the deterministic policy is evaluated on a
/// separate environment. With `out_dir` set, the config echo, progress CSV
/// and final checkpoint are written there.
pub fn train(cfg: &RunConfig) -> Result<RunOutput> {
    let agent_cfg = cfg.validate()?;
    let started = Instant::now();
    let mut env = make_env(&cfg.env)?;
    let spec = env.spec().clone();
    let mut agent = Agent::new(
        agent_cfg.clone(),
        &spec,
        &mut stream(cfg.seed, Stream::AgentInit),
    )?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, spec.state_dim, spec.control_dim)?;
    let mut env_rng = stream(cfg.seed, Stream::Env);
    let mut explore_rng = stream(cfg.seed, Stream::Exploration);
    let mut sample_rng = stream(cfg.seed, Stream::Sampling);

    let mut csv = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(CONFIG_FILE), cfg.echo()?)?;
            let mut w = BufWriter::new(File::create(dir.join(PROGRESS_FILE))?);
            writeln!(w, "{CSV_HEADER}")?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };

    let mut records = Vec::new();
    let mut means = RunningMeans::default();
    let mut x = env.reset(&mut env_rng);
    for t in 1..=cfg.total_env_steps {
        let u = agent.select_action(&x, true, t - 1, &mut explore_rng)?;
        let step = env.step(&u)?;
        let next = if step.done() {
            env.reset(&mut env_rng)
        } else {
            step.next_state.clone()
        };
        buffer.push(Transition {
            state: x,
            control: u,
            reward: step.reward,
            next_state: step.next_state,
            terminal: step.terminal,
        })?;
        x = next;

        if t > agent_cfg.burn_in {
            match agent.train_step(&buffer, &mut sample_rng) {
                Ok(d) => means.add(&d),
                Err(e) => {
                    if let Some(w) = csv.as_mut() {
                        w.flush()?;
                    }
                    return Err(match e {
                        Error::Numerical(msg) => Error::Numerical(format!("env step {t}: {msg}")),
                        other => other,
                    });
                }
            }
        }

        if t % cfg.eval_every == 0 || t == cfg.total_env_steps {
            let eval = evaluate(agent.policy(), &cfg.env, cfg.eval_episodes, cfg.seed)?;
            let (mean_q1, mean_q2, mean_beta_tilde, classifier_accuracy) = means.take();
            let record = EvalRecord {
                env_steps: t,
                return_mean: eval.mean,
                return_std: eval.std,
                mean_q1,
                mean_q2,
                mean_beta_tilde,
                classifier_accuracy,
                wall_seconds: if cfg.record_wall_time {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            };
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", record.csv_row())?;
                w.flush()?;
            }
            records.push(record);
        }
    }

    if let Some(dir) = &cfg.out_dir {
        agent.save(dir)?;
    }
    Ok(RunOutput { records, agent })
}

/// Results of a batch of deterministic rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    /// Undiscounted episode returns.
    pub returns: Vec<f64>,
    pub discounted: Vec<f64>,
    pub initial_states: Vec<Vec<f64>>,
    pub mean: f64,
    /// Population standard deviation of `returns`.
    pub std: f64,
}

/// `(mean, population std)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-episode reset seeds used by [`evaluate`].
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    child_seeds(&mut stream(seed, Stream::Eval), episodes)
}

/// Deterministic-policy returns over `episodes` episodes, no exploration and
/// no learning. Discounting uses the agent's default gamma.
pub fn evaluate(
    policy: &Policy,
    env_name: &str,
    episodes: usize,
    seed: u64,
) -> Result<EvalOutcome> {
    if episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    let gamma = AgentConfig::preset("ddpgpp")?.gamma;
    rollouts(
        env_name,
        &episode_seeds(seed, episodes),
        gamma,
        None,
        |x, _| policy.act(x),
    )
}

/// Uniform-random controls in the box, the baseline policy.
pub fn evaluate_random(env_name: &str, episodes: usize, seed: u64) -> Result<EvalOutcome> {
    if episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    let gamma = AgentConfig::preset("ddpgpp")?.gamma;
    let spec = make_env(env_name)?.spec().clone();
    let mut rng = stream(seed, Stream::Exploration);
    rollouts(
        env_name,
        &episode_seeds(seed, episodes),
        gamma,
        None,
        |_, _| {
            use rand::Rng;
            Ok(spec
                .control_low
                .iter()
                .zip(&spec.control_high)
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect())
        },
    )
}

/// One episode per reset seed. `max_steps` overrides the environment's
/// episode limit (`usize::MAX` disables it).
pub fn rollouts<F>(
    env_name: &str,
    seeds: &[u64],
    gamma: f64,
    max_steps: Option<usize>,
    mut controller: F,
) -> Result<EvalOutcome>
where
    F: FnMut(&[f64], &dyn Environment) -> Result<Vec<f64>>,
{
    let mut env = make_env(env_name)?;
    if let Some(steps) = max_steps {
        env.set_max_episode_steps(steps);
    }
    let mut returns = Vec::with_capacity(seeds.len());
    let mut discounted = Vec::with_capacity(seeds.len());
    let mut initial_states = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let mut x = env.reset(&mut StreamRng::seed_from_u64(s));
        initial_states.push(x.clone());
        let (mut ret, mut disc, mut weight) = (0.0, 0.0, 1.0);
        loop {
            let mut u = controller(&x, env.as_ref())?;
            env.spec().clamp(&mut u);
            let step = env.step(&u)?;
            ret += step.reward;
            disc += weight * step.reward;
            weight *= gamma;
            if step.done() {
                break;
            }
            x = step.next_state;
        }
        returns.push(ret);
        discounted.push(disc);
    }
    let (mean, std) = mean_std(&returns);
    Ok(EvalOutcome {
        returns,
        discounted,
        initial_states,
        mean,
        std,
    })
}

/// Mean of `q1(x0, u(x0))` minus the Monte-Carlo discounted return of the
/// deterministic policy from the same `x0`, over `episodes` reset states.
/// Rollouts run for `horizon` steps with the episode limit lifted.
pub fn value_gap(
    agent: &Agent,
    env_name: &str,
    episodes: usize,
    seed: u64,
    horizon: usize,
) -> Result<f64> {
    let gamma = agent.config().gamma;
    let policy = agent.policy();
    let mut gaps = Vec::with_capacity(episodes);
    let mut env = make_env(env_name)?;
    env.set_max_episode_steps(usize::MAX);
    for s in episode_seeds(seed, episodes) {
        let x0 = env.reset(&mut StreamRng::seed_from_u64(s));
        let u0 = policy.act(&x0)?;
        let q = agent.critics()[0]
            .online
            .forward(&[x0.clone(), u0].concat())?[0];
        let mut x = x0;
        let (mut disc, mut weight) = (0.0, 1.0);
        for _ in 0..horizon {
            let step = env.step(&policy.act(&x)?)?;
            disc += weight * step.reward;
            weight *= gamma;
            if step.terminal {
                break;
            }
            x = step.next_state;
        }
        gaps.push(q - disc);
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}
