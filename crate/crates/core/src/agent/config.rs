use std::fmt;

use crate::error::{Error, Result};
use crate::propensity;

/// Hyper-parameters and mechanism switches of the actor-critic learner.
///
/// The switches cover the classic variants:
///
/// | preset        | twin | delay | target noise | actor uses min | propensity |
/// |---------------|------|-------|--------------|----------------|------------|
/// | `ddpg`        | no   | 1     | 0            | no             | no         |
/// | `td3`         | yes  | 2     | 0.2 (0.5)    | no             | no         |
/// | `ddpgpp`      | yes  | 1     | 0            | yes            | no         |
/// | `ddpgpp-prop` | yes  | 1     | 0            | yes            | yes        |
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// Standard deviation in units of the control half-range.
    pub exploration_noise_std: f64,
    /// Environment steps taken with uniform random controls.
    pub burn_in: usize,
    pub twin_critics: bool,
    pub policy_delay: usize,
    /// Target-policy smoothing noise, in units of the control half-range.
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub use_propensity: bool,
    pub actor_uses_min: bool,
    pub hidden_sizes: Vec<usize>,
    pub propensity_c: f64,
    pub propensity_iters: usize,
}

pub const PRESETS: [&str; 4] = ["ddpg", "td3", "ddpgpp", "ddpgpp-prop"];

impl AgentConfig {
    fn base() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 100,
            exploration_noise_std: 0.1,
            burn_in: 1000,
            twin_critics: false,
            policy_delay: 1,
            target_noise_std: 0.0,
            target_noise_clip: 0.5,
            use_propensity: false,
            actor_uses_min: false,
            hidden_sizes: vec![256, 256],
            propensity_c: propensity::DEFAULT_C,
            propensity_iters: propensity::DEFAULT_ITERS,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::base();
        let cfg = match name {
            "ddpg" => base,
            "td3" => Self {
                twin_critics: true,
                policy_delay: 2,
                target_noise_std: 0.2,
                target_noise_clip: 0.5,
                ..base
            },
            "ddpgpp" => Self {
                twin_critics: true,
                actor_uses_min: true,
                exploration_noise_std: 0.2,
                actor_lr: 3e-4,
                critic_lr: 3e-4,
                ..base
            },
            "ddpgpp-prop" => Self {
                use_propensity: true,
                ..Self::preset("ddpgpp")?
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown algorithm preset `{other}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.use_propensity && self.batch_size < 2 {
            return bad("propensity weighting needs batch_size >= 2".into());
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be at least 1".into());
        }
        if !(self.exploration_noise_std >= 0.0
            && self.target_noise_std >= 0.0
            && self.target_noise_clip >= 0.0)
        {
            return bad("noise scales must be non-negative".into());
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be positive".into());
        }
        if !(self.propensity_c >= 0.0) {
            return bad("propensity_c must be non-negative".into());
        }
        Ok(())
    }

    /// Sets one field from its textual form, as used by config files and
    /// `--set key=value`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "gamma" => self.gamma = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "actor_lr" => self.actor_lr = parse(key, value)?,
            "critic_lr" => self.critic_lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "exploration_noise_std" => self.exploration_noise_std = parse(key, value)?,
            "burn_in" => self.burn_in = parse(key, value)?,
            "twin_critics" => self.twin_critics = parse(key, value)?,
            "policy_delay" => self.policy_delay = parse(key, value)?,
            "target_noise_std" => self.target_noise_std = parse(key, value)?,
            "target_noise_clip" => self.target_noise_clip = parse(key, value)?,
            "use_propensity" => self.use_propensity = parse(key, value)?,
            "actor_uses_min" => self.actor_uses_min = parse(key, value)?,
            "hidden_sizes" => {
                self.hidden_sizes = value
                    .split(',')
                    .map(|v| parse("hidden_sizes", v.trim()))
                    .collect::<Result<_>>()?
            }
            "propensity_c" => self.propensity_c = parse(key, value)?,
            "propensity_iters" => self.propensity_iters = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown agent setting `{key}`"))),
        }
        Ok(())
    }

    /// Every field as `(key, value)` in a form [`AgentConfig::set`] accepts.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hidden: Vec<String> = self.hidden_sizes.iter().map(|h| h.to_string()).collect();
        vec![
            ("gamma", self.gamma.to_string()),
            ("tau", self.tau.to_string()),
            ("actor_lr", self.actor_lr.to_string()),
            ("critic_lr", self.critic_lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            (
                "exploration_noise_std",
                self.exploration_noise_std.to_string(),
            ),
            ("burn_in", self.burn_in.to_string()),
            ("twin_critics", self.twin_critics.to_string()),
            ("policy_delay", self.policy_delay.to_string()),
            ("target_noise_std", self.target_noise_std.to_string()),
            ("target_noise_clip", self.target_noise_clip.to_string()),
            ("use_propensity", self.use_propensity.to_string()),
            ("actor_uses_min", self.actor_uses_min.to_string()),
            ("hidden_sizes", hidden.join(",")),
            ("propensity_c", self.propensity_c.to_string()),
            ("propensity_iters", self.propensity_iters.to_string()),
        ]
    }

    pub fn is_key(key: &str) -> bool {
        Self::base().entries().iter().any(|(k, _)| *k == key)
    }
}

impl fmt::Display for AgentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let pp = AgentConfig::preset("ddpgpp").unwrap();
        assert_eq!(pp.exploration_noise_std, 0.2);
        assert_eq!(pp.actor_lr, 3e-4);
        assert_eq!(pp.policy_delay, 1);
        assert_eq!(pp.target_noise_std, 0.0);
        assert!(pp.twin_critics && pp.actor_uses_min && !pp.use_propensity);

        let td3 = AgentConfig::preset("td3").unwrap();
        assert_eq!(td3.policy_delay, 2);
        assert_eq!((td3.target_noise_std, td3.target_noise_clip), (0.2, 0.5));
        assert!(td3.twin_critics && !td3.actor_uses_min);
        assert_eq!(td3.exploration_noise_std, 0.1);

        let ddpg = AgentConfig::preset("ddpg").unwrap();
        assert!(!ddpg.twin_critics && !ddpg.actor_uses_min);
        assert_eq!((ddpg.actor_lr, ddpg.critic_lr), (1e-3, 1e-3));

        let prop = AgentConfig::preset("ddpgpp-prop").unwrap();
        assert_eq!(
            prop,
            AgentConfig {
                use_propensity: true,
                ..pp
            }
        );

        for name in PRESETS {
            let cfg = AgentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!((cfg.batch_size, cfg.burn_in), (100, 1000));
            assert_eq!(cfg.hidden_sizes, vec![256, 256]);
        }
        assert!(matches!(AgentConfig::preset("sac"), Err(Error::Config(_))));
    }

    #[test]
    fn set_round_trips_through_entries() {
        let mut cfg = AgentConfig::preset("td3").unwrap();
        cfg.set("policy_delay", "8").unwrap();
        cfg.set("hidden_sizes", "64, 32").unwrap();
        let mut copy = AgentConfig::preset("ddpg").unwrap();
        for (k, v) in cfg.entries() {
            copy.set(k, &v).unwrap();
        }
        assert_eq!(copy, cfg);
        assert!(cfg.set("policy_delay", "two").is_err());
        assert!(cfg.set("alpha", "0.2").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = AgentConfig::preset("ddpgpp-prop").unwrap();
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = AgentConfig::preset("ddpg").unwrap();
        cfg.policy_delay = 0;
        assert!(cfg.validate().is_err());
    }
}
