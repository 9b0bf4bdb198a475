use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ddpgpp::agent::Agent;
use ddpgpp::envs::make_env;
use ddpgpp::harness::{self, RunConfig, CONFIG_FILE, PROGRESS_FILE};
use ddpgpp::Result;

/// Train and evaluate deterministic actor-critic agents on small control tasks.
#[derive(Parser, Debug)]
#[command(name = "ddpgpp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent, writing config.txt, progress.csv and a checkpoint.
    Run(RunArgs),
    /// Evaluate the policy stored in a run directory.
    Eval(EvalArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Environment: lqr2d or pendulum.
    #[arg(long)]
    env: Option<String>,
    /// Algorithm preset: ddpg, td3, ddpgpp or ddpgpp-prop.
    #[arg(long)]
    algo: Option<String>,
    /// Root seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Total environment steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Evaluate every this many environment steps.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Episodes per evaluation.
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Output directory; relative paths resolve under $DDPGPP_OUT_ROOT when set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` config file, applied before the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any setting, e.g. `--set policy_delay=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    /// Run directory holding config.txt and actor.mlp.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of evaluation episodes.
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    /// Seed of the evaluation episodes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    if let Some(v) = &args.env {
        cfg.env = v.clone();
    }
    if let Some(v) = &args.algo {
        cfg.algo = v.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.steps {
        cfg.total_env_steps = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.eval_episodes {
        cfg.eval_episodes = v;
    }
    for s in &args.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ddpgpp::Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-{}-s{}", cfg.env, cfg.algo, cfg.seed))
    });
    cfg.out_dir = Some(harness::resolve_out_dir(&out));
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    cfg.validate()?;
    print!("{}", cfg.echo()?);
    let out = harness::train(&cfg)?;
    let dir = cfg.out_dir.as_ref().expect("out_dir is always set");
    if let Some(last) = out.records.last() {
        println!(
            "final return {:.3} ± {:.3} after {} steps",
            last.return_mean, last.return_std, last.env_steps
        );
    }
    println!("wrote {}", dir.join(PROGRESS_FILE).display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(&std::fs::read_to_string(args.checkpoint.join(CONFIG_FILE))?)?;
    let spec = make_env(&cfg.env)?.spec().clone();
    let policy = Agent::load_policy(&args.checkpoint, &spec)?;
    let out = harness::evaluate(&policy, &cfg.env, args.episodes, args.seed)?;
    println!(
        "{} over {} episodes: {:.3} ± {:.3}",
        cfg.env, args.episodes, out.mean, out.std
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
