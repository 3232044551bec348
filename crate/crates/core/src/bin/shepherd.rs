use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;

use shepherd_core::config::Config;
use shepherd_core::dqn::{train_loop, LearnedController, TrainOutputs};
use shepherd_core::env::ShepherdEnv;
use shepherd_core::envgen::{EnvKind, FixedVariant};
use shepherd_core::eval::{aggregate_metrics, baseline_controller, run_episode, run_sweep, save_csv, save_gnuplot, Controller};
use shepherd_core::policy::PolicyKind;
use shepherd_core::protocol;
use shepherd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "shepherd", version, about = "Shepherding simulator, learner and evaluation harness")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate workspaces and save them as JSON.
    GenEnv {
        /// empty, fixed, random_grid or layered.
        #[arg(long)]
        kind: Option<String>,
        /// figure1, filter0 or filter1 (fixed worlds).
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Reset an episode and dump observation frames as PGM.
    Render {
        /// Decision steps to simulate after the reset.
        #[arg(long, default_value_t = 0)]
        steps: usize,
        /// Policy driving the shepherd between frames.
        #[arg(long, default_value = "simple")]
        policy: String,
    },
    /// Train the Q-network.
    Train,
    /// Evaluate one policy over seeded episodes.
    Eval {
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Behavior-parameter sweep, written as CSV.
    Sweep {
        /// Checkpoint for a learned policy in the sweep.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Serve the environment over JSON lines.
    Serve {
        /// Listen on this address instead of stdin/stdout.
        #[arg(long)]
        tcp: Option<String>,
    },
}

fn parse_name<T: DeserializeOwned>(name: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| Error::InvalidArgument(format!("unknown value {name:?}")))
}

fn learned_controller(path: Option<&Path>, epsilon: f64) -> Result<Box<dyn Controller>> {
    let path = path.ok_or_else(|| Error::Config("the learned policy needs a checkpoint".into()))?;
    Ok(Box::new(LearnedController::load(path, epsilon)?))
}

fn controller(kind: PolicyKind, cfg: &Config, checkpoint: Option<&Path>) -> Result<Box<dyn Controller>> {
    match kind {
        PolicyKind::Learned => learned_controller(checkpoint, cfg.eval.epsilon),
        other => baseline_controller(other, cfg.eval.rule),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    let out = cli.out;
    std::fs::create_dir_all(&out)?;

    match cli.command {
        Command::GenEnv { kind, variant, count } => {
            let mut spec = cfg.env.env.clone();
            if let Some(k) = kind {
                spec.kind = parse_name::<EnvKind>(&k)?;
            }
            if let Some(v) = variant {
                spec.variant = parse_name::<FixedVariant>(&v)?;
            }
            for i in 0..count {
                spec.seed = cfg.seed + i;
                let ws = spec.generate()?;
                let path = out.join(format!("{}_{}.json", ws.name, spec.seed));
                ws.save(&path)?;
                println!("{}", path.display());
            }
        }
        Command::Render { steps, policy } => {
            let mut env_cfg = cfg.env.clone();
            env_cfg.render = true;
            let mut env = ShepherdEnv::new(env_cfg)?;
            let mut ctl = controller(policy.parse()?, &cfg, cfg.eval.checkpoint.as_deref())?;
            env.reset(cfg.seed)?;
            ctl.reset(cfg.seed);
            env.render_current().write_pgm(out.join("frame_0000.pgm"))?;
            for step in 1..=steps {
                if env.terminal().is_some() {
                    break;
                }
                let control = ctl.act(&env)?;
                env.step_control(control)?;
                env.render_current().write_pgm(out.join(format!("frame_{step:04}.pgm")))?;
            }
            println!("wrote frames to {}", out.display());
        }
        Command::Train => {
            let report = train_loop(
                &cfg.train,
                &cfg.env,
                &TrainOutputs {
                    log_csv: Some(out.join("train_log.csv")),
                    checkpoint: Some(out.join("checkpoint.bin")),
                },
            )?;
            println!(
                "{} frames, {} episodes, {} updates -> {}",
                report.frames,
                report.episodes.len(),
                report.updates,
                out.join("checkpoint.bin").display()
            );
        }
        Command::Eval { policy, checkpoint, episodes } => {
            let kind = match policy {
                Some(p) => p.parse()?,
                None => cfg.eval.policy,
            };
            let checkpoint = checkpoint.or_else(|| cfg.eval.checkpoint.clone());
            let mut ctl = controller(kind, &cfg, checkpoint.as_deref())?;
            let mut env_cfg = cfg.env.clone();
            env_cfg.render = kind == PolicyKind::Learned;
            let mut env = ShepherdEnv::new(env_cfg)?;
            let n = episodes.unwrap_or(cfg.eval.episodes);
            let mut results = Vec::new();
            let mut episodes_csv = std::io::BufWriter::new(std::fs::File::create(out.join("episodes.csv"))?);
            writeln!(episodes_csv, "seed,success,termination,completion_time,path_length,sheep_path_length,return")?;
            for k in 0..n {
                let r = run_episode(&mut env, ctl.as_mut(), shepherd_core::rng::sub_seed(cfg.seed, k))?;
                writeln!(
                    episodes_csv,
                    "{},{},{:?},{},{:.3},{:.3},{:.6}",
                    r.seed,
                    r.success,
                    r.termination,
                    r.completion_time,
                    r.shepherd_path_length,
                    r.sheep_path_length,
                    r.total_return
                )?;
                results.push(r);
            }
            episodes_csv.flush()?;
            let row = aggregate_metrics(0.0, ctl.name(), &results)?;
            save_csv(std::slice::from_ref(&row), out.join("eval.csv"))?;
            println!("{}: success {:.1}% over {n} episodes", row.policy, 100.0 * row.success_rate);
        }
        Command::Sweep { checkpoint } => {
            let checkpoint = checkpoint.or_else(|| cfg.eval.checkpoint.clone());
            let epsilon = cfg.eval.epsilon;
            let rows = run_sweep(&cfg.sweep, &mut || learned_controller(checkpoint.as_deref(), epsilon))?;
            let path = out.join("sweep.csv");
            save_csv(&rows, &path)?;
            save_gnuplot(&rows, out.join("sweep.dat"))?;
            println!("{} rows -> {}", rows.len(), path.display());
        }
        Command::Serve { tcp } => match tcp {
            Some(addr) => protocol::serve_tcp(cfg.env.clone(), addr, None)?,
            None => protocol::serve_stdio(cfg.env.clone())?,
        },
    }
    info!("done");
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
