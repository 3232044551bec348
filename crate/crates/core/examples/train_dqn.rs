//! Trains the tiny Q-network on one sheep in an empty 270 px world
//! (configs/desk_scale.toml), then compares its success rate against the
//! random policy.
//!
//! cargo run --release --example train_dqn -- [frames] [out_dir]

use shepherd_core::config::Config;
use shepherd_core::dqn::{train_loop, LearnedController, TrainOutputs};
use shepherd_core::env::ShepherdEnv;
use shepherd_core::eval::{aggregate_metrics, run_episode, Controller, RandomController};
use shepherd_core::reward::Terminal;

fn main() -> shepherd_core::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let frames: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let out = std::path::PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "target/train_dqn".into()));
    std::fs::create_dir_all(&out)?;

    let Config { env: env_cfg, mut train, .. } = Config::from_toml(include_str!("../configs/desk_scale.toml"))?;
    train.total_frames = frames;
    let started = std::time::Instant::now();
    let report = train_loop(
        &train,
        &env_cfg,
        &TrainOutputs {
            log_csv: Some(out.join("train_log.csv")),
            checkpoint: Some(out.join("tiny.ckpt")),
        },
    )?;
    println!(
        "trained {} frames, {} episodes, {} updates in {:.0}s",
        report.frames,
        report.episodes.len(),
        report.updates,
        started.elapsed().as_secs_f64()
    );
    let tenth = (report.episodes.len() / 10).max(1);
    let mean = |logs: &[shepherd_core::dqn::EpisodeLog]| logs.iter().map(|e| e.total_return).sum::<f64>() / logs.len() as f64;
    println!(
        "mean return first 10% {:.2}, last 10% {:.2}",
        mean(&report.episodes[..tenth]),
        mean(&report.episodes[report.episodes.len() - tenth..])
    );

    let mut env = ShepherdEnv::new(env_cfg)?;
    let mut learned = LearnedController::new(report.learner.main.clone(), 0.0);
    let mut random = RandomController::new();
    for controller in [&mut learned as &mut dyn Controller, &mut random] {
        let results = (0..100)
            .map(|k| run_episode(&mut env, controller, 9_000_000 + k))
            .collect::<shepherd_core::Result<Vec<_>>>()?;
        let row = aggregate_metrics(0.0, controller.name(), &results)?;
        let count = |t: Terminal| results.iter().filter(|r| r.termination == t).count();
        println!(
            "{:<8} success {:.0}%  violation {}  timeout {}",
            row.policy,
            100.0 * row.success_rate,
            count(Terminal::Violation),
            count(Terminal::Timeout)
        );
    }
    Ok(())
}
