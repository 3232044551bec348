//! Success rates of the rule-based shepherds and the random floor.
//!
//! cargo run --release --example baselines -- [episodes] [empty|filter0|filter1]

use shepherd_core::env::{EnvConfig, ShepherdEnv};
use shepherd_core::envgen::{EnvKind, EnvironmentSpec, FixedVariant};
use shepherd_core::eval::{aggregate_metrics, baseline_controller, run_episode};
use shepherd_core::policy::{PolicyKind, RuleParams};
use shepherd_core::reward::Terminal;

fn main() -> shepherd_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let episodes: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let env = match args.get(2).map(String::as_str).unwrap_or("empty") {
        "filter0" => EnvironmentSpec {
            kind: EnvKind::Fixed,
            variant: FixedVariant::Filter0,
            ..Default::default()
        },
        "filter1" => EnvironmentSpec {
            kind: EnvKind::Fixed,
            variant: FixedVariant::Filter1,
            ..Default::default()
        },
        _ => EnvironmentSpec {
            kind: EnvKind::Empty,
            ..Default::default()
        },
    };
    let cfg = EnvConfig {
        env,
        n_sheep: 3,
        max_steps: 5000,
        render: false,
        ..Default::default()
    };
    let mut sim = ShepherdEnv::new(cfg)?;
    for kind in [PolicyKind::SimpleRule, PolicyKind::ComplexRule, PolicyKind::Random] {
        let mut controller = baseline_controller(kind, RuleParams::default())?;
        let mut results = Vec::new();
        for seed in 0..episodes {
            results.push(run_episode(&mut sim, controller.as_mut(), seed)?);
        }
        let row = aggregate_metrics(0.0, controller.name(), &results)?;
        let count = |t: Terminal| results.iter().filter(|r| r.termination == t).count();
        println!(
            "{:<13} success {:>5.1}%  violation {:>3}  timeout {:>3}  mean time {:>7.1}",
            row.policy,
            100.0 * row.success_rate,
            count(Terminal::Violation),
            count(Terminal::Timeout),
            row.time_all.0
        );
    }
    Ok(())
}
