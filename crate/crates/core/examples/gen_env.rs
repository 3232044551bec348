//! Samples procedural workspaces and saves them as JSON.
//!
//! cargo run --release --example gen_env -- [count] [out_dir]

use shepherd_core::envgen::{sample_density_seeded, EnvKind, EnvironmentSpec};

fn main() -> shepherd_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let count: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let out = std::path::PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "target/envs".into()));
    std::fs::create_dir_all(&out)?;
    for seed in 0..count {
        for kind in [EnvKind::RandomGrid, EnvKind::Layered] {
            let spec = EnvironmentSpec {
                kind,
                seed,
                perturb: true,
                ..Default::default()
            };
            let ws = spec.generate()?;
            let path = out.join(format!("{}_{seed}.json", ws.name));
            ws.save(&path)?;
            println!("{:<40} {:>3} obstacles", path.display(), ws.obstacles.len());
        }
    }
    println!("density draws: {:?}", (0..5).map(|s| format!("{:.3}", sample_density_seeded(s))).collect::<Vec<_>>());
    Ok(())
}
