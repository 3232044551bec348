//! Five sheep fleeing a stationary shepherd in an empty world.
//!
//! cargo run --release --example flock

use shepherd_core::envgen::empty_world;
use shepherd_core::flock::{centroid, group_radius, step_flock, AgentState, BehaviorParams};
use shepherd_core::Vec2;

fn main() -> shepherd_core::Result<()> {
    let ws = empty_world(270.0);
    let params = BehaviorParams::default();
    let mut flock: Vec<AgentState> = [(130.0, 130.0), (138.0, 134.0), (126.0, 140.0), (134.0, 126.0), (140.0, 142.0)]
        .iter()
        .map(|&(x, y)| AgentState::at(Vec2::new(x, y)))
        .collect();
    let shepherd = AgentState::at(Vec2::new(115.0, 115.0));
    println!("step  center_x  center_y  radius");
    for step in 0..=60 {
        if step % 10 == 0 {
            let c = centroid(&flock);
            println!("{step:>4}  {:>8.2}  {:>8.2}  {:>6.2}", c.x, c.y, group_radius(&flock));
        }
        flock = step_flock(&flock, &shepherd, &ws, &params, 1.0)?;
    }
    Ok(())
}
