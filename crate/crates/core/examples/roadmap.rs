//! Builds a roadmap in the filter world and queries the geodesic path from
//! the start to the goal.
//!
//! cargo run --release --example roadmap -- [out_dir]

use shepherd_core::envgen::{make_fixed, FixedVariant};
use shepherd_core::roadmap::Roadmap;

fn main() -> shepherd_core::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/roadmap".into()));
    std::fs::create_dir_all(&out)?;
    let ws = make_fixed(FixedVariant::Filter0);
    let roadmap = Roadmap::build(&ws, 300, 8, 1)?;
    println!(
        "{} nodes ({} uniform, {} medial), {} edges, {} component(s)",
        roadmap.nodes.len(),
        roadmap.source_counts.0,
        roadmap.source_counts.1,
        roadmap.edges.len(),
        roadmap.component_count()
    );
    let path = roadmap.geodesic_path(&ws, ws.start, ws.goal_center)?;
    println!(
        "geodesic {:.1} px vs straight line {:.1} px; first sub-goal ({:.1}, {:.1})",
        path.length,
        ws.start.distance(ws.goal_center),
        path.sub_goal.x,
        path.sub_goal.y
    );
    for w in &path.waypoints {
        println!("  ({:.1}, {:.1})", w.x, w.y);
    }
    roadmap.save(&ws, out.join("roadmap.json"))?;
    Ok(())
}
