//! Renders the shepherd's local view in both representations and writes
//! PGM images.
//!
//! cargo run --release --example render -- [out_dir]

use shepherd_core::envgen::{make_fixed, FixedVariant};
use shepherd_core::render::{render_frame, RepresentationMode, SceneView, SHEEP, GOAL, OBSTACLE};
use shepherd_core::Vec2;

fn main() -> shepherd_core::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/render".into()));
    std::fs::create_dir_all(&out)?;
    let ws = make_fixed(FixedVariant::Filter0);
    let shepherd = ws.start + Vec2::new(-20.0, -20.0);
    let sheep = [ws.start, ws.start + Vec2::new(8.0, 3.0), ws.start + Vec2::new(-2.0, 9.0)];
    for (mode, name) in [(RepresentationMode::Circle, "circle"), (RepresentationMode::Pixel, "pixel")] {
        let frame = render_frame(
            &SceneView {
                workspace: &ws,
                sheep: &sheep,
                shepherd,
            },
            mode,
        );
        let path = out.join(format!("{name}.pgm"));
        frame.write_pgm(&path)?;
        println!(
            "{:<7} sheep px {:>3}  goal px {:>3}  obstacle px {:>4}  -> {}",
            name,
            frame.count(SHEEP),
            frame.count(GOAL),
            frame.count(OBSTACLE),
            path.display()
        );
    }
    Ok(())
}
