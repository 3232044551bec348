//! Moving-reward branches for a few hand-picked group displacements.
//!
//! cargo run --release --example reward

use shepherd_core::reward::{moving_reward, MovingRewardInputs, D_MIN};
use shepherd_core::Vec2;

fn main() {
    let sub_goal = Vec2::new(100.0, 0.0);
    let cases = [
        ("still", Vec2::new(0.0, 0.0), 60.0),
        ("toward", Vec2::new(2.0, 0.0), 58.0),
        ("sideways", Vec2::new(0.0, 2.0), 60.03),
        ("backward", Vec2::new(-2.0, 0.0), 62.0),
    ];
    println!("{:<9} {:>6} {:>6} {:>6} {:>7}", "move", "r1", "r2", "r3", "total");
    for (name, d, new_path) in cases {
        let t = moving_reward(&MovingRewardInputs {
            old_center: Vec2::ZERO,
            new_center: d,
            old_path_dist: 60.0,
            new_path_dist: new_path,
            sub_goal,
            d_min: D_MIN,
            goal_radius: 30.0,
        });
        println!("{name:<9} {:>6.2} {:>6.2} {:>6.2} {:>7.2}", t.r1, t.r2, t.r3, t.total());
    }
}
