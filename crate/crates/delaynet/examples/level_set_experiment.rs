//! The four-trajectory level-set experiment through the library API: two
//! pairs of start points on two invariant level sets, each pair converging
//! to its set's unique equilibrium. Writes the same artifacts as the
//! `repro-fig6` subcommand.
//!
//! Run with `cargo run --release --example level_set_experiment`.

use delaynet::pipeline::repro_fig6;

fn main() {
    let out_dir = std::env::temp_dir().join("delaynet_level_set_experiment");
    let out = repro_fig6(&out_dir, 150.0, 0.005).expect("experiment runs");
    println!("{}", serde_json::to_string_pretty(&out.summary).unwrap());
    println!("trajectories: {:?}", out.trajectory_files);
    println!("level-surface grids: {:?}", out.grid_files);
    println!("all runs converged: {}", out.all_converged);
}
