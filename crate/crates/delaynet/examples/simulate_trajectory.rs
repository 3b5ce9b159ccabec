//! Delay-equation integration by the method of steps: dense output,
//! convergence to equilibrium, and fourth-order step-halving evidence.
//!
//! Run with `cargo run --example simulate_trajectory`.

use delaynet::ddesim::{dense_eval, simulate, HistorySegment};
use delaynet::exact::rat_i;
use delaynet::fixtures;

fn main() {
    // Birth-death with unit rates and delay 1 settles at x = 1.
    let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
    let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
    let traj = simulate(&net, &psi, 50.0, 0.01).unwrap();
    println!("dense samples of the birth-death run:");
    for t in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
        println!("  x({t:>4}) = {:.9}", dense_eval(&traj, t).unwrap()[0]);
    }
    println!("max step-doubling error estimate: {:.2e}", traj.max_error_estimate());

    // Step halving: endpoint errors shrink ~16x per halving (order four).
    let reference = simulate(&net, &psi, 4.0, 0.00125).unwrap();
    let x_ref = dense_eval(&reference, 4.0).unwrap()[0];
    let mut prev: Option<f64> = None;
    for h in [0.04, 0.02, 0.01] {
        let run = simulate(&net, &psi, 4.0, h).unwrap();
        let err = (dense_eval(&run, 4.0).unwrap()[0] - x_ref).abs();
        match prev {
            Some(p) => println!("  h = {h}: error {err:.3e}  (ratio {:.1})", p / err),
            None => println!("  h = {h}: error {err:.3e}"),
        }
        prev = Some(err);
    }

    // The degenerate kinase network from one of the experiment's start
    // points; the endpoint sits on the equilibrium continuum x_E^2 = x_EP.
    let kd = fixtures::kinase_degenerate(rat_i(1), &delaynet::exact::rat_array::<5>(1, 1));
    let theta = fixtures::THETA[0];
    let psi2 = HistorySegment::constant(&theta, 0.0, 1.0);
    let traj2 = simulate(&kd, &psi2, 100.0, 0.01).unwrap();
    let end = dense_eval(&traj2, 100.0).unwrap();
    println!("degenerate kinase from {theta:?}: x(100) = {end:?}");
    println!("  x_E^2 - x_EP = {:.2e}", end[0] * end[0] - end[1]);
}
