//! Build the certificate's Lyapunov functional and watch it decrease along
//! a simulated trajectory.
//!
//! Run with `cargo run --example lyapunov_descent`.

use delaynet::classifier::classify;
use delaynet::ddesim::{simulate, HistorySegment};
use delaynet::exact::{rat, rat_array, rat_i};
use delaynet::fixtures;
use delaynet::invariants::{equilibrium_in_set, invariant_set};
use delaynet::lyapunov::{build_functional, descent_profile, lie_derivative_estimate};
use delaynet::pipeline::kind_for_certificate;

fn main() {
    let k = rat_array::<4>(1, 1);
    let net = fixtures::pak1(&k, &[rat_i(1), rat(4, 5), rat(6, 5), rat(3, 5)]);
    let witness = fixtures::pak1_witness(&k);
    let cert = classify(&net, Some(&witness), 1e-9);
    println!("certificate route: {:?}", cert.theorem);

    // The functional must be centered at the equilibrium of the trajectory's
    // own invariant set, so compute that first from the initial history.
    let theta = [1.4, 0.8, 1.2];
    let psi = HistorySegment::constant(&theta, 0.0, net.max_delay_f64());
    let spec = invariant_set(&net, Some(&witness), &psi, kind_for_certificate(&cert)).unwrap();
    let x_bar = equilibrium_in_set(&net, &witness, &spec, None).unwrap();
    println!("equilibrium in the level set of {theta:?}: {x_bar:?}");

    let v = build_functional(&cert, &net, &x_bar).unwrap();
    println!("point-term weights (inverse transform): {:?}", v.point_terms.iter().map(|p| p.weight).collect::<Vec<_>>());
    println!("{} integral terms over delays up to {}", v.integral_terms.len(), v.max_delay());

    let traj = simulate(&net, &psi, 60.0, 0.01).unwrap();
    let (max_increment, terminal, samples) = descent_profile(&v, &traj, 5.0).unwrap();
    println!("t        V(x_t)         dV/dt (central estimate)");
    for &(t, val) in &samples {
        let dv = lie_derivative_estimate(&v, &traj, t).unwrap_or(f64::NAN);
        println!("{t:>6.1}  {val:>13.6e}  {dv:>13.3e}");
    }
    println!("max positive increment over samples: {max_increment:.2e}");
    println!("terminal value: {terminal:.2e}");
}
