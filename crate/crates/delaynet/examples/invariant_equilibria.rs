//! Conserved functionals and per-level-set equilibria on the degenerate
//! kinase network: the per-reaction share table, levels through the four
//! experiment start points, the unique equilibrium of each level set, and
//! the degenerate continuum.
//!
//! Run with `cargo run --example invariant_equilibria`.

use delaynet::ddesim::{simulate, HistorySegment};
use delaynet::exact::{format_rat, rat_array, rat_i, rat_to_f64};
use delaynet::fixtures;
use delaynet::invariants::{
    conservation_check, degenerate_set, delta_coefficients, equilibrium_directions,
    equilibrium_in_set, invariant_set, quasi_delay, reference_equilibrium, InvariantSetKind,
};
use delaynet::lyapunov::equilibrium_residual;
use delaynet::net::Complex;

fn main() {
    let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
    let witness = fixtures::kinase_degenerate_witness(rat_i(1));

    // Per-reaction species shares of the weighted functional.
    let table = delta_coefficients(&net, &witness).unwrap();
    println!("share table (reaction, species) -> delta:");
    for (i, row) in table.delta.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !rat_to_f64(v).eq(&0.0) {
                println!("  delta[{}][{}] = {}", i + 1, net.species()[j], format_rat(v));
            }
        }
    }

    // Aggregated delay the target inherits from the reactant 2E.
    let y2e = Complex::from_pairs(&[(0, 2)]);
    println!("aggregated delay for 2E: {}", format_rat(&quasi_delay(&net, &witness, &y2e, true).unwrap()));

    // Levels through the four experiment points: two shared level sets.
    for theta in fixtures::THETA {
        let psi = HistorySegment::constant(&theta, 0.0, 1.0);
        let spec = invariant_set(&net, Some(&witness), &psi, InvariantSetKind::NewSccDe3).unwrap();
        let scale = rat_to_f64(&spec.basis[0][0]);
        println!("level through {theta:?}: {:.6}", spec.levels[0] / scale);
    }

    // The equilibrium inside each level set, found by damped Newton on the
    // equilibrium manifold.
    for theta in [fixtures::THETA[0], fixtures::THETA[2]] {
        let psi = HistorySegment::constant(&theta, 0.0, 1.0);
        let spec = invariant_set(&net, Some(&witness), &psi, InvariantSetKind::NewSccDe3).unwrap();
        let x = equilibrium_in_set(&net, &witness, &spec, None).unwrap();
        println!("equilibrium in the level set of {theta:?}: {x:?}");
        println!("  RHS residual there: {:.2e}", equilibrium_residual(&net, &x));
    }

    // The equilibrium continuum through the reference point.
    let x_star = reference_equilibrium(&witness).unwrap();
    let set = degenerate_set(&x_star, equilibrium_directions(&witness));
    println!("degenerate continuum samples (all satisfy x_E^2 = x_EP = x_EPP):");
    for v in [-1.0, 0.0, 1.0] {
        let x = set.point(&[v]);
        println!("  v = {v:>4}: {x:?}  (x_E^2 - x_EP = {:.1e})", x[0] * x[0] - x[1]);
    }

    // Conservation along a run: the functional stays on its level.
    let psi = HistorySegment::constant(&fixtures::THETA[0], 0.0, 1.0);
    let spec = invariant_set(&net, Some(&witness), &psi, InvariantSetKind::NewSccDe3).unwrap();
    let traj = simulate(&net, &psi, 50.0, 0.01).unwrap();
    let drift = conservation_check(&traj, &net, &spec, 0.5).unwrap();
    println!("max functional drift over the run: {drift:.2e}");
}
