//! Structural analysis of the bundled networks: complex graph, linkage
//! classes, weak reversibility, exact subspace bases, deficiency.
//!
//! Run with `cargo run --example structure_report`.

use delaynet::exact::{format_rat, rat_array, rat_i};
use delaynet::fixtures;
use delaynet::structure::structure_report;

fn show(name: &str, net: &delaynet::DelayedNetwork) {
    let rep = structure_report(net);
    println!("== {name} ==");
    println!(
        "  p = {}, l = {}, s = {}, deficiency = {}, weakly reversible = {}",
        rep.complexes.len(),
        rep.linkage_class_count,
        rep.stoich_basis.len(),
        rep.deficiency,
        rep.weakly_reversible,
    );
    let fmt = |basis: &Vec<Vec<delaynet::Rat>>| {
        basis
            .iter()
            .map(|v| format!("({})", v.iter().map(format_rat).collect::<Vec<_>>().join(", ")))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("  stoichiometric basis: {}", fmt(&rep.stoich_basis));
    println!("  conservation basis:   {}", fmt(&rep.orth_basis));
    println!("  kinetic basis:        {}", fmt(&rep.kinetic_basis));
    assert!(rep.kinetic_inside_stoich());
}

fn main() {
    show("birth-death", &fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1)));
    show("reversible pair target", &fixtures::birth_death_target(rat_i(1), rat_i(1)));
    show("cubic branching target", &fixtures::cubic_branch_target(rat_i(1)));
    show("kinase chain", &fixtures::pak1(&rat_array::<4>(1, 1), &rat_array::<4>(1, 1)));
    // The degenerate kinase variant fills all of R^3, so there is no classic
    // conserved direction, while its kinetic subspace stays two-dimensional.
    show("degenerate kinase", &fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1)));
}
