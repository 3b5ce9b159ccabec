//! Dynamic equivalence and diagonal linear conjugacy: verify bundled
//! witnesses and search for the constants given only the target structure.
//!
//! Run with `cargo run --example conjugacy_witness`.

use delaynet::conjugacy::{check_dynamic_equivalence, check_linear_conjugacy, find_conjugacy};
use delaynet::exact::{rat_array, rat_i};
use delaynet::fixtures;

fn main() {
    // The birth-death process is dynamically equivalent to the reversible
    // pair with halved rates.
    let bd = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
    let target = fixtures::birth_death_target(rat_i(1), rat_i(1));
    let rep = check_dynamic_equivalence(&bd, &target, 1e-9).unwrap();
    println!("birth-death vs reversible pair: {:?} (residual {:.2e})", rep.kind, rep.residual_max);

    // The kinase chain needs the diagonal transform diag(1/2, 1, 1) and a
    // quartered first rate.
    let k = rat_array::<4>(1, 1);
    let pk = fixtures::pak1(&k, &rat_array::<4>(1, 1));
    let w = fixtures::pak1_witness(&k);
    let rep = check_linear_conjugacy(&pk, &w, 1e-9).unwrap();
    println!("kinase chain vs linear chain: {:?} (residual {:.2e})", rep.kind, rep.residual_max);
    for ((y, ti), kbar) in &rep.kbar {
        println!("  kbar[{} via target reaction {}] = {}", y.format_with(pk.species()), ti, kbar);
    }

    // Search mode: hand over the target arrows only and recover the rates.
    let structure = fixtures::kinase_chain_target(&rat_array::<4>(1, 1));
    let found = find_conjugacy(&pk, &structure, Some(fixtures::kinase_l())).unwrap();
    println!("search with fixed transform recovered target rates:");
    for rx in found.target.reactions() {
        println!(
            "  {} -> {} : k = {}",
            rx.reactant.format_with(pk.species()),
            rx.product.format_with(pk.species()),
            rx.rate,
        );
    }
    let verify = check_linear_conjugacy(&pk, &found, 1e-9).unwrap();
    println!("found witness verifies: {:?}", verify.kind);

    // Without the transform hint the search runs coordinate descent over
    // log L; it is a heuristic and reports failure rather than guessing.
    match find_conjugacy(&pk, &structure, None) {
        Ok(w) => println!("free search found L = {:?}", w.l.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
        Err(e) => println!("free search: {e}"),
    }
}
