//! Parse the line-oriented network format, inspect the result, and see the
//! validation diagnostics on a hand-built broken network.
//!
//! Run with `cargo run --example parse_and_validate`.

use delaynet::exact::rat_i;
use delaynet::net::{parse_network, serialize_network, validate_network, Complex, DelayedNetwork, Reaction};

fn main() {
    let text = "\
# birth-death with one delayed reaction
species S1
reaction 2S1 -> S1 : k=1 tau=0.5
reaction 0 -> S1 : k=2 tau=0
";
    let net = parse_network(text).expect("well-formed network");
    println!("parsed {} species, {} reactions", net.n(), net.r());
    for (i, rx) in net.reactions().iter().enumerate() {
        println!(
            "  R{}: {} -> {}  (k={}, tau={})",
            i + 1,
            rx.reactant.format_with(net.species()),
            rx.product.format_with(net.species()),
            rx.rate,
            rx.delay,
        );
    }
    println!("reactant groups: {:?}", net.reactant_groups().keys().map(|c| c.format_with(net.species())).collect::<Vec<_>>());

    // Round trip: serialize and parse back to the identical value.
    let again = parse_network(&serialize_network(&net)).unwrap();
    assert_eq!(net, again);
    println!("round trip: identical");

    // Parse errors carry positions and reasons.
    let bad = "species A\nreaction A -> B : k=1 tau=0";
    println!("unknown species -> {}", parse_network(bad).unwrap_err());

    // Validation diagnoses hand-built networks without panicking.
    let broken = DelayedNetwork::new(
        vec!["A".into()],
        vec![Reaction::new(Complex::from_pairs(&[(0, 1)]), Complex::zero(), rat_i(0), rat_i(0))],
    );
    for d in validate_network(&broken) {
        println!("diagnostic: {d}");
    }
}
