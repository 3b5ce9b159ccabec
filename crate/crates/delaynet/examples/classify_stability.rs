//! Stability classification: which decomposition route applies, what the
//! split rate constants are, and a spot check that the decomposition
//! reproduces the delayed right-hand side.
//!
//! Run with `cargo run --example classify_stability`.

use std::collections::BTreeMap;

use delaynet::classifier::{classify, reconstructed_rhs};
use delaynet::exact::{rat, rat_array, rat_i, rat_to_f64};
use delaynet::fixtures;
use delaynet::kinetics::{dde_rhs, delay_key};

fn report(name: &str, net: &delaynet::DelayedNetwork, witness: &delaynet::ConjugacyWitness) {
    let cert = classify(net, Some(witness), 1e-9);
    println!("== {name}: {:?} ==", cert.theorem);
    let Some(dec) = cert.decomposition.as_ref() else {
        for r in &cert.rejections {
            println!("  rejected by {}: {}", r.route, r.reason);
        }
        return;
    };
    for q in &dec.quasi_rates {
        let rx = &witness.target.reactions()[q.target_reaction];
        println!(
            "  target {} -> {} carries rate {} at delay {}",
            rx.reactant.format_with(net.species()),
            rx.product.format_with(net.species()),
            q.rate,
            q.delay,
        );
    }
    for t in &dec.loop_terms {
        println!(
            "  loop on {} at delay {}: K = {}",
            t.complex.format_with(net.species()),
            t.delay,
            t.coeff,
        );
    }
    // The decomposition must reproduce the delayed RHS pointwise; try one
    // arbitrary state/history tuple.
    let n = net.n();
    let x: Vec<f64> = (0..n).map(|j| 0.4 + 0.3 * j as f64).collect();
    let mut delayed = BTreeMap::new();
    for tau in net.distinct_delays() {
        let xd: Vec<f64> = (0..n).map(|j| 1.1 - 0.2 * j as f64).collect();
        delayed.insert(delay_key(rat_to_f64(&tau)), xd);
    }
    let truth = dde_rhs(net, &x, &delayed).unwrap();
    let rebuilt = reconstructed_rhs(&cert, &x, &delayed).unwrap();
    let gap = truth.iter().zip(&rebuilt).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    println!("  reconstruction gap at a random tuple: {gap:.2e}");
}

fn main() {
    let bd = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
    report("birth-death", &bd, &fixtures::birth_death_witness(rat_i(1), rat_i(1)));

    let taus = [rat(1, 2), rat(7, 10), rat(1, 2), rat(11, 10), rat(13, 10)];
    let cb = fixtures::cubic_branch(rat_i(1), &taus);
    report("cubic branching (shared delay)", &cb, &fixtures::cubic_branch_witness(rat_i(1)));

    let k = rat_array::<4>(1, 1);
    let pk = fixtures::pak1(&k, &[rat_i(1), rat(4, 5), rat(6, 5), rat(3, 5)]);
    report("kinase chain", &pk, &fixtures::pak1_witness(&k));

    // Classification failure keeps every rejection for the report.
    let cert = classify(&bd, None, 1e-9);
    println!("== birth-death without a witness: {:?} ==", cert.theorem);
    for r in &cert.rejections {
        println!("  {}: {}", r.route, r.reason);
    }
}
