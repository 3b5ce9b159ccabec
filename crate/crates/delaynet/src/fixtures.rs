//! Bundled example networks. These small systems exercise every analysis
//! route and are shared by the unit tests, the acceptance suite, the cargo
//! examples, and the `repro-fig6` command.

use crate::exact::{rat, rat_i, Rat};
use crate::net::{Complex, ConjugacyWitness, DelayedNetwork, Reaction};
use num::traits::Zero;

fn cx(pairs: &[(usize, u32)]) -> Complex {
    Complex::from_pairs(pairs)
}

/// Delayed birth-death process: 2S1 -> S1 (rate k1, delay tau1), 0 -> S1
/// (rate k2, no delay). Not weakly reversible; dynamically equivalent to the
/// reversible pair 2S1 <-> 0 with rates (k1/2, k2/2).
pub fn birth_death(k1: Rat, k2: Rat, tau1: Rat) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["S1".into()],
        vec![
            Reaction::new(cx(&[(0, 2)]), cx(&[(0, 1)]), k1, tau1),
            Reaction::new(Complex::zero(), cx(&[(0, 1)]), k2, Rat::zero()),
        ],
    )
}

/// Complex-balanced target for `birth_death`: 2S1 <-> 0.
pub fn birth_death_target(k1: Rat, k2: Rat) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["S1".into()],
        vec![
            Reaction::new(cx(&[(0, 2)]), Complex::zero(), k1 / rat_i(2), Rat::zero()),
            Reaction::new(Complex::zero(), cx(&[(0, 2)]), k2 / rat_i(2), Rat::zero()),
        ],
    )
}

pub fn birth_death_witness(k1: Rat, k2: Rat) -> ConjugacyWitness {
    ConjugacyWitness::identity(birth_death_target(k1, k2))
}

/// Three-species cubic branching system over A, B, C: three reactions out of
/// 3A, one out of 3C, one out of A+2B, all with rate k and the given delays.
/// Dynamically equivalent to `cubic_branch_target`.
pub fn cubic_branch(k: Rat, taus: &[Rat; 5]) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["A".into(), "B".into(), "C".into()],
        vec![
            Reaction::new(cx(&[(0, 3)]), cx(&[(0, 2), (1, 1)]), k.clone(), taus[0].clone()),
            Reaction::new(cx(&[(0, 3)]), cx(&[(0, 2), (2, 1)]), k.clone(), taus[1].clone()),
            Reaction::new(cx(&[(0, 3)]), cx(&[(0, 1), (1, 1), (2, 1)]), k.clone(), taus[2].clone()),
            Reaction::new(cx(&[(2, 3)]), cx(&[(0, 2), (2, 1)]), k.clone(), taus[3].clone()),
            Reaction::new(cx(&[(0, 1), (1, 2)]), cx(&[(0, 3)]), k, taus[4].clone()),
        ],
    )
}

/// Weakly reversible, deficiency-zero target for `cubic_branch`:
/// 3A <-> A+2B and 3A <-> 3C with rates (k, 2k/3, 2k/3, k).
pub fn cubic_branch_target(k: Rat) -> DelayedNetwork {
    let two_thirds = rat(2, 3) * &k;
    DelayedNetwork::new(
        vec!["A".into(), "B".into(), "C".into()],
        vec![
            Reaction::new(cx(&[(0, 3)]), cx(&[(0, 1), (1, 2)]), k.clone(), Rat::zero()),
            Reaction::new(cx(&[(0, 3)]), cx(&[(2, 3)]), two_thirds.clone(), Rat::zero()),
            Reaction::new(cx(&[(2, 3)]), cx(&[(0, 3)]), two_thirds, Rat::zero()),
            Reaction::new(cx(&[(0, 1), (1, 2)]), cx(&[(0, 3)]), k, Rat::zero()),
        ],
    )
}

pub fn cubic_branch_witness(k: Rat) -> ConjugacyWitness {
    ConjugacyWitness::identity(cubic_branch_target(k))
}

/// p21-activated kinase phosphorylation chain over E, EP, EPP:
/// 2E -> E+EP, EP -> E, EP -> EPP, EPP -> EP.
pub fn pak1(k: &[Rat; 4], taus: &[Rat; 4]) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["E".into(), "EP".into(), "EPP".into()],
        vec![
            Reaction::new(cx(&[(0, 2)]), cx(&[(0, 1), (1, 1)]), k[0].clone(), taus[0].clone()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(0, 1)]), k[1].clone(), taus[1].clone()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(2, 1)]), k[2].clone(), taus[2].clone()),
            Reaction::new(cx(&[(2, 1)]), cx(&[(1, 1)]), k[3].clone(), taus[3].clone()),
        ],
    )
}

/// Linear chain target 2E <-> EP <-> EPP with the first rate quartered; the
/// kinase networks are conjugate to it through L = diag(1/2, 1, 1).
pub fn kinase_chain_target(k: &[Rat; 4]) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["E".into(), "EP".into(), "EPP".into()],
        vec![
            Reaction::new(cx(&[(0, 2)]), cx(&[(1, 1)]), k[0].clone() / rat_i(4), Rat::zero()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(0, 2)]), k[1].clone(), Rat::zero()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(2, 1)]), k[2].clone(), Rat::zero()),
            Reaction::new(cx(&[(2, 1)]), cx(&[(1, 1)]), k[3].clone(), Rat::zero()),
        ],
    )
}

pub fn kinase_l() -> Vec<Rat> {
    vec![rat(1, 2), rat_i(1), rat_i(1)]
}

pub fn pak1_witness(k: &[Rat; 4]) -> ConjugacyWitness {
    ConjugacyWitness { target: kinase_chain_target(k), l: kinase_l() }
}

/// Kinase variant with a continuum of equilibria (x_E^2 = x_EP = x_EPP in the
/// all-equal-rates case): 2E -> E, 2E -> 2E+EP, EP -> E, EP -> EPP,
/// EPP -> EP. Same conjugacy target and L as `pak1`, but the stoichiometric
/// subspace fills all of R^3, so the classic compatibility classes collapse.
pub fn kinase_degenerate(k: Rat, taus: &[Rat; 5]) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["E".into(), "EP".into(), "EPP".into()],
        vec![
            Reaction::new(cx(&[(0, 2)]), cx(&[(0, 1)]), k.clone(), taus[0].clone()),
            Reaction::new(cx(&[(0, 2)]), cx(&[(0, 2), (1, 1)]), k.clone(), taus[1].clone()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(0, 1)]), k.clone(), taus[2].clone()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(2, 1)]), k.clone(), taus[3].clone()),
            Reaction::new(cx(&[(2, 1)]), cx(&[(1, 1)]), k, taus[4].clone()),
        ],
    )
}

pub fn kinase_degenerate_witness(k: Rat) -> ConjugacyWitness {
    ConjugacyWitness {
        target: kinase_chain_target(&[k.clone(), k.clone(), k.clone(), k]),
        l: kinase_l(),
    }
}

/// Two-species system whose equilibria form the line x1 = x2: X1 -> X2,
/// X2 -> X1+X2, X2 -> 0, all rate k. Dynamically equivalent to X1 <-> X2.
pub fn two_species_line(k: Rat, tau1: Rat, tau2: Rat) -> DelayedNetwork {
    DelayedNetwork::new(
        vec!["X1".into(), "X2".into()],
        vec![
            Reaction::new(cx(&[(0, 1)]), cx(&[(1, 1)]), k.clone(), tau1),
            Reaction::new(cx(&[(1, 1)]), cx(&[(0, 1), (1, 1)]), k.clone(), tau2.clone()),
            Reaction::new(cx(&[(1, 1)]), Complex::zero(), k, tau2),
        ],
    )
}

pub fn two_species_line_witness(k: Rat) -> ConjugacyWitness {
    let target = DelayedNetwork::new(
        vec!["X1".into(), "X2".into()],
        vec![
            Reaction::new(cx(&[(0, 1)]), cx(&[(1, 1)]), k.clone(), Rat::zero()),
            Reaction::new(cx(&[(1, 1)]), cx(&[(0, 1)]), k, Rat::zero()),
        ],
    );
    ConjugacyWitness::identity(target)
}

/// The four initial points of the degenerate-kinase experiment. The first two
/// share one conserved level, the last two another.
pub const THETA: [[f64; 3]; 4] = [
    [0.1, 0.9, 11.2],
    [2.2, 0.7, 0.79],
    [0.1, 0.4, 2.61],
    [1.1, 0.2, 0.01],
];

/// Equilibria reached from the THETA points (first level, second level).
pub const THETA_EQUILIBRIA: [[f64; 3]; 2] = [
    [1.62, 2.6245, 2.6245],
    [0.8, 0.64, 0.64],
];

/// Conserved levels of the weighted functional on the two THETA level sets.
pub const THETA_LEVELS: [f64; 2] = [25.24, 6.56];
