//! Mass-action rate evaluation: the non-delayed and delayed right-hand sides,
//! the per-reactant / per-delay aggregate tables, and the one-dimensional
//! reaction frames used by the classifier.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::exact::{add_assign_scaled, is_zero_vec, span_basis, Rat};
use crate::net::{Complex, DelayedNetwork};
use num::traits::Zero;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticsError {
    #[error("missing delayed state for delay {0}")]
    MissingDelay(f64),
}

/// x^y with the convention 0^0 = 1, so the zero complex contributes rate k.
pub fn monomial(x: &[f64], y: &Complex) -> f64 {
    let mut acc = 1.0;
    for (s, c) in y.iter() {
        // Clip tiny negative undershoot from integration before powering.
        let base = if x[s] < 0.0 { 0.0 } else { x[s] };
        acc *= base.powi(c as i32);
    }
    acc
}

/// Non-delayed RHS: sum_i k_i x^{y_i} (y'_i - y_i).
pub fn ode_rhs(net: &DelayedNetwork, x: &[f64]) -> Vec<f64> {
    let n = net.n();
    let mut out = vec![0.0; n];
    for (i, rx) in net.reactions().iter().enumerate() {
        let flux = net.rate_f64(i) * monomial(x, &rx.reactant);
        for (s, c) in rx.product.iter() {
            out[s] += flux * c as f64;
        }
        for (s, c) in rx.reactant.iter() {
            out[s] -= flux * c as f64;
        }
    }
    out
}

/// Delayed RHS: production reads the state at t - tau_i, consumption the
/// current state. With every delayed state equal to the current one this
/// reduces exactly to `ode_rhs`.
pub fn dde_rhs(
    net: &DelayedNetwork,
    x_now: &[f64],
    x_delayed: &BTreeMap<u64, Vec<f64>>,
) -> Result<Vec<f64>, KineticsError> {
    let lookup = |tau: f64| -> Result<&Vec<f64>, KineticsError> {
        x_delayed.get(&tau.to_bits()).ok_or(KineticsError::MissingDelay(tau))
    };
    let n = net.n();
    let mut out = vec![0.0; n];
    for (i, rx) in net.reactions().iter().enumerate() {
        let tau = net.delay_f64(i);
        let x_past = if tau == 0.0 { x_now } else { lookup(tau)?.as_slice() };
        let k = net.rate_f64(i);
        let prod_flux = k * monomial(x_past, &rx.reactant);
        let cons_flux = k * monomial(x_now, &rx.reactant);
        for (s, c) in rx.product.iter() {
            out[s] += prod_flux * c as f64;
        }
        for (s, c) in rx.reactant.iter() {
            out[s] -= cons_flux * c as f64;
        }
    }
    Ok(out)
}

/// Key for a delayed-state map (delays compared exactly).
pub fn delay_key(tau: f64) -> u64 {
    tau.to_bits()
}

/// Per-reactant contribution f^(y) of the delayed RHS; the values sum to
/// `dde_rhs` because reactant grouping partitions the reactions.
pub fn dde_rhs_by_reactant(
    net: &DelayedNetwork,
    x_now: &[f64],
    x_delayed: &BTreeMap<u64, Vec<f64>>,
) -> Result<BTreeMap<Complex, Vec<f64>>, KineticsError> {
    let n = net.n();
    let mut out: BTreeMap<Complex, Vec<f64>> = BTreeMap::new();
    for (i, rx) in net.reactions().iter().enumerate() {
        let tau = net.delay_f64(i);
        let x_past = if tau == 0.0 {
            x_now
        } else {
            x_delayed.get(&tau.to_bits()).ok_or(KineticsError::MissingDelay(tau))?.as_slice()
        };
        let k = net.rate_f64(i);
        let entry = out.entry(rx.reactant.clone()).or_insert_with(|| vec![0.0; n]);
        let prod_flux = k * monomial(x_past, &rx.reactant);
        let cons_flux = k * monomial(x_now, &rx.reactant);
        for (s, c) in rx.product.iter() {
            entry[s] += prod_flux * c as f64;
        }
        for (s, c) in rx.reactant.iter() {
            entry[s] -= cons_flux * c as f64;
        }
    }
    Ok(out)
}

/// Exact aggregate vectors per reactant complex and per (reactant, delay):
/// Z-vectors sum rate-weighted reaction vectors, Y-vectors sum rate-weighted
/// product complexes.
#[derive(Debug, Clone, Default)]
pub struct AggregateTable {
    /// Z^(y) = sum_i k_i^(y) (y'_i - y).
    pub per_reactant: BTreeMap<Complex, Vec<Rat>>,
    /// Z^(y,tau).
    pub per_reactant_delay: BTreeMap<(Complex, Rat), Vec<Rat>>,
    /// Y^(y) = sum_i k_i^(y) y'_i.
    pub product_sums: BTreeMap<Complex, Vec<Rat>>,
    /// Y^(y,tau).
    pub product_sums_delay: BTreeMap<(Complex, Rat), Vec<Rat>>,
    /// Total rate per reactant: sum_i k_i^(y).
    pub rate_sums: BTreeMap<Complex, Rat>,
    /// Total rate per (reactant, delay): sum_i k_i^(y,tau).
    pub rate_sums_delay: BTreeMap<(Complex, Rat), Rat>,
}

pub fn aggregates(net: &DelayedNetwork) -> AggregateTable {
    let n = net.n();
    let mut t = AggregateTable::default();
    for rx in net.reactions() {
        let y = rx.reactant.clone();
        let key = (y.clone(), rx.delay.clone());
        let v = rx.vector(n);
        let yp = rx.product.dense_rat(n);
        let z = t.per_reactant.entry(y.clone()).or_insert_with(|| vec![Rat::zero(); n]);
        add_assign_scaled(z, &v, &rx.rate);
        let zt = t.per_reactant_delay.entry(key.clone()).or_insert_with(|| vec![Rat::zero(); n]);
        add_assign_scaled(zt, &v, &rx.rate);
        let p = t.product_sums.entry(y.clone()).or_insert_with(|| vec![Rat::zero(); n]);
        add_assign_scaled(p, &yp, &rx.rate);
        let pt = t.product_sums_delay.entry(key.clone()).or_insert_with(|| vec![Rat::zero(); n]);
        add_assign_scaled(pt, &yp, &rx.rate);
        *t.rate_sums.entry(y.clone()).or_insert_with(Rat::zero) += &rx.rate;
        *t.rate_sums_delay.entry(key).or_insert_with(Rat::zero) += &rx.rate;
    }
    t
}

impl AggregateTable {
    pub fn z(&self, y: &Complex, n: usize) -> Vec<Rat> {
        self.per_reactant.get(y).cloned().unwrap_or_else(|| vec![Rat::zero(); n])
    }

    /// Distinct delays appearing for reactant y, in key order.
    pub fn delays_for(&self, y: &Complex) -> Vec<Rat> {
        self.per_reactant_delay.keys().filter(|(c, _)| c == y).map(|(_, t)| t.clone()).collect()
    }
}

/// One-dimensional frame of a reactant complex: all reaction vectors with
/// reactant y are multiples a_i of a single direction w.
#[derive(Debug, Clone)]
pub enum ReactantFrame {
    OneDim { w: Vec<Rat>, coefficients: BTreeMap<usize, Rat> },
    /// Only self-loops: every reaction vector is zero.
    ZeroSpan { coefficients: BTreeMap<usize, Rat> },
    NotOneDim,
}

/// Frame of span{v_i : reactant(i) = y}, with w normalized so its first
/// nonzero component is 1. Returns NotOneDim when the span exceeds one
/// dimension.
pub fn one_dim_frame(net: &DelayedNetwork, y: &Complex) -> ReactantFrame {
    let n = net.n();
    let members: Vec<usize> = net
        .reactions()
        .iter()
        .enumerate()
        .filter(|(_, rx)| &rx.reactant == y)
        .map(|(i, _)| i)
        .collect();
    let vectors: Vec<Vec<Rat>> = members.iter().map(|&i| net.reactions()[i].vector(n)).collect();
    let basis = span_basis(&vectors);
    match basis.len() {
        0 => {
            let coefficients = members.into_iter().map(|i| (i, Rat::zero())).collect();
            ReactantFrame::ZeroSpan { coefficients }
        }
        1 => {
            let w = basis.into_iter().next().unwrap();
            // RREF row already has leading entry 1 (first nonzero = 1).
            let lead = w.iter().position(|x| !x.is_zero()).unwrap();
            let coefficients = members
                .iter()
                .zip(&vectors)
                .map(|(&i, v)| (i, v[lead].clone()))
                .collect();
            ReactantFrame::OneDim { w, coefficients }
        }
        _ => ReactantFrame::NotOneDim,
    }
}

/// Coefficient of `v` along the frame direction `w`; None when `v` is not a
/// multiple of `w`.
pub fn coefficient_along(w: &[Rat], v: &[Rat]) -> Option<Rat> {
    if is_zero_vec(v) {
        return Some(Rat::zero());
    }
    let lead = w.iter().position(|x| !x.is_zero())?;
    let a = v[lead].clone() / w[lead].clone();
    let consistent = w
        .iter()
        .zip(v)
        .all(|(wj, vj)| (&a * wj - vj).is_zero());
    consistent.then_some(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_array, rat_i, rat_to_f64};
    use crate::fixtures;
    use num::traits::Signed;
    use crate::net::parse_network;

    #[test]
    fn monomial_conventions() {
        let y = Complex::from_pairs(&[(0, 1), (1, 2)]);
        assert_eq!(monomial(&[2.0, 3.0], &y), 18.0);
        assert_eq!(monomial(&[5.0, 7.0], &Complex::zero()), 1.0);
        let y2 = Complex::from_pairs(&[(0, 2)]);
        assert_eq!(monomial(&[0.0, 5.0], &y2), 0.0);
    }

    #[test]
    fn birth_death_equilibrium_rhs_vanishes() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat(1, 2));
        // x_bar = sqrt(k2/k1) = 1.
        let rhs = ode_rhs(&net, &[1.0]);
        assert!(rhs[0].abs() < 1e-14);
    }

    #[test]
    fn empty_network_rhs_is_zero() {
        let net = parse_network("species A B").unwrap();
        assert_eq!(ode_rhs(&net, &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn dde_reduces_to_ode_on_constant_history() {
        let net = fixtures::cubic_branch(rat_i(1), &[rat(1, 2), rat(7, 10), rat(9, 10), rat(11, 10), rat(13, 10)]);
        let x = vec![1.3, 0.8, 2.1];
        let mut delayed = BTreeMap::new();
        for tau in net.distinct_delays() {
            delayed.insert(delay_key(rat_to_f64(&tau)), x.clone());
        }
        let a = dde_rhs(&net, &x, &delayed).unwrap();
        let b = ode_rhs(&net, &x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn birth_death_delayed_rhs_hand_value() {
        // x1' = k1 x^2(t-tau) - 2 k1 x^2(t) + k2 at x_now=1, x(t-tau)=2: 4 - 2 + 1 = 3.
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let mut delayed = BTreeMap::new();
        delayed.insert(delay_key(1.0), vec![2.0]);
        let rhs = dde_rhs(&net, &[1.0], &delayed).unwrap();
        assert!((rhs[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn self_loop_at_rest_is_zero() {
        let net = parse_network("species A\nreaction A -> A : k=1 tau=1").unwrap();
        let mut delayed = BTreeMap::new();
        delayed.insert(delay_key(1.0), vec![1.7]);
        let rhs = dde_rhs(&net, &[1.7], &delayed).unwrap();
        assert_eq!(rhs, vec![0.0]);
    }

    #[test]
    fn missing_delay_is_an_error() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let err = dde_rhs(&net, &[1.0], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, KineticsError::MissingDelay(_)));
    }

    #[test]
    fn cubic_branch_aggregates_match_hand_expansion() {
        // Z^(3A) = k[(-1,1,0) + (-1,0,1) + (-2,1,1)] = k(-4,2,2).
        let net = fixtures::cubic_branch(rat_i(1), &rat_array::<5>(0, 1));
        let t = aggregates(&net);
        let y3a = Complex::from_pairs(&[(0, 3)]);
        assert_eq!(t.per_reactant[&y3a], vec![rat_i(-4), rat_i(2), rat_i(2)]);
        // Target side: k(-2,2,0) + (2k/3)(-3,0,3) = k(-4,2,2).
        let tgt = fixtures::cubic_branch_target(rat_i(1));
        let tt = aggregates(&tgt);
        assert_eq!(tt.per_reactant[&y3a], t.per_reactant[&y3a]);
    }

    #[test]
    fn equivalent_networks_share_the_ode_rhs() {
        let net = fixtures::cubic_branch(rat_i(1), &rat_array::<5>(0, 1));
        let target = fixtures::cubic_branch_target(rat_i(1));
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..2.5)).collect();
            let a = ode_rhs(&net, &x);
            let b = ode_rhs(&target, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_reaction_aggregate_is_rate_times_vector() {
        let net = parse_network("species A B\nreaction A -> B : k=3/2 tau=0").unwrap();
        let t = aggregates(&net);
        let y = Complex::from_pairs(&[(0, 1)]);
        assert_eq!(t.per_reactant[&y], vec![rat(-3, 2), rat(3, 2)]);
    }

    #[test]
    fn delay_sums_recover_totals_exactly() {
        let net = fixtures::cubic_branch(rat_i(1), &[rat(1, 2), rat(7, 10), rat(1, 2), rat(11, 10), rat(13, 10)]);
        let t = aggregates(&net);
        for (y, z) in &t.per_reactant {
            let mut acc = vec![Rat::zero(); net.n()];
            let mut yacc = vec![Rat::zero(); net.n()];
            for ((yy, _), zt) in &t.per_reactant_delay {
                if yy == y {
                    for (a, b) in acc.iter_mut().zip(zt) {
                        *a += b;
                    }
                }
            }
            for ((yy, _), yt) in &t.product_sums_delay {
                if yy == y {
                    for (a, b) in yacc.iter_mut().zip(yt) {
                        *a += b;
                    }
                }
            }
            assert_eq!(&acc, z);
            assert_eq!(&yacc, &t.product_sums[y]);
            // Y-vectors are componentwise nonnegative.
            assert!(t.product_sums[y].iter().all(|x| !x.is_negative()));
        }
    }

    #[test]
    fn grouped_rhs_sums_to_total() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let net = fixtures::cubic_branch(rat_i(1), &[rat(1, 2), rat(7, 10), rat(9, 10), rat(11, 10), rat(13, 10)]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..2.0)).collect();
            let mut delayed = BTreeMap::new();
            for tau in net.distinct_delays() {
                let xd: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..2.0)).collect();
                delayed.insert(delay_key(rat_to_f64(&tau)), xd);
            }
            let total = dde_rhs(&net, &x, &delayed).unwrap();
            let grouped = dde_rhs_by_reactant(&net, &x, &delayed).unwrap();
            let mut sum = vec![0.0; 3];
            for v in grouped.values() {
                for (a, b) in sum.iter_mut().zip(v) {
                    *a += b;
                }
            }
            for (a, b) in sum.iter().zip(&total) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn frames_on_cubic_branch() {
        let net = fixtures::cubic_branch(rat_i(1), &rat_array::<5>(0, 1));
        // 3C has a single reaction: one-dimensional with nonzero coefficient.
        let y3c = Complex::from_pairs(&[(2, 3)]);
        match one_dim_frame(&net, &y3c) {
            ReactantFrame::OneDim { w, coefficients } => {
                assert_eq!(w, vec![rat_i(1), rat_i(0), rat_i(-1)]);
                assert_eq!(coefficients[&3], rat_i(2));
            }
            other => panic!("expected 1-dim frame, got {other:?}"),
        }
        // 3A has independent reaction vectors.
        let y3a = Complex::from_pairs(&[(0, 3)]);
        assert!(matches!(one_dim_frame(&net, &y3a), ReactantFrame::NotOneDim));
        // Self-loop-only reactant has zero span.
        let loop_net = parse_network("species A\nreaction A -> A : k=1 tau=1").unwrap();
        let ya = Complex::from_pairs(&[(0, 1)]);
        assert!(matches!(one_dim_frame(&loop_net, &ya), ReactantFrame::ZeroSpan { .. }));
    }
}
