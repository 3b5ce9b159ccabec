//! Stability classification: decides which decomposition route applies to a
//! delayed network relative to its complex-balanced witness target, and emits
//! the split rate constants the Lyapunov construction consumes.
//!
//! Route order (cheapest, most specific first): literal delay transport onto
//! the target, then the same-delay-per-reactant split, then the
//! single-species route with the diagonal transform, then the cone split,
//! then the one-dimensional sign split.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::conjugacy::{check_linear_conjugacy, kbar_rate, ConjugacyKind};
use crate::exact::{
    format_rat, is_zero_vec, nonneg_min_sum_solve, one_norm, rat_to_f64, Rat,
};
use crate::kinetics::{aggregates, coefficient_along, delay_key, one_dim_frame, ReactantFrame};
use crate::net::{Complex, ConjugacyWitness, DelayedNetwork};
use crate::structure::{complex_graph, deficiency, is_weakly_reversible};
use num::traits::{One, Signed, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremTag {
    LcDcbmas,
    Thm1,
    Thm2Case1,
    Thm2Case2,
    Cor1Case1,
    Cor1Case2,
    Thm3,
    None,
}

/// One delayed slice of a target reaction: rate in the target's own units
/// (k~ form); the transform-scaled form is recovered via L when evaluating.
#[derive(Debug, Clone)]
pub struct QuasiRate {
    pub target_reaction: usize,
    pub delay: Rat,
    pub rate: Rat,
}

/// A self-loop term K^(y,tau) (x^y(t-tau) - x^y(t)) y.
#[derive(Debug, Clone)]
pub struct LoopTerm {
    pub complex: Complex,
    pub delay: Rat,
    pub coeff: Rat,
}

/// Cone split refined per source reaction, recorded when every individual
/// source reaction vector already lies in the target cone.
#[derive(Debug, Clone)]
pub struct SlotRate {
    pub target_reaction: usize,
    pub source_reaction: usize,
    pub rate: Rat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    None,
    ZeroByConstruction,
}

/// Constructive RHS decomposition: delayed target reactions plus loop terms
/// reproduce the source dynamics pointwise.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub quasi_rates: Vec<QuasiRate>,
    pub loop_terms: Vec<LoopTerm>,
    pub slot_rates: Option<Vec<SlotRate>>,
    pub l_transform: Vec<Rat>,
    /// Per-target-reaction totals the quasi rates sum to. Equal to the
    /// witness rates except on the reweighted-target route.
    pub effective_target_rates: Vec<Rat>,
    pub residual_kind: ResidualKind,
    /// delta_j^(y,tau) tables from the single-species route (standard
    /// normalization; the modified self-species entries are kept apart).
    pub delta_tables: BTreeMap<Complex, BTreeMap<(usize, Rat), Rat>>,
}

impl Decomposition {
    fn new(l: Vec<Rat>, target_rates: Vec<Rat>) -> Self {
        Decomposition {
            quasi_rates: Vec::new(),
            loop_terms: Vec::new(),
            slot_rates: None,
            l_transform: l,
            effective_target_rates: target_rates,
            residual_kind: ResidualKind::ZeroByConstruction,
            delta_tables: BTreeMap::new(),
        }
    }

    /// Sum of quasi rates per target reaction.
    pub fn quasi_sums(&self, r: usize) -> Vec<Rat> {
        let mut sums = vec![Rat::zero(); r];
        for q in &self.quasi_rates {
            sums[q.target_reaction] += &q.rate;
        }
        sums
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rejection {
    pub route: String,
    pub reason: String,
}

/// Norm comparison row of the rate-weighted average reaction vectors.
#[derive(Debug, Clone)]
pub struct HfEntry {
    pub reactant: Complex,
    pub delay: Rat,
    pub avg_norm: Rat,
    pub min_target_norm: Option<Rat>,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub theorem: TheoremTag,
    pub decomposition: Option<Decomposition>,
    pub witness: ConjugacyWitness,
    pub notes: Vec<String>,
    pub rejections: Vec<Rejection>,
}

impl StabilityCertificate {
    pub fn accepted(&self) -> bool {
        self.theorem != TheoremTag::None
    }

    pub fn to_json(&self, source: &DelayedNetwork) -> serde_json::Value {
        let species = source.species();
        let dec = self.decomposition.as_ref();
        let quasi: Vec<serde_json::Value> = dec
            .map(|d| {
                d.quasi_rates
                    .iter()
                    .map(|q| {
                        serde_json::json!({
                            "target_reaction": q.target_reaction,
                            "delay": format_rat(&q.delay),
                            "rate": format_rat(&q.rate),
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        let loops: Vec<serde_json::Value> = dec
            .map(|d| {
                d.loop_terms
                    .iter()
                    .map(|t| {
                        serde_json::json!({
                            "complex": t.complex.format_with(species),
                            "delay": format_rat(&t.delay),
                            "coeff": format_rat(&t.coeff),
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        serde_json::json!({
            "theorem": self.theorem,
            "witness": {
                "l": self.witness.l.iter().map(format_rat).collect::<Vec<_>>(),
                "target": crate::net::serialize_network(&self.witness.target),
            },
            "quasi_rates": quasi,
            "loop_terms": loops,
            "rejections": self.rejections,
            "notes": self.notes,
        })
    }
}

fn reject(route: &str, reason: impl Into<String>) -> Rejection {
    Rejection { route: route.to_string(), reason: reason.into() }
}

/// Distinct delays on source reactions with the given reactant.
fn delays_for_reactant(net: &DelayedNetwork, y: &Complex) -> Vec<Rat> {
    let mut out: Vec<Rat> = Vec::new();
    for rx in net.reactions() {
        if &rx.reactant == y && !out.contains(&rx.delay) {
            out.push(rx.delay.clone());
        }
    }
    out.sort();
    out
}

fn target_groups(target: &DelayedNetwork) -> BTreeMap<Complex, Vec<usize>> {
    target.reactant_groups()
}

fn require_conjugate(
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
    route: &str,
) -> Result<(), Rejection> {
    match check_linear_conjugacy(source, witness, tol) {
        Ok(rep) if rep.kind != ConjugacyKind::Neither => Ok(()),
        Ok(rep) => Err(reject(route, format!("witness fails the conjugacy relation (residual {:.3e})", rep.residual_max))),
        Err(e) => Err(reject(route, e.to_string())),
    }
}

/// Full-rate delay-zero entries for target reactions whose reactant never
/// fires in the source; their net contribution is zero by the conjugacy
/// relation, which we assert exactly.
fn push_unsourced_targets(
    dec: &mut Decomposition,
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    route: &str,
) -> Result<(), Rejection> {
    let n = source.n();
    let src_groups = source.reactant_groups();
    for (y, members) in target_groups(&witness.target) {
        if src_groups.contains_key(&y) {
            continue;
        }
        let mut net_flow = vec![Rat::zero(); n];
        for &ti in &members {
            let rx = &witness.target.reactions()[ti];
            let kbar = kbar_rate(&rx.rate, &y, &witness.l);
            let mut dir = rx.vector(n);
            for (j, d) in dir.iter_mut().enumerate() {
                *d *= &witness.l[j];
            }
            for (acc, d) in net_flow.iter_mut().zip(&dir) {
                *acc += &kbar * d;
            }
            dec.quasi_rates.push(QuasiRate {
                target_reaction: ti,
                delay: Rat::zero(),
                rate: rx.rate.clone(),
            });
        }
        if !is_zero_vec(&net_flow) {
            return Err(reject(route, "target reactions from an unsourced reactant do not cancel"));
        }
    }
    Ok(())
}

/// Literal delay transport: accepts when every target reaction can carry
/// exactly one source delay with no leftover loop terms, i.e. the delayed
/// source *is* the delayed target up to the diagonal transform.
pub fn check_lcdcbmas(
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
) -> Result<StabilityCertificate, Rejection> {
    const ROUTE: &str = "lcdcbmas";
    require_conjugate(source, witness, tol, ROUTE)?;
    let n = source.n();
    let agg = aggregates(source);
    let mut dec = Decomposition::new(
        witness.l.clone(),
        witness.target.reactions().iter().map(|rx| rx.rate.clone()).collect(),
    );
    let tgroups = target_groups(&witness.target);
    for (y, _) in source.reactant_groups() {
        let delays = delays_for_reactant(source, &y);
        let tau = match delays.as_slice() {
            [single] => single.clone(),
            _ => {
                return Err(reject(
                    ROUTE,
                    format!("reactant carries {} distinct delays; literal transport needs one", delays.len()),
                ))
            }
        };
        let members = tgroups.get(&y).cloned().unwrap_or_default();
        if members.is_empty() {
            if is_zero_vec(&agg.z(&y, n)) && tau.is_zero() {
                continue; // pure cancellation at zero delay contributes nothing
            }
            return Err(reject(ROUTE, "source reactant has no matching target reaction"));
        }
        if !tau.is_zero() {
            // Production must transport exactly: sum_i k_i y'_i = sum kbar L y~'.
            let mut lhs = agg.product_sums[&y].clone();
            for &ti in &members {
                let rx = &witness.target.reactions()[ti];
                let kbar = kbar_rate(&rx.rate, &y, &witness.l);
                for (j, c) in rx.product.iter() {
                    lhs[j] -= &kbar * &witness.l[j] * Rat::from_integer(c.into());
                }
            }
            if !is_zero_vec(&lhs) {
                return Err(reject(ROUTE, "delayed production does not transport onto the target reactions"));
            }
            // Consumption must transport too; with production matched this
            // reduces to rate-mass balance through L on the reactant.
            let total_k = agg.rate_sums[&y].clone();
            let mut tgt_cons = vec![Rat::zero(); n];
            for &ti in &members {
                let rx = &witness.target.reactions()[ti];
                let kbar = kbar_rate(&rx.rate, &y, &witness.l);
                for (j, c) in y.iter() {
                    tgt_cons[j] += &kbar * &witness.l[j] * Rat::from_integer(c.into());
                }
            }
            let mut src_cons = vec![Rat::zero(); n];
            for (j, c) in y.iter() {
                src_cons[j] = &total_k * Rat::from_integer(c.into());
            }
            if src_cons != tgt_cons {
                return Err(reject(ROUTE, "delayed consumption does not transport onto the target reactions"));
            }
        }
        for &ti in &members {
            dec.quasi_rates.push(QuasiRate {
                target_reaction: ti,
                delay: tau.clone(),
                rate: witness.target.reactions()[ti].rate.clone(),
            });
        }
    }
    push_unsourced_targets(&mut dec, source, witness, ROUTE)?;
    Ok(StabilityCertificate {
        theorem: TheoremTag::LcDcbmas,
        decomposition: Some(dec),
        witness: witness.clone(),
        notes: vec!["each target reaction carries exactly one transported delay".into()],
        rejections: Vec::new(),
    })
}

/// Same-delay-per-reactant split: target reactions keep their full rates at
/// the transported delay and the surplus rate mass K^(y) >= 0 becomes a
/// self-loop term.
pub fn check_thm1(
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
) -> Result<StabilityCertificate, Rejection> {
    const ROUTE: &str = "thm1";
    if !witness.is_identity_l() {
        return Err(reject(ROUTE, "route requires an identity transform (dynamic equivalence)"));
    }
    require_conjugate(source, witness, tol, ROUTE)?;
    let agg = aggregates(source);
    let tgt_agg = aggregates(&witness.target);
    let tgroups = target_groups(&witness.target);
    let mut dec = Decomposition::new(
        witness.l.clone(),
        witness.target.reactions().iter().map(|rx| rx.rate.clone()).collect(),
    );
    for (y, _) in source.reactant_groups() {
        let delays = delays_for_reactant(source, &y);
        let tau = match delays.as_slice() {
            [single] => single.clone(),
            _ => return Err(reject(ROUTE, format!("mixed delays for reactant {:?}", format_complex(source, &y)))),
        };
        let k_total = agg.rate_sums[&y].clone();
        let kt_total = tgt_agg.rate_sums.get(&y).cloned().unwrap_or_else(Rat::zero);
        let surplus = &k_total - &kt_total;
        if surplus.is_negative() {
            return Err(reject(
                ROUTE,
                format!("K^(y) < 0 for reactant {:?}: target rate mass exceeds the source's", format_complex(source, &y)),
            ));
        }
        for &ti in tgroups.get(&y).map(|v| v.as_slice()).unwrap_or(&[]) {
            dec.quasi_rates.push(QuasiRate {
                target_reaction: ti,
                delay: tau.clone(),
                rate: witness.target.reactions()[ti].rate.clone(),
            });
        }
        if !surplus.is_zero() {
            dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau, coeff: surplus });
        }
    }
    push_unsourced_targets(&mut dec, source, witness, ROUTE)?;
    Ok(StabilityCertificate {
        theorem: TheoremTag::Thm1,
        decomposition: Some(dec),
        witness: witness.clone(),
        notes: Vec::new(),
        rejections: Vec::new(),
    })
}

fn format_complex(net: &DelayedNetwork, y: &Complex) -> String {
    y.format_with(net.species())
}

/// Rate-weighted average reaction vector norms against the minimum nonzero
/// target vector norm, per (reactant, delay). All norms exact.
pub fn check_hf(source: &DelayedNetwork, target: &DelayedNetwork) -> (bool, Vec<HfEntry>) {
    let n = source.n();
    let tgroups = target_groups(target);
    let mut entries = Vec::new();
    let mut all_ok = true;
    for (y, _members) in source.reactant_groups() {
        let min_target_norm: Option<Rat> = tgroups
            .get(&y)
            .map(|tis| {
                tis.iter()
                    .filter_map(|&ti| {
                        let v = target.reactions()[ti].vector(n);
                        (!is_zero_vec(&v)).then(|| one_norm(&v))
                    })
                    .min()
            })
            .unwrap_or(None);
        for tau in delays_for_reactant(source, &y) {
            let mut num = vec![Rat::zero(); n];
            let mut den = Rat::zero();
            for (i, rx) in source.reactions().iter().enumerate() {
                if rx.reactant == y && rx.delay == tau {
                    let v = source.reactions()[i].vector(n);
                    for (a, b) in num.iter_mut().zip(&v) {
                        *a += &rx.rate * b;
                    }
                    den += &rx.rate;
                }
            }
            if is_zero_vec(&num) {
                continue; // only self-loops at this delay
            }
            let avg_norm = one_norm(&num) / den;
            let ok = match &min_target_norm {
                Some(m) => avg_norm <= *m,
                None => true,
            };
            all_ok &= ok;
            entries.push(HfEntry { reactant: y.clone(), delay: tau, avg_norm, min_target_norm: min_target_norm.clone(), ok });
        }
    }
    (all_ok, entries)
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("no positive direction available among target reactions")]
    NoPositiveDirection,
    #[error("no negative direction available among target reactions")]
    NoNegativeDirection,
}

/// Sign-split coefficients: for each delay with scalar aggregate z, scale the
/// same-signed target rates so their directional sums reproduce z exactly.
/// `targets` lists (reaction index, direction coefficient, rate).
pub fn split_sign_coefficients(
    z_by_delay: &BTreeMap<Rat, Rat>,
    targets: &[(usize, Rat, Rat)],
) -> Result<BTreeMap<(Rat, usize), Rat>, SplitError> {
    let z_plus: Rat = targets
        .iter()
        .filter(|(_, a, _)| a.is_positive())
        .map(|(_, a, k)| a * k)
        .fold(Rat::zero(), |s, t| s + t);
    let z_minus: Rat = targets
        .iter()
        .filter(|(_, a, _)| a.is_negative())
        .map(|(_, a, k)| (a * k).abs())
        .fold(Rat::zero(), |s, t| s + t);
    let mut out = BTreeMap::new();
    for (tau, z) in z_by_delay {
        if z.is_zero() {
            continue;
        }
        if z.is_positive() {
            if z_plus.is_zero() {
                return Err(SplitError::NoPositiveDirection);
            }
            let delta = z / &z_plus;
            for (ti, a, k) in targets {
                if a.is_positive() {
                    out.insert((tau.clone(), *ti), &delta * k);
                }
            }
        } else {
            if z_minus.is_zero() {
                return Err(SplitError::NoNegativeDirection);
            }
            let delta = z.abs() / &z_minus;
            for (ti, a, k) in targets {
                if a.is_negative() {
                    out.insert((tau.clone(), *ti), &delta * k);
                }
            }
        }
    }
    Ok(out)
}

/// One-dimensional sign route. Same-signed delay aggregates split the target
/// rates proportionally; mixed signs fall back to the sign-split against a
/// weakly reversible deficiency-zero target.
pub fn check_thm2(
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
) -> Result<StabilityCertificate, Rejection> {
    const ROUTE: &str = "thm2";
    if !witness.is_identity_l() {
        return Err(reject(ROUTE, "route requires an identity transform (dynamic equivalence)"));
    }
    require_conjugate(source, witness, tol, ROUTE)?;
    let target = &witness.target;
    let n = source.n();
    let (hf_ok, _) = check_hf(source, target);
    if !hf_ok {
        return Err(reject(ROUTE, "rate-weighted average vector norms exceed the target minimum"));
    }
    let tgroups = target_groups(target);
    let mut dec = Decomposition::new(
        witness.l.clone(),
        target.reactions().iter().map(|rx| rx.rate.clone()).collect(),
    );
    let graph = complex_graph(target);
    let target_wr_zero = is_weakly_reversible(&graph) && deficiency(target) == 0;
    let mut used_sign_split = false;
    for (y, members) in source.reactant_groups() {
        // Frame over the combined source and target vectors for this reactant.
        let mut vectors: Vec<Vec<Rat>> = members.iter().map(|&i| source.reactions()[i].vector(n)).collect();
        let t_members = tgroups.get(&y).cloned().unwrap_or_default();
        for &ti in &t_members {
            vectors.push(target.reactions()[ti].vector(n));
        }
        let basis = crate::exact::span_basis(&vectors);
        if basis.len() > 1 {
            return Err(reject(ROUTE, format!("reaction vectors of reactant {:?} span more than one dimension", format_complex(source, &y))));
        }
        if basis.is_empty() {
            // Self-loops only on both sides: pure loop terms.
            for tau in delays_for_reactant(source, &y) {
                let k_tau: Rat = members
                    .iter()
                    .filter(|&&i| source.reactions()[i].delay == tau)
                    .map(|&i| source.reactions()[i].rate.clone())
                    .fold(Rat::zero(), |s, t| s + t);
                dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau, coeff: k_tau });
            }
            for &ti in &t_members {
                dec.quasi_rates.push(QuasiRate { target_reaction: ti, delay: Rat::zero(), rate: target.reactions()[ti].rate.clone() });
            }
            continue;
        }
        let w = &basis[0];
        let coeff_of = |v: &[Rat]| coefficient_along(w, v);
        // Scalar aggregates per delay.
        let mut z_by_delay: BTreeMap<Rat, Rat> = BTreeMap::new();
        let mut k_by_delay: BTreeMap<Rat, Rat> = BTreeMap::new();
        for &i in &members {
            let rx = &source.reactions()[i];
            let a = coeff_of(&rx.vector(n)).expect("vector inside its own span");
            *z_by_delay.entry(rx.delay.clone()).or_insert_with(Rat::zero) += &rx.rate * a;
            *k_by_delay.entry(rx.delay.clone()).or_insert_with(Rat::zero) += &rx.rate;
        }
        let z_total: Rat = z_by_delay.values().fold(Rat::zero(), |s, t| s + &t.clone());
        let targets: Vec<(usize, Rat, Rat)> = t_members
            .iter()
            .map(|&ti| {
                let rx = &target.reactions()[ti];
                let a = coeff_of(&rx.vector(n)).expect("target vector inside the frame span");
                (ti, a, rx.rate.clone())
            })
            .collect();
        let same_sign = z_by_delay.values().all(|z| z.is_zero() || z.signum() == z_total.signum());
        if same_sign && !z_total.is_zero() {
            // Proportional split of every target rate across the delays.
            for (tau, z) in &z_by_delay {
                let delta = z / &z_total;
                let mut quasi_mass = Rat::zero();
                for (ti, _, k) in &targets {
                    let rate = &delta * k;
                    quasi_mass += &rate;
                    if !rate.is_zero() {
                        dec.quasi_rates.push(QuasiRate { target_reaction: *ti, delay: tau.clone(), rate });
                    }
                }
                let k_mass = k_by_delay[tau].clone();
                let loop_coeff = &k_mass - &quasi_mass;
                if loop_coeff.is_negative() {
                    return Err(reject(ROUTE, format!("negative loop coefficient at reactant {:?}, delay {}", format_complex(source, &y), format_rat(tau))));
                }
                if !loop_coeff.is_zero() {
                    dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau.clone(), coeff: loop_coeff });
                }
            }
        } else if z_total.is_zero() && z_by_delay.values().all(|z| z.is_zero()) {
            // Cancelling production per delay: every delay is a pure loop.
            for (tau, k_mass) in &k_by_delay {
                dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau.clone(), coeff: k_mass.clone() });
            }
            for (ti, _, k) in &targets {
                dec.quasi_rates.push(QuasiRate { target_reaction: *ti, delay: Rat::zero(), rate: k.clone() });
            }
            continue;
        } else {
            // Mixed signs: sign split against a weakly reversible
            // deficiency-zero target.
            let has_pos = targets.iter().any(|(_, a, _)| a.is_positive());
            let has_neg = targets.iter().any(|(_, a, _)| a.is_negative());
            if z_by_delay.values().any(|z| z.is_positive()) && !has_pos {
                return Err(reject(ROUTE, format!("no positive direction among target reactions of {:?}", format_complex(source, &y))));
            }
            if z_by_delay.values().any(|z| z.is_negative()) && !has_neg {
                return Err(reject(ROUTE, format!("no negative direction among target reactions of {:?}", format_complex(source, &y))));
            }
            if !target_wr_zero {
                return Err(reject(ROUTE, "sign split requires a weakly reversible zero-deficiency target"));
            }
            used_sign_split = true;
            let split = split_sign_coefficients(&z_by_delay, &targets).map_err(|e| reject(ROUTE, e.to_string()))?;
            // Loop coefficients per delay: source rate mass minus the split mass.
            for (tau, k_mass) in &k_by_delay {
                let split_mass: Rat = split
                    .iter()
                    .filter(|((t, _), _)| t == tau)
                    .map(|(_, c)| c.clone())
                    .fold(Rat::zero(), |s, t| s + t);
                let loop_coeff = k_mass - &split_mass;
                if loop_coeff.is_negative() {
                    return Err(reject(ROUTE, format!("negative loop coefficient at reactant {:?}, delay {}", format_complex(source, &y), format_rat(tau))));
                }
                if !loop_coeff.is_zero() {
                    dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau.clone(), coeff: loop_coeff });
                }
            }
            // Delay-zero remainders complete each target rate; when some
            // remainder is negative the target is reweighted instead (same
            // graph, rescaled rates) and the effective totals record that.
            let mut split_sums: BTreeMap<usize, Rat> = BTreeMap::new();
            for ((_, ti), c) in &split {
                *split_sums.entry(*ti).or_insert_with(Rat::zero) += c;
            }
            let any_negative_remainder = targets
                .iter()
                .any(|(ti, _, k)| (k - split_sums.get(ti).cloned().unwrap_or_else(Rat::zero)).is_negative());
            for ((tau, ti), c) in &split {
                if !c.is_zero() {
                    dec.quasi_rates.push(QuasiRate { target_reaction: *ti, delay: tau.clone(), rate: c.clone() });
                }
            }
            if any_negative_remainder {
                for (ti, _, _) in &targets {
                    dec.effective_target_rates[*ti] =
                        split_sums.get(ti).cloned().unwrap_or_else(Rat::zero);
                }
                dec.residual_kind = ResidualKind::ZeroByConstruction;
            } else {
                // Remainders cancel along the frame direction; assert exactly.
                let mut along = Rat::zero();
                for (ti, a, k) in &targets {
                    let rem = k - split_sums.get(ti).cloned().unwrap_or_else(Rat::zero);
                    along += &rem * a;
                    if !rem.is_zero() {
                        dec.quasi_rates.push(QuasiRate { target_reaction: *ti, delay: Rat::zero(), rate: rem });
                    }
                }
                if !along.is_zero() {
                    return Err(reject(ROUTE, "internal: delay-zero remainders do not cancel"));
                }
            }
        }
    }
    push_unsourced_targets(&mut dec, source, witness, ROUTE)?;
    Ok(StabilityCertificate {
        theorem: if used_sign_split { TheoremTag::Thm2Case2 } else { TheoremTag::Thm2Case1 },
        decomposition: Some(dec),
        witness: witness.clone(),
        notes: Vec::new(),
        rejections: Vec::new(),
    })
}

/// Cone route: each per-delay aggregate vector must be a nonnegative
/// combination of the target reaction vectors from the same reactant.
pub fn check_cor1(
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
) -> Result<StabilityCertificate, Rejection> {
    const ROUTE: &str = "cor1";
    if !witness.is_identity_l() {
        return Err(reject(ROUTE, "route requires an identity transform (dynamic equivalence)"));
    }
    require_conjugate(source, witness, tol, ROUTE)?;
    let target = &witness.target;
    let n = source.n();
    let (hf_ok, _) = check_hf(source, target);
    if !hf_ok {
        return Err(reject(ROUTE, "rate-weighted average vector norms exceed the target minimum"));
    }
    let tgroups = target_groups(target);
    let agg = aggregates(source);
    let mut all_independent = true;
    let mut dec = Decomposition::new(
        witness.l.clone(),
        target.reactions().iter().map(|rx| rx.rate.clone()).collect(),
    );
    let mut slot_rates: Vec<SlotRate> = Vec::new();
    let mut slots_ok = true;
    for (y, members) in source.reactant_groups() {
        let t_members = tgroups.get(&y).cloned().unwrap_or_default();
        let mut moving: Vec<usize> = Vec::new();
        let mut cols: Vec<Vec<Rat>> = Vec::new();
        for &ti in &t_members {
            let v = target.reactions()[ti].vector(n);
            if is_zero_vec(&v) {
                // Target self-loop: contributes nothing; keep its rate at zero delay.
                dec.quasi_rates.push(QuasiRate { target_reaction: ti, delay: Rat::zero(), rate: target.reactions()[ti].rate.clone() });
            } else {
                moving.push(ti);
                cols.push(v);
            }
        }
        if !cols.is_empty() {
            let rank = crate::exact::RatMat::from_cols(&cols).rank();
            if rank < cols.len() {
                all_independent = false;
            }
        }
        let mut e_sums: BTreeMap<usize, Rat> = BTreeMap::new();
        for tau in delays_for_reactant(source, &y) {
            let z = agg
                .per_reactant_delay
                .get(&(y.clone(), tau.clone()))
                .cloned()
                .unwrap_or_else(|| vec![Rat::zero(); n]);
            let e = nonneg_min_sum_solve(&cols, &z).ok_or_else(|| {
                reject(ROUTE, format!(
                    "cone membership infeasible at reactant {:?}, delay {}",
                    format_complex(source, &y),
                    format_rat(&tau)
                ))
            })?;
            let k_mass: Rat = members
                .iter()
                .filter(|&&i| source.reactions()[i].delay == tau)
                .map(|&i| source.reactions()[i].rate.clone())
                .fold(Rat::zero(), |s, t| s + t);
            let e_mass: Rat = e.iter().fold(Rat::zero(), |s, t| s + t);
            let loop_coeff = &k_mass - &e_mass;
            if loop_coeff.is_negative() {
                return Err(reject(ROUTE, format!(
                    "negative loop coefficient at reactant {:?}, delay {}",
                    format_complex(source, &y),
                    format_rat(&tau)
                )));
            }
            for (idx, &ti) in moving.iter().enumerate() {
                if !e[idx].is_zero() {
                    dec.quasi_rates.push(QuasiRate { target_reaction: ti, delay: tau.clone(), rate: e[idx].clone() });
                    *e_sums.entry(ti).or_insert_with(Rat::zero) += &e[idx];
                }
            }
            if !loop_coeff.is_zero() {
                dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau.clone(), coeff: loop_coeff });
            }
        }
        // Per-source-reaction refinement when each slot separately sits in the cone.
        for &i in &members {
            let rx = &source.reactions()[i];
            let mut kv = rx.vector(n);
            for x in kv.iter_mut() {
                *x *= &rx.rate;
            }
            match nonneg_min_sum_solve(&cols, &kv) {
                Some(e) => {
                    for (idx, &ti) in moving.iter().enumerate() {
                        if !e[idx].is_zero() {
                            slot_rates.push(SlotRate { target_reaction: ti, source_reaction: i, rate: e[idx].clone() });
                        }
                    }
                }
                None => slots_ok = false,
            }
        }
        // In the independent case the per-delay masses must rebuild each
        // target rate exactly.
        if !cols.is_empty() && all_independent {
            for &ti in &moving {
                let got = e_sums.get(&ti).cloned().unwrap_or_else(Rat::zero);
                if got != target.reactions()[ti].rate {
                    return Err(reject(ROUTE, "internal: cone masses do not sum to the target rate under independence"));
                }
            }
        }
    }
    if slots_ok {
        dec.slot_rates = Some(slot_rates);
    }
    let theorem = if all_independent {
        TheoremTag::Cor1Case1
    } else {
        let graph = complex_graph(target);
        if is_weakly_reversible(&graph) && deficiency(target) == 0 {
            TheoremTag::Cor1Case2
        } else {
            return Err(reject(
                ROUTE,
                "target vectors are dependent and the target is not weakly reversible with zero deficiency",
            ));
        }
    };
    push_unsourced_targets(&mut dec, source, witness, ROUTE)?;
    Ok(StabilityCertificate {
        theorem,
        decomposition: Some(dec),
        witness: witness.clone(),
        notes: Vec::new(),
        rejections: Vec::new(),
    })
}

/// Single-species route: every source reactant is a multiple of one species
/// (or empty), every target complex likewise, and the production aggregates
/// split by species shares delta_j^(y,tau).
pub fn check_thm3(
    source: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
) -> Result<StabilityCertificate, Rejection> {
    const ROUTE: &str = "thm3";
    require_conjugate(source, witness, tol, ROUTE)?;
    let target = &witness.target;
    let n = source.n();
    for (y, _) in source.reactant_groups() {
        if !y.is_zero() && y.single_species().is_none() {
            return Err(reject(ROUTE, format!("reactant {:?} involves more than one species", format_complex(source, &y))));
        }
    }
    for c in target.complexes() {
        if !c.is_zero() && c.single_species().is_none() {
            return Err(reject(ROUTE, format!("target complex {:?} involves more than one species", c.format_with(target.species()))));
        }
    }
    let agg = aggregates(source);
    let tgroups = target_groups(target);
    let l = &witness.l;
    let mut dec = Decomposition::new(l.clone(), target.reactions().iter().map(|rx| rx.rate.clone()).collect());
    let mut notes = Vec::new();
    for (y, _members) in source.reactant_groups() {
        let delays = delays_for_reactant(source, &y);
        let t_members = tgroups.get(&y).cloned().unwrap_or_default();
        let y_total = agg.product_sums[&y].clone();
        let y_by_delay: BTreeMap<Rat, Vec<Rat>> = delays
            .iter()
            .map(|tau| {
                (
                    tau.clone(),
                    agg.product_sums_delay
                        .get(&(y.clone(), tau.clone()))
                        .cloned()
                        .unwrap_or_else(|| vec![Rat::zero(); n]),
                )
            })
            .collect();
        // Standard per-species shares.
        let mut delta: BTreeMap<(usize, Rat), Rat> = BTreeMap::new();
        for (tau, yt) in &y_by_delay {
            for j in 0..n {
                if !y_total[j].is_zero() {
                    delta.insert((j, tau.clone()), yt[j].clone() / y_total[j].clone());
                }
            }
        }
        dec.delta_tables.insert(y.clone(), delta.clone());
        if t_members.is_empty() {
            // Loop-only reactant: production must stay on the reactant's own
            // species (guaranteed by a zero aggregate).
            if !is_zero_vec(&agg.z(&y, n)) {
                return Err(reject(ROUTE, format!("reactant {:?} has nonzero aggregate but no target reactions", format_complex(source, &y))));
            }
            let Some((j1, yj1)) = y.single_species() else {
                // Zero reactant with zero aggregate: nothing flows at all.
                continue;
            };
            for (tau, yt) in &y_by_delay {
                let coeff = yt[j1].clone() / Rat::from_integer(yj1.into());
                if !coeff.is_zero() {
                    dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau.clone(), coeff });
                }
            }
            continue;
        }
        let kbars: BTreeMap<usize, Rat> = t_members
            .iter()
            .map(|&ti| (ti, kbar_rate(&target.reactions()[ti].rate, &y, l)))
            .collect();
        // Product species of each target reaction (None for the empty complex).
        let product_species: BTreeMap<usize, Option<(usize, u32)>> = t_members
            .iter()
            .map(|&ti| (ti, target.reactions()[ti].product.single_species()))
            .collect();
        let push_quasi = |dec: &mut Decomposition, ti: usize, tau: Rat, kbar_slice: Rat| {
            if kbar_slice.is_zero() {
                return;
            }
            // Store in target units: k~ = kbar * prod l^y.
            let mut rate = kbar_slice;
            for (j, c) in y.iter() {
                rate *= l[j].pow(c as i32);
            }
            dec.quasi_rates.push(QuasiRate { target_reaction: ti, delay: tau, rate });
        };
        match y.single_species() {
            None => {
                // Zero reactant: pure production, split by species shares.
                for &ti in &t_members {
                    match product_species[&ti] {
                        Some((j2, _)) => {
                            for tau in &delays {
                                if let Some(d) = delta.get(&(j2, tau.clone())) {
                                    push_quasi(&mut dec, ti, tau.clone(), d.clone() * &kbars[&ti]);
                                }
                            }
                        }
                        None => push_quasi(&mut dec, ti, Rat::zero(), kbars[&ti].clone()),
                    }
                }
            }
            Some((j1, _)) => {
                let k_total = agg.rate_sums[&y].clone();
                let kbar_mass: Rat = t_members.iter().map(|ti| kbars[ti].clone()).fold(Rat::zero(), |s, t| s + t);
                let k_big = &k_total - &kbar_mass * &l[j1];
                let self_producers: Vec<usize> = t_members
                    .iter()
                    .copied()
                    .filter(|ti| matches!(product_species[ti], Some((j2, _)) if j2 == j1))
                    .collect();
                // Shared handling of every target reaction that does not
                // produce the reactant species.
                for &ti in &t_members {
                    match product_species[&ti] {
                        Some((j2, _)) if j2 != j1 => {
                            for tau in &delays {
                                if let Some(d) = delta.get(&(j2, tau.clone())) {
                                    push_quasi(&mut dec, ti, tau.clone(), d.clone() * &kbars[&ti]);
                                }
                            }
                        }
                        None => push_quasi(&mut dec, ti, Rat::zero(), kbars[&ti].clone()),
                        _ => {}
                    }
                }
                if self_producers.is_empty() || !k_big.is_negative() {
                    // Surplus K^(y) >= 0: self-producing targets split like the
                    // rest and the surplus becomes loop terms.
                    if k_big.is_negative() {
                        return Err(reject(ROUTE, "internal: negative surplus without self-producing target reactions"));
                    }
                    for &ti in &self_producers {
                        for tau in &delays {
                            if let Some(d) = delta.get(&(j1, tau.clone())) {
                                push_quasi(&mut dec, ti, tau.clone(), d.clone() * &kbars[&ti]);
                            }
                        }
                    }
                    if !k_big.is_zero() {
                        for tau in &delays {
                            if let Some(d) = delta.get(&(j1, tau.clone())) {
                                let coeff = d.clone() * &k_big;
                                if !coeff.is_zero() {
                                    dec.loop_terms.push(LoopTerm { complex: y.clone(), delay: tau.clone(), coeff });
                                }
                            }
                        }
                    }
                } else if y_total[j1].is_zero() {
                    // Deficit with no net self production: the self-producing
                    // target reactions run entirely at zero delay.
                    for &ti in &self_producers {
                        push_quasi(&mut dec, ti, Rat::zero(), kbars[&ti].clone());
                    }
                    notes.push(format!(
                        "reactant {:?}: self-producing target reactions shifted to zero delay",
                        format_complex(source, &y)
                    ));
                } else {
                    // Deficit with net self production: renormalized share for
                    // the reactant species plus zero-delay remainders.
                    let denom: Rat = self_producers
                        .iter()
                        .map(|&ti| {
                            let (_, c) = product_species[&ti].unwrap();
                            kbars[&ti].clone() * &l[j1] * Rat::from_integer(c.into())
                        })
                        .fold(Rat::zero(), |s, t| s + t);
                    let mut share_sum = Rat::zero();
                    for tau in &delays {
                        let share = y_by_delay[tau][j1].clone() / denom.clone();
                        share_sum += &share;
                        for &ti in &self_producers {
                            push_quasi(&mut dec, ti, tau.clone(), share.clone() * &kbars[&ti]);
                        }
                    }
                    let remainder = Rat::one() - &share_sum;
                    if remainder.is_negative() {
                        return Err(reject(ROUTE, "internal: renormalized shares exceed one"));
                    }
                    for &ti in &self_producers {
                        push_quasi(&mut dec, ti, Rat::zero(), remainder.clone() * &kbars[&ti]);
                    }
                    notes.push(format!(
                        "reactant {:?}: renormalized self-species share with zero-delay remainder {}",
                        format_complex(source, &y),
                        format_rat(&remainder)
                    ));
                }
            }
        }
    }
    push_unsourced_targets(&mut dec, source, witness, ROUTE)?;
    Ok(StabilityCertificate {
        theorem: TheoremTag::Thm3,
        decomposition: Some(dec),
        witness: witness.clone(),
        notes,
        rejections: Vec::new(),
    })
}

/// Coefficient expansion of a delayed RHS in the basis of (monomial, delay)
/// pairs, with delay zero holding the time-t terms. Monomials of distinct
/// complexes at distinct delays are linearly independent functions of the
/// history, so two expansions are equal iff the dynamics agree pointwise on
/// every state and history.
pub type RhsExpansion = BTreeMap<(Complex, Rat), Vec<Rat>>;

fn expansion_add(map: &mut RhsExpansion, key: (Complex, Rat), n: usize, add: impl Fn(&mut Vec<Rat>)) {
    let entry = map.entry(key).or_insert_with(|| vec![Rat::zero(); n]);
    add(entry);
}

fn expansion_prune(map: &mut RhsExpansion) {
    map.retain(|_, v| !is_zero_vec(v));
}

/// Exact expansion of the network's delayed RHS.
pub fn network_rhs_expansion(net: &DelayedNetwork) -> RhsExpansion {
    let n = net.n();
    let mut map = RhsExpansion::new();
    for rx in net.reactions() {
        let y = rx.reactant.clone();
        expansion_add(&mut map, (y.clone(), rx.delay.clone()), n, |v| {
            for (j, c) in rx.product.iter() {
                v[j] += &rx.rate * Rat::from_integer(c.into());
            }
        });
        expansion_add(&mut map, (y.clone(), Rat::zero()), n, |v| {
            for (j, c) in y.iter() {
                v[j] -= &rx.rate * Rat::from_integer(c.into());
            }
        });
    }
    expansion_prune(&mut map);
    map
}

/// Exact expansion of a certificate's decomposition (quasi rates through the
/// transform plus loop terms).
pub fn decomposition_rhs_expansion(cert: &StabilityCertificate) -> Option<RhsExpansion> {
    let dec = cert.decomposition.as_ref()?;
    let target = &cert.witness.target;
    let n = target.n();
    let l = &dec.l_transform;
    let mut map = RhsExpansion::new();
    for q in &dec.quasi_rates {
        let rx = &target.reactions()[q.target_reaction];
        let y = rx.reactant.clone();
        let kbar = kbar_rate(&q.rate, &y, l);
        expansion_add(&mut map, (y.clone(), q.delay.clone()), n, |v| {
            for (j, c) in rx.product.iter() {
                v[j] += &kbar * &l[j] * Rat::from_integer(c.into());
            }
        });
        expansion_add(&mut map, (y.clone(), Rat::zero()), n, |v| {
            for (j, c) in y.iter() {
                v[j] -= &kbar * &l[j] * Rat::from_integer(c.into());
            }
        });
    }
    for t in &dec.loop_terms {
        expansion_add(&mut map, (t.complex.clone(), t.delay.clone()), n, |v| {
            for (j, c) in t.complex.iter() {
                v[j] += &t.coeff * Rat::from_integer(c.into());
            }
        });
        expansion_add(&mut map, (t.complex.clone(), Rat::zero()), n, |v| {
            for (j, c) in t.complex.iter() {
                v[j] -= &t.coeff * Rat::from_integer(c.into());
            }
        });
    }
    expansion_prune(&mut map);
    Some(map)
}

/// Exact reconstruction check: the decomposition's expansion equals the
/// source network's, coefficient by coefficient. Stronger than any sampled
/// comparison; the residual groups of the split constructions cancel in the
/// expansion, so this also asserts they vanish identically.
pub fn decomposition_matches_exactly(cert: &StabilityCertificate, source: &DelayedNetwork) -> bool {
    match decomposition_rhs_expansion(cert) {
        Some(map) => map == network_rhs_expansion(source),
        None => false,
    }
}

/// Tries the routes in order and returns the first accepting certificate,
/// or a `None` certificate carrying every rejection.
pub fn classify(source: &DelayedNetwork, witness: Option<&ConjugacyWitness>, tol: f64) -> StabilityCertificate {
    let owned;
    let witness = match witness {
        Some(w) => w,
        None => {
            let graph = complex_graph(source);
            if is_weakly_reversible(&graph) && deficiency(source) == 0 {
                owned = ConjugacyWitness::identity(source.strip_delays());
                &owned
            } else {
                return StabilityCertificate {
                    theorem: TheoremTag::None,
                    decomposition: None,
                    witness: ConjugacyWitness::identity(source.clone()),
                    notes: Vec::new(),
                    rejections: vec![reject(
                        "classify",
                        "no witness given and the network is not weakly reversible with zero deficiency",
                    )],
                };
            }
        }
    };
    let mut rejections = Vec::new();
    // A complex-balanced target must be weakly reversible.
    if !is_weakly_reversible(&complex_graph(&witness.target)) {
        return StabilityCertificate {
            theorem: TheoremTag::None,
            decomposition: None,
            witness: witness.clone(),
            notes: Vec::new(),
            rejections: vec![reject("classify", "witness target is not weakly reversible, so it cannot be complex balanced")],
        };
    }
    let routes: [&dyn Fn() -> Result<StabilityCertificate, Rejection>; 5] = [
        &|| check_lcdcbmas(source, witness, tol),
        &|| check_thm1(source, witness, tol),
        &|| check_thm3(source, witness, tol),
        &|| check_cor1(source, witness, tol),
        &|| check_thm2(source, witness, tol),
    ];
    for route in routes {
        match route() {
            Ok(mut cert) => {
                // Every accepted decomposition must expand to exactly the
                // source dynamics; a mismatch disqualifies the route.
                if !decomposition_matches_exactly(&cert, source) {
                    rejections.push(reject(
                        "classify",
                        format!("internal: {:?} decomposition does not expand to the source dynamics", cert.theorem),
                    ));
                    continue;
                }
                cert.rejections = rejections;
                return cert;
            }
            Err(r) => rejections.push(r),
        }
    }
    StabilityCertificate {
        theorem: TheoremTag::None,
        decomposition: None,
        witness: witness.clone(),
        notes: Vec::new(),
        rejections,
    }
}

/// Evaluates the decomposition at a state/history tuple: delayed target
/// reactions (through L) plus loop terms. Matches the source `dde_rhs`
/// pointwise for every accepted certificate.
pub fn reconstructed_rhs(
    cert: &StabilityCertificate,
    x_now: &[f64],
    x_delayed: &BTreeMap<u64, Vec<f64>>,
) -> Option<Vec<f64>> {
    let dec = cert.decomposition.as_ref()?;
    let target = &cert.witness.target;
    let n = x_now.len();
    let l: Vec<f64> = dec.l_transform.iter().map(rat_to_f64).collect();
    let mut out = vec![0.0; n];
    let lookup = |tau: f64| -> Option<&Vec<f64>> { x_delayed.get(&delay_key(tau)) };
    for q in &dec.quasi_rates {
        let rx = &target.reactions()[q.target_reaction];
        let y = &rx.reactant;
        let kbar = rat_to_f64(&kbar_rate(&q.rate, y, &dec.l_transform));
        let tau = rat_to_f64(&q.delay);
        let x_past = if tau == 0.0 { x_now } else { lookup(tau)?.as_slice() };
        let m_past = crate::kinetics::monomial(x_past, y);
        let m_now = crate::kinetics::monomial(x_now, y);
        for (j, c) in rx.product.iter() {
            out[j] += kbar * m_past * l[j] * c as f64;
        }
        for (j, c) in y.iter() {
            out[j] -= kbar * m_now * l[j] * c as f64;
        }
    }
    for t in &dec.loop_terms {
        let coeff = rat_to_f64(&t.coeff);
        let tau = rat_to_f64(&t.delay);
        let x_past = if tau == 0.0 { x_now } else { lookup(tau)?.as_slice() };
        let m_past = crate::kinetics::monomial(x_past, &t.complex);
        let m_now = crate::kinetics::monomial(x_now, &t.complex);
        for (j, c) in t.complex.iter() {
            out[j] += coeff * (m_past - m_now) * c as f64;
        }
    }
    Some(out)
}

/// Exact rate-split bookkeeping: quasi sums against the effective target
/// rates and the per-species shares summing to one.
pub fn rate_split_conserved(cert: &StabilityCertificate) -> bool {
    let Some(dec) = cert.decomposition.as_ref() else {
        return false;
    };
    let sums = dec.quasi_sums(cert.witness.target.r());
    if sums != dec.effective_target_rates {
        return false;
    }
    for table in dec.delta_tables.values() {
        let mut per_species: BTreeMap<usize, Rat> = BTreeMap::new();
        for ((j, _), d) in table {
            *per_species.entry(*j).or_insert_with(Rat::zero) += d;
        }
        if per_species.values().any(|s| !s.is_one()) {
            return false;
        }
    }
    true
}

/// Exact one-norm table row for reporting.
pub fn hf_table_json(entries: &[HfEntry], species: &[String]) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "reactant": e.reactant.format_with(species),
                "delay": format_rat(&e.delay),
                "avg_norm": format_rat(&e.avg_norm),
                "min_target_norm": e.min_target_norm.as_ref().map(format_rat),
                "ok": e.ok,
            })
        })
        .collect();
    serde_json::Value::Array(rows)
}

/// Scalar one-dimensional aggregates for a reactant, used by the sign-split
/// helper and its tests.
pub fn scalar_aggregates(
    net: &DelayedNetwork,
    y: &Complex,
) -> Option<(Vec<Rat>, BTreeMap<Rat, Rat>)> {
    match one_dim_frame(net, y) {
        ReactantFrame::OneDim { w, coefficients } => {
            let mut z_by_delay = BTreeMap::new();
            for (i, a) in &coefficients {
                let rx = &net.reactions()[*i];
                *z_by_delay.entry(rx.delay.clone()).or_insert_with(Rat::zero) += &rx.rate * a;
            }
            Some((w, z_by_delay))
        }
        _ => None,
    }
}

pub use crate::kinetics::delay_key as reconstruction_delay_key;
