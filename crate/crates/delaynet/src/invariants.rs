//! Conserved functionals and invariant sets: the classic compatibility-class
//! functional (state plus delay integrals of the inflow), its delta-weighted
//! variant for the single-species route, quasi-delay aggregation, degenerate
//! equilibrium parametrization, and the per-level-set equilibrium solve.

use serde::Serialize;
use thiserror::Error;

use crate::conjugacy::kbar_rate;
use crate::ddesim::{HistorySegment, Trajectory};
use crate::exact::{format_rat, orthogonal_complement, rat_to_f64, rat_vec_f64, Rat};
use crate::kinetics::monomial;
use crate::net::{Complex, ConjugacyWitness, DelayedNetwork};
use crate::numeric::{integrate_gl16, solve_dense};
use crate::structure::stoich_subspace;
use num::traits::Zero;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("history segment shorter than the largest delay")]
    SegmentTooShort,
    #[error("history must be positive")]
    NonpositiveHistory,
    #[error("species {species} is produced but no target reaction supplies it (conjugacy defect)")]
    ConjugacyDefect { species: usize },
    #[error("reactant is not a multiple of a single species")]
    MultiSpeciesReactant,
    #[error("level count does not match the search-space dimension")]
    DimensionMismatch,
    #[error("Newton did not converge ({0} iterations, residual {1:.3e})")]
    NoConvergence(usize, f64),
    #[error("complex-balance solve failed (residual {0:.3e})")]
    BalanceFailed(f64),
    #[error("the refined invariant sets need a conjugacy witness")]
    WitnessRequired,
}

/// Restriction of a dense segment to times up to `t_end`: evaluating the
/// functionals directly against the original piecewise cubic avoids any
/// slope re-estimation across derivative kinks.
#[derive(Clone, Copy)]
pub struct SegmentView<'a> {
    seg: &'a HistorySegment,
    t_end: f64,
}

impl<'a> SegmentView<'a> {
    pub fn new(seg: &'a HistorySegment, t_end: f64) -> Result<Self, InvariantError> {
        if t_end < seg.t_start() - 1e-9 || t_end > seg.t_end() + 1e-9 {
            return Err(InvariantError::SegmentTooShort);
        }
        Ok(SegmentView { seg, t_end })
    }

    fn whole(seg: &'a HistorySegment) -> Self {
        SegmentView { seg, t_end: seg.t_end() }
    }

    fn t_start(&self) -> f64 {
        self.seg.t_start()
    }

    fn eval(&self, t: f64) -> Result<Vec<f64>, InvariantError> {
        self.seg.eval(t).map_err(|_| InvariantError::SegmentTooShort)
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        self.seg.breakpoints_in(a, b)
    }
}

/// g(psi) = psi(0) + sum_i (int_{-tau_i}^0 k_i psi(s)^{y_i} ds) y_i.
pub fn g_eval(net: &DelayedNetwork, psi: &HistorySegment) -> Result<Vec<f64>, InvariantError> {
    weighted_g_eval(net, SegmentView::whole(psi), |_| 1.0)
}

fn weighted_g_eval(
    net: &DelayedNetwork,
    psi: SegmentView<'_>,
    weight: impl Fn(usize) -> f64,
) -> Result<Vec<f64>, InvariantError> {
    let t_end = psi.t_end;
    let span = t_end - psi.t_start();
    if span + 1e-12 < net.max_delay_f64() {
        return Err(InvariantError::SegmentTooShort);
    }
    let mut out = psi.eval(t_end)?;
    if out.iter().any(|&x| x < 0.0) {
        return Err(InvariantError::NonpositiveHistory);
    }
    for (i, rx) in net.reactions().iter().enumerate() {
        let tau = net.delay_f64(i);
        if tau == 0.0 {
            continue;
        }
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        let k = net.rate_f64(i);
        let a = t_end - tau;
        let mut acc = 0.0;
        for win in psi.breakpoints_in(a, t_end).windows(2) {
            acc += integrate_gl16(win[0], win[1], |t| {
                let x = psi.eval(t).expect("inside domain");
                monomial(&x, &rx.reactant)
            });
        }
        for (s, c) in rx.reactant.iter() {
            out[s] += w * k * acc * c as f64;
        }
    }
    Ok(out)
}

/// Closed form of g on a constant history.
pub fn g_constant(net: &DelayedNetwork, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (i, rx) in net.reactions().iter().enumerate() {
        let flux = net.rate_f64(i) * net.delay_f64(i) * monomial(x, &rx.reactant);
        for (s, c) in rx.reactant.iter() {
            out[s] += flux * c as f64;
        }
    }
    out
}

/// Per-reaction, per-species shares used by the weighted functional on the
/// single-species route.
#[derive(Debug, Clone)]
pub struct DeltaTable {
    /// `delta[reaction][species]`, exact.
    pub delta: Vec<Vec<Rat>>,
    /// Row sums sum_j delta_ji as f64, cached for evaluation.
    pub row_sums: Vec<f64>,
    /// (reactant complex, species) -> scaled target production average.
    pub lbar: Vec<(Complex, usize, Rat)>,
}

impl DeltaTable {
    pub fn recompute_row_sums(&mut self) {
        self.row_sums = self
            .delta
            .iter()
            .map(|row| row.iter().map(rat_to_f64).sum())
            .collect();
    }

    pub fn delta_f64(&self) -> Vec<Vec<f64>> {
        self.delta.iter().map(|row| rat_vec_f64(row)).collect()
    }
}

/// Builds the delta table: delta_ji = y'_ji / lbar_j with lbar_j the
/// kbar-weighted average of l_j y~'_j over target reactions producing j,
/// scaled by 1/l_j1, and lbar_{j1} = y_{j1} on the reactant species itself.
pub fn delta_coefficients(
    net: &DelayedNetwork,
    witness: &ConjugacyWitness,
) -> Result<DeltaTable, InvariantError> {
    let n = net.n();
    let target = &witness.target;
    let l = &witness.l;
    let tgroups = target.reactant_groups();
    let mut delta = vec![vec![Rat::zero(); n]; net.r()];
    let mut lbar_rows: Vec<(Complex, usize, Rat)> = Vec::new();
    for (y, members) in net.reactant_groups() {
        let (j1, yj1) = y.single_species().ok_or(InvariantError::MultiSpeciesReactant)?;
        let t_members = tgroups.get(&y).cloned().unwrap_or_default();
        // lbar per species.
        let mut lbar = vec![Rat::zero(); n];
        lbar[j1] = Rat::from_integer(yj1.into());
        for j in 0..n {
            if j == j1 {
                continue;
            }
            let mut num = Rat::zero();
            let mut den = Rat::zero();
            for &ti in &t_members {
                let rx = &target.reactions()[ti];
                let c = rx.product.coeff(j);
                if c > 0 {
                    let kb = kbar_rate(&rx.rate, &y, l);
                    num += &kb * &l[j] * Rat::from_integer(c.into());
                    den += kb;
                }
            }
            if !den.is_zero() {
                lbar[j] = num / (l[j1].clone() * den);
            }
        }
        for (j, v) in lbar.iter().enumerate() {
            if !v.is_zero() {
                lbar_rows.push((y.clone(), j, v.clone()));
            }
        }
        for &i in &members {
            let rx = &net.reactions()[i];
            for (j, c) in rx.product.iter() {
                if lbar[j].is_zero() {
                    return Err(InvariantError::ConjugacyDefect { species: j });
                }
                delta[i][j] = Rat::from_integer(c.into()) / lbar[j].clone();
            }
        }
    }
    let mut table = DeltaTable { delta, row_sums: Vec::new(), lbar: lbar_rows };
    table.recompute_row_sums();
    Ok(table)
}

/// Weighted functional core: g^n(psi) with each reaction's integral scaled by
/// its delta row sum.
pub fn gn_eval(
    net: &DelayedNetwork,
    delta: &DeltaTable,
    psi: &HistorySegment,
) -> Result<Vec<f64>, InvariantError> {
    weighted_g_eval(net, SegmentView::whole(psi), |i| delta.row_sums[i])
}

/// Closed form of g^n on a constant history.
pub fn gn_constant(net: &DelayedNetwork, delta: &DeltaTable, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (i, rx) in net.reactions().iter().enumerate() {
        let flux = delta.row_sums[i] * net.rate_f64(i) * net.delay_f64(i) * monomial(x, &rx.reactant);
        for (s, c) in rx.reactant.iter() {
            out[s] += flux * c as f64;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantSetKind {
    /// Level sets of b' g over the orthogonal complement of the source's
    /// stoichiometric subspace.
    Scc,
    /// Level sets of b' g over the target's orthogonal complement.
    NewSccDe12,
    /// Level sets of b' g^n over the complement of the transformed target
    /// subspace, with delta-weighted delay integrals.
    NewSccDe3,
}

/// An invariant set: functional kind, basis vectors, levels through psi.
#[derive(Debug, Clone)]
pub struct InvariantSetSpec {
    pub kind: InvariantSetKind,
    pub basis: Vec<Vec<Rat>>,
    pub delta: Option<DeltaTable>,
    pub levels: Vec<f64>,
}

impl InvariantSetSpec {
    pub fn to_json(&self) -> serde_json::Value {
        let basis: Vec<Vec<String>> = self.basis.iter().map(|b| b.iter().map(format_rat).collect()).collect();
        let delta = self.delta.as_ref().map(|d| {
            d.delta
                .iter()
                .enumerate()
                .flat_map(|(i, row)| {
                    row.iter().enumerate().filter_map(move |(j, v)| {
                        (!v.is_zero()).then(|| serde_json::json!({"reaction": i, "species": j, "value": format_rat(v)}))
                    })
                })
                .collect::<Vec<_>>()
        });
        serde_json::json!({
            "kind": self.kind,
            "basis": basis,
            "levels": self.levels,
            "delta": delta,
        })
    }

    /// Functional values at a constant state.
    pub fn functional_at_constant(&self, net: &DelayedNetwork, x: &[f64]) -> Vec<f64> {
        let g = match &self.delta {
            Some(d) => gn_constant(net, d, x),
            None => g_constant(net, x),
        };
        self.basis.iter().map(|b| dot_f64(&rat_vec_f64(b), &g)).collect()
    }

    /// Functional values on a history segment (quadrature).
    pub fn functional_on_segment(
        &self,
        net: &DelayedNetwork,
        psi: &HistorySegment,
    ) -> Result<Vec<f64>, InvariantError> {
        self.functional_on_view(net, SegmentView::whole(psi))
    }

    /// Functional values along a trajectory at time t, reading the original
    /// dense output.
    pub fn functional_along(
        &self,
        net: &DelayedNetwork,
        traj: &Trajectory,
        t: f64,
    ) -> Result<Vec<f64>, InvariantError> {
        self.functional_on_view(net, SegmentView::new(&traj.seg, t)?)
    }

    fn functional_on_view(
        &self,
        net: &DelayedNetwork,
        view: SegmentView<'_>,
    ) -> Result<Vec<f64>, InvariantError> {
        let g = match &self.delta {
            Some(d) => weighted_g_eval(net, view, |i| d.row_sums[i])?,
            None => weighted_g_eval(net, view, |_| 1.0)?,
        };
        Ok(self.basis.iter().map(|b| dot_f64(&rat_vec_f64(b), &g)).collect())
    }
}

fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Transformed target subspace L S~ spanned by L (y~' - y~).
fn transformed_target_span(witness: &ConjugacyWitness) -> Vec<Vec<Rat>> {
    let n = witness.target.n();
    let vectors: Vec<Vec<Rat>> = witness
        .target
        .reactions()
        .iter()
        .map(|rx| {
            let mut v = rx.vector(n);
            for (j, x) in v.iter_mut().enumerate() {
                *x *= &witness.l[j];
            }
            v
        })
        .collect();
    crate::exact::span_basis(&vectors)
}

/// Builds the invariant-set description containing psi.
pub fn invariant_set(
    net: &DelayedNetwork,
    witness: Option<&ConjugacyWitness>,
    psi: &HistorySegment,
    kind: InvariantSetKind,
) -> Result<InvariantSetSpec, InvariantError> {
    let n = net.n();
    let (basis, delta) = match kind {
        InvariantSetKind::Scc => (orthogonal_complement(&stoich_subspace(net), n), None),
        InvariantSetKind::NewSccDe12 => {
            let w = witness.ok_or(InvariantError::WitnessRequired)?;
            (orthogonal_complement(&stoich_subspace(&w.target), n), None)
        }
        InvariantSetKind::NewSccDe3 => {
            let w = witness.ok_or(InvariantError::WitnessRequired)?;
            let basis = orthogonal_complement(&transformed_target_span(w), n);
            (basis, Some(delta_coefficients(net, w)?))
        }
    };
    let mut spec = InvariantSetSpec { kind, basis, delta, levels: Vec::new() };
    spec.levels = spec.functional_on_segment(net, psi)?;
    Ok(spec)
}

/// Aggregated delay the target reactions from reactant y inherit: the
/// rate-weighted mean of the source delays, with the transform scaling on
/// the single-species route.
pub fn quasi_delay(
    net: &DelayedNetwork,
    witness: &ConjugacyWitness,
    y: &Complex,
    single_species_route: bool,
) -> Result<Rat, InvariantError> {
    let tgroups = witness.target.reactant_groups();
    let denom: Rat = match tgroups.get(y) {
        Some(tis) => tis
            .iter()
            .map(|&ti| witness.target.reactions()[ti].rate.clone())
            .fold(Rat::zero(), |s, t| s + t),
        // Loop augmentation: a self-loop on y carries the source's rate mass.
        None => net
            .reactions()
            .iter()
            .filter(|rx| &rx.reactant == y)
            .map(|rx| rx.rate.clone())
            .fold(Rat::zero(), |s, t| s + t),
    };
    if denom.is_zero() {
        return Err(InvariantError::DimensionMismatch);
    }
    let mut num = Rat::zero();
    for rx in net.reactions() {
        if &rx.reactant != y {
            continue;
        }
        let mut term = rx.rate.clone() * &rx.delay;
        if single_species_route {
            let (j1, _) = y.single_species().ok_or(InvariantError::MultiSpeciesReactant)?;
            // l^y = prod_j l_j^{y_j}; scale by l_j1^{-1}.
            let mut l_pow = Rat::from_integer(1.into());
            for (j, c) in y.iter() {
                l_pow *= witness.l[j].pow(c as i32);
            }
            term *= l_pow / witness.l[j1].clone();
        }
        num += term;
    }
    Ok(num / denom)
}

/// Complex-balance equilibrium of the target network by damped Gauss-Newton
/// in log coordinates from the all-ones point.
pub fn cb_equilibrium(target: &DelayedNetwork) -> Result<Vec<f64>, InvariantError> {
    let n = target.n();
    let complexes = target.complexes();
    let p = complexes.len();
    let residual = |u: &[f64]| -> Vec<f64> {
        let x: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let mut f = vec![0.0; p];
        for (ci, c) in complexes.iter().enumerate() {
            for (i, rx) in target.reactions().iter().enumerate() {
                let flux = target.rate_f64(i) * monomial(&x, &rx.reactant);
                if &rx.reactant == c {
                    f[ci] += flux;
                }
                if &rx.product == c {
                    f[ci] -= flux;
                }
            }
        }
        f
    };
    let norm = |f: &[f64]| f.iter().map(|x| x * x).sum::<f64>();
    let mut u = vec![0.0; n];
    let mut f = residual(&u);
    let mut lambda = 1e-10;
    for _ in 0..200 {
        if norm(&f).sqrt() < 1e-13 {
            return Ok(u.iter().map(|v| v.exp()).collect());
        }
        // Jacobian d f_c / d u_j.
        let mut jac = vec![vec![0.0; n]; p];
        let x: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        for (ci, c) in complexes.iter().enumerate() {
            for (i, rx) in target.reactions().iter().enumerate() {
                let flux = target.rate_f64(i) * monomial(&x, &rx.reactant);
                let sign = (&rx.reactant == c) as i32 - (&rx.product == c) as i32;
                if sign == 0 {
                    continue;
                }
                for (j, e) in rx.reactant.iter() {
                    jac[ci][j] += sign as f64 * flux * e as f64;
                }
            }
        }
        // Levenberg-damped normal equations.
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..p).map(|c| jac[c][i] * jac[c][j]).sum();
            }
            a[i][i] += lambda;
            b[i] = -(0..p).map(|c| jac[c][i] * f[c]).sum::<f64>();
        }
        let Some(du) = solve_dense(&a, &b) else {
            lambda *= 10.0;
            continue;
        };
        let mut step = 1.0;
        let base = norm(&f);
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + step * d).collect();
            let fc = residual(&cand);
            if norm(&fc) < base {
                u = cand;
                f = fc;
                accepted = true;
                lambda = (lambda * 0.3).max(1e-12);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            lambda *= 10.0;
            if lambda > 1e8 {
                break;
            }
        }
    }
    let r = norm(&f).sqrt();
    if r < 1e-10 {
        Ok(u.iter().map(|v| v.exp()).collect())
    } else {
        Err(InvariantError::BalanceFailed(r))
    }
}

/// Reference positive equilibrium of the source: L times a complex-balance
/// point of the target.
pub fn reference_equilibrium(witness: &ConjugacyWitness) -> Result<Vec<f64>, InvariantError> {
    let z = cb_equilibrium(&witness.target)?;
    Ok(z.iter().zip(&witness.l).map(|(zi, li)| zi * rat_to_f64(li)).collect())
}

/// Equilibrium continuum through a reference point: v |-> diag(x*) exp(B v)
/// with B the basis of the target's conservation complement.
#[derive(Debug, Clone)]
pub struct DegenerateSet {
    pub x_star: Vec<f64>,
    pub basis: Vec<Vec<Rat>>,
}

impl DegenerateSet {
    pub fn point(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.basis.len());
        let n = self.x_star.len();
        let mut out = self.x_star.clone();
        for j in 0..n {
            let mut e = 0.0;
            for (m, b) in self.basis.iter().enumerate() {
                e += v[m] * rat_to_f64(&b[j]);
            }
            out[j] *= e.exp();
        }
        out
    }
}

/// Parametrization of the equilibrium set through x*.
pub fn degenerate_set(x_star: &[f64], target_orth_basis: Vec<Vec<Rat>>) -> DegenerateSet {
    DegenerateSet { x_star: x_star.to_vec(), basis: target_orth_basis }
}

/// Search-space basis for the equilibrium solve: the orthogonal complement
/// of the target's stoichiometric subspace (the equilibrium manifold's log
/// directions).
pub fn equilibrium_directions(witness: &ConjugacyWitness) -> Vec<Vec<Rat>> {
    orthogonal_complement(&stoich_subspace(&witness.target), witness.target.n())
}

/// Finds the equilibrium inside the given invariant set by damped Newton on
/// v |-> functional(diag(x*) exp(B v)) - levels, starting from v0 (zero when
/// absent).
pub fn equilibrium_in_set(
    net: &DelayedNetwork,
    witness: &ConjugacyWitness,
    spec: &InvariantSetSpec,
    v0: Option<&[f64]>,
) -> Result<Vec<f64>, InvariantError> {
    let x_star = reference_equilibrium(witness)?;
    let dirs = equilibrium_directions(witness);
    let m = dirs.len();
    if spec.basis.len() != m {
        return Err(InvariantError::DimensionMismatch);
    }
    if m == 0 {
        return Ok(x_star);
    }
    let dirs_f64: Vec<Vec<f64>> = dirs.iter().map(|d| rat_vec_f64(d)).collect();
    let point = |v: &[f64]| -> Vec<f64> {
        (0..net.n())
            .map(|j| {
                let e: f64 = (0..m).map(|q| v[q] * dirs_f64[q][j]).sum();
                x_star[j] * e.exp()
            })
            .collect()
    };
    let residual = |v: &[f64]| -> Vec<f64> {
        let x = point(v);
        spec.functional_at_constant(net, &x)
            .iter()
            .zip(&spec.levels)
            .map(|(f, w)| f - w)
            .collect()
    };
    let weights: Vec<f64> = match &spec.delta {
        Some(d) => d.row_sums.clone(),
        None => vec![1.0; net.r()],
    };
    let basis_f64: Vec<Vec<f64>> = spec.basis.iter().map(|b| rat_vec_f64(b)).collect();
    let mut v: Vec<f64> = v0.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    let mut r = residual(&v);
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    for iter in 0..100 {
        if norm(&r) <= 1e-11 {
            return Ok(point(&v));
        }
        // Analytic Jacobian: d/dv_q of b' [x + sum_i w_i k_i tau_i x^{y_i} y_i].
        let x = point(&v);
        let mut jac = vec![vec![0.0; m]; m];
        for q in 0..m {
            // dx_j/dv_q = x_j * B_jq.
            let dx: Vec<f64> = (0..net.n()).map(|j| x[j] * dirs_f64[q][j]).collect();
            let mut dg = dx.clone();
            for (i, rx) in net.reactions().iter().enumerate() {
                let tau = net.delay_f64(i);
                if tau == 0.0 || weights[i] == 0.0 {
                    continue;
                }
                // d x^y / dv_q = x^y * sum_j y_j B_jq.
                let dir_sum: f64 = rx.reactant.iter().map(|(j, c)| c as f64 * dirs_f64[q][j]).sum();
                let dflux = weights[i] * net.rate_f64(i) * tau * monomial(&x, &rx.reactant) * dir_sum;
                for (s, c) in rx.reactant.iter() {
                    dg[s] += dflux * c as f64;
                }
            }
            for (bi, b) in basis_f64.iter().enumerate() {
                jac[bi][q] = dot_f64(b, &dg);
            }
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let Some(dv) = solve_dense(&jac, &rhs) else {
            return Err(InvariantError::NoConvergence(iter, norm(&r)));
        };
        // Backtracking halving until the residual decreases.
        let base = norm(&r);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = v.iter().zip(&dv).map(|(a, d)| a + step * d).collect();
            let rc = residual(&cand);
            if norm(&rc) < base {
                v = cand;
                r = rc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            return Err(InvariantError::NoConvergence(iter, base));
        }
    }
    let final_norm = norm(&r);
    if final_norm <= 1e-9 {
        Ok(point(&v))
    } else {
        Err(InvariantError::NoConvergence(100, final_norm))
    }
}

/// Maximum drift of the invariant-set functionals along a trajectory,
/// sampled every `stride` time units.
pub fn conservation_check(
    traj: &Trajectory,
    net: &DelayedNetwork,
    spec: &InvariantSetSpec,
    stride: f64,
) -> Result<f64, InvariantError> {
    let mut t = traj.t0;
    let mut max_drift = 0.0f64;
    let t_end = traj.t_end();
    loop {
        let vals = spec.functional_along(net, traj, t)?;
        for (v, w) in vals.iter().zip(&spec.levels) {
            max_drift = max_drift.max((v - w).abs());
        }
        if t >= t_end - 1e-9 {
            break;
        }
        t = (t + stride).min(t_end);
    }
    Ok(max_drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddesim::simulate;
    use crate::exact::{rat, rat_array, rat_i};
    use crate::fixtures;

    #[test]
    fn g_reduces_to_state_without_delays() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(0));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let g = g_eval(&net, &psi).unwrap();
        assert_eq!(g, vec![2.0]);
    }

    #[test]
    fn g_constant_closed_form_matches_quadrature() {
        // Birth-death, k = 1, tau = 1, psi = 2: g = 2 + 1*4*1*2 = 10.
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let g = g_eval(&net, &psi).unwrap();
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g_constant(&net, &[2.0])[0] - 10.0).abs() < 1e-12);
        // Cross comparison on the cubic system at random states.
        let net2 = fixtures::cubic_branch(rat_i(1), &[rat(1, 2), rat(7, 10), rat(9, 10), rat(11, 10), rat(13, 10)]);
        for x in [[1.0, 2.0, 0.5], [0.3, 0.9, 1.7]] {
            let psi2 = HistorySegment::constant(&x, 0.0, 1.3);
            let via_quad = g_eval(&net2, &psi2).unwrap();
            let closed = g_constant(&net2, &x);
            for (a, b) in via_quad.iter().zip(&closed) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn short_segment_is_an_error() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 0.25);
        assert!(matches!(g_eval(&net, &psi), Err(InvariantError::SegmentTooShort)));
    }

    #[test]
    fn kinase_delta_table_matches_hand_derivation() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let d = delta_coefficients(&net, &w).unwrap();
        // Reactant 2E: delta_11 = 1/2, delta_12 = 1, delta_22 = 1/2.
        assert_eq!(d.delta[0][0], rat(1, 2));
        assert_eq!(d.delta[1][0], rat_i(1));
        assert_eq!(d.delta[1][1], rat(1, 2));
        // Reactant EP rows: delta_13 = 1, delta_34 = 1.
        assert_eq!(d.delta[2][0], rat_i(1));
        assert_eq!(d.delta[3][2], rat_i(1));
        // Reactant EPP: delta_25 = 1.
        assert_eq!(d.delta[4][1], rat_i(1));
        // lbar values: (2E, species E) = 2, (2E, EP) = 2, (EP, E) = 1.
        let y2e = Complex::from_pairs(&[(0, 2)]);
        let lookup = |y: &Complex, j: usize| {
            d.lbar.iter().find(|(yy, jj, _)| yy == y && *jj == j).map(|(_, _, v)| v.clone())
        };
        assert_eq!(lookup(&y2e, 0), Some(rat_i(2)));
        assert_eq!(lookup(&y2e, 1), Some(rat_i(2)));
    }

    #[test]
    fn self_loop_delta_is_one() {
        // Single reaction 2X -> 2X: delta_11 = y'_11 / y_11 = 1.
        let net = crate::net::parse_network("species X\nreaction 2X -> 2X : k=1 tau=1").unwrap();
        let w = ConjugacyWitness::identity(crate::net::parse_network("species X").unwrap());
        let d = delta_coefficients(&net, &w).unwrap();
        assert_eq!(d.delta[0][0], rat_i(1));
    }

    #[test]
    fn weighted_functional_levels_at_experiment_points() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let psi = HistorySegment::constant(&fixtures::THETA[0], 0.0, 1.0);
        let spec = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe3).unwrap();
        // Basis of the transformed-complement is the all-ones direction.
        assert_eq!(spec.basis.len(), 1);
        let b = rat_vec_f64(&spec.basis[0]);
        let scale = b[0];
        assert!((b[1] / scale - 1.0).abs() < 1e-12 && (b[2] / scale - 1.0).abs() < 1e-12);
        // Levels: theta1 and theta2 share 25.24, theta3/theta4 share 6.56.
        let level = |x: &[f64; 3]| {
            let p = HistorySegment::constant(x, 0.0, 1.0);
            spec.functional_on_segment(&net, &p).unwrap()[0] / scale
        };
        assert!((level(&fixtures::THETA[0]) - 25.24).abs() < 1e-9);
        assert!((level(&fixtures::THETA[1]) - 25.24).abs() < 1e-9);
        assert!((level(&fixtures::THETA[2]) - 6.56).abs() < 1e-9);
        assert!((level(&fixtures::THETA[3]) - 6.56).abs() < 1e-9);
        // The second equilibrium lies on the same level set.
        assert!((level(&[0.8, 0.64, 0.64]) - 6.56).abs() < 1e-9);
    }

    #[test]
    fn quasi_delay_values() {
        // Equal delays aggregate to the same delay when rate masses match.
        let tgt = fixtures::birth_death_target(rat_i(1), rat_i(1));
        let mut reactions = tgt.reactions().to_vec();
        reactions[0].delay = rat(3, 4);
        reactions[1].delay = rat(3, 4);
        let dcb = crate::net::DelayedNetwork::new(tgt.species().to_vec(), reactions);
        let w = ConjugacyWitness::identity(dcb.strip_delays());
        let y = Complex::from_pairs(&[(0, 2)]);
        assert_eq!(quasi_delay(&dcb, &w, &y, false).unwrap(), rat(3, 4));
        // Birth-death: tau~(2S1) = k1 * 1 / (k1/2) = 2.
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let w2 = fixtures::birth_death_witness(rat_i(1), rat_i(1));
        assert_eq!(quasi_delay(&net, &w2, &y, false).unwrap(), rat_i(2));
        // Transform-scaled variant on the kinase chain: for 2E the scale is
        // l^y / l_1 = (1/4) / (1/2) = 1/2, so tau~ = 2*(1/2)/(1/4) = 4.
        let kd = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w3 = fixtures::kinase_degenerate_witness(rat_i(1));
        let y2e = Complex::from_pairs(&[(0, 2)]);
        assert_eq!(quasi_delay(&kd, &w3, &y2e, true).unwrap(), rat_i(4));
    }

    #[test]
    fn loop_augmented_quasi_delay() {
        // Reactant absent from the target: denominator is the source mass.
        let net = crate::net::parse_network(
            "species X\nreaction 2X -> 2X : k=3 tau=1\nreaction X -> X : k=1 tau=0",
        )
        .unwrap();
        let w = ConjugacyWitness::identity(crate::net::parse_network("species X").unwrap());
        let y = Complex::from_pairs(&[(0, 2)]);
        assert_eq!(quasi_delay(&net, &w, &y, false).unwrap(), rat_i(1));
    }

    #[test]
    fn cb_equilibrium_of_targets() {
        // 2S1 <-> 0 with rates (1/2, 1/2): the unique balance point z = 1.
        let tgt = fixtures::birth_death_target(rat_i(1), rat_i(1));
        let z = cb_equilibrium(&tgt).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-9);
        // Kinase chain with unit rates: the balance manifold is
        // z2 = z1^2/4 = z3; the solver lands somewhere on it.
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let z2 = cb_equilibrium(&w.target).unwrap();
        assert!((z2[1] - z2[0] * z2[0] / 4.0).abs() < 1e-9, "{z2:?}");
        assert!((z2[1] - z2[2]).abs() < 1e-9);
        // The transformed reference is an equilibrium of the source network.
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let x = reference_equilibrium(&w).unwrap();
        assert!(crate::lyapunov::equilibrium_residual(&net, &x) <= 1e-10);
        assert!((x[0] * x[0] - x[1]).abs() < 1e-9);
    }

    #[test]
    fn degenerate_set_of_kinase_follows_square_law() {
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let x_star = reference_equilibrium(&w).unwrap();
        let basis = equilibrium_directions(&w);
        assert_eq!(basis.len(), 1);
        let set = degenerate_set(&x_star, basis);
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        for v in [-0.8, -0.3, 0.0, 0.4, 1.1] {
            let x = set.point(&[v]);
            assert!((x[0] * x[0] - x[1]).abs() < 1e-9 * x[1].max(1.0));
            assert!((x[1] - x[2]).abs() < 1e-12);
            let res = crate::lyapunov::equilibrium_residual(&net, &x);
            assert!(res <= 1e-9, "residual {res}");
        }
        // v = 0 is the reference point itself.
        assert_eq!(set.point(&[0.0]), x_star);
    }

    #[test]
    fn two_species_line_degenerate_set() {
        let w = fixtures::two_species_line_witness(rat_i(1));
        let x_star = reference_equilibrium(&w).unwrap();
        let set = degenerate_set(&x_star, equilibrium_directions(&w));
        for v in [-1.0, 0.2, 0.9] {
            let x = set.point(&[v]);
            assert!((x[0] - x[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn equilibrium_in_set_matches_experiment_values() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        for (idx, theta) in [(0usize, fixtures::THETA[0]), (1, fixtures::THETA[2])] {
            let psi = HistorySegment::constant(&theta, 0.0, 1.0);
            let spec = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe3).unwrap();
            let x = equilibrium_in_set(&net, &w, &spec, None).unwrap();
            let expect = fixtures::THETA_EQUILIBRIA[idx];
            for (a, b) in x.iter().zip(&expect) {
                assert!((a - b).abs() < 5e-3, "level {idx}: {x:?} vs {expect:?}");
            }
            // On-level and at-equilibrium to tight tolerance.
            let vals = spec.functional_at_constant(&net, &x);
            for (v, l) in vals.iter().zip(&spec.levels) {
                assert!((v - l).abs() < 1e-9);
            }
            assert!(crate::lyapunov::equilibrium_residual(&net, &x) <= 1e-9);
        }
    }

    #[test]
    fn equilibrium_fixed_point_when_levels_match_reference() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let x_star = reference_equilibrium(&w).unwrap();
        let psi = HistorySegment::constant(&x_star, 0.0, 1.0);
        let spec = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe3).unwrap();
        let x = equilibrium_in_set(&net, &w, &spec, None).unwrap();
        for (a, b) in x.iter().zip(&x_star) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn conservation_along_trajectories() {
        // Classic functional on the zero-delay system: strict conservation.
        let net = fixtures::two_species_line(rat_i(1), rat_i(0), rat_i(0));
        let psi = HistorySegment::constant(&[1.5, 0.5], 0.0, 0.0);
        let traj = simulate(&net, &psi, 20.0, 0.01).unwrap();
        let spec = invariant_set(&net, None, &psi, InvariantSetKind::Scc).unwrap();
        // The source subspace is all of R^2 here, no conserved direction; use
        // the refined basis instead.
        assert_eq!(spec.basis.len(), 0);
        let w = fixtures::two_species_line_witness(rat_i(1));
        let spec2 = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe12).unwrap();
        assert_eq!(spec2.basis.len(), 1);
        let drift = conservation_check(&traj, &net, &spec2, 0.5).unwrap();
        assert!(drift < 1e-9, "drift {drift}");
    }

    #[test]
    fn classic_compatibility_class_conserved_on_kinase_run() {
        // The chain network keeps a genuine conserved direction (total
        // mass); the classic functional must stay on its level.
        let k = rat_array::<4>(1, 1);
        let net = fixtures::pak1(&k, &rat_array::<4>(1, 1));
        let psi = HistorySegment::constant(&[1.4, 0.8, 1.2], 0.0, 1.0);
        let spec = invariant_set(&net, None, &psi, InvariantSetKind::Scc).unwrap();
        assert_eq!(spec.basis.len(), 1);
        let traj = simulate(&net, &psi, 30.0, 0.01).unwrap();
        let drift = conservation_check(&traj, &net, &spec, 0.5).unwrap();
        assert!(drift <= 1e-6, "drift {drift}");
    }

    #[test]
    fn refined_set_basis_comes_from_target_complement() {
        // For the cubic system the target complement is the all-ones line.
        let taus = [rat(1, 2), rat(7, 10), rat(9, 10), rat(11, 10), rat(13, 10)];
        let net = fixtures::cubic_branch(rat_i(1), &taus);
        let w = fixtures::cubic_branch_witness(rat_i(1));
        let psi = HistorySegment::constant(&[1.5, 1.0, 0.5], 0.0, 1.3);
        let spec = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe12).unwrap();
        assert_eq!(spec.basis.len(), 1);
        let b = &spec.basis[0];
        assert_eq!(b[0], b[1]);
        assert_eq!(b[1], b[2]);
    }

    #[test]
    fn weighted_conservation_on_kinase_run() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let psi = HistorySegment::constant(&fixtures::THETA[0], 0.0, 1.0);
        let spec = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe3).unwrap();
        let traj = simulate(&net, &psi, 30.0, 0.01).unwrap();
        let drift = conservation_check(&traj, &net, &spec, 1.0).unwrap();
        assert!(drift <= 1e-6, "drift {drift}");
    }

    #[test]
    fn wrong_delta_breaks_conservation() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let w = fixtures::kinase_degenerate_witness(rat_i(1));
        let psi = HistorySegment::constant(&fixtures::THETA[0], 0.0, 1.0);
        let mut spec = invariant_set(&net, Some(&w), &psi, InvariantSetKind::NewSccDe3).unwrap();
        // Perturb one share by 10%.
        {
            let d = spec.delta.as_mut().unwrap();
            d.delta[0][0] *= rat(11, 10);
            d.recompute_row_sums();
        }
        spec.levels = spec
            .functional_on_segment(&net, &psi)
            .unwrap();
        let traj = simulate(&net, &psi, 10.0, 0.01).unwrap();
        let drift = conservation_check(&traj, &net, &spec, 0.5).unwrap();
        assert!(drift > 1e-3, "drift {drift} should exceed 1e-3");
    }
}
