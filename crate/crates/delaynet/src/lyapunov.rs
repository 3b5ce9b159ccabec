//! Lyapunov functionals assembled from a stability certificate: weighted
//! point terms h(psi_j(0); xbar_j) plus delay-integral terms over the
//! certificate's quasi rates and loop coefficients, evaluated along dense
//! trajectories.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::classifier::{StabilityCertificate, TheoremTag};
use crate::conjugacy::kbar_rate;
use crate::ddesim::{HistorySegment, Trajectory};
use crate::exact::rat_to_f64;
use crate::kinetics::{dde_rhs, delay_key, monomial};
use crate::net::{Complex, DelayedNetwork};
use crate::numeric::integrate_gl16;
use num::traits::Zero;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("h requires strictly positive arguments")]
    NonpositiveInput,
    #[error("certificate carries no decomposition")]
    NoCertificate,
    #[error("center is not an equilibrium (residual {0:.3e})")]
    NotEquilibrium(f64),
    #[error("segment contains a nonpositive concentration")]
    NonpositiveSegment,
    #[error("segment shorter than the functional's longest delay")]
    SegmentTooShort,
    #[error("time {0} out of the trajectory's usable range")]
    OutOfRange(f64),
}

/// h(z; beta) = beta - z - z ln(beta/z): nonnegative, zero only at z = beta.
pub fn h(z: f64, beta: f64) -> Result<f64, LyapunovError> {
    if z <= 0.0 || beta <= 0.0 {
        return Err(LyapunovError::NonpositiveInput);
    }
    Ok(beta - z - z * (beta / z).ln())
}

#[derive(Debug, Clone, Serialize)]
pub struct PointTerm {
    pub species: usize,
    pub weight: f64,
    pub center: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralTerm {
    /// Monomial exponent of the integrand.
    #[serde(skip)]
    pub complex: Complex,
    pub complex_label: String,
    pub delay: f64,
    pub weight: f64,
    /// xbar^y, the centering constant of the integrand.
    pub center: f64,
}

/// V(psi) = sum_j w_j h(psi_j(0); xbar_j)
///        + sum_terms c int_{-tau}^0 h(psi(s)^y; xbar^y) ds.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovFunctional {
    pub point_terms: Vec<PointTerm>,
    pub integral_terms: Vec<IntegralTerm>,
    pub center: Vec<f64>,
}

impl LyapunovFunctional {
    pub fn max_delay(&self) -> f64 {
        self.integral_terms.iter().map(|t| t.delay).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("functional serializes")
    }
}

/// Residual of the delayed RHS at a constant state.
pub fn equilibrium_residual(net: &DelayedNetwork, x: &[f64]) -> f64 {
    let mut delayed = BTreeMap::new();
    for tau in net.distinct_delays() {
        delayed.insert(delay_key(rat_to_f64(&tau)), x.to_vec());
    }
    dde_rhs(net, x, &delayed)
        .map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .unwrap_or(f64::INFINITY)
}

/// Builds the functional for an accepted certificate centered at the
/// positive equilibrium `center`. Point weights are 1 on the
/// dynamic-equivalence routes and 1/l_j when the diagonal transform is in
/// play; each quasi rate and loop term with a positive delay contributes one
/// integral term.
pub fn build_functional(
    cert: &StabilityCertificate,
    source: &DelayedNetwork,
    center: &[f64],
) -> Result<LyapunovFunctional, LyapunovError> {
    if cert.theorem == TheoremTag::None {
        return Err(LyapunovError::NoCertificate);
    }
    let dec = cert.decomposition.as_ref().ok_or(LyapunovError::NoCertificate)?;
    let res = equilibrium_residual(source, center);
    // Complement test so a NaN residual rejects as well.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(res <= 1e-10) {
        return Err(LyapunovError::NotEquilibrium(res));
    }
    if center.iter().any(|&c| c <= 0.0) {
        return Err(LyapunovError::NonpositiveInput);
    }
    let species = source.species();
    let point_terms = (0..source.n())
        .map(|j| PointTerm {
            species: j,
            weight: 1.0 / rat_to_f64(&dec.l_transform[j]),
            center: center[j],
        })
        .collect();
    let mut integral_terms: Vec<IntegralTerm> = Vec::new();
    for q in &dec.quasi_rates {
        if q.delay.is_zero() {
            continue;
        }
        let y = &cert.witness.target.reactions()[q.target_reaction].reactant;
        let weight = rat_to_f64(&kbar_rate(&q.rate, y, &dec.l_transform));
        integral_terms.push(IntegralTerm {
            complex: y.clone(),
            complex_label: y.format_with(species),
            delay: rat_to_f64(&q.delay),
            weight,
            center: monomial(center, y),
        });
    }
    for t in &dec.loop_terms {
        if t.delay.is_zero() {
            continue;
        }
        integral_terms.push(IntegralTerm {
            complex: t.complex.clone(),
            complex_label: t.complex.format_with(species),
            delay: rat_to_f64(&t.delay),
            weight: rat_to_f64(&t.coeff),
            center: monomial(center, &t.complex),
        });
    }
    Ok(LyapunovFunctional { point_terms, integral_terms, center: center.to_vec() })
}

fn check_positive_on(seg: &HistorySegment, a: f64, b: f64) -> Result<(), LyapunovError> {
    // Nodes plus a modest sample grid; the integrand itself would also blow
    // up on a nonpositive value.
    for &t in seg.times() {
        if t >= a - 1e-12 && t <= b + 1e-12 {
            let v = seg.eval(t).map_err(|_| LyapunovError::SegmentTooShort)?;
            if v.iter().any(|&x| x <= 0.0) {
                return Err(LyapunovError::NonpositiveSegment);
            }
        }
    }
    Ok(())
}

/// Evaluates V on a history segment; psi(0) is the segment's right endpoint.
pub fn evaluate(v: &LyapunovFunctional, seg: &HistorySegment) -> Result<f64, LyapunovError> {
    let t_end = seg.t_end();
    let needed = v.max_delay();
    if t_end - seg.t_start() < needed - 1e-12 {
        return Err(LyapunovError::SegmentTooShort);
    }
    check_positive_on(seg, t_end - needed, t_end)?;
    let head = seg.eval(t_end).map_err(|_| LyapunovError::SegmentTooShort)?;
    let mut total = 0.0;
    for p in &v.point_terms {
        total += p.weight * h(head[p.species], p.center)?;
    }
    for term in &v.integral_terms {
        let a = t_end - term.delay;
        let pieces = seg.breakpoints_in(a, t_end);
        let mut acc = 0.0;
        for w in pieces.windows(2) {
            acc += integrate_gl16(w[0], w[1], |t| {
                let x = seg.eval(t).expect("inside domain");
                let z = monomial(&x, &term.complex);
                h(z, term.center).unwrap_or(f64::INFINITY)
            });
        }
        total += term.weight * acc;
    }
    Ok(total)
}

/// V at trajectory time t (the window [t - tau_max, t] must be stored).
pub fn evaluate_at(v: &LyapunovFunctional, traj: &Trajectory, t: f64) -> Result<f64, LyapunovError> {
    let needed = v.max_delay();
    if t - needed < traj.seg.t_start() - 1e-9 || t > traj.seg.t_end() + 1e-9 {
        return Err(LyapunovError::OutOfRange(t));
    }
    evaluate_windowed(v, traj, t)
}

fn evaluate_windowed(v: &LyapunovFunctional, traj: &Trajectory, t: f64) -> Result<f64, LyapunovError> {
    let seg = &traj.seg;
    let head = seg.eval(t).map_err(|_| LyapunovError::OutOfRange(t))?;
    if head.iter().any(|&x| x <= 0.0) {
        return Err(LyapunovError::NonpositiveSegment);
    }
    let mut total = 0.0;
    for p in &v.point_terms {
        total += p.weight * h(head[p.species], p.center)?;
    }
    for term in &v.integral_terms {
        let a = t - term.delay;
        let pieces = seg.breakpoints_in(a, t);
        let mut acc = 0.0;
        for w in pieces.windows(2) {
            acc += integrate_gl16(w[0], w[1], |s| {
                let x = seg.eval(s).expect("inside domain");
                let z = monomial(&x, &term.complex).max(1e-300);
                h(z, term.center).unwrap_or(f64::INFINITY)
            });
        }
        total += term.weight * acc;
    }
    Ok(total)
}

/// Central finite-difference estimate of dV/dt along the trajectory, with
/// the integrator step as the difference width.
pub fn lie_derivative_estimate(
    v: &LyapunovFunctional,
    traj: &Trajectory,
    t: f64,
) -> Result<f64, LyapunovError> {
    let d = traj.step;
    let lo = t - d;
    let hi = t + d;
    if lo - v.max_delay() < traj.seg.t_start() - 1e-9 || hi > traj.seg.t_end() + 1e-9 {
        return Err(LyapunovError::OutOfRange(t));
    }
    let a = evaluate_windowed(v, traj, lo)?;
    let b = evaluate_windowed(v, traj, hi)?;
    Ok((b - a) / (2.0 * d))
}

/// Closed form of V on a constant history: point terms plus c * tau * h(x^y).
pub fn value_at_constant(v: &LyapunovFunctional, x: &[f64]) -> Result<f64, LyapunovError> {
    let mut total = 0.0;
    for p in &v.point_terms {
        total += p.weight * h(x[p.species], p.center)?;
    }
    for term in &v.integral_terms {
        total += term.weight * term.delay * h(monomial(x, &term.complex), term.center)?;
    }
    Ok(total)
}

/// Sampled descent check along a trajectory: returns (max pairwise rise,
/// terminal value, samples). The rise is measured against the running
/// minimum, so V(t2) <= V(t1) + rise holds for every sampled t2 > t1.
pub fn descent_profile(
    v: &LyapunovFunctional,
    traj: &Trajectory,
    stride: f64,
) -> Result<(f64, f64, Vec<(f64, f64)>), LyapunovError> {
    let t_start = traj.t0 + v.max_delay();
    let t_end = traj.t_end();
    let mut samples = Vec::new();
    let mut t = t_start;
    while t <= t_end + 1e-9 {
        let val = evaluate_at(v, traj, t.min(t_end))?;
        samples.push((t.min(t_end), val));
        t += stride;
    }
    if samples.last().map(|&(st, _)| st < t_end - 1e-9).unwrap_or(true) {
        let val = evaluate_at(v, traj, t_end)?;
        samples.push((t_end, val));
    }
    let mut max_rise = 0.0f64;
    let mut running_min = f64::INFINITY;
    for &(_, val) in &samples {
        running_min = running_min.min(val);
        max_rise = max_rise.max(val - running_min);
    }
    let terminal = samples.last().map(|&(_, v)| v).unwrap_or(0.0);
    Ok((max_rise, terminal, samples))
}

/// Shared helper: the delayed-state map of a constant state.
pub fn constant_delay_map(net: &DelayedNetwork, x: &[f64]) -> BTreeMap<u64, Vec<f64>> {
    let mut delayed = BTreeMap::new();
    for tau in net.distinct_delays() {
        delayed.insert(delay_key(rat_to_f64(&tau)), x.to_vec());
    }
    delayed
}
