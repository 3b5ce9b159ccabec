//! Constant-delay DDE integration by the method of steps: classical RK4 with
//! cubic Hermite dense output, delayed values read from the already-computed
//! history. Fixed step keeps runs reproducible bit for bit.

use thiserror::Error;

use crate::kinetics::monomial;
use crate::net::DelayedNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step size must be positive")]
    BadStep,
    #[error("step {step} exceeds one tenth of the smallest positive delay {min_delay}")]
    StepTooLarge { step: f64, min_delay: f64 },
    #[error("history must be strictly positive")]
    NonpositiveHistory,
    #[error("state became nonfinite at t = {0}")]
    NonFinite(f64),
    #[error("state fell below the clip threshold at t = {0}")]
    NegativeState(f64),
    #[error("time {0} outside the stored domain [{1}, {2}]")]
    OutOfDomain(f64, f64, f64),
}

/// Piecewise-cubic function of time: Hermite data per node, interpolated on
/// each interval. A node carries an incoming and an outgoing slope; they
/// coincide everywhere except where a given history meets the integrated
/// extension, so storing both keeps the history exact.
#[derive(Debug, Clone)]
pub struct HistorySegment {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    slopes_in: Vec<Vec<f64>>,
    slopes_out: Vec<Vec<f64>>,
}

impl HistorySegment {
    /// Constant history x on [t_end - span, t_end].
    pub fn constant(x: &[f64], t_end: f64, span: f64) -> Self {
        let span = span.max(1e-9);
        let zero = vec![0.0; x.len()];
        HistorySegment {
            times: vec![t_end - span, t_end],
            values: vec![x.to_vec(), x.to_vec()],
            slopes_in: vec![zero.clone(), zero.clone()],
            slopes_out: vec![zero.clone(), zero],
        }
    }

    /// Builds a segment from time-ordered samples; slopes are secant
    /// estimates (central where possible).
    pub fn from_samples(times: Vec<f64>, values: Vec<Vec<f64>>) -> Option<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return None;
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        let n = values[0].len();
        let m = times.len();
        let mut slopes = vec![vec![0.0; n]; m];
        for i in 0..m {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(m - 1));
            let dt = times[hi] - times[lo];
            for j in 0..n {
                slopes[i][j] = (values[hi][j] - values[lo][j]) / dt;
            }
        }
        Some(HistorySegment { times, values, slopes_in: slopes.clone(), slopes_out: slopes })
    }

    pub fn from_nodes(times: Vec<f64>, values: Vec<Vec<f64>>, slopes: Vec<Vec<f64>>) -> Self {
        HistorySegment { times, values, slopes_in: slopes.clone(), slopes_out: slopes }
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_value(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    fn interval_of(&self, t: f64) -> Result<usize, SimError> {
        let (a, b) = (self.t_start(), self.t_end());
        // Tolerate end-point roundoff from delay subtraction.
        let slack = 1e-9 * (1.0 + b.abs().max(a.abs()));
        if t < a - slack || t > b + slack {
            return Err(SimError::OutOfDomain(t, a, b));
        }
        let idx = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.times.len() - 2),
        };
        Ok(idx)
    }

    /// Cubic Hermite evaluation at time t: interval i interpolates between
    /// the outgoing slope of node i and the incoming slope of node i+1.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, SimError> {
        let i = self.interval_of(t)?;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let n = self.dim();
        let mut out = vec![0.0; n];
        for j in 0..n {
            out[j] = h00 * self.values[i][j]
                + h10 * h * self.slopes_out[i][j]
                + h01 * self.values[i + 1][j]
                + h11 * h * self.slopes_in[i + 1][j];
        }
        Ok(out)
    }

    fn push_node(&mut self, t: f64, value: Vec<f64>, slope: Vec<f64>) {
        self.times.push(t);
        self.values.push(value);
        self.slopes_in.push(slope.clone());
        self.slopes_out.push(slope);
    }

    fn pop_node(&mut self) {
        self.times.pop();
        self.values.pop();
        self.slopes_in.pop();
        self.slopes_out.pop();
    }

    fn set_last_slopes(&mut self, slope: Vec<f64>) {
        let last = self.times.len() - 1;
        self.slopes_in[last] = slope.clone();
        self.slopes_out[last] = slope;
    }

    /// Node times intersected with [a, b], plus the clipped endpoints: the
    /// breakpoints a piecewise-polynomial quadrature must respect.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a];
        for &t in &self.times {
            if t > a && t < b {
                pts.push(t);
            }
        }
        pts.push(b);
        pts
    }
}

/// Dense solution of a DDE run: history plus computed extension.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seg: HistorySegment,
    pub t0: f64,
    pub step: f64,
    /// Step-doubling local error estimate per accepted step (max component).
    pub error_estimates: Vec<f64>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.seg.t_end()
    }

    pub fn max_error_estimate(&self) -> f64 {
        self.error_estimates.iter().copied().fold(0.0, f64::max)
    }
}

/// Dense evaluation of a trajectory.
pub fn dense_eval(traj: &Trajectory, t: f64) -> Result<Vec<f64>, SimError> {
    traj.seg.eval(t)
}

const CLIP_THRESHOLD: f64 = -1e-9;

/// RHS with delayed lookups against the dense history; delay-zero reactions
/// read the stage value.
fn rhs(net: &DelayedNetwork, t: f64, x: &[f64], hist: &HistorySegment) -> Result<Vec<f64>, SimError> {
    let n = net.n();
    let mut out = vec![0.0; n];
    for (i, rx) in net.reactions().iter().enumerate() {
        let tau = net.delay_f64(i);
        let k = net.rate_f64(i);
        let prod_flux = if tau == 0.0 {
            k * monomial(x, &rx.reactant)
        } else {
            let past = hist.eval(t - tau)?;
            k * monomial(&past, &rx.reactant)
        };
        let cons_flux = k * monomial(x, &rx.reactant);
        for (s, c) in rx.product.iter() {
            out[s] += prod_flux * c as f64;
        }
        for (s, c) in rx.reactant.iter() {
            out[s] -= cons_flux * c as f64;
        }
    }
    Ok(out)
}

fn rk4_step(
    net: &DelayedNetwork,
    t: f64,
    x: &[f64],
    h: f64,
    hist: &HistorySegment,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let n = x.len();
    let k1 = rhs(net, t, x, hist)?;
    let mut xs = vec![0.0; n];
    for j in 0..n {
        xs[j] = x[j] + 0.5 * h * k1[j];
    }
    let k2 = rhs(net, t + 0.5 * h, &xs, hist)?;
    for j in 0..n {
        xs[j] = x[j] + 0.5 * h * k2[j];
    }
    let k3 = rhs(net, t + 0.5 * h, &xs, hist)?;
    for j in 0..n {
        xs[j] = x[j] + h * k3[j];
    }
    let k4 = rhs(net, t + h, &xs, hist)?;
    let mut out = vec![0.0; n];
    for j in 0..n {
        out[j] = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    Ok((out, k1))
}

/// Integrates the network from the given initial history to `t_end` with
/// fixed step `h`. The history must end where integration starts.
pub fn simulate(
    net: &DelayedNetwork,
    psi: &HistorySegment,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, SimError> {
    // NaN steps must fail too, so test the complement.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(h > 0.0) {
        return Err(SimError::BadStep);
    }
    let min_delay = net
        .reactions()
        .iter()
        .enumerate()
        .map(|(i, _)| net.delay_f64(i))
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if min_delay.is_finite() && h > min_delay / 10.0 + 1e-12 {
        return Err(SimError::StepTooLarge { step: h, min_delay });
    }
    if psi.min_value() <= 0.0 && psi.dim() > 0 {
        return Err(SimError::NonpositiveHistory);
    }
    let t0 = psi.t_end();
    let mut seg = psi.clone();
    // The outgoing slope at the junction node becomes the RHS there; the
    // incoming slope stays the history's own, so the given history is
    // reproduced exactly by the dense output.
    {
        let x0 = seg.values.last().unwrap().clone();
        let f0 = rhs(net, t0, &x0, &seg)?;
        *seg.slopes_out.last_mut().unwrap() = f0;
    }
    let mut error_estimates = Vec::new();
    let mut t = t0;
    let mut x = seg.values.last().unwrap().clone();
    let total = t_end - t0;
    let nsteps = (total / h).floor() as usize;
    let mut remaining = total - nsteps as f64 * h;
    if remaining < 1e-12 * h {
        remaining = 0.0;
    }
    let do_step = |seg: &mut HistorySegment,
                       t: &mut f64,
                       x: &mut Vec<f64>,
                       step: f64,
                       errs: &mut Vec<f64>|
     -> Result<(), SimError> {
        let (full, _) = rk4_step(net, *t, x, step, seg)?;
        // Step-doubling error estimate.
        let (half1, _) = rk4_step(net, *t, x, 0.5 * step, seg)?;
        // Temporarily extend so the second half step can read the first.
        let f_half = rhs(net, *t + 0.5 * step, &half1, seg)?;
        seg.push_node(*t + 0.5 * step, half1.clone(), f_half);
        let (half2, _) = rk4_step(net, *t + 0.5 * step, &half1, 0.5 * step, seg)?;
        seg.pop_node();
        let err = full
            .iter()
            .zip(&half2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errs.push(err);
        *t += step;
        if full.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite(*t));
        }
        if full.iter().any(|&v| v < CLIP_THRESHOLD) {
            return Err(SimError::NegativeState(*t));
        }
        seg.push_node(*t, full.clone(), vec![0.0; full.len()]);
        let f_end = rhs(net, *t, &full, seg)?;
        seg.set_last_slopes(f_end);
        *x = full;
        Ok(())
    };
    for _ in 0..nsteps {
        do_step(&mut seg, &mut t, &mut x, h, &mut error_estimates)?;
    }
    if remaining > 0.0 {
        do_step(&mut seg, &mut t, &mut x, remaining, &mut error_estimates)?;
    }
    Ok(Trajectory { seg, t0, step: h, error_estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_i};
    use crate::fixtures;
    use crate::kinetics::ode_rhs;

    #[test]
    fn constant_segment_eval() {
        let seg = HistorySegment::constant(&[2.0, 3.0], 0.0, 1.5);
        assert_eq!(seg.eval(-0.7).unwrap(), vec![2.0, 3.0]);
        assert_eq!(seg.eval(0.0).unwrap(), vec![2.0, 3.0]);
        assert!(seg.eval(1.0).is_err());
    }

    #[test]
    fn node_values_are_exact_and_midpoints_linear() {
        let seg = HistorySegment::from_samples(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0], vec![1.0], vec![2.0]],
        )
        .unwrap();
        assert_eq!(seg.eval(1.0).unwrap(), vec![1.0]);
        // Linear data interpolates linearly.
        assert!((seg.eval(0.5).unwrap()[0] - 0.5).abs() < 1e-12);
        assert!((seg.eval(1.5).unwrap()[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_delay_matches_reference_ode_rk4() {
        // Reference: plain RK4 on the same fixed grid.
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(0));
        let h = 0.01;
        let t_end = 5.0;
        let psi = HistorySegment::constant(&[2.0], 0.0, 0.0);
        let traj = simulate(&net, &psi, t_end, h).unwrap();
        let mut x = vec![2.0];
        let mut t = 0.0;
        while t < t_end - 1e-12 {
            let k1 = ode_rhs(&net, &x);
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = ode_rhs(&net, &x2);
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = ode_rhs(&net, &x3);
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = ode_rhs(&net, &x4);
            for j in 0..x.len() {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            t += h;
        }
        let end = dense_eval(&traj, t_end).unwrap();
        assert!((end[0] - x[0]).abs() < 1e-10);
    }

    #[test]
    fn birth_death_converges_to_unit_equilibrium() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let traj = simulate(&net, &psi, 50.0, 0.01).unwrap();
        let end = dense_eval(&traj, 50.0).unwrap();
        assert!((end[0] - 1.0).abs() < 1e-6, "x(50) = {}", end[0]);
    }

    #[test]
    fn dense_output_against_half_step_rerun() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let coarse = simulate(&net, &psi, 5.0, 0.005).unwrap();
        let fine = simulate(&net, &psi, 5.0, 0.0025).unwrap();
        let mut max_gap = 0.0f64;
        let mut t = 0.0;
        while t <= 5.0 {
            let a = dense_eval(&coarse, t).unwrap();
            let b = dense_eval(&fine, t).unwrap();
            max_gap = max_gap.max((a[0] - b[0]).abs());
            t += 0.037;
        }
        assert!(max_gap < 1e-8, "gap {max_gap}");
    }

    #[test]
    fn step_guard_and_positivity_guard() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat(1, 10));
        let psi = HistorySegment::constant(&[2.0], 0.0, 0.1);
        assert!(matches!(simulate(&net, &psi, 1.0, 0.05), Err(SimError::StepTooLarge { .. })));
        let bad = HistorySegment::constant(&[0.0], 0.0, 0.1);
        assert!(matches!(simulate(&net, &bad, 1.0, 0.01), Err(SimError::NonpositiveHistory)));
    }

    #[test]
    fn zero_horizon_keeps_history_only() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let traj = simulate(&net, &psi, 0.0, 0.01).unwrap();
        assert_eq!(traj.t_end(), 0.0);
        assert_eq!(traj.seg.times().len(), 2);
    }

    #[test]
    fn fourth_order_convergence_on_smooth_fixture() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let t_end = 4.0;
        let reference = simulate(&net, &psi, t_end, 0.00125).unwrap();
        let x_ref = dense_eval(&reference, t_end).unwrap()[0];
        let errs: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&h| {
                let traj = simulate(&net, &psi, t_end, h).unwrap();
                (dense_eval(&traj, t_end).unwrap()[0] - x_ref).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((12.0..=20.0).contains(&ratio), "ratios {errs:?} -> {ratio}");
        }
    }
}
