//! Command-level pipeline: parse -> structure -> conjugacy -> classify ->
//! simulate -> certify -> report. The CLI binary is a thin wrapper over
//! these functions; tests call them directly.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use crate::classifier::{classify, StabilityCertificate, TheoremTag};
use crate::conjugacy::{check_linear_conjugacy, ConjugacyError};
use crate::ddesim::{dense_eval, simulate, HistorySegment, SimError, Trajectory};
use crate::invariants::{
    conservation_check, equilibrium_directions, equilibrium_in_set, invariant_set, InvariantError,
    InvariantSetKind, InvariantSetSpec,
};
use crate::lyapunov::{build_functional, descent_profile, lie_derivative_estimate, LyapunovError};
use crate::net::{ConjugacyWitness, DelayedNetwork, ParseError};

pub const SCHEMA: &str = "delaynet/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Conjugacy(#[from] ConjugacyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Process-level outcome; the binary maps this to its exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Certificate accepted and every numeric check passed.
    Certified,
    /// Pipeline ran but classification or a numeric check failed.
    NotCertified,
}

pub struct AnalyzeOptions {
    pub tol: f64,
    pub t_end: f64,
    pub step: f64,
    pub history: Option<HistorySegment>,
    pub no_meta: bool,
    pub out: Option<PathBuf>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { tol: 1e-9, t_end: 100.0, step: 0.01, history: None, no_meta: true, out: None }
    }
}

/// Stamps a report with the schema tag and, unless suppressed, a timestamp.
pub fn finalize(mut report: Value, no_meta: bool) -> Value {
    report["schema"] = json!(SCHEMA);
    if !no_meta {
        report["meta"] = json!({
            "generated_at": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        });
    }
    report
}

/// Structure stage as JSON (schema stamp left to the emitter).
pub fn structure_json(net: &DelayedNetwork) -> Value {
    let rep = crate::structure::structure_report(net);
    serde_json::to_value(rep.to_json(net.species())).expect("report serializes")
}

/// Conjugacy stage as JSON.
pub fn conjugacy_json(
    net: &DelayedNetwork,
    witness: &ConjugacyWitness,
    tol: f64,
) -> Result<Value, PipelineError> {
    let rep = check_linear_conjugacy(net, witness, tol)?;
    Ok(rep.to_json(net.species()))
}

/// Classification stage as JSON plus the certificate itself.
pub fn classify_stage(
    net: &DelayedNetwork,
    witness: Option<&ConjugacyWitness>,
    tol: f64,
) -> (StabilityCertificate, Value) {
    let cert = classify(net, witness, tol);
    let v = cert.to_json(net);
    (cert, v)
}

/// Invariant-set kind matching the certificate's route.
pub fn kind_for_certificate(cert: &StabilityCertificate) -> InvariantSetKind {
    if cert.theorem == TheoremTag::Thm3 || !cert.witness.is_identity_l() {
        InvariantSetKind::NewSccDe3
    } else {
        InvariantSetKind::NewSccDe12
    }
}

/// Equilibrium matched to the invariant set of the history, falling back to
/// the reference equilibrium when the set is full-dimensional.
pub fn equilibrium_for_history(
    net: &DelayedNetwork,
    witness: &ConjugacyWitness,
    spec: &InvariantSetSpec,
) -> Result<Vec<f64>, PipelineError> {
    if equilibrium_directions(witness).is_empty() {
        return Ok(crate::invariants::reference_equilibrium(witness)?);
    }
    Ok(equilibrium_in_set(net, witness, spec, None)?)
}

pub struct RunRecord {
    pub history_label: String,
    pub endpoint: Vec<f64>,
    pub equilibrium: Vec<f64>,
    pub max_increment: f64,
    pub terminal_v: f64,
    pub drift: f64,
    pub v_trace: Vec<(f64, f64, f64)>,
    pub functional: Value,
}

/// Simulates from the history, certifies descent of the certificate's
/// functional, and measures conservation drift.
pub fn certified_run(
    net: &DelayedNetwork,
    cert: &StabilityCertificate,
    psi: &HistorySegment,
    t_end: f64,
    step: f64,
) -> Result<RunRecord, PipelineError> {
    let witness = &cert.witness;
    let kind = kind_for_certificate(cert);
    let spec = invariant_set(net, Some(witness), psi, kind)?;
    let x_bar = equilibrium_for_history(net, witness, &spec)?;
    let v = build_functional(cert, net, &x_bar)?;
    let traj = simulate(net, psi, t_end, step)?;
    let stride = (t_end / 200.0).max(step);
    let (max_increment, terminal_v, samples) = descent_profile(&v, &traj, stride)?;
    let drift = conservation_check(&traj, net, &spec, stride)?;
    let endpoint = dense_eval(&traj, traj.t_end())?;
    let mut v_trace = Vec::with_capacity(samples.len());
    for &(t, val) in &samples {
        let dv = lie_derivative_estimate(&v, &traj, t).unwrap_or(f64::NAN);
        v_trace.push((t, val, dv));
    }
    Ok(RunRecord {
        history_label: format!("{:?}", psi.node_value(0)),
        endpoint,
        equilibrium: x_bar,
        max_increment,
        terminal_v,
        drift,
        v_trace,
        functional: v.to_json(),
    })
}

fn run_to_json(run: &RunRecord, trace_file: Option<&Path>) -> Value {
    json!({
        "history": run.history_label,
        "converged_to": run.endpoint,
        "equilibrium": run.equilibrium,
        "max_increment": run.max_increment,
        "terminal_v": run.terminal_v,
        "drift": run.drift,
        "v_trace_file": trace_file.map(|p| p.display().to_string()),
        "functional": run.functional,
    })
}

pub fn v_trace_csv(run: &RunRecord) -> String {
    let mut out = String::from("t,V,dVdt\n");
    for &(t, v, dv) in &run.v_trace {
        out.push_str(&format!("{t},{v},{dv}\n"));
    }
    out
}

/// Full pipeline over one network (+ optional witness): returns the report
/// and the outcome for the exit code.
pub fn analyze(
    net: &DelayedNetwork,
    witness: Option<&ConjugacyWitness>,
    opts: &AnalyzeOptions,
) -> Result<(Value, Outcome), PipelineError> {
    let structure = structure_json(net);
    let conjugacy = match witness {
        Some(w) => Some(conjugacy_json(net, w, opts.tol)?),
        None => None,
    };
    let (cert, cert_json) = classify_stage(net, witness, opts.tol);
    let mut runs = Vec::new();
    let mut checks_pass = cert.accepted();
    if cert.accepted() {
        if let Some(psi) = &opts.history {
            let run = certified_run(net, &cert, psi, opts.t_end, opts.step)?;
            let v_scale = run.v_trace.iter().map(|&(_, v, _)| v.abs()).fold(1.0f64, f64::max);
            checks_pass &= run.max_increment <= 1e-6 * v_scale && run.drift <= 1e-6 * v_scale;
            let trace_path = opts.out.as_ref().map(|p| {
                let mut t = p.clone();
                t.set_extension("vtrace.csv");
                t
            });
            if let Some(tp) = &trace_path {
                std::fs::write(tp, v_trace_csv(&run))?;
            }
            runs.push(run_to_json(&run, trace_path.as_deref()));
        }
    }
    let report = finalize(
        json!({
            "structure": structure,
            "conjugacy": conjugacy,
            "certificate": cert_json,
            "runs": runs,
        }),
        opts.no_meta,
    );
    if let Some(out) = &opts.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    let outcome = if checks_pass { Outcome::Certified } else { Outcome::NotCertified };
    Ok((report, outcome))
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Other(e.to_string())
    }
}

/// Trajectory CSV with the header `t,x_<species>...`, one row per node.
pub fn trajectory_csv(net: &DelayedNetwork, traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for s in net.species() {
        out.push_str(&format!(",x_{s}"));
    }
    out.push('\n');
    for (i, &t) in traj.seg.times().iter().enumerate() {
        out.push_str(&format!("{t}"));
        for v in traj.seg.node_value(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn trajectory_json(net: &DelayedNetwork, traj: &Trajectory) -> Value {
    let rows: Vec<Value> = traj
        .seg
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| json!({"t": t, "x": traj.seg.node_value(i)}))
        .collect();
    json!({
        "schema": SCHEMA,
        "species": net.species(),
        "rows": rows,
    })
}

/// Parses `--history`: an inline comma-separated constant vector or a path
/// to a CSV of `t,x...` rows.
pub fn parse_history(text: &str, net: &DelayedNetwork, t0: f64) -> Result<HistorySegment, PipelineError> {
    let inline: Option<Vec<f64>> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok())
        .collect();
    if let Some(values) = inline {
        if values.len() != net.n() {
            return Err(PipelineError::Other(format!(
                "history has {} entries for {} species",
                values.len(),
                net.n()
            )));
        }
        let span = net.max_delay_f64().max(1e-9);
        return Ok(HistorySegment::constant(&values, t0, span));
    }
    let body = std::fs::read_to_string(text)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for line in body.lines().skip_while(|l| l.starts_with('t') || l.trim().is_empty()) {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::Other(format!("bad history row `{line}`: {e}")))?;
        if fields.len() != net.n() + 1 {
            return Err(PipelineError::Other(format!("history row `{line}` has wrong arity")));
        }
        times.push(fields[0]);
        values.push(fields[1..].to_vec());
    }
    HistorySegment::from_samples(times, values)
        .ok_or_else(|| PipelineError::Other("history file needs at least two increasing rows".into()))
}

fn thread_cap() -> usize {
    std::env::var("DELAYNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(4)
}

pub struct Fig6Output {
    pub summary: Value,
    pub trajectory_files: Vec<PathBuf>,
    pub grid_files: Vec<PathBuf>,
    pub all_converged: bool,
}

/// Reproduces the four-trajectory level-set experiment on the degenerate
/// kinase network (unit rates and delays): four runs, two constant-level
/// surface grids, and a summary of convergence and conservation statistics.
pub fn repro_fig6(out_dir: &Path, t_end: f64, step: f64) -> Result<Fig6Output, PipelineError> {
    use crate::exact::{rat_array, rat_i};
    use crate::fixtures;
    std::fs::create_dir_all(out_dir)?;
    let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
    let witness = fixtures::kinase_degenerate_witness(rat_i(1));
    let cert = classify(&net, Some(&witness), 1e-9);
    if !cert.accepted() {
        return Err(PipelineError::Other("classification of the bundled network failed".into()));
    }
    // Fan the four runs out over a capped thread pool.
    let cap = thread_cap().min(fixtures::THETA.len()).max(1);
    let mut results: Vec<Option<Result<(Trajectory, InvariantSetSpec, RunRecord), PipelineError>>> =
        (0..fixtures::THETA.len()).map(|_| None).collect();
    let indices: Vec<usize> = (0..fixtures::THETA.len()).collect();
    for chunk in indices.chunks(cap) {
        let mut slots: Vec<(usize, Result<(Trajectory, InvariantSetSpec, RunRecord), PipelineError>)> =
            Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &idx in chunk {
                let net = &net;
                let cert = &cert;
                let witness = &witness;
                handles.push((idx, scope.spawn(move || -> Result<_, PipelineError> {
                    let theta = fixtures::THETA[idx];
                    let psi = HistorySegment::constant(&theta, 0.0, net.max_delay_f64());
                    let spec = invariant_set(net, Some(witness), &psi, InvariantSetKind::NewSccDe3)?;
                    let run = certified_run(net, cert, &psi, t_end, step)?;
                    let traj = simulate(net, &psi, t_end, step)?;
                    Ok((traj, spec, run))
                })));
            }
            for (idx, h) in handles {
                slots.push((idx, h.join().expect("run thread panicked")));
            }
        });
        for (idx, res) in slots {
            results[idx] = Some(res);
        }
    }
    let mut trajectory_files = Vec::new();
    let mut run_rows = Vec::new();
    let mut all_converged = true;
    for (idx, slot) in results.into_iter().enumerate() {
        let (traj, spec, run) = slot.expect("slot filled")?;
        let path = out_dir.join(format!("run_theta{}.csv", idx + 1));
        std::fs::write(&path, trajectory_csv(&net, &traj))?;
        let target = fixtures::THETA_EQUILIBRIA[idx / 2];
        let endpoint_dist = run
            .endpoint
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let converged = endpoint_dist < 1e-2;
        all_converged &= converged && run.drift <= 1e-6;
        // Report levels in the normalized all-ones direction.
        let scale = crate::exact::rat_to_f64(&spec.basis[0][0]);
        run_rows.push(json!({
            "theta": fixtures::THETA[idx],
            "level": spec.levels[0] / scale,
            "endpoint": run.endpoint,
            "target": target,
            "endpoint_distance": endpoint_dist,
            "drift": run.drift,
            "max_increment": run.max_increment,
            "terminal_v": run.terminal_v,
            "converged": converged,
        }));
        trajectory_files.push(path);
    }
    // Constant-level surface grids: solve the third coordinate from the
    // level, keeping positive points.
    let psi0 = HistorySegment::constant(&fixtures::THETA[0], 0.0, 1.0);
    let spec = invariant_set(&net, Some(&witness), &psi0, InvariantSetKind::NewSccDe3)?;
    let scale = crate::exact::rat_to_f64(&spec.basis[0][0]);
    let mut grid_files = Vec::new();
    for (gi, level) in fixtures::THETA_LEVELS.iter().enumerate() {
        let mut csv = String::from("x_E,x_EP,x_EPP\n");
        for i in 1..=60 {
            for j in 1..=60 {
                let x1 = 0.05 * i as f64;
                let x2 = 0.25 * j as f64;
                if let Some(x3) = solve_third_coordinate(&net, &spec, scale * level, x1, x2) {
                    if x3 > 0.0 {
                        csv.push_str(&format!("{x1},{x2},{x3}\n"));
                    }
                }
            }
        }
        let path = out_dir.join(format!("level_{}_grid.csv", gi + 1));
        std::fs::write(&path, csv)?;
        grid_files.push(path);
    }
    let summary = json!({
        "schema": SCHEMA,
        "levels": fixtures::THETA_LEVELS,
        "equilibria": fixtures::THETA_EQUILIBRIA,
        "runs": run_rows,
        "all_converged": all_converged,
        "trajectories": trajectory_files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "grids": grid_files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(Fig6Output { summary, trajectory_files, grid_files, all_converged })
}

/// Solves functional(x1, x2, x3) = level for x3 by bisection-backed Newton;
/// the functional is increasing in each coordinate.
fn solve_third_coordinate(
    net: &DelayedNetwork,
    spec: &InvariantSetSpec,
    level: f64,
    x1: f64,
    x2: f64,
) -> Option<f64> {
    let f = |x3: f64| spec.functional_at_constant(net, &[x1, x2, x3])[0] - level;
    let mut lo = 1e-9;
    let mut hi = 1.0;
    if f(lo) > 0.0 {
        return None; // already above the level with x3 ~ 0
    }
    let mut guard = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_array, rat_i};
    use crate::fixtures;

    #[test]
    fn analyze_birth_death_certifies() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let w = fixtures::birth_death_witness(rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let opts = AnalyzeOptions { t_end: 40.0, history: Some(psi), ..Default::default() };
        let (report, outcome) = analyze(&net, Some(&w), &opts).unwrap();
        assert_eq!(outcome, Outcome::Certified);
        assert_eq!(report["schema"], "delaynet/1");
        assert_eq!(report["certificate"]["theorem"], "thm1");
        assert_eq!(report["structure"]["deficiency"], 1);
        assert!(report["runs"][0]["max_increment"].as_f64().unwrap() <= 1e-6);
    }

    #[test]
    fn analyze_without_witness_on_nonreversible_network_fails_classification() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let (report, outcome) = analyze(&net, None, &AnalyzeOptions::default()).unwrap();
        assert_eq!(outcome, Outcome::NotCertified);
        assert_eq!(report["certificate"]["theorem"], "none");
    }

    #[test]
    fn reports_are_deterministic_without_meta() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat(1, 2));
        let w = fixtures::birth_death_witness(rat_i(1), rat_i(1));
        let opts = AnalyzeOptions::default();
        let (a, _) = analyze(&net, Some(&w), &opts).unwrap();
        let (b, _) = analyze(&net, Some(&w), &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn history_parsing_inline_and_file() {
        let net = fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1));
        let seg = parse_history("0.1, 0.9, 11.2", &net, 0.0).unwrap();
        assert_eq!(seg.eval(0.0).unwrap(), vec![0.1, 0.9, 11.2]);
        assert!(parse_history("1,2", &net, 0.0).is_err());
        let dir = std::env::temp_dir().join("delaynet_hist_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("hist.csv");
        std::fs::write(&p, "t,x_E,x_EP,x_EPP\n-1,1,1,1\n0,2,1.5,1\n").unwrap();
        let seg2 = parse_history(p.to_str().unwrap(), &net, 0.0).unwrap();
        assert_eq!(seg2.eval(0.0).unwrap(), vec![2.0, 1.5, 1.0]);
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let net = fixtures::birth_death(rat_i(1), rat_i(1), rat_i(1));
        let psi = HistorySegment::constant(&[2.0], 0.0, 1.0);
        let traj = simulate(&net, &psi, 0.0, 0.01).unwrap();
        let csv = trajectory_csv(&net, &traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x_S1");
        assert_eq!(lines.count(), 2);
    }
}
