//! Analysis toolkit for delayed mass-action reaction networks.
//!
//! Given a network of reactions with per-reaction delays, the crate
//!
//! - parses and validates a small line-oriented network format,
//! - computes the structural invariants (linkage classes, weak
//!   reversibility, stoichiometric and kinetic subspaces, deficiency) in
//!   exact rational arithmetic,
//! - verifies dynamic equivalence and diagonal linear conjugacy against a
//!   complex-balanced target network, or searches for the constants,
//! - classifies the delayed system into a constructive decomposition
//!   (delayed target reactions plus self-loop terms) that reproduces the
//!   right-hand side exactly,
//! - builds the matching Lyapunov functional and certifies its descent
//!   numerically along simulated trajectories,
//! - integrates the delay equations by the method of steps with dense
//!   output, and
//! - evaluates conserved functionals, locates the unique equilibrium inside
//!   each invariant level set, and parametrizes degenerate equilibrium
//!   continua.
//!
//! Start with the runnable programs under `examples/`; each one walks a
//! single capability end to end on the bundled networks.

pub mod classifier;
pub mod conjugacy;
pub mod ddesim;
pub mod exact;
pub mod fixtures;
pub mod invariants;
pub mod kinetics;
pub mod lyapunov;
pub mod net;
pub mod numeric;
pub mod pipeline;
pub mod structure;

pub use classifier::{classify, StabilityCertificate, TheoremTag};
pub use conjugacy::{check_dynamic_equivalence, check_linear_conjugacy, find_conjugacy};
pub use ddesim::{dense_eval, simulate, HistorySegment, Trajectory};
pub use exact::Rat;
pub use invariants::{
    delta_coefficients, equilibrium_in_set, g_eval, gn_eval, invariant_set, InvariantSetKind,
    InvariantSetSpec,
};
pub use lyapunov::{build_functional, evaluate, lie_derivative_estimate, LyapunovFunctional};
pub use net::{parse_network, parse_witness, serialize_network, validate_network, Complex, ConjugacyWitness, DelayedNetwork, Reaction};
pub use structure::{deficiency, structure_report, StructureReport};
