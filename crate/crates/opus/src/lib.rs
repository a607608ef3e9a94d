//! Toolkit for deciding whether a Hilbert-space operator admits 2-isometric
//! liftings of type I or type II, constructing those liftings and the Brownian
//! extensions they induce, and checking the associated analytic (Dirichlet-type)
//! shift models — all at desk scale (dense finite blocks, finitely presented
//! shift spaces, exact evaluation on finitely supported vectors).
//!
//! The crate is organised around the operator classes involved:
//!
//! * [`numkernel`] — dense complex linear-algebra primitives (hermitian
//!   eigendecomposition, positive square roots, range/kernel bases, Douglas
//!   factorisation).
//! * [`structured`] — exact block-operator algebra on direct sums of shift
//!   spaces `ℓ²₊(Cʷ)` and finite spaces `Cᵐ`; every lifting built here lives
//!   on such a space.
//! * [`classify`] — class predicates (isometry, expansivity, concavity,
//!   2-isometry, quasi-(iso/con)traction), canonical block decompositions,
//!   Cauchy duals, Wold splitting and analyticity probes.
//! * [`certificates`] — feasibility searches for the positive operators `A`
//!   that certify membership in the lifting classes: fixed-point subspaces,
//!   alternating-projection (Dykstra) solvers, Cesàro limits and a
//!   Neumann-series fixed-point upgrade.
//! * [`liftings`] — the constructive side: isometric (Schäffer) liftings,
//!   type I and type II 2-isometric liftings, Brownian extensions, minimal
//!   reductions and the isomorphism criterion for minimal liftings.
//! * [`dirichlet`] — analytic function models: Θ/Θ′ coefficient series, the
//!   atomic operator measure of analytic Brownian unitaries, and polynomial
//!   compression probes.
//! * [`cli`] — the `opus` command-line surface, operator file format,
//!   transcripts and seeded instance generators.
//!
//! See the `examples/` directory for one runnable walk-through per major
//! capability, and `tests/acceptance.rs` for the property suite the crate is
//! held to.

pub mod numkernel;
pub mod structured;
pub mod classify;
pub mod certificates;
pub mod liftings;
pub mod dirichlet;
pub mod cli;

/// Default comparison tolerance used throughout the crate.
pub const DEFAULT_TOL: f64 = 1e-9;

pub use numkernel::FiniteOperator;
pub use structured::{FinSuppVector, Slot, StructuredOperator, StructuredSpace};
