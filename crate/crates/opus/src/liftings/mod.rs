//! Constructors and verifiers for 2-isometric liftings (type I and type II),
//! the extensions they induce, Brownian lifts, minimal reductions and the
//! isomorphism criterion for minimal type II liftings.
//!
//! Every bundle built here is verified against the same battery: the lifting
//! property for powers n ≤ 6, the 2-isometry identity, the type-defining
//! condition, the covariance formula against the extracted Δ, and the balance
//! identity relating the condition functional to the compression.

mod verify;
mod construct;
mod reduce;
mod extend;

pub use construct::{
    brownian_isometric_lift_p, build_from_extension, lift_isometric, lift_type1, lift_type2,
    BuildRestriction,
};
pub use extend::{extend_concave, extend_expansive, Extension};
pub use reduce::{isomorphic_check, minimal_reduction};
pub use verify::{classify_lifting, condition_functional, verify_bundle, LiftingVerification};

use crate::numkernel::FiniteOperator;
use crate::structured::{DeltaFinitePart, MinimalityVerdict, StructuredOperator};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("operator is not a contraction: norm {0:.6}")]
    NotContraction(f64),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
    #[error("not a lifting: {0}")]
    NotLifting(String),
    #[error("construction condition violated: {0}")]
    ConditionViolated(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("operator is not concave")]
    NotConcave,
    #[error("operator is not expansive: lambda_min(Δ) = {0:.3e}")]
    NotExpansive(f64),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Structured(#[from] crate::structured::StructuredError),
    #[error(transparent)]
    Num(#[from] crate::numkernel::NumError),
    #[error(transparent)]
    Classify(#[from] crate::classify::ClassifyError),
    #[error(transparent)]
    Cert(#[from] crate::certificates::CertError),
}

pub type LiftResult<T> = Result<T, LiftError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TypeTag {
    TypeI,
    TypeII,
    None,
}

/// A verified 2-isometric lifting `S` of `t` on a structured space, with `H`
/// identified with a set of finite slots.
#[derive(Debug, Clone)]
pub struct LiftingBundle {
    pub s: StructuredOperator,
    /// finite slots carrying H, in block order
    pub h_slots: Vec<usize>,
    /// the compressed operator `P_H S|_H`
    pub t: FiniteOperator,
    pub type_tag: TypeTag,
    pub covariance: f64,
    pub minimal: MinimalityVerdict,
    /// the contraction Γ of the corner factorisation; zero for both
    /// constructed types
    pub gamma: Option<FiniteOperator>,
    pub delta: DeltaFinitePart,
    pub verification: LiftingVerification,
}
