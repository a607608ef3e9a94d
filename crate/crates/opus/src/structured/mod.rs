//! Exact algebra of block operators on direct sums of shift spaces and finite
//! spaces — the carrier class of every lifting constructed in this crate.
//!
//! A [`StructuredSpace`] is an ordered list of slots. A slot is either a
//! finite space `Cᵐ`, a shift space `ℓ²₊(Cʷ)`, or a doubly-graded shift space
//! `ℓ²(N×N, Cʷ)` (a shift space whose coefficient space is itself a shift
//! space). The third kind is needed by the type II lifting construction,
//! whose corner contains a forward shift over `ℓ²₊(Cʷ) ⊕ Cᵇ`; no finite list
//! of singly-graded slots can carry that operator exactly, because a banded
//! operator on finitely many `ℓ²₊(Cʷ)` slots cannot satisfy `W*W = I + 2P`
//! with `P` an infinite-rank projection.
//!
//! Operators are lazy block matrices of [`BlockEntry`] expressions. They are
//! never truncated: evaluation happens exactly on finitely supported vectors
//! ([`FinSuppVector`]), and identities are certified by exhausting a window of
//! canonical basis vectors plus a tail-stabilization (translation invariance)
//! assertion.

mod entry;
mod vector;
mod op;
mod check;

pub use entry::BlockEntry;
pub use vector::{FinSuppVector, SlotData};
pub use op::StructuredOperator;
pub use check::{
    compress, compress_power, delta_finite_part, enumerate_basis, identity_check, span_growth,
    window_entry, window_matrix, BasisLabel, DeltaFinitePart, IdentityReport, MinimalityVerdict,
    SpanGrowth, WindowBlock,
};

use thiserror::Error;

/// One summand of a structured space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Slot {
    /// `Cᵐ`
    Finite(usize),
    /// `ℓ²₊(Cʷ)`
    Shift(usize),
    /// `ℓ²(N×N, Cʷ)`, outer index first; the outer direction is the shift
    /// direction of the enclosing construction.
    Shift2(usize),
}

impl Slot {
    pub fn fiber_dim(&self) -> usize {
        match *self {
            Slot::Finite(m) | Slot::Shift(m) | Slot::Shift2(m) => m,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Slot::Finite(_))
    }
}

/// Ordered direct sum of slots.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StructuredSpace {
    pub slots: Vec<Slot>,
}

impl StructuredSpace {
    pub fn new(slots: Vec<Slot>) -> Result<Self, StructuredError> {
        if slots.is_empty() {
            return Err(StructuredError::EmptySpace);
        }
        if slots.iter().any(|s| s.fiber_dim() == 0) {
            return Err(StructuredError::ZeroSlot);
        }
        Ok(Self { slots })
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    /// Total dimension of the finite slots.
    pub fn finite_dim(&self) -> usize {
        self.slots.iter().filter(|s| s.is_finite()).map(|s| s.fiber_dim()).sum()
    }
}

#[derive(Debug, Error)]
pub enum StructuredError {
    #[error("a structured space needs at least one slot")]
    EmptySpace,
    #[error("slot dimensions must be positive")]
    ZeroSlot,
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("block entry does not type-check at ({row}, {col}): {reason}")]
    BadEntry { row: usize, col: usize, reason: String },
    #[error("window too small: stabilization mismatch {mismatch:.3e} at window {window}")]
    WindowTooSmall { window: usize, mismatch: f64 },
    #[error("operator is not in the shift-plus-finite class: {0}")]
    NotInClass(String),
    #[error(transparent)]
    Num(#[from] crate::numkernel::NumError),
}

pub type StructuredResult<T> = Result<T, StructuredError>;
