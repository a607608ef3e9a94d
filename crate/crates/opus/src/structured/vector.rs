//! Finitely supported vectors — the exact evaluation currency. Supports are
//! exact (sorted index maps); scalars are floating point.

use super::{Slot, StructuredError, StructuredResult, StructuredSpace};
use crate::numkernel::{C64, CVec};
use nalgebra::Complex;
use std::collections::BTreeMap;

/// Per-slot coefficient data.
#[derive(Debug, Clone)]
pub enum SlotData {
    Fin(CVec),
    Shift(BTreeMap<usize, CVec>),
    Shift2(BTreeMap<(usize, usize), CVec>),
}

impl SlotData {
    pub fn zero(slot: Slot) -> Self {
        match slot {
            Slot::Finite(m) => SlotData::Fin(CVec::zeros(m)),
            Slot::Shift(_) => SlotData::Shift(BTreeMap::new()),
            Slot::Shift2(_) => SlotData::Shift2(BTreeMap::new()),
        }
    }

    pub fn is_zero_within(&self, tol: f64) -> bool {
        match self {
            SlotData::Fin(v) => v.norm() <= tol,
            SlotData::Shift(m) => m.values().all(|v| v.norm() <= tol),
            SlotData::Shift2(m) => m.values().all(|v| v.norm() <= tol),
        }
    }

    fn add_assign(&mut self, rhs: &SlotData) {
        match (self, rhs) {
            (SlotData::Fin(a), SlotData::Fin(b)) => *a += b,
            (SlotData::Shift(a), SlotData::Shift(b)) => {
                for (k, v) in b {
                    a.entry(*k)
                        .and_modify(|cur| *cur += v)
                        .or_insert_with(|| v.clone());
                }
            }
            (SlotData::Shift2(a), SlotData::Shift2(b)) => {
                for (k, v) in b {
                    a.entry(*k)
                        .and_modify(|cur| *cur += v)
                        .or_insert_with(|| v.clone());
                }
            }
            _ => panic!("slot kind mismatch in add"),
        }
    }

    fn scale_assign(&mut self, c: C64) {
        match self {
            SlotData::Fin(v) => *v *= c,
            SlotData::Shift(m) => m.values_mut().for_each(|v| *v *= c),
            SlotData::Shift2(m) => m.values_mut().for_each(|v| *v *= c),
        }
    }

    fn norm_sqr(&self) -> f64 {
        match self {
            SlotData::Fin(v) => v.norm_squared(),
            SlotData::Shift(m) => m.values().map(|v| v.norm_squared()).sum(),
            SlotData::Shift2(m) => m.values().map(|v| v.norm_squared()).sum(),
        }
    }

    /// ⟨self, other⟩, linear in `self`.
    fn inner(&self, other: &SlotData) -> C64 {
        match (self, other) {
            (SlotData::Fin(a), SlotData::Fin(b)) => b.dotc(a),
            (SlotData::Shift(a), SlotData::Shift(b)) => {
                let mut acc = Complex::new(0.0, 0.0);
                for (k, v) in a {
                    if let Some(w) = b.get(k) {
                        acc += w.dotc(v);
                    }
                }
                acc
            }
            (SlotData::Shift2(a), SlotData::Shift2(b)) => {
                let mut acc = Complex::new(0.0, 0.0);
                for (k, v) in a {
                    if let Some(w) = b.get(k) {
                        acc += w.dotc(v);
                    }
                }
                acc
            }
            _ => panic!("slot kind mismatch in inner product"),
        }
    }

    /// Drop stored coefficients with negligible norm.
    fn prune(&mut self, eps: f64) {
        match self {
            SlotData::Fin(_) => {}
            SlotData::Shift(m) => m.retain(|_, v| v.norm() > eps),
            SlotData::Shift2(m) => m.retain(|_, v| v.norm() > eps),
        }
    }
}

/// Finitely supported vector in a structured space.
#[derive(Debug, Clone)]
pub struct FinSuppVector {
    pub space: StructuredSpace,
    pub data: Vec<SlotData>,
}

impl FinSuppVector {
    pub fn zero(space: &StructuredSpace) -> Self {
        let data = space.slots.iter().map(|&s| SlotData::zero(s)).collect();
        Self { space: space.clone(), data }
    }

    /// Unit basis vector in a finite slot.
    pub fn finite_basis(space: &StructuredSpace, slot: usize, component: usize) -> Self {
        let mut v = Self::zero(space);
        if let SlotData::Fin(x) = &mut v.data[slot] {
            x[component] = Complex::new(1.0, 0.0);
        } else {
            panic!("slot {slot} is not finite");
        }
        v
    }

    /// Basis vector `eₙ ⊗ e_c` in a shift slot.
    pub fn shift_basis(space: &StructuredSpace, slot: usize, index: usize, component: usize) -> Self {
        let mut v = Self::zero(space);
        let w = space.slots[slot].fiber_dim();
        let mut unit = CVec::zeros(w);
        unit[component] = Complex::new(1.0, 0.0);
        match &mut v.data[slot] {
            SlotData::Shift(m) => {
                m.insert(index, unit);
            }
            _ => panic!("slot {slot} is not a shift slot"),
        }
        v
    }

    /// Basis vector `e₍ⱼ,ₖ₎ ⊗ e_c` in a doubly-graded slot.
    pub fn shift2_basis(
        space: &StructuredSpace,
        slot: usize,
        outer: usize,
        inner: usize,
        component: usize,
    ) -> Self {
        let mut v = Self::zero(space);
        let w = space.slots[slot].fiber_dim();
        let mut unit = CVec::zeros(w);
        unit[component] = Complex::new(1.0, 0.0);
        match &mut v.data[slot] {
            SlotData::Shift2(m) => {
                m.insert((outer, inner), unit);
            }
            _ => panic!("slot {slot} is not doubly graded"),
        }
        v
    }

    /// Place a finite vector into a finite slot.
    pub fn embed_finite(space: &StructuredSpace, slot: usize, x: &CVec) -> Self {
        let mut v = Self::zero(space);
        match &mut v.data[slot] {
            SlotData::Fin(f) => f.copy_from(x),
            _ => panic!("slot {slot} is not finite"),
        }
        v
    }

    /// Coefficient vector stored in a finite slot.
    pub fn finite_part(&self, slot: usize) -> CVec {
        match &self.data[slot] {
            SlotData::Fin(v) => v.clone(),
            _ => panic!("slot {slot} is not finite"),
        }
    }

    pub fn same_space(&self, other: &Self) -> StructuredResult<()> {
        if self.space != other.space {
            return Err(StructuredError::SpaceMismatch(
                "vectors live in different structured spaces".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            a.add_assign(b);
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.scale(Complex::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            a.scale_assign(c);
        }
        out
    }

    /// ℓ² pairing ⟨self, other⟩, linear in `self`, conjugate-linear in `other`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|d| d.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest coefficient magnitude over the whole support.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for d in &self.data {
            match d {
                SlotData::Fin(v) => {
                    for z in v.iter() {
                        m = m.max(z.norm());
                    }
                }
                SlotData::Shift(map) => {
                    for v in map.values() {
                        for z in v.iter() {
                            m = m.max(z.norm());
                        }
                    }
                }
                SlotData::Shift2(map) => {
                    for v in map.values() {
                        for z in v.iter() {
                            m = m.max(z.norm());
                        }
                    }
                }
            }
        }
        m
    }

    pub fn prune(&mut self, eps: f64) {
        for d in self.data.iter_mut() {
            d.prune(eps);
        }
    }

    /// Translate all shift indices: `inner` shifts every `Shift` index and the
    /// inner index of every `Shift2` slot by +1; `outer` shifts the outer
    /// index of every `Shift2` slot by +1. Used by the tail-stabilization
    /// assertion of identity checks.
    pub fn translate(&self, outer: bool) -> Self {
        let mut out = Self::zero(&self.space);
        for (i, d) in self.data.iter().enumerate() {
            match d {
                SlotData::Fin(v) => out.data[i] = SlotData::Fin(v.clone()),
                SlotData::Shift(m) => {
                    let mut nm = BTreeMap::new();
                    for (k, v) in m {
                        let nk = if outer { *k } else { k + 1 };
                        nm.insert(nk, v.clone());
                    }
                    out.data[i] = SlotData::Shift(nm);
                }
                SlotData::Shift2(m) => {
                    let mut nm = BTreeMap::new();
                    for ((j, k), v) in m {
                        let idx = if outer { (j + 1, *k) } else { (*j, k + 1) };
                        nm.insert(idx, v.clone());
                    }
                    out.data[i] = SlotData::Shift2(nm);
                }
            }
        }
        out
    }
}
