//! Structured operators: lazy block matrices of entry expressions, applied
//! exactly to finitely supported vectors.

use super::entry::BlockEntry;
use super::vector::{FinSuppVector, SlotData};
use super::{StructuredError, StructuredResult, StructuredSpace};
use crate::numkernel::{C64, CVec};
use nalgebra::Complex;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct StructuredOperator {
    pub domain: StructuredSpace,
    pub codomain: StructuredSpace,
    /// `blocks[i][j]` maps domain slot `j` into codomain slot `i`.
    pub blocks: Vec<Vec<BlockEntry>>,
}

impl StructuredOperator {
    pub fn new(
        codomain: StructuredSpace,
        domain: StructuredSpace,
        blocks: Vec<Vec<BlockEntry>>,
    ) -> StructuredResult<Self> {
        if blocks.len() != codomain.n_slots() {
            return Err(StructuredError::SpaceMismatch(format!(
                "expected {} block rows, got {}",
                codomain.n_slots(),
                blocks.len()
            )));
        }
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != domain.n_slots() {
                return Err(StructuredError::SpaceMismatch(format!(
                    "row {i} has {} blocks, domain has {} slots",
                    row.len(),
                    domain.n_slots()
                )));
            }
            for (j, e) in row.iter().enumerate() {
                e.check(codomain.slots[i], domain.slots[j])
                    .map_err(|reason| StructuredError::BadEntry { row: i, col: j, reason })?;
            }
        }
        Ok(Self { domain, codomain, blocks })
    }

    pub fn endo(space: StructuredSpace, blocks: Vec<Vec<BlockEntry>>) -> StructuredResult<Self> {
        Self::new(space.clone(), space, blocks)
    }

    pub fn identity(space: &StructuredSpace) -> Self {
        let n = space.n_slots();
        let blocks = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { BlockEntry::Ident } else { BlockEntry::Zero })
                    .collect()
            })
            .collect();
        Self { domain: space.clone(), codomain: space.clone(), blocks }
    }

    pub fn is_endomorphism(&self) -> bool {
        self.domain == self.codomain
    }

    pub fn adjoint(&self) -> Self {
        let rows = self.domain.n_slots();
        let cols = self.codomain.n_slots();
        let blocks = (0..rows)
            .map(|i| (0..cols).map(|j| self.blocks[j][i].adjoint()).collect())
            .collect();
        Self { domain: self.codomain.clone(), codomain: self.domain.clone(), blocks }
    }

    /// `self ∘ rhs` as a lazy expression, with the sound rewrites applied.
    pub fn compose(&self, rhs: &Self) -> StructuredResult<Self> {
        if self.domain != rhs.codomain {
            return Err(StructuredError::SpaceMismatch(
                "compose: inner spaces disagree".into(),
            ));
        }
        let rows = self.codomain.n_slots();
        let mid = self.domain.n_slots();
        let cols = rhs.domain.n_slots();
        let mut blocks = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut row = Vec::with_capacity(cols);
            for j in 0..cols {
                let terms: Vec<BlockEntry> = (0..mid)
                    .map(|k| {
                        BlockEntry::Prod(vec![self.blocks[i][k].clone(), rhs.blocks[k][j].clone()])
                    })
                    .collect();
                row.push(BlockEntry::Sum(terms).simplify());
            }
            blocks.push(row);
        }
        Self::new(self.codomain.clone(), rhs.domain.clone(), blocks)
    }

    pub fn add(&self, rhs: &Self) -> StructuredResult<Self> {
        if self.domain != rhs.domain || self.codomain != rhs.codomain {
            return Err(StructuredError::SpaceMismatch("add: spaces disagree".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(rhs.blocks.iter())
            .map(|(ra, rb)| {
                ra.iter()
                    .zip(rb.iter())
                    .map(|(a, b)| BlockEntry::Sum(vec![a.clone(), b.clone()]).simplify())
                    .collect()
            })
            .collect();
        Self::new(self.codomain.clone(), self.domain.clone(), blocks)
    }

    pub fn sub(&self, rhs: &Self) -> StructuredResult<Self> {
        self.add(&rhs.scale(Complex::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().map(|e| BlockEntry::scale(c, e.clone()).simplify()).collect())
            .collect();
        Self { domain: self.domain.clone(), codomain: self.codomain.clone(), blocks }
    }

    /// Power `selfⁿ` (endomorphisms only), as a lazy expression.
    pub fn pow(&self, n: usize) -> StructuredResult<Self> {
        if !self.is_endomorphism() {
            return Err(StructuredError::SpaceMismatch("pow needs an endomorphism".into()));
        }
        let mut acc = Self::identity(&self.domain);
        for _ in 0..n {
            acc = self.compose(&acc)?;
        }
        Ok(acc)
    }

    pub fn simplify(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().map(|e| e.simplify()).collect())
            .collect();
        Self { domain: self.domain.clone(), codomain: self.codomain.clone(), blocks }
    }

    /// Largest composition depth over the blocks.
    pub fn depth(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|row| row.iter().map(|e| e.depth()))
            .max()
            .unwrap_or(0)
    }

    /// Window bound for identity checks: largest coupling index (couplings sit
    /// at coordinate 0, reachable by at most `depth` shifts) plus twice the
    /// expression depth plus two.
    pub fn default_window(&self) -> usize {
        2 * self.depth() + 2
    }

    /// Exact image of a finitely supported vector.
    pub fn apply(&self, x: &FinSuppVector) -> StructuredResult<FinSuppVector> {
        if x.space != self.domain {
            return Err(StructuredError::SpaceMismatch(
                "apply: vector space does not match operator domain".into(),
            ));
        }
        let mut out = FinSuppVector::zero(&self.codomain);
        for (i, row) in self.blocks.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                apply_entry_into(e, &x.data[j], &mut out.data[i], Complex::new(1.0, 0.0));
            }
        }
        out.prune(0.0);
        Ok(out)
    }
}

/// Evaluate `coeff · entry(x)` and accumulate into `out`.
fn apply_entry_into(e: &BlockEntry, x: &SlotData, out: &mut SlotData, coeff: C64) {
    use BlockEntry::*;
    if coeff.norm() == 0.0 {
        return;
    }
    match e {
        Zero => {}
        Ident => accumulate(out, x, coeff),
        Fin(m) => {
            if let SlotData::Fin(v) = x {
                if let SlotData::Fin(o) = out {
                    *o += m * v * coeff;
                } else {
                    panic!("Fin entry writing into non-finite slot");
                }
            } else {
                panic!("Fin entry applied to non-finite data");
            }
        }
        Shift => {
            if let (SlotData::Shift(mx), SlotData::Shift(mo)) = (x, out) {
                for (k, v) in mx {
                    add_coeff(mo, k + 1, &(v * coeff));
                }
            } else {
                panic!("Shift entry on wrong slot data");
            }
        }
        ShiftAdj => {
            if let (SlotData::Shift(mx), SlotData::Shift(mo)) = (x, out) {
                for (k, v) in mx {
                    if *k > 0 {
                        add_coeff(mo, k - 1, &(v * coeff));
                    }
                }
            } else {
                panic!("ShiftAdj entry on wrong slot data");
            }
        }
        Emb(b) => {
            if let (SlotData::Fin(v), SlotData::Shift(mo)) = (x, out) {
                add_coeff(mo, 0, &(b * v * coeff));
            } else {
                panic!("Emb entry on wrong slot data");
            }
        }
        EmbAdj(b) => {
            if let (SlotData::Shift(mx), SlotData::Fin(o)) = (x, out) {
                if let Some(v) = mx.get(&0) {
                    *o += b.adjoint() * v * coeff;
                }
            } else {
                panic!("EmbAdj entry on wrong slot data");
            }
        }
        OuterShift => {
            if let (SlotData::Shift2(mx), SlotData::Shift2(mo)) = (x, out) {
                for ((j, k), v) in mx {
                    add_coeff2(mo, (j + 1, *k), &(v * coeff));
                }
            } else {
                panic!("OuterShift entry on wrong slot data");
            }
        }
        OuterShiftAdj => {
            if let (SlotData::Shift2(mx), SlotData::Shift2(mo)) = (x, out) {
                for ((j, k), v) in mx {
                    if *j > 0 {
                        add_coeff2(mo, (j - 1, *k), &(v * coeff));
                    }
                }
            } else {
                panic!("OuterShiftAdj entry on wrong slot data");
            }
        }
        NestEmb => {
            if let (SlotData::Shift(mx), SlotData::Shift2(mo)) = (x, out) {
                for (k, v) in mx {
                    add_coeff2(mo, (0, *k), &(v * coeff));
                }
            } else {
                panic!("NestEmb entry on wrong slot data");
            }
        }
        NestEmbAdj => {
            if let (SlotData::Shift2(mx), SlotData::Shift(mo)) = (x, out) {
                for ((j, k), v) in mx {
                    if *j == 0 {
                        add_coeff(mo, *k, &(v * coeff));
                    }
                }
            } else {
                panic!("NestEmbAdj entry on wrong slot data");
            }
        }
        Sum(terms) => {
            for t in terms {
                apply_entry_into(t, x, out, coeff);
            }
        }
        Prod(factors) => {
            // apply right-to-left; intermediate slot data inferred on the fly
            let mut cur = x.clone();
            let mut cur_coeff = coeff;
            for f in factors.iter().rev() {
                let mut next = fresh_output(f, &cur);
                apply_entry_into(f, &cur, &mut next, cur_coeff);
                cur = next;
                cur_coeff = Complex::new(1.0, 0.0);
            }
            accumulate(out, &cur, Complex::new(1.0, 0.0));
        }
        Scale(c, inner) => apply_entry_into(inner, x, out, coeff * c),
    }
}

/// Allocate the right kind of output data for one primitive application.
fn fresh_output(e: &BlockEntry, x: &SlotData) -> SlotData {
    use BlockEntry::*;
    match e {
        Fin(m) => SlotData::Fin(CVec::zeros(m.nrows())),
        EmbAdj(b) => SlotData::Fin(CVec::zeros(b.ncols())),
        Emb(_) | Shift | ShiftAdj | NestEmbAdj => SlotData::Shift(BTreeMap::new()),
        OuterShift | OuterShiftAdj | NestEmb => SlotData::Shift2(BTreeMap::new()),
        Ident | Zero => match x {
            SlotData::Fin(v) => SlotData::Fin(CVec::zeros(v.len())),
            SlotData::Shift(_) => SlotData::Shift(BTreeMap::new()),
            SlotData::Shift2(_) => SlotData::Shift2(BTreeMap::new()),
        },
        Sum(terms) => terms
            .iter()
            .map(|t| fresh_output(t, x))
            .next()
            .unwrap_or_else(|| SlotData::zero_like(x)),
        Prod(factors) => {
            let mut cur = x.clone();
            for f in factors.iter().rev() {
                cur = fresh_output(f, &cur);
            }
            cur
        }
        Scale(_, inner) => fresh_output(inner, x),
    }
}

impl SlotData {
    fn zero_like(x: &SlotData) -> SlotData {
        match x {
            SlotData::Fin(v) => SlotData::Fin(CVec::zeros(v.len())),
            SlotData::Shift(_) => SlotData::Shift(BTreeMap::new()),
            SlotData::Shift2(_) => SlotData::Shift2(BTreeMap::new()),
        }
    }
}

fn accumulate(out: &mut SlotData, x: &SlotData, coeff: C64) {
    match (out, x) {
        (SlotData::Fin(o), SlotData::Fin(v)) => *o += v * coeff,
        (SlotData::Shift(mo), SlotData::Shift(mx)) => {
            for (k, v) in mx {
                add_coeff(mo, *k, &(v * coeff));
            }
        }
        (SlotData::Shift2(mo), SlotData::Shift2(mx)) => {
            for (k, v) in mx {
                add_coeff2(mo, *k, &(v * coeff));
            }
        }
        _ => panic!("slot kind mismatch in accumulate"),
    }
}

fn add_coeff(m: &mut BTreeMap<usize, CVec>, k: usize, v: &CVec) {
    m.entry(k).and_modify(|cur| *cur += v).or_insert_with(|| v.clone());
}

fn add_coeff2(m: &mut BTreeMap<(usize, usize), CVec>, k: (usize, usize), v: &CVec) {
    m.entry(k).and_modify(|cur| *cur += v).or_insert_with(|| v.clone());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::CMat;
    use crate::structured::Slot;

    fn shift_space(w: usize) -> StructuredSpace {
        StructuredSpace::new(vec![Slot::Shift(w)]).unwrap()
    }

    #[test]
    fn shift_moves_basis_up() {
        let sp = shift_space(2);
        let s = StructuredOperator::endo(sp.clone(), vec![vec![BlockEntry::Shift]]).unwrap();
        let e0 = FinSuppVector::shift_basis(&sp, 0, 0, 1);
        let y = s.apply(&e0).unwrap();
        let e1 = FinSuppVector::shift_basis(&sp, 0, 1, 1);
        assert!(y.sub(&e1).norm() < 1e-15);
    }

    #[test]
    fn emb_places_at_coordinate_zero() {
        let sp = StructuredSpace::new(vec![Slot::Shift(2), Slot::Finite(2)]).unwrap();
        let b = CMat::identity(2, 2);
        let s = StructuredOperator::endo(
            sp.clone(),
            vec![
                vec![BlockEntry::Shift, BlockEntry::Emb(b)],
                vec![BlockEntry::Zero, BlockEntry::Zero],
            ],
        )
        .unwrap();
        let v = FinSuppVector::finite_basis(&sp, 1, 0);
        let y = s.apply(&v).unwrap();
        let want = FinSuppVector::shift_basis(&sp, 0, 0, 0);
        assert!(y.sub(&want).norm() < 1e-15);
    }

    #[test]
    fn adjoint_pairing_on_primitives() {
        let sp = StructuredSpace::new(vec![Slot::Shift(2), Slot::Finite(2)]).unwrap();
        let b = CMat::from_fn(2, 2, |i, j| Complex::new((i + 2 * j) as f64, 1.0));
        let s = StructuredOperator::endo(
            sp.clone(),
            vec![
                vec![BlockEntry::Shift, BlockEntry::Emb(b.clone())],
                vec![
                    BlockEntry::Prod(vec![BlockEntry::EmbAdj(b), BlockEntry::Shift]).simplify(),
                    BlockEntry::Fin(CMat::identity(2, 2)),
                ],
            ],
        )
        .unwrap();
        let sadj = s.adjoint();
        for (idx, comp) in [(0usize, 0usize), (1, 1), (2, 0)] {
            let x = FinSuppVector::shift_basis(&sp, 0, idx, comp);
            let y = FinSuppVector::finite_basis(&sp, 1, comp);
            let lhs = s.apply(&x).unwrap().inner(&y);
            let rhs = x.inner(&sadj.apply(&y).unwrap());
            assert!((lhs - rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn nested_slot_outer_shift_and_embedding() {
        let sp = StructuredSpace::new(vec![Slot::Shift2(1), Slot::Shift(1)]).unwrap();
        let s = StructuredOperator::endo(
            sp.clone(),
            vec![
                vec![BlockEntry::OuterShift, BlockEntry::NestEmb],
                vec![BlockEntry::Zero, BlockEntry::Shift],
            ],
        )
        .unwrap();
        let d = FinSuppVector::shift_basis(&sp, 1, 3, 0);
        let y = s.apply(&d).unwrap();
        // image: copy of e₃ at outer coordinate 0, plus e₄ in the shift slot
        let a = FinSuppVector::shift2_basis(&sp, 0, 0, 3, 0);
        let b = FinSuppVector::shift_basis(&sp, 1, 4, 0);
        assert!(y.sub(&a.add(&b)).norm() < 1e-15);
    }
}
