//! Block-entry expressions and their algebra: type-checking against slot
//! pairs, adjoints, structural depth, and the sound rewrite rules
//! (`S*S = I`, `S*·emb = 0`, `emb*·emb' = fin`, …).

use super::Slot;
use crate::numkernel::{C64, CMat};
use nalgebra::Complex;

/// One block of a structured operator, as a lazy expression over a closed
/// primitive set.
#[derive(Debug, Clone)]
pub enum BlockEntry {
    Zero,
    /// Identity between equal slots.
    Ident,
    /// Finite matrix block, `Finite(k) → Finite(m)` with an `m×k` matrix.
    Fin(CMat),
    /// Forward shift on a shift slot: `eₙ⊗v ↦ eₙ₊₁⊗v`.
    Shift,
    ShiftAdj,
    /// `Finite(k) → Shift(w)`: `v ↦ (Bv)` placed at coordinate 0; `B` is `w×k`.
    Emb(CMat),
    /// Adjoint of `Emb(B)`: `x ↦ B* x₀`.
    EmbAdj(CMat),
    /// Outer forward shift on a doubly-graded slot: `e₍ⱼ,ₖ₎ ↦ e₍ⱼ₊₁,ₖ₎`.
    OuterShift,
    OuterShiftAdj,
    /// `Shift(w) → Shift2(w)`: place the whole shift fiber at outer
    /// coordinate 0, `eₖ⊗v ↦ e₍₀,ₖ₎⊗v`.
    NestEmb,
    NestEmbAdj,
    Sum(Vec<BlockEntry>),
    /// Composition; `Prod([a, b])` is `a ∘ b` (apply `b` first).
    Prod(Vec<BlockEntry>),
    Scale(C64, Box<BlockEntry>),
}

impl BlockEntry {
    pub fn scale(c: C64, e: BlockEntry) -> BlockEntry {
        BlockEntry::Scale(c, Box::new(e))
    }

    pub fn adjoint(&self) -> BlockEntry {
        use BlockEntry::*;
        match self {
            Zero => Zero,
            Ident => Ident,
            Fin(m) => Fin(m.adjoint()),
            Shift => ShiftAdj,
            ShiftAdj => Shift,
            Emb(b) => EmbAdj(b.clone()),
            EmbAdj(b) => Emb(b.clone()),
            OuterShift => OuterShiftAdj,
            OuterShiftAdj => OuterShift,
            NestEmb => NestEmbAdj,
            NestEmbAdj => NestEmb,
            Sum(v) => Sum(v.iter().map(|e| e.adjoint()).collect()),
            Prod(v) => Prod(v.iter().rev().map(|e| e.adjoint()).collect()),
            Scale(c, e) => Scale(c.conj(), Box::new(e.adjoint())),
        }
    }

    /// Infer the domain slot given the codomain slot, for type-checking
    /// product chains. `None` means the entry fits any domain (Zero).
    fn domain_given_codomain(&self, codomain: Slot) -> Result<Option<Slot>, String> {
        use BlockEntry::*;
        match self {
            Zero => Ok(None),
            Ident => Ok(Some(codomain)),
            Fin(m) => {
                if codomain != Slot::Finite(m.nrows()) {
                    return Err(format!("Fin block is {}×{}, codomain {:?}", m.nrows(), m.ncols(), codomain));
                }
                Ok(Some(Slot::Finite(m.ncols())))
            }
            Shift | ShiftAdj => match codomain {
                Slot::Shift(w) => Ok(Some(Slot::Shift(w))),
                _ => Err("shift entry needs a shift slot".into()),
            },
            Emb(b) => {
                if codomain != Slot::Shift(b.nrows()) {
                    return Err(format!("Emb block is {}×{}, codomain {:?}", b.nrows(), b.ncols(), codomain));
                }
                Ok(Some(Slot::Finite(b.ncols())))
            }
            EmbAdj(b) => {
                if codomain != Slot::Finite(b.ncols()) {
                    return Err(format!("EmbAdj block is {}×{}, codomain {:?}", b.nrows(), b.ncols(), codomain));
                }
                Ok(Some(Slot::Shift(b.nrows())))
            }
            OuterShift | OuterShiftAdj => match codomain {
                Slot::Shift2(w) => Ok(Some(Slot::Shift2(w))),
                _ => Err("outer shift entry needs a doubly-graded slot".into()),
            },
            NestEmb => match codomain {
                Slot::Shift2(w) => Ok(Some(Slot::Shift(w))),
                _ => Err("NestEmb codomain must be a doubly-graded slot".into()),
            },
            NestEmbAdj => match codomain {
                Slot::Shift(w) => Ok(Some(Slot::Shift2(w))),
                _ => Err("NestEmbAdj codomain must be a shift slot".into()),
            },
            Sum(terms) => {
                let mut dom: Option<Slot> = None;
                for t in terms {
                    if let Some(d) = t.domain_given_codomain(codomain)? {
                        match dom {
                            None => dom = Some(d),
                            Some(prev) if prev == d => {}
                            Some(prev) => {
                                return Err(format!("sum mixes domains {:?} and {:?}", prev, d))
                            }
                        }
                    }
                }
                Ok(dom)
            }
            Prod(factors) => {
                let mut cur = codomain;
                for f in factors {
                    match f.domain_given_codomain(cur)? {
                        Some(d) => cur = d,
                        None => return Ok(None), // zero factor annihilates the chain
                    }
                }
                Ok(Some(cur))
            }
            Scale(_, e) => e.domain_given_codomain(codomain),
        }
    }

    /// Type-check this entry against a (codomain, domain) slot pair.
    pub fn check(&self, row: Slot, col: Slot) -> Result<(), String> {
        match self.domain_given_codomain(row) {
            Err(e) => Err(e),
            Ok(None) => Ok(()),
            Ok(Some(d)) if d == col => Ok(()),
            Ok(Some(d)) => Err(format!("entry expects domain {:?}, slot is {:?}", d, col)),
        }
    }

    /// Number of primitive factors along the deepest composition chain; the
    /// window default for identity checks is driven by this.
    pub fn depth(&self) -> usize {
        use BlockEntry::*;
        match self {
            Zero | Ident => 0,
            Fin(_) | Shift | ShiftAdj | Emb(_) | EmbAdj(_) | OuterShift | OuterShiftAdj
            | NestEmb | NestEmbAdj => 1,
            Sum(v) => v.iter().map(|e| e.depth()).max().unwrap_or(0),
            Prod(v) => v.iter().map(|e| e.depth()).sum(),
            Scale(_, e) => e.depth(),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, BlockEntry::Zero)
    }

    /// Apply the sound rewrite rules bottom-up.
    pub fn simplify(&self) -> BlockEntry {
        use BlockEntry::*;
        match self {
            Sum(terms) => {
                let mut flat: Vec<BlockEntry> = Vec::new();
                for t in terms {
                    match t.simplify() {
                        Zero => {}
                        Sum(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                match flat.len() {
                    0 => Zero,
                    1 => flat.pop().unwrap(),
                    _ => Sum(flat),
                }
            }
            Scale(c, e) => {
                let inner = e.simplify();
                if inner.is_zero() || c.norm() == 0.0 {
                    Zero
                } else if (c - Complex::new(1.0, 0.0)).norm() == 0.0 {
                    inner
                } else if let Scale(c2, e2) = inner {
                    Scale(c * c2, e2)
                } else if let Fin(m) = inner {
                    Fin(m * *c)
                } else {
                    Scale(*c, Box::new(inner))
                }
            }
            Prod(factors) => {
                let mut flat: Vec<BlockEntry> = Vec::new();
                let mut coeff = Complex::new(1.0, 0.0);
                for f in factors {
                    match f.simplify() {
                        Zero => return Zero,
                        Ident => {}
                        Prod(inner) => flat.extend(inner),
                        Scale(c, e) => {
                            coeff *= c;
                            match *e {
                                Prod(inner) => flat.extend(inner),
                                other => flat.push(other),
                            }
                        }
                        other => flat.push(other),
                    }
                }
                // pairwise contraction rules, applied to fixpoint
                loop {
                    let mut changed = false;
                    let mut i = 0;
                    while i + 1 < flat.len() {
                        if let Some(rewrite) = contract_pair(&flat[i], &flat[i + 1]) {
                            match rewrite {
                                Zero => return Zero,
                                Ident => {
                                    flat.drain(i..i + 2);
                                }
                                other => {
                                    flat[i] = other;
                                    flat.remove(i + 1);
                                }
                            }
                            changed = true;
                            if i > 0 {
                                i -= 1;
                            }
                        } else {
                            i += 1;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                let base = match flat.len() {
                    0 => Ident,
                    1 => flat.pop().unwrap(),
                    _ => Prod(flat),
                };
                if coeff == Complex::new(1.0, 0.0) {
                    base
                } else {
                    Scale(coeff, Box::new(base)).simplify()
                }
            }
            other => other.clone(),
        }
    }
}

/// Contract an adjacent pair `a ∘ b` in a product when a sound rule applies.
fn contract_pair(a: &BlockEntry, b: &BlockEntry) -> Option<BlockEntry> {
    use BlockEntry::*;
    match (a, b) {
        // isometry relations
        (ShiftAdj, Shift) => Some(Ident),
        (OuterShiftAdj, OuterShift) => Some(Ident),
        (NestEmbAdj, NestEmb) => Some(Ident),
        // coordinate-0 orthogonality
        (ShiftAdj, Emb(_)) => Some(Zero),
        (EmbAdj(_), Shift) => Some(Zero),
        (OuterShiftAdj, NestEmb) => Some(Zero),
        (NestEmbAdj, OuterShift) => Some(Zero),
        // finite algebra
        (EmbAdj(b1), Emb(b2)) => Some(Fin(b1.adjoint() * b2)),
        (Fin(m), Fin(n)) => Some(Fin(m * n)),
        (Emb(b1), Fin(n)) => Some(Emb(b1 * n)),
        (Fin(m), EmbAdj(b1)) => Some(EmbAdj(b1 * m.adjoint())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    fn cm(v: &[&[f64]]) -> CMat {
        CMat::from_fn(v.len(), v[0].len(), |i, j| Complex::new(v[i][j], 0.0))
    }

    #[test]
    fn shift_adj_shift_is_identity() {
        let e = BlockEntry::Prod(vec![BlockEntry::ShiftAdj, BlockEntry::Shift]);
        assert!(matches!(e.simplify(), BlockEntry::Ident));
    }

    #[test]
    fn shift_adj_emb_is_zero() {
        let e = BlockEntry::Prod(vec![BlockEntry::ShiftAdj, BlockEntry::Emb(cm(&[&[1.0]]))]);
        assert!(matches!(e.simplify(), BlockEntry::Zero));
    }

    #[test]
    fn embadj_emb_is_finite_gram() {
        let b = cm(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let e = BlockEntry::Prod(vec![BlockEntry::EmbAdj(b.clone()), BlockEntry::Emb(b.clone())]);
        match e.simplify() {
            BlockEntry::Fin(m) => assert!((m - b.adjoint() * &b).norm() < 1e-14),
            other => panic!("expected Fin, got {other:?}"),
        }
    }

    #[test]
    fn adjoint_reverses_products() {
        let e = BlockEntry::Prod(vec![BlockEntry::Shift, BlockEntry::Emb(cm(&[&[1.0]]))]);
        match e.adjoint() {
            BlockEntry::Prod(v) => {
                assert!(matches!(v[0], BlockEntry::EmbAdj(_)));
                assert!(matches!(v[1], BlockEntry::ShiftAdj));
            }
            other => panic!("expected Prod, got {other:?}"),
        }
    }

    #[test]
    fn typecheck_rejects_mismatched_emb() {
        let e = BlockEntry::Emb(cm(&[&[1.0, 0.0]]));
        assert!(e.check(Slot::Shift(1), Slot::Finite(2)).is_ok());
        assert!(e.check(Slot::Shift(2), Slot::Finite(2)).is_err());
        assert!(e.check(Slot::Finite(1), Slot::Finite(2)).is_err());
    }
}
