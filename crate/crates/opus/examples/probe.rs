use opus::numkernel::FiniteOperator;
use opus::structured::*;
use nalgebra::Complex;
fn main() {
    let t = FiniteOperator::from_real_rows(&[&[0.4, 0.1], &[0.0, 0.3]]);
    let dt = opus::numkernel::defect(&t).unwrap();
    let (q, _) = opus::numkernel::range_kernel_bases(&dt);
    let m = q.adjoint() * &dt.m;
    let sp = StructuredSpace::new(vec![Slot::Shift(q.ncols()), Slot::Finite(2)]).unwrap();
    let s = StructuredOperator::endo(sp.clone(), vec![
        vec![BlockEntry::Shift, BlockEntry::Emb(m)],
        vec![BlockEntry::Zero, BlockEntry::Fin(t.m.clone())],
    ]).unwrap();
    let s2 = s.pow(2).unwrap();
    let expr = s2.adjoint().compose(&s2).unwrap()
        .sub(&s.adjoint().compose(&s).unwrap().scale(Complex::new(2.0,0.0))).unwrap()
        .add(&StructuredOperator::identity(&sp)).unwrap();
    let rep = identity_check(&expr, None, 1e-9).unwrap();
    println!("two-iso residual = {:.3e}", rep.residual);
    // check raw vs simplified application agreement on a basis vector
    let raw = expr.clone();
    let simp = expr.simplify();
    for idx in 0..4 {
        let v = FinSuppVector::shift_basis(&sp, 0, idx, 0);
        let a = raw.apply(&v).unwrap();
        let b = simp.apply(&v).unwrap();
        println!("idx {idx}: raw {:.3e} simp {:.3e} diff {:.3e}", a.norm(), b.norm(), a.sub(&b).norm());
    }
    let v = FinSuppVector::finite_basis(&sp, 1, 0);
    let a = raw.apply(&v).unwrap();
    let b = simp.apply(&v).unwrap();
    println!("fin: raw {:.3e} simp {:.3e} diff {:.3e}", a.norm(), b.norm(), a.sub(&b).norm());
}
