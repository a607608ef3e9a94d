//! The shared verification battery for lifting bundles, the type classifier
//! and the condition functional.

use super::{LiftError, LiftResult, TypeTag};
use crate::numkernel::{herm_part, pinv, psqrt, CMat, CVec, FiniteOperator};
use crate::structured::{
    compress_power, delta_finite_part, identity_check, FinSuppVector, Slot, StructuredOperator,
};
use nalgebra::Complex;

/// Residuals of the full bundle battery.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LiftingVerification {
    pub two_isometry_residual: f64,
    /// max over n = 2..6 of the residual of S*ⁿSⁿ = nS*S − (n−1)I
    pub power_formula_residual: f64,
    /// max over n ≤ 6 of ‖P_H Sⁿ|_H − Tⁿ‖
    pub lifting_residual: f64,
    /// type I: coupling of Δ into H⊥; type II: ‖W*X‖
    pub type_residual: f64,
    /// |cov(S) − expected| when an expected value is supplied
    pub covariance_residual: f64,
    /// residual of the balance identity F + T*(X*X+Δ_T)T − (X*X+Δ_T) = 0
    pub balance_residual: f64,
}

pub(crate) fn embed_h(
    s: &StructuredOperator,
    h_slots: &[usize],
    v: &CVec,
) -> FinSuppVector {
    let space = &s.domain;
    let mut out = FinSuppVector::zero(space);
    let mut off = 0usize;
    for &si in h_slots {
        let m = space.slots[si].fiber_dim();
        let part = CVec::from_fn(m, |i, _| v[off + i]);
        out = out.add(&FinSuppVector::embed_finite(space, si, &part));
        off += m;
    }
    out
}

pub(crate) fn h_dim(s: &StructuredOperator, h_slots: &[usize]) -> usize {
    h_slots.iter().map(|&i| s.domain.slots[i].fiber_dim()).sum()
}

/// Zero out the H components of a vector (projection onto H⊥).
pub(crate) fn project_perp(v: &FinSuppVector, h_slots: &[usize]) -> FinSuppVector {
    let mut out = v.clone();
    for &si in h_slots {
        let m = v.space.slots[si].fiber_dim();
        out.data[si] = crate::structured::SlotData::Fin(CVec::zeros(m));
    }
    out
}

fn h_part(v: &FinSuppVector, h_slots: &[usize]) -> CVec {
    let dims: Vec<usize> = h_slots.iter().map(|&i| v.space.slots[i].fiber_dim()).collect();
    let total: usize = dims.iter().sum();
    let mut out = CVec::zeros(total);
    let mut off = 0;
    for (&si, &m) in h_slots.iter().zip(dims.iter()) {
        let p = v.finite_part(si);
        for i in 0..m {
            out[off + i] = p[i];
        }
        off += m;
    }
    out
}

/// Columns of `X = P_{H⊥} S|_H` over the H basis.
pub(crate) fn x_columns(
    s: &StructuredOperator,
    h_slots: &[usize],
) -> LiftResult<Vec<FinSuppVector>> {
    let d = h_dim(s, h_slots);
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let mut e = CVec::zeros(d);
        e[j] = Complex::new(1.0, 0.0);
        let img = s.apply(&embed_h(s, h_slots, &e))?;
        cols.push(project_perp(&img, h_slots));
    }
    Ok(cols)
}

/// The hermitian matrix of `X*Δ_W X + 2Re(X*W*XT)` on H.
///
/// For any 2-isometric lifting it vanishes in the type I case, is PSD in the
/// type II case, and always balances the compression:
/// `F + T*(X*X+Δ_T)T − (X*X+Δ_T) = 0`.
pub fn condition_functional(
    s: &StructuredOperator,
    h_slots: &[usize],
    t: &FiniteOperator,
    tol: f64,
) -> LiftResult<(FiniteOperator, f64)> {
    let d = h_dim(s, h_slots);
    let delta = delta_finite_part(s, tol)?;
    let delta_op = delta.as_operator(&s.domain);
    let xcols = x_columns(s, h_slots)?;
    // F1 = X*Δ_W X
    let mut f1 = CMat::zeros(d, d);
    for j in 0..d {
        let dwx = project_perp(&delta_op.apply(&xcols[j])?, h_slots);
        for i in 0..d {
            f1[(i, j)] = dwx.inner(&xcols[i]);
        }
    }
    // M = X*W*XT where (XT)h_j = X(T h_j) and W*y = P_{H⊥}S*y
    let sadj = s.adjoint();
    let mut mm = CMat::zeros(d, d);
    for j in 0..d {
        let tcol: CVec = t.m.column(j).into_owned();
        let xt = project_perp(&s.apply(&embed_h(s, h_slots, &tcol))?, h_slots);
        let wxt = project_perp(&sadj.apply(&xt)?, h_slots);
        for i in 0..d {
            mm[(i, j)] = wxt.inner(&xcols[i]);
        }
    }
    let f = herm_part(&(f1 + &mm + mm.adjoint()));
    let func = FiniteOperator::from_matrix(f);

    // balance: F + T*(X*X + Δ_T)T − (X*X + Δ_T)
    let mut xx = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            xx[(i, j)] = xcols[j].inner(&xcols[i]);
        }
    }
    let a = FiniteOperator::from_matrix(xx).add(&t.delta());
    let balance = func.add(&t.adjoint().mul(&a).mul(t)).sub(&a).op_norm();
    Ok((func, balance))
}

/// ‖W*X‖ computed exactly from the Gram of the columns `P_{H⊥} S* (X h_j)`.
pub(crate) fn w_star_x_norm(s: &StructuredOperator, h_slots: &[usize]) -> LiftResult<f64> {
    let xcols = x_columns(s, h_slots)?;
    let sadj = s.adjoint();
    let d = xcols.len();
    let mut gram = CMat::zeros(d, d);
    let cols: Vec<FinSuppVector> = xcols
        .iter()
        .map(|c| sadj.apply(c).map(|y| project_perp(&y, h_slots)))
        .collect::<Result<_, _>>()?;
    for i in 0..d {
        for j in 0..d {
            gram[(i, j)] = cols[j].inner(&cols[i]);
        }
    }
    Ok(FiniteOperator::from_matrix(gram).lambda_max().max(0.0).sqrt())
}

/// Decide the type of a given 2-isometric lifting and extract Γ.
///
/// Type I iff the Δ-carrier lies inside H; type II iff ‖W*X‖ ≤ tol. Γ is
/// recovered from the corner factorisation `W*X = Δ_W^{1/2} Γ (X*X+Δ_T)^{1/2}`
/// when the Δ_W carrier is finite, and is zero exactly when W*X = 0.
pub fn classify_lifting(
    s: &StructuredOperator,
    h_slots: &[usize],
    t: &FiniteOperator,
    tol: f64,
) -> LiftResult<(TypeTag, Option<FiniteOperator>, f64)> {
    // lifting property is a precondition
    let lift_res = lifting_residual(s, h_slots, t, 6)?;
    let scale = 1.0 + t.op_norm();
    if lift_res > tol.sqrt() * scale {
        return Err(LiftError::NotLifting(format!(
            "compression of powers deviates by {lift_res:.3e}"
        )));
    }
    let delta = delta_finite_part(s, tol)?;
    let wx = w_star_x_norm(s, h_slots)?;

    // type I: Δ carrier inside H
    let carrier_outside = delta.carrier.iter().any(|c| !h_slots.contains(c));
    let type_i_residual = if carrier_outside {
        // measure the coupling strength of Δ into H⊥
        let delta_op = delta.as_operator(&s.domain);
        let mut r = 0.0f64;
        let d = h_dim(s, h_slots);
        for j in 0..d {
            let mut e = CVec::zeros(d);
            e[j] = Complex::new(1.0, 0.0);
            let img = delta_op.apply(&embed_h(s, h_slots, &e))?;
            r = r.max(project_perp(&img, h_slots).norm());
        }
        // also the genuinely-outside scalar components
        for (si, &lam) in delta.shift_scalars.iter().enumerate() {
            if !h_slots.contains(&si) {
                r = r.max(lam.abs());
            }
        }
        r
    } else {
        0.0
    };

    let tag = if type_i_residual <= tol {
        TypeTag::TypeI
    } else if wx <= tol * (1.0 + delta.norm()) {
        TypeTag::TypeII
    } else {
        TypeTag::None
    };

    // Γ extraction
    let gamma = if wx <= tol * (1.0 + delta.norm()) {
        Some(FiniteOperator::zeros(0, 0)) // W*X = 0 ⇔ Γ = 0 (degenerate Δ_W included)
    } else {
        extract_gamma(s, h_slots, t, &delta, tol)?
    };

    Ok((tag, gamma, if tag == TypeTag::TypeII { wx } else { type_i_residual }))
}

/// Γ from `W*X = Δ_W^{1/2} Γ (X*X + Δ_T)^{1/2}`, supported when Δ_W is
/// carried by finite slots.
fn extract_gamma(
    s: &StructuredOperator,
    h_slots: &[usize],
    t: &FiniteOperator,
    delta: &crate::structured::DeltaFinitePart,
    tol: f64,
) -> LiftResult<Option<FiniteOperator>> {
    // Δ_W carrier must be finite for a matrix Γ
    let scalar_outside = delta
        .shift_scalars
        .iter()
        .enumerate()
        .any(|(si, &l)| l.abs() > tol && !h_slots.contains(&si));
    if scalar_outside {
        return Ok(None);
    }
    let perp_fin: Vec<usize> = delta
        .carrier
        .iter()
        .cloned()
        .filter(|c| !h_slots.contains(c) && s.domain.slots[*c].is_finite())
        .collect();
    if perp_fin.is_empty() {
        return Ok(None);
    }
    // Δ_W as a matrix on the perp finite carrier
    let dims: Vec<usize> = perp_fin.iter().map(|&i| s.domain.slots[i].fiber_dim()).collect();
    let total: usize = dims.iter().sum();
    let delta_op = delta.as_operator(&s.domain);
    let mut dw = CMat::zeros(total, total);
    {
        let mut off = 0;
        for (bi, &si) in perp_fin.iter().enumerate() {
            for c in 0..dims[bi] {
                let img = delta_op.apply(&FinSuppVector::finite_basis(&s.domain, si, c))?;
                let mut roff = 0;
                for (bj, &sj) in perp_fin.iter().enumerate() {
                    let p = img.finite_part(sj);
                    for r in 0..dims[bj] {
                        dw[(roff + r, off + c)] = p[r];
                    }
                    roff += dims[bj];
                }
            }
            off += dims[bi];
        }
    }
    let dw_half = psqrt(&FiniteOperator::from_matrix(herm_part(&dw)))?;
    // W*X columns restricted to the carrier
    let xcols = x_columns(s, h_slots)?;
    let sadj = s.adjoint();
    let d = xcols.len();
    let mut wx = CMat::zeros(total, d);
    for (j, xc) in xcols.iter().enumerate() {
        let y = project_perp(&sadj.apply(xc)?, h_slots);
        let mut roff = 0;
        for (bj, &sj) in perp_fin.iter().enumerate() {
            let p = y.finite_part(sj);
            for r in 0..dims[bj] {
                wx[(roff + r, j)] = p[r];
            }
            roff += dims[bj];
        }
    }
    // (X*X + Δ_T)^{1/2}
    let mut xx = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            xx[(i, j)] = xcols[j].inner(&xcols[i]);
        }
    }
    let a_half = psqrt(&FiniteOperator::from_matrix(herm_part(&xx)).add(&t.delta()))?;
    let gamma = pinv(&dw_half).mul(&FiniteOperator::from_matrix(wx)).mul(&pinv(&a_half));
    Ok(Some(gamma))
}

pub(crate) fn lifting_residual(
    s: &StructuredOperator,
    h_slots: &[usize],
    t: &FiniteOperator,
    n_max: usize,
) -> LiftResult<f64> {
    let mut res = 0.0f64;
    let mut tp = FiniteOperator::identity(t.rows());
    for n in 1..=n_max {
        tp = t.mul(&tp);
        let comp = compress_power(s, h_slots, n)?;
        res = res.max(comp.sub(&tp).op_norm());
    }
    Ok(res)
}

/// Run the full verification battery and assemble a bundle.
pub fn verify_bundle(
    s: StructuredOperator,
    h_slots: Vec<usize>,
    t: FiniteOperator,
    expected_cov: Option<f64>,
    depth: usize,
    tol: f64,
) -> LiftResult<super::LiftingBundle> {
    let space = s.domain.clone();
    // 2-isometry identity
    let s2 = s.pow(2)?;
    let two_iso = s2
        .adjoint()
        .compose(&s2)?
        .sub(&s.adjoint().compose(&s)?.scale(Complex::new(2.0, 0.0)))?
        .add(&StructuredOperator::identity(&space))?;
    let rep = identity_check(&two_iso, None, tol)?;
    if !rep.passed {
        return Err(LiftError::NotLifting(format!(
            "not a 2-isometry: residual {:.3e}",
            rep.residual
        )));
    }
    // power formula S*ⁿSⁿ = nS*S − (n−1)I for n = 2..6
    let gram = s.adjoint().compose(&s)?;
    let mut power_res = 0.0f64;
    for n in 2..=6usize {
        let sn = s.pow(n)?;
        let expr = sn
            .adjoint()
            .compose(&sn)?
            .sub(&gram.scale(Complex::new(n as f64, 0.0)))?
            .add(&StructuredOperator::identity(&space).scale(Complex::new(n as f64 - 1.0, 0.0)))?;
        let r = identity_check(&expr, None, tol * 10.0)?;
        power_res = power_res.max(r.residual);
    }

    let lifting_res = lifting_residual(&s, &h_slots, &t, 6)?;
    let (tag, gamma, type_res) = classify_lifting(&s, &h_slots, &t, tol)?;
    let delta = delta_finite_part(&s, tol)?;
    let covariance = delta.covariance();
    let covariance_residual = expected_cov.map(|c| (c - covariance).abs()).unwrap_or(0.0);
    let (_, balance_residual) = condition_functional(&s, &h_slots, &t, tol)?;
    let growth = crate::structured::span_growth(&s, &h_slots, depth, tol)?;

    Ok(super::LiftingBundle {
        s,
        h_slots,
        t,
        type_tag: tag,
        covariance,
        minimal: growth.verdict,
        gamma,
        delta,
        verification: LiftingVerification {
            two_isometry_residual: rep.residual,
            power_formula_residual: power_res,
            lifting_residual: lifting_res,
            type_residual: type_res,
            covariance_residual,
            balance_residual,
        },
    })
}
