//! Class predicates, derived quantities and canonical decompositions for
//! finite and structured operators: expansivity, concavity, 2-isometry,
//! quasi-isometry/contraction, Brownian kinds, Cauchy duals, Wold splitting,
//! analyticity and power-growth probes.

use crate::numkernel::{
    self, herm_eig, herm_part, orthonormal_columns, psqrt, CMat, CVec, FiniteOperator, NumError,
};
use crate::structured::{
    delta_finite_part, enumerate_basis, identity_check, window_matrix, BasisLabel, BlockEntry,
    FinSuppVector, Slot, StructuredError, StructuredOperator, StructuredSpace,
};
use nalgebra::Complex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("operator is not expansive: lambda_min(Δ) = {0:.3e}")]
    NotExpansive(f64),
    #[error("operator is not a 2-isometry: residual {0:.3e}")]
    NotTwoIsometry(f64),
    #[error("operator is not left invertible: lambda_min(T*T) = {0:.3e}")]
    NotLeftInvertible(f64),
    #[error("operator is not an isometry: residual {0:.3e}")]
    NotIsometry(f64),
    #[error("unsupported structured input: {0}")]
    NotInClass(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Structured(#[from] StructuredError),
}

pub type ClassifyResult<T> = Result<T, ClassifyError>;

/// A finite matrix or an in-class structured operator.
#[derive(Debug, Clone)]
pub enum AnyOperator {
    Finite(FiniteOperator),
    Structured(StructuredOperator),
}

impl AnyOperator {
    pub fn tol(&self) -> f64 {
        match self {
            AnyOperator::Finite(t) => t.tol,
            AnyOperator::Structured(_) => crate::DEFAULT_TOL,
        }
    }
}

/// Turn a finite operator into a single-slot structured one, so both input
/// kinds can share the structured evaluation paths.
pub fn as_structured(op: &AnyOperator) -> StructuredOperator {
    match op {
        AnyOperator::Structured(s) => s.clone(),
        AnyOperator::Finite(t) => {
            let d = t.rows();
            let space = StructuredSpace::new(vec![Slot::Finite(d)]).unwrap();
            StructuredOperator::endo(space, vec![vec![BlockEntry::Fin(t.m.clone())]]).unwrap()
        }
    }
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ClassFlags {
    pub isometry: bool,
    pub unitary: bool,
    pub contraction: bool,
    pub expansive: bool,
    pub concave: bool,
    pub two_isometry: bool,
    pub quasi_isometry: bool,
    pub quasi_contraction: bool,
    pub power_bounded_probe: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ClassificationReport {
    pub flags: ClassFlags,
    /// ‖Δ_T‖; covariance = ‖Δ_T‖^{1/2} is undefined when Δ ⋡ 0.
    pub delta_norm: f64,
    pub covariance: Option<f64>,
    pub two_isometry_residual: f64,
    pub delta_lambda_min: f64,
    /// max over probe vectors of ‖Tⁿh‖, the strong-stability evidence.
    pub strong_stability_probe: Vec<f64>,
    pub strong_stability_verdict: bool,
    pub spectral_radius: Option<f64>,
}

/// Hermitian banded expression: verify its support is confined to a window
/// and return (λ_min, λ_max) of the finite section (eigenvalue 0 of the
/// infinite complement included when shift slots are present).
fn hermitian_expr_lambda_range(
    expr: &StructuredOperator,
    tol: f64,
) -> ClassifyResult<(f64, f64)> {
    let e = expr.simplify();
    let w = e.default_window();
    let space = &e.domain;
    let mut tail = 0.0f64;
    for (s, slot) in space.slots.iter().enumerate() {
        match *slot {
            Slot::Finite(_) => {}
            Slot::Shift(fw) => {
                for comp in 0..fw {
                    for n in [w + 1, w + 2] {
                        tail = tail
                            .max(e.apply(&FinSuppVector::shift_basis(space, s, n, comp))?.norm());
                    }
                }
            }
            Slot::Shift2(fw) => {
                for comp in 0..fw {
                    for n in [w + 1, w + 2] {
                        tail = tail.max(
                            e.apply(&FinSuppVector::shift2_basis(space, s, n, 0, comp))?.norm(),
                        );
                        tail = tail.max(
                            e.apply(&FinSuppVector::shift2_basis(space, s, 0, n, comp))?.norm(),
                        );
                        tail = tail.max(
                            e.apply(&FinSuppVector::shift2_basis(space, s, n, n, comp))?.norm(),
                        );
                    }
                }
            }
        }
    }
    let (m, _, _, leak) = window_matrix(&e, w + e.depth() + 1, w)?;
    let scale = 1.0 + m.norm();
    if tail > tol * scale * 10.0 || leak > tol * scale * 10.0 {
        return Err(ClassifyError::NotInClass(format!(
            "expression is not window-supported: tail {tail:.3e}, leak {leak:.3e}"
        )));
    }
    let ncols = m.ncols();
    let sect = m.rows(0, ncols).into_owned();
    let h = FiniteOperator::from_matrix(herm_part(&sect));
    let (mut lo, mut hi) = (h.lambda_min(), h.lambda_max());
    if space.slots.iter().any(|s| !s.is_finite()) {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    Ok((lo, hi))
}

/// Decide every class flag by the spectral test of its defining inequality.
pub fn analyze(op: &AnyOperator, tol: f64) -> ClassifyResult<ClassificationReport> {
    match op {
        AnyOperator::Finite(t) => analyze_finite(t, tol),
        AnyOperator::Structured(s) => analyze_structured(s, tol),
    }
}

fn analyze_finite(t: &FiniteOperator, tol: f64) -> ClassifyResult<ClassificationReport> {
    let d = t.rows();
    let scale = 1.0 + t.op_norm().powi(2);
    let delta = t.delta();
    let delta_norm = delta.op_norm();
    let delta_lambda_min = delta.lambda_min();
    let gram = t.adjoint().mul(t);

    let isometry = delta_norm <= tol * scale;
    let unitary = isometry
        && t.mul(&t.adjoint()).sub(&FiniteOperator::identity(d)).op_norm() <= tol * scale;
    let contraction = delta.lambda_max() <= tol * scale;
    let expansive = delta_lambda_min >= -tol * scale;

    let push = |a: &FiniteOperator| t.adjoint().mul(a).mul(t);
    let fix_delta = push(&delta).sub(&delta);
    let two_isometry_residual = fix_delta.op_norm();
    let two_isometry = two_isometry_residual <= tol * scale && expansive;
    let concave = fix_delta.lambda_max() <= tol * scale;

    let qscale = tol * scale * (1.0 + gram.op_norm());
    let fix_gram = push(&gram).sub(&gram);
    let quasi_isometry = fix_gram.op_norm() <= qscale;
    let quasi_contraction = fix_gram.lambda_max() <= qscale;

    let nprobe = 24usize;
    let mut powers = Vec::with_capacity(nprobe);
    let mut cur = FiniteOperator::identity(d);
    for _ in 0..nprobe {
        cur = t.mul(&cur);
        powers.push(cur.op_norm());
    }
    let spectral_radius = numkernel::spectral_radius(t).ok();
    let power_bounded_probe = powers.iter().cloned().fold(0.0, f64::max)
        <= 10.0 * (1.0 + t.op_norm())
        && spectral_radius.map(|r| r <= 1.0 + tol.sqrt()).unwrap_or(true);
    let strong_stability_verdict = spectral_radius.map(|r| r < 1.0 - tol.sqrt()).unwrap_or(false)
        && powers.last().cloned().unwrap_or(0.0)
            < 0.5 * powers.first().cloned().unwrap_or(1.0).max(1.0);

    let covariance = if expansive { Some(delta_norm.max(0.0).sqrt()) } else { None };

    Ok(ClassificationReport {
        flags: ClassFlags {
            isometry,
            unitary,
            contraction,
            expansive,
            concave,
            two_isometry,
            quasi_isometry,
            quasi_contraction,
            power_bounded_probe,
        },
        delta_norm,
        covariance,
        two_isometry_residual,
        delta_lambda_min,
        strong_stability_probe: powers,
        strong_stability_verdict,
        spectral_radius,
    })
}

fn analyze_structured(s: &StructuredOperator, tol: f64) -> ClassifyResult<ClassificationReport> {
    if !s.is_endomorphism() {
        return Err(ClassifyError::NotInClass("analyze needs an endomorphism".into()));
    }
    let space = s.domain.clone();
    let delta = delta_finite_part(s, tol)?;
    let delta_norm = delta.norm();
    let delta_lambda_min = delta.lambda_min();
    let scale = 1.0 + delta_norm;

    let isometry = delta_norm <= tol * scale;
    let unitary = isometry && {
        let e = s.compose(&s.adjoint())?.sub(&StructuredOperator::identity(&space))?;
        identity_check(&e, None, tol)?.passed
    };
    let contraction = {
        let block_max =
            if delta.finite_block.rows() > 0 { delta.finite_block.lambda_max() } else { 0.0 };
        let scal_max = delta.shift_scalars.iter().cloned().fold(0.0, f64::max);
        block_max <= tol * scale && scal_max <= tol * scale
    };
    let expansive = delta_lambda_min >= -tol * scale;

    let s2 = s.pow(2)?;
    let two_iso_expr = s2
        .adjoint()
        .compose(&s2)?
        .sub(&s.adjoint().compose(s)?.scale(Complex::new(2.0, 0.0)))?
        .add(&StructuredOperator::identity(&space))?;
    let rep = identity_check(&two_iso_expr, None, tol)?;
    let two_isometry_residual = rep.residual;
    let two_isometry = rep.passed && expansive;

    let delta_op = delta.as_operator(&space);
    let concave_expr = s.adjoint().compose(&delta_op)?.compose(s)?.sub(&delta_op)?;
    let concave = match hermitian_expr_lambda_range(&concave_expr, tol) {
        Ok((_, hi)) => hi <= tol * scale,
        Err(_) => false,
    };

    let quasi_expr = s2.adjoint().compose(&s2)?.sub(&s.adjoint().compose(s)?)?;
    let (quasi_norm, quasi_max) = match hermitian_expr_lambda_range(&quasi_expr, tol) {
        Ok((lo, hi)) => (lo.abs().max(hi.abs()), hi),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    let quasi_isometry = quasi_norm <= tol * scale * 2.0;
    let quasi_contraction = quasi_max <= tol * scale * 2.0;

    let mut probes: Vec<FinSuppVector> = Vec::new();
    for (si, slot) in space.slots.iter().enumerate() {
        match *slot {
            Slot::Finite(m) => {
                for cpt in 0..m {
                    probes.push(FinSuppVector::finite_basis(&space, si, cpt));
                }
            }
            Slot::Shift(w) => {
                for cpt in 0..w.min(2) {
                    probes.push(FinSuppVector::shift_basis(&space, si, 0, cpt));
                }
            }
            Slot::Shift2(_) => {
                probes.push(FinSuppVector::shift2_basis(&space, si, 0, 0, 0));
            }
        }
    }
    let nprobe = 16usize;
    let mut powers = vec![0.0f64; nprobe];
    for p in &probes {
        let mut cur = p.clone();
        for entry in powers.iter_mut() {
            cur = s.apply(&cur)?;
            *entry = entry.max(cur.norm());
        }
    }
    let power_bounded_probe =
        powers.iter().cloned().fold(0.0, f64::max) <= 10.0 * (1.0 + delta_norm);
    let strong_stability_verdict = powers.last().cloned().unwrap_or(0.0)
        < 0.1 * powers.first().cloned().unwrap_or(1.0).max(0.1);

    let covariance = if expansive { Some(delta_norm.max(0.0).sqrt()) } else { None };

    Ok(ClassificationReport {
        flags: ClassFlags {
            isometry,
            unitary,
            contraction,
            expansive,
            concave,
            two_isometry,
            quasi_isometry,
            quasi_contraction,
            power_bounded_probe,
        },
        delta_norm,
        covariance,
        two_isometry_residual,
        delta_lambda_min,
        strong_stability_probe: powers,
        strong_stability_verdict,
        spectral_radius: None,
    })
}

// ---------------------------------------------------------------------------
// canonical blocks
// ---------------------------------------------------------------------------

/// Canonical representation `T = [[V, E], [0, Y]]` on `N(Δ_T) ⊕ R(Δ_T)⁻`.
///
/// For structured inputs the Δ-carrier must lie inside the finite slots; `V`
/// is the restriction to the shift slots plus the finite kernel part, and `E`
/// is returned column-wise as exact vectors over the R-basis.
#[derive(Debug, Clone)]
pub struct CanonicalBlocks {
    /// Orthonormal basis of N(Δ) inside the finite part (columns).
    pub basis_n: CMat,
    /// Orthonormal basis of R(Δ)⁻ inside the finite part (columns).
    pub basis_r: CMat,
    /// Δ restricted to R(Δ)⁻; injective for 2-isometric inputs.
    pub delta0: FiniteOperator,
    /// Lower-right block on the R-basis.
    pub y: FiniteOperator,
    /// Columns of `E` over the R-basis, as vectors of the ambient space.
    pub e_cols: Vec<FinSuppVector>,
    pub e_norm: f64,
    /// Gram matrix `E*E` on the R-basis.
    pub e_gram: FiniteOperator,
    pub v_isometry_residual: f64,
    pub v_star_e_residual: f64,
    /// ‖Y*Δ₀Y − Δ₀‖, zero for 2-isometric inputs.
    pub y_fix_residual: f64,
    /// ‖P_R S|_{N(Δ)}‖ evidence that the block form is upper triangular.
    pub lower_residual: f64,
    /// Orthonormal basis of N(V*) on the window.
    pub n_vstar: Vec<FinSuppVector>,
}

pub fn canonical_blocks(op: &AnyOperator, tol: f64) -> ClassifyResult<CanonicalBlocks> {
    let s = as_structured(op);
    let space = s.domain.clone();
    let delta = delta_finite_part(&s, tol)?;
    if delta.lambda_min() < -tol * (1.0 + delta.norm()) {
        return Err(ClassifyError::NotExpansive(delta.lambda_min()));
    }
    if delta.shift_scalars.iter().any(|&l| l.abs() > tol) || delta.has_window_parts() {
        return Err(ClassifyError::NotInClass(
            "Δ acts on a shift slot; canonical blocks need a finite Δ-carrier".into(),
        ));
    }

    let block = delta.finite_block.clone();
    let (basis_r, basis_n) = numkernel::range_kernel_bases(&block);
    let delta0 = FiniteOperator::from_matrix(basis_r.adjoint() * &block.m * &basis_r);

    let fin_slots = delta.finite_slots.clone();
    let fin_dims = delta.dims.clone();
    let embed = |col: &CVec| -> FinSuppVector {
        let mut v = FinSuppVector::zero(&space);
        let mut off = 0usize;
        for (k, &si) in fin_slots.iter().enumerate() {
            let m = fin_dims[k];
            let part = CVec::from_fn(m, |i, _| col[off + i]);
            v = v.add(&FinSuppVector::embed_finite(&space, si, &part));
            off += m;
        }
        v
    };

    let r_dim = basis_r.ncols();
    let n_dim = basis_n.ncols();
    let r_vecs: Vec<FinSuppVector> =
        (0..r_dim).map(|j| embed(&basis_r.column(j).into_owned())).collect();
    let n_vecs: Vec<FinSuppVector> =
        (0..n_dim).map(|j| embed(&basis_n.column(j).into_owned())).collect();

    let mut y = CMat::zeros(r_dim, r_dim);
    let mut e_cols = Vec::with_capacity(r_dim);
    for (j, rv) in r_vecs.iter().enumerate() {
        let img = s.apply(rv)?;
        let mut rem = img.clone();
        for (i, ri) in r_vecs.iter().enumerate() {
            let cij = img.inner(ri);
            y[(i, j)] = cij;
            rem = rem.sub(&ri.scale(cij));
        }
        e_cols.push(rem);
    }
    let mut e_gram_m = CMat::zeros(r_dim, r_dim);
    for i in 0..r_dim {
        for j in 0..r_dim {
            e_gram_m[(i, j)] = e_cols[j].inner(&e_cols[i]);
        }
    }
    let e_gram = FiniteOperator::from_matrix(e_gram_m);
    let e_norm = e_gram.lambda_max().max(0.0).sqrt();

    // window basis of the N(Δ) side: shift slots plus finite kernel vectors
    let window = s.default_window() + 2;
    let mut n_side: Vec<FinSuppVector> = n_vecs.clone();
    for (si, slot) in space.slots.iter().enumerate() {
        match *slot {
            Slot::Finite(_) => {}
            Slot::Shift(w) => {
                for idx in 0..=window {
                    for cpt in 0..w {
                        n_side.push(FinSuppVector::shift_basis(&space, si, idx, cpt));
                    }
                }
            }
            Slot::Shift2(w) => {
                for o in 0..=window {
                    for i2 in 0..=window {
                        for cpt in 0..w {
                            n_side.push(FinSuppVector::shift2_basis(&space, si, o, i2, cpt));
                        }
                    }
                }
            }
        }
    }
    let mut lower_residual = 0.0f64;
    let mut v_iso = 0.0f64;
    let mut v_star_e = 0.0f64;
    for nv in &n_side {
        let img = s.apply(nv)?;
        for rv in &r_vecs {
            lower_residual = lower_residual.max(img.inner(rv).norm());
        }
        v_iso = v_iso.max((img.norm() - nv.norm()).abs());
        for ec in &e_cols {
            v_star_e = v_star_e.max(img.inner(ec).norm());
        }
    }

    let yf = FiniteOperator::from_matrix(y);
    let y_fix_residual = yf.adjoint().mul(&delta0).mul(&yf).sub(&delta0).op_norm();

    let n_vstar = kernel_on_window(&s, &n_side, tol)?;

    Ok(CanonicalBlocks {
        basis_n,
        basis_r,
        delta0,
        y: yf,
        e_cols,
        e_norm,
        e_gram,
        v_isometry_residual: v_iso,
        v_star_e_residual: v_star_e,
        y_fix_residual,
        lower_residual,
        n_vstar,
    })
}

/// Kernel of the compression `P·S*|_span` where `span` is the (orthonormal)
/// family of window vectors and `P` projects onto it. Beyond the coupling
/// window S* acts as a backward shift, so genuine kernel vectors are
/// window-supported.
pub(crate) fn kernel_on_window(
    s: &StructuredOperator,
    window_vecs: &[FinSuppVector],
    tol: f64,
) -> ClassifyResult<Vec<FinSuppVector>> {
    let sadj = s.adjoint();
    let k = window_vecs.len();
    // coefficient matrix of the projected images: C[r][j] = ⟨S* wⱼ, w_r⟩
    let mut coeff = CMat::zeros(k, k);
    for (j, wv) in window_vecs.iter().enumerate() {
        let img = sadj.apply(wv)?;
        for (r, wr) in window_vecs.iter().enumerate() {
            coeff[(r, j)] = img.inner(wr);
        }
    }
    let g = coeff.adjoint() * &coeff;
    let eig = herm_eig(&FiniteOperator::from_matrix(herm_part(&g)))?;
    let gnorm = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(1.0);
    let mut out: Vec<FinSuppVector> = Vec::new();
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() <= tol.max(1e-12) * gnorm * 10.0 {
            let mut v = FinSuppVector::zero(&s.codomain);
            let mut c_img = CVec::zeros(k);
            for (r, wv) in window_vecs.iter().enumerate() {
                v = v.add(&wv.scale(eig.eigenvectors[(r, idx)]));
                c_img += coeff.column(r).into_owned() * eig.eigenvectors[(r, idx)];
            }
            let nn = v.norm();
            if nn > 1e-8 && c_img.norm() <= tol.sqrt() * nn {
                out.push(v.scale(Complex::new(1.0 / nn, 0.0)));
            }
        }
    }
    let mut ortho: Vec<FinSuppVector> = Vec::new();
    for v in out {
        let mut w = v;
        for q in &ortho {
            let cqw = w.inner(q);
            w = w.sub(&q.scale(cqw));
        }
        let nn = w.norm();
        if nn > 1e-8 {
            ortho.push(w.scale(Complex::new(1.0 / nn, 0.0)));
        }
    }
    Ok(ortho)
}

// ---------------------------------------------------------------------------
// Brownian kind
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BrownianKind {
    None,
    BrownianIsometry,
    BrownianUnitary,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BrownianReport {
    pub kind: BrownianKind,
    pub delta_cov: f64,
    pub e0_sigma_min: f64,
    pub e0_norm: f64,
    pub y_unitary_residual: f64,
    pub commutation_residual: f64,
    /// principal angle between R(E₀) and N(V*), unitary kind only
    pub range_angle: Option<f64>,
}

/// Decide whether a 2-isometry is a Brownian isometry or unitary via its
/// canonical blocks: `E = δE₀` with `E₀` an injective contraction into
/// `N(V*)` and `Y` unitary commuting with `E*E`; the unitary kind needs `E₀`
/// isometric with `R(E₀) = N(V*)`.
pub fn brownian_kind(op: &AnyOperator, tol: f64) -> ClassifyResult<BrownianReport> {
    let report = analyze(op, tol)?;
    if !report.flags.two_isometry {
        return Err(ClassifyError::NotTwoIsometry(report.two_isometry_residual));
    }
    let delta_cov = report.covariance.unwrap_or(0.0);
    if delta_cov <= tol.sqrt() {
        return Ok(BrownianReport {
            kind: if report.flags.unitary {
                BrownianKind::BrownianUnitary
            } else {
                BrownianKind::BrownianIsometry
            },
            delta_cov: 0.0,
            e0_sigma_min: 0.0,
            e0_norm: 0.0,
            y_unitary_residual: 0.0,
            commutation_residual: 0.0,
            range_angle: None,
        });
    }
    let blocks = canonical_blocks(op, tol)?;
    let r_dim = blocks.delta0.rows();
    let scale = 1.0 + blocks.e_norm.powi(2);

    let e0_gram = blocks.e_gram.scale(1.0 / (delta_cov * delta_cov));
    let e0_sigma_min = e0_gram.lambda_min().max(0.0).sqrt();
    let e0_norm = e0_gram.lambda_max().max(0.0).sqrt();
    let injective = e0_sigma_min > tol.sqrt();
    let contractive = e0_norm <= 1.0 + tol.sqrt();

    let idm = FiniteOperator::identity(r_dim);
    let y_unitary_residual = blocks
        .y
        .adjoint()
        .mul(&blocks.y)
        .sub(&idm)
        .op_norm()
        .max(blocks.y.mul(&blocks.y.adjoint()).sub(&idm).op_norm());

    let ee = &blocks.e_gram;
    let commutation_residual = blocks.y.mul(ee).sub(&ee.mul(&blocks.y)).op_norm();

    let is_brownian = injective
        && contractive
        && y_unitary_residual <= tol.sqrt() * scale
        && commutation_residual <= tol.sqrt() * scale;

    let e0_isometric =
        e0_gram.sub(&FiniteOperator::identity(r_dim)).op_norm() <= tol.sqrt() * scale;
    let mut range_angle = None;
    let mut unitary_kind = false;
    if is_brownian && e0_isometric {
        let wandering = &blocks.n_vstar;
        if wandering.len() == r_dim {
            let mut cross = CMat::zeros(wandering.len(), r_dim);
            for (i, wv) in wandering.iter().enumerate() {
                for (j, ec) in blocks.e_cols.iter().enumerate() {
                    cross[(i, j)] = ec.scale(Complex::new(1.0 / delta_cov, 0.0)).inner(wv);
                }
            }
            let sv = cross.singular_values();
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let angle = smin.clamp(-1.0, 1.0).acos();
            range_angle = Some(angle);
            unitary_kind = angle <= tol.sqrt().sqrt();
        } else {
            range_angle = Some(std::f64::consts::FRAC_PI_2);
        }
    }

    Ok(BrownianReport {
        kind: if !is_brownian {
            BrownianKind::None
        } else if unitary_kind {
            BrownianKind::BrownianUnitary
        } else {
            BrownianKind::BrownianIsometry
        },
        delta_cov,
        e0_sigma_min,
        e0_norm,
        y_unitary_residual,
        commutation_residual,
        range_angle,
    })
}

// ---------------------------------------------------------------------------
// Cauchy dual
// ---------------------------------------------------------------------------

/// Cauchy dual T′ = T (T*T)⁻¹ of a left-invertible operator.
pub fn cauchy_dual(op: &AnyOperator, tol: f64) -> ClassifyResult<AnyOperator> {
    match op {
        AnyOperator::Finite(t) => {
            let gram = t.adjoint().mul(t);
            let lmin = gram.lambda_min();
            if lmin <= tol {
                return Err(ClassifyError::NotLeftInvertible(lmin));
            }
            let eig = herm_eig(&gram)?;
            let n = eig.eigenvalues.len();
            let inv = CMat::from_fn(n, n, |i, j| {
                if i == j {
                    Complex::new(1.0 / eig.eigenvalues[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                }
            });
            let ginv = &eig.eigenvectors * inv * eig.eigenvectors.adjoint();
            Ok(AnyOperator::Finite(FiniteOperator { m: &t.m * ginv, tol: t.tol }))
        }
        AnyOperator::Structured(s) => Ok(AnyOperator::Structured(structured_cauchy_dual(s, tol)?)),
    }
}

/// (S*S)⁻¹ composed with S for in-class S, with the Gram inverse block-built
/// through the Δ decomposition; verified by `T*T′ = I`.
pub fn structured_cauchy_dual(
    s: &StructuredOperator,
    tol: f64,
) -> ClassifyResult<StructuredOperator> {
    let inv = gram_inverse(s, tol)?;
    let dual = s.compose(&inv)?;
    let check = s.adjoint().compose(&dual)?.sub(&StructuredOperator::identity(&s.domain))?;
    let rep = identity_check(&check, None, tol)?;
    if !rep.passed {
        return Err(ClassifyError::NotInClass(format!(
            "Cauchy dual verification failed: residual {:.3e}",
            rep.residual
        )));
    }
    Ok(dual)
}

/// (S*S)⁻¹ for in-class S.
pub fn gram_inverse(s: &StructuredOperator, tol: f64) -> ClassifyResult<StructuredOperator> {
    let space = s.domain.clone();
    let delta = delta_finite_part(s, tol)?;
    let lmin = 1.0 + delta.lambda_min();
    if lmin <= tol {
        return Err(ClassifyError::NotLeftInvertible(lmin));
    }
    let n = space.n_slots();
    let mut blocks: Vec<Vec<BlockEntry>> = vec![vec![BlockEntry::Zero; n]; n];
    let total: usize = delta.dims.iter().sum();
    if total > 0 {
        let ib = FiniteOperator::from_matrix(
            CMat::identity(total, total) + delta.finite_block.m.clone(),
        );
        let eig = herm_eig(&ib)?;
        let inv = CMat::from_fn(total, total, |i, j| {
            if i == j {
                Complex::new(1.0 / eig.eigenvalues[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let ibinv = &eig.eigenvectors * inv * eig.eigenvectors.adjoint();
        let mut off = vec![0usize];
        for d in &delta.dims {
            let last = *off.last().unwrap();
            off.push(last + d);
        }
        for (bi, &si) in delta.finite_slots.iter().enumerate() {
            for (bj, &sj) in delta.finite_slots.iter().enumerate() {
                let sub = CMat::from_fn(delta.dims[bi], delta.dims[bj], |i, j| {
                    ibinv[(off[bi] + i, off[bj] + j)]
                });
                if sub.iter().any(|z| z.norm() > 1e-16) {
                    blocks[si][sj] = BlockEntry::Fin(sub);
                }
            }
        }
    }
    for (si, slot) in space.slots.iter().enumerate() {
        if !slot.is_finite() {
            let lam = delta.shift_scalars[si];
            let scal = BlockEntry::scale(Complex::new(1.0 / (1.0 + lam), 0.0), BlockEntry::Ident);
            if let Some(wb) = &delta.window_blocks[si] {
                // invert the window section exactly and correct against the tail
                let sect_dim = wb.block.rows();
                let sect = wb.block.add(&FiniteOperator::identity(sect_dim).scale(1.0 + lam));
                let eig = herm_eig(&sect)?;
                if eig.eigenvalues.iter().any(|&l| l.abs() <= tol) {
                    return Err(ClassifyError::NotLeftInvertible(0.0));
                }
                let inv = CMat::from_fn(sect_dim, sect_dim, |i, j| {
                    if i == j { Complex::new(1.0 / eig.eigenvalues[i], 0.0) } else { Complex::new(0.0, 0.0) }
                });
                let sect_inv = &eig.eigenvectors * inv * eig.eigenvectors.adjoint();
                let corr = sect_inv
                    - CMat::identity(sect_dim, sect_dim) * Complex::new(1.0 / (1.0 + lam), 0.0);
                let wb_inv = crate::structured::WindowBlock {
                    coords: wb.coords,
                    block: FiniteOperator::from_matrix(corr),
                };
                blocks[si][si] = BlockEntry::Sum(vec![
                    scal,
                    crate::structured::window_entry(&wb_inv, space.slots[si].fiber_dim()),
                ])
                .simplify();
            } else {
                blocks[si][si] = scal;
            }
        }
    }
    Ok(StructuredOperator::endo(space, blocks)?)
}

// ---------------------------------------------------------------------------
// Wold decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WoldSplit {
    pub shift_slots: Vec<usize>,
    pub unitary_slots: Vec<usize>,
    pub unitary_part: Option<FiniteOperator>,
}

/// Wold decomposition of a structured isometry: the unitary part is the
/// largest collection of finite slots reducing V on which V acts unitarily.
pub fn wold(v: &StructuredOperator, tol: f64) -> ClassifyResult<WoldSplit> {
    let report = analyze(&AnyOperator::Structured(v.clone()), tol)?;
    if !report.flags.isometry {
        return Err(ClassifyError::NotIsometry(report.delta_norm));
    }
    let space = v.domain.clone();
    let vadj = v.adjoint();
    let mut unitary_slots = Vec::new();
    let mut shift_slots = Vec::new();
    for (si, slot) in space.slots.iter().enumerate() {
        if let Slot::Finite(m) = *slot {
            let mut isolated = true;
            for cpt in 0..m {
                let b = FinSuppVector::finite_basis(&space, si, cpt);
                for img in [v.apply(&b)?, vadj.apply(&b)?] {
                    let within = img.finite_part(si).norm();
                    let total = img.norm();
                    if (total * total - within * within).max(0.0).sqrt() > tol.sqrt() {
                        isolated = false;
                    }
                }
            }
            if isolated {
                unitary_slots.push(si);
                continue;
            }
        }
        shift_slots.push(si);
    }
    let unitary_part = if unitary_slots.is_empty() {
        None
    } else {
        Some(crate::structured::compress(v, &unitary_slots)?)
    };
    if let Some(u) = &unitary_part {
        let d = u.rows();
        let res = u.adjoint().mul(u).sub(&FiniteOperator::identity(d)).op_norm();
        if res > tol.sqrt() {
            return Err(ClassifyError::NotInClass(format!(
                "isolated finite part is not unitary: residual {res:.3e}"
            )));
        }
    }
    Ok(WoldSplit { shift_slots, unitary_slots, unitary_part })
}

// ---------------------------------------------------------------------------
// analyticity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum AnalyticityVerdict {
    AnalyticUpTo { depth: usize },
    NonAnalytic { carrier_dim: usize },
}

/// Probe `⋂_{n ≤ depth} SⁿK` restricted to window-supported vectors, via
/// successive range intersections. Evidence-graded verdict.
pub fn analyticity_check(
    s: &StructuredOperator,
    depth: usize,
    tol: f64,
) -> ClassifyResult<AnalyticityVerdict> {
    let space = s.domain.clone();
    // fixed evaluation window; the power index runs past it so that pure
    // shift tails drain out of the window while unitary-type carriers persist
    let w = s.default_window() + 1;
    let n_max = w + depth + 2;
    let cols = enumerate_basis(&space, w + 1);

    let mut current: Option<CMat> = None;
    for n in 1..=n_max {
        let bound = (w + 1) + n * s.depth().max(1);
        let sub = match power_image_in_window(s, &cols, n, bound, w)? {
            Some(m) => m,
            None => return Ok(AnalyticityVerdict::AnalyticUpTo { depth }),
        };
        current = Some(match current {
            None => sub,
            Some(prev) => {
                let inter = intersect_subspaces(&prev, &sub, tol);
                if inter.ncols() == 0 {
                    return Ok(AnalyticityVerdict::AnalyticUpTo { depth });
                }
                inter
            }
        });
    }
    let dim = current.map(|m| m.ncols()).unwrap_or(0);
    if dim == 0 {
        Ok(AnalyticityVerdict::AnalyticUpTo { depth })
    } else {
        Ok(AnalyticityVerdict::NonAnalytic { carrier_dim: dim })
    }
}

/// Columns over the window basis spanning `SⁿK ∩ {window-supported vectors}`.
fn power_image_in_window(
    s: &StructuredOperator,
    cols: &[BasisLabel],
    n: usize,
    ext_bound: usize,
    window: usize,
) -> ClassifyResult<Option<CMat>> {
    let space = &s.domain;
    let ext = enumerate_basis(space, ext_bound);
    let win_rows: Vec<usize> = ext
        .iter()
        .enumerate()
        .filter(|(_, l)| label_within(l, window))
        .map(|(i, _)| i)
        .collect();
    let out_rows: Vec<usize> = ext
        .iter()
        .enumerate()
        .filter(|(_, l)| !label_within(l, window))
        .map(|(i, _)| i)
        .collect();
    let mut img = CMat::zeros(ext.len(), cols.len());
    for (j, cl) in cols.iter().enumerate() {
        let mut y = cl.to_vector(space);
        for _ in 0..n {
            y = s.apply(&y)?;
        }
        for (i, rl) in ext.iter().enumerate() {
            img[(i, j)] = y.inner(&rl.to_vector(space));
        }
    }
    let beyond = CMat::from_fn(out_rows.len(), cols.len(), |i, j| img[(out_rows[i], j)]);
    let (_, kernel) = numkernel::range_kernel_bases(&FiniteOperator::from_matrix(beyond));
    if kernel.ncols() == 0 {
        return Ok(None);
    }
    let within = CMat::from_fn(win_rows.len(), cols.len(), |i, j| img[(win_rows[i], j)]);
    let candidates = within * kernel;
    let basis = orthonormal_columns(&candidates, 1e-10);
    if basis.ncols() == 0 {
        Ok(None)
    } else {
        Ok(Some(basis))
    }
}

fn label_within(l: &BasisLabel, window: usize) -> bool {
    match *l {
        BasisLabel::Fin { .. } => true,
        BasisLabel::Shift { idx, .. } => idx <= window,
        BasisLabel::Shift2 { outer, inner, .. } => outer <= window && inner <= window,
    }
}

fn intersect_subspaces(a: &CMat, b: &CMat, tol: f64) -> CMat {
    if a.ncols() == 0 || b.ncols() == 0 {
        return CMat::zeros(a.nrows(), 0);
    }
    let g = a.adjoint() * b;
    let svd = g.svd(true, false);
    let u = svd.u.unwrap();
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv >= 1.0 - tol.sqrt().max(1e-7))
        .map(|(i, _)| i)
        .collect();
    let mut out = CMat::zeros(a.nrows(), keep.len());
    for (j, &k) in keep.iter().enumerate() {
        let dir = a * u.column(k).into_owned();
        out.set_column(j, &dir);
    }
    orthonormal_columns(&out, 1e-10)
}

// ---------------------------------------------------------------------------
// power growth probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct PowerGrowth {
    /// max over probes of ‖Δ^{1/2} Xⁿ h‖, n = 1..N
    pub delta_seq: Vec<f64>,
    /// max over probes of n^{-1/2} ‖Xⁿ h‖
    pub scaled_seq: Vec<f64>,
    pub delta_trend_to_zero: bool,
    pub scaled_trend_to_zero: bool,
}

/// Sequences ‖Δ^{1/2}Xⁿh‖ and n^{-1/2}‖Xⁿh‖ with a monotone-trend verdict.
pub fn power_growth_probe(op: &AnyOperator, n_max: usize, tol: f64) -> ClassifyResult<PowerGrowth> {
    let s = as_structured(op);
    let space = s.domain.clone();
    let delta = delta_finite_part(&s, tol)?;
    if delta.lambda_min() < -tol * (1.0 + delta.norm()) {
        return Err(ClassifyError::NotExpansive(delta.lambda_min()));
    }
    let mut half = delta.clone();
    half.finite_block = psqrt(&FiniteOperator {
        m: delta.finite_block.m.clone(),
        tol: delta.finite_block.tol.max(1e-12),
    })?;
    for (s, l) in half.shift_scalars.iter_mut().enumerate() {
        let lam = *l;
        *l = lam.max(0.0).sqrt();
        if let Some(wb) = &delta.window_blocks[s] {
            // (λ + W)^{1/2} acts blockwise: section sqrt minus the tail value
            let sect_dim = wb.block.rows();
            let sect = wb.block.add(&FiniteOperator::identity(sect_dim).scale(lam));
            let sect_half = psqrt(&FiniteOperator { m: sect.m.clone(), tol: 1e-7 })?;
            let corr =
                sect_half.sub(&FiniteOperator::identity(sect_dim).scale(lam.max(0.0).sqrt()));
            half.window_blocks[s] =
                Some(crate::structured::WindowBlock { coords: wb.coords, block: corr });
        }
    }
    let half_op = half.as_operator(&space);

    let mut probes: Vec<FinSuppVector> = Vec::new();
    for (si, slot) in space.slots.iter().enumerate() {
        match *slot {
            Slot::Finite(m) => {
                for cpt in 0..m {
                    probes.push(FinSuppVector::finite_basis(&space, si, cpt));
                }
            }
            Slot::Shift(w) => probes.push(FinSuppVector::shift_basis(&space, si, 0, w - 1)),
            Slot::Shift2(w) => probes.push(FinSuppVector::shift2_basis(&space, si, 0, 0, w - 1)),
        }
    }
    let mut delta_seq = vec![0.0f64; n_max];
    let mut scaled_seq = vec![0.0f64; n_max];
    for p in &probes {
        let mut cur = p.clone();
        for n in 1..=n_max {
            cur = s.apply(&cur)?;
            let dn = half_op.apply(&cur)?.norm();
            delta_seq[n - 1] = delta_seq[n - 1].max(dn);
            scaled_seq[n - 1] = scaled_seq[n - 1].max(cur.norm() / (n as f64).sqrt());
        }
    }
    let trend = |xs: &[f64]| -> bool {
        let half_len = xs.len() / 2;
        let head: f64 = xs[..half_len].iter().sum();
        let tail: f64 = xs[half_len..].iter().sum();
        tail <= head + tol
    };
    Ok(PowerGrowth {
        delta_trend_to_zero: trend(&delta_seq),
        scaled_trend_to_zero: trend(&scaled_seq),
        delta_seq,
        scaled_seq,
    })
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// `[[SHIFT, δ·EMB(I)], [0, I]]` on `ℓ²₊(C¹) ⊕ C¹` — the scalar Brownian
    /// unitary generator used across the test suites.
    pub(crate) fn brownian_generator(delta: f64) -> StructuredOperator {
        let sp = StructuredSpace::new(vec![Slot::Shift(1), Slot::Finite(1)]).unwrap();
        StructuredOperator::endo(
            sp,
            vec![
                vec![
                    BlockEntry::Shift,
                    BlockEntry::scale(
                        Complex::new(delta, 0.0),
                        BlockEntry::Emb(CMat::identity(1, 1)),
                    ),
                ],
                vec![BlockEntry::Zero, BlockEntry::Fin(CMat::identity(1, 1))],
            ],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tests_support::brownian_generator;

    fn unitary2() -> FiniteOperator {
        FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]])
    }

    #[test]
    fn analyze_unitary_sets_all_flags() {
        let r = analyze(&AnyOperator::Finite(unitary2()), 1e-9).unwrap();
        assert!(r.flags.isometry && r.flags.unitary && r.flags.two_isometry);
        assert!(r.flags.contraction && r.flags.expansive && r.flags.concave);
        assert_eq!(r.covariance, Some(0.0));
    }

    #[test]
    fn analyze_diag_1_2() {
        let t = FiniteOperator::from_real_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let r = analyze(&AnyOperator::Finite(t), 1e-9).unwrap();
        assert!(r.flags.expansive);
        assert!(!r.flags.two_isometry);
        assert!(!r.flags.concave);
        assert!(!r.flags.contraction);
        assert!((r.delta_norm - 3.0).abs() < 1e-12);
    }

    #[test]
    fn analyze_nilpotent_quasi_contraction() {
        let t = FiniteOperator::from_real_rows(&[&[0.0, 2.0], &[0.0, 0.0]]);
        let r = analyze(&AnyOperator::Finite(t), 1e-9).unwrap();
        assert!(r.flags.quasi_contraction);
        assert!(!r.flags.contraction);
        assert!(!r.flags.quasi_isometry);
    }

    #[test]
    fn brownian_generator_is_two_isometry() {
        let s = brownian_generator(1.5);
        let r = analyze(&AnyOperator::Structured(s), 1e-9).unwrap();
        assert!(r.flags.two_isometry, "residual {}", r.two_isometry_residual);
        assert!(r.flags.expansive && !r.flags.contraction && !r.flags.isometry);
        assert!((r.covariance.unwrap() - 1.5).abs() < 1e-9);
        assert!(r.flags.concave);
        assert!(r.flags.quasi_contraction, "2-isometries are T*T-contractions");
    }

    #[test]
    fn brownian_kind_detects_unitary_kind() {
        let s = brownian_generator(2.0);
        let rep = brownian_kind(&AnyOperator::Structured(s), 1e-9).unwrap();
        assert_eq!(rep.kind, BrownianKind::BrownianUnitary);
        assert!((rep.delta_cov - 2.0).abs() < 1e-9);
    }

    #[test]
    fn brownian_kind_degenerate_unitary() {
        let rep = brownian_kind(&AnyOperator::Finite(unitary2()), 1e-9).unwrap();
        assert_eq!(rep.kind, BrownianKind::BrownianUnitary);
        assert_eq!(rep.delta_cov, 0.0);
    }

    #[test]
    fn cauchy_dual_finite_cases() {
        let v = unitary2();
        if let AnyOperator::Finite(dv) = cauchy_dual(&AnyOperator::Finite(v.clone()), 1e-9).unwrap()
        {
            assert!(dv.sub(&v).op_norm() < 1e-12);
        } else {
            panic!()
        }
        let t = FiniteOperator::from_real_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        if let AnyOperator::Finite(dt) = cauchy_dual(&AnyOperator::Finite(t), 1e-9).unwrap() {
            assert!((dt.m[(1, 1)].re - 0.5).abs() < 1e-12);
            assert!((dt.m[(0, 0)].re - 1.0).abs() < 1e-12);
        } else {
            panic!()
        }
        let sing = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            cauchy_dual(&AnyOperator::Finite(sing), 1e-9),
            Err(ClassifyError::NotLeftInvertible(_))
        ));
    }

    #[test]
    fn cauchy_dual_structured_generator() {
        let s = brownian_generator(1.0);
        let dual = structured_cauchy_dual(&s, 1e-9).unwrap();
        let chk = s
            .adjoint()
            .compose(&dual)
            .unwrap()
            .sub(&StructuredOperator::identity(&s.domain))
            .unwrap();
        assert!(identity_check(&chk, None, 1e-9).unwrap().passed);
    }

    #[test]
    fn wold_pure_shift_and_mixed() {
        let sp = StructuredSpace::new(vec![Slot::Shift(1)]).unwrap();
        let s = StructuredOperator::endo(sp, vec![vec![BlockEntry::Shift]]).unwrap();
        let w = wold(&s, 1e-9).unwrap();
        assert!(w.unitary_slots.is_empty());
        assert_eq!(w.shift_slots, vec![0]);

        let sp = StructuredSpace::new(vec![Slot::Shift(1), Slot::Finite(2)]).unwrap();
        let u = CMat::from_fn(2, 2, |i, j| Complex::new(if i + j == 1 { 1.0 } else { 0.0 }, 0.0));
        let s = StructuredOperator::endo(
            sp,
            vec![
                vec![BlockEntry::Shift, BlockEntry::Zero],
                vec![BlockEntry::Zero, BlockEntry::Fin(u)],
            ],
        )
        .unwrap();
        let w = wold(&s, 1e-9).unwrap();
        assert_eq!(w.unitary_slots, vec![1]);
        assert_eq!(w.shift_slots, vec![0]);
    }

    #[test]
    fn analyticity_shift_vs_mixed() {
        let sp = StructuredSpace::new(vec![Slot::Shift(1)]).unwrap();
        let s = StructuredOperator::endo(sp, vec![vec![BlockEntry::Shift]]).unwrap();
        assert!(matches!(
            analyticity_check(&s, 4, 1e-9).unwrap(),
            AnalyticityVerdict::AnalyticUpTo { .. }
        ));

        let sp = StructuredSpace::new(vec![Slot::Shift(1), Slot::Finite(1)]).unwrap();
        let s = StructuredOperator::endo(
            sp,
            vec![
                vec![BlockEntry::Shift, BlockEntry::Zero],
                vec![BlockEntry::Zero, BlockEntry::Fin(CMat::identity(1, 1))],
            ],
        )
        .unwrap();
        match analyticity_check(&s, 4, 1e-9).unwrap() {
            AnalyticityVerdict::NonAnalytic { carrier_dim } => assert_eq!(carrier_dim, 1),
            other => panic!("expected non-analytic, got {other:?}"),
        }
    }

    #[test]
    fn brownian_generator_is_analytic() {
        let s = brownian_generator(1.0);
        assert!(matches!(
            analyticity_check(&s, 5, 1e-9).unwrap(),
            AnalyticityVerdict::AnalyticUpTo { .. }
        ));
    }

    #[test]
    fn power_growth_two_isometry_exact_law() {
        // ‖Sⁿh‖² = ‖h‖² + n⟨Δh, h⟩ exactly, via S*ⁿSⁿ = nS*S − (n−1)I
        let s = brownian_generator(1.0);
        let sp = s.domain.clone();
        let h = FinSuppVector::finite_basis(&sp, 1, 0);
        let mut cur = h.clone();
        for n in 1..=8 {
            cur = s.apply(&cur).unwrap();
            let want = (1.0 + n as f64).sqrt();
            assert!((cur.norm() - want).abs() < 1e-12, "n={n}");
        }
        let g = power_growth_probe(&AnyOperator::Structured(s), 12, 1e-9).unwrap();
        assert!(g.scaled_trend_to_zero);
    }

    #[test]
    fn power_growth_diag_diverges() {
        let t = FiniteOperator::from_real_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let g = power_growth_probe(&AnyOperator::Finite(t), 12, 1e-9).unwrap();
        assert!(!g.scaled_trend_to_zero);
    }

    #[test]
    fn power_growth_rejects_non_expansive() {
        let t = FiniteOperator::from_real_rows(&[&[0.5]]);
        assert!(matches!(
            power_growth_probe(&AnyOperator::Finite(t), 8, 1e-9),
            Err(ClassifyError::NotExpansive(_))
        ));
    }

    #[test]
    fn canonical_blocks_of_generator() {
        let s = brownian_generator(2.0);
        let cb = canonical_blocks(&AnyOperator::Structured(s), 1e-9).unwrap();
        assert_eq!(cb.delta0.rows(), 1);
        assert!((cb.delta0.m[(0, 0)].re - 4.0).abs() < 1e-9);
        assert!((cb.y.m[(0, 0)].re - 1.0).abs() < 1e-9, "Y = U = 1");
        assert!((cb.e_norm - 2.0).abs() < 1e-9, "‖E‖ = δ");
        assert!(cb.v_star_e_residual < 1e-9);
        assert!(cb.y_fix_residual < 1e-9);
        assert_eq!(cb.n_vstar.len(), 1, "N(V*) = coordinate 0 of the shift slot");
    }

    #[test]
    fn canonical_blocks_of_isometry_has_empty_r_side() {
        let cb = canonical_blocks(&AnyOperator::Finite(unitary2()), 1e-9).unwrap();
        assert_eq!(cb.basis_r.ncols(), 0);
        assert_eq!(cb.basis_n.ncols(), 2);
        assert!(cb.e_cols.is_empty());
    }

    #[test]
    fn finite_rigidity_small_search() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..200 {
            let d = 2 + rng.gen_range(0..4);
            let m = CMat::from_fn(d, d, |_, _| {
                Complex::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
            });
            let t = FiniteOperator::from_matrix(m);
            let r = analyze(&AnyOperator::Finite(t), 1e-9).unwrap();
            if r.flags.two_isometry {
                assert!(r.flags.unitary);
            }
        }
    }
}
