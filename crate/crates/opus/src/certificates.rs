//! Feasibility searches for the positive operators certifying membership in
//! the lifting classes: fixed-point subspaces of `A ↦ T*AT`, Dykstra
//! alternating projections in the hermitian Frobenius geometry, Cesàro means,
//! and a Neumann-series upgrade turning an `A`-contraction certificate into a
//! fixed point `B ⪰ A`.
//!
//! Searches are deterministic given a seed. Every returned certificate is
//! re-verified independently of the search path that produced it.

use crate::classify::{analyze, AnyOperator};
use crate::numkernel::{herm_eig, herm_part, psqrt, spectral_radius, CMat, FiniteOperator};
use nalgebra::{Complex, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("search budget exhausted after {iterations} iterations (best objective {best:.3e})")]
    BudgetExhausted { iterations: usize, best: f64 },
    #[error("Cesàro means diverged: ‖M_n‖ = {norm:.3e} at n = {n}")]
    Diverged { n: usize, norm: f64 },
    #[error("Neumann series did not converge within {0} terms")]
    NoConvergence(usize),
    #[error("operator is not expansive: lambda_min(Δ) = {0:.3e}")]
    NotExpansive(f64),
    #[error("operator is not invertible: sigma_min = {0:.3e}")]
    NotInvertible(f64),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
    #[error(transparent)]
    Num(#[from] crate::numkernel::NumError),
    #[error(transparent)]
    Classify(#[from] crate::classify::ClassifyError),
}

pub type CertResult<T> = Result<T, CertError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CertKind {
    Isometry,
    Contraction,
}

/// A certified positive operator `A` with its defining residuals.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub a: FiniteOperator,
    pub kind: CertKind,
    /// ‖T*AT − A‖ (isometry kind) or λ_max(T*AT − A) (contraction kind).
    pub residual_fix: f64,
    /// λ_min(A − Δ_T).
    pub residual_dom: f64,
    pub norm: f64,
}

/// Outcome of a certificate search.
#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Feasible(Certificate),
    Infeasible { best_objective: f64, proven: bool },
}

impl SearchOutcome {
    pub fn feasible(&self) -> Option<&Certificate> {
        match self {
            SearchOutcome::Feasible(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, SearchOutcome::Infeasible { .. })
    }
}

/// Independent re-verification of the certificate invariants.
pub fn verify_certificate(
    t: &FiniteOperator,
    a: &FiniteOperator,
    kind: CertKind,
    tol: f64,
) -> CertResult<Certificate> {
    let herm_res = a.hermitian_residual();
    let norm = a.op_norm();
    let scale = 1.0 + norm + t.op_norm().powi(2);
    if herm_res > tol * scale {
        return Err(CertError::CertificateInvalid(format!(
            "A is not hermitian: residual {herm_res:.3e}"
        )));
    }
    let delta = t.delta();
    let push = t.adjoint().mul(a).mul(t).sub(a);
    let dom = a.sub(&delta).lambda_min();
    let amin = a.lambda_min();
    match kind {
        CertKind::Isometry => {
            let fix = push.op_norm();
            if fix > tol * scale {
                return Err(CertError::CertificateInvalid(format!(
                    "T*AT ≠ A: residual {fix:.3e}"
                )));
            }
            if dom < -tol * scale {
                return Err(CertError::CertificateInvalid(format!("A ⊉ Δ_T: margin {dom:.3e}")));
            }
            if norm <= tol {
                return Err(CertError::CertificateInvalid("A = 0".into()));
            }
            if amin < -tol * scale {
                return Err(CertError::CertificateInvalid(format!("A ⊁ 0: {amin:.3e}")));
            }
            Ok(Certificate { a: a.clone(), kind, residual_fix: fix, residual_dom: dom, norm })
        }
        CertKind::Contraction => {
            let fix = push.lambda_max();
            if fix > tol * scale {
                return Err(CertError::CertificateInvalid(format!(
                    "T*AT ⋠ A: margin {fix:.3e}"
                )));
            }
            if dom < -tol * scale {
                return Err(CertError::CertificateInvalid(format!("A ⊉ Δ_T: margin {dom:.3e}")));
            }
            if amin < -tol * scale {
                return Err(CertError::CertificateInvalid(format!("A ⊁ 0: {amin:.3e}")));
            }
            Ok(Certificate { a: a.clone(), kind, residual_fix: fix, residual_dom: dom, norm })
        }
    }
}

// ---------------------------------------------------------------------------
// hermitian ↔ real-vector encoding (Frobenius isometry)
// ---------------------------------------------------------------------------

fn herm_to_vec(a: &CMat) -> DVector<f64> {
    let d = a.nrows();
    let mut v = DVector::zeros(d * d);
    let mut k = 0;
    let s = std::f64::consts::SQRT_2;
    for i in 0..d {
        v[k] = a[(i, i)].re;
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            v[k] = (a[(i, j)].re + a[(j, i)].re) / s;
            k += 1;
            v[k] = (a[(i, j)].im - a[(j, i)].im) / s;
            k += 1;
        }
    }
    v
}

fn vec_to_herm(v: &DVector<f64>, d: usize) -> CMat {
    let mut a = CMat::zeros(d, d);
    let s = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        a[(i, i)] = Complex::new(v[k], 0.0);
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            let re = v[k] / s;
            k += 1;
            let im = v[k] / s;
            k += 1;
            a[(i, j)] = Complex::new(re, im);
            a[(j, i)] = Complex::new(re, -im);
        }
    }
    a
}

/// Real matrix of a linear map on hermitian matrices.
fn herm_map_matrix(d: usize, f: impl Fn(&CMat) -> CMat) -> DMatrix<f64> {
    let n = d * d;
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let img = f(&vec_to_herm(&e, d));
        m.set_column(k, &herm_to_vec(&herm_part(&img)));
    }
    m
}

// ---------------------------------------------------------------------------
// fixed-point subspace
// ---------------------------------------------------------------------------

/// Orthonormal (Frobenius) basis of the real vector space `{A = A* : T*AT = A}`,
/// from the null space of the linearised map.
pub fn fixed_point_subspace(t: &FiniteOperator) -> CertResult<Vec<FiniteOperator>> {
    let d = t.rows();
    let tol = t.tol;
    let lmap = herm_map_matrix(d, |a| t.m.adjoint() * a * &t.m);
    let shifted = &lmap - DMatrix::<f64>::identity(d * d, d * d);
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= 1e-10 * smax {
            let v: DVector<f64> = vt.row(i).transpose();
            let a = vec_to_herm(&v, d);
            let fo = FiniteOperator { m: a, tol };
            let res = t.adjoint().mul(&fo).mul(t).sub(&fo).op_norm();
            if res <= tol.sqrt() * (1.0 + t.op_norm().powi(2)) {
                basis.push(fo);
            }
        }
    }
    Ok(basis)
}

fn combine(basis: &[FiniteOperator], c: &DVector<f64>) -> FiniteOperator {
    let d = basis[0].rows();
    let mut m = CMat::zeros(d, d);
    for (b, &w) in basis.iter().zip(c.iter()) {
        m += &b.m * Complex::new(w, 0.0);
    }
    FiniteOperator { m, tol: basis[0].tol }
}

// ---------------------------------------------------------------------------
// isometry certificate
// ---------------------------------------------------------------------------

/// Search the fixed-point subspace for `A ⪰ 0`, `A ⪰ Δ_T`, `A ≠ 0`, by
/// maximizing the concave objective `min(κ·λ_min(A), λ_min(R·A − Δ_T))` over
/// the Frobenius sphere of the subspace (subgradient ascent with restarts).
/// On success the certificate is rescaled so `A ⪰ Δ_T` holds with a margin.
pub fn isometry_certificate(
    t: &FiniteOperator,
    budget: usize,
    seed: u64,
) -> CertResult<SearchOutcome> {
    let tol = t.tol;
    let delta = t.delta();
    let basis = fixed_point_subspace(t)?;
    if basis.is_empty() {
        return Ok(SearchOutcome::Infeasible { best_objective: f64::NEG_INFINITY, proven: true });
    }

    // deterministic candidates first
    let mut candidates: Vec<FiniteOperator> = vec![FiniteOperator::identity(t.rows())];
    if let Ok((m, true)) = cesaro_limit(t, 20_000) {
        candidates.push(m);
    }
    for cand in &candidates {
        if let Ok(cert) = verify_certificate(t, cand, CertKind::Isometry, tol) {
            if cert.norm > tol {
                return Ok(SearchOutcome::Feasible(cert));
            }
        }
    }

    let dim = basis.len();
    let kappa = 10.0 * (1.0 + delta.op_norm());
    let big = 100.0 * (1.0 + delta.op_norm());
    let objective = |c: &DVector<f64>| -> (f64, FiniteOperator) {
        let a = combine(&basis, c);
        let f1 = kappa * a.lambda_min();
        let f2 = a.scale(big).sub(&delta).lambda_min();
        (f1.min(f2), a)
    };

    // one-dimensional slices are decided exhaustively by concave line search
    if dim == 1 {
        let mut best = f64::NEG_INFINITY;
        for sign in [1.0f64, -1.0] {
            let c = DVector::from_vec(vec![sign]);
            let (_, a) = objective(&c);
            if a.lambda_min() < -tol * (1.0 + a.op_norm()) {
                continue;
            }
            // sup over s ≥ 0 of λ_min(sA − Δ) by ternary search on [0, s_hi]
            let s_hi = 1e8 * (1.0 + delta.op_norm()) / a.op_norm().max(1e-12);
            let f = |s: f64| a.scale(s).sub(&delta).lambda_min();
            let (mut lo, mut hi) = (0.0, s_hi);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if f(m1) < f(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            let s_star = 0.5 * (lo + hi);
            let val = f(s_star);
            best = best.max(val);
            if val >= -tol * (1.0 + delta.op_norm()) {
                let a_scaled = finalize_isometry_scale(&a, &delta, tol)?;
                if let Ok(cert) = verify_certificate(t, &a_scaled, CertKind::Isometry, tol) {
                    return Ok(SearchOutcome::Feasible(cert));
                }
            }
        }
        return Ok(SearchOutcome::Infeasible { best_objective: best, proven: true });
    }

    // subgradient ascent with random restarts
    let mut rng = StdRng::seed_from_u64(seed);
    let restarts = 8usize.min(budget.max(1));
    let iters = (budget / restarts).max(50);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_a: Option<FiniteOperator> = None;
    for _ in 0..restarts {
        let mut c = DVector::from_fn(dim, |_, _| rng.gen::<f64>() - 0.5);
        let n0 = c.norm();
        c /= n0.max(1e-12);
        for it in 0..iters {
            let (val, a) = objective(&c);
            if val > best_val {
                best_val = val;
                best_a = Some(a.clone());
            }
            // subgradient of the active branch through the bottom eigenvector
            let f1 = kappa * a.lambda_min();
            let f2 = a.scale(big).sub(&delta).lambda_min();
            let (weight, target) =
                if f1 <= f2 { (kappa, a.clone()) } else { (big, a.scale(big).sub(&delta)) };
            let eig = herm_eig(&FiniteOperator { m: herm_part(&target.m), tol: 1e-5 })?;
            let vmin: DVector<Complex<f64>> = eig.eigenvectors.column(0).into_owned();
            let mut g = DVector::zeros(dim);
            for (k, b) in basis.iter().enumerate() {
                let bv = &b.m * &vmin;
                g[k] = weight * vmin.dotc(&bv).re;
            }
            let step = 0.5 / ((it + 1) as f64).sqrt();
            let gn = g.norm().max(1e-12);
            c += g * (step / gn);
            let cn = c.norm();
            c /= cn.max(1e-12);
        }
    }
    if best_val >= -tol * kappa {
        if let Some(a) = best_a {
            if let Ok(a_scaled) = finalize_isometry_scale(&a, &delta, tol) {
                if let Ok(cert) = verify_certificate(t, &a_scaled, CertKind::Isometry, tol) {
                    return Ok(SearchOutcome::Feasible(cert));
                }
            }
        }
        return Err(CertError::BudgetExhausted { iterations: budget, best: best_val });
    }
    Ok(SearchOutcome::Infeasible { best_objective: best_val, proven: false })
}

/// Rescale a PSD fixed point so that `A ⪰ Δ_T` with a small margin and
/// ‖A‖ = max(1, smallest dominating scale).
fn finalize_isometry_scale(
    a: &FiniteOperator,
    delta: &FiniteOperator,
    tol: f64,
) -> CertResult<FiniteOperator> {
    let norm = a.op_norm();
    if norm <= tol {
        return Err(CertError::CertificateInvalid("candidate A vanishes".into()));
    }
    let a1 = a.scale(1.0 / norm);
    let f = |s: f64| a1.scale(s).sub(delta).lambda_min();
    let mut s_ok = 1.0;
    if f(s_ok) < 0.0 {
        let mut hi = 1.0;
        while f(hi) < 0.0 && hi < 1e12 {
            hi *= 2.0;
        }
        if f(hi) < 0.0 {
            return Err(CertError::CertificateInvalid("A cannot dominate Δ_T".into()));
        }
        let mut lo = hi / 2.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        s_ok = hi;
    }
    Ok(a1.scale(s_ok.max(1.0) * (1.0 + 1e-9)))
}

// ---------------------------------------------------------------------------
// Dykstra feasibility in the product hermitian space
// ---------------------------------------------------------------------------

/// Affine-image feasibility: find hermitian `A` with `φ_i(A) = L_i(A) + C_i ⪰ 0`.
/// Works in the product space `(A, Y_1, …, Y_k)`, alternating between the
/// affine graph and the PSD cones with Dykstra correction on the cone side.
struct FeasibilityProblem {
    d: usize,
    lin: Vec<DMatrix<f64>>,
    cons: Vec<CMat>,
}

struct FeasibilityResult {
    a: FiniteOperator,
    violation: f64,
    iterations: usize,
    stagnated: bool,
}

fn solve_feasibility(
    p: &FeasibilityProblem,
    start: &CMat,
    budget: usize,
    tol: f64,
) -> CertResult<FeasibilityResult> {
    let d = p.d;
    let n = d * d;
    let k = p.lin.len();
    let mut normal = DMatrix::<f64>::identity(n, n);
    for l in &p.lin {
        normal += l.transpose() * l;
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| CertError::CertificateInvalid("normal matrix not PD".into()))?;

    let phi = |i: usize, av: &DVector<f64>| -> DVector<f64> { &p.lin[i] * av + herm_to_vec(&p.cons[i]) };

    let mut a = herm_to_vec(start);
    let mut y: Vec<DVector<f64>> = (0..k).map(|i| phi(i, &a)).collect();
    let mut corr: Vec<DVector<f64>> = (0..k).map(|_| DVector::zeros(n)).collect();
    let mut best_violation = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut last_progress = f64::INFINITY;
    let scale = 1.0 + p.cons.iter().map(|c0| c0.norm()).fold(0.0, f64::max);
    for it in 0..budget {
        // project onto the affine graph
        let mut rhs = a.clone();
        for i in 0..k {
            rhs += p.lin[i].transpose() * (&y[i] - herm_to_vec(&p.cons[i]));
        }
        let a_new = chol.solve(&rhs);
        let imgs: Vec<DVector<f64>> = (0..k).map(|i| phi(i, &a_new)).collect();
        let mut violation = 0.0f64;
        for img in &imgs {
            let m = FiniteOperator::from_matrix(vec_to_herm(img, d));
            violation = violation.max(-m.lambda_min());
        }
        if violation <= tol * scale {
            return Ok(FeasibilityResult {
                a: FiniteOperator { m: vec_to_herm(&a_new, d), tol: tol.max(1e-15) },
                violation,
                iterations: it,
                stagnated: false,
            });
        }
        best_violation = best_violation.min(violation);
        // Dykstra step on the cone side
        for i in 0..k {
            let z = &imgs[i] + &corr[i];
            let zm = vec_to_herm(&z, d);
            let eig = herm_eig(&FiniteOperator { m: zm, tol: 1e-5 })?;
            let clamp = CMat::from_fn(d, d, |r, c0| {
                if r == c0 {
                    Complex::new(eig.eigenvalues[r].max(0.0), 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                }
            });
            let proj = &eig.eigenvectors * clamp * eig.eigenvectors.adjoint();
            let projv = herm_to_vec(&proj);
            corr[i] = z - &projv;
            y[i] = projv;
        }
        a = a_new;
        if it % 250 == 249 {
            if last_progress.is_finite()
                && (last_progress - best_violation).abs() <= 1e-3 * best_violation.max(1e-30)
                && best_violation > 10.0 * tol * scale
            {
                stagnant += 1;
                if stagnant >= 4 {
                    return Ok(FeasibilityResult {
                        a: FiniteOperator { m: vec_to_herm(&a, d), tol: tol.max(1e-15) },
                        violation: best_violation,
                        iterations: it,
                        stagnated: true,
                    });
                }
            } else {
                stagnant = 0;
            }
            last_progress = best_violation;
        }
    }
    Ok(FeasibilityResult {
        a: FiniteOperator { m: vec_to_herm(&a, d), tol: tol.max(1e-15) },
        violation: best_violation,
        iterations: budget,
        stagnated: true,
    })
}

// ---------------------------------------------------------------------------
// contraction certificate
// ---------------------------------------------------------------------------

/// Solve `{A ⪰ 0, A ⪰ Δ_T, T*AT ⪯ A}` by Dykstra alternating projections,
/// with deterministic candidates tried first.
pub fn contraction_certificate(t: &FiniteOperator, budget: usize) -> CertResult<SearchOutcome> {
    let tol = t.tol;
    let delta = t.delta();
    let d = t.rows();

    let gram = t.adjoint().mul(t);
    let mut candidates: Vec<FiniteOperator> = vec![FiniteOperator::identity(d), gram.clone()];
    if let Ok(eig) = herm_eig(&delta) {
        let plus = CMat::from_fn(d, d, |i, j| {
            if i == j {
                Complex::new(eig.eigenvalues[i].max(0.0), 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let dplus =
            FiniteOperator { m: &eig.eigenvectors * plus * eig.eigenvectors.adjoint(), tol };
        candidates.push(dplus.clone());
        candidates.push(dplus.add(&FiniteOperator::identity(d)));
    }
    if let Ok((m, true)) = cesaro_limit(t, 20_000) {
        candidates.push(m);
    }
    for cand in &candidates {
        if cand.op_norm() <= tol {
            continue;
        }
        if let Ok(cert) = verify_certificate(t, cand, CertKind::Contraction, tol) {
            return Ok(SearchOutcome::Feasible(cert));
        }
    }

    let ident = herm_map_matrix(d, |a| a.clone());
    let stein = herm_map_matrix(d, |a| a - t.m.adjoint() * a * &t.m);
    let problem = FeasibilityProblem {
        d,
        lin: vec![ident.clone(), ident, stein],
        cons: vec![CMat::zeros(d, d), -delta.m.clone(), CMat::zeros(d, d)],
    };
    let start = FiniteOperator::identity(d).add(&gram).m;
    let res = solve_feasibility(&problem, &start, budget, tol)?;
    if !res.stagnated {
        // tiny inflation along the identity restores strict margins after
        // the projection iteration stops at working precision
        for eps in [0.0, 10.0 * tol, 1e4 * tol] {
            let bump = FiniteOperator::identity(d).scale(eps * (1.0 + delta.op_norm()));
            if let Ok(cert) = verify_certificate(t, &res.a.add(&bump), CertKind::Contraction, tol) {
                return Ok(SearchOutcome::Feasible(cert));
            }
        }
    }
    Ok(SearchOutcome::Infeasible { best_objective: -res.violation, proven: false })
}

// ---------------------------------------------------------------------------
// Cesàro limit
// ---------------------------------------------------------------------------

/// Cesàro means `M_n = (1/(n+1)) Σ_{j≤n} T*ʲTʲ`: iterate with incremental
/// powers, estimate the limit by a least-squares fit of the cumulative sums
/// over the tail (which cancels the bounded oscillatory part), then project
/// onto the fixed-point subspace so the returned limit satisfies `T*MT = M`
/// to solver precision.
pub fn cesaro_limit(t: &FiniteOperator, budget: usize) -> CertResult<(FiniteOperator, bool)> {
    let d = t.rows();
    let tol = t.tol;
    let n_max = budget.clamp(64, 200_000);
    let cap = 1e8 * (1.0 + t.op_norm().powi(2));
    let mut p = CMat::identity(d, d);
    let mut q = CMat::identity(d, d);
    let half = n_max / 2;
    let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
    let mut sq = CMat::zeros(d, d);
    let mut sqt = CMat::zeros(d, d);
    for n in 1..=n_max {
        p = t.m.adjoint() * &p * &t.m;
        q += &p;
        let mnorm = q.norm() / ((n + 1) as f64);
        if mnorm > cap {
            return Err(CertError::Diverged { n, norm: mnorm });
        }
        if n >= half {
            let x = (n + 1) as f64;
            s0 += 1.0;
            s1 += x;
            s2 += x * x;
            sq += &q;
            sqt += &q * Complex::new(x, 0.0);
        }
    }
    let denom = s0 * s2 - s1 * s1;
    let slope =
        (sqt * Complex::new(s0, 0.0) - &sq * Complex::new(s1, 0.0)) * Complex::new(1.0 / denom, 0.0);
    let slope = herm_part(&slope);
    let basis = fixed_point_subspace(t)?;
    let mut m = CMat::zeros(d, d);
    if basis.is_empty() {
        m.copy_from(&slope);
    } else {
        for b in &basis {
            let coeff: f64 = (b.m.adjoint() * &slope).diagonal().iter().map(|z| z.re).sum();
            m += &b.m * Complex::new(coeff, 0.0);
        }
    }
    let mf = FiniteOperator { m: herm_part(&m), tol };
    let scale = 1.0 + mf.op_norm();
    let fix = t.adjoint().mul(&mf).mul(t).sub(&mf).op_norm();
    let drift = (&mf.m - &slope).norm();
    let converged = fix <= tol.sqrt() * scale && drift <= 1e-3 * scale;
    Ok((mf, converged))
}

// ---------------------------------------------------------------------------
// Neumann upgrade
// ---------------------------------------------------------------------------

/// Result of the Neumann-series upgrade: a fixed point `T*BT = B` obtained by
/// backward-conjugating the contraction deficiency `A − T*AT`. Domination
/// `B ⪰ Δ_T` is reported, not assumed: for strictly expansive invertible `T`
/// the only fixed point is 0, so the upgrade can converge without producing a
/// usable certificate.
#[derive(Debug, Clone)]
pub struct NeumannUpgrade {
    pub b: FiniteOperator,
    pub fix_residual: f64,
    /// λ_min(B − Δ_T)
    pub dom_margin: f64,
    pub dominates: bool,
    pub terms_used: usize,
}

/// `B = A + Σ_{n≥1} T^{-n*}(A − T*AT)T^{-n}`, summed until the term norm
/// drops below tolerance.
pub fn neumann_upgrade(
    t: &FiniteOperator,
    cert: &Certificate,
    max_terms: usize,
) -> CertResult<NeumannUpgrade> {
    let tol = t.tol;
    let a = &cert.a;
    let delta = t.delta();
    let scale = 1.0 + a.op_norm();
    if delta.lambda_min() < -tol * (1.0 + delta.op_norm()) {
        return Err(CertError::NotExpansive(delta.lambda_min()));
    }
    let lam = a.sub(&t.adjoint().mul(a).mul(t));
    if lam.op_norm() <= tol * scale {
        // already a fixed point; every series term vanishes
        let dom = a.sub(&delta).lambda_min();
        return Ok(NeumannUpgrade {
            b: a.clone(),
            fix_residual: lam.op_norm(),
            dom_margin: dom,
            dominates: dom >= -tol * scale,
            terms_used: 0,
        });
    }
    let tinv = t.m.clone().try_inverse().ok_or(CertError::NotInvertible(0.0))?;
    let tinv_adj = tinv.adjoint();
    let mut term = lam.m.clone();
    let mut b = a.m.clone();
    let mut converged = false;
    let mut used = 0usize;
    for n in 0..max_terms {
        term = &tinv_adj * term * &tinv;
        b += &term;
        used = n + 1;
        if term.norm() <= tol * scale * 1e-2 {
            converged = true;
            break;
        }
        if b.norm() > 1e12 * scale {
            break;
        }
    }
    if !converged {
        return Err(CertError::NoConvergence(max_terms));
    }
    let bf = FiniteOperator { m: herm_part(&b), tol };
    let fix = t.adjoint().mul(&bf).mul(t).sub(&bf).op_norm();
    if fix > tol.sqrt() * (1.0 + bf.op_norm()) {
        return Err(CertError::CertificateInvalid(format!(
            "upgraded B is not a fixed point: residual {fix:.3e}"
        )));
    }
    let dom = bf.sub(&delta).lambda_min();
    Ok(NeumannUpgrade {
        fix_residual: fix,
        dom_margin: dom,
        dominates: dom >= -tol.sqrt() * (1.0 + bf.op_norm()),
        terms_used: used,
        b: bf,
    })
}

// ---------------------------------------------------------------------------
// Q-expansive pair and similarity searches
// ---------------------------------------------------------------------------

/// Find `(A, Q)` with `Δ_T ⪯ A`, `T*AT ⪯ A ⪯ Q ⪯ T*QT`.
pub fn q_expansive_pair(
    t: &FiniteOperator,
    budget: usize,
) -> CertResult<Option<(Certificate, FiniteOperator)>> {
    let tol = t.tol;
    let d = t.rows();
    let a = match contraction_certificate(t, budget)? {
        SearchOutcome::Feasible(c) => c,
        SearchOutcome::Infeasible { .. } => return Ok(None),
    };
    let verify_q = |q: &FiniteOperator| -> bool {
        let up = q.sub(&a.a).lambda_min();
        let grow = t.adjoint().mul(q).mul(t).sub(q).lambda_min();
        let qscale = 1.0 + q.op_norm() + t.op_norm().powi(2);
        up >= -tol * qscale && grow >= -tol * qscale
    };
    if let Ok((m, true)) = cesaro_limit(t, 20_000) {
        if verify_q(&m) {
            return Ok(Some((a, m)));
        }
    }
    if t.adjoint().mul(&a.a).mul(t).sub(&a.a).op_norm() <= tol * (1.0 + a.norm) && verify_q(&a.a) {
        let q = a.a.clone();
        return Ok(Some((a, q)));
    }
    let ident = herm_map_matrix(d, |x| x.clone());
    let grow = herm_map_matrix(d, |x| t.m.adjoint() * x * &t.m - x);
    let problem = FeasibilityProblem {
        d,
        lin: vec![ident, grow],
        cons: vec![-a.a.m.clone(), CMat::zeros(d, d)],
    };
    let res = solve_feasibility(&problem, &a.a.m, budget, tol)?;
    if !res.stagnated && verify_q(&res.a) {
        let q = res.a.clone();
        return Ok(Some((a, q)));
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub enum SimilarityOutcome {
    /// `X` with `XTX⁻¹` a contraction (resp. isometry), plus the witness A₀.
    Feasible { x: FiniteOperator, a0: FiniteOperator },
    Infeasible { reason: String },
}

/// Invertible PSD `A₀` with `T*A₀T ⪯ A₀` and `A₀ ⪰ T*T`; then `X = A₀^{1/2}`
/// makes `XTX⁻¹` a contraction.
pub fn similarity_to_contraction(
    t: &FiniteOperator,
    budget: usize,
) -> CertResult<SimilarityOutcome> {
    let tol = t.tol;
    let d = t.rows();
    let gram = t.adjoint().mul(t);
    let radius = spectral_radius(t)?;
    if radius > 1.0 + tol.sqrt() {
        return Ok(SimilarityOutcome::Infeasible {
            reason: format!("spectral radius {radius:.6} exceeds 1"),
        });
    }
    let finish = |a0: FiniteOperator| -> CertResult<SimilarityOutcome> {
        let x = psqrt(&a0)?;
        Ok(SimilarityOutcome::Feasible { x, a0 })
    };
    let verify = |a0: &FiniteOperator| -> bool {
        let scale = 1.0 + a0.op_norm() + t.op_norm().powi(2);
        a0.lambda_min() > tol * 10.0
            && a0.sub(&gram).lambda_min() >= -tol * scale
            && t.adjoint().mul(a0).mul(t).sub(a0).lambda_max() <= tol * scale
    };
    if verify(&FiniteOperator::identity(d)) {
        return finish(FiniteOperator::identity(d));
    }
    if radius < 1.0 - tol.sqrt() {
        let mut sum = CMat::identity(d, d);
        let mut p = CMat::identity(d, d);
        for _ in 0..10_000 {
            p = t.m.adjoint() * &p * &t.m;
            sum += &p;
            if p.norm() < tol * 1e-3 {
                break;
            }
        }
        let a0 = scale_to_dominate(&FiniteOperator { m: herm_part(&sum), tol }, &gram);
        if verify(&a0) {
            return finish(a0);
        }
    }
    if let Ok(e) = crate::numkernel::eigen_decomp(t) {
        if e.residual < tol.sqrt() && e.cond_v < 1e7 {
            if let Some(vinv) = e.vectors.clone().try_inverse() {
                let a0 = FiniteOperator { m: herm_part(&(vinv.adjoint() * vinv)), tol };
                let a0 = scale_to_dominate(&a0, &gram);
                if verify(&a0) {
                    return finish(a0);
                }
            }
        }
    }
    if let Ok((m, true)) = cesaro_limit(t, 20_000) {
        if m.lambda_min() > tol {
            let a0 = scale_to_dominate(&m, &gram);
            if verify(&a0) {
                return finish(a0);
            }
        }
    }
    let ident_map = herm_map_matrix(d, |x| x.clone());
    let stein = herm_map_matrix(d, |x| x - t.m.adjoint() * x * &t.m);
    let problem = FeasibilityProblem {
        d,
        lin: vec![ident_map.clone(), ident_map, stein],
        cons: vec![-CMat::identity(d, d), -gram.m.clone(), CMat::zeros(d, d)],
    };
    let start = FiniteOperator::identity(d).add(&gram).m;
    let res = solve_feasibility(&problem, &start, budget, tol)?;
    if !res.stagnated {
        for eps in [0.0, 10.0 * tol, 1e4 * tol] {
            let bump = FiniteOperator::identity(d).scale(eps * (1.0 + gram.op_norm()));
            let a_try = res.a.add(&bump);
            if verify(&a_try) {
                return finish(a_try);
            }
        }
    }
    Ok(SimilarityOutcome::Infeasible {
        reason: format!(
            "feasibility gap {:.3e} after {} iterations",
            res.violation, res.iterations
        ),
    })
}

fn scale_to_dominate(a0: &FiniteOperator, gram: &FiniteOperator) -> FiniteOperator {
    let f = |c: f64| {
        let s = a0.scale(c);
        s.sub(gram).lambda_min().min(s.lambda_min() - 1.0)
    };
    let mut hi = 1.0;
    let mut tries = 0;
    while f(hi) < 0.0 && tries < 60 {
        hi *= 2.0;
        tries += 1;
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a0.scale(hi * (1.0 + 1e-9))
}

/// Invertible PSD fixed point `T*AT = A` (similarity to an isometry); the
/// singular case is infeasible by rank counting.
pub fn similarity_to_isometry(
    t: &FiniteOperator,
    budget: usize,
    seed: u64,
) -> CertResult<SimilarityOutcome> {
    let tol = t.tol;
    let sv = t.m.clone().singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= tol * (1.0 + t.op_norm()) {
        return Ok(SimilarityOutcome::Infeasible {
            reason: format!("T is singular (σ_min = {smin:.3e}); no invertible fixed point exists"),
        });
    }
    let basis = fixed_point_subspace(t)?;
    if basis.is_empty() {
        return Ok(SimilarityOutcome::Infeasible { reason: "fixed-point subspace is {0}".into() });
    }
    if let Ok((m, true)) = cesaro_limit(t, 20_000) {
        if m.lambda_min() > tol * (1.0 + m.op_norm()) {
            let x = psqrt(&m)?;
            return Ok(SimilarityOutcome::Feasible { x, a0: m });
        }
    }
    let dim = basis.len();
    let mut rng = StdRng::seed_from_u64(seed);
    let restarts = 8;
    let iters = (budget / restarts).max(50);
    let mut best = f64::NEG_INFINITY;
    let mut best_a = None;
    for _ in 0..restarts {
        let mut c = DVector::from_fn(dim, |_, _| rng.gen::<f64>() - 0.5);
        let cn = c.norm();
        c /= cn.max(1e-12);
        for it in 0..iters {
            let a = combine(&basis, &c);
            let val = a.lambda_min();
            if val > best {
                best = val;
                best_a = Some(a.clone());
            }
            let eig = herm_eig(&FiniteOperator { m: herm_part(&a.m), tol: 1e-5 })?;
            let vmin: DVector<Complex<f64>> = eig.eigenvectors.column(0).into_owned();
            let mut g = DVector::zeros(dim);
            for (k2, b) in basis.iter().enumerate() {
                g[k2] = vmin.dotc(&(&b.m * &vmin)).re;
            }
            let step = 0.5 / ((it + 1) as f64).sqrt();
            let gn = g.norm().max(1e-12);
            c += g * (step / gn);
            let cn2 = c.norm();
            c /= cn2.max(1e-12);
        }
    }
    match best_a {
        Some(a) if best > tol => {
            let x = psqrt(&a)?;
            Ok(SimilarityOutcome::Feasible { x, a0: a })
        }
        _ => Ok(SimilarityOutcome::Infeasible {
            reason: format!("no positive-definite fixed point found (best λ_min = {best:.3e})"),
        }),
    }
}

/// Quick expansivity check with error.
pub fn require_expansive(t: &FiniteOperator) -> CertResult<()> {
    let r = analyze(&AnyOperator::Finite(t.clone()), t.tol)?;
    if !r.flags.expansive {
        return Err(CertError::NotExpansive(r.delta_lambda_min));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> FiniteOperator {
        let d = v.len();
        FiniteOperator::from_matrix(CMat::from_fn(d, d, |i, j| {
            if i == j { Complex::new(v[i], 0.0) } else { Complex::new(0.0, 0.0) }
        }))
    }

    fn ex37() -> FiniteOperator {
        FiniteOperator::from_real_rows(&[&[0.0, 2.0], &[0.0, 0.0]])
    }

    #[test]
    fn fixed_point_subspace_of_unitary_contains_diagonals() {
        let u = FiniteOperator::from_matrix(CMat::from_fn(2, 2, |i, j| {
            if i == j {
                if i == 0 { Complex::new(1.0, 0.0) } else { Complex::new(0.0, 1.0) }
            } else {
                Complex::new(0.0, 0.0)
            }
        }));
        let basis = fixed_point_subspace(&u).unwrap();
        assert!(basis.len() >= 2, "diag(a,b) family, got {}", basis.len());
    }

    #[test]
    fn fixed_point_subspace_diag12_is_one_dimensional() {
        // off-diagonals scale by 2, the (2,2) entry by 4: only E₁₁ is fixed
        let basis = fixed_point_subspace(&diag(&[1.0, 2.0])).unwrap();
        assert_eq!(basis.len(), 1);
        let a = &basis[0];
        assert!(a.m[(1, 1)].norm() < 1e-9 && a.m[(0, 1)].norm() < 1e-9);
        assert!(a.m[(0, 0)].norm() > 0.9);
    }

    #[test]
    fn fixed_point_subspace_of_nilpotent_is_trivial() {
        // T*AT depends only on A₁₁ and nilpotency forces 0
        let basis = fixed_point_subspace(&ex37()).unwrap();
        assert!(basis.is_empty());
    }

    #[test]
    fn fixed_point_pairing_property() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(5);
        let m = CMat::from_fn(3, 3, |_, _| {
            Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let t = FiniteOperator::from_matrix(m);
        for a in fixed_point_subspace(&t).unwrap() {
            for _ in 0..5 {
                let h = DVector::from_fn(3, |_, _| {
                    Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let th = &t.m * &h;
                let lhs = th.dotc(&(&a.m * &th));
                let rhs = h.dotc(&(&a.m * &h));
                assert!((lhs - rhs).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn isometry_certificate_unitary_feasible() {
        let u = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        match isometry_certificate(&u, 2000, 1).unwrap() {
            SearchOutcome::Feasible(c) => {
                assert!(c.residual_dom >= -1e-9);
                assert!(c.norm >= 1.0 - 1e-9);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn isometry_certificate_diag12_infeasible() {
        // the 1-dim slice {diag(a,0)} cannot dominate Δ = diag(0,3)
        match isometry_certificate(&diag(&[1.0, 2.0]), 2000, 1).unwrap() {
            SearchOutcome::Infeasible { proven, .. } => assert!(proven),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn isometry_certificate_ex37_proven_infeasible() {
        match isometry_certificate(&ex37(), 2000, 1).unwrap() {
            SearchOutcome::Infeasible { proven, .. } => assert!(proven),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn isometry_certificate_similar_to_unitary() {
        // T = X⁻¹UX has the fixed point X*X
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(9);
        let d = 4;
        let g = CMat::from_fn(d, d, |_, _| {
            Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let q = crate::numkernel::orthonormal_columns(&g, 1e-12);
        let x = CMat::from_fn(d, d, |_, _| {
            Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        }) + CMat::identity(d, d) * Complex::new(2.0, 0.0);
        let xinv = x.clone().try_inverse().unwrap();
        let t = FiniteOperator::from_matrix(&xinv * &q * &x);
        match isometry_certificate(&t, 4000, 3).unwrap() {
            SearchOutcome::Feasible(c) => {
                let res = t.adjoint().mul(&c.a).mul(&t).sub(&c.a).op_norm();
                assert!(res <= 1e-8 * (1.0 + c.norm), "A = X*X style fixed point expected");
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn contraction_certificate_cases() {
        let c = diag(&[0.5, 0.3]);
        assert!(contraction_certificate(&c, 4000).unwrap().feasible().is_some());
        let out = contraction_certificate(&ex37(), 4000).unwrap();
        let cert = out.feasible().expect("ex37 admits a contraction certificate");
        assert!(cert.residual_dom >= -1e-9);
        assert!(contraction_certificate(&diag(&[1.0, 2.0]), 4000).unwrap().is_infeasible());
    }

    #[test]
    fn cesaro_unitary_is_identity() {
        let u = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let (m, conv) = cesaro_limit(&u, 2000).unwrap();
        assert!(conv);
        assert!(m.sub(&FiniteOperator::identity(2)).op_norm() < 1e-6);
    }

    #[test]
    fn cesaro_similar_to_unitary_converges() {
        let x = FiniteOperator::from_real_rows(&[&[1.0, 0.4], &[0.0, 1.3]]);
        let xinv = FiniteOperator::from_matrix(x.m.clone().try_inverse().unwrap());
        let u = FiniteOperator::from_real_rows(&[&[0.6, 0.8], &[-0.8, 0.6]]);
        let t = xinv.mul(&u).mul(&x);
        let (m, conv) = cesaro_limit(&t, 20_000).unwrap();
        assert!(conv);
        let fix = t.adjoint().mul(&m).mul(&t).sub(&m).op_norm();
        assert!(fix <= 1e-6 * (1.0 + m.op_norm()), "fixed point residual {fix:.3e}");
    }

    #[test]
    fn cesaro_diag12_diverges() {
        assert!(matches!(
            cesaro_limit(&diag(&[1.0, 2.0]), 20_000),
            Err(CertError::Diverged { .. })
        ));
    }

    #[test]
    fn neumann_trivial_when_already_fixed() {
        let u = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let cert =
            verify_certificate(&u, &FiniteOperator::identity(2), CertKind::Contraction, 1e-9)
                .unwrap();
        let up = neumann_upgrade(&u, &cert, 100).unwrap();
        assert!(up.b.sub(&FiniteOperator::identity(2)).op_norm() < 1e-12);
        assert!(up.dominates);
        assert_eq!(up.terms_used, 0);
    }

    #[test]
    fn neumann_series_on_strictly_expansive_normal() {
        // strictly expansive diagonal T: the backward-conjugated series decays
        // geometrically to the unique fixed point (zero), so convergence holds
        // but domination of Δ_T must be reported as failed
        let t = diag(&[1.5, 2.0]);
        let a = diag(&[4.0, 4.0]);
        let cert = Certificate {
            a: a.clone(),
            kind: CertKind::Contraction,
            residual_fix: 0.0,
            residual_dom: 0.0,
            norm: 4.0,
        };
        let up = neumann_upgrade(&t, &cert, 500).unwrap();
        assert!(up.fix_residual <= 1e-4 * (1.0 + up.b.op_norm()));
        assert!(up.terms_used > 1, "series actually summed");
        assert!(up.b.op_norm() < 1e-6, "only the zero fixed point exists here");
        assert!(!up.dominates);
    }

    #[test]
    fn q_expansive_unitary() {
        let u = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let (a, q) = q_expansive_pair(&u, 4000).unwrap().expect("unitary is feasible");
        assert!(a.residual_dom >= -1e-9);
        assert!(q.sub(&a.a).lambda_min() >= -1e-8);
    }

    #[test]
    fn q_expansive_diag12_infeasible() {
        assert!(q_expansive_pair(&diag(&[1.0, 2.0]), 3000).unwrap().is_none());
    }

    #[test]
    fn similarity_to_contraction_cases() {
        match similarity_to_contraction(&diag(&[0.5, 0.9]), 3000).unwrap() {
            SimilarityOutcome::Feasible { x, .. } => {
                assert!(x.sub(&FiniteOperator::identity(2)).op_norm() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
        match similarity_to_contraction(&ex37(), 5000).unwrap() {
            SimilarityOutcome::Feasible { x, a0 } => {
                let xinv = FiniteOperator::from_matrix(x.m.clone().try_inverse().unwrap());
                let conj = x.mul(&ex37()).mul(&xinv);
                assert!(conj.op_norm() <= 1.0 + 1e-8);
                assert!(a0.lambda_min() > 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            similarity_to_contraction(&diag(&[1.0, 2.0]), 2000).unwrap(),
            SimilarityOutcome::Infeasible { .. }
        ));
    }

    #[test]
    fn similarity_to_isometry_singular_infeasible() {
        assert!(matches!(
            similarity_to_isometry(&ex37(), 2000, 1).unwrap(),
            SimilarityOutcome::Infeasible { .. }
        ));
    }

    #[test]
    fn certificates_are_reverified() {
        let t = diag(&[1.0, 2.0]);
        let bad = FiniteOperator::identity(2);
        assert!(verify_certificate(&t, &bad, CertKind::Isometry, 1e-9).is_err());
    }
}
