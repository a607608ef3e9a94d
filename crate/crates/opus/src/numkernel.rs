//! Dense complex linear-algebra primitives every other module builds on:
//! hermitian eigendecompositions, positive square roots, range/kernel bases,
//! Douglas-style minimal-norm factorisation and defect operators.
//!
//! All decisions about rank and positivity go through one relative threshold,
//! `tol * scale`, so that downstream subspace constructions agree on what
//! counts as zero. Dimensions beyond a few hundred are out of contract.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("matrix is not hermitian: residual {residual:.3e} exceeds tol {tol:.3e}")]
    NotHermitian { residual: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: lambda_min {lambda_min:.3e}")]
    NotPositive { lambda_min: f64 },
    #[error("operator is not a contraction: norm {norm:.6}")]
    NotContraction { norm: f64 },
    #[error("Douglas factorisation failed: residual {residual:.3e} exceeds bound {bound:.3e}")]
    RangeViolation { residual: f64, bound: f64 },
    #[error("operator is not left invertible: lambda_min(T*T) = {lambda_min:.3e}")]
    NotLeftInvertible { lambda_min: f64 },
    #[error("operator is not invertible")]
    NotInvertible,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid tolerance {0}")]
    BadTolerance(f64),
    #[error("matrix has non-finite entries")]
    NonFiniteEntries,
}

pub type NumResult<T> = Result<T, NumError>;

fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Dense complex matrix together with the comparison tolerance used for all
/// rank and positivity decisions about it.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteOperator {
    pub m: CMat,
    pub tol: f64,
}

impl FiniteOperator {
    pub fn new(m: CMat, tol: f64) -> NumResult<Self> {
        if !(tol > 0.0 && tol < 1e-4) {
            return Err(NumError::BadTolerance(tol));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(NumError::NonFiniteEntries);
        }
        Ok(Self { m, tol })
    }

    pub fn from_matrix(m: CMat) -> Self {
        Self { m, tol: crate::DEFAULT_TOL }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let cdim = if r == 0 { 0 } else { rows[0].len() };
        let m = CMat::from_fn(r, cdim, |i, j| c(rows[i][j], 0.0));
        Self::from_matrix(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(CMat::identity(n, n))
    }

    pub fn zeros(r: usize, cdim: usize) -> Self {
        Self::from_matrix(CMat::zeros(r, cdim))
    }

    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn cols(&self) -> usize {
        self.m.ncols()
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint(), tol: self.tol }
    }

    /// Operator norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        if self.m.is_empty() {
            return 0.0;
        }
        let sv = self.m.clone().singular_values();
        sv.iter().cloned().fold(0.0, f64::max)
    }

    pub fn fro_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermitian_residual(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Δ_T = T*T − I, the covariance operator of `T`.
    pub fn delta(&self) -> Self {
        let n = self.cols();
        Self { m: self.m.adjoint() * &self.m - CMat::identity(n, n), tol: self.tol }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self { m: &self.m * &rhs.m, tol: self.tol }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self { m: &self.m + &rhs.m, tol: self.tol }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self { m: &self.m - &rhs.m, tol: self.tol }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: self.m.clone() * c(s, 0.0), tol: self.tol }
    }

    /// Smallest eigenvalue of the hermitian part; the PSD test used everywhere.
    pub fn lambda_min(&self) -> f64 {
        if self.m.is_empty() {
            return 0.0;
        }
        let h = herm_part(&self.m);
        let eig = h.symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        if self.m.is_empty() {
            return 0.0;
        }
        let h = herm_part(&self.m);
        let eig = h.symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Hermitian part (M + M*)/2.
pub fn herm_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigendecomposition of a hermitian matrix: real ascending eigenvalues and a
/// unitary matrix of eigenvectors.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl HermEig {
    /// Reassemble QΛQ*.
    pub fn reconstruct(&self) -> CMat {
        let n = self.eigenvalues.len();
        let lam = CMat::from_fn(n, n, |i, j| {
            if i == j { c(self.eigenvalues[i], 0.0) } else { c(0.0, 0.0) }
        });
        &self.eigenvectors * lam * self.eigenvectors.adjoint()
    }
}

/// Hermitian eigendecomposition with the precondition ‖H − H*‖ ≤ tol.
pub fn herm_eig(h: &FiniteOperator) -> NumResult<HermEig> {
    let res = h.hermitian_residual();
    let scale = 1.0 + h.op_norm();
    if res > h.tol * scale {
        return Err(NumError::NotHermitian { residual: res, tol: h.tol * scale });
    }
    if h.m.is_empty() {
        return Ok(HermEig { eigenvalues: vec![], eigenvectors: CMat::zeros(0, 0) });
    }
    let sym = herm_part(&h.m).symmetric_eigen();
    let n = sym.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sym.eigenvalues[a].partial_cmp(&sym.eigenvalues[b]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let eigenvectors = CMat::from_fn(n, n, |i, j| sym.eigenvectors[(i, order[j])]);
    Ok(HermEig { eigenvalues, eigenvectors })
}

/// Positive square root of a PSD matrix. Eigenvalues in [−tol·scale, 0) are
/// clamped to zero; anything more negative is an error, not a repair.
pub fn psqrt(p: &FiniteOperator) -> NumResult<FiniteOperator> {
    psqrt_clamped(p, 1.0)
}

pub(crate) fn psqrt_clamped(p: &FiniteOperator, slack: f64) -> NumResult<FiniteOperator> {
    let eig = herm_eig(p)?;
    let scale = 1.0 + p.op_norm();
    let floor = -p.tol * scale * slack;
    if let Some(&lmin) = eig.eigenvalues.first() {
        if lmin < floor {
            return Err(NumError::NotPositive { lambda_min: lmin });
        }
    }
    let n = eig.eigenvalues.len();
    let lam = CMat::from_fn(n, n, |i, j| {
        if i == j { c(eig.eigenvalues[i].max(0.0).sqrt(), 0.0) } else { c(0.0, 0.0) }
    });
    let m = &eig.eigenvectors * lam * eig.eigenvectors.adjoint();
    Ok(FiniteOperator { m: herm_part(&m), tol: p.tol })
}

/// Orthonormal bases of the closed range and the kernel of `T`, split by the
/// relative singular-value threshold tol·‖T‖.
pub fn range_kernel_bases(t: &FiniteOperator) -> (CMat, CMat) {
    let rows = t.rows();
    let cols = t.cols();
    if rows == 0 || cols == 0 {
        return (CMat::zeros(rows, 0), CMat::identity(cols, cols));
    }
    let svd = t.m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = t.tol * smax.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let range = u.columns(0, rank).into_owned();
    // kernel = orthocomplement of the kept right-singular directions; the thin
    // SVD only carries min(r, c) of them, so complete against the identity
    let mut stacked = CMat::zeros(cols, rank + cols);
    for k in 0..rank {
        for i in 0..cols {
            stacked[(i, k)] = vt[(k, i)].conj();
        }
    }
    for i in 0..cols {
        stacked[(i, rank + i)] = c(1.0, 0.0);
    }
    let completed = orthonormal_columns(&stacked, 1e-6);
    let kdim = cols - rank;
    let mut kernel = CMat::zeros(cols, kdim);
    for k in 0..kdim.min(completed.ncols().saturating_sub(rank)) {
        kernel.set_column(k, &completed.column(rank + k));
    }
    (range, kernel)
}

/// Rank under the relative threshold tol·σ_max.
pub fn rank_of(t: &FiniteOperator) -> usize {
    range_kernel_bases(t).0.ncols()
}

/// Moore–Penrose pseudoinverse with relative cutoff tol·σ_max.
pub fn pinv(t: &FiniteOperator) -> FiniteOperator {
    if t.m.is_empty() {
        return FiniteOperator { m: CMat::zeros(t.cols(), t.rows()), tol: t.tol };
    }
    let svd = t.m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = t.tol * smax.max(1e-300);
    let k = svd.singular_values.len();
    let sinv = CMat::from_fn(k, k, |i, j| {
        if i == j && svd.singular_values[i] > cut {
            c(1.0 / svd.singular_values[i], 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    FiniteOperator { m: vt.adjoint() * sinv * u.adjoint(), tol: t.tol }
}

/// Minimal-norm solution `C` of `A = B·C` (Douglas' lemma). Feasible when
/// R(A) ⊆ R(B) up to tolerance; then ‖A − BC‖ ≤ tol·(1 + ‖A‖), and `C` is a
/// contraction whenever A A* ⪯ B B*.
pub fn douglas_solve(a: &FiniteOperator, b: &FiniteOperator) -> NumResult<FiniteOperator> {
    if a.rows() != b.rows() {
        return Err(NumError::DimensionMismatch(format!(
            "douglas_solve: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    let csol = pinv(b).mul(a);
    let residual = b.mul(&csol).sub(a).op_norm();
    let bound = a.tol * (1.0 + a.op_norm());
    if residual > bound {
        return Err(NumError::RangeViolation { residual, bound });
    }
    Ok(csol)
}

/// Defect operator D_T = (I − T*T)^{1/2} of a contraction.
pub fn defect(t: &FiniteOperator) -> NumResult<FiniteOperator> {
    let norm = t.op_norm();
    if norm > 1.0 + t.tol {
        return Err(NumError::NotContraction { norm });
    }
    let n = t.cols();
    let p = FiniteOperator {
        m: CMat::identity(n, n) - t.m.adjoint() * &t.m,
        tol: t.tol,
    };
    psqrt_clamped(&p, 4.0)
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal-column matrices. Returns π/2 when dimensions differ.
pub fn max_principal_angle(q1: &CMat, q2: &CMat) -> f64 {
    if q1.ncols() != q2.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if q1.ncols() == 0 {
        return 0.0;
    }
    let g = q1.adjoint() * q2;
    let sv = g.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    smin.clamp(-1.0, 1.0).acos()
}

/// Orthonormalize the columns of `m` (modified Gram–Schmidt), dropping
/// directions below the relative threshold.
pub fn orthonormal_columns(m: &CMat, tol: f64) -> CMat {
    let rows = m.nrows();
    let mut cols: Vec<CVec> = Vec::new();
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for j in 0..m.ncols() {
        let mut v: CVec = m.column(j).into_owned();
        for q in &cols {
            let coeff = q.dotc(&v);
            v -= q * coeff;
        }
        // second pass for numerical orthogonality
        for q in &cols {
            let coeff = q.dotc(&v);
            v -= q * coeff;
        }
        let n = v.norm();
        if n > tol * scale {
            cols.push(v / c(n, 0.0));
        }
    }
    let mut out = CMat::zeros(rows, cols.len());
    for (j, q) in cols.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

// ---------------------------------------------------------------------------
// Complex Schur decomposition (Hessenberg reduction + Wilkinson-shifted QR).
// Used for spectral radii and the eigenvector route in similarity searches.
// ---------------------------------------------------------------------------

/// Schur form A = Q R Q* with R upper triangular and Q unitary.
pub struct Schur {
    pub q: CMat,
    pub r: CMat,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.r.nrows()).map(|i| self.r[(i, i)]).collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn hessenberg(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = CMat::identity(n, n);
    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating h[k+2.., k]
        let m = n - k - 1;
        let mut x = CVec::zeros(m);
        for i in 0..m {
            x[i] = h[(k + 1 + i, k)];
        }
        let alpha = x.norm();
        if alpha < 1e-300 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / c(x[0].norm(), 0.0) } else { c(1.0, 0.0) };
        let mut v = x.clone();
        v[0] += phase * c(alpha, 0.0);
        let vn = v.norm();
        if vn < 1e-300 {
            continue;
        }
        let v = v / c(vn, 0.0);
        // H := (I - 2vv*) applied to rows/cols k+1..
        for j in 0..n {
            let mut dot = c(0.0, 0.0);
            for i in 0..m {
                dot += v[i].conj() * h[(k + 1 + i, j)];
            }
            for i in 0..m {
                let upd = v[i] * dot * c(2.0, 0.0);
                h[(k + 1 + i, j)] -= upd;
            }
        }
        for i in 0..n {
            let mut dot = c(0.0, 0.0);
            for j in 0..m {
                dot += h[(i, k + 1 + j)] * v[j];
            }
            for j in 0..m {
                let upd = dot * v[j].conj() * c(2.0, 0.0);
                h[(i, k + 1 + j)] -= upd;
            }
        }
        for i in 0..n {
            let mut dot = c(0.0, 0.0);
            for j in 0..m {
                dot += q[(i, k + 1 + j)] * v[j];
            }
            for j in 0..m {
                let upd = dot * v[j].conj() * c(2.0, 0.0);
                q[(i, k + 1 + j)] -= upd;
            }
        }
    }
    (q, h)
}

/// Complex Schur decomposition by the shifted QR iteration.
pub fn complex_schur(a: &CMat) -> NumResult<Schur> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(NumError::DimensionMismatch("schur needs a square matrix".into()));
    }
    if n == 0 {
        return Ok(Schur { q: CMat::zeros(0, 0), r: CMat::zeros(0, 0) });
    }
    let scale = a.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    let eps = 1e-15 * scale;
    let (mut q, mut h) = hessenberg(a);
    let mut p = n; // active block is 0..p
    let mut iters = 0usize;
    let max_iters = 60 * n * n + 200;
    while p > 1 {
        iters += 1;
        if iters > max_iters {
            return Err(NumError::DimensionMismatch("schur iteration failed to converge".into()));
        }
        // deflate
        let mut deflated = false;
        for k in (1..p).rev() {
            let sub = h[(k, k - 1)].norm();
            if sub <= eps + 1e-14 * (h[(k, k)].norm() + h[(k - 1, k - 1)].norm()) {
                h[(k, k - 1)] = c(0.0, 0.0);
                if k == p - 1 {
                    p -= 1;
                    deflated = true;
                    break;
                }
            }
        }
        if deflated {
            continue;
        }
        // Wilkinson shift from trailing 2x2 of the active block
        let a11 = h[(p - 2, p - 2)];
        let a12 = h[(p - 2, p - 1)];
        let a21 = h[(p - 1, p - 2)];
        let a22 = h[(p - 1, p - 1)];
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = (tr * tr - det * c(4.0, 0.0)).sqrt();
        let l1 = (tr + disc) * c(0.5, 0.0);
        let l2 = (tr - disc) * c(0.5, 0.0);
        let shift = if (l1 - a22).norm() < (l2 - a22).norm() { l1 } else { l2 };
        // implicit single-shift QR sweep via Givens rotations
        let mut gx = h[(0, 0)] - shift;
        let mut gy = h[(1, 0)];
        for k in 0..p - 1 {
            // Givens zeroing gy against gx
            let r = (gx.norm_sqr() + gy.norm_sqr()).sqrt();
            if r > 1e-300 {
                let cth = gx / c(r, 0.0);
                let sth = gy / c(r, 0.0);
                // rows k, k+1
                for j in k.saturating_sub(1)..n {
                    let hk = h[(k, j)];
                    let hk1 = h[(k + 1, j)];
                    h[(k, j)] = cth.conj() * hk + sth.conj() * hk1;
                    h[(k + 1, j)] = -sth * hk + cth * hk1;
                }
                // cols k, k+1
                let top = (k + 2).min(p - 1) + 1;
                for i in 0..top.min(n) {
                    let hk = h[(i, k)];
                    let hk1 = h[(i, k + 1)];
                    h[(i, k)] = hk * cth + hk1 * sth;
                    h[(i, k + 1)] = -hk * sth.conj() + hk1 * cth.conj();
                }
                for i in 0..n {
                    let qk = q[(i, k)];
                    let qk1 = q[(i, k + 1)];
                    q[(i, k)] = qk * cth + qk1 * sth;
                    q[(i, k + 1)] = -qk * sth.conj() + qk1 * cth.conj();
                }
            }
            if k + 2 < p {
                gx = h[(k + 1, k)];
                gy = h[(k + 2, k)];
            }
        }
    }
    // clean the lower triangle
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = c(0.0, 0.0);
        }
    }
    Ok(Schur { q, r: h })
}

/// Spectral radius via the Schur form.
pub fn spectral_radius(t: &FiniteOperator) -> NumResult<f64> {
    Ok(complex_schur(&t.m)?.spectral_radius())
}

/// Eigendecomposition T = V Λ V⁻¹ for diagonalizable T, with the achieved
/// condition number of `V` and the reconstruction residual.
pub struct EigenDecomp {
    pub values: Vec<C64>,
    pub vectors: CMat,
    pub cond_v: f64,
    pub residual: f64,
}

pub fn eigen_decomp(t: &FiniteOperator) -> NumResult<EigenDecomp> {
    let n = t.rows();
    let schur = complex_schur(&t.m)?;
    let r = &schur.r;
    let mut x = CMat::zeros(n, n);
    for i in 0..n {
        let lam = r[(i, i)];
        x[(i, i)] = c(1.0, 0.0);
        for j in (0..i).rev() {
            let mut s = c(0.0, 0.0);
            for k in j + 1..=i {
                s += r[(j, k)] * x[(k, i)];
            }
            let denom = r[(j, j)] - lam;
            if denom.norm() < 1e-12 * (1.0 + lam.norm()) {
                // treat clustered eigenvalues as decoupled
                x[(j, i)] = c(0.0, 0.0);
            } else {
                x[(j, i)] = -s / denom;
            }
        }
        let nrm = x.column(i).norm();
        for j in 0..n {
            x[(j, i)] /= c(nrm, 0.0);
        }
    }
    let v = &schur.q * x;
    let sv = v.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond_v = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let values = schur.eigenvalues();
    let lam = CMat::from_fn(n, n, |i, j| if i == j { values[i] } else { c(0.0, 0.0) });
    let residual = (&t.m * &v - &v * lam).norm() / (1.0 + t.fro_norm());
    Ok(EigenDecomp { values, vectors: v, cond_v, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_cmat(rng: &mut StdRng, r: usize, cols: usize) -> CMat {
        CMat::from_fn(r, cols, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn herm_eig_identity_and_diagonal() {
        let id = FiniteOperator::identity(2);
        let e = herm_eig(&id).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
        let q = &e.eigenvectors;
        assert!((q.adjoint() * q - CMat::identity(2, 2)).norm() < 1e-12);

        let d = FiniteOperator::from_real_rows(&[&[3.0, 0.0], &[0.0, -1.0]]);
        let e = herm_eig(&d).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn herm_eig_reconstruction_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10 {
            let g = random_cmat(&mut rng, 5, 5);
            let h = FiniteOperator::from_matrix(&g + g.adjoint());
            let e = herm_eig(&h).unwrap();
            let res = (e.reconstruct() - &h.m).norm();
            assert!(res <= h.tol * (1.0 + h.op_norm()), "residual {res}");
        }
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let t = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(herm_eig(&t), Err(NumError::NotHermitian { .. })));
    }

    #[test]
    fn psqrt_identity_and_diagonal() {
        let r = psqrt(&FiniteOperator::identity(3)).unwrap();
        assert!((&r.m - CMat::identity(3, 3)).norm() < 1e-12);
        let d = FiniteOperator::from_real_rows(&[&[4.0, 0.0], &[0.0, 9.0]]);
        let r = psqrt(&d).unwrap();
        assert!((r.m[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((r.m[(1, 1)].re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psqrt_rejects_indefinite() {
        let d = FiniteOperator::from_real_rows(&[&[1.0, 0.0], &[0.0, -0.5]]);
        assert!(matches!(psqrt(&d), Err(NumError::NotPositive { .. })));
    }

    #[test]
    fn range_kernel_trivial_cases() {
        let z = FiniteOperator::zeros(2, 2);
        let (r, k) = range_kernel_bases(&z);
        assert_eq!(r.ncols(), 0);
        assert_eq!(k.ncols(), 2);
        let id = FiniteOperator::identity(3);
        let (r, k) = range_kernel_bases(&id);
        assert_eq!(r.ncols(), 3);
        assert_eq!(k.ncols(), 0);
    }

    #[test]
    fn range_kernel_rank_one_outer_product() {
        // uv*: range span{u}, kernel = v-orthocomplement (SVD oracle)
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(2.0, 1.0), c(0.0, -1.0)]);
        let v = CVec::from_vec(vec![c(0.5, 0.0), c(0.0, 1.0), c(1.0, 1.0)]);
        let m = CMat::from_fn(3, 3, |i, j| u[i] * v[j].conj());
        let t = FiniteOperator::from_matrix(m);
        let (r, k) = range_kernel_bases(&t);
        assert_eq!(r.ncols(), 1);
        assert_eq!(k.ncols(), 2);
        let un = &u / c(u.norm(), 0.0);
        let overlap = (r.column(0).dotc(&un)).norm();
        assert!((overlap - 1.0).abs() < 1e-10);
        for j in 0..2 {
            let kv: CVec = k.column(j).into_owned();
            assert!(kv.dotc(&v).norm() < 1e-10);
        }
    }

    #[test]
    fn douglas_trivial_and_zero() {
        let id = FiniteOperator::identity(3);
        let csol = douglas_solve(&id, &id).unwrap();
        assert!((&csol.m - CMat::identity(3, 3)).norm() < 1e-12);
        let z = FiniteOperator::zeros(3, 3);
        let csol = douglas_solve(&z, &id).unwrap();
        assert!(csol.op_norm() < 1e-12);
    }

    #[test]
    fn douglas_construct_then_recover() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let b = FiniteOperator::from_matrix(random_cmat(&mut rng, 4, 4));
            let mut k = FiniteOperator::from_matrix(random_cmat(&mut rng, 4, 4));
            let nk = k.op_norm();
            if nk > 1.0 {
                k = k.scale(0.9 / nk);
            }
            let a = b.mul(&k);
            let csol = douglas_solve(&a, &b).unwrap();
            assert!(b.mul(&csol).sub(&a).op_norm() <= a.tol * (1.0 + a.op_norm()));
            assert!(csol.op_norm() <= 1.0 + 1e-8, "minimal-norm solution of B(BK)=A stays contractive");
        }
    }

    #[test]
    fn douglas_rejects_range_violation() {
        let a = FiniteOperator::identity(2);
        let b = FiniteOperator::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(douglas_solve(&a, &b), Err(NumError::RangeViolation { .. })));
    }

    #[test]
    fn defect_cases() {
        // unitary -> 0
        let u = FiniteOperator::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(defect(&u).unwrap().op_norm() < 1e-10);
        // zero -> identity
        let z = FiniteOperator::zeros(2, 2);
        assert!((&defect(&z).unwrap().m - CMat::identity(2, 2)).norm() < 1e-12);
        // diag(0.6, 0.8) -> diag(0.8, 0.6)
        let t = FiniteOperator::from_real_rows(&[&[0.6, 0.0], &[0.0, 0.8]]);
        let d = defect(&t).unwrap();
        assert!((d.m[(0, 0)].re - 0.8).abs() < 1e-12);
        assert!((d.m[(1, 1)].re - 0.6).abs() < 1e-12);
        // expansive input rejected
        let e = FiniteOperator::from_real_rows(&[&[2.0]]);
        assert!(matches!(defect(&e), Err(NumError::NotContraction { .. })));
    }

    #[test]
    fn schur_triangularizes_and_matches_trace() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..8 {
            let a = random_cmat(&mut rng, 6, 6);
            let s = complex_schur(&a).unwrap();
            let recon = &s.q * &s.r * s.q.adjoint();
            assert!((recon - &a).norm() < 1e-9 * (1.0 + a.norm()));
            let tr_a: C64 = (0..6).map(|i| a[(i, i)]).sum();
            let tr_r: C64 = (0..6).map(|i| s.r[(i, i)]).sum();
            assert!((tr_a - tr_r).norm() < 1e-9);
        }
    }

    #[test]
    fn eigen_decomp_diagonalizable() {
        let t = FiniteOperator::from_real_rows(&[&[1.0, 1.0], &[0.0, 0.5]]);
        let e = eigen_decomp(&t).unwrap();
        assert!(e.residual < 1e-10);
        let mut vals: Vec<f64> = e.values.iter().map(|z| z.re).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 0.5).abs() < 1e-10 && (vals[1] - 1.0).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn psqrt_squares_back(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = 1 + (seed as usize % 8);
            let g = random_cmat(&mut rng, d, d);
            let p = FiniteOperator::from_matrix(g.adjoint() * &g);
            let r = psqrt(&p).unwrap();
            let res = r.mul(&r).sub(&p).op_norm();
            prop_assert!(res <= p.tol * (1.0 + p.op_norm()) * 4.0);
            prop_assert!(r.hermitian_residual() < 1e-10);
        }

        #[test]
        fn rank_plus_nullity(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = 2 + (seed as usize % 5);
            let r = seed as usize % (d + 1);
            let a = random_cmat(&mut rng, d, r);
            let b = random_cmat(&mut rng, r, d);
            let t = FiniteOperator::from_matrix(if r == 0 { CMat::zeros(d, d) } else { a * b });
            let (rb, kb) = range_kernel_bases(&t);
            prop_assert_eq!(rb.ncols() + kb.ncols(), d);
            if rb.ncols() > 0 {
                prop_assert!((rb.adjoint() * &rb - CMat::identity(rb.ncols(), rb.ncols())).norm() < 1e-9);
            }
            if kb.ncols() > 0 {
                prop_assert!((kb.adjoint() * &kb - CMat::identity(kb.ncols(), kb.ncols())).norm() < 1e-9);
                prop_assert!((&t.m * &kb).norm() < 1e-8 * (1.0 + t.op_norm()));
            }
        }
    }
}
