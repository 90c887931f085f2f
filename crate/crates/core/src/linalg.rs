//! Dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::linalg::{Cholesky, SymmetricEigen, SVD};
use nalgebra::Dyn;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::types::{CMat, CVec, RMat, RVec, RANK_TOL};

/// Hermitian part `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Symmetric part of a real matrix.
pub fn symmetric_part(a: &RMat) -> RMat {
    (a + a.transpose()) * 0.5
}

/// `‖A − A^H‖_F ≤ rel_tol · max(‖A‖_F, tiny)`.
pub fn is_hermitian(a: &CMat, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    (a - a.adjoint()).norm() <= rel_tol * scale
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius inner product `Σ a_ij b_ij` of two real matrices.
pub fn frobenius_dot(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
pub fn eigh(a: &CMat) -> (RVec, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = RVec::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues descending.
pub fn eigh_real(a: &RMat) -> (RVec, RMat) {
    let eig = SymmetricEigen::new(symmetric_part(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = RVec::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    SymmetricEigen::new(hermitian_part(a)).eigenvalues.min()
}

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]` of a Hermitian matrix.
///
/// Fails unless `H` is Hermitian to `1e−10` relative.
pub fn embed_hermitian(h: &CMat) -> Result<RMat> {
    if !is_hermitian(h, 1e-10) {
        return Err(Error::Contract(
            "embedding requires a Hermitian matrix".into(),
        ));
    }
    Ok(embed_complex(h))
}

/// Same block layout as [`embed_hermitian`] for any square complex matrix.
pub fn embed_complex(h: &CMat) -> RMat {
    let n = h.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`embed_hermitian`]; averages the redundant blocks.
pub fn extract_hermitian(s: &RMat) -> Result<CMat> {
    if !s.is_square() || s.nrows() % 2 != 0 {
        return Err(Error::Contract(
            "extraction requires an even-sized square matrix".into(),
        ));
    }
    let n = s.nrows() / 2;
    let h = CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (s[(i, j)] + s[(i + n, j + n)]);
        let im = 0.5 * (s[(i + n, j)] - s[(i, j + n)]);
        Complex64::new(re, im)
    });
    Ok(hermitian_part(&h))
}

/// Projection onto the PSD cone (negative eigenvalues clipped to zero).
pub fn psd_project(a: &CMat) -> CMat {
    let (vals, vecs) = eigh(a);
    let d = CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&l| Complex64::new(l.max(0.0), 0.0)),
    );
    hermitian_part(&(&vecs * CMat::from_diagonal(&d) * vecs.adjoint()))
}

/// Hermitian square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(a: &CMat) -> CMat {
    let (vals, vecs) = eigh(a);
    let d = CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    );
    &vecs * CMat::from_diagonal(&d) * vecs.adjoint()
}

/// Thin SVD `A = U diag(s) V^H` with singular values sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSvd {
    pub left: CMat,
    pub values: RVec,
    pub right: CMat,
}

pub fn svd_sorted(a: &CMat) -> SortedSvd {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut left = CMat::zeros(a.nrows(), k);
    let mut right = CMat::zeros(a.ncols(), k);
    let mut values = RVec::zeros(k);
    let v = vt.adjoint();
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v.column(src));
        values[dst] = svd.singular_values[src].max(0.0);
    }
    SortedSvd { left, values, right }
}

/// Number of singular values above `RANK_TOL · σ_max`.
pub fn numerical_rank(sorted_values: &RVec) -> usize {
    let top = sorted_values.iter().cloned().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    sorted_values.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Rank of a Hermitian PSD matrix using the shared relative threshold.
pub fn hermitian_rank(a: &CMat) -> usize {
    let (vals, _) = eigh(a);
    let top = vals.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs()));
    if top <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&v| v > RANK_TOL * top).count()
}

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// `nalgebra` takes complex square roots of negative pivots, so the pivots
/// are checked explicitly.
pub fn cholesky_hpd(a: &CMat) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(hermitian_part(a))?;
    let l = chol.l_dirty();
    let ok = (0..a.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-12 * d.re && d.re.is_finite()
    });
    ok.then_some(chol)
}

/// `tr(A^{-1})` for a Hermitian positive-definite matrix, `None` if not PD.
pub fn trace_inverse_hpd(a: &CMat) -> Option<f64> {
    let chol = cholesky_hpd(a)?;
    let n = a.nrows();
    let linv = chol.l().solve_lower_triangular(&CMat::identity(n, n))?;
    Some(linv.norm_squared())
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Diagonal matrix from a complex vector.
pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// `diag(0, 1, …, n−1)` as a real vector.
pub fn index_ramp(n: usize) -> RVec {
    RVec::from_iterator(n, (0..n).map(|i| i as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, Streams};

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut rng = Streams::new(seed).stream("herm", 0);
        let a = CMat::from_fn(n, n, |_, _| complex_normal(&mut rng, 1.0));
        hermitian_part(&a)
    }

    #[test]
    fn embedding_of_identity_is_identity() {
        let e = embed_hermitian(&CMat::identity(3, 3)).unwrap();
        assert_eq!(e, RMat::identity(6, 6));
    }

    #[test]
    fn embedding_rejects_non_hermitian() {
        let mut a = CMat::identity(2, 2);
        a[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(embed_hermitian(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn embedding_duplicates_eigenvalues() {
        // j·[[0,1],[−1,0]] is Hermitian with eigenvalues ±1.
        let h = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        let (vals, _) = eigh_real(&embed_hermitian(&h).unwrap());
        let expected = [1.0, 1.0, -1.0, -1.0];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        for seed in 0..20 {
            let h = random_hermitian(5, seed);
            let (hv, _) = eigh(&h);
            let (ev, _) = eigh_real(&embed_hermitian(&h).unwrap());
            for i in 0..5 {
                assert!((ev[2 * i] - hv[i]).abs() < 1e-9);
                assert!((ev[2 * i + 1] - hv[i]).abs() < 1e-9);
            }
            let back = extract_hermitian(&embed_hermitian(&h).unwrap()).unwrap();
            assert!((back - &h).norm() <= 1e-12 * h.norm());
        }
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let mut rng = Streams::new(3).stream("svd", 0);
        let a = CMat::from_fn(4, 6, |_, _| complex_normal(&mut rng, 1.0));
        let s = svd_sorted(&a);
        let rec = &s.left * CMat::from_diagonal(&s.values.map(|x| Complex64::new(x, 0.0)))
            * s.right.adjoint();
        assert!((rec - &a).norm() <= 1e-12 * a.norm());
        for w in s.values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert_eq!(numerical_rank(&s.values), 4);
    }

    #[test]
    fn trace_inverse_matches_explicit_inverse() {
        let h = random_hermitian(4, 9) + CMat::identity(4, 4) * Complex64::new(6.0, 0.0);
        let direct = h.clone().try_inverse().unwrap().trace().re;
        let fast = trace_inverse_hpd(&h).unwrap();
        assert!((direct - fast).abs() < 1e-12 * direct.abs());
        assert!(trace_inverse_hpd(&(-CMat::identity(2, 2))).is_none());
    }
}
