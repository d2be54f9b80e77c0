//! Dense complex linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.norm()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `M^T` without conjugation.
pub fn transpose(m: &CMat) -> CMat {
    m.transpose()
}

/// Ratio of largest to smallest singular value; `f64::INFINITY` when the
/// smallest one is zero.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
}

/// Eigenvalues of a Hermitian matrix (unsorted).
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    // Symmetrize against rounding before handing it to the Hermitian solver.
    let herm = (m + m.adjoint()).scale(0.5);
    herm.symmetric_eigenvalues().iter().cloned().collect()
}

/// Orthonormal basis of the orthogonal complement of the columns of `u1`.
///
/// `u1` must have orthonormal columns. Standard basis vectors are projected
/// against the growing basis and the one with the largest residual is
/// admitted at every step (pivoted Gram-Schmidt), so the output is
/// well conditioned for every input.
pub fn orthonormal_complement(u1: &CMat) -> CMat {
    let l = u1.nrows();
    let k = u1.ncols();
    assert!(k <= l, "more columns than rows");
    let need = l - k;
    let mut out = CMat::zeros(l, need);
    if need == 0 {
        return out;
    }

    let mut residuals = identity(l);
    let project_out = |res: &mut CMat, q: &nalgebra::DVectorView<Complex64>| {
        for j in 0..res.ncols() {
            let coef = q.dotc(&res.column(j));
            let mut col = res.column_mut(j);
            col.axpy(-coef, q, Complex64::new(1.0, 0.0));
        }
    };

    // Two passes for numerical orthogonality.
    for _ in 0..2 {
        for i in 0..k {
            project_out(&mut residuals, &u1.column(i));
        }
    }

    for n in 0..need {
        let (best, _) = (0..l)
            .map(|j| (j, residuals.column(j).norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut v = residuals.column(best).into_owned();
        for _ in 0..2 {
            for i in 0..k {
                let coef = u1.column(i).dotc(&v);
                v.axpy(-coef, &u1.column(i), Complex64::new(1.0, 0.0));
            }
            for i in 0..n {
                let coef = out.column(i).dotc(&v);
                v.axpy(-coef, &out.column(i), Complex64::new(1.0, 0.0));
            }
        }
        let norm = v.norm();
        v.unscale_mut(norm);
        out.set_column(n, &v);
        project_out(&mut residuals, &out.column(n));
    }
    out
}

/// Build a block matrix `[[a, b], [c, d]]`.
pub fn block2x2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(c.nrows(), d.nrows());
    assert_eq!(a.ncols(), c.ncols());
    assert_eq!(b.ncols(), d.ncols());
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = CMat::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(c);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

/// Copy out the block starting at `(row, col)` of size `rows x cols`.
pub fn block(m: &CMat, row: usize, col: usize, rows: usize, cols: usize) -> CMat {
    m.view((row, col), (rows, cols)).into_owned()
}

/// `trace(M M^H)`.
pub fn power(m: &CMat) -> f64 {
    m.norm_squared()
}
