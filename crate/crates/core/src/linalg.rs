//! Dense complex linear algebra kernels.
//!
//! Every matrix in the crate (channels, dictionaries, precoders, sensing
//! matrices) is a [`ComplexMatrix`]. Decompositions are delegated to
//! `nalgebra`; this module fixes the conventions the rest of the crate relies
//! on (descending singular values, thin factors, relative pseudo-inverse
//! cutoff).

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative singular-value cutoff used by [`least_squares`].
pub const PINV_RCOND: f64 = 1e-12;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;

/// Thin SVD `A = U diag(s) V^H` with `s` sorted in descending order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows x r` with orthonormal columns, `r = min(rows, cols)`.
    pub left_vectors: ComplexMatrix,
    pub singular_values: Vec<f64>,
    /// `cols x r` with orthonormal columns.
    pub right_vectors: ComplexMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut scaled = self.left_vectors.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * self.right_vectors.adjoint()
    }

    /// Leading triple `(u_1, s_1, v_1)`; `u_1 s_1 v_1^H` is the best rank-1
    /// approximation in Frobenius norm.
    pub fn leading(&self) -> (ComplexVector, f64, ComplexVector) {
        (
            self.left_vectors.column(0).into_owned(),
            self.singular_values[0],
            self.right_vectors.column(0).into_owned(),
        )
    }
}

pub fn svd(a: &ComplexMatrix) -> Result<SvdResult> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot decompose an empty {rows}x{cols} matrix"
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let decomposed = SVD::try_new(a.clone(), true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or(Error::SvdNoConvergence { rows, cols })?;
    let u = decomposed.u.ok_or(Error::SvdNoConvergence { rows, cols })?;
    let v_t = decomposed.v_t.ok_or(Error::SvdNoConvergence { rows, cols })?;
    let s = decomposed.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let r = order.len();
    let mut left = ComplexMatrix::zeros(rows, r);
    let mut right = ComplexMatrix::zeros(cols, r);
    let mut values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.row(src).adjoint());
        values.push(s[src].max(0.0));
    }
    Ok(SvdResult {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    })
}

/// Minimum-norm minimiser of `||A x - b||_2`, via the SVD pseudo-inverse.
///
/// Singular values below `PINV_RCOND * s_max` are treated as zero.
pub fn least_squares(a: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but right-hand side has length {}",
            a.nrows(),
            b.len()
        )));
    }
    let dec = svd(a)?;
    let s_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let mut x = ComplexVector::zeros(a.ncols());
    if s_max == 0.0 {
        return Ok(x);
    }
    let cutoff = PINV_RCOND * s_max;
    for (j, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff {
            break;
        }
        let coeff = dec.left_vectors.column(j).dotc(b) / s;
        x.axpy(coeff, &dec.right_vectors.column(j), C64::new(1.0, 0.0));
    }
    Ok(x)
}

/// `sum |z|^2` over all entries.
pub fn energy<'a, I>(entries: I) -> f64
where
    I: IntoIterator<Item = &'a C64>,
{
    entries.into_iter().map(|z| z.norm_sqr()).sum()
}

/// Unitary-free DFT matrix `F[r, c] = exp(-j 2 pi r c / n)`; `F F^H = n I`.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |r, c| {
        let phase = -2.0 * std::f64::consts::PI * ((r * c) % n) as f64 / n as f64;
        C64::from_polar(1.0, phase)
    })
}

/// Scale every column to unit 2-norm; zero columns are left untouched.
/// Returns the original norms.
pub fn normalize_columns(m: &mut ComplexMatrix) -> Vec<f64> {
    let mut norms = Vec::with_capacity(m.ncols());
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
        norms.push(norm);
    }
    norms
}

pub fn all_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_singular_values() {
        let dec = svd(&ComplexMatrix::identity(3, 3)).unwrap();
        for s in &dec.singular_values {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaled_outer_product_is_rank_one() {
        let u = ComplexVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, -1.0), c(0.5, 0.5)])
            .normalize();
        let v = ComplexVector::from_vec(vec![c(0.0, 2.0), c(1.0, 1.0), c(-1.0, 0.0)]).normalize();
        let a = (&u * v.adjoint()) * c(5.0, 0.0);
        let dec = svd(&a).unwrap();
        assert_abs_diff_eq!(dec.singular_values[0], 5.0, epsilon = 1e-12);
        for s in &dec.singular_values[1..] {
            assert!(*s < 1e-12);
        }
        let (u1, s1, v1) = dec.leading();
        let rank1 = (&u1 * v1.adjoint()) * c(s1, 0.0);
        assert!((rank1 - a).norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = ComplexMatrix::identity(2, 2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn least_squares_identity_returns_rhs() {
        let b = ComplexVector::from_vec(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0)]);
        let x = least_squares(&ComplexMatrix::identity(3, 3), &b).unwrap();
        assert!((x - b).norm() < 1e-14);
    }

    #[test]
    fn least_squares_matches_explicit_two_by_two_inverse() {
        // [a b; c d]^{-1} = [d -b; -c a] / (ad - bc)
        let (a, b, cc, d) = (c(2.0, 1.0), c(0.0, -1.0), c(1.0, 0.0), c(3.0, 2.0));
        let m = ComplexMatrix::from_row_slice(2, 2, &[a, b, cc, d]);
        let rhs = ComplexVector::from_vec(vec![c(1.0, -1.0), c(0.5, 2.0)]);
        let det = a * d - b * cc;
        let expected = ComplexVector::from_vec(vec![
            (d * rhs[0] - b * rhs[1]) / det,
            (-cc * rhs[0] + a * rhs[1]) / det,
        ]);
        let x = least_squares(&m, &rhs).unwrap();
        assert!((x - expected).norm() < 1e-12);
    }

    #[test]
    fn least_squares_orthogonal_rhs_gives_zero() {
        let a = ComplexMatrix::from_row_slice(3, 2, &[
            c(1.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.0, 1.0),
            c(0.0, 0.0), c(0.0, 0.0),
        ]);
        let b = ComplexVector::from_vec(vec![c(0.0, 0.0), c(0.0, 0.0), c(4.0, -2.0)]);
        let x = least_squares(&a, &b).unwrap();
        assert!(x.norm() < 1e-14);
    }

    #[test]
    fn least_squares_dimension_mismatch() {
        let a = ComplexMatrix::identity(3, 2);
        let b = ComplexVector::zeros(2);
        assert!(matches!(least_squares(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rank_deficient_least_squares_is_min_norm() {
        // two identical columns: min-norm solution splits the weight evenly
        let col = [c(1.0, 0.0), c(1.0, 1.0)];
        let a = ComplexMatrix::from_fn(2, 2, |r, _| col[r]);
        let b = ComplexVector::from_vec(vec![c(2.0, 0.0), c(2.0, 2.0)]);
        let x = least_squares(&a, &b).unwrap();
        assert_abs_diff_eq!(x[0].re, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(x[1].re, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn dft_gram_is_scaled_identity() {
        for n in [1, 2, 5, 16] {
            let f = dft_matrix(n);
            let gram = &f * f.adjoint();
            let expected = ComplexMatrix::identity(n, n) * c(n as f64, 0.0);
            assert!((gram - expected).norm() < 1e-9);
        }
    }
}
