//! Greedy sparse coding with complex-valued orthogonal matching pursuit.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector, C64};

/// Orthogonalised components smaller than this fraction of the atom norm
/// mark the atom as linearly dependent on the current support.
const DEPENDENT_ATOM_TOL: f64 = 1e-10;

/// A sparse vector stored as `(support, values)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    support: Vec<usize>,
    values: Vec<C64>,
    ambient_dim: usize,
}

impl SparseCode {
    pub fn new(support: Vec<usize>, values: Vec<C64>, ambient_dim: usize) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} support indices but {} values",
                support.len(),
                values.len()
            )));
        }
        for (i, &idx) in support.iter().enumerate() {
            if idx >= ambient_dim {
                return Err(Error::IndexOutOfRange { index: idx, n_atoms: ambient_dim });
            }
            if support[..i].contains(&idx) {
                return Err(Error::InvalidParameter(format!("duplicate support index {idx}")));
            }
        }
        Ok(Self { support, values, ambient_dim })
    }

    pub fn empty(ambient_dim: usize) -> Self {
        Self { support: Vec::new(), values: Vec::new(), ambient_dim }
    }

    /// Support in selection order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.support.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> ComplexVector {
        let mut v = ComplexVector::zeros(self.ambient_dim);
        for (i, w) in self.iter() {
            v[i] = w;
        }
        v
    }

    /// Keeps entries whose magnitude is non-zero, in the given dense vector.
    pub fn from_dense(v: &ComplexVector) -> Self {
        let (support, values) = v
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(i, z)| (i, *z))
            .unzip();
        Self { support, values, ambient_dim: v.len() }
    }
}

/// `sum_j A[:, j] w_j` over the support of `w`.
pub fn reconstruct(a: &ComplexMatrix, w: &SparseCode) -> Result<ComplexVector> {
    let mut out = ComplexVector::zeros(a.nrows());
    for (j, coeff) in w.iter() {
        if j >= a.ncols() {
            return Err(Error::IndexOutOfRange { index: j, n_atoms: a.ncols() });
        }
        out.axpy(coeff, &a.column(j), C64::new(1.0, 0.0));
    }
    Ok(out)
}

/// OMP result together with the residual norm after every accepted atom.
#[derive(Debug, Clone)]
pub struct OmpTrace {
    pub code: SparseCode,
    /// `residual_norms[0] = ||y||`, then one entry per selected atom.
    pub residual_norms: Vec<f64>,
    /// Atoms rejected because they were dependent on the current support.
    pub dropped: Vec<usize>,
}

/// Orthogonal matching pursuit.
///
/// Selects `argmax_j |a_j^H r| / ||a_j||` (lowest index on ties), refits
/// all selected coefficients by least squares and stops at `s_max` atoms or
/// once `||r||^2 <= eps ||y||^2`.
pub fn omp(y: &ComplexVector, a: &ComplexMatrix, s_max: usize, eps: f64) -> Result<SparseCode> {
    omp_traced(y, a, s_max, eps).map(|t| t.code)
}

pub fn omp_traced(y: &ComplexVector, a: &ComplexMatrix, s_max: usize, eps: f64) -> Result<OmpTrace> {
    let inv_norms = inverse_column_norms(a);
    omp_with_norms(y, a, &inv_norms, s_max, eps)
}

pub(crate) fn inverse_column_norms(a: &ComplexMatrix) -> Vec<f64> {
    a.column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 { 1.0 / n } else { 0.0 }
        })
        .collect()
}

/// OMP with precomputed inverse column norms (0 marks an unusable column).
pub(crate) fn omp_with_norms(
    y: &ComplexVector,
    a: &ComplexMatrix,
    inv_norms: &[f64],
    s_max: usize,
    eps: f64,
) -> Result<OmpTrace> {
    let (n, k) = a.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} but dictionary has {n} rows",
            y.len()
        )));
    }
    if s_max == 0 {
        return Err(Error::InvalidParameter("OMP sparsity budget must be >= 1".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter("OMP tolerance must be >= 0".into()));
    }

    let y_energy = y.norm_squared();
    let mut trace = OmpTrace {
        code: SparseCode::empty(k),
        residual_norms: vec![y_energy.sqrt()],
        dropped: Vec::new(),
    };
    if y_energy == 0.0 {
        return Ok(trace);
    }

    let budget = s_max.min(k).min(n);
    let mut usable: Vec<bool> = inv_norms.iter().map(|&w| w > 0.0).collect();
    let mut basis: Vec<ComplexVector> = Vec::with_capacity(budget);
    // upper-triangular factor, stored by column
    let mut r_cols: Vec<Vec<C64>> = Vec::with_capacity(budget);
    let mut projections: Vec<C64> = Vec::with_capacity(budget);
    let mut support: Vec<usize> = Vec::with_capacity(budget);
    let mut residual = y.clone();
    let stop_energy = eps * y_energy;

    while support.len() < budget {
        let res_energy = residual.norm_squared();
        if res_energy <= stop_energy {
            break;
        }
        let corr = a.ad_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if !usable[j] {
                continue;
            }
            let score = c.norm() * inv_norms[j];
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        usable[j] = false;

        let atom = a.column(j);
        let mut v = atom.clone_owned();
        let mut coeffs = vec![C64::new(0.0, 0.0); basis.len()];
        // two Gram-Schmidt passes keep the basis orthonormal to working precision
        for _ in 0..2 {
            for (q, c) in basis.iter().zip(coeffs.iter_mut()) {
                let p = q.dotc(&v);
                v.axpy(-p, q, C64::new(1.0, 0.0));
                *c += p;
            }
        }
        let v_norm = v.norm();
        if v_norm <= DEPENDENT_ATOM_TOL * atom.norm() {
            trace.dropped.push(j);
            continue;
        }
        v.unscale_mut(v_norm);
        coeffs.push(C64::new(v_norm, 0.0));

        let p = v.dotc(y);
        // residual = y - Q Q^H y, updated with the new direction
        let step = v.dotc(&residual);
        residual.axpy(-step, &v, C64::new(1.0, 0.0));

        basis.push(v);
        r_cols.push(coeffs);
        projections.push(p);
        support.push(j);
        trace.residual_norms.push(residual.norm());
    }

    // back-substitution R x = Q^H y
    let m = support.len();
    let mut values = vec![C64::new(0.0, 0.0); m];
    for i in (0..m).rev() {
        let mut acc = projections[i];
        for c in (i + 1)..m {
            acc -= r_cols[c][i] * values[c];
        }
        values[i] = acc / r_cols[i][i];
    }
    trace.code = SparseCode { support, values, ambient_dim: k };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalize_columns;
    use crate::random::{complex_gaussian, seeded};
    use approx::assert_abs_diff_eq;

    fn random_dictionary(n: usize, k: usize, seed: u64) -> ComplexMatrix {
        let mut rng = seeded(seed);
        let mut a = ComplexMatrix::from_fn(n, k, |_, _| complex_gaussian(&mut rng, 1.0));
        normalize_columns(&mut a);
        a
    }

    #[test]
    fn single_atom_signal() {
        let a = random_dictionary(8, 16, 1);
        let y = a.column(5) * C64::new(3.0, 0.0);
        let trace = omp_traced(&y, &a, 4, 1e-20).unwrap();
        assert_eq!(trace.code.support(), &[5]);
        assert_abs_diff_eq!(trace.code.values()[0].re, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace.code.values()[0].im, 0.0, epsilon = 1e-12);
        assert!(*trace.residual_norms.last().unwrap() < 1e-12);
    }

    #[test]
    fn zero_signal_gives_empty_support() {
        let a = random_dictionary(8, 16, 2);
        let code = omp(&ComplexVector::zeros(8), &a, 3, 0.0).unwrap();
        assert!(code.is_empty());
        assert_eq!(code.ambient_dim(), 16);
    }

    #[test]
    fn unnormalised_columns_rescale_coefficients() {
        let mut a = random_dictionary(6, 10, 3);
        a.column_mut(2).scale_mut(4.0);
        let y = a.column(2) * C64::new(0.5, -1.0);
        let code = omp(&y, &a, 1, 0.0).unwrap();
        assert_eq!(code.support(), &[2]);
        assert_abs_diff_eq!(code.values()[0].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(code.values()[0].im, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_atom_is_dropped() {
        // column 1 duplicates column 0; the second copy cannot extend the support
        let base = random_dictionary(4, 3, 4);
        let a = ComplexMatrix::from_columns(&[
            base.column(0).into_owned(),
            base.column(0).into_owned(),
            base.column(1).into_owned(),
            base.column(2).into_owned(),
        ]);
        let y = base.column(0) * C64::new(2.0, 0.0) + base.column(1) * C64::new(0.3, 0.1);
        let trace = omp_traced(&y, &a, 3, 0.0).unwrap();
        let support = trace.code.support();
        assert!(!(support.contains(&0) && support.contains(&1)));
        let rec = reconstruct(&a, &trace.code).unwrap();
        assert!((rec - y).norm() < 1e-10);
    }

    #[test]
    fn relative_tolerance_stops_early() {
        let a = random_dictionary(16, 32, 5);
        let y = a.column(3) * C64::new(1.0, 0.0) + a.column(9) * C64::new(0.01, 0.0);
        let code = omp(&y, &a, 10, 1e-2).unwrap();
        assert_eq!(code.len(), 1);
    }

    #[test]
    fn argument_errors() {
        let a = random_dictionary(4, 4, 6);
        let y = ComplexVector::zeros(4);
        assert!(matches!(omp(&y, &a, 0, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(omp(&y, &a, 1, -1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(omp(&ComplexVector::zeros(3), &a, 1, 0.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn reconstruct_edge_cases() {
        let a = random_dictionary(5, 7, 7);
        let empty = reconstruct(&a, &SparseCode::empty(7)).unwrap();
        assert_eq!(empty.norm(), 0.0);
        let one = SparseCode::new(vec![0], vec![C64::new(1.0, 0.0)], 7).unwrap();
        assert!((reconstruct(&a, &one).unwrap() - a.column(0)).norm() < 1e-15);
        let bad = SparseCode::new(vec![8], vec![C64::new(1.0, 0.0)], 9).unwrap();
        assert!(matches!(reconstruct(&a, &bad), Err(Error::IndexOutOfRange { index: 8, .. })));
    }

    #[test]
    fn sparse_code_validation() {
        let one = C64::new(1.0, 0.0);
        assert!(SparseCode::new(vec![1, 1], vec![one, one], 4).is_err());
        assert!(SparseCode::new(vec![4], vec![one], 4).is_err());
        assert!(SparseCode::new(vec![0], vec![], 4).is_err());
        let dense = ComplexVector::from_vec(vec![C64::new(0.0, 0.0), one, C64::new(0.0, 0.0)]);
        let code = SparseCode::from_dense(&dense);
        assert_eq!(code.support(), &[1]);
        assert_eq!(code.to_dense(), dense);
    }

    #[test]
    fn round_trip_on_exactly_sparse_signal() {
        let a = random_dictionary(32, 64, 8);
        let w0 = SparseCode::new(
            vec![3, 40, 17],
            vec![C64::new(1.0, 0.5), C64::new(-0.7, 0.2), C64::new(0.4, -0.9)],
            64,
        )
        .unwrap();
        let y = reconstruct(&a, &w0).unwrap();
        let code = omp(&y, &a, 3, 0.0).unwrap();
        let y_hat = reconstruct(&a, &code).unwrap();
        assert!((y_hat - &y).norm() < 1e-8);
    }
}
