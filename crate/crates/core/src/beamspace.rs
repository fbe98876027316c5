//! Beamspace transforms: the DFT model of a lens antenna array and the
//! learned-dictionary ("composite lens") model, plus power-leakage metrics.

use std::f64::consts::PI;

use crate::channel::{angle_from_direction, steering_vector, ArrayGeometry, ChannelRealization};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::estimation::represent_channel;
use crate::linalg::{ComplexMatrix, ComplexVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Dft,
    Learned,
}

/// Beamspace operator.
///
/// For [`TransformKind::Dft`], `matrix` is `U` (N x N) whose rows are the
/// conjugated steering vectors of the lens directions. For
/// [`TransformKind::Learned`], `matrix` is the dictionary `D` (N x atoms)
/// and beamspace coordinates are `code_sparsity`-sparse OMP codes over it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformOperator {
    pub matrix: ComplexMatrix,
    pub kind: TransformKind,
    pub code_sparsity: usize,
}

impl TransformOperator {
    pub fn learned(dictionary: &Dictionary, code_sparsity: usize) -> Result<Self> {
        if code_sparsity == 0 {
            return Err(Error::InvalidParameter("code sparsity must be >= 1".into()));
        }
        Ok(Self {
            matrix: dictionary.atoms.clone(),
            kind: TransformKind::Learned,
            code_sparsity,
        })
    }

    pub fn n_antennas(&self) -> usize {
        match self.kind {
            TransformKind::Dft => self.matrix.ncols(),
            TransformKind::Learned => self.matrix.nrows(),
        }
    }

    pub fn n_beams(&self) -> usize {
        match self.kind {
            TransformKind::Dft => self.matrix.nrows(),
            TransformKind::Learned => self.matrix.ncols(),
        }
    }

    /// Columns that synthesise a spatial channel from beamspace
    /// coordinates: `U^H` for the DFT, `D` for a learned dictionary.
    pub fn synthesis_atoms(&self) -> ComplexMatrix {
        match self.kind {
            TransformKind::Dft => self.matrix.adjoint(),
            TransformKind::Learned => self.matrix.clone(),
        }
    }
}

/// Lens directions `psi_n = (n - (N + 1) / 2) / N`, `n = 1..N`.
pub fn lens_directions(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| (i as f64 - (n as f64 + 1.0) / 2.0) / n as f64)
        .collect()
}

/// `U = [a(psi_1), ..., a(psi_N)]^H` built with the geometry's own
/// steering vectors.
pub fn build_dft_operator(geometry: &ArrayGeometry) -> Result<TransformOperator> {
    let n = geometry.n_antennas();
    let mut u = ComplexMatrix::zeros(n, n);
    for (row, psi) in lens_directions(n).into_iter().enumerate() {
        let a = steering_vector(geometry, angle_from_direction(psi));
        u.set_row(row, &a.adjoint());
    }
    Ok(TransformOperator { matrix: u, kind: TransformKind::Dft, code_sparsity: n })
}

/// Beamspace channel matrix (beams x users).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceChannel {
    pub h_tilde: ComplexMatrix,
    pub kind: TransformKind,
}

impl BeamspaceChannel {
    pub fn n_beams(&self) -> usize {
        self.h_tilde.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h_tilde.ncols()
    }
}

/// `U H` for the DFT operator; sparse codes of every user for a learned
/// operator.
pub fn to_beamspace(channel: &ChannelRealization, op: &TransformOperator) -> Result<BeamspaceChannel> {
    transform_matrix(&channel.h, op)
}

pub fn transform_matrix(h: &ComplexMatrix, op: &TransformOperator) -> Result<BeamspaceChannel> {
    if h.nrows() != op.n_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} antennas, operator expects {}",
            h.nrows(),
            op.n_antennas()
        )));
    }
    match op.kind {
        TransformKind::Dft => Ok(BeamspaceChannel { h_tilde: &op.matrix * h, kind: TransformKind::Dft }),
        TransformKind::Learned => represent_channel(h, op).map(|r| r.beamspace),
    }
}

/// Worst-case single-path power leakage of an `n`-element ULA under the
/// DFT lens model.
pub fn power_leakage_worst_ula(n: usize) -> Result<f64> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "worst-case leakage is defined for even n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let num = (PI / (2.0 * nf)).sin().powi(2);
    let sum: f64 = (1..=n / 2)
        .map(|i| num / (((2 * i - 1) as f64) * PI / (2.0 * nf)).sin().powi(2))
        .sum();
    Ok(1.0 - 1.0 / (2.0 * sum))
}

/// Fraction of energy outside the `s` largest-magnitude entries (ties go
/// to the lower index). A zero vector has zero leakage.
pub fn empirical_leakage(column: &ComplexVector, s: usize) -> Result<f64> {
    if s > column.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {s} of {} entries",
            column.len()
        )));
    }
    let total: f64 = column.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut power: Vec<(usize, f64)> = column.iter().map(|z| z.norm_sqr()).enumerate().collect();
    power.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let kept: f64 = power.iter().take(s).map(|(_, p)| p).sum();
    Ok((1.0 - kept / total).clamp(0.0, 1.0))
}
