//! Uplink pilot transmission, compressed measurements and beamspace channel
//! estimators (OMP over a sparsifying basis, and support detection).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::beamspace::{BeamspaceChannel, TransformKind, TransformOperator};
use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, least_squares, ComplexMatrix, ComplexVector, C64};
use crate::random::complex_gaussian;
use crate::sparse::{inverse_column_norms, omp_with_norms, SparseCode};

/// Orthogonal pilots: `Q = M K` instants split into `M` blocks of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    pub n_users: usize,
    pub n_blocks: usize,
    /// `K x K`, `Psi Psi^H = K I`.
    pub pilot_matrix: ComplexMatrix,
}

impl PilotConfig {
    pub fn total_instants(&self) -> usize {
        self.n_users * self.n_blocks
    }
}

/// K-point DFT pilots reused in every block.
pub fn gen_pilot_config(k: usize, m: usize) -> Result<PilotConfig> {
    if k == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!("pilots need K >= 1 and M >= 1, got K={k} M={m}")));
    }
    Ok(PilotConfig { n_users: k, n_blocks: m, pilot_matrix: dft_matrix(k) })
}

/// Pilot layout for a total budget of `q` instants.
pub fn pilot_config_for_budget(k: usize, q: usize) -> Result<PilotConfig> {
    if k == 0 || q % k != 0 {
        return Err(Error::InvalidParameter(format!(
            "pilot budget Q={q} must be a positive multiple of K={k}"
        )));
    }
    gen_pilot_config(k, q / k)
}

/// Real-valued `Q x N` sensing matrix with equiprobable `+-1/sqrt(Q)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub w: ComplexMatrix,
}

impl SensingMatrix {
    pub fn bernoulli<R: Rng + ?Sized>(q: usize, n: usize, rng: &mut R) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::InvalidParameter("sensing matrix needs Q >= 1 and N >= 1".into()));
        }
        let amp = 1.0 / (q as f64).sqrt();
        let w = ComplexMatrix::from_fn(q, n, |_, _| {
            C64::new(if rng.gen::<bool>() { amp } else { -amp }, 0.0)
        });
        Ok(Self { w })
    }

    pub fn identity(n: usize) -> Self {
        Self { w: ComplexMatrix::identity(n, n) }
    }

    pub fn n_measurements(&self) -> usize {
        self.w.nrows()
    }
}

/// Per-user compressed measurements (columns of a `Q x K` matrix).
///
/// In block `m` the combiner uses rows `mK..(m+1)K` of `W` while the users
/// send `Psi`; the received `K x K` block `W_m H Psi + N_m` is decorrelated
/// by `Psi^H / K`, so each measurement carries noise of variance
/// `noise_var / K`.
pub fn simulate_pilot_rx<R: Rng + ?Sized>(
    h_tilde: &ComplexMatrix,
    cfg: &PilotConfig,
    w: &SensingMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    let k = cfg.n_users;
    let q = cfg.total_instants();
    if h_tilde.ncols() != k {
        return Err(Error::DimensionMismatch(format!("{} channel columns for {k} users", h_tilde.ncols())));
    }
    if w.w.nrows() != q || w.w.ncols() != h_tilde.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sensing matrix is {}x{}, expected {q}x{}",
            w.w.nrows(),
            w.w.ncols(),
            h_tilde.nrows()
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
    }
    let psi_h = cfg.pilot_matrix.adjoint() / C64::new(k as f64, 0.0);
    let mut out = ComplexMatrix::zeros(q, k);
    for m in 0..cfg.n_blocks {
        let w_m = w.w.rows(m * k, k);
        let mut block = w_m * h_tilde * &cfg.pilot_matrix;
        if noise_var > 0.0 {
            for z in block.iter_mut() {
                *z += complex_gaussian(rng, noise_var);
            }
        }
        out.rows_mut(m * k, k).copy_from(&(block * &psi_h));
    }
    Ok(out)
}

/// Noise variance that puts the average per-antenna SNR at `snr_db`:
/// `SNR = E||h||^2 / (N sigma^2)`.
pub fn noise_variance_for_snr(mean_channel_energy: f64, n_antennas: usize, snr_db: f64) -> f64 {
    mean_channel_energy / (n_antennas as f64 * 10f64.powf(snr_db / 10.0))
}

/// Sensing operator `A = W D` over a sparsifying basis, with column norms
/// cached for repeated OMP calls.
#[derive(Debug, Clone)]
pub struct EffectiveSensing {
    pub a: ComplexMatrix,
    inv_norms: Vec<f64>,
}

impl EffectiveSensing {
    /// Identity basis: the beamspace vector itself is the sparse unknown.
    pub fn beams(w: &SensingMatrix) -> Self {
        Self::from_matrix(w.w.clone())
    }

    pub fn atoms(w: &SensingMatrix, atoms: &ComplexMatrix) -> Result<Self> {
        if w.w.ncols() != atoms.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "sensing matrix has {} columns, dictionary has {} rows",
                w.w.ncols(),
                atoms.nrows()
            )));
        }
        Ok(Self::from_matrix(&w.w * atoms))
    }

    fn from_matrix(a: ComplexMatrix) -> Self {
        let inv_norms = inverse_column_norms(&a);
        Self { a, inv_norms }
    }

    pub fn sparse_code(&self, y: &ComplexVector, s: usize) -> Result<SparseCode> {
        omp_with_norms(y, &self.a, &self.inv_norms, s, 0.0).map(|t| t.code)
    }
}

/// Sparsifying basis used by the estimator.
#[derive(Debug, Clone, Copy)]
pub enum EstimationBasis<'a> {
    /// Identity over the beamspace indices.
    Beams,
    /// Columns of a learned dictionary living in the beamspace.
    Atoms(&'a ComplexMatrix),
}

/// OMP estimate of the beamspace vector `h = D w` from `y = W h + n`.
pub fn estimate_omp(
    y: &ComplexVector,
    w: &SensingMatrix,
    basis: EstimationBasis<'_>,
    s: usize,
) -> Result<ComplexVector> {
    match basis {
        EstimationBasis::Beams => EffectiveSensing::beams(w).sparse_code(y, s).map(|c| c.to_dense()),
        EstimationBasis::Atoms(d) => {
            let code = EffectiveSensing::atoms(w, d)?.sparse_code(y, s)?;
            crate::sparse::reconstruct(d, &code)
        }
    }
}

/// Support detection: recovers one path component at a time.
///
/// Each of the `n_components` rounds locates the column of `sensing` most
/// correlated with the residual, fits the cyclic window of `v` indices
/// centred on it by least squares and removes that fit from the residual.
/// The union of windows is then refit jointly against `y`. Returns the
/// coefficient vector over the columns of `sensing`.
pub fn estimate_sd(
    y: &ComplexVector,
    sensing: &ComplexMatrix,
    n_components: usize,
    v: usize,
) -> Result<ComplexVector> {
    let (q, n) = sensing.shape();
    if y.len() != q {
        return Err(Error::DimensionMismatch(format!("{} measurements for {q} rows", y.len())));
    }
    if n_components == 0 || v == 0 || v * n_components > n {
        return Err(Error::InvalidParameter(format!(
            "support detection needs 1 <= V (L+1) <= {n}, got V={v} L+1={n_components}"
        )));
    }
    let inv_norms = inverse_column_norms(sensing);
    let mut residual = y.clone();
    let mut support: Vec<usize> = Vec::with_capacity(v * n_components);
    for _ in 0..n_components {
        let corr = sensing.ad_mul(&residual);
        let mut best = 0;
        let mut best_score = -1.0;
        for (j, c) in corr.iter().enumerate() {
            let score = c.norm() * inv_norms[j];
            if score > best_score {
                best = j;
                best_score = score;
            }
        }
        if best_score <= 0.0 {
            break;
        }
        let window = cyclic_window(best, v, n);
        let sub = select_columns(sensing, &window);
        let coeffs = least_squares(&sub, &residual)?;
        residual -= &sub * coeffs;
        for idx in window {
            if !support.contains(&idx) {
                support.push(idx);
            }
        }
    }
    let mut estimate = ComplexVector::zeros(n);
    if support.is_empty() {
        return Ok(estimate);
    }
    support.sort_unstable();
    let coeffs = least_squares(&select_columns(sensing, &support), y)?;
    for (&idx, c) in support.iter().zip(coeffs.iter()) {
        estimate[idx] = *c;
    }
    Ok(estimate)
}

/// `v` consecutive indices centred on `center`, wrapping modulo `n`.
pub fn cyclic_window(center: usize, v: usize, n: usize) -> Vec<usize> {
    let half = (v - 1) / 2;
    (0..v).map(|i| (center + n - half % n + i) % n).collect()
}

fn select_columns(m: &ComplexMatrix, idx: &[usize]) -> ComplexMatrix {
    let cols: Vec<ComplexVector> = idx.iter().map(|&j| m.column(j).into_owned()).collect();
    ComplexMatrix::from_columns(&cols)
}

/// Learned-dictionary representation of a multiuser channel.
#[derive(Debug, Clone)]
pub struct Representation {
    pub codes: Vec<SparseCode>,
    /// Codes as dense columns (atoms x users).
    pub beamspace: BeamspaceChannel,
    /// `D W_e`: the channel as synthesised by the composite lens.
    pub synthesized: ComplexMatrix,
}

/// Sparse-codes every user's channel over the learned dictionary `D_H`.
pub fn represent_channel(h: &ComplexMatrix, op: &TransformOperator) -> Result<Representation> {
    if op.kind != TransformKind::Learned {
        return Err(Error::InvalidParameter("channel representation needs a learned operator".into()));
    }
    let d = &op.matrix;
    if h.nrows() != d.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} antennas, dictionary signal dimension is {}",
            h.nrows(),
            d.nrows()
        )));
    }
    let inv_norms = inverse_column_norms(d);
    let mut codes = Vec::with_capacity(h.ncols());
    let mut beams = ComplexMatrix::zeros(d.ncols(), h.ncols());
    let mut synthesized = ComplexMatrix::zeros(h.nrows(), h.ncols());
    for (k, col) in h.column_iter().enumerate() {
        let code = omp_with_norms(&col.into_owned(), d, &inv_norms, op.code_sparsity, 0.0)?.code;
        beams.set_column(k, &code.to_dense());
        synthesized.set_column(k, &crate::sparse::reconstruct(d, &code)?);
        codes.push(code);
    }
    Ok(Representation {
        codes,
        beamspace: BeamspaceChannel { h_tilde: beams, kind: TransformKind::Learned },
        synthesized,
    })
}

/// `||H_hat - H_ref||_F^2 / ||H_ref||_F^2`.
pub fn nmse(h_hat: &ComplexMatrix, h_ref: &ComplexMatrix) -> Result<f64> {
    if h_hat.shape() != h_ref.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {:?}, reference is {:?}",
            h_hat.shape(),
            h_ref.shape()
        )));
    }
    let denom = h_ref.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((h_hat - h_ref).norm_squared() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Omp,
    Sd,
}

/// The six estimation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// OMP, DFT representation and DFT estimation basis.
    OmpDft,
    /// Support detection, DFT representation and basis.
    SdDft,
    /// OMP, DFT representation, learned estimation dictionary.
    Scenario1,
    /// Support detection, DFT representation, learned estimation dictionary.
    SdDl,
    /// OMP, learned representation, DFT estimation basis.
    Scenario2,
    /// OMP, learned representation and learned estimation dictionary.
    Scenario3,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::OmpDft,
        Scenario::SdDft,
        Scenario::Scenario1,
        Scenario::SdDl,
        Scenario::Scenario2,
        Scenario::Scenario3,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::OmpDft => "OMP-DFT",
            Self::SdDft => "SD-DFT",
            Self::Scenario1 => "Scenario1",
            Self::SdDl => "SD-DL",
            Self::Scenario2 => "Scenario2",
            Self::Scenario3 => "Scenario3",
        }
    }

    pub fn estimator(self) -> Estimator {
        match self {
            Self::SdDft | Self::SdDl => Estimator::Sd,
            _ => Estimator::Omp,
        }
    }

    pub fn representation(self) -> TransformKind {
        match self {
            Self::Scenario2 | Self::Scenario3 => TransformKind::Learned,
            _ => TransformKind::Dft,
        }
    }

    pub fn estimation_basis(self) -> TransformKind {
        match self {
            Self::Scenario1 | Self::SdDl | Self::Scenario3 => TransformKind::Learned,
            _ => TransformKind::Dft,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario label {s:?}")))
    }
}
