//! K-SVD dictionary learning and dictionary persistence.
//!
//! `D_H` is trained over spatial channel realizations (channel
//! representation). Precoding / estimation dictionaries `D_U` are trained
//! over beamspace vectors: DFT-domain vectors `U h`, or the sparse codes of
//! the learned representation.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::beamspace::{build_dft_operator, TransformOperator};
use crate::channel::{ArrayGeometry, ChannelModel};
use crate::error::{Error, Result};
use crate::linalg::{svd, ComplexMatrix, ComplexVector, C64};
use crate::sparse::{inverse_column_norms, omp_with_norms, reconstruct, SparseCode};

const MAGIC: &[u8; 4] = b"BDL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionaryPurpose {
    ChannelRepresentation,
    Precoding,
}

impl DictionaryPurpose {
    fn tag(self) -> u8 {
        match self {
            Self::ChannelRepresentation => 0,
            Self::Precoding => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Self::ChannelRepresentation),
            1 => Ok(Self::Precoding),
            other => Err(Error::Format(format!("unknown purpose tag {other}"))),
        }
    }
}

/// Training provenance. Only the seed survives persistence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingMeta {
    pub n_signals: Option<usize>,
    pub sparsity: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: u64,
}

/// Learned sparsifying dictionary with unit-norm columns (atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub atoms: ComplexMatrix,
    pub purpose: DictionaryPurpose,
    pub meta: TrainingMeta,
}

impl Dictionary {
    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Reorders atoms by the index of their largest-magnitude entry (lowest
    /// index on ties), so that neighbouring atoms point in neighbouring
    /// beam directions when atoms live in the DFT beamspace.
    pub fn order_by_dominant_entry(&mut self) {
        let peaks: Vec<usize> = self
            .atoms
            .column_iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .fold((0, -1.0), |(bi, bv), (i, z)| {
                        if z.norm() > bv { (i, z.norm()) } else { (bi, bv) }
                    })
                    .0
            })
            .collect();
        let mut order: Vec<usize> = (0..self.n_atoms()).collect();
        order.sort_by_key(|&j| (peaks[j], j));
        let cols: Vec<ComplexVector> = order.iter().map(|&j| self.atoms.column(j).into_owned()).collect();
        self.atoms = ComplexMatrix::from_columns(&cols);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let rows = u32::try_from(self.signal_dim())
            .map_err(|_| Error::Format("signal dimension exceeds u32".into()))?;
        let cols = u32::try_from(self.n_atoms())
            .map_err(|_| Error::Format("atom count exceeds u32".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&rows.to_le_bytes())?;
        w.write_all(&cols.to_le_bytes())?;
        w.write_all(&[self.purpose.tag()])?;
        w.write_all(&self.meta.seed.to_le_bytes())?;
        // nalgebra storage is column-major
        for z in self.atoms.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::Format(format!("empty {rows}x{cols} dictionary")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let purpose = DictionaryPurpose::from_tag(tag[0])?;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let mut entries = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 16];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
            entries.push(C64::new(re, im));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after atoms".into()));
        }
        Ok(Self {
            atoms: ComplexMatrix::from_vec(rows, cols, entries),
            purpose,
            meta: TrainingMeta {
                n_signals: None,
                sparsity: None,
                iterations: None,
                seed: u64::from_le_bytes(seed),
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(17 + 16 * self.atoms.len());
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingDictionary { path: path.to_path_buf() });
        }
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingSource {
    ChannelRealizations,
    DftPrecodingMatrices,
    /// Sparse codes of channels over a channel-representation dictionary.
    RepresentationCodes,
}

/// Training signals stored as columns.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub signals: ComplexMatrix,
    pub source: TrainingSource,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.signals.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.ncols() == 0
    }

    pub fn signal_dim(&self) -> usize {
        self.signals.nrows()
    }
}

/// Per-user spatial channel vectors `h_k` drawn from `model`.
pub fn build_channel_training_set<R: Rng + ?Sized>(
    model: &ChannelModel,
    geometry: &ArrayGeometry,
    m: usize,
    rng: &mut R,
) -> Result<TrainingSet> {
    if m == 0 {
        return Err(Error::InvalidParameter("training set needs m >= 1".into()));
    }
    let n = geometry.n_antennas();
    let mut signals = ComplexMatrix::zeros(n, m);
    let mut filled = 0;
    while filled < m {
        let real = model.generate(geometry, rng)?;
        for col in real.h.column_iter() {
            if filled == m {
                break;
            }
            if col.norm_squared() > 0.0 {
                signals.set_column(filled, &col);
                filled += 1;
            }
        }
    }
    Ok(TrainingSet { signals, source: TrainingSource::ChannelRealizations })
}

/// DFT-domain beamspace vectors `U h` of freshly drawn channels.
pub fn build_precoding_training_set<R: Rng + ?Sized>(
    model: &ChannelModel,
    geometry: &ArrayGeometry,
    m: usize,
    rng: &mut R,
) -> Result<TrainingSet> {
    let dft = build_dft_operator(geometry)?;
    let channels = build_channel_training_set(model, geometry, m, rng)?;
    Ok(precoding_set_from_channels(&dft, &channels.signals))
}

/// Maps spatial channel columns into the DFT beamspace.
pub fn precoding_set_from_channels(dft: &TransformOperator, channels: &ComplexMatrix) -> TrainingSet {
    TrainingSet {
        signals: &dft.matrix * channels,
        source: TrainingSource::DftPrecodingMatrices,
    }
}

/// Beamspace vectors of the learned representation: the `s_c`-sparse codes
/// of `channels` over `op`.
pub fn code_set_from_channels(op: &TransformOperator, channels: &ComplexMatrix) -> Result<TrainingSet> {
    let rep = crate::estimation::represent_channel(channels, op)?;
    Ok(TrainingSet { signals: rep.beamspace.h_tilde, source: TrainingSource::RepresentationCodes })
}

/// Dictionary plus `||X - D W||_F` after each full iteration.
#[derive(Debug, Clone)]
pub struct KsvdOutcome {
    pub dictionary: Dictionary,
    pub error_history: Vec<f64>,
    pub replaced_atoms: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct KsvdConfig {
    pub n_atoms: usize,
    pub sparsity: usize,
    pub iterations: usize,
    pub seed: u64,
}

pub fn ksvd_train<R: Rng + ?Sized>(
    x: &TrainingSet,
    n_atoms: usize,
    s: usize,
    num_iters: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Dictionary> {
    let cfg = KsvdConfig { n_atoms, sparsity: s, iterations: num_iters, seed };
    ksvd_train_traced(x, &cfg, rng).map(|o| o.dictionary)
}

/// Atoms this coherent with an earlier atom count as duplicates.
const DUPLICATE_COHERENCE: f64 = 0.99;

/// Mutable K-SVD state: dictionary, per-signal codes and `X - D W`.
#[derive(Clone)]
struct KsvdState {
    d: ComplexMatrix,
    codes: Vec<SparseCode>,
    residual: ComplexMatrix,
    replaced: usize,
}

/// K-SVD: alternate OMP sparse coding of every training column with
/// rank-1 SVD updates of each atom over the signals that use it.
///
/// A signal keeps its previous code when the fresh OMP code fits worse, so
/// the representation error never increases between iterations. Unused
/// atoms are replaced by the residual of the worst-represented training signal. From the
/// second iteration on, atoms that duplicate another atom or serve a single
/// signal are also swapped for badly represented signals; the swap is kept
/// only when the iteration then ends with a lower error.
pub fn ksvd_train_traced<R: Rng + ?Sized>(
    x: &TrainingSet,
    cfg: &KsvdConfig,
    rng: &mut R,
) -> Result<KsvdOutcome> {
    let (n, m) = x.signals.shape();
    if cfg.sparsity == 0 {
        return Err(Error::InvalidParameter("K-SVD sparsity must be >= 1".into()));
    }
    if cfg.n_atoms == 0 || cfg.n_atoms > m {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_atoms <= {m} training signals, got {}",
            cfg.n_atoms
        )));
    }
    let nonzero: Vec<usize> = (0..m).filter(|&j| x.signals.column(j).norm_squared() > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateTrainingSet("all training signals are zero".into()));
    }
    if nonzero.len() < cfg.n_atoms {
        return Err(Error::DegenerateTrainingSet(format!(
            "{} non-zero signals for {} atoms",
            nonzero.len(),
            cfg.n_atoms
        )));
    }

    let mut picks = sample(rng, nonzero.len(), cfg.n_atoms).into_vec();
    picks.sort_unstable();
    let mut d = ComplexMatrix::zeros(n, cfg.n_atoms);
    for (i, &p) in picks.iter().enumerate() {
        let col = x.signals.column(nonzero[p]);
        d.set_column(i, &(col / C64::new(col.norm(), 0.0)));
    }

    let mut state = KsvdState {
        d,
        codes: vec![SparseCode::empty(cfg.n_atoms); m],
        residual: x.signals.clone(),
        replaced: 0,
    };
    let mut error_history: Vec<f64> = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        let previous = error_history.last().copied();
        let mut candidate = None;
        if let Some(prev) = previous {
            let mut trial = state.clone();
            if clear_dictionary(&mut trial, &x.signals) > 0 {
                ksvd_iteration(&mut trial, &x.signals, cfg)?;
                if trial.residual.norm() < prev {
                    candidate = Some(trial);
                }
            }
        }
        state = match candidate {
            Some(trial) => trial,
            None => {
                ksvd_iteration(&mut state, &x.signals, cfg)?;
                state
            }
        };
        error_history.push(state.residual.norm());
    }

    Ok(KsvdOutcome {
        dictionary: Dictionary {
            atoms: state.d,
            purpose: purpose_for(x.source),
            meta: TrainingMeta {
                n_signals: Some(m),
                sparsity: Some(cfg.sparsity),
                iterations: Some(cfg.iterations),
                seed: cfg.seed,
            },
        },
        error_history,
        replaced_atoms: state.replaced,
    })
}

/// One sparse-coding pass followed by one sweep of atom updates.
fn ksvd_iteration(st: &mut KsvdState, x: &ComplexMatrix, cfg: &KsvdConfig) -> Result<()> {
    let (n, m) = x.shape();
    let inv_norms = inverse_column_norms(&st.d);
    let d = &st.d;
    let fresh: Vec<Result<SparseCode>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let y = x.column(j).into_owned();
            omp_with_norms(&y, d, &inv_norms, cfg.sparsity, 0.0).map(|t| t.code)
        })
        .collect();
    for (j, code) in fresh.into_iter().enumerate() {
        let code = code?;
        let new_res = x.column(j) - reconstruct(&st.d, &code)?;
        let old_energy = st.residual.column(j).norm_squared();
        if new_res.norm_squared() <= old_energy || st.codes[j].is_empty() {
            st.residual.set_column(j, &new_res);
            st.codes[j] = code;
        }
    }

    // users of each atom: (signal, slot in its code)
    let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cfg.n_atoms];
    for (j, code) in st.codes.iter().enumerate() {
        for (slot, &atom) in code.support().iter().enumerate() {
            users[atom].push((j, slot));
        }
    }

    let mut taken = vec![false; m];
    for atom in 0..cfg.n_atoms {
        let active = &users[atom];
        if active.is_empty() {
            if let Some(j) = worst_signal(&st.residual, x, &taken) {
                taken[j] = true;
                st.d.set_column(atom, &replacement_atom(&st.residual, x, j));
                st.replaced += 1;
            }
            continue;
        }

        let old_atom = st.d.column(atom).into_owned();
        let mut e = ComplexMatrix::zeros(n, active.len());
        for (c, &(j, slot)) in active.iter().enumerate() {
            let w = st.codes[j].values()[slot];
            e.set_column(c, &(st.residual.column(j) + &old_atom * w));
        }
        let dec = svd(&e)?;
        let (u1, s1, v1) = dec.leading();
        st.d.set_column(atom, &u1);
        for (c, &(j, slot)) in active.iter().enumerate() {
            let w = v1[c].conj() * s1;
            set_code_value(&mut st.codes[j], slot, w);
            let updated = e.column(c) - &u1 * w;
            st.residual.set_column(j, &updated);
        }
    }
    Ok(())
}

/// Normalized residual of signal `j`, or the signal itself when it is
/// already represented exactly.
fn replacement_atom(residual: &ComplexMatrix, x: &ComplexMatrix, j: usize) -> ComplexVector {
    let r = residual.column(j);
    let col = if r.norm() > 1e-12 * x.column(j).norm() { r } else { x.column(j) };
    col / C64::new(col.norm(), 0.0)
}

/// Nonzero signal with the largest residual among those not yet taken.
fn worst_signal(residual: &ComplexMatrix, x: &ComplexMatrix, taken: &[bool]) -> Option<usize> {
    (0..x.ncols())
        .filter(|&j| !taken[j] && x.column(j).norm_squared() > 0.0)
        .max_by(|&a, &b| {
            residual
                .column(a)
                .norm_squared()
                .total_cmp(&residual.column(b).norm_squared())
                .then(b.cmp(&a))
        })
}

/// Replaces duplicate or single-use atoms with the worst-represented
/// signals, dropping the replaced atoms from every code. Returns the number
/// of replaced atoms.
fn clear_dictionary(st: &mut KsvdState, x: &ComplexMatrix) -> usize {
    let k = st.d.ncols();
    let mut usage = vec![0usize; k];
    for code in &st.codes {
        for &a in code.support() {
            usage[a] += 1;
        }
    }
    let gram = st.d.adjoint() * &st.d;
    let stale: Vec<usize> = (0..k)
        .filter(|&i| usage[i] <= 1 || (0..i).any(|j| gram[(i, j)].norm() > DUPLICATE_COHERENCE))
        .collect();
    if stale.is_empty() {
        return 0;
    }
    for j in 0..st.codes.len() {
        let code = &st.codes[j];
        if !code.support().iter().any(|a| stale.contains(a)) {
            continue;
        }
        let mut support = Vec::new();
        let mut values = Vec::new();
        let mut col = st.residual.column(j).into_owned();
        for (a, w) in code.iter() {
            if stale.contains(&a) {
                col += st.d.column(a) * w;
            } else {
                support.push(a);
                values.push(w);
            }
        }
        st.codes[j] = SparseCode::new(support, values, k).expect("subset of a valid code");
        st.residual.set_column(j, &col);
    }
    let mut taken = vec![false; x.ncols()];
    let mut replaced = 0;
    for &atom in &stale {
        if let Some(j) = worst_signal(&st.residual, x, &taken) {
            taken[j] = true;
            st.d.set_column(atom, &replacement_atom(&st.residual, x, j));
            replaced += 1;
        }
    }
    st.replaced += replaced;
    replaced
}

fn set_code_value(code: &mut SparseCode, slot: usize, value: C64) {
    let support = code.support().to_vec();
    let mut values = code.values().to_vec();
    values[slot] = value;
    *code = SparseCode::new(support, values, code.ambient_dim()).expect("support unchanged");
}

fn purpose_for(source: TrainingSource) -> DictionaryPurpose {
    match source {
        TrainingSource::ChannelRealizations => DictionaryPurpose::ChannelRepresentation,
        TrainingSource::DftPrecodingMatrices | TrainingSource::RepresentationCodes => DictionaryPurpose::Precoding,
    }
}

/// Mean relative `s`-sparse OMP residual of the holdout signals over the
/// learned dictionary and over the DFT synthesis basis `F^H`.
pub fn sparse_representation_gain(
    d: &Dictionary,
    f: &TransformOperator,
    holdout: &TrainingSet,
    s: usize,
) -> Result<(f64, f64)> {
    let learned = relative_residuals(&d.atoms, &holdout.signals, s)?;
    let fixed = relative_residuals(&f.synthesis_atoms(), &holdout.signals, s)?;
    Ok((mean(&learned), mean(&fixed)))
}

/// `||x - D w|| / ||x||` for the `s`-sparse OMP code of every column of
/// `signals`; zero signals contribute 0.
pub fn relative_residuals(atoms: &ComplexMatrix, signals: &ComplexMatrix, s: usize) -> Result<Vec<f64>> {
    if atoms.nrows() != signals.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} rows, signals have {}",
            atoms.nrows(),
            signals.nrows()
        )));
    }
    let inv_norms = inverse_column_norms(atoms);
    (0..signals.ncols())
        .into_par_iter()
        .map(|j| {
            let y = signals.column(j).into_owned();
            let y_norm = y.norm();
            if y_norm == 0.0 {
                return Ok(0.0);
            }
            let trace = omp_with_norms(&y, atoms, &inv_norms, s, 0.0)?;
            Ok(trace.residual_norms.last().copied().unwrap_or(y_norm) / y_norm)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
}
