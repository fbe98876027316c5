//! Zero-forcing precoding, interference-aware beam selection and sum-rate
//! evaluation over a beamspace channel.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

/// Diagonal loading applied to a singular Gram matrix.
pub const ZF_LOADING: f64 = 1e-9;

/// Candidate beams searched per interference user.
pub const IA_CANDIDATES: usize = 4;

/// Above this many candidate combinations the search turns coordinate-wise.
const IA_EXHAUSTIVE_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamSelection {
    /// Distinct beam indices feeding the RF chains.
    pub selected_beams: Vec<usize>,
    /// Beam assigned to each user.
    pub assignment: Vec<usize>,
}

impl BeamSelection {
    /// Binary `beams x n_rf` selecting matrix with one 1 per column.
    pub fn selecting_matrix(&self, n_beams: usize) -> ComplexMatrix {
        let mut b = ComplexMatrix::zeros(n_beams, self.selected_beams.len());
        for (col, &beam) in self.selected_beams.iter().enumerate() {
            b[(beam, col)] = C64::new(1.0, 0.0);
        }
        b
    }

    fn validate(&self, n_beams: usize) -> Result<()> {
        let mut seen = vec![false; n_beams];
        for &b in &self.selected_beams {
            if b >= n_beams || seen[b] {
                return Err(Error::InvalidParameter(format!("invalid or repeated beam index {b}")));
            }
            seen[b] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub p: ComplexMatrix,
    pub power_budget: f64,
    /// Set when the Gram matrix needed diagonal loading.
    pub regularized: bool,
}

/// `P = gamma H (H^H H)^-1` with `gamma` chosen so `tr(P P^H) = rho`.
/// The effective downlink channel is `H^H P = gamma I`.
pub fn zf_precoder(h_eff: &ComplexMatrix, rho: f64) -> Result<Precoder> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("power budget must be > 0, got {rho}")));
    }
    let k = h_eff.ncols();
    if k == 0 || h_eff.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty channel".into()));
    }
    let gram = h_eff.adjoint() * h_eff;
    let (inv, regularized) = match invert_if_well_posed(&gram, h_eff.nrows()) {
        Some(inv) => (inv, false),
        None => {
            let loaded = &gram + ComplexMatrix::identity(k, k) * C64::new(ZF_LOADING, 0.0);
            let inv = loaded
                .try_inverse()
                .ok_or_else(|| Error::DegenerateChannel("loaded Gram matrix is singular".into()))?;
            (inv, true)
        }
    };
    let mut p = h_eff * inv;
    let power = p.norm_squared();
    if power > 0.0 {
        p *= C64::new((rho / power).sqrt(), 0.0);
    }
    Ok(Precoder { p, power_budget: rho, regularized })
}

fn invert_if_well_posed(gram: &ComplexMatrix, n_rows: usize) -> Option<ComplexMatrix> {
    if gram.ncols() > n_rows {
        return None;
    }
    let scale = gram.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
    if scale <= 0.0 {
        return None;
    }
    let chol = gram.clone().cholesky()?;
    let l_diag_min = chol.l_dirty().diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    // reject numerically rank-deficient channels
    if l_diag_min * l_diag_min <= 1e-12 * scale {
        return None;
    }
    Some(chol.inverse())
}

/// SINR sum rate of precoder `p` on channel `h` (both over the same rows).
pub fn sinr_sum_rate(h: &ComplexMatrix, p: &ComplexMatrix, noise_var: f64) -> f64 {
    let g = h.adjoint() * p;
    (0..g.nrows())
        .map(|k| {
            let desired = g[(k, k)].norm_sqr();
            let interference: f64 = (0..g.ncols()).filter(|&j| j != k).map(|j| g[(k, j)].norm_sqr()).sum();
            let denom = interference + noise_var;
            if denom <= 0.0 {
                if desired > 0.0 { f64::INFINITY } else { 0.0 }
            } else {
                (1.0 + desired / denom).log2()
            }
        })
        .sum()
}

fn rows(h: &ComplexMatrix, idx: &[usize]) -> ComplexMatrix {
    ComplexMatrix::from_fn(idx.len(), h.ncols(), |r, c| h[(idx[r], c)])
}

/// ZF sum rate on the selected rows of the beamspace channel.
pub fn sum_rate(h_tilde: &ComplexMatrix, sel: &BeamSelection, noise_var: f64, rho: f64) -> Result<f64> {
    mismatched_sum_rate(h_tilde, h_tilde, sel, noise_var, rho)
}

/// Rate achieved on `h_true` when selection and precoder come from
/// `h_design`.
pub fn mismatched_sum_rate(
    h_true: &ComplexMatrix,
    h_design: &ComplexMatrix,
    sel: &BeamSelection,
    noise_var: f64,
    rho: f64,
) -> Result<f64> {
    if h_true.shape() != h_design.shape() {
        return Err(Error::DimensionMismatch(format!(
            "true channel is {:?}, design channel is {:?}",
            h_true.shape(),
            h_design.shape()
        )));
    }
    sel.validate(h_true.nrows())?;
    if h_true.norm_squared() == 0.0 {
        return Ok(0.0);
    }
    let design = rows(h_design, &sel.selected_beams);
    if design.norm_squared() == 0.0 {
        return Ok(0.0);
    }
    let precoder = zf_precoder(&design, rho)?;
    Ok(sinr_sum_rate(&rows(h_true, &sel.selected_beams), &precoder.p, noise_var))
}

/// Fully digital ZF over every beam.
pub fn full_digital_selection(n_beams: usize, n_users: usize) -> BeamSelection {
    BeamSelection { selected_beams: (0..n_beams).collect(), assignment: vec![0; n_users] }
}

pub fn full_digital_rate(h_tilde: &ComplexMatrix, noise_var: f64, rho: f64) -> Result<f64> {
    sum_rate(h_tilde, &full_digital_selection(h_tilde.nrows(), h_tilde.ncols()), noise_var, rho)
}

/// Interference-aware beam selection.
///
/// Every user first claims its strongest beam. Users that do not share
/// their beam keep it; users that collide choose among their
/// [`IA_CANDIDATES`] strongest free beams so the ZF sum rate of the reduced
/// channel is maximal (exhaustively when the search is small, otherwise by
/// coordinate ascent). Remaining RF chains take the strongest unused beams.
pub fn ia_beam_select(h_tilde: &ComplexMatrix, n_rf: usize, noise_var: f64, rho: f64) -> Result<BeamSelection> {
    let (n_beams, k) = h_tilde.shape();
    if n_rf < k {
        return Err(Error::InvalidParameter(format!("need n_rf >= K, got {n_rf} < {k}")));
    }
    if n_rf > n_beams {
        return Err(Error::InvalidParameter(format!("n_rf = {n_rf} exceeds {n_beams} beams")));
    }
    let nonzero_beams = (0..n_beams).filter(|&b| h_tilde.row(b).norm_squared() > 0.0).count();
    if nonzero_beams < k {
        return Err(Error::DegenerateChannel(format!(
            "{nonzero_beams} nonzero beams cannot serve {k} users"
        )));
    }

    let ranked: Vec<Vec<usize>> = (0..k).map(|u| beams_by_strength(h_tilde, u)).collect();
    let strongest: Vec<usize> = ranked.iter().map(|r| r[0]).collect();
    let interference: Vec<usize> = (0..k)
        .filter(|&u| (0..k).any(|o| o != u && strongest[o] == strongest[u]))
        .collect();

    let mut assignment = strongest.clone();
    if !interference.is_empty() {
        let mut taken = vec![false; n_beams];
        for u in (0..k).filter(|u| !interference.contains(u)) {
            taken[assignment[u]] = true;
        }
        let candidates: Vec<Vec<usize>> = interference
            .iter()
            .map(|&u| {
                let mut c: Vec<usize> = ranked[u].iter().copied().filter(|&b| !taken[b]).take(IA_CANDIDATES).collect();
                if c.is_empty() {
                    c.push(ranked[u][0]);
                }
                c
            })
            .collect();
        let evaluate = |assign: &[usize]| -> f64 {
            if !distinct(assign) {
                return f64::NEG_INFINITY;
            }
            let sel = BeamSelection { selected_beams: assign.to_vec(), assignment: assign.to_vec() };
            sum_rate(h_tilde, &sel, noise_var, rho).unwrap_or(f64::NEG_INFINITY)
        };
        let combos: usize = candidates.iter().map(|c| c.len()).try_fold(1usize, |a, b| a.checked_mul(b)).unwrap_or(usize::MAX);
        if combos <= IA_EXHAUSTIVE_LIMIT {
            exhaustive_search(&mut assignment, &interference, &candidates, &evaluate);
        } else {
            coordinate_search(&mut assignment, &interference, &candidates, &evaluate);
        }
        if !distinct(&assignment) {
            repair_duplicates(&mut assignment, &ranked);
        }
    }

    let mut selected = assignment.clone();
    selected.sort_unstable();
    selected.dedup();
    if selected.len() < n_rf {
        let mut rest: Vec<(usize, f64)> = (0..n_beams)
            .filter(|b| !selected.contains(b))
            .map(|b| (b, h_tilde.row(b).norm_squared()))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        selected.extend(rest.into_iter().take(n_rf - selected.len()).map(|(b, _)| b));
        selected.sort_unstable();
    }
    Ok(BeamSelection { selected_beams: selected, assignment })
}

fn beams_by_strength(h: &ComplexMatrix, user: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..h.nrows()).collect();
    idx.sort_by(|&a, &b| h[(b, user)].norm_sqr().total_cmp(&h[(a, user)].norm_sqr()).then(a.cmp(&b)));
    idx
}

fn distinct(assign: &[usize]) -> bool {
    assign.iter().enumerate().all(|(i, b)| !assign[..i].contains(b))
}

fn exhaustive_search(
    assignment: &mut [usize],
    users: &[usize],
    candidates: &[Vec<usize>],
    evaluate: &dyn Fn(&[usize]) -> f64,
) {
    let mut best_rate = f64::NEG_INFINITY;
    let mut best = assignment.to_vec();
    let mut counter = vec![0usize; users.len()];
    let mut trial = assignment.to_vec();
    loop {
        for (slot, &u) in users.iter().enumerate() {
            trial[u] = candidates[slot][counter[slot]];
        }
        let rate = evaluate(&trial);
        if rate > best_rate {
            best_rate = rate;
            best.copy_from_slice(&trial);
        }
        let mut slot = 0;
        loop {
            if slot == users.len() {
                assignment.copy_from_slice(&best);
                return;
            }
            counter[slot] += 1;
            if counter[slot] < candidates[slot].len() {
                break;
            }
            counter[slot] = 0;
            slot += 1;
        }
    }
}

fn coordinate_search(
    assignment: &mut [usize],
    users: &[usize],
    candidates: &[Vec<usize>],
    evaluate: &dyn Fn(&[usize]) -> f64,
) {
    // start from a collision-free greedy pick
    for (slot, &u) in users.iter().enumerate() {
        let used: Vec<usize> = users[..slot].iter().map(|&o| assignment[o]).collect();
        if let Some(&b) = candidates[slot].iter().find(|b| !used.contains(b)) {
            assignment[u] = b;
        }
    }
    let mut best_rate = evaluate(assignment);
    for _ in 0..3 {
        let mut improved = false;
        for (slot, &u) in users.iter().enumerate() {
            let mut best_beam = assignment[u];
            for &b in &candidates[slot] {
                assignment[u] = b;
                let rate = evaluate(assignment);
                if rate > best_rate {
                    best_rate = rate;
                    best_beam = b;
                    improved = true;
                }
            }
            assignment[u] = best_beam;
        }
        if !improved {
            break;
        }
    }
}

fn repair_duplicates(assignment: &mut [usize], ranked: &[Vec<usize>]) {
    for u in 0..assignment.len() {
        if assignment[..u].contains(&assignment[u]) {
            let used: Vec<usize> = assignment.to_vec();
            if let Some(&b) = ranked[u].iter().find(|b| !used.contains(b)) {
                assignment[u] = b;
            }
        }
    }
}
