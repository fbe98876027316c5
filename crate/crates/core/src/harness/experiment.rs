//! Dictionary training and the Monte-Carlo experiment runner.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::beamspace::{build_dft_operator, TransformKind, TransformOperator};
use crate::channel::{
    gen_nula_geometry, ArrayGeometry, ChannelModel, ChannelModelKind, GscmParams, SvParams,
};
use crate::dictionary::{
    build_channel_training_set, code_set_from_channels, ksvd_train_traced, precoding_set_from_channels,
    relative_residuals, Dictionary, KsvdConfig,
};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_sd, nmse, noise_variance_for_snr, pilot_config_for_budget, represent_channel,
    simulate_pilot_rx, EffectiveSensing, Estimator, Scenario, SensingMatrix,
};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::precoding::{full_digital_rate, ia_beam_select, mismatched_sum_rate, sum_rate};
use crate::random::{seeded, trial_seed};

use super::config::{ExperimentConfig, GeometryKind, Metric};
use super::table::{format_sig, ResultTable};

pub const D_H_FILE: &str = "d_h.bdl";
pub const D_U_FILE: &str = "d_u.bdl";
pub const D_U_CODE_FILE: &str = "d_u_code.bdl";
pub const RESIDUALS_FILE: &str = "training_residuals.csv";

pub const FD_ZF_LABEL: &str = "FD-ZF";
pub const IA_PERFECT_LABEL: &str = "IA-Perfect";
/// Indicator metric: full-digital rate at least the perfect-CSI IA rate.
pub const DOMINANCE_METRIC: &str = "fd_dominates_ia";

// independent random streams derived from the base seed
const STREAM_GEOMETRY: u64 = 1;
const STREAM_LAYOUT: u64 = 2;
const STREAM_TRAIN_H: u64 = 3;
const STREAM_TRAIN_U: u64 = 4;
const STREAM_TRAIN_CODE: u64 = 5;
const STREAM_CHANNEL: u64 = 6;
const STREAM_SENSING: u64 = 7;
const STREAM_NOISE: u64 = 8;
const STREAM_HOLDOUT: u64 = 9;

/// SplitMix64 finaliser over `(base, stream)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn ia_label(s: Scenario) -> String {
    format!("IA-{}", s.label())
}

/// Array, channel model and DFT operator shared by training and runs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub geometry: ArrayGeometry,
    pub model: ChannelModel,
    pub dft: TransformOperator,
}

pub fn experiment_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let geometry = match cfg.geometry {
        GeometryKind::Ula => ArrayGeometry::uniform(cfg.n_antennas),
        GeometryKind::Nula => {
            gen_nula_geometry(cfg.n_antennas, &mut seeded(derive_seed(cfg.base_seed, STREAM_GEOMETRY)))?
        }
    };
    let model = match cfg.channel_model {
        ChannelModelKind::Sv => ChannelModel::Sv(SvParams::standard(cfg.n_antennas, cfg.n_users)),
        ChannelModelKind::Gscm => ChannelModel::Gscm(GscmParams::standard(
            cfg.n_users,
            derive_seed(cfg.base_seed, STREAM_LAYOUT),
        )),
    };
    let dft = build_dft_operator(&geometry)?;
    Ok(Setup { geometry, model, dft })
}

/// `D_H`, `D_U` over DFT beamspace vectors (atoms ordered by dominant
/// beam) and `D_U` over learned-representation codes.
#[derive(Debug, Clone)]
pub struct Dictionaries {
    pub d_h: Dictionary,
    pub d_u: Dictionary,
    pub d_u_code: Dictionary,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub dictionaries: Dictionaries,
    /// `(name, ||X - D W||_F per iteration)`.
    pub residual_curves: Vec<(String, Vec<f64>)>,
}

/// Trains the three dictionaries without touching the filesystem.
pub fn train_dictionaries_in_memory(cfg: &ExperimentConfig) -> Result<TrainingReport> {
    cfg.validate()?;
    let setup = experiment_setup(cfg)?;
    let p = cfg.dict_params;
    let train = |stream: u64, build: &dyn Fn(&mut crate::random::SimRng) -> Result<crate::dictionary::TrainingSet>, sparsity: usize| {
        let seed = derive_seed(cfg.base_seed, stream);
        let mut rng = seeded(seed);
        let set = build(&mut rng)?;
        let kcfg = KsvdConfig { n_atoms: p.n_atoms, sparsity, iterations: p.iters, seed };
        ksvd_train_traced(&set, &kcfg, &mut rng)
    };

    let h = train(
        STREAM_TRAIN_H,
        &|rng| build_channel_training_set(&setup.model, &setup.geometry, p.n_train_signals, rng),
        p.s_train,
    )?;
    let u = train(
        STREAM_TRAIN_U,
        &|rng| {
            let ch = build_channel_training_set(&setup.model, &setup.geometry, p.n_train_signals, rng)?;
            Ok(precoding_set_from_channels(&setup.dft, &ch.signals))
        },
        p.s_train,
    )?;
    let op_h = TransformOperator::learned(&h.dictionary, cfg.code_sparsity)?;
    // codes carry at most code_sparsity nonzeros
    let code = train(
        STREAM_TRAIN_CODE,
        &|rng| {
            let ch = build_channel_training_set(&setup.model, &setup.geometry, p.n_train_signals, rng)?;
            code_set_from_channels(&op_h, &ch.signals)
        },
        p.s_train.min(cfg.code_sparsity),
    )?;

    let mut d_u = u.dictionary;
    d_u.order_by_dominant_entry();
    Ok(TrainingReport {
        residual_curves: vec![
            ("d_h".into(), h.error_history),
            ("d_u".into(), u.error_history),
            ("d_u_code".into(), code.error_history),
        ],
        dictionaries: Dictionaries { d_h: h.dictionary, d_u, d_u_code: code.dictionary },
    })
}

/// Trains and writes the dictionaries plus the residual sidecar CSV into
/// `cfg.dict_dir`.
pub fn train_dictionaries(cfg: &ExperimentConfig) -> Result<(TrainingReport, Vec<PathBuf>)> {
    let report = train_dictionaries_in_memory(cfg)?;
    std::fs::create_dir_all(&cfg.dict_dir)?;
    let d = &report.dictionaries;
    let mut files = Vec::new();
    for (name, dict) in [(D_H_FILE, &d.d_h), (D_U_FILE, &d.d_u), (D_U_CODE_FILE, &d.d_u_code)] {
        let path = cfg.dict_dir.join(name);
        dict.save(&path)?;
        files.push(path);
    }
    let mut csv = String::from("dictionary,iteration,residual\n");
    for (name, curve) in &report.residual_curves {
        for (i, r) in curve.iter().enumerate() {
            let _ = writeln!(csv, "{name},{},{}", i + 1, format_sig(*r));
        }
    }
    let path = cfg.dict_dir.join(RESIDUALS_FILE);
    std::fs::write(&path, csv)?;
    files.push(path);
    Ok((report, files))
}

pub fn load_dictionaries(cfg: &ExperimentConfig) -> Result<Dictionaries> {
    let load = |name: &str| Dictionary::load(&cfg.dict_dir.join(name));
    let dicts = Dictionaries { d_h: load(D_H_FILE)?, d_u: load(D_U_FILE)?, d_u_code: load(D_U_CODE_FILE)? };
    check_dictionaries(cfg, &dicts, &cfg.dict_dir)?;
    Ok(dicts)
}

fn check_dictionaries(cfg: &ExperimentConfig, d: &Dictionaries, dir: &Path) -> Result<()> {
    let stale = |what: &str| {
        Err(Error::InvalidParameter(format!(
            "dictionaries in {} do not match the config ({what}); rerun `bdl train --config <CONFIG>`",
            dir.display()
        )))
    };
    let n = cfg.n_antennas;
    if d.d_h.signal_dim() != n || d.d_u.signal_dim() != n || d.d_u_code.signal_dim() != d.d_h.n_atoms() {
        return stale("dimensions");
    }
    let expected = [
        (d.d_h.meta.seed, STREAM_TRAIN_H),
        (d.d_u.meta.seed, STREAM_TRAIN_U),
        (d.d_u_code.meta.seed, STREAM_TRAIN_CODE),
    ];
    if expected.iter().any(|&(seed, stream)| seed != derive_seed(cfg.base_seed, stream)) {
        return stale("base_seed");
    }
    Ok(())
}

/// Read-only state shared by all trials.
pub struct TrialContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub setup: Setup,
    pub op_h: TransformOperator,
    pub d_u: &'a ComplexMatrix,
    pub d_u_code: &'a ComplexMatrix,
    /// `U D_H`: maps learned-representation codes to DFT beams.
    pub u_dh: ComplexMatrix,
}

impl<'a> TrialContext<'a> {
    pub fn new(cfg: &'a ExperimentConfig, dicts: &'a Dictionaries) -> Result<Self> {
        cfg.validate()?;
        check_dictionaries(cfg, dicts, &cfg.dict_dir)?;
        let setup = experiment_setup(cfg)?;
        let op_h = TransformOperator::learned(&dicts.d_h, cfg.code_sparsity)?;
        let u_dh = &setup.dft.matrix * &dicts.d_h.atoms;
        Ok(Self { cfg, setup, op_h, d_u: &dicts.d_u.atoms, d_u_code: &dicts.d_u_code.atoms, u_dh })
    }
}

/// Per-trial metrics in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub nmse: Vec<(Scenario, f64)>,
    /// `(label, sum rate)`; empty unless the sum-rate metric is enabled.
    pub rates: Vec<(String, f64)>,
}

impl TrialOutcome {
    pub fn rate(&self, label: &str) -> Option<f64> {
        self.rates.iter().find(|(l, _)| l == label).map(|(_, r)| *r)
    }
}

fn estimate_columns(
    y: &ComplexMatrix,
    n_out: usize,
    f: impl Fn(&ComplexVector) -> Result<ComplexVector>,
) -> Result<ComplexMatrix> {
    let mut out = ComplexMatrix::zeros(n_out, y.ncols());
    for (k, col) in y.column_iter().enumerate() {
        out.set_column(k, &f(&col.into_owned())?);
    }
    Ok(out)
}

/// One Monte-Carlo trial at `(snr_db, q)`. Channels, sensing matrices and
/// noise depend only on the trial index, so all scenarios and grid points
/// share them.
pub fn run_trial(ctx: &TrialContext<'_>, trial: usize, snr_db: f64, q: usize) -> Result<TrialOutcome> {
    let cfg = ctx.cfg;
    let k = cfg.n_users;
    let n = cfg.n_antennas;
    let base = cfg.base_seed;
    let real = ctx.setup.model.generate(&ctx.setup.geometry, &mut seeded(trial_seed(derive_seed(base, STREAM_CHANNEL), trial)))?;
    let t_dft = &ctx.setup.dft.matrix * &real.h;
    let noise_var = noise_variance_for_snr(ctx.setup.model.mean_user_energy(), n, snr_db);
    let pilots = pilot_config_for_budget(k, q)?;
    let mut w_rng = seeded(trial_seed(derive_seed(base, STREAM_SENSING), trial));
    let w = SensingMatrix::bernoulli(q, n, &mut w_rng)?;
    let noise_seed = trial_seed(derive_seed(base, STREAM_NOISE), trial);
    let y_dft = simulate_pilot_rx(&t_dft, &pilots, &w, noise_var, &mut seeded(noise_seed))?;

    let learned = if cfg.needs_learned_representation() {
        let rep = represent_channel(&real.h, &ctx.op_h)?;
        let n_codes = ctx.op_h.n_beams();
        let w_code = SensingMatrix::bernoulli(q, n_codes, &mut w_rng)?;
        let y_code = simulate_pilot_rx(&rep.beamspace.h_tilde, &pilots, &w_code, noise_var, &mut seeded(noise_seed))?;
        Some((rep.beamspace.h_tilde, w_code, y_code))
    } else {
        None
    };

    let s = cfg.omp_sparsity;
    let (v, comps) = (cfg.sd_window, cfg.sd_components);
    let mut nmse_out = Vec::with_capacity(cfg.scenarios.len());
    let mut designs = Vec::with_capacity(cfg.scenarios.len());
    for &sc in &cfg.scenarios {
        let (estimate, reference, design) = match sc.representation() {
            TransformKind::Dft => {
                let est = match (sc.estimator(), sc.estimation_basis()) {
                    (Estimator::Omp, TransformKind::Dft) => {
                        let a = EffectiveSensing::beams(&w);
                        estimate_columns(&y_dft, n, |y| Ok(a.sparse_code(y, s)?.to_dense()))?
                    }
                    (Estimator::Omp, TransformKind::Learned) => {
                        let a = EffectiveSensing::atoms(&w, ctx.d_u)?;
                        estimate_columns(&y_dft, n, |y| Ok(ctx.d_u * a.sparse_code(y, s)?.to_dense()))?
                    }
                    (Estimator::Sd, TransformKind::Dft) => {
                        estimate_columns(&y_dft, n, |y| estimate_sd(y, &w.w, comps, v))?
                    }
                    (Estimator::Sd, TransformKind::Learned) => {
                        let a = EffectiveSensing::atoms(&w, ctx.d_u)?;
                        estimate_columns(&y_dft, n, |y| Ok(ctx.d_u * estimate_sd(y, &a.a, comps, v)?))?
                    }
                };
                let design = est.clone();
                (est, t_dft.clone(), design)
            }
            TransformKind::Learned => {
                let (codes, w_code, y_code) = learned.as_ref().expect("learned representation computed");
                let n_codes = codes.nrows();
                let est = match (sc.estimator(), sc.estimation_basis()) {
                    (Estimator::Omp, TransformKind::Dft) => {
                        let a = EffectiveSensing::beams(w_code);
                        estimate_columns(y_code, n_codes, |y| Ok(a.sparse_code(y, s)?.to_dense()))?
                    }
                    (Estimator::Omp, TransformKind::Learned) => {
                        let a = EffectiveSensing::atoms(w_code, ctx.d_u_code)?;
                        estimate_columns(y_code, n_codes, |y| Ok(ctx.d_u_code * a.sparse_code(y, s)?.to_dense()))?
                    }
                    (Estimator::Sd, _) => {
                        return Err(Error::InvalidParameter(format!("{sc} has no learned-representation SD variant")))
                    }
                };
                let design = &ctx.u_dh * &est;
                (est, codes.clone(), design)
            }
        };
        nmse_out.push((sc, nmse(&estimate, &reference)?));
        designs.push(design);
    }

    let mut rates = Vec::new();
    if cfg.metrics.contains(&Metric::SumRate) {
        let rho = cfg.power;
        let fd = full_digital_rate(&t_dft, noise_var, rho)?;
        let sel = ia_beam_select(&t_dft, cfg.n_rf, noise_var, rho)?;
        let ia = sum_rate(&t_dft, &sel, noise_var, rho)?;
        rates.push((FD_ZF_LABEL.to_string(), fd));
        rates.push((IA_PERFECT_LABEL.to_string(), ia));
        for (&sc, design) in cfg.scenarios.iter().zip(&designs) {
            let rate = match ia_beam_select(design, cfg.n_rf, noise_var, rho) {
                Ok(sel) => mismatched_sum_rate(&t_dft, design, &sel, noise_var, rho)?,
                // an estimate with fewer than K usable beams serves nobody
                Err(Error::DegenerateChannel(_)) => 0.0,
                Err(e) => return Err(e),
            };
            rates.push((ia_label(sc), rate));
        }
    }
    Ok(TrialOutcome { nmse: nmse_out, rates })
}

/// Worker pool capped by `BDL_THREADS` (unset or 0 means one per core).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("BDL_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidParameter(format!("BDL_THREADS must be a count, got {v:?}")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// All trials of every grid point. Trials run concurrently; results come
/// back in trial order.
pub fn run_trials(cfg: &ExperimentConfig, dicts: &Dictionaries) -> Result<Vec<((f64, usize), Vec<TrialOutcome>)>> {
    let ctx = TrialContext::new(cfg, dicts)?;
    let pool = thread_pool()?;
    cfg.grid()
        .into_iter()
        .map(|(snr, q)| {
            let outcomes = pool.install(|| {
                (0..cfg.n_trials)
                    .into_par_iter()
                    .map(|t| run_trial(&ctx, t, snr, q))
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(((snr, q), outcomes))
        })
        .collect()
}

pub fn run_experiment_with(cfg: &ExperimentConfig, dicts: &Dictionaries) -> Result<ResultTable> {
    let sweep = cfg.sweep();
    let mut table = ResultTable::default();
    for ((snr, q), outcomes) in run_trials(cfg, dicts)? {
        let grid_value = match sweep {
            super::config::Sweep::Snr => snr,
            super::config::Sweep::Q => q as f64,
        };
        let mut push = |scenario: &str, metric: &str, samples: Vec<f64>| {
            table.push_samples(scenario, sweep.name(), grid_value, metric, &samples, cfg.base_seed)
        };
        if cfg.metrics.contains(&Metric::Nmse) {
            for (i, sc) in cfg.scenarios.iter().enumerate() {
                push(sc.label(), Metric::Nmse.name(), outcomes.iter().map(|o| o.nmse[i].1).collect());
            }
        }
        if cfg.metrics.contains(&Metric::SumRate) {
            let labels: Vec<String> = outcomes[0].rates.iter().map(|(l, _)| l.clone()).collect();
            for (i, label) in labels.iter().enumerate() {
                push(label, Metric::SumRate.name(), outcomes.iter().map(|o| o.rates[i].1).collect());
            }
            let dominance = outcomes
                .iter()
                .map(|o| {
                    let fd = o.rate(FD_ZF_LABEL).unwrap_or(0.0);
                    let ia = o.rate(IA_PERFECT_LABEL).unwrap_or(0.0);
                    if fd + 1e-9 * fd.abs().max(1.0) >= ia { 1.0 } else { 0.0 }
                })
                .collect();
            push(FD_ZF_LABEL, DOMINANCE_METRIC, dominance);
        }
    }
    Ok(table)
}

/// Loads the trained dictionaries and runs the configured sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let dicts = load_dictionaries(cfg)?;
    run_experiment_with(cfg, &dicts)
}

/// Representation quality of the DFT operator and of `D_H` on held-out
/// channels: relative sparse-approximation residual and the leaked energy
/// fraction at each sparsity in `cfg.repr_sparsity`.
pub fn repr_compare(cfg: &ExperimentConfig, dicts: &Dictionaries) -> Result<ResultTable> {
    cfg.validate()?;
    let setup = experiment_setup(cfg)?;
    let mut rng = seeded(derive_seed(cfg.base_seed, STREAM_HOLDOUT));
    let holdout = build_channel_training_set(&setup.model, &setup.geometry, cfg.n_trials, &mut rng)?;
    let dft_atoms = setup.dft.synthesis_atoms();
    let mut table = ResultTable::default();
    for &s in &cfg.repr_sparsity {
        for (label, atoms) in [("DFT", &dft_atoms), ("Learned", &dicts.d_h.atoms)] {
            let res = relative_residuals(atoms, &holdout.signals, s)?;
            let leak: Vec<f64> = res.iter().map(|r| r * r).collect();
            table.push_samples(label, "sparsity", s as f64, "residual", &res, cfg.base_seed);
            table.push_samples(label, "sparsity", s as f64, "leakage", &leak, cfg.base_seed);
        }
    }
    Ok(table)
}
