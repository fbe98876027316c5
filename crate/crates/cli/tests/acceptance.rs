//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use sha2::{Digest, Sha256};

use bdl::beamspace::build_dft_operator;
use bdl::channel::{gen_nula_geometry, steering_vector, ArrayGeometry};
use bdl::dictionary::{build_channel_training_set, ksvd_train_traced, relative_residuals, KsvdConfig, TrainingSet, TrainingSource};
use bdl::estimation::Scenario;
use bdl::harness::{
    run_experiment_with, run_trials, train_dictionaries_in_memory, Dictionaries, ExperimentConfig, GeometryKind,
    Metric, ResultTable,
};
use bdl::linalg::{ComplexMatrix, ComplexVector, C64};
use bdl::precoding::zf_precoder;
use bdl::random::{complex_gaussian, seeded, SimRng};
use bdl::sparse::omp_traced;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn combined(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn row(t: &ResultTable, scenario: &str, metric: &str, x: f64) -> (f64, f64) {
    let r = t.find(scenario, metric, x).unwrap_or_else(|| panic!("missing row {scenario} {metric} {x}"));
    (r.mean, r.std_error)
}

/// `a < b` with a gap above two combined standard errors.
fn clearly_below(t: &ResultTable, a: &str, b: &str, metric: &str, x: f64, notes: &mut Vec<String>) -> bool {
    let (ma, sa) = row(t, a, metric, x);
    let (mb, sb) = row(t, b, metric, x);
    let ok = mb - ma > 2.0 * combined(sa, sb);
    if !ok {
        notes.push(format!("{a}={ma:.4} vs {b}={mb:.4} at {x}"));
    }
    ok
}

fn random_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

// --- 1 -------------------------------------------------------------------

fn leakage_cli() -> Verdict {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_bdl")).args(["leakage", "--n", "256"]).output().expect("run bdl");
    let elapsed = start.elapsed();
    let text = String::from_utf8_lossy(&out.stdout);
    let value: f64 = match text.trim().parse() {
        Ok(v) => v,
        Err(_) => return verdict(false, format!("unparsable output {text:?}")),
    };
    verdict(
        out.status.success() && (value - 0.60).abs() <= 0.01 && elapsed < Duration::from_secs(1),
        format!("eta(256) = {value}, {elapsed:.2?}"),
    )
}

// --- 2 -------------------------------------------------------------------

/// Least-squares residual energy of `y` on two columns via the 2x2 normal
/// equations.
fn pair_residual(a: &ComplexMatrix, y: &ComplexVector, i: usize, j: usize) -> f64 {
    let (ai, aj) = (a.column(i), a.column(j));
    let g11 = ai.dotc(&ai);
    let g12 = ai.dotc(&aj);
    let g22 = aj.dotc(&aj);
    let b1 = ai.dotc(y);
    let b2 = aj.dotc(y);
    let det = g11 * g22 - g12 * g12.conj();
    let x1 = (g22 * b1 - g12 * b2) / det;
    let x2 = (g11 * b2 - g12.conj() * b1) / det;
    (y - ai * x1 - aj * x2).norm_squared()
}

fn omp_oracle() -> Verdict {
    let mut rng = seeded(2024);
    let (mut matched, mut within) = (0, 0);
    let trials = 1000;
    for _ in 0..trials {
        let a = random_matrix(&mut rng, 8, 16);
        let i = rng.gen_range(0..16);
        let j = (i + rng.gen_range(1..16)) % 16;
        let mut x = ComplexVector::zeros(16);
        x[i] = complex_gaussian(&mut rng, 1.0);
        x[j] = complex_gaussian(&mut rng, 1.0);
        let y = &a * x;
        let mut best = (f64::INFINITY, 0, 0);
        for p in 0..16 {
            for q in p + 1..16 {
                let r = pair_residual(&a, &y, p, q);
                if r < best.0 {
                    best = (r, p, q);
                }
            }
        }
        let trace = omp_traced(&y, &a, 2, 0.0).expect("omp");
        let mut support = trace.code.support().to_vec();
        support.sort_unstable();
        if support == [best.1, best.2] {
            matched += 1;
        }
        let res = trace.residual_norms.last().copied().unwrap_or(y.norm()).powi(2);
        if res <= 1.01 * best.0 + 1e-9 * y.norm_squared() {
            within += 1;
        }
    }
    let rate = matched as f64 / trials as f64;
    verdict(
        rate >= 0.95 && within == trials,
        format!("support match {:.1}%, residual within 1.01x optimum {within}/{trials}", 100.0 * rate),
    )
}

// --- 3 -------------------------------------------------------------------

fn ksvd_recovery() -> Verdict {
    let mut rng = seeded(77);
    let mut truth = random_matrix(&mut rng, 16, 32);
    for mut c in truth.column_iter_mut() {
        let n = c.norm();
        c /= C64::new(n, 0.0);
    }
    let mut x = ComplexMatrix::zeros(16, 200);
    for j in 0..200 {
        let p = rng.gen_range(0..32);
        let q = (p + rng.gen_range(1..32)) % 32;
        let col = truth.column(p) * complex_gaussian(&mut rng, 1.0) + truth.column(q) * complex_gaussian(&mut rng, 1.0);
        x.set_column(j, &col);
    }
    let set = TrainingSet { signals: x, source: TrainingSource::ChannelRealizations };
    let cfg = KsvdConfig { n_atoms: 32, sparsity: 2, iterations: 50, seed: 5 };
    let out = ksvd_train_traced(&set, &cfg, &mut seeded(5)).expect("k-svd");
    let errs = relative_residuals(&out.dictionary.atoms, &set.signals, 2).expect("residuals");
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    verdict(mean < 0.05, format!("mean relative error {mean:.4}"))
}

// --- 4 -------------------------------------------------------------------

fn representation_ordering(cfg: &ExperimentConfig, dicts: &Dictionaries) -> Verdict {
    let geometry = ArrayGeometry::uniform(cfg.n_antennas);
    let model = bdl::channel::ChannelModel::Sv(bdl::channel::SvParams::standard(cfg.n_antennas, cfg.n_users));
    let holdout = build_channel_training_set(&model, &geometry, 500, &mut seeded(9_001)).expect("holdout");
    let dft = build_dft_operator(&geometry).expect("dft").synthesis_atoms();
    let learned = relative_residuals(&dicts.d_h.atoms, &holdout.signals, 16).expect("learned");
    let fixed = relative_residuals(&dft, &holdout.signals, 16).expect("dft");
    let (ml, sl) = bdl::harness::table::mean_and_stderr(&learned);
    let (mf, sf) = bdl::harness::table::mean_and_stderr(&fixed);
    verdict(
        mf - ml > 2.0 * combined(sl, sf),
        format!("s=16 residual learned {ml:.4}+-{sl:.4} vs DFT {mf:.4}+-{sf:.4} over 500 channels"),
    )
}

// --- 5 / 8 ---------------------------------------------------------------

fn nmse_ordering(table: &ResultTable) -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for snr in [10.0, 15.0, 20.0] {
        ok &= clearly_below(table, "Scenario3", "Scenario1", "nmse", snr, &mut notes);
        ok &= clearly_below(table, "Scenario1", "OMP-DFT", "nmse", snr, &mut notes);
        ok &= clearly_below(table, "SD-DL", "SD-DFT", "nmse", snr, &mut notes);
    }
    let (s3, _) = row(table, "Scenario3", "nmse", 10.0);
    let (s1, _) = row(table, "Scenario1", "nmse", 10.0);
    let (omp, _) = row(table, "OMP-DFT", "nmse", 10.0);
    let (sdl, _) = row(table, "SD-DL", "nmse", 10.0);
    let (sdd, _) = row(table, "SD-DFT", "nmse", 10.0);
    let mut detail = format!("at 10 dB: S3 {s3:.4} < S1 {s1:.4} < OMP-DFT {omp:.4}; SD-DL {sdl:.4} < SD-DFT {sdd:.4}");
    if !notes.is_empty() {
        detail.push_str(&format!("; violations: {}", notes.join(", ")));
    }
    verdict(ok, detail)
}

fn gap_at_20(table: &ResultTable) -> f64 {
    row(table, "OMP-DFT", "nmse", 20.0).0 - row(table, "Scenario3", "nmse", 20.0).0
}

// --- 6 -------------------------------------------------------------------

fn dft_counterpart(s: Scenario) -> Scenario {
    match s {
        Scenario::SdDl => Scenario::SdDft,
        _ => Scenario::OmpDft,
    }
}

fn pilot_trend(table: &ResultTable) -> Verdict {
    let qs = [8.0, 16.0, 24.0, 32.0];
    let mut notes = Vec::new();
    for s in Scenario::ALL {
        for w in qs.windows(2) {
            let (a, sa) = row(table, s.label(), "nmse", w[0]);
            let (b, sb) = row(table, s.label(), "nmse", w[1]);
            if b > a + 2.0 * combined(sa, sb) {
                notes.push(format!("{} rises {a:.4} -> {b:.4} at Q={}", s.label(), w[1]));
            }
        }
    }
    for s in [Scenario::Scenario1, Scenario::SdDl, Scenario::Scenario2, Scenario::Scenario3] {
        let base = row(table, dft_counterpart(s).label(), "nmse", 32.0).0;
        let reach = qs.iter().copied().find(|&q| row(table, s.label(), "nmse", q).0 <= base);
        match reach {
            Some(q) if q <= 24.0 => {}
            _ => notes.push(format!("{} does not reach {} Q=32 NMSE {base:.4} by Q=24", s.label(), dft_counterpart(s).label())),
        }
    }
    let detail = if notes.is_empty() {
        format!(
            "monotone in Q for all scenarios; at Q=24 S1 {:.4}, S3 {:.4} vs OMP-DFT(Q=32) {:.4}",
            row(table, "Scenario1", "nmse", 24.0).0,
            row(table, "Scenario3", "nmse", 24.0).0,
            row(table, "OMP-DFT", "nmse", 32.0).0
        )
    } else {
        notes.join("; ")
    };
    verdict(notes.is_empty(), detail)
}

// --- 7 -------------------------------------------------------------------

fn sum_rate_ordering(cfg: &ExperimentConfig, dicts: &Dictionaries) -> Verdict {
    let mut rate_cfg = cfg.clone();
    rate_cfg.metrics = vec![Metric::SumRate];
    let runs = run_trials(&rate_cfg, dicts).expect("sum-rate trials");
    let mut notes = Vec::new();
    let (mut dominated, mut total) = (0, 0);
    for (_, outcomes) in &runs {
        for o in outcomes {
            total += 1;
            let fd = o.rate("FD-ZF").unwrap();
            let ia = o.rate("IA-Perfect").unwrap();
            if fd + 1e-9 * fd.max(1.0) >= ia {
                dominated += 1;
            }
        }
    }
    if dominated != total {
        notes.push(format!("FD-ZF >= IA-Perfect on {dominated}/{total} trials"));
    }
    let table = run_experiment_with(&rate_cfg, dicts).expect("sum-rate table");
    for &snr in &cfg.snr_grid_db {
        for s in Scenario::ALL {
            let label = format!("IA-{}", s.label());
            let (p, sp) = row(&table, "IA-Perfect", "sum_rate", snr);
            let (e, se) = row(&table, &label, "sum_rate", snr);
            if p - e <= 2.0 * combined(sp, se) {
                notes.push(format!("IA-Perfect {p:.3} vs {label} {e:.3} at {snr} dB"));
            }
        }
        if snr >= 10.0 {
            for s in [Scenario::Scenario1, Scenario::SdDl, Scenario::Scenario2, Scenario::Scenario3] {
                let learned = row(&table, &format!("IA-{}", s.label()), "sum_rate", snr).0;
                let base = row(&table, &format!("IA-{}", dft_counterpart(s).label()), "sum_rate", snr).0;
                if learned <= base {
                    notes.push(format!("IA-{} {learned:.3} <= IA-{} {base:.3} at {snr} dB", s.label(), dft_counterpart(s).label()));
                }
            }
        }
    }
    let detail = if notes.is_empty() {
        format!(
            "FD>=IA on {total}/{total} trials; at 20 dB IA-Perfect {:.2}, IA-Scenario3 {:.2}, IA-OMP-DFT {:.2}",
            row(&table, "IA-Perfect", "sum_rate", 20.0).0,
            row(&table, "IA-Scenario3", "sum_rate", 20.0).0,
            row(&table, "IA-OMP-DFT", "sum_rate", 20.0).0
        )
    } else {
        notes.join("; ")
    };
    verdict(notes.is_empty(), detail)
}

// --- 9 -------------------------------------------------------------------

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("tiny.conf");
    std::fs::write(
        &config,
        "n_antennas = 16\nn_users = 2\nn_rf = 2\nq_grid = 8\nsnr_grid_db = 0,10,20\nn_trials = 20\nbase_seed = 99\n\
         dict_atoms = 32\ndict_sparsity = 4\ndict_iterations = 5\ndict_train_signals = 200\ncode_sparsity = 2\n\
         omp_sparsity = 4\nsd_window = 2\nmetrics = nmse,sum_rate\noutput_dir = out\n",
    )
    .expect("write config");
    let bin = env!("CARGO_BIN_EXE_bdl");
    let ok = |c: &mut Command| c.output().map(|o| o.status.success()).unwrap_or(false);
    if !ok(Command::new(bin).args(["train", "--config"]).arg(&config)) {
        return verdict(false, "training failed");
    }
    let mut hashes = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(run);
        if !ok(Command::new(bin).env("BDL_THREADS", threads).args(["run", "--config"]).arg(&config).arg("--out").arg(&out)) {
            return verdict(false, format!("run {run} failed"));
        }
        let bytes = std::fs::read(Path::new(&out).join("results.csv")).expect("csv");
        hashes.push(format!("{:x}", Sha256::digest(&bytes)));
    }
    verdict(hashes[0] == hashes[1], format!("sha256 {} / {}", &hashes[0][..16], &hashes[1][..16]))
}

// --- 10 ------------------------------------------------------------------

fn numerical_invariants() -> Verdict {
    let mut rng = seeded(31337);
    let mut notes = Vec::new();

    for _ in 0..10 {
        let n = rng.gen_range(2..=96);
        let u = build_dft_operator(&ArrayGeometry::uniform(n)).unwrap().matrix;
        let err = (&u * u.adjoint() - ComplexMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err > 1e-9 {
            notes.push(format!("DFT unitarity error {err:e} at N={n}"));
        }
    }

    for _ in 0..50 {
        let n = rng.gen_range(2..=128);
        let g = if rng.gen() { ArrayGeometry::uniform(n) } else { gen_nula_geometry(n, &mut rng).unwrap() };
        let theta = rng.gen_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
        let err = (steering_vector(&g, theta).norm() - 1.0).abs();
        if err > 1e-12 {
            notes.push(format!("steering norm error {err:e}"));
        }
    }

    for _ in 0..100 {
        let (m, k) = (rng.gen_range(4..=24), rng.gen_range(4..=48));
        let a = random_matrix(&mut rng, m, k);
        let y = random_matrix(&mut rng, m, 1).column(0).into_owned();
        let trace = omp_traced(&y, &a, m.min(k), 0.0).unwrap();
        let mut prev = y.norm();
        for &r in &trace.residual_norms {
            if r > prev * (1.0 + 1e-12) {
                notes.push(format!("OMP residual rose {prev} -> {r}"));
            }
            prev = r;
        }
    }

    for trial in 0..3 {
        let x = random_matrix(&mut rng, 12, 80);
        let set = TrainingSet { signals: x, source: TrainingSource::ChannelRealizations };
        let cfg = KsvdConfig { n_atoms: 20, sparsity: 3, iterations: 15, seed: trial };
        let hist = ksvd_train_traced(&set, &cfg, &mut seeded(trial)).unwrap().error_history;
        if hist.windows(2).any(|w| w[1] > w[0] + 1e-6) {
            notes.push(format!("K-SVD error rose: {hist:?}"));
        }
    }

    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let n = rng.gen_range(k..=32);
        let h = random_matrix(&mut rng, n, k);
        let rho = rng.gen_range(0.1..100.0);
        let p = zf_precoder(&h, rho).unwrap();
        let err = (p.p.norm_squared() - rho).abs();
        if err > 1e-9 * rho.max(1.0) {
            notes.push(format!("ZF power error {err:e}"));
        }
    }

    let detail = if notes.is_empty() {
        "unitarity, steering norms, OMP/K-SVD monotonicity and ZF power all within tolerance".to_string()
    } else {
        notes.truncate(5);
        notes.join("; ")
    };
    verdict(notes.is_empty(), detail)
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, start: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {name}: {} ({:.1?})", v.detail, start.elapsed());
        if !v.pass {
            failures += 1;
        }
    };

    let t = Instant::now();
    report(1, "power leakage", t, leakage_cli());
    let t = Instant::now();
    report(2, "OMP oracle equivalence", t, omp_oracle());
    let t = Instant::now();
    report(3, "K-SVD recovery", t, ksvd_recovery());

    // desk-scale SV / ULA configuration shared by criteria 4-7
    let ula = ExperimentConfig::default();
    let t = Instant::now();
    let ula_dicts = train_dictionaries_in_memory(&ula).expect("train ULA dictionaries").dictionaries;
    let train_time = t.elapsed();
    let t = Instant::now();
    report(4, "representation quality", t, representation_ordering(&ula, &ula_dicts));

    let t = Instant::now();
    let ula_table = run_experiment_with(&ula, &ula_dicts).expect("ULA sweep");
    let mut v5 = nmse_ordering(&ula_table);
    let c5_time = train_time + t.elapsed();
    v5.pass &= c5_time < Duration::from_secs(600);
    v5.detail.push_str(&format!("; including training {c5_time:.1?}"));
    report(5, "NMSE ordering (SV, ULA)", t, v5);

    let t = Instant::now();
    let mut q_cfg = ula.clone();
    q_cfg.snr_grid_db = vec![10.0];
    q_cfg.q_grid = vec![8, 16, 24, 32];
    let q_table = run_experiment_with(&q_cfg, &ula_dicts).expect("Q sweep");
    report(6, "pilot-budget trend", t, pilot_trend(&q_table));

    let t = Instant::now();
    report(7, "sum-rate ordering", t, sum_rate_ordering(&ula, &ula_dicts));

    let t = Instant::now();
    let mut nula = ula.clone();
    nula.geometry = GeometryKind::Nula;
    let nula_dicts = train_dictionaries_in_memory(&nula).expect("train NULA dictionaries").dictionaries;
    let nula_table = run_experiment_with(&nula, &nula_dicts).expect("NULA sweep");
    let (g_ula, g_nula) = (gap_at_20(&ula_table), gap_at_20(&nula_table));
    let v8 = nmse_ordering(&nula_table);
    report(
        8,
        "NULA amplification",
        t,
        verdict(
            g_nula > g_ula && v8.pass,
            format!("OMP-DFT minus Scenario3 at 20 dB: NULA {g_nula:.4} vs ULA {g_ula:.4}; NULA ordering: {}", v8.detail),
        ),
    );

    let t = Instant::now();
    report(9, "determinism", t, determinism());
    let t = Instant::now();
    report(10, "numerical invariants", t, numerical_invariants());

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
