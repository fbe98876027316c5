//! Flat `key = value` experiment configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::ChannelModelKind;
use crate::error::{Error, Result};
use crate::estimation::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Ula,
    Nula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Nmse,
    SumRate,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nmse => "nmse",
            Self::SumRate => "sum_rate",
        }
    }
}

/// Which grid the result rows run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Snr,
    Q,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Self::Snr => "snr_db",
            Self::Q => "q",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DictParams {
    pub n_atoms: usize,
    pub s_train: usize,
    pub iters: usize,
    pub n_train_signals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub channel_model: ChannelModelKind,
    pub geometry: GeometryKind,
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_rf: usize,
    pub scenarios: Vec<Scenario>,
    pub metrics: Vec<Metric>,
    pub snr_grid_db: Vec<f64>,
    pub q_grid: Vec<usize>,
    pub n_trials: usize,
    pub base_seed: u64,
    pub dict_params: DictParams,
    /// Sparsity of the learned channel representation.
    pub code_sparsity: usize,
    /// OMP budget of every OMP estimator.
    pub omp_sparsity: usize,
    /// Support-detection window `V` and number of components.
    pub sd_window: usize,
    pub sd_components: usize,
    /// Total transmit power for the sum-rate metric.
    pub power: f64,
    /// Sparsity levels evaluated by `repr-compare`.
    pub repr_sparsity: Vec<usize>,
    pub output_dir: PathBuf,
    pub dict_dir: PathBuf,
    /// File stem of the result CSV and plot script.
    pub name: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel_model: ChannelModelKind::Sv,
            geometry: GeometryKind::Ula,
            n_antennas: 64,
            n_users: 8,
            n_rf: 8,
            scenarios: Scenario::ALL.to_vec(),
            metrics: vec![Metric::Nmse],
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            q_grid: vec![24],
            n_trials: 200,
            base_seed: 1,
            dict_params: DictParams { n_atoms: 128, s_train: 8, iters: 25, n_train_signals: 3000 },
            code_sparsity: 4,
            omp_sparsity: 6,
            sd_window: 2,
            sd_components: 3,
            power: 1.0,
            repr_sparsity: vec![1, 2, 4, 8, 16],
            output_dir: PathBuf::from("out"),
            dict_dir: PathBuf::from("out"),
            name: "results".into(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse_with_base(&text, base)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_base(text, Path::new("."))
    }

    fn parse_with_base(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let mut dict_dir_set = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            match key {
                "channel_model" => {
                    cfg.channel_model = match value.to_ascii_lowercase().as_str() {
                        "sv" => ChannelModelKind::Sv,
                        "gscm" => ChannelModelKind::Gscm,
                        _ => return Err(err(format!("unknown channel model {value:?}"))),
                    }
                }
                "geometry" => {
                    cfg.geometry = match value.to_ascii_lowercase().as_str() {
                        "ula" => GeometryKind::Ula,
                        "nula" => GeometryKind::Nula,
                        _ => return Err(err(format!("unknown geometry {value:?}"))),
                    }
                }
                "n_antennas" => cfg.n_antennas = num(value).map_err(err)?,
                "n_users" => cfg.n_users = num(value).map_err(err)?,
                "n_rf" => cfg.n_rf = num(value).map_err(err)?,
                "scenarios" => {
                    cfg.scenarios = list(value)
                        .map(|s| s.parse::<Scenario>().map_err(|e| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "metrics" => {
                    cfg.metrics = list(value)
                        .map(|m| match m {
                            "nmse" => Ok(Metric::Nmse),
                            "sum_rate" => Ok(Metric::SumRate),
                            _ => Err(err(format!("unknown metric {m:?}"))),
                        })
                        .collect::<Result<_>>()?
                }
                "snr_grid_db" => cfg.snr_grid_db = list(value).map(num).collect::<std::result::Result<_, _>>().map_err(err)?,
                "q_grid" => cfg.q_grid = list(value).map(num).collect::<std::result::Result<_, _>>().map_err(err)?,
                "n_trials" => cfg.n_trials = num(value).map_err(err)?,
                "base_seed" => cfg.base_seed = num(value).map_err(err)?,
                "dict_atoms" => cfg.dict_params.n_atoms = num(value).map_err(err)?,
                "dict_sparsity" => cfg.dict_params.s_train = num(value).map_err(err)?,
                "dict_iterations" => cfg.dict_params.iters = num(value).map_err(err)?,
                "dict_train_signals" => cfg.dict_params.n_train_signals = num(value).map_err(err)?,
                "code_sparsity" => cfg.code_sparsity = num(value).map_err(err)?,
                "omp_sparsity" => cfg.omp_sparsity = num(value).map_err(err)?,
                "sd_window" => cfg.sd_window = num(value).map_err(err)?,
                "sd_components" => cfg.sd_components = num(value).map_err(err)?,
                "power" => cfg.power = num(value).map_err(err)?,
                "repr_sparsity" => cfg.repr_sparsity = list(value).map(num).collect::<std::result::Result<_, _>>().map_err(err)?,
                "output_dir" => cfg.output_dir = base.join(value),
                "dict_dir" => {
                    cfg.dict_dir = base.join(value);
                    dict_dir_set = true;
                }
                "name" => {
                    if value.is_empty() || value.contains(['/', '\\']) {
                        return Err(err(format!("invalid output name {value:?}")));
                    }
                    cfg.name = value.to_string()
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        if !dict_dir_set {
            cfg.dict_dir = cfg.output_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if self.n_trials == 0 {
            return bad("n_trials must be >= 1".into());
        }
        if self.snr_grid_db.is_empty() || self.q_grid.is_empty() {
            return bad("snr_grid_db and q_grid must be non-empty".into());
        }
        if self.snr_grid_db.len() > 1 && self.q_grid.len() > 1 {
            return bad("sweep either snr_grid_db or q_grid, not both".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite".into());
        }
        if self.scenarios.is_empty() || self.metrics.is_empty() {
            return bad("scenarios and metrics must be non-empty".into());
        }
        if self.n_antennas < 2 || self.n_users == 0 {
            return bad("need n_antennas >= 2 and n_users >= 1".into());
        }
        if self.n_rf < self.n_users || self.n_rf > self.n_antennas {
            return bad(format!("need n_users <= n_rf <= n_antennas, got n_rf = {}", self.n_rf));
        }
        if let Some(q) = self.q_grid.iter().find(|&&q| q == 0 || q % self.n_users != 0) {
            return bad(format!("Q = {q} must be a positive multiple of n_users = {}", self.n_users));
        }
        let d = &self.dict_params;
        if d.n_atoms == 0 || d.s_train == 0 || d.iters == 0 || d.n_train_signals < d.n_atoms {
            return bad("dictionary parameters need atoms, sparsity, iterations >= 1 and enough signals".into());
        }
        if self.code_sparsity == 0 || self.omp_sparsity == 0 {
            return bad("code_sparsity and omp_sparsity must be >= 1".into());
        }
        if self.sd_window == 0 || self.sd_components == 0 || self.sd_window * self.sd_components > self.n_antennas {
            return bad("support detection needs 1 <= sd_window * sd_components <= n_antennas".into());
        }
        if !(self.power > 0.0) {
            return bad("power must be > 0".into());
        }
        if self.repr_sparsity.iter().any(|&s| s == 0 || s > self.n_antennas) {
            return bad("repr_sparsity values must lie in 1..=n_antennas".into());
        }
        Ok(())
    }

    pub fn sweep(&self) -> Sweep {
        if self.q_grid.len() > 1 {
            Sweep::Q
        } else {
            Sweep::Snr
        }
    }

    /// Grid points as `(snr_db, q)` pairs.
    pub fn grid(&self) -> Vec<(f64, usize)> {
        match self.sweep() {
            Sweep::Q => self.q_grid.iter().map(|&q| (self.snr_grid_db[0], q)).collect(),
            Sweep::Snr => self.snr_grid_db.iter().map(|&s| (s, self.q_grid[0])).collect(),
        }
    }

    pub fn needs_learned_representation(&self) -> bool {
        self.scenarios.iter().any(|s| s.representation() == crate::beamspace::TransformKind::Learned)
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}
