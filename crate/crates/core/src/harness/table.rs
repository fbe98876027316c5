//! Aggregated result rows, CSV output and gnuplot script emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;

pub const CSV_HEADER: &str = "scenario,grid_param,grid_value,metric,mean,stderr,n_trials,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub grid_param: String,
    pub grid_value: f64,
    pub metric: String,
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Sample mean and standard error `std / sqrt(n)` (zero for `n < 2`).
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ResultTable {
    pub fn push_samples(
        &mut self,
        scenario: &str,
        grid_param: &str,
        grid_value: f64,
        metric: &str,
        samples: &[f64],
        seed: u64,
    ) {
        let (mean, std_error) = mean_and_stderr(samples);
        self.rows.push(ResultRow {
            scenario: scenario.to_string(),
            grid_param: grid_param.to_string(),
            grid_value,
            metric: metric.to_string(),
            mean,
            std_error,
            n_trials: samples.len(),
            seed,
        });
    }

    pub fn find(&self, scenario: &str, metric: &str, grid_value: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.metric == metric && r.grid_value == grid_value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.scenario,
                r.grid_param,
                format_sig(r.grid_value),
                r.metric,
                format_sig(r.mean),
                format_sig(r.std_error),
                r.n_trials,
                r.seed
            );
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.gp` into `dir`; returns the CSV path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.gp")), self.gnuplot_script(&format!("{stem}.csv"), stem))?;
        Ok(csv)
    }

    /// Standalone gnuplot script plotting every `(metric, scenario)` curve
    /// from the CSV, one PNG per metric.
    pub fn gnuplot_script(&self, csv_name: &str, stem: &str) -> String {
        let mut metrics: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        let grid_param = self.rows.first().map(|r| r.grid_param.as_str()).unwrap_or("grid");
        let mut gp = String::new();
        let _ = writeln!(gp, "# gnuplot -p {stem}.gp");
        let _ = writeln!(gp, "set datafile separator ','");
        let _ = writeln!(gp, "set terminal pngcairo size 900,600");
        let _ = writeln!(gp, "set grid");
        let _ = writeln!(gp, "set key outside right");
        let _ = writeln!(gp, "set xlabel '{grid_param}'");
        for metric in metrics {
            let mut scenarios: Vec<&str> = Vec::new();
            for r in self.rows.iter().filter(|r| r.metric == metric) {
                if !scenarios.contains(&r.scenario.as_str()) {
                    scenarios.push(&r.scenario);
                }
            }
            let _ = writeln!(gp, "set output '{stem}_{metric}.png'");
            let _ = writeln!(gp, "set ylabel '{metric}'");
            if metric == "nmse" {
                let _ = writeln!(gp, "set logscale y");
            } else {
                let _ = writeln!(gp, "unset logscale y");
            }
            let plots: Vec<String> = scenarios
                .iter()
                .map(|s| {
                    format!(
                        "'{csv_name}' using ((strcol(1) eq '{s}' && strcol(4) eq '{metric}') ? $3 : 1/0):5:6 \
                         with yerrorlines title '{s}'"
                    )
                })
                .collect();
            let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
        }
        gp
    }
}

/// Decimal rendering with 10 significant digits; scientific notation
/// outside `1e-5 ..= 1e10`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
