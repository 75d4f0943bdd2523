//! Per-run aggregates over seeds and the two-row comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp_env::EpisodeSummary;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub median: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
                median: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            std,
            median: median(xs),
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub e_t_kwh: f64,
    pub e_b_gross_kwh: f64,
    pub e_r_kwh: f64,
    pub e_total_kwh: f64,
    pub overlap_seconds: f64,
    pub total_time_s: f64,
}

impl From<&EpisodeSummary> for EpisodeRecord {
    fn from(s: &EpisodeSummary) -> Self {
        EpisodeRecord {
            seed: s.seed,
            e_t_kwh: s.ledger.e_t_kwh,
            e_b_gross_kwh: s.ledger.e_b_gross_kwh,
            e_r_kwh: s.ledger.e_r_kwh,
            e_total_kwh: s.ledger.e_total_kwh,
            overlap_seconds: s.ledger.overlap_seconds,
            total_time_s: s.total_time_s,
        }
    }
}

/// Aggregate of one policy (or the no-action baseline) over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub config_hash: String,
    pub n_seeds: usize,
    pub e_t_kwh: Stat,
    pub e_r_kwh: Stat,
    pub e_total_kwh: Stat,
    pub overlap_seconds: Stat,
    pub total_time_s: Stat,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunReport {
    pub fn from_episodes(label: impl Into<String>, config_hash: impl Into<String>, episodes: &[EpisodeSummary]) -> Self {
        let records: Vec<EpisodeRecord> = episodes.iter().map(EpisodeRecord::from).collect();
        let col = |f: fn(&EpisodeRecord) -> f64| Stat::of(&records.iter().map(f).collect::<Vec<_>>());
        RunReport {
            label: label.into(),
            config_hash: config_hash.into(),
            n_seeds: records.len(),
            e_t_kwh: col(|r| r.e_t_kwh),
            e_r_kwh: col(|r| r.e_r_kwh),
            e_total_kwh: col(|r| r.e_total_kwh),
            overlap_seconds: col(|r| r.overlap_seconds),
            total_time_s: col(|r| r.total_time_s),
            episodes: records,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn write_episodes_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.episodes {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(base - ours) / base` in percent.
pub fn traction_reduction_pct(base: f64, ours: f64) -> f64 {
    100.0 * (base - ours) / base
}

/// `(ours - base) / base` in percent.
pub fn overlap_increase_pct(base: f64, ours: f64) -> f64 {
    100.0 * (ours - base) / base
}

/// One decimal, truncated toward zero. The guard keeps values like 12.3 that
/// land just under a decimal boundary in binary from dropping a tenth.
pub fn truncate_1dp(x: f64) -> f64 {
    let scaled = x * 10.0;
    (scaled + 1e-9 * scaled.signum()).trunc() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub baseline: RunReport,
    pub candidate: RunReport,
    pub traction_reduction_pct: f64,
    pub overlap_increase_pct: f64,
    pub total_energy_reduction_pct: f64,
}

impl ComparisonReport {
    /// Compares means; refuses reports from different configurations.
    pub fn new(baseline: RunReport, candidate: RunReport) -> Result<Self> {
        if baseline.config_hash != candidate.config_hash {
            return Err(Error::ComparisonRefused {
                baseline: baseline.config_hash,
                candidate: candidate.config_hash,
            });
        }
        Ok(ComparisonReport {
            config_hash: baseline.config_hash.clone(),
            traction_reduction_pct: traction_reduction_pct(baseline.e_t_kwh.mean, candidate.e_t_kwh.mean),
            overlap_increase_pct: overlap_increase_pct(baseline.overlap_seconds.mean, candidate.overlap_seconds.mean),
            total_energy_reduction_pct: traction_reduction_pct(baseline.e_total_kwh.mean, candidate.e_total_kwh.mean),
            baseline,
            candidate,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table with one row per report and the percentage deltas.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>22} {:>20} {:>22} {:>18} {:>18}",
            "label", "seeds", "E_T kWh", "E_R kWh", "E_total kWh", "overlap s", "total time s"
        );
        for r in [&self.baseline, &self.candidate] {
            let cell = |st: &Stat| format!("{:.1} ± {:.1}", st.mean, st.std);
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>22} {:>20} {:>22} {:>18} {:>18}",
                r.label,
                r.n_seeds,
                cell(&r.e_t_kwh),
                cell(&r.e_r_kwh),
                cell(&r.e_total_kwh),
                cell(&r.overlap_seconds),
                cell(&r.total_time_s)
            );
        }
        let _ = writeln!(
            s,
            "traction energy reduction: {:.1}% ({})",
            truncate_1dp(self.traction_reduction_pct),
            self.traction_reduction_pct
        );
        let _ = writeln!(
            s,
            "overlap time increase: {:.1}% ({})",
            truncate_1dp(self.overlap_increase_pct),
            self.overlap_increase_pct
        );
        let _ = writeln!(
            s,
            "net energy reduction: {:.1}% ({})",
            truncate_1dp(self.total_energy_reduction_pct),
            self.total_energy_reduction_pct
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_basics() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.std - (5.0_f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).std, 0.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn percent_formulas() {
        assert!((traction_reduction_pct(200.0, 150.0) - 25.0).abs() < 1e-12);
        assert!((overlap_increase_pct(200.0, 250.0) - 25.0).abs() < 1e-12);
        assert_eq!(traction_reduction_pct(5.0, 5.0), 0.0);
        assert_eq!(overlap_increase_pct(5.0, 5.0), 0.0);
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_1dp(10.959), 10.9);
        assert_eq!(truncate_1dp(47.994), 47.9);
        assert_eq!(truncate_1dp(12.3), 12.3);
        assert_eq!(truncate_1dp(-3.27), -3.2);
        assert_eq!(truncate_1dp(0.0), 0.0);
    }
}
