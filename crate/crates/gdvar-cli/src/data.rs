//! File formats: the model archive, forecast CSVs, the realized-loss CSV,
//! and score CSVs. CSV outputs carry one `#` provenance line before the
//! header; readers skip `#` lines.

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use gdvar::estimate::FittedSlotModel;
use gdvar::filter::DcsCoefficients;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Provenance block shared by JSON outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub generator: String,
    pub mode: String,
}

/// Fitted-model archive written by `fit` and consumed by `forecast`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArchive {
    pub meta: Meta,
    pub family: String,
    pub n_slots: usize,
    pub window: usize,
    /// Positivity shift of the estimation window the models were fit on.
    pub shift: f64,
    pub slots: Vec<FittedSlotModel>,
}

impl ModelArchive {
    pub fn coefficients(&self) -> Vec<DcsCoefficients> {
        self.slots.iter().map(|s| s.coeffs).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read archive {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("bad archive {}", path.display()))
    }
}

/// One parsed forecast file: per-level VaR series over its OK dates.
#[derive(Debug, Clone)]
pub struct ForecastFile {
    pub name: String,
    pub levels: Vec<f64>,
    /// date → per-level VaR, aligned with `levels`.
    pub by_date: BTreeMap<NaiveDate, Vec<f64>>,
    pub failed_dates: Vec<NaiveDate>,
}

/// Write the forecast series as `date,level,var,n_sims,seed,status` rows.
pub fn write_forecast_csv(
    path: &Path,
    meta_line: &str,
    series: &gdvar::bootstrap::VarForecastSeries,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(meta_line);
    out.push('\n');
    out.push_str("date,level,var,n_sims,seed,status\n");
    for row in &series.rows {
        match &row.vars {
            Some(vars) => {
                for (lv, var) in series.levels.iter().zip(vars) {
                    out.push_str(&format!(
                        "{},{},{},{},{},ok\n",
                        row.date, lv, var, row.n_sims, series.seed
                    ));
                }
            }
            None => {
                for lv in &series.levels {
                    out.push_str(&format!(
                        "{},{},,0,{},failed\n",
                        row.date, lv, series.seed
                    ));
                }
            }
        }
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Read a forecast CSV back into per-level series.
pub fn read_forecast_csv(path: &Path) -> Result<ForecastFile> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read forecast {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().context("forecast file is empty")?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| c.trim() == name)
            .with_context(|| format!("forecast file lacks column `{name}`"))
    };
    let (di, li, vi, si) = (idx("date")?, idx("level")?, idx("var")?, idx("status")?);

    let mut levels: Vec<f64> = Vec::new();
    let mut by_date: BTreeMap<NaiveDate, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut failed: Vec<NaiveDate> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let date = NaiveDate::parse_from_str(f[di].trim(), "%Y-%m-%d")
            .with_context(|| format!("bad date `{}`", f[di]))?;
        let level: f64 = f[li].trim().parse().context("bad level")?;
        if f[si].trim() != "ok" {
            failed.push(date);
            continue;
        }
        let var: f64 = f[vi].trim().parse().context("bad var")?;
        if !levels.iter().any(|&l| (l - level).abs() < 1e-12) {
            levels.push(level);
        }
        by_date.entry(date).or_default().insert(level.to_bits(), var);
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    failed.sort();
    failed.dedup();

    let mut aligned = BTreeMap::new();
    for (date, vals) in by_date {
        if failed.contains(&date) {
            continue;
        }
        let mut row = Vec::with_capacity(levels.len());
        for lv in &levels {
            match vals.get(&lv.to_bits()) {
                Some(&v) => row.push(v),
                None => bail!("forecast {name}: date {date} lacks level {lv}"),
            }
        }
        aligned.insert(date, row);
    }
    Ok(ForecastFile {
        name,
        levels,
        by_date: aligned,
        failed_dates: failed,
    })
}

/// Read a `date,loss` CSV of realized daily losses.
pub fn read_returns_csv(path: &Path) -> Result<BTreeMap<NaiveDate, f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read returns {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().context("returns file is empty")?;
    let cols: Vec<&str> = header.split(',').collect();
    let di = cols
        .iter()
        .position(|c| c.trim() == "date")
        .context("returns file lacks `date`")?;
    let li = cols
        .iter()
        .position(|c| c.trim() == "loss")
        .context("returns file lacks `loss`")?;
    let mut out = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let date = NaiveDate::parse_from_str(f[di].trim(), "%Y-%m-%d")
            .with_context(|| format!("bad date `{}`", f[di]))?;
        let loss: f64 = f[li].trim().parse().context("bad loss")?;
        out.insert(date, loss);
    }
    Ok(out)
}

/// Write per-slot standardized-score series (`slot,date,s_lambda,s_v`).
pub fn write_scores_csv(
    path: &Path,
    meta_line: &str,
    dates: &[NaiveDate],
    per_slot: &[Vec<(f64, f64)>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(meta_line);
    out.push('\n');
    out.push_str("slot,date,s_lambda,s_v\n");
    for (slot, series) in per_slot.iter().enumerate() {
        for (date, (sl, sv)) in dates.iter().zip(series) {
            out.push_str(&format!("{slot},{date},{sl},{sv}\n"));
        }
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Read per-slot λ-score series back (for the LM diagnostics).
pub fn read_scores_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scores {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().context("scores file is empty")?;
    let cols: Vec<&str> = header.split(',').collect();
    let si = cols
        .iter()
        .position(|c| c.trim() == "slot")
        .context("scores file lacks `slot`")?;
    let li = cols
        .iter()
        .position(|c| c.trim() == "s_lambda")
        .context("scores file lacks `s_lambda`")?;
    let mut per_slot: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let slot: usize = f[si].trim().parse().context("bad slot")?;
        let s: f64 = f[li].trim().parse().context("bad score")?;
        per_slot.entry(slot).or_default().push(s);
    }
    Ok(per_slot.into_values().collect())
}
