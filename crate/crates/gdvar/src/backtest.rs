//! VaR validation battery: unconditional and conditional coverage likelihood
//! ratios, the dynamic quantile regression test, a Lagrange-multiplier test
//! for score autocorrelation, the tick loss, and the model confidence set
//! with a moving-block bootstrap.

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::Rng;
use crate::special::chi_squared_sf;
use nalgebra::{DMatrix, DVector};

/// Minimum hit-sequence length for any coverage test.
const MIN_HITS: usize = 30;

/// Statistic plus its p-value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// VaR exceedance indicators: hit when the realized loss is above the
/// forecast.
pub fn hit_sequence(losses: &[f64], var: &[f64]) -> Result<Vec<bool>> {
    if losses.len() != var.len() {
        return Err(Error::Misaligned(format!(
            "{} losses vs {} VaR values",
            losses.len(),
            var.len()
        )));
    }
    Ok(losses.iter().zip(var).map(|(l, v)| l > v).collect())
}

fn check_hits(hits: &[bool], p: f64) -> Result<()> {
    if hits.len() < MIN_HITS {
        return Err(Error::InsufficientData(format!(
            "coverage tests need at least {MIN_HITS} observations, got {}",
            hits.len()
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "exceedance probability {p} outside (0,1)"
        )));
    }
    Ok(())
}

/// `x·ln(y)` with the 0·ln 0 = 0 convention.
#[inline]
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Kupiec unconditional-coverage likelihood ratio against χ²(1).
pub fn lr_uc(hits: &[bool], p: f64) -> Result<TestOutcome> {
    check_hits(hits, p)?;
    let n = hits.len() as f64;
    let x = hits.iter().filter(|&&h| h).count() as f64;
    let pi = x / n;
    let ln_l0 = xlny(n - x, 1.0 - p) + xlny(x, p);
    let ln_l1 = xlny(n - x, 1.0 - pi) + xlny(x, pi);
    let statistic = (2.0 * (ln_l1 - ln_l0)).max(0.0);
    Ok(TestOutcome {
        statistic,
        p_value: chi_squared_sf(statistic, 1),
    })
}

/// First-order Markov independence LR component over transition counts.
fn lr_independence(hits: &[bool]) -> f64 {
    let mut n = [[0.0f64; 2]; 2];
    for w in hits.windows(2) {
        n[w[0] as usize][w[1] as usize] += 1.0;
    }
    let n0 = n[0][0] + n[0][1];
    let n1 = n[1][0] + n[1][1];
    let ones = n[0][1] + n[1][1];
    let total = n0 + n1;
    if total == 0.0 {
        return 0.0;
    }
    let pi = ones / total;
    let ln_l0 = xlny(total - ones, 1.0 - pi) + xlny(ones, pi);
    let mut ln_l1 = 0.0;
    if n0 > 0.0 {
        let pi0 = n[0][1] / n0;
        ln_l1 += xlny(n[0][0], 1.0 - pi0) + xlny(n[0][1], pi0);
    }
    if n1 > 0.0 {
        let pi1 = n[1][1] / n1;
        ln_l1 += xlny(n[1][0], 1.0 - pi1) + xlny(n[1][1], pi1);
    }
    (2.0 * (ln_l1 - ln_l0)).max(0.0)
}

/// Christoffersen conditional coverage: LRuc + the Markov independence LR,
/// against χ²(2).
pub fn lr_cc(hits: &[bool], p: f64) -> Result<TestOutcome> {
    let uc = lr_uc(hits, p)?;
    let statistic = uc.statistic + lr_independence(hits);
    Ok(TestOutcome {
        statistic,
        p_value: chi_squared_sf(statistic, 2),
    })
}

/// Dynamic quantile test outcome; `rank_deficient` flags a collinear
/// regressor matrix (the statistic is then computed on the reduced column
/// space with matching degrees of freedom).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DqOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    pub rank_deficient: bool,
}

/// Regression-based joint test that demeaned hits are orthogonal to an
/// intercept, their own lags, and the contemporaneous VaR level.
pub fn dq_test(hits: &[bool], var: &[f64], p: f64, lags: usize) -> Result<DqOutcome> {
    check_hits(hits, p)?;
    if hits.len() != var.len() {
        return Err(Error::Misaligned(format!(
            "{} hits vs {} VaR values",
            hits.len(),
            var.len()
        )));
    }
    if lags < 1 || hits.len() <= lags + 10 {
        return Err(Error::InsufficientData(format!(
            "dq test needs more than lags + 10 observations (lags = {lags})"
        )));
    }
    let n = hits.len();
    let k = lags + 2;
    let rows = n - lags;
    let h: Vec<f64> = hits.iter().map(|&b| b as usize as f64 - p).collect();

    let mut x = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    for t in lags..n {
        let r = t - lags;
        x[(r, 0)] = 1.0;
        for l in 1..=lags {
            x[(r, l)] = h[t - l];
        }
        x[(r, k - 1)] = var[t];
        y[r] = h[t];
    }

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let (quad, rank) = projected_quadratic(&xtx, &xty)?;
    let statistic = (quad / (p * (1.0 - p))).max(0.0);
    Ok(DqOutcome {
        statistic,
        p_value: chi_squared_sf(statistic, rank),
        dof: rank,
        rank_deficient: rank < k,
    })
}

/// `b' (X'X)^+ b` with the effective rank, via a symmetric eigendecomposition
/// pseudo-inverse.
fn projected_quadratic(xtx: &DMatrix<f64>, b: &DVector<f64>) -> Result<(f64, usize)> {
    let eig = xtx.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if !(max_ev > 0.0) {
        return Err(Error::Numerical("regressor matrix is zero".into()));
    }
    let tol = max_ev * 1e-12 * xtx.nrows() as f64;
    let mut quad = 0.0;
    let mut rank = 0usize;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > tol {
            let proj = eig.eigenvectors.column(i).dot(b);
            quad += proj * proj / ev;
            rank += 1;
        }
    }
    Ok((quad, rank))
}

/// Breusch-Godfrey style autocorrelation test: regress the score on its own
/// lags; n·R² against χ²(lags). Constant series return p = 1 by convention.
pub fn lm_score_test(scores: &[f64], lags: usize) -> Result<f64> {
    if lags < 1 || scores.len() <= lags + 10 {
        return Err(Error::InsufficientData(format!(
            "lm test needs more than lags + 10 observations (lags = {lags})"
        )));
    }
    let n = scores.len();
    let rows = n - lags;
    let k = lags + 1;
    let mean = scores.iter().skip(lags).sum::<f64>() / rows as f64;
    let sst: f64 = scores
        .iter()
        .skip(lags)
        .map(|s| (s - mean) * (s - mean))
        .sum();
    // Constant series up to accumulation noise.
    if sst <= 1e-20 * rows as f64 * (1.0 + mean * mean) {
        return Ok(1.0);
    }
    let mut x = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    for t in lags..n {
        let r = t - lags;
        x[(r, 0)] = 1.0;
        for l in 1..=lags {
            x[(r, l)] = scores[t - l];
        }
        y[r] = scores[t];
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let eig = xtx.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_ev * 1e-12 * k as f64;
    let mut beta = DVector::zeros(k);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > tol {
            let v = eig.eigenvectors.column(i);
            beta += DVector::from_column_slice(v.as_slice()) * (v.dot(&xty) / ev);
        }
    }
    let resid = y - x * beta;
    let ssr = resid.dot(&resid);
    let r2 = (1.0 - ssr / sst).clamp(0.0, 1.0);
    let statistic = rows as f64 * r2;
    Ok(chi_squared_sf(statistic, lags))
}

/// Asymmetric quantile (tick) loss `(α − 1{r ≤ VaR})·(r − VaR)`; the true
/// α-quantile minimizes its expectation.
pub fn var_loss(losses: &[f64], var: &[f64], level: f64) -> Result<Vec<f64>> {
    if losses.len() != var.len() {
        return Err(Error::Misaligned(format!(
            "{} losses vs {} VaR values",
            losses.len(),
            var.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level {level} outside (0,1)")));
    }
    Ok(losses
        .iter()
        .zip(var)
        .map(|(&r, &v)| {
            let ind = if r <= v { 1.0 } else { 0.0 };
            (level - ind) * (r - v)
        })
        .collect())
}

/// Statistic family for the model confidence set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum McsStatistic {
    /// Max studentized pairwise loss differential.
    Range,
    /// Sum of squared studentized pairwise differentials.
    SemiQuadratic,
}

/// Model-confidence-set options.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McsOptions {
    /// Elimination level; the survivors form the (1 − level) confidence set.
    pub level: f64,
    /// Moving-block length; defaults to ⌈n^{1/3}⌉ when None.
    pub block_len: Option<usize>,
    pub n_boot: usize,
    pub seed: u64,
    pub statistic: McsStatistic,
}

impl Default for McsOptions {
    fn default() -> Self {
        McsOptions {
            level: 0.15,
            block_len: None,
            n_boot: 5000,
            seed: 0,
            statistic: McsStatistic::Range,
        }
    }
}

/// Model-confidence-set result, indices refer to loss-matrix columns.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct McsResult {
    /// 1-based rank per model: survivors first (by average loss), then the
    /// eliminated models in reverse elimination order.
    pub ranks: Vec<usize>,
    /// Surviving model indices, best average loss first.
    pub survivors: Vec<usize>,
    /// Monotonized MCS p-value per model.
    pub p_values: Vec<f64>,
    /// Elimination order (first eliminated first).
    pub eliminated: Vec<usize>,
}

/// Iterative-elimination MCS over column loss series (`losses[j]` is model
/// j's per-day loss).
///
/// At each step the pairwise average loss differentials are studentized with
/// a moving-block bootstrap variance, the equal-predictive-ability null is
/// tested with the chosen statistic, and the worst model is eliminated while
/// the null is rejected at `level`. Bootstrap draws at each step depend only
/// on `(seed, step)`, so lowering the level never shrinks the survivor set.
pub fn mcs(losses: &[Vec<f64>], opts: &McsOptions) -> Result<McsResult> {
    let m = losses.len();
    if m < 2 {
        return Err(Error::InsufficientData("mcs needs at least 2 models".into()));
    }
    let n = losses[0].len();
    if n < 50 {
        return Err(Error::InsufficientData(format!(
            "mcs needs at least 50 observations, got {n}"
        )));
    }
    if losses.iter().any(|col| col.len() != n) {
        return Err(Error::Misaligned("loss columns differ in length".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Domain("mcs level outside (0,1)".into()));
    }
    if opts.n_boot < 100 {
        return Err(Error::Domain("mcs needs at least 100 bootstrap draws".into()));
    }
    let block_len = opts
        .block_len
        .unwrap_or_else(|| (n as f64).powf(1.0 / 3.0).ceil() as usize)
        .clamp(1, n);

    let mut active: Vec<usize> = (0..m).collect();
    let mut eliminated = Vec::new();
    let mut p_values = vec![1.0f64; m];
    let mut running_max_p = 0.0f64;
    let mut step = 0u64;

    loop {
        if active.len() == 1 {
            p_values[active[0]] = 1.0f64.max(running_max_p);
            break;
        }
        let means: Vec<f64> = active
            .iter()
            .map(|&j| losses[j].iter().sum::<f64>() / n as f64)
            .collect();
        // One index resample per draw, shared by every model column.
        let boot_means: Vec<Vec<f64>> = exec::map_indexed(opts.n_boot, |r| {
            let mut rng = Rng::substream(
                crate::rng::derive_seed(opts.seed, 0x4D43_5300_0000_0000 | step),
                r as u64,
            );
            let idx = moving_block_indices(n, block_len, &mut rng);
            active
                .iter()
                .map(|&j| idx.iter().map(|&t| losses[j][t]).sum::<f64>() / n as f64)
                .collect()
        });

        let a = active.len();
        let mut tstat = vec![0.0f64; a * a];
        let mut var_ij = vec![0.0f64; a * a];
        for i in 0..a {
            for j in 0..a {
                if i == j {
                    continue;
                }
                let d = means[i] - means[j];
                let mut v = 0.0;
                for bm in &boot_means {
                    let bd = bm[i] - bm[j];
                    v += (bd - d) * (bd - d);
                }
                v /= opts.n_boot as f64;
                var_ij[i * a + j] = v;
                tstat[i * a + j] = if v > 0.0 { d / v.sqrt() } else { 0.0 };
            }
        }
        let observed = match opts.statistic {
            McsStatistic::Range => tstat.iter().cloned().fold(0.0f64, |acc, t| acc.max(t.abs())),
            McsStatistic::SemiQuadratic => tstat.iter().map(|t| t * t).sum::<f64>() / 2.0,
        };

        let mut exceed = 0usize;
        for bm in &boot_means {
            let mut stat = 0.0f64;
            for i in 0..a {
                for j in 0..a {
                    if i == j {
                        continue;
                    }
                    let v = var_ij[i * a + j];
                    if v > 0.0 {
                        let t = ((bm[i] - bm[j]) - (means[i] - means[j])) / v.sqrt();
                        match opts.statistic {
                            McsStatistic::Range => stat = stat.max(t.abs()),
                            McsStatistic::SemiQuadratic => stat += t * t / 2.0,
                        }
                    }
                }
            }
            if stat >= observed {
                exceed += 1;
            }
        }
        let p = exceed as f64 / opts.n_boot as f64;
        let p_mono = p.max(running_max_p);

        if p < opts.level {
            // Eliminate the model with the largest studentized
            // underperformance against any rival.
            let worst = (0..a)
                .max_by(|&i, &j| {
                    let ti = (0..a).map(|k| tstat[i * a + k]).fold(f64::MIN, f64::max);
                    let tj = (0..a).map(|k| tstat[j * a + k]).fold(f64::MIN, f64::max);
                    ti.partial_cmp(&tj).unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty active set");
            let model = active.remove(worst);
            p_values[model] = p_mono;
            running_max_p = p_mono;
            eliminated.push(model);
            step += 1;
        } else {
            for &j in &active {
                p_values[j] = p_mono;
            }
            break;
        }
    }

    let mut survivors = active.clone();
    survivors.sort_by(|&i, &j| {
        let mi = losses[i].iter().sum::<f64>();
        let mj = losses[j].iter().sum::<f64>();
        mi.partial_cmp(&mj).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![0usize; m];
    for (r, &j) in survivors.iter().enumerate() {
        ranks[j] = r + 1;
    }
    for (back, &j) in eliminated.iter().rev().enumerate() {
        ranks[j] = survivors.len() + back + 1;
    }
    Ok(McsResult {
        ranks,
        survivors,
        p_values,
        eliminated,
    })
}

/// Moving-block bootstrap index vector of length n.
fn moving_block_indices(n: usize, block_len: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n);
    while idx.len() < n {
        let start = rng.next_below(n - block_len + 1);
        for k in 0..block_len {
            if idx.len() == n {
                break;
            }
            idx.push(start + k);
        }
    }
    idx
}

/// One model's VaR forecast columns, aligned with the realized loss series.
#[derive(Debug, Clone)]
pub struct ModelForecasts {
    pub name: String,
    /// (confidence level, per-day VaR), one entry per level.
    pub var_by_level: Vec<(f64, Vec<f64>)>,
}

/// One (model, level) line of the backtest report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ReportRow {
    pub model: String,
    pub level: f64,
    pub n_obs: usize,
    pub n_hits: usize,
    pub lr_uc: TestOutcome,
    pub lr_cc: TestOutcome,
    pub dq: DqOutcome,
    pub mcs_rank: Option<usize>,
    pub mcs_p_value: Option<f64>,
}

/// Full backtest report across models and levels.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct BacktestReport {
    pub rows: Vec<ReportRow>,
    /// Per-model, per-slot LM p-values for score autocorrelation, filled by
    /// the caller when score series are available.
    pub lm_by_slot: std::collections::BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
}

impl BacktestReport {
    /// CSV rendering of the per-(model, level) rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,alpha,lruc_stat,lruc_p,lrcc_stat,lrcc_p,dq_stat,dq_p,dq_dof,n_obs,n_hits,mcs_rank,mcs_p\n",
        );
        for r in &self.rows {
            let rank = r.mcs_rank.map(|v| v.to_string()).unwrap_or_default();
            let mp = r.mcs_p_value.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.model,
                r.level,
                r.lr_uc.statistic,
                r.lr_uc.p_value,
                r.lr_cc.statistic,
                r.lr_cc.p_value,
                r.dq.statistic,
                r.dq.p_value,
                r.dq.dof,
                r.n_obs,
                r.n_hits,
                rank,
                mp
            ));
        }
        out
    }
}

/// Run the coverage battery for every model and level, plus the per-level
/// model confidence set over tick losses when at least two models are
/// present.
pub fn run_backtests(
    losses: &[f64],
    models: &[ModelForecasts],
    levels: &[f64],
    dq_lags: usize,
    mcs_opts: &McsOptions,
) -> Result<BacktestReport> {
    if models.is_empty() {
        return Err(Error::InsufficientData("no models to backtest".into()));
    }
    for m in models {
        for (lv, series) in &m.var_by_level {
            if series.len() != losses.len() {
                return Err(Error::Misaligned(format!(
                    "model {} level {lv}: {} forecasts vs {} losses",
                    m.name,
                    series.len(),
                    losses.len()
                )));
            }
        }
    }
    let mut report = BacktestReport::default();
    if models.len() < 2 {
        report
            .notes
            .push("mcs skipped: needs at least 2 models".into());
    }

    for &level in levels {
        let p = 1.0 - level;
        // MCS over tick losses at this level.
        let mut mcs_by_model: Vec<Option<(usize, f64)>> = vec![None; models.len()];
        if models.len() >= 2 {
            let mut cols = Vec::with_capacity(models.len());
            for m in models {
                let series = m
                    .var_by_level
                    .iter()
                    .find(|(lv, _)| (lv - level).abs() < 1e-9)
                    .map(|(_, s)| s)
                    .ok_or_else(|| {
                        Error::Misaligned(format!("model {} lacks level {level}", m.name))
                    })?;
                cols.push(var_loss(losses, series, level)?);
            }
            match mcs(&cols, mcs_opts) {
                Ok(res) => {
                    for (j, slot) in mcs_by_model.iter_mut().enumerate() {
                        *slot = Some((res.ranks[j], res.p_values[j]));
                    }
                }
                Err(e) => report.notes.push(format!("mcs failed at level {level}: {e}")),
            }
        }
        for (j, m) in models.iter().enumerate() {
            let series = m
                .var_by_level
                .iter()
                .find(|(lv, _)| (lv - level).abs() < 1e-9)
                .map(|(_, s)| s)
                .ok_or_else(|| {
                    Error::Misaligned(format!("model {} lacks level {level}", m.name))
                })?;
            let hits = hit_sequence(losses, series)?;
            let n_hits = hits.iter().filter(|&&h| h).count();
            report.rows.push(ReportRow {
                model: m.name.clone(),
                level,
                n_obs: hits.len(),
                n_hits,
                lr_uc: lr_uc(&hits, p)?,
                lr_cc: lr_cc(&hits, p)?,
                dq: dq_test(&hits, series, p, dq_lags)?,
                mcs_rank: mcs_by_model[j].map(|(r, _)| r),
                mcs_p_value: mcs_by_model[j].map(|(_, pv)| pv),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bernoulli_hits(n: usize, p: f64, seed: u64) -> Vec<bool> {
        let mut rng = Rng::from_seed(seed);
        (0..n).map(|_| rng.next_open01() < p).collect()
    }

    #[test]
    fn perfect_coverage_gives_zero_statistic() {
        // n=200, p=0.05, x=10: empirical rate equals nominal.
        let mut hits = vec![false; 200];
        for i in 0..10 {
            hits[i * 20] = true;
        }
        let out = lr_uc(&hits, 0.05).unwrap();
        assert_relative_eq!(out.statistic, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_hits_hand_value() {
        // x=0, n=250, p=0.05: LR = −2·250·ln(0.95) ≈ 25.65.
        let hits = vec![false; 250];
        let out = lr_uc(&hits, 0.05).unwrap();
        let expect = -2.0 * 250.0 * (0.95f64).ln();
        assert_relative_eq!(out.statistic, expect, epsilon = 1e-10);
        assert!((out.p_value - 4.1e-7).abs() < 1e-7, "p = {}", out.p_value);
    }

    #[test]
    fn lr_uc_matches_direct_formula_on_random_sequences() {
        for seed in 0..20 {
            let hits = bernoulli_hits(250, 0.08, seed);
            let n = 250.0;
            let x = hits.iter().filter(|&&h| h).count() as f64;
            if x == 0.0 || x == n {
                continue;
            }
            let p = 0.05f64;
            let pi = x / n;
            let oracle = -2.0
                * ((n - x) * (1.0 - p).ln() + x * p.ln()
                    - (n - x) * (1.0 - pi).ln()
                    - x * pi.ln());
            let out = lr_uc(&hits, p).unwrap();
            assert_relative_eq!(out.statistic, oracle, epsilon = 1e-8);
        }
    }

    #[test]
    fn alternating_hits_have_large_independence_component() {
        let hits: Vec<bool> = (0..200).map(|i| i % 2 == 1).collect();
        let uc = lr_uc(&hits, 0.5).unwrap();
        let cc = lr_cc(&hits, 0.5).unwrap();
        // Perfect negative dependence: n00 = n11 = 0, n01 = 100, n10 = 99,
        // so the Markov likelihood is 1 and LRind = −2·ln L0 with
        // π = 100/199.
        let pi: f64 = 100.0 / 199.0;
        let expect_ind = -2.0 * (99.0 * (1.0 - pi).ln() + 100.0 * pi.ln());
        assert_relative_eq!(cc.statistic - uc.statistic, expect_ind, epsilon = 1e-8);
        assert!(cc.p_value < 1e-12);
    }

    #[test]
    fn lrcc_never_below_lruc() {
        for seed in 0..30 {
            let hits = bernoulli_hits(120, 0.1, seed);
            if hits.iter().filter(|&&h| h).count() == 0 {
                continue;
            }
            let uc = lr_uc(&hits, 0.05).unwrap();
            let cc = lr_cc(&hits, 0.05).unwrap();
            assert!(cc.statistic >= uc.statistic - 1e-12);
            assert!(uc.statistic >= 0.0 && cc.statistic >= 0.0);
            assert!((0.0..=1.0).contains(&uc.p_value));
            assert!((0.0..=1.0).contains(&cc.p_value));
        }
    }

    #[test]
    fn dq_statistic_matches_normal_equations_oracle() {
        // Full-rank random design; compare against an explicit
        // Gauss-elimination solve of the normal equations.
        let mut rng = Rng::from_seed(99);
        let n = 400;
        let hits: Vec<bool> = (0..n).map(|_| rng.next_open01() < 0.07).collect();
        let var: Vec<f64> = (0..n).map(|_| 1.5 + rng.next_open01()).collect();
        let p = 0.07;
        let lags = 4;
        let out = dq_test(&hits, &var, p, lags).unwrap();
        assert!(!out.rank_deficient);
        assert_eq!(out.dof, lags + 2);

        let h: Vec<f64> = hits.iter().map(|&b| b as usize as f64 - p).collect();
        let k = lags + 2;
        let mut xtx = vec![vec![0.0f64; k]; k];
        let mut xty = vec![0.0f64; k];
        for t in lags..n {
            let mut row = Vec::with_capacity(k);
            row.push(1.0);
            for l in 1..=lags {
                row.push(h[t - l]);
            }
            row.push(var[t]);
            for i in 0..k {
                xty[i] += row[i] * h[t];
                for j in 0..k {
                    xtx[i][j] += row[i] * row[j];
                }
            }
        }
        let z = solve_gauss(xtx, xty.clone());
        let quad: f64 = z.iter().zip(&xty).map(|(a, b)| a * b).sum();
        let oracle = quad / (p * (1.0 - p));
        assert!(
            (out.statistic - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "{} vs {oracle}",
            out.statistic
        );
    }

    fn solve_gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let d = a[col][col];
            for r in (col + 1)..n {
                let f = a[r][col] / d;
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in (r + 1)..n {
                acc -= a[r][c] * x[c];
            }
            x[r] = acc / a[r][r];
        }
        x
    }

    #[test]
    fn dq_constant_var_reduces_rank_and_dof() {
        // Constant VaR is collinear with the intercept; the statistic then
        // lives on a rank-(lags+1) space and the dof must follow.
        let hits = bernoulli_hits(300, 0.05, 4);
        let var = vec![2.0; 300];
        let out = dq_test(&hits, &var, 0.05, 4).unwrap();
        assert!(out.rank_deficient);
        assert_eq!(out.dof, 5);
    }

    #[test]
    fn lm_constant_series_returns_one() {
        let scores = vec![1.23; 100];
        assert_eq!(lm_score_test(&scores, 5).unwrap(), 1.0);
    }

    #[test]
    fn lm_detects_ar1_scores() {
        let mut rng = Rng::from_seed(8);
        let n = 1000;
        let mut s = vec![0.0f64; n];
        for t in 1..n {
            s[t] = 0.5 * s[t - 1] + (rng.next_open01() - 0.5);
        }
        let p = lm_score_test(&s, 5).unwrap();
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn tick_loss_hand_values() {
        let r = [1.0, 2.0, 3.0];
        // Loss is zero when the forecast equals the realization.
        let loss = var_loss(&r, &r, 0.9).unwrap();
        assert!(loss.iter().all(|&l| l == 0.0));
        // At α = 0.5 the loss is |r − v|/2.
        let v = [0.5, 2.5, 2.0];
        let loss = var_loss(&r, &v, 0.5).unwrap();
        for ((&ri, &vi), &li) in r.iter().zip(&v).zip(&loss) {
            assert_relative_eq!(li, (ri - vi).abs() / 2.0, epsilon = 1e-12);
        }
        assert!(var_loss(&r, &v[..2], 0.5).is_err());
    }

    #[test]
    fn empirical_quantile_minimizes_average_tick_loss() {
        let mut rng = Rng::from_seed(77);
        let sample: Vec<f64> = (0..400).map(|_| rng.next_open01().powi(2) * 10.0).collect();
        let level = 0.9;
        let mut sorted = sample.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = crate::bootstrap::empirical_quantile(&sorted, level);
        let avg_loss = |v: f64| {
            var_loss(&sample, &vec![v; sample.len()], level)
                .unwrap()
                .iter()
                .sum::<f64>()
                / sample.len() as f64
        };
        let at_q = avg_loss(q);
        for i in 0..100 {
            let v = i as f64 * 0.1;
            assert!(avg_loss(v) + 1e-9 >= at_q, "beaten at {v}");
        }
    }

    #[test]
    fn mcs_identical_losses_keep_everyone_with_p_one() {
        let col: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let losses = vec![col.clone(), col.clone(), col];
        let out = mcs(&losses, &McsOptions { n_boot: 500, ..Default::default() }).unwrap();
        assert_eq!(out.survivors.len(), 3);
        assert!(out.p_values.iter().all(|&p| p == 1.0));
        assert!(out.eliminated.is_empty());
    }

    #[test]
    fn mcs_eliminates_dominated_model_first() {
        let mut rng = Rng::from_seed(2);
        let n = 500;
        let base: Vec<f64> = (0..n).map(|_| rng.next_open01()).collect();
        let a: Vec<f64> = base.iter().map(|&v| v + 0.02 * (rng.next_open01() - 0.5)).collect();
        let b: Vec<f64> = base.iter().map(|&v| v + 0.02 * (rng.next_open01() - 0.5)).collect();
        let dominated: Vec<f64> = base.iter().map(|&v| v + 1.0).collect();
        let out = mcs(
            &[a, dominated, b],
            &McsOptions { n_boot: 500, seed: 5, ..Default::default() },
        )
        .unwrap();
        assert_eq!(out.eliminated.first(), Some(&1));
        assert_eq!(out.ranks[1], 3);
    }

    #[test]
    fn mcs_two_models_match_bootstrap_t_test_oracle() {
        let mut rng = Rng::from_seed(31);
        let n = 300;
        let a: Vec<f64> = (0..n).map(|_| rng.next_open01()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.next_open01() + 0.05).collect();
        let opts = McsOptions { n_boot: 2000, seed: 9, ..Default::default() };
        let _ = mcs(&[a.clone(), b.clone()], &opts).unwrap();

        // Oracle: block-bootstrap t statistic for the mean differential,
        // using its own independent draws; the internal studentization must
        // agree within Monte Carlo error.
        let d_mean = a.iter().sum::<f64>() / n as f64 - b.iter().sum::<f64>() / n as f64;
        let block = (n as f64).powf(1.0 / 3.0).ceil() as usize;
        let mut rng2 = Rng::from_seed(1234);
        let mut var = 0.0;
        let reps = 2000;
        for _ in 0..reps {
            let idx = super::moving_block_indices(n, block, &mut rng2);
            let da: f64 = idx.iter().map(|&t| a[t]).sum::<f64>() / n as f64;
            let db: f64 = idx.iter().map(|&t| b[t]).sum::<f64>() / n as f64;
            let d = da - db;
            var += (d - d_mean) * (d - d_mean);
        }
        var /= reps as f64;
        let t_oracle = d_mean / var.sqrt();

        let means = [
            a.iter().sum::<f64>() / n as f64,
            b.iter().sum::<f64>() / n as f64,
        ];
        let mut v_int = 0.0;
        for r in 0..opts.n_boot {
            let mut rng3 = Rng::substream(
                crate::rng::derive_seed(opts.seed, 0x4D43_5300_0000_0000),
                r as u64,
            );
            let idx = super::moving_block_indices(n, block, &mut rng3);
            let da: f64 = idx.iter().map(|&t| a[t]).sum::<f64>() / n as f64;
            let db: f64 = idx.iter().map(|&t| b[t]).sum::<f64>() / n as f64;
            let d = da - db;
            v_int += (d - (means[0] - means[1])) * (d - (means[0] - means[1]));
        }
        v_int /= opts.n_boot as f64;
        let t_internal = d_mean / v_int.sqrt();
        assert!(
            (t_internal - t_oracle).abs() < 0.15 * t_oracle.abs().max(1.0),
            "{t_internal} vs {t_oracle}"
        );
    }

    #[test]
    fn mcs_survivor_set_grows_as_level_drops() {
        let mut rng = Rng::from_seed(6);
        let n = 300;
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| {
                (0..n)
                    .map(|_| rng.next_open01() + 0.03 * j as f64)
                    .collect()
            })
            .collect();
        let mut prev: Option<usize> = None;
        for &level in &[0.5, 0.25, 0.15, 0.05, 0.01] {
            let out = mcs(
                &cols,
                &McsOptions { level, n_boot: 400, seed: 3, ..Default::default() },
            )
            .unwrap();
            if let Some(p) = prev {
                assert!(
                    out.survivors.len() >= p,
                    "survivors shrank from {p} to {} at level {level}",
                    out.survivors.len()
                );
            }
            prev = Some(out.survivors.len());
        }
    }

    #[test]
    fn mcs_is_deterministic_for_fixed_seed() {
        let mut rng = Rng::from_seed(15);
        let n = 200;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..n).map(|_| rng.next_open01() * (1.0 + j as f64 * 0.1)).collect())
            .collect();
        let opts = McsOptions { n_boot: 300, seed: 42, ..Default::default() };
        let a = mcs(&cols, &opts).unwrap();
        let b = mcs(&cols, &opts).unwrap();
        assert_eq!(a.ranks, b.ranks);
        assert_eq!(a.p_values, b.p_values);
    }
}
