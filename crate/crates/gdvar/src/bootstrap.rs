//! Quantile-grid bootstrap for daily VaR: discretize each slot's conditional
//! distribution into M equal-probability cells, simulate B daily returns by
//! summing per-slot cell midpoints, and read VaR off the simulated
//! distribution. A rolling-window driver repeats the scheme across days.

use crate::dist::{self, FamilyKind, GdParams};
use crate::error::{Error, Result};
use crate::estimate::{fit_mle, FitOptions, FittedSlotModel};
use crate::exec;
use crate::filter::{run_filter, DcsCoefficients};
use crate::preprocess::{IntradayReturnPanel, SeasonalProfile};
use crate::rng::Rng;
use chrono::NaiveDate;

/// One slot's conditional distribution for the forecast day.
#[derive(Debug, Clone, Copy)]
pub struct SlotDistribution {
    pub kind: FamilyKind,
    pub params: GdParams,
}

/// Equal-probability discretization of one slot distribution.
///
/// Edges are the quantiles at j/M for j = 1..M−1, with edge 0 at the support
/// boundary and the top edge capped at quantile(1 − 1/(2M)) since the exact
/// construction would put it at +∞.
#[derive(Debug, Clone)]
pub struct SlotGrid {
    pub edges: Vec<f64>,
    pub midpoints: Vec<f64>,
}

impl SlotGrid {
    pub fn cells(&self) -> usize {
        self.midpoints.len()
    }

    /// Cell index for a drawn value, by binary search over the edges.
    /// Values below the first or above the last edge map to the end cells.
    pub fn locate(&self, value: f64) -> usize {
        let m = self.cells();
        // First edge strictly greater than `value`, minus one.
        let pos = self.edges.partition_point(|&e| e <= value);
        if pos == 0 {
            0
        } else {
            (pos - 1).min(m - 1)
        }
    }
}

/// Build the M-cell quantile grid for one slot.
pub fn build_grid(kind: FamilyKind, params: &GdParams, m: usize) -> Result<SlotGrid> {
    if m < 2 {
        return Err(Error::Domain(format!("grid needs at least 2 cells, got {m}")));
    }
    let mut edges = Vec::with_capacity(m + 1);
    edges.push(0.0);
    for j in 1..m {
        edges.push(dist::quantile(kind, params, j as f64 / m as f64)?);
    }
    edges.push(dist::quantile(kind, params, 1.0 - 1.0 / (2.0 * m as f64))?);
    for pair in edges.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::Numerical(
                "grid edges are not strictly increasing".into(),
            ));
        }
    }
    let midpoints = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    Ok(SlotGrid { edges, midpoints })
}

/// Simulate B daily sums from the midpoint grids: per iteration draw one
/// uniform per slot, invert it through the slot's quantile function, locate
/// the cell, and add up the cell midpoints. Deterministic per seed and
/// independent of scheduling (one RNG sub-stream per iteration).
pub fn simulate_daily_distribution(
    slots: &[SlotDistribution],
    grids: &[SlotGrid],
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if b < 1 {
        return Err(Error::Domain("bootstrap needs at least 1 iteration".into()));
    }
    if slots.len() != grids.len() || slots.is_empty() {
        return Err(Error::Misaligned(format!(
            "{} slot distributions vs {} grids",
            slots.len(),
            grids.len()
        )));
    }
    let m = grids[0].cells();
    if grids.iter().any(|g| g.cells() != m) {
        return Err(Error::Misaligned("all grids must share the cell count".into()));
    }
    for s in slots {
        s.params.validate()?;
    }
    exec::try_map_indexed(b, |iter| {
        let mut rng = Rng::substream(seed, iter as u64);
        let mut sum = 0.0;
        for (slot, grid) in slots.iter().zip(grids) {
            let x = dist::quantile(slot.kind, &slot.params, rng.next_open01())?;
            sum += grid.midpoints[grid.locate(x)];
        }
        Ok(sum)
    })
}

/// Undiscretized variant: sums the raw inverse-transform draws.
pub fn simulate_daily_distribution_continuous(
    slots: &[SlotDistribution],
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if b < 1 {
        return Err(Error::Domain("bootstrap needs at least 1 iteration".into()));
    }
    if slots.is_empty() {
        return Err(Error::Misaligned("need at least one slot".into()));
    }
    for s in slots {
        s.params.validate()?;
    }
    exec::try_map_indexed(b, |iter| {
        let mut rng = Rng::substream(seed, iter as u64);
        let mut sum = 0.0;
        for slot in slots {
            sum += dist::quantile(slot.kind, &slot.params, rng.next_open01())?;
        }
        Ok(sum)
    })
}

/// Linear-interpolation empirical quantile (the common "type 7" rule) on an
/// already sorted sample.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Bootstrap tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForecastSettings {
    /// M, the number of grid cells.
    pub grid_cells: usize,
    /// B, the number of bootstrap iterations.
    pub bootstrap_iters: usize,
    /// Midpoint discretization on (the default) or raw draws off.
    pub discretize: bool,
    /// Keep the simulated daily sums on the forecast.
    pub retain_simulations: bool,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings {
            grid_cells: 100,
            bootstrap_iters: 1000,
            discretize: true,
            retain_simulations: false,
        }
    }
}

/// VaR forecasts for one day, on the original (negated-loss) scale.
#[derive(Debug, Clone)]
pub struct DailyVarForecast {
    pub date: Option<NaiveDate>,
    /// (confidence level, VaR) in the caller's level order.
    pub var_by_level: Vec<(f64, f64)>,
    pub n_sims: usize,
    pub simulated_daily_returns: Option<Vec<f64>>,
}

/// Forecast daily VaR from the N slot distributions of one day. Each slot
/// value carries the panel shift once, so the simulated quantile is mapped
/// back by subtracting `N·shift`.
pub fn forecast_var(
    slots: &[SlotDistribution],
    levels: &[f64],
    shift: f64,
    settings: &ForecastSettings,
    seed: u64,
) -> Result<DailyVarForecast> {
    if levels.is_empty() {
        return Err(Error::Domain("need at least one confidence level".into()));
    }
    for &lv in levels {
        if !(lv > 0.0 && lv < 1.0) {
            return Err(Error::Domain(format!("level {lv} outside (0,1)")));
        }
    }
    let sums = if settings.discretize {
        let grids = slots
            .iter()
            .map(|s| build_grid(s.kind, &s.params, settings.grid_cells))
            .collect::<Result<Vec<_>>>()?;
        simulate_daily_distribution(slots, &grids, settings.bootstrap_iters, seed)?
    } else {
        simulate_daily_distribution_continuous(slots, settings.bootstrap_iters, seed)?
    };
    let mut sorted = sums.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let back = slots.len() as f64 * shift;
    let var_by_level = levels
        .iter()
        .map(|&lv| (lv, empirical_quantile(&sorted, lv) - back))
        .collect();
    Ok(DailyVarForecast {
        date: None,
        var_by_level,
        n_sims: settings.bootstrap_iters,
        simulated_daily_returns: settings.retain_simulations.then_some(sums),
    })
}

/// Rolling-window configuration.
#[derive(Debug, Clone)]
pub struct RollingConfig {
    pub kind: FamilyKind,
    /// s, the estimation window length in days.
    pub window: usize,
    /// n, the number of one-step-ahead forecasts.
    pub horizon: usize,
    pub levels: Vec<f64>,
    pub settings: ForecastSettings,
    /// Re-estimate the slot models every this many forecast days.
    pub refit_every: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

/// One dated forecast row; failed days carry the error instead of values.
#[derive(Debug, Clone)]
pub struct ForecastRow {
    pub date: NaiveDate,
    /// VaR per level, aligned with the series' `levels`; None when failed.
    pub vars: Option<Vec<f64>>,
    pub error: Option<String>,
    pub n_sims: usize,
}

/// Dated VaR series plus reproducibility metadata.
#[derive(Debug, Clone)]
pub struct VarForecastSeries {
    pub levels: Vec<f64>,
    pub rows: Vec<ForecastRow>,
    pub seed: u64,
    pub generator: &'static str,
    /// Fitted slot models at each refit point (forecast index, per-slot).
    pub refits: Vec<(usize, Vec<FittedSlotModel>)>,
}

/// Roll an estimation window of `window` days across the panel, refitting
/// every `refit_every` forecast days, advancing each slot filter one step
/// past the window, and bootstrapping the day's VaR.
///
/// The positivity shift is recomputed from the current window at every refit
/// point so the fitted coefficients and the transformed data stay
/// consistent, and no future observation leaks into the transform.
pub fn rolling_forecast(
    panel: &IntradayReturnPanel,
    seasonal: &SeasonalProfile,
    config: &RollingConfig,
) -> Result<VarForecastSeries> {
    validate_rolling(panel, config)?;
    let s = config.window;
    let mut rows = Vec::with_capacity(config.horizon);
    let mut refits = Vec::new();
    let mut current: Option<(f64, Vec<DcsCoefficients>)> = None;

    for k in 0..config.horizon {
        let day = s + k;
        if k % config.refit_every.max(1) == 0 {
            match fit_window(panel, seasonal, config, day) {
                Ok((shift_w, models)) => {
                    let coeffs = models.iter().map(|m| m.coeffs).collect();
                    refits.push((k, models));
                    current = Some((shift_w, coeffs));
                }
                Err(e) => {
                    // Failed refit fails this day's forecast; the stale model
                    // (if any) keeps serving until the next refit point.
                    rows.push(failed_row(panel.dates[day], &e));
                    continue;
                }
            }
        }
        let Some((shift_w, coeffs)) = current.as_ref() else {
            rows.push(failed_row(
                panel.dates[day],
                &Error::Estimation("no fitted model available".into()),
            ));
            continue;
        };
        match forecast_one_day(panel, seasonal, config, day, *shift_w, coeffs) {
            Ok(forecast) => rows.push(ForecastRow {
                date: panel.dates[day],
                vars: Some(forecast.var_by_level.iter().map(|&(_, v)| v).collect()),
                error: None,
                n_sims: forecast.n_sims,
            }),
            Err(e) => rows.push(failed_row(panel.dates[day], &e)),
        }
    }

    Ok(VarForecastSeries {
        levels: config.levels.clone(),
        rows,
        seed: config.seed,
        generator: crate::rng::GENERATOR_ID,
        refits,
    })
}

/// Rolling forecasts with frozen per-slot coefficients and a frozen shift:
/// no re-estimation, only the daily filter advance and bootstrap. Used when
/// forecasting from an existing model archive and by consistency tests.
pub fn rolling_forecast_frozen(
    panel: &IntradayReturnPanel,
    seasonal: &SeasonalProfile,
    config: &RollingConfig,
    coeffs: &[DcsCoefficients],
    shift: f64,
) -> Result<VarForecastSeries> {
    validate_rolling(panel, config)?;
    if coeffs.len() != panel.n_slots {
        return Err(Error::Misaligned(format!(
            "{} coefficient sets for {} slots",
            coeffs.len(),
            panel.n_slots
        )));
    }
    let s = config.window;
    let mut rows = Vec::with_capacity(config.horizon);
    for k in 0..config.horizon {
        let day = s + k;
        match forecast_one_day(panel, seasonal, config, day, shift, coeffs) {
            Ok(forecast) => rows.push(ForecastRow {
                date: panel.dates[day],
                vars: Some(forecast.var_by_level.iter().map(|&(_, v)| v).collect()),
                error: None,
                n_sims: forecast.n_sims,
            }),
            Err(e) => rows.push(failed_row(panel.dates[day], &e)),
        }
    }
    Ok(VarForecastSeries {
        levels: config.levels.clone(),
        rows,
        seed: config.seed,
        generator: crate::rng::GENERATOR_ID,
        refits: Vec::new(),
    })
}

fn validate_rolling(panel: &IntradayReturnPanel, config: &RollingConfig) -> Result<()> {
    if config.window < 50 {
        return Err(Error::Domain("window must be at least 50 days".into()));
    }
    if config.horizon < 1 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    if panel.n_days() < config.window + config.horizon {
        return Err(Error::InsufficientData(format!(
            "panel has {} days; window {} + horizon {} required",
            panel.n_days(),
            config.window,
            config.horizon
        )));
    }
    for &lv in &config.levels {
        if !(lv > 0.0 && lv < 1.0) {
            return Err(Error::Domain(format!("level {lv} outside (0,1)")));
        }
    }
    Ok(())
}

fn failed_row(date: NaiveDate, e: &Error) -> ForecastRow {
    ForecastRow {
        date,
        vars: None,
        error: Some(e.to_string()),
        n_sims: 0,
    }
}

/// Window shift plus per-slot fits for the window ending the day before
/// `day`. Slot fits run in parallel.
pub fn fit_window(
    panel: &IntradayReturnPanel,
    seasonal: &SeasonalProfile,
    config: &RollingConfig,
    day: usize,
) -> Result<(f64, Vec<FittedSlotModel>)> {
    let s = config.window;
    let start = day - s;
    let mut min = f64::INFINITY;
    for d in start..day {
        for &v in panel.negated_row(d) {
            min = min.min(v);
        }
    }
    let shift_w = if min < 0.0 { -min } else { 0.0 };
    let seasonal_w: Vec<f64> = (start..day)
        .map(|d| seasonal.q_for_date(panel.dates[d]))
        .collect();
    let models = exec::try_map_indexed(panel.n_slots, |slot| {
        let series: Vec<f64> = (start..day)
            .map(|d| (panel.negated()[d * panel.n_slots + slot] + shift_w).max(0.0))
            .collect();
        let options = FitOptions {
            seed: crate::rng::derive_seed(config.seed, ((day as u64) << 8) | slot as u64),
            ..config.fit
        };
        fit_mle(config.kind, &series, &seasonal_w, &options)
    })?;
    Ok((shift_w, models))
}

/// Filter each slot over the trailing window, take the one-step-ahead state
/// for `day`, and bootstrap the day's VaR.
fn forecast_one_day(
    panel: &IntradayReturnPanel,
    seasonal: &SeasonalProfile,
    config: &RollingConfig,
    day: usize,
    shift: f64,
    coeffs: &[DcsCoefficients],
) -> Result<DailyVarForecast> {
    let s = config.window;
    let start = day - s;
    let seasonal_w: Vec<f64> = (start..day)
        .map(|d| seasonal.q_for_date(panel.dates[d]))
        .collect();
    let q_next = seasonal.q_for_date(panel.dates[day]);
    let slots = exec::try_map_indexed(panel.n_slots, |slot| {
        // Out-of-window gains can exceed the fit window's worst and land
        // below the support after shifting; pin them at the edge (they are
        // then epsilon-floored at density evaluation).
        let series: Vec<f64> = (start..day)
            .map(|d| (panel.negated()[d * panel.n_slots + slot] + shift).max(0.0))
            .collect();
        let path = run_filter(config.kind, &series, &coeffs[slot], &seasonal_w)?;
        // A state clamp near the forecast origin means the recursion was in
        // a runaway regime; refuse to forecast from it (the day becomes a
        // flagged gap) rather than read VaR off an absurd distribution.
        const RECENT: usize = 30;
        if let Some(&d) = path.clamped_days.last() {
            if d + RECENT >= series.len() {
                return Err(Error::Filter {
                    day: d,
                    reason: "state clamped near the forecast origin".into(),
                });
            }
        }
        let state = path.one_step_ahead(config.kind, &coeffs[slot], q_next);
        let params = state.params(config.kind, coeffs[slot].alpha);
        params.validate()?;
        Ok::<SlotDistribution, Error>(SlotDistribution { kind: config.kind, params })
    })?;
    let mut forecast = forecast_var(
        &slots,
        &config.levels,
        shift,
        &config.settings,
        crate::rng::derive_seed(config.seed, 0x4441_5900_0000_0000 | day as u64),
    )?;
    forecast.date = Some(panel.dates[day]);
    Ok(forecast)
}
