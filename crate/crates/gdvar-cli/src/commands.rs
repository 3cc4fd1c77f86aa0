//! The four batch commands: fit, forecast, backtest, selftest.

use crate::config::{meta_line, RunConfig};
use crate::data::{
    read_forecast_csv, read_returns_csv, read_scores_csv, write_forecast_csv, write_scores_csv,
    Meta, ModelArchive,
};
use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use gdvar::backtest::{lm_score_test, run_backtests, McsOptions, ModelForecasts};
use gdvar::bootstrap::{fit_window, rolling_forecast, rolling_forecast_frozen, RollingConfig};
use gdvar::filter::run_filter;
use gdvar::preprocess::{
    adjust_calendar_effects, build_return_panel, negate_and_shift, seasonal_profile,
    IntradayReturnPanel, PriceSeries, SeasonalProfile, TradingCalendar,
};
use std::path::{Path, PathBuf};

/// Exit code for a run whose fits only partially converged.
pub const EXIT_PARTIAL: i32 = 2;

fn meta_for(cfg: &RunConfig) -> Meta {
    Meta {
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        generator: gdvar::rng::GENERATOR_ID.into(),
        mode: gdvar::exec::mode().into(),
    }
}

/// Ingest prices + calendar and run the preprocessing chain: panel, optional
/// calendar-effect adjustment, negation + shift, seasonal profile.
pub fn load_panel(cfg: &RunConfig) -> Result<(IntradayReturnPanel, SeasonalProfile)> {
    let prices_path = cfg
        .prices
        .as_ref()
        .context("config needs `prices` (CSV with timestamp,close)")?;
    let calendar_path = cfg
        .calendar
        .as_ref()
        .context("config needs `calendar` (CSV with date,kind)")?;
    let n_slots = cfg
        .slots_per_day
        .context("config needs `slots_per_day`")?;
    let prices = PriceSeries::from_csv_path(prices_path)?;
    let calendar = TradingCalendar::from_csv_path(calendar_path)?;
    let raw = build_return_panel(&prices, &calendar, n_slots)?;
    let raw = if cfg.adjust_calendar {
        let (adjusted, warnings) = adjust_calendar_effects(&raw)?;
        for w in warnings {
            eprintln!("warning: calendar adjustment skipped for {:?}: {}", w.flag, w.reason);
        }
        adjusted
    } else {
        raw
    };
    let panel = negate_and_shift(&raw)?;
    let seasonal = if cfg.seasonal {
        let daily: Vec<(NaiveDate, f64)> = (0..panel.n_days())
            .map(|d| (panel.dates[d], panel.daily_loss(d)))
            .collect();
        seasonal_profile(&daily)?
    } else {
        SeasonalProfile::zero()
    };
    Ok((panel, seasonal))
}

fn rolling_config(cfg: &RunConfig) -> Result<RollingConfig> {
    Ok(RollingConfig {
        kind: cfg.family_kind()?,
        window: cfg.window,
        horizon: cfg.horizon,
        levels: cfg.levels.clone(),
        settings: cfg.forecast_settings(),
        refit_every: cfg.refit_every,
        seed: cfg.seed,
        fit: cfg.fit_options(),
    })
}

/// Fit per-slot models on the estimation window and write the archive plus
/// the per-slot score series. Returns `EXIT_PARTIAL` when some slot did not
/// converge.
pub fn cmd_fit(cfg: &RunConfig) -> Result<i32> {
    cfg.validate()?;
    let (panel, seasonal) = load_panel(cfg)?;
    if panel.n_days() < cfg.window {
        bail!(
            "panel has {} days, estimation window needs {}",
            panel.n_days(),
            cfg.window
        );
    }
    let rolling = rolling_config(cfg)?;
    let (shift, models) = fit_window(&panel, &seasonal, &rolling, cfg.window)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let archive = ModelArchive {
        meta: meta_for(cfg),
        family: cfg.family.clone(),
        n_slots: panel.n_slots,
        window: cfg.window,
        shift,
        slots: models.clone(),
    };
    let archive_path = cfg.out_dir.join("models.json");
    std::fs::write(&archive_path, serde_json::to_string_pretty(&archive)?)?;

    // Standardized-score paths over the estimation window, for diagnostics.
    let dates: Vec<NaiveDate> = panel.dates[..cfg.window].to_vec();
    let seasonal_w: Vec<f64> = dates.iter().map(|d| seasonal.q_for_date(*d)).collect();
    let mut per_slot = Vec::with_capacity(panel.n_slots);
    for (slot, model) in models.iter().enumerate() {
        let series: Vec<f64> = (0..cfg.window)
            .map(|d| panel.negated()[d * panel.n_slots + slot] + shift)
            .collect();
        let path = run_filter(rolling.kind, &series, &model.coeffs, &seasonal_w)?;
        per_slot.push(path.std_scores);
    }
    write_scores_csv(
        &cfg.out_dir.join("scores.csv"),
        &meta_line(cfg),
        &dates,
        &per_slot,
    )?;

    let converged = models.iter().filter(|m| m.converged).count();
    println!(
        "fit: {} slots, {} converged, shift {:.6}, archive {}",
        models.len(),
        converged,
        shift,
        archive_path.display()
    );
    Ok(if converged == models.len() { 0 } else { EXIT_PARTIAL })
}

/// Rolling VaR forecasts; refits per config unless a frozen archive is given.
pub fn cmd_forecast(cfg: &RunConfig, archive: Option<&Path>) -> Result<i32> {
    cfg.validate()?;
    let (panel, seasonal) = load_panel(cfg)?;
    let rolling = rolling_config(cfg)?;
    let series = match archive {
        Some(path) => {
            let archive = ModelArchive::load(path)?;
            if archive.n_slots != panel.n_slots {
                bail!(
                    "archive has {} slots, panel has {}",
                    archive.n_slots,
                    panel.n_slots
                );
            }
            rolling_forecast_frozen(
                &panel,
                &seasonal,
                &rolling,
                &archive.coefficients(),
                archive.shift,
            )?
        }
        None => rolling_forecast(&panel, &seasonal, &rolling)?,
    };

    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.join("forecast.csv");
    write_forecast_csv(&out, &meta_line(cfg), &series)?;

    // Realized daily losses over the forecast span, for backtesting.
    let mut actuals = String::new();
    actuals.push_str(&meta_line(cfg));
    actuals.push_str("\ndate,loss\n");
    for k in 0..cfg.horizon {
        let d = cfg.window + k;
        actuals.push_str(&format!("{},{}\n", panel.dates[d], panel.daily_loss(d)));
    }
    std::fs::write(cfg.out_dir.join("actual_losses.csv"), actuals)?;

    let failed = series.rows.iter().filter(|r| r.vars.is_none()).count();
    for row in series.rows.iter().filter(|r| r.vars.is_none()) {
        eprintln!(
            "warning: {} failed: {}",
            row.date,
            row.error.as_deref().unwrap_or("unknown")
        );
    }
    println!(
        "forecast: {} days × {} levels, {} failed, {}",
        series.rows.len(),
        series.levels.len(),
        failed,
        out.display()
    );
    Ok(if failed == series.rows.len() { 1 } else { 0 })
}

/// Backtest one or more forecast files against realized losses.
pub fn cmd_backtest(
    cfg: &RunConfig,
    forecast_paths: &[PathBuf],
    returns_path: &Path,
    scores: &[(String, PathBuf)],
) -> Result<i32> {
    cfg.validate()?;
    if forecast_paths.is_empty() {
        bail!("backtest needs at least one --forecast file");
    }
    let files = forecast_paths
        .iter()
        .map(|p| read_forecast_csv(p))
        .collect::<Result<Vec<_>>>()?;
    let losses_by_date = read_returns_csv(returns_path)?;

    // All models must agree on the usable dates.
    let dates: Vec<NaiveDate> = files[0].by_date.keys().cloned().collect();
    for f in &files[1..] {
        let other: Vec<NaiveDate> = f.by_date.keys().cloned().collect();
        if other != dates {
            let missing: Vec<String> = dates
                .iter()
                .filter(|d| !f.by_date.contains_key(d))
                .chain(other.iter().filter(|d| !files[0].by_date.contains_key(d)))
                .map(|d| d.to_string())
                .collect();
            bail!(
                "forecast dates misaligned between {} and {}: {}",
                files[0].name,
                f.name,
                missing.join(", ")
            );
        }
    }
    let missing: Vec<String> = dates
        .iter()
        .filter(|d| !losses_by_date.contains_key(d))
        .map(|d| d.to_string())
        .collect();
    if !missing.is_empty() {
        bail!("returns file lacks dates: {}", missing.join(", "));
    }
    if dates.is_empty() {
        bail!("no usable forecast dates");
    }
    let losses: Vec<f64> = dates.iter().map(|d| losses_by_date[d]).collect();

    let levels = files[0].levels.clone();
    for f in &files {
        if f.levels != levels {
            bail!("forecast levels differ between {} and {}", files[0].name, f.name);
        }
    }
    let models: Vec<ModelForecasts> = files
        .iter()
        .map(|f| ModelForecasts {
            name: f.name.clone(),
            var_by_level: levels
                .iter()
                .enumerate()
                .map(|(i, &lv)| (lv, dates.iter().map(|d| f.by_date[d][i]).collect()))
                .collect(),
        })
        .collect();

    let mcs_opts = McsOptions {
        level: cfg.mcs_level,
        n_boot: cfg.mcs_bootstrap,
        seed: cfg.seed,
        ..McsOptions::default()
    };
    let mut report = run_backtests(&losses, &models, &levels, cfg.dq_lags, &mcs_opts)
        .map_err(|e| anyhow::anyhow!(e))?;
    for f in &files {
        if !f.failed_dates.is_empty() {
            report.notes.push(format!(
                "{}: {} forecast days failed and were excluded",
                f.name,
                f.failed_dates.len()
            ));
        }
    }

    for (name, path) in scores {
        let slots = read_scores_csv(path)?;
        let ps = slots
            .iter()
            .map(|s| lm_score_test(s, 5).map_err(|e| anyhow::anyhow!(e)))
            .collect::<Result<Vec<f64>>>()?;
        report.lm_by_slot.insert(name.clone(), ps);
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("report.csv");
    let mut csv = String::new();
    csv.push_str(&meta_line(cfg));
    csv.push('\n');
    csv.push_str(&report.to_csv());
    std::fs::write(&csv_path, csv)?;

    #[derive(serde::Serialize)]
    struct JsonReport<'a> {
        meta: Meta,
        report: &'a gdvar::backtest::BacktestReport,
    }
    std::fs::write(
        cfg.out_dir.join("report.json"),
        serde_json::to_string_pretty(&JsonReport { meta: meta_for(cfg), report: &report })?,
    )?;

    // Plot data: date, actual loss, VaR per level, one file per model.
    for (f, model) in files.iter().zip(&models) {
        let mut plot = String::new();
        plot.push_str(&meta_line(cfg));
        plot.push('\n');
        plot.push_str("date,actual_loss");
        for lv in &levels {
            plot.push_str(&format!(",var_{lv}"));
        }
        plot.push('\n');
        for (i, d) in dates.iter().enumerate() {
            plot.push_str(&format!("{d},{}", losses[i]));
            for (_, series) in &model.var_by_level {
                plot.push_str(&format!(",{}", series[i]));
            }
            plot.push('\n');
        }
        std::fs::write(cfg.out_dir.join(format!("plot_{}.csv", f.name)), plot)?;
    }

    println!(
        "backtest: {} models × {} levels over {} days, report {}",
        models.len(),
        levels.len(),
        dates.len(),
        csv_path.display()
    );
    Ok(0)
}

/// Quick invariant battery; prints one line per check.
pub fn cmd_selftest() -> Result<i32> {
    use gdvar::dist::{cdf, log_density, quantile, FamilyKind, GdParams};

    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
        if !ok {
            failures += 1;
        }
    };

    // Quantile round-trips across all families.
    let mut ok = true;
    for kind in [
        FamilyKind::ParetoIv,
        FamilyKind::WeibullParetoIv,
        FamilyKind::GammaParetoIv,
        FamilyKind::RayleighParetoIv,
    ] {
        let p = GdParams::new(1.2, 1.1, 0.9).unwrap();
        for &u in &[0.01, 0.5, 0.99] {
            let x = quantile(kind, &p, u).unwrap();
            ok &= (cdf(kind, &p, x).unwrap() - u).abs() < 1e-9;
        }
    }
    check("quantile round-trip", ok);

    // WPD reduction to Pareto IV at unit shape.
    let wpd = GdParams::new(1.0, 2.0, 1.0).unwrap();
    let pareto = GdParams::new(1.0, 2.0, 1.0).unwrap();
    let mut ok = true;
    for &x in &[0.1, 1.0, 7.0] {
        let a = log_density(FamilyKind::WeibullParetoIv, &wpd, x).unwrap();
        let b = log_density(FamilyKind::ParetoIv, &pareto, x).unwrap();
        ok &= (a - b).abs() < 1e-12;
    }
    check("wpd(c=1) reduction", ok);

    // Grid cells carry equal probability mass.
    let slot = GdParams::new(1.0, 1.5, 1.2).unwrap();
    let grid = gdvar::bootstrap::build_grid(FamilyKind::WeibullParetoIv, &slot, 25).unwrap();
    let mut ok = true;
    for j in 0..24 {
        let lo = cdf(FamilyKind::WeibullParetoIv, &slot, grid.edges[j]).unwrap();
        let hi = cdf(FamilyKind::WeibullParetoIv, &slot, grid.edges[j + 1]).unwrap();
        ok &= (hi - lo - 0.04).abs() < 1e-9;
    }
    check("grid cell mass", ok);

    // Seasonal additivity of the filter.
    let coeffs = gdvar::filter::DcsCoefficients {
        a1: 0.05,
        b1: 0.9,
        c1: -0.1,
        a2: 0.0,
        b2: 0.9,
        c2: -0.05,
        alpha: 1.0,
    };
    let series: Vec<f64> = (0..120).map(|i| 0.2 + (i % 7) as f64 * 0.2).collect();
    let q: Vec<f64> = (0..120).map(|i| (i as f64 * 0.1).sin() * 0.05).collect();
    let init = gdvar::filter::FilterState { lam: 0.0, v: 0.0 };
    let with_q = gdvar::filter::run_filter_with_init(
        FamilyKind::WeibullParetoIv,
        &series,
        &coeffs,
        &q,
        init,
    )
    .unwrap();
    let mut ok = true;
    let mut state = gdvar::filter::FilterState {
        lam: (coeffs.a1 + q[0]) + coeffs.b1 * init.lam,
        v: coeffs.a2 + coeffs.b2 * init.v,
    };
    for t in 0..series.len() {
        ok &= state.lam.to_bits() == with_q.states[t].lam.to_bits();
        if t + 1 < series.len() {
            let ss = with_q.std_scores[t];
            state = gdvar::filter::FilterState {
                lam: (coeffs.a1 + q[t + 1]) + coeffs.b1 * state.lam + coeffs.c1 * ss.0,
                v: coeffs.a2 + coeffs.b2 * state.v + coeffs.c2 * ss.1,
            };
        }
    }
    check("filter seasonal additivity", ok);

    // Kupiec hand value.
    let hits = vec![false; 250];
    let out = gdvar::backtest::lr_uc(&hits, 0.05).unwrap();
    check(
        "lruc zero-hit value",
        (out.statistic + 2.0 * 250.0 * (0.95f64).ln()).abs() < 1e-9,
    );

    // Seeded bootstrap determinism.
    let slots = [gdvar::bootstrap::SlotDistribution {
        kind: FamilyKind::WeibullParetoIv,
        params: slot,
    }];
    let grids = [gdvar::bootstrap::build_grid(FamilyKind::WeibullParetoIv, &slot, 25).unwrap()];
    let a = gdvar::bootstrap::simulate_daily_distribution(&slots, &grids, 512, 7).unwrap();
    let b = gdvar::bootstrap::simulate_daily_distribution(&slots, &grids, 512, 7).unwrap();
    check("seeded bootstrap determinism", a == b);

    if failures == 0 {
        println!("selftest: all checks passed");
        Ok(0)
    } else {
        println!("selftest: {failures} checks failed");
        Ok(1)
    }
}

/// Apply CLI overrides onto the loaded config.
pub fn apply_overrides(
    cfg: &mut RunConfig,
    seed: Option<u64>,
    family: Option<String>,
    levels: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = family {
        cfg.family = f;
    }
    if let Some(spec) = levels {
        let mut parsed = Vec::new();
        for part in spec.split(',') {
            parsed.push(
                part.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad level `{part}`"))?,
            );
        }
        parsed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cfg.levels = parsed;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    cfg.family_kind().map(|_| ())?;
    Ok(())
}

/// Collect `NAME=PATH` score arguments.
pub fn parse_scores(args: &[String]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for a in args {
        match a.split_once('=') {
            Some((name, path)) => out.push((name.to_string(), PathBuf::from(path))),
            None => bail!("--scores expects NAME=PATH, got `{a}`"),
        }
    }
    Ok(out)
}
