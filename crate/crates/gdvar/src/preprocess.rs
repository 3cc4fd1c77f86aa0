//! Return-panel construction and adjustments: intraday log returns with the
//! overnight gap kept in the first slot, negation and the positivity shift,
//! post-weekend/post-vacation renormalization, the 366-day seasonal profile,
//! and adjacent-slot dependence diagnostics.

use crate::error::{Error, Result};
use crate::special::student_t_two_sided_p;
use chrono::{Datelike, NaiveDate, NaiveDateTime};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

/// One intraday close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRecord {
    pub timestamp: NaiveDateTime,
    pub close: f64,
}

/// Ordered intraday price series.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    records: Vec<PriceRecord>,
}

impl PriceSeries {
    /// Validates strictly increasing timestamps and positive prices.
    pub fn new(records: Vec<PriceRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Ingestion("price series is empty".into()));
        }
        for pair in records.windows(2) {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(Error::Ingestion(format!(
                    "timestamps must be strictly increasing at {}",
                    pair[1].timestamp
                )));
            }
        }
        if let Some(r) = records.iter().find(|r| !(r.close.is_finite() && r.close > 0.0)) {
            return Err(Error::Ingestion(format!(
                "non-positive price {} at {}",
                r.close, r.timestamp
            )));
        }
        Ok(PriceSeries { records })
    }

    pub fn records(&self) -> &[PriceRecord] {
        &self.records
    }

    /// Reads `timestamp,close` CSV (ISO-8601 timestamps). Extra columns are
    /// ignored; the two named headers are required.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Ingestion(format!("cannot read price header: {e}")))?
            .clone();
        let ts_idx = find_column(&headers, "timestamp")?;
        let close_idx = find_column(&headers, "close")?;
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::Ingestion(format!("price row {line}: {e}")))?;
            let ts = parse_timestamp(&row[ts_idx])
                .ok_or_else(|| Error::Ingestion(format!("bad timestamp `{}`", &row[ts_idx])))?;
            let close: f64 = row[close_idx]
                .trim()
                .parse()
                .map_err(|_| Error::Ingestion(format!("bad price `{}`", &row[close_idx])))?;
            records.push(PriceRecord { timestamp: ts, close });
        }
        PriceSeries::new(records)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Ingestion(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_csv_reader(file)
    }
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Ingestion(format!("missing required column `{name}`")))
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    None
}

/// Calendar classification of one date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayKind {
    Trading,
    Weekend,
    Holiday,
}

/// Trading calendar: every date in the modeling range must be classified.
#[derive(Debug, Clone)]
pub struct TradingCalendar {
    days: BTreeMap<NaiveDate, DayKind>,
}

impl TradingCalendar {
    pub fn new(days: BTreeMap<NaiveDate, DayKind>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Ingestion("calendar is empty".into()));
        }
        Ok(TradingCalendar { days })
    }

    pub fn kind(&self, date: NaiveDate) -> Option<DayKind> {
        self.days.get(&date).copied()
    }

    /// Reads `date,kind` CSV with kind ∈ {trading, weekend, holiday}.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Ingestion(format!("cannot read calendar header: {e}")))?
            .clone();
        let date_idx = find_column(&headers, "date")?;
        let kind_idx = find_column(&headers, "kind")?;
        let mut days = BTreeMap::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::Ingestion(format!("calendar row {line}: {e}")))?;
            let date = NaiveDate::parse_from_str(row[date_idx].trim(), "%Y-%m-%d")
                .map_err(|_| Error::Ingestion(format!("bad date `{}`", &row[date_idx])))?;
            let kind = match row[kind_idx].trim().to_ascii_lowercase().as_str() {
                "trading" => DayKind::Trading,
                "weekend" => DayKind::Weekend,
                "holiday" => DayKind::Holiday,
                other => {
                    return Err(Error::Ingestion(format!("unknown calendar kind `{other}`")))
                }
            };
            days.insert(date, kind);
        }
        TradingCalendar::new(days)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Ingestion(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_csv_reader(file)
    }
}

/// Flag attached to each panel day from the preceding calendar gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DayFlag {
    Normal,
    /// First trading day after exactly two consecutive non-trading days.
    PostWeekend,
    /// First trading day after three or more consecutive non-trading days.
    PostVacation,
}

/// T×N panel of raw (not yet negated) intraday log returns.
#[derive(Debug, Clone)]
pub struct RawReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub n_slots: usize,
    /// Row-major `dates.len() × n_slots`.
    pub values: Vec<f64>,
    pub flags: Vec<DayFlag>,
}

impl RawReturnPanel {
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn row(&self, day: usize) -> &[f64] {
        &self.values[day * self.n_slots..(day + 1) * self.n_slots]
    }

    /// Column (slot) view, copied.
    pub fn slot(&self, slot: usize) -> Vec<f64> {
        (0..self.n_days())
            .map(|d| self.values[d * self.n_slots + slot])
            .collect()
    }
}

/// Processed panel: negated returns plus the positivity shift.
///
/// The negated matrix is stored as ground truth and the shifted (modeling)
/// view is computed on demand, so shift bookkeeping is exact: removing the
/// shift recovers the negated return bit for bit.
#[derive(Debug, Clone)]
pub struct IntradayReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub n_slots: usize,
    /// Row-major negated (loss-scale) returns.
    negated: Vec<f64>,
    /// The positivity shift; every shifted value is ≥ 0 (zeros are floored
    /// downstream, at density evaluation).
    pub shift: f64,
    pub flags: Vec<DayFlag>,
}

impl IntradayReturnPanel {
    /// Panel from an already loss-scale (negated) T×N matrix, for simulated
    /// or externally prepared data. The shift is taken as the smallest value
    /// below zero, as in [`negate_and_shift`].
    pub fn from_loss_matrix(
        dates: Vec<NaiveDate>,
        n_slots: usize,
        negated: Vec<f64>,
    ) -> Result<Self> {
        if n_slots == 0 || dates.is_empty() || negated.len() != dates.len() * n_slots {
            return Err(Error::Ingestion(format!(
                "loss matrix shape mismatch: {} dates × {} slots vs {} values",
                dates.len(),
                n_slots,
                negated.len()
            )));
        }
        let min = negated.iter().cloned().fold(f64::INFINITY, f64::min);
        let shift = if min < 0.0 { -min } else { 0.0 };
        let flags = vec![DayFlag::Normal; dates.len()];
        Ok(IntradayReturnPanel { dates, n_slots, negated, shift, flags })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn negated(&self) -> &[f64] {
        &self.negated
    }

    pub fn negated_row(&self, day: usize) -> &[f64] {
        &self.negated[day * self.n_slots..(day + 1) * self.n_slots]
    }

    pub fn negated_slot(&self, slot: usize) -> Vec<f64> {
        (0..self.n_days())
            .map(|d| self.negated[d * self.n_slots + slot])
            .collect()
    }

    /// Shifted (all-nonnegative) value for one cell.
    pub fn shifted_value(&self, day: usize, slot: usize) -> f64 {
        self.negated[day * self.n_slots + slot] + self.shift
    }

    /// Shifted column for one slot.
    pub fn shifted_slot(&self, slot: usize) -> Vec<f64> {
        (0..self.n_days())
            .map(|d| self.shifted_value(d, slot))
            .collect()
    }

    /// Negated (loss-scale) daily return.
    pub fn daily_loss(&self, day: usize) -> f64 {
        self.negated_row(day).iter().sum()
    }
}

/// Build the T×N log-return panel. The first slot of each day spans the
/// overnight gap (previous close to first close of the day), which is kept
/// as-is. Every trading day in the record range must supply exactly
/// `n_slots` closes.
pub fn build_return_panel(
    prices: &PriceSeries,
    calendar: &TradingCalendar,
    n_slots: usize,
) -> Result<RawReturnPanel> {
    if n_slots < 1 {
        return Err(Error::Ingestion("n_slots must be at least 1".into()));
    }
    // Group records by date, preserving order.
    let mut days: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for rec in prices.records() {
        let date = rec.timestamp.date();
        match calendar.kind(date) {
            Some(DayKind::Trading) => {}
            Some(_) => {
                return Err(Error::Ingestion(format!(
                    "price record on non-trading day {date}"
                )))
            }
            None => {
                return Err(Error::Ingestion(format!(
                    "date {date} missing from calendar"
                )))
            }
        }
        match days.last_mut() {
            Some((d, closes)) if *d == date => closes.push(rec.close),
            _ => days.push((date, vec![rec.close])),
        }
    }
    for (date, closes) in &days {
        if closes.len() != n_slots {
            let slot = closes.len().min(n_slots);
            return Err(Error::Ingestion(format!(
                "day {date} has {} closes, expected {n_slots} (first problem at slot {slot})",
                closes.len()
            )));
        }
    }
    if days.len() < 2 {
        return Err(Error::Ingestion(
            "need at least two trading days (the first supplies the prior close)".into(),
        ));
    }
    // Trading days inside the record range with no records are missing data.
    for pair in days.windows(2) {
        let (d0, d1) = (pair[0].0, pair[1].0);
        let mut d = d0.succ_opt().unwrap();
        while d < d1 {
            if calendar.kind(d) == Some(DayKind::Trading) {
                return Err(Error::Ingestion(format!(
                    "trading day {d} has no price records"
                )));
            }
            d = d.succ_opt().unwrap();
        }
    }

    let mut dates = Vec::with_capacity(days.len() - 1);
    let mut values = Vec::with_capacity((days.len() - 1) * n_slots);
    let mut flags = Vec::with_capacity(days.len() - 1);
    for t in 1..days.len() {
        let (date, closes) = (&days[t].0, &days[t].1);
        let prev_close = *days[t - 1].1.last().unwrap();
        dates.push(*date);
        values.push(closes[0].ln() - prev_close.ln());
        for tau in 1..n_slots {
            values.push(closes[tau].ln() - closes[tau - 1].ln());
        }
        // Count the consecutive non-trading days immediately before `date`.
        let mut gap = 0usize;
        let mut d = days[t - 1].0.succ_opt().unwrap();
        while d < *date {
            gap += 1;
            d = d.succ_opt().unwrap();
        }
        flags.push(match gap {
            0 | 1 => DayFlag::Normal,
            2 => DayFlag::PostWeekend,
            _ => DayFlag::PostVacation,
        });
    }
    Ok(RawReturnPanel { dates, n_slots, values, flags })
}

/// Outcome note for a skipped calendar-adjustment group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentWarning {
    pub flag: DayFlag,
    pub reason: String,
}

/// Renormalize post-weekend / post-vacation first-slot returns: standardize
/// each flagged group with its own mean/SD, then map back with the
/// unaffected group's mean/SD. Groups with fewer than two members or zero
/// dispersion are skipped with a warning. Applied to the first slot only
/// (the effect is tied to the open).
pub fn adjust_calendar_effects(
    panel: &RawReturnPanel,
) -> Result<(RawReturnPanel, Vec<AdjustmentWarning>)> {
    let slot = 0usize;
    let unaffected: Vec<f64> = (0..panel.n_days())
        .filter(|&d| panel.flags[d] == DayFlag::Normal)
        .map(|d| panel.values[d * panel.n_slots + slot])
        .collect();
    if unaffected.len() < 2 {
        return Err(Error::InsufficientData(
            "calendar adjustment needs at least 2 unaffected observations".into(),
        ));
    }
    let (mean_u, sd_u) = mean_sd(&unaffected);
    let mut out = panel.clone();
    let mut warnings = Vec::new();
    for flag in [DayFlag::PostWeekend, DayFlag::PostVacation] {
        let idx: Vec<usize> = (0..panel.n_days()).filter(|&d| panel.flags[d] == flag).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            warnings.push(AdjustmentWarning {
                flag,
                reason: "fewer than 2 observations in group".into(),
            });
            continue;
        }
        let vals: Vec<f64> = idx.iter().map(|&d| panel.values[d * panel.n_slots + slot]).collect();
        let (mean_g, sd_g) = mean_sd(&vals);
        if sd_g <= 0.0 || sd_u <= 0.0 {
            warnings.push(AdjustmentWarning { flag, reason: "degenerate group SD".into() });
            continue;
        }
        for (&d, &v) in idx.iter().zip(&vals) {
            out.values[d * panel.n_slots + slot] = (v - mean_g) / sd_g * sd_u + mean_u;
        }
    }
    Ok((out, warnings))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Negate all returns and shift the panel so every value is nonnegative.
/// The shift is `|min(−raw)|` when that minimum is negative, else 0, and is
/// recorded for the VaR back-adjustment.
pub fn negate_and_shift(panel: &RawReturnPanel) -> Result<IntradayReturnPanel> {
    if panel.values.is_empty() {
        return Err(Error::InsufficientData("empty panel".into()));
    }
    let negated: Vec<f64> = panel.values.iter().map(|v| -v).collect();
    let min = negated.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = if min < 0.0 { -min } else { 0.0 };
    Ok(IntradayReturnPanel {
        dates: panel.dates.clone(),
        n_slots: panel.n_slots,
        negated,
        shift,
        flags: panel.flags.clone(),
    })
}

/// Deterministic 366-day seasonal component.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SeasonalProfile {
    /// One value per cycle position; centered to mean zero.
    pub values: Vec<f64>,
}

pub const SEASONAL_CYCLE: usize = 366;

/// Cycle position of a calendar date. Leap years use the ordinal day
/// directly; in non-leap years dates from March onward shift by one so the
/// (absent) February 29 keeps a dedicated slot.
pub fn cycle_index(date: NaiveDate) -> usize {
    let ord = date.ordinal() as usize; // 1-based
    if date.leap_year() || ord <= 59 {
        ord - 1
    } else {
        ord
    }
}

impl SeasonalProfile {
    /// Flat profile (all zeros), for runs without a seasonal component.
    pub fn zero() -> Self {
        SeasonalProfile { values: vec![0.0; SEASONAL_CYCLE] }
    }

    pub fn q_for_date(&self, date: NaiveDate) -> f64 {
        self.values[cycle_index(date)]
    }
}

/// Estimate the 366-day profile from a dated daily series: fill every
/// calendar day between the first and last date (missing days count as
/// zero), detrend with a centered 2×366 moving average, average the
/// detrended values per cycle position, and center the result.
pub fn seasonal_profile(daily: &[(NaiveDate, f64)]) -> Result<SeasonalProfile> {
    if daily.len() < 2 {
        return Err(Error::InsufficientData("seasonal profile needs data".into()));
    }
    for pair in daily.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::Ingestion("daily series must be strictly dated".into()));
        }
    }
    let first = daily[0].0;
    let last = daily[daily.len() - 1].0;
    let mut by_date: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for &(d, v) in daily {
        by_date.insert(d, v);
    }

    // Calendar-day axis with zero fill for missing dates.
    let mut padded: Vec<f64> = Vec::new();
    let mut positions: Vec<usize> = Vec::new();
    let mut date = first;
    while date <= last {
        padded.push(by_date.get(&date).copied().unwrap_or(0.0));
        positions.push(cycle_index(date));
        date = date.succ_opt().unwrap();
    }
    if padded.len() < 2 * SEASONAL_CYCLE {
        return Err(Error::InsufficientData(format!(
            "seasonal profile needs at least two full {SEASONAL_CYCLE}-day cycles, got {} days",
            padded.len()
        )));
    }

    // Centered 2×366 moving average: window of 367 with half-weight ends.
    let half = SEASONAL_CYCLE / 2; // 183
    let mut sums = vec![0.0f64; SEASONAL_CYCLE];
    let mut counts = vec![0usize; SEASONAL_CYCLE];
    for t in half..padded.len() - half {
        let mut acc = 0.5 * padded[t - half] + 0.5 * padded[t + half];
        for k in (t - half + 1)..(t + half) {
            acc += padded[k];
        }
        let trend = acc / SEASONAL_CYCLE as f64;
        let d = positions[t];
        sums[d] += padded[t] - trend;
        counts[d] += 1;
    }
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mean = values.iter().sum::<f64>() / SEASONAL_CYCLE as f64;
    for v in &mut values {
        *v -= mean;
    }
    Ok(SeasonalProfile { values })
}

/// Pearson test of each adjacent slot pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PairCorrelation {
    pub slot_a: usize,
    pub slot_b: usize,
    pub r: f64,
    pub p_value: f64,
}

/// Adjacent-slot dependence diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AdjacencyReport {
    pub pairs: Vec<PairCorrelation>,
    /// Share of pairs with p < 0.05.
    pub dependent_ratio: f64,
}

/// Two-sided Pearson correlation test for every adjacent slot pair, with
/// the share of pairs that fail the independence requirement at 5%.
pub fn adjacency_correlation_report(panel: &IntradayReturnPanel) -> Result<AdjacencyReport> {
    let t = panel.n_days();
    if t < 30 {
        return Err(Error::InsufficientData(format!(
            "adjacency report needs at least 30 days, got {t}"
        )));
    }
    if panel.n_slots < 2 {
        return Err(Error::InsufficientData("adjacency report needs at least 2 slots".into()));
    }
    let mut pairs = Vec::with_capacity(panel.n_slots - 1);
    let mut dependent = 0usize;
    for tau in 0..panel.n_slots - 1 {
        let a = panel.negated_slot(tau);
        let b = panel.negated_slot(tau + 1);
        let r = pearson(&a, &b);
        let p_value = if r.is_nan() {
            1.0
        } else if r.abs() >= 1.0 {
            0.0
        } else {
            let tstat = r * ((t as f64 - 2.0) / (1.0 - r * r)).sqrt();
            student_t_two_sided_p(tstat, t - 2)
        };
        if p_value < 0.05 {
            dependent += 1;
        }
        pairs.push(PairCorrelation { slot_a: tau, slot_b: tau + 1, r, p_value });
    }
    let dependent_ratio = dependent as f64 / pairs.len() as f64;
    Ok(AdjacencyReport { pairs, dependent_ratio })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return f64::NAN;
    }
    cov / (va.sqrt() * vb.sqrt())
}
