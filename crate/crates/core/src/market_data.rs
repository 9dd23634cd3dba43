//! Price panel loading, cleaning, portfolio aggregation and log returns.
//!
//! A panel is a rectangular block of minute prices: every trading day
//! contributes exactly `window_len` rows on a shared minute grid, every
//! instrument has a positive finite price in every row. [`load_price_panel`]
//! is the only way to get from a raw CSV to that shape; everything
//! downstream can then assume completeness and never re-validate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use thiserror::Error;

use crate::numfmt::sig12;

/// Number of one-minute rows per trading day in the default market model.
pub const DEFAULT_WINDOW_LEN: usize = 240;

/// Reserved instrument name for the weighted aggregate series.
pub const PORTFOLIO_NAME: &str = "PORTFOLIO";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header does not contain a `{0}` column")]
    MissingColumn(String),
    #[error("panel must have at least one instrument column")]
    NoInstruments,
    #[error("line {line}, column `{column}`: cannot parse {text:?} as a price")]
    BadCell {
        line: u64,
        column: String,
        text: String,
    },
    #[error("line {line}, column `{column}`: non-positive price {value}")]
    NonPositivePrice {
        line: u64,
        column: String,
        value: f64,
    },
    #[error("no complete trading day survived cleaning")]
    EmptyPanel,
    #[error("fewer than {needed} distinct minute slots observed ({got}); cannot form a {needed}-row day grid")]
    GridTooSparse { needed: usize, got: usize },
    #[error("timestamps are not strictly increasing at row {row}")]
    UnorderedTimestamps { row: usize },
    #[error("day {date} has {got} rows, expected {expected}")]
    RaggedDay {
        date: NaiveDate,
        got: usize,
        expected: usize,
    },
    #[error("weights do not match panel instruments ({0})")]
    WeightMismatch(String),
    #[error("weight for `{instrument}` is {weight}, must be non-negative and finite")]
    BadWeight { instrument: String, weight: f64 },
    #[error("weights sum to {0}, expected 1 within 1e-9")]
    WeightSum(f64),
    #[error("sampling interval {interval} does not divide the day window length {window_len}")]
    IntervalNotDivisor { interval: usize, window_len: usize },
    #[error("sampling interval must be at least 1")]
    ZeroInterval,
    #[error("price rows ({rows}) do not fill whole days of {window_len} rows")]
    PartialDay { rows: usize, window_len: usize },
    #[error("instrument series lengths differ")]
    LengthMismatch,
}

/// Non-fatal events recorded while cleaning a raw CSV into a [`PricePanel`].
#[derive(Debug, Clone, Default)]
pub struct CleaningReport {
    /// Rows dropped outright: unparseable timestamp or duplicate timestamp.
    pub rejected_rows: usize,
    /// Rows whose time of day is not on the inferred minute grid.
    pub off_grid_rows: usize,
    /// Cells filled by forward fill (or back fill at the start of a day).
    pub filled_cells: usize,
    /// Days dropped for exceeding the missing-data budget, with the number
    /// of missing cells that disqualified each.
    pub dropped_days: Vec<(NaiveDate, usize)>,
}

/// Options controlling [`load_price_panel`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Name of the timestamp column. Defaults to `timestamp`; if absent the
    /// first column is used.
    pub timestamp_column: Option<String>,
    /// Instrument columns to keep, in this order. `None` keeps every
    /// non-timestamp column in header order.
    pub instruments: Option<Vec<String>>,
    /// Rows per trading day after cleaning.
    pub window_len: usize,
    /// Days with more than this fraction of cells missing are dropped.
    pub max_missing: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            timestamp_column: None,
            instruments: None,
            window_len: DEFAULT_WINDOW_LEN,
            max_missing: 0.05,
        }
    }
}

/// Complete minute-price panel: `n_days * window_len` rows, no gaps.
#[derive(Debug, Clone)]
pub struct PricePanel {
    instruments: Vec<String>,
    timestamps: Vec<NaiveDateTime>,
    dates: Vec<NaiveDate>,
    /// Column-major: `prices[k][row]` is instrument `k` at `row`.
    prices: Vec<Vec<f64>>,
    window_len: usize,
}

impl PricePanel {
    /// Builds a panel from already-clean columns, enforcing every structural
    /// invariant: strictly increasing timestamps, positive finite prices,
    /// whole days of `window_len` rows, one calendar date per day.
    pub fn new(
        instruments: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
        prices: Vec<Vec<f64>>,
        window_len: usize,
    ) -> Result<Self, MarketDataError> {
        if instruments.is_empty() {
            return Err(MarketDataError::NoInstruments);
        }
        let rows = timestamps.len();
        if window_len == 0 || rows == 0 || !rows.is_multiple_of(window_len) {
            return Err(MarketDataError::PartialDay { rows, window_len });
        }
        if prices.len() != instruments.len() || prices.iter().any(|c| c.len() != rows) {
            return Err(MarketDataError::LengthMismatch);
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                let row = timestamps.iter().position(|t| *t == w[1]).unwrap_or(0);
                return Err(MarketDataError::UnorderedTimestamps { row });
            }
        }
        for (k, col) in prices.iter().enumerate() {
            for (row, &p) in col.iter().enumerate() {
                if !p.is_finite() || p <= 0.0 {
                    return Err(MarketDataError::NonPositivePrice {
                        line: row as u64 + 2,
                        column: instruments[k].clone(),
                        value: p,
                    });
                }
            }
        }
        let mut dates = Vec::with_capacity(rows / window_len);
        for day in timestamps.chunks(window_len) {
            let date = day[0].date();
            if day.iter().any(|t| t.date() != date) {
                return Err(MarketDataError::RaggedDay {
                    date,
                    got: day.iter().filter(|t| t.date() == date).count(),
                    expected: window_len,
                });
            }
            dates.push(date);
        }
        Ok(Self {
            instruments,
            timestamps,
            dates,
            prices,
            window_len,
        })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    /// Full minute series for one instrument, across all days.
    pub fn series(&self, instrument: usize) -> &[f64] {
        &self.prices[instrument]
    }

    /// Prices of one instrument within one day.
    pub fn day_series(&self, instrument: usize, day: usize) -> &[f64] {
        let lo = day * self.window_len;
        &self.prices[instrument][lo..lo + self.window_len]
    }

    /// Copies one trading day out as a standalone window.
    pub fn day(&self, day: usize) -> DayWindow {
        DayWindow {
            date: self.dates[day],
            instruments: self.instruments.clone(),
            series: (0..self.instruments.len())
                .map(|k| self.day_series(k, day).to_vec())
                .collect(),
        }
    }

    /// Daily closing prices (last row of each day) for one instrument.
    pub fn daily_closes(&self, instrument: usize) -> Vec<f64> {
        (0..self.n_days())
            .map(|d| self.prices[instrument][(d + 1) * self.window_len - 1])
            .collect()
    }

    /// Writes the panel back out in the same CSV layout it is loaded from.
    pub fn to_csv(&self, path: &Path) -> Result<(), MarketDataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.instruments.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in 0..self.timestamps.len() {
            record.clear();
            record.push(self.timestamps[row].format("%Y-%m-%dT%H:%M").to_string());
            for col in &self.prices {
                record.push(sig12(col[row]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One trading day of aligned minute series, the unit the multiplex
/// network is built from.
#[derive(Debug, Clone)]
pub struct DayWindow {
    pub date: NaiveDate,
    pub instruments: Vec<String>,
    /// One series per instrument, all the same length.
    pub series: Vec<Vec<f64>>,
}

impl DayWindow {
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Non-negative instrument weights summing to one.
#[derive(Debug, Clone)]
pub struct WeightVector {
    entries: BTreeMap<String, f64>,
}

impl WeightVector {
    /// Validates non-negativity and a unit sum (tolerance 1e-9).
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self, MarketDataError> {
        let entries: BTreeMap<String, f64> = entries.into_iter().collect();
        if entries.is_empty() {
            return Err(MarketDataError::NoInstruments);
        }
        for (instrument, &weight) in &entries {
            if !weight.is_finite() || weight < 0.0 {
                return Err(MarketDataError::BadWeight {
                    instrument: instrument.clone(),
                    weight,
                });
            }
        }
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MarketDataError::WeightSum(sum));
        }
        Ok(Self { entries })
    }

    /// Equal weights over the given instruments.
    pub fn equal(instruments: &[String]) -> Result<Self, MarketDataError> {
        let n = instruments.len();
        if n == 0 {
            return Err(MarketDataError::NoInstruments);
        }
        let w = 1.0 / n as f64;
        Self::new(instruments.iter().map(|s| (s.clone(), w)))
    }

    /// Normalises raw sizes (e.g. market capitalisations) to weights.
    pub fn from_sizes(
        sizes: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, MarketDataError> {
        let sizes: Vec<(String, f64)> = sizes.into_iter().collect();
        for (instrument, size) in &sizes {
            if !size.is_finite() || *size < 0.0 {
                return Err(MarketDataError::BadWeight {
                    instrument: instrument.clone(),
                    weight: *size,
                });
            }
        }
        let total: f64 = sizes.iter().map(|(_, s)| s).sum();
        if total <= 0.0 {
            return Err(MarketDataError::WeightSum(0.0));
        }
        Self::new(sizes.into_iter().map(|(k, s)| (k, s / total)))
    }

    /// Reads an `instrument,weight` CSV.
    pub fn load_csv(path: &Path) -> Result<Self, MarketDataError> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let instrument = record.get(0).unwrap_or("").trim().to_string();
            let text = record.get(1).unwrap_or("").trim();
            let weight: f64 = text.parse().map_err(|_| MarketDataError::BadCell {
                line,
                column: "weight".to_string(),
                text: text.to_string(),
            })?;
            entries.push((instrument, weight));
        }
        Self::new(entries)
    }

    pub fn get(&self, instrument: &str) -> Option<f64> {
        self.entries.get(instrument).copied()
    }

    pub fn instruments(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Loads a `timestamp,<inst1>,<inst2>,...` CSV and cleans it into a
/// complete panel.
///
/// Cleaning proceeds in file order but tolerates unsorted rows:
///
/// 1. rows with unparseable or duplicate timestamps are rejected;
/// 2. the day grid is the `window_len` most frequent times of day across
///    the whole file (ties broken toward earlier times); rows at other
///    times are counted as off-grid and ignored;
/// 3. per day, missing cells (absent rows or empty cells) are forward
///    filled from the last seen value, and leading gaps are back filled
///    from the first value of the day;
/// 4. days missing more than `max_missing` of their cells, or missing an
///    instrument entirely, are dropped and recorded.
///
/// Numeric cells that fail to parse, and prices `<= 0`, are hard errors:
/// they indicate a malformed file rather than a market gap.
pub fn load_price_panel(
    path: &Path,
    options: &LoadOptions,
) -> Result<(PricePanel, CleaningReport), MarketDataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let header_names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();

    let ts_col = match &options.timestamp_column {
        Some(name) => header_names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.clone()))?,
        None => header_names
            .iter()
            .position(|h| h == "timestamp")
            .unwrap_or(0),
    };
    let instrument_cols: Vec<(usize, String)> = match &options.instruments {
        Some(wanted) => wanted
            .iter()
            .map(|name| {
                header_names
                    .iter()
                    .position(|h| h == name)
                    .map(|i| (i, name.clone()))
                    .ok_or_else(|| MarketDataError::MissingColumn(name.clone()))
            })
            .collect::<Result<_, _>>()?,
        None => header_names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ts_col)
            .map(|(i, h)| (i, h.clone()))
            .collect(),
    };
    if instrument_cols.is_empty() {
        return Err(MarketDataError::NoInstruments);
    }
    let instruments: Vec<String> = instrument_cols.iter().map(|(_, n)| n.clone()).collect();
    let n_inst = instruments.len();

    let mut report = CleaningReport::default();
    // date -> time -> row cells; BTreeMap keeps both levels sorted.
    let mut days: BTreeMap<NaiveDate, BTreeMap<NaiveTime, Vec<Option<f64>>>> = BTreeMap::new();
    let mut time_counts: BTreeMap<NaiveTime, usize> = BTreeMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let ts_text = record.get(ts_col).unwrap_or("").trim();
        let Some(ts) = parse_minute_timestamp(ts_text) else {
            report.rejected_rows += 1;
            continue;
        };
        let mut cells = Vec::with_capacity(n_inst);
        for (col, name) in &instrument_cols {
            let text = record.get(*col).unwrap_or("").trim();
            if text.is_empty() {
                cells.push(None);
                continue;
            }
            let value: f64 = text.parse().map_err(|_| MarketDataError::BadCell {
                line,
                column: name.clone(),
                text: text.to_string(),
            })?;
            if !value.is_finite() {
                return Err(MarketDataError::BadCell {
                    line,
                    column: name.clone(),
                    text: text.to_string(),
                });
            }
            if value <= 0.0 {
                return Err(MarketDataError::NonPositivePrice {
                    line,
                    column: name.clone(),
                    value,
                });
            }
            cells.push(Some(value));
        }
        let day = days.entry(ts.date()).or_default();
        if day.insert(ts.time(), cells).is_some() {
            report.rejected_rows += 1; // duplicate timestamp: keep the later row
        } else {
            *time_counts.entry(ts.time()).or_insert(0) += 1;
        }
    }

    if time_counts.len() < options.window_len {
        return Err(MarketDataError::GridTooSparse {
            needed: options.window_len,
            got: time_counts.len(),
        });
    }
    // Most frequent times of day win a grid slot; BTreeMap order makes the
    // tie-break deterministic (earlier time wins).
    let mut by_count: Vec<(NaiveTime, usize)> = time_counts.iter().map(|(&t, &c)| (t, c)).collect();
    by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut grid: Vec<NaiveTime> = by_count[..options.window_len]
        .iter()
        .map(|&(t, _)| t)
        .collect();
    grid.sort();

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_inst];
    let max_missing_cells =
        (options.max_missing * (options.window_len * n_inst) as f64).floor() as usize;

    for (date, rows) in &days {
        let on_grid: usize = rows
            .keys()
            .filter(|t| grid.binary_search(t).is_ok())
            .count();
        report.off_grid_rows += rows.len() - on_grid;

        let mut missing = 0usize;
        let mut day_cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(grid.len()); n_inst];
        for time in &grid {
            match rows.get(time) {
                Some(cells) => {
                    for (k, cell) in cells.iter().enumerate() {
                        if cell.is_none() {
                            missing += 1;
                        }
                        day_cols[k].push(*cell);
                    }
                }
                None => {
                    missing += n_inst;
                    for col in &mut day_cols {
                        col.push(None);
                    }
                }
            }
        }
        let instrument_absent = day_cols.iter().any(|col| col.iter().all(Option::is_none));
        if missing > max_missing_cells || instrument_absent {
            report.dropped_days.push((*date, missing));
            continue;
        }
        for col in &mut day_cols {
            fill_gaps(col);
        }
        report.filled_cells += missing;
        for time in &grid {
            timestamps.push(NaiveDateTime::new(*date, *time));
        }
        for (k, col) in day_cols.into_iter().enumerate() {
            columns[k].extend(col.into_iter().map(Option::unwrap));
        }
    }

    if timestamps.is_empty() {
        return Err(MarketDataError::EmptyPanel);
    }
    let panel = PricePanel::new(instruments, timestamps, columns, options.window_len)?;
    Ok((panel, report))
}

/// Accepts ISO-8601 timestamps at minute or second resolution, with either
/// a `T` or a space separator. Seconds are truncated to the minute.
fn parse_minute_timestamp(text: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(text, fmt) {
            return ts.with_second(0).map(|t| t.with_nanosecond(0).unwrap_or(t));
        }
    }
    None
}

use chrono::Timelike;

/// Forward fills `None` runs from the previous value, then back fills any
/// leading run from the first present value. Caller guarantees at least
/// one `Some`.
fn fill_gaps(col: &mut [Option<f64>]) {
    let mut last: Option<f64> = None;
    for cell in col.iter_mut() {
        match cell {
            Some(v) => last = Some(*v),
            None => *cell = last,
        }
    }
    let first = col
        .iter()
        .flatten()
        .next()
        .copied()
        .expect("day retained only if every instrument has a value");
    for cell in col.iter_mut() {
        if cell.is_none() {
            *cell = Some(first);
        } else {
            break;
        }
    }
}

/// Weighted average price series: one `PORTFOLIO` column on the panel's
/// timestamps, `P(t) = sum_k w_k * P_k(t)`.
pub fn build_portfolio_series(
    panel: &PricePanel,
    weights: &WeightVector,
) -> Result<PricePanel, MarketDataError> {
    let mut missing: Vec<&str> = Vec::new();
    let mut w = Vec::with_capacity(panel.n_instruments());
    for name in panel.instruments() {
        match weights.get(name) {
            Some(x) => w.push(x),
            None => missing.push(name),
        }
    }
    let extra: Vec<&str> = weights
        .instruments()
        .filter(|name| !panel.instruments.iter().any(|i| i == name))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::new();
        if !missing.is_empty() {
            let _ = write!(msg, "unweighted: {}", missing.join(", "));
        }
        if !extra.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            let _ = write!(msg, "not in panel: {}", extra.join(", "));
        }
        return Err(MarketDataError::WeightMismatch(msg));
    }

    let rows = panel.timestamps.len();
    let mut series = vec![0.0; rows];
    for (k, wk) in w.iter().enumerate() {
        let col = panel.series(k);
        for (acc, &p) in series.iter_mut().zip(col) {
            *acc += wk * p;
        }
    }
    PricePanel::new(
        vec![PORTFOLIO_NAME.to_string()],
        panel.timestamps.clone(),
        vec![series],
        panel.window_len,
    )
}

/// Log returns sampled within each day at a fixed minute interval.
///
/// A day of `window_len` prices sampled every `interval` minutes yields
/// `window_len / interval` samples and one fewer returns; nothing spans
/// the overnight boundary. `interval` must divide `window_len`.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    instruments: Vec<String>,
    dates: Vec<NaiveDate>,
    /// `values[k][d]` is the return series of instrument `k` on day `d`.
    values: Vec<Vec<Vec<f64>>>,
    sampling_interval: usize,
}

impl ReturnPanel {
    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn sampling_interval(&self) -> usize {
        self.sampling_interval
    }

    pub fn returns_per_day(&self) -> usize {
        self.values
            .first()
            .and_then(|inst| inst.first())
            .map_or(0, Vec::len)
    }

    /// Return series of one instrument on one day.
    pub fn day_returns(&self, instrument: usize, day: usize) -> &[f64] {
        &self.values[instrument][day]
    }

    /// All days of one instrument, concatenated.
    pub fn flat_returns(&self, instrument: usize) -> Vec<f64> {
        self.values[instrument].concat()
    }

    /// Repackages one day as a window of aligned return series.
    pub fn day_window(&self, day: usize) -> DayWindow {
        DayWindow {
            date: self.dates[day],
            instruments: self.instruments.clone(),
            series: self.values.iter().map(|inst| inst[day].clone()).collect(),
        }
    }
}

/// Computes within-day log returns of `panel` at the given sampling
/// interval (in rows, i.e. minutes on the default grid).
pub fn log_returns(panel: &PricePanel, interval: usize) -> Result<ReturnPanel, MarketDataError> {
    if interval == 0 {
        return Err(MarketDataError::ZeroInterval);
    }
    if !panel.window_len.is_multiple_of(interval) {
        return Err(MarketDataError::IntervalNotDivisor {
            interval,
            window_len: panel.window_len,
        });
    }
    let per_day = panel.window_len / interval;
    let mut values = Vec::with_capacity(panel.n_instruments());
    for k in 0..panel.n_instruments() {
        let mut days = Vec::with_capacity(panel.n_days());
        for d in 0..panel.n_days() {
            let prices = panel.day_series(k, d);
            let mut returns = Vec::with_capacity(per_day - 1);
            for s in 1..per_day {
                returns.push((prices[s * interval] / prices[(s - 1) * interval]).ln());
            }
            days.push(returns);
        }
        values.push(days);
    }
    Ok(ReturnPanel {
        instruments: panel.instruments.clone(),
        dates: panel.dates.clone(),
        values,
        sampling_interval: interval,
    })
}
