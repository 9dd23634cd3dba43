//! Co-jump diffusion simulator and risk-frequency calibration.
//!
//! Each asset follows an independent diffusion at one-minute resolution;
//! on top, market-wide jumps hit every asset in the same minute with the
//! same sign (sizes drawn per asset). The planted jump log is ground
//! truth for scoring indicator peaks, and [`calibrate_risk_level`] sweeps
//! the jump frequency grid to find where peak-based warnings best
//! balance sensitivity against specificity.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::indicators::{self, IndicatorConfig, IndicatorError, IndicatorKind, PeakSet};
use crate::jump::{self, JumpError};
use crate::market_data::{MarketDataError, PricePanel, WeightVector};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{field} range ({lo}, {hi}) is invalid")]
    BadRange {
        field: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("{field} = {value} is not a probability")]
    BadProbability { field: &'static str, value: f64 },
    #[error("simulation shape must be non-empty (assets, days, minutes all >= 1)")]
    EmptyShape,
    #[error("minutes_per_day {0} does not fit a trading day (max 600)")]
    DayTooLong(usize),
    #[error("peak axis has {peaks} days but the truth log has {truth}")]
    AxisMismatch { peaks: usize, truth: usize },
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("grid frequencies must be strictly increasing within (0, 1)")]
    BadGrid,
    #[error("calibration needs at least one run")]
    ZeroRuns,
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Jump(#[from] JumpError),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
}

/// Price increment model between jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionMode {
    /// `dP = mu P dt + sigma P dW`: drift and volatility scale with the
    /// price level, so annualised parameters mean what they say.
    Geometric,
    /// `dP = mu dt + sigma dW` in absolute price units.
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_assets: usize,
    pub n_days: usize,
    pub minutes_per_day: usize,
    /// Annualised drift, drawn per asset from this range.
    pub drift_range: (f64, f64),
    /// Annualised volatility, drawn per asset.
    pub volatility_range: (f64, f64),
    pub initial_price_range: (f64, f64),
    /// Per-minute probability of a market-wide upward jump.
    pub cojump_prob_pos: f64,
    /// Per-minute probability of a market-wide downward jump.
    pub cojump_prob_neg: f64,
    /// Upward jump size range, absolute price units, drawn per asset.
    pub jump_size_pos: (f64, f64),
    /// Downward jump magnitude range, absolute price units.
    pub jump_size_neg: (f64, f64),
    pub diffusion: DiffusionMode,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_assets: 5,
            n_days: 250,
            minutes_per_day: 240,
            drift_range: (0.1, 0.2),
            volatility_range: (0.1, 0.3),
            initial_price_range: (500.0, 1000.0),
            cojump_prob_pos: 0.001,
            cojump_prob_neg: 0.001,
            jump_size_pos: (10.0, 15.0),
            jump_size_neg: (15.0, 20.0),
            diffusion: DiffusionMode::Geometric,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date"),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_assets == 0 || self.n_days == 0 || self.minutes_per_day == 0 {
            return Err(SimError::EmptyShape);
        }
        if self.minutes_per_day > 600 {
            return Err(SimError::DayTooLong(self.minutes_per_day));
        }
        let ranges: [(&'static str, (f64, f64), f64); 5] = [
            ("drift", self.drift_range, f64::NEG_INFINITY),
            ("volatility", self.volatility_range, 0.0),
            ("initial_price", self.initial_price_range, f64::MIN_POSITIVE),
            ("jump_size_pos", self.jump_size_pos, 0.0),
            ("jump_size_neg", self.jump_size_neg, 0.0),
        ];
        for (field, (lo, hi), min) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                return Err(SimError::BadRange { field, lo, hi });
            }
        }
        for (field, p) in [
            ("cojump_prob_pos", self.cojump_prob_pos),
            ("cojump_prob_neg", self.cojump_prob_neg),
        ] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(SimError::BadProbability { field, value: p });
            }
        }
        Ok(())
    }

    /// Total one-minute increments (= returns) per asset.
    pub fn total_minutes(&self) -> usize {
        self.n_days * self.minutes_per_day
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpDirection {
    Positive,
    Negative,
}

/// One planted market-wide jump.
#[derive(Debug, Clone, PartialEq)]
pub struct CojumpEvent {
    pub day: usize,
    pub minute: usize,
    pub direction: JumpDirection,
    /// Magnitude applied to each asset (always positive; direction
    /// carries the sign).
    pub sizes: Vec<f64>,
}

/// The ground-truth jump record of one simulation.
#[derive(Debug, Clone, Default)]
pub struct CojumpLog {
    pub events: Vec<CojumpEvent>,
    pub n_days: usize,
}

impl CojumpLog {
    /// Sorted distinct days containing at least one event.
    pub fn jump_days(&self) -> Vec<usize> {
        let mut days: Vec<usize> = self.events.iter().map(|e| e.day).collect();
        days.sort_unstable();
        days.dedup();
        days
    }

    /// Day-indexed mask: true when the day had any event.
    pub fn day_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_days];
        for e in &self.events {
            mask[e.day] = true;
        }
        mask
    }

    pub fn count(&self, direction: JumpDirection) -> usize {
        self.events
            .iter()
            .filter(|e| e.direction == direction)
            .count()
    }
}

/// Per-asset parameters drawn at the start of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetParams {
    pub drift: f64,
    pub volatility: f64,
    pub initial_price: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Post-increment prices; row (d, m) is the price after minute m of
    /// day d. The `initial_price` in [`AssetParams`] precedes row 0, so
    /// the panel has exactly one row per simulated return.
    pub panel: PricePanel,
    pub truth: CojumpLog,
    pub params: Vec<AssetParams>,
    /// Steps clamped at the price floor of 1.0.
    pub floored_steps: usize,
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Simulates the panel and its planted co-jumps.
///
/// Draw order is part of the output contract (same config, same bytes):
/// first 3 uniforms per asset (drift, volatility, initial price), then
/// per minute one uniform per jump direction, one normal per asset, and,
/// for each direction that fired, one uniform size per asset. Prices are
/// floored at 1.0; floored steps are counted, not hidden.
pub fn simulate_paths(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params: Vec<AssetParams> = (0..config.n_assets)
        .map(|_| AssetParams {
            drift: sample_range(&mut rng, config.drift_range),
            volatility: sample_range(&mut rng, config.volatility_range),
            initial_price: sample_range(&mut rng, config.initial_price_range),
        })
        .collect();

    let total = config.total_minutes();
    let dt = 1.0 / total as f64;
    let sqrt_dt = dt.sqrt();
    let mut prices: Vec<f64> = params.iter().map(|p| p.initial_price).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(total); config.n_assets];
    let mut events = Vec::new();
    let mut floored_steps = 0usize;

    for t in 0..total {
        let fire_pos = rng.random::<f64>() < config.cojump_prob_pos;
        let fire_neg = rng.random::<f64>() < config.cojump_prob_neg;
        for (k, p) in prices.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let a = &params[k];
            *p += match config.diffusion {
                DiffusionMode::Geometric => a.drift * dt * *p + a.volatility * sqrt_dt * *p * z,
                DiffusionMode::Arithmetic => a.drift * dt + a.volatility * sqrt_dt * z,
            };
        }
        let (day, minute) = (t / config.minutes_per_day, t % config.minutes_per_day);
        if fire_pos {
            let sizes: Vec<f64> = (0..config.n_assets)
                .map(|_| sample_range(&mut rng, config.jump_size_pos))
                .collect();
            for (p, s) in prices.iter_mut().zip(&sizes) {
                *p += s;
            }
            events.push(CojumpEvent {
                day,
                minute,
                direction: JumpDirection::Positive,
                sizes,
            });
        }
        if fire_neg {
            let sizes: Vec<f64> = (0..config.n_assets)
                .map(|_| sample_range(&mut rng, config.jump_size_neg))
                .collect();
            for (p, s) in prices.iter_mut().zip(&sizes) {
                *p -= s;
            }
            events.push(CojumpEvent {
                day,
                minute,
                direction: JumpDirection::Negative,
                sizes,
            });
        }
        for (k, p) in prices.iter_mut().enumerate() {
            if *p < 1.0 {
                *p = 1.0;
                floored_steps += 1;
            }
            columns[k].push(*p);
        }
    }

    let open = NaiveTime::from_hms_opt(9, 30, 0).expect("valid time");
    let mut timestamps = Vec::with_capacity(total);
    for d in 0..config.n_days {
        let date = config.start_date + chrono::Days::new(d as u64);
        for m in 0..config.minutes_per_day {
            timestamps.push(NaiveDateTime::new(
                date,
                open + chrono::Duration::minutes(m as i64),
            ));
        }
    }
    let labels = (0..config.n_assets).map(|k| format!("A{k:02}")).collect();
    let panel = PricePanel::new(labels, timestamps, columns, config.minutes_per_day)?;
    Ok(SimOutput {
        panel,
        truth: CojumpLog {
            events,
            n_days: config.n_days,
        },
        params,
        floored_steps,
    })
}

/// Day-level confusion counts of warning coverage against truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionSummary {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionSummary {
    /// Fraction of event days covered; `None` when there are none.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    /// Fraction of quiet days left uncovered; `None` when there are none.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.true_negative, self.true_negative + self.false_positive)
    }

    /// `(1 - specificity)^2 + (sensitivity - 1)^2`; the ideal warning
    /// scores 0. Undefined when either rate is.
    pub fn objective(&self) -> Option<f64> {
        let sens = self.sensitivity()?;
        let spec = self.specificity()?;
        Some((1.0 - spec) * (1.0 - spec) + (sens - 1.0) * (sens - 1.0))
    }

    /// Objective with an empty truth class scored as perfectly
    /// classified: when no day is negative (or none is positive) that
    /// term contributes zero instead of a gap. High jump frequencies
    /// saturate every day to positive, and grid aggregation needs a
    /// finite, comparable value there; per-run reports keep the strict
    /// [`Self::objective`].
    pub fn objective_vacuous(&self) -> Option<f64> {
        let miss = self.sensitivity().map_or(0.0, |s| (s - 1.0) * (s - 1.0));
        let alarm = self.specificity().map_or(0.0, |p| (1.0 - p) * (1.0 - p));
        if self.sensitivity().is_none() && self.specificity().is_none() {
            return None;
        }
        Some(miss + alarm)
    }
}

/// Counts day-level agreement between a prediction mask and a truth mask.
pub fn confusion_from_masks(
    predicted: &[bool],
    positive: &[bool],
) -> Result<ConfusionSummary, SimError> {
    if predicted.len() != positive.len() {
        return Err(SimError::AxisMismatch {
            peaks: predicted.len(),
            truth: positive.len(),
        });
    }
    let mut c = ConfusionSummary::default();
    for (&pred, &pos) in predicted.iter().zip(positive) {
        match (pred, pos) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, true) => c.false_negative += 1,
            (false, false) => c.true_negative += 1,
        }
    }
    Ok(c)
}

/// Scores peak-based warnings against the planted jump log: a day is
/// predicted when a risk interval covers it, positive when any co-jump
/// landed on it.
pub fn evaluate_warning(
    peaks: &PeakSet,
    truth: &CojumpLog,
    horizon: usize,
) -> Result<ConfusionSummary, SimError> {
    if peaks.series_len != truth.n_days {
        return Err(SimError::AxisMismatch {
            peaks: peaks.series_len,
            truth: truth.n_days,
        });
    }
    let predicted = indicators::risk_intervals(peaks, horizon).covered();
    confusion_from_masks(&predicted, &truth.day_mask())
}

/// What counts as a positive day when scoring calibration runs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ScoringMode {
    /// The planted jump log itself.
    PlantedTruth,
    /// Days the bipower jump test flags on the equal-weight portfolio;
    /// measures agreement with a detector rather than with truth.
    BnsDetected {
        alpha: f64,
        sampling_interval: usize,
    },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    /// Template simulation; its jump probabilities and seed are
    /// overridden per grid cell.
    pub base: SimConfig,
    pub indicator: IndicatorConfig,
    /// Risk-interval length after each peak, in days.
    pub horizon: usize,
    pub scoring: ScoringMode,
    pub master_seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            base: SimConfig::default(),
            indicator: IndicatorConfig::default(),
            horizon: 9,
            scoring: ScoringMode::PlantedTruth,
            master_seed: 0,
        }
    }
}

/// One (frequency, run) grid cell, scored for both indicators.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationCell {
    pub frequency: f64,
    pub run: usize,
    pub mutual_information: ConfusionSummary,
    pub edge_overlap: ConfusionSummary,
}

impl CalibrationCell {
    pub fn summary(&self, kind: IndicatorKind) -> ConfusionSummary {
        match kind {
            IndicatorKind::MutualInformation => self.mutual_information,
            IndicatorKind::EdgeOverlap => self.edge_overlap,
        }
    }
}

/// Grid aggregate for one indicator.
#[derive(Debug, Clone)]
pub struct CalibrationSummary {
    pub kind: IndicatorKind,
    /// Mean vacuous objective per grid frequency, averaged over the
    /// runs where it is defined; +inf where it never is.
    pub mean_objective: Vec<f64>,
    /// Grid frequency minimising the mean objective (ties go to the
    /// lower frequency).
    pub optimal_frequency: f64,
    /// Per-run argmin frequency; `None` when a run defined no objective.
    pub run_optima: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub frequencies: Vec<f64>,
    pub runs: usize,
    /// Frequency-major, run-minor.
    pub cells: Vec<CalibrationCell>,
    pub mutual_information: CalibrationSummary,
    pub edge_overlap: CalibrationSummary,
}

impl CalibrationOutcome {
    pub fn summary(&self, kind: IndicatorKind) -> &CalibrationSummary {
        match kind {
            IndicatorKind::MutualInformation => &self.mutual_information,
            IndicatorKind::EdgeOverlap => &self.edge_overlap,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-cell seed: a hash of the master seed with the grid
/// coordinates, so cells are decorrelated and the grid can grow without
/// reshuffling existing cells.
pub fn derived_seed(master: u64, freq_idx: usize, run_idx: usize) -> u64 {
    let a = mix(master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(freq_idx as u64 + 1)));
    mix(a ^ 0xD1B5_4A32_D192_ED03u64.wrapping_mul(run_idx as u64 + 1))
}

/// Sweeps the co-jump frequency grid: for every frequency and run,
/// simulates a fresh market, computes both indicator series, expands
/// their peaks into risk intervals and scores coverage.
pub fn calibrate_risk_level(
    frequencies: &[f64],
    runs: usize,
    settings: &CalibrationSettings,
) -> Result<CalibrationOutcome, SimError> {
    if frequencies.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    if !frequencies.windows(2).all(|w| w[0] < w[1])
        || !frequencies.iter().all(|&f| f > 0.0 && f < 1.0)
    {
        return Err(SimError::BadGrid);
    }
    if runs == 0 {
        return Err(SimError::ZeroRuns);
    }
    settings.base.validate()?;

    let jobs: Vec<(usize, usize)> = (0..frequencies.len())
        .flat_map(|fi| (0..runs).map(move |ri| (fi, ri)))
        .collect();
    let cells: Vec<CalibrationCell> = jobs
        .into_par_iter()
        .map(|(fi, ri)| calibration_cell(frequencies[fi], fi, ri, settings))
        .collect::<Result<_, _>>()?;

    let summarise = |kind: IndicatorKind| -> CalibrationSummary {
        let mut mean_objective = Vec::with_capacity(frequencies.len());
        for fi in 0..frequencies.len() {
            let defined: Vec<f64> = (0..runs)
                .filter_map(|ri| cells[fi * runs + ri].summary(kind).objective_vacuous())
                .collect();
            mean_objective.push(if defined.is_empty() {
                f64::INFINITY
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            });
        }
        let best = mean_objective
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("objectives are not NaN"))
            .map(|(i, _)| i)
            .expect("grid is non-empty");
        let run_optima = (0..runs)
            .map(|ri| {
                let mut best: Option<(usize, f64)> = None;
                for fi in 0..frequencies.len() {
                    if let Some(obj) = cells[fi * runs + ri].summary(kind).objective_vacuous() {
                        if best.is_none_or(|(_, b)| obj < b) {
                            best = Some((fi, obj));
                        }
                    }
                }
                best.map(|(fi, _)| frequencies[fi])
            })
            .collect();
        CalibrationSummary {
            kind,
            mean_objective,
            optimal_frequency: frequencies[best],
            run_optima,
        }
    };

    Ok(CalibrationOutcome {
        frequencies: frequencies.to_vec(),
        runs,
        mutual_information: summarise(IndicatorKind::MutualInformation),
        edge_overlap: summarise(IndicatorKind::EdgeOverlap),
        cells,
    })
}

fn calibration_cell(
    frequency: f64,
    freq_idx: usize,
    run_idx: usize,
    settings: &CalibrationSettings,
) -> Result<CalibrationCell, SimError> {
    let config = SimConfig {
        cojump_prob_pos: frequency,
        cojump_prob_neg: frequency,
        seed: derived_seed(settings.master_seed, freq_idx, run_idx),
        ..settings.base
    };
    let sim = simulate_paths(&config)?;
    let run = indicators::indicator_series(&sim.panel, &settings.indicator)?;

    let positive = match settings.scoring {
        ScoringMode::PlantedTruth => sim.truth.day_mask(),
        ScoringMode::BnsDetected {
            alpha,
            sampling_interval,
        } => {
            let weights = WeightVector::equal(sim.panel.instruments())?;
            let portfolio = crate::market_data::build_portfolio_series(&sim.panel, &weights)?;
            let returns = crate::market_data::log_returns(&portfolio, sampling_interval)?;
            jump::bns_by_day(&returns, 0, alpha)?
                .iter()
                .map(|r| r.bns.is_jump)
                .collect()
        }
    };

    let score = |kind: IndicatorKind| -> Result<ConfusionSummary, SimError> {
        let peaks = indicators::detect_peaks(run.series(kind))?;
        let predicted = indicators::risk_intervals(&peaks, settings.horizon).covered();
        confusion_from_masks(&predicted, &positive)
    };
    Ok(CalibrationCell {
        frequency,
        run: run_idx,
        mutual_information: score(IndicatorKind::MutualInformation)?,
        edge_overlap: score(IndicatorKind::EdgeOverlap)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::Peak;
    use approx::assert_abs_diff_eq;

    fn small_config(seed: u64) -> SimConfig {
        SimConfig {
            n_assets: 2,
            n_days: 3,
            minutes_per_day: 30,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn panel_has_one_row_per_return() {
        let out = simulate_paths(&small_config(1)).unwrap();
        assert_eq!(out.panel.n_days(), 3);
        assert_eq!(out.panel.window_len(), 30);
        assert_eq!(out.panel.series(0).len(), 90);
        assert_eq!(out.panel.n_instruments(), 2);
        // Initial prices live in params, not the panel.
        for p in &out.params {
            let range = SimConfig::default().initial_price_range;
            assert!(p.initial_price >= range.0 && p.initial_price < range.1);
        }
    }

    #[test]
    fn same_seed_reproduces_bytes_different_seed_does_not() {
        let a = simulate_paths(&small_config(42)).unwrap();
        let b = simulate_paths(&small_config(42)).unwrap();
        assert_eq!(a.panel.series(0), b.panel.series(0));
        assert_eq!(a.panel.series(1), b.panel.series(1));
        assert_eq!(a.truth.events, b.truth.events);
        let c = simulate_paths(&small_config(43)).unwrap();
        assert_ne!(a.panel.series(0), c.panel.series(0));
    }

    #[test]
    fn zero_probability_plants_nothing() {
        let config = SimConfig {
            cojump_prob_pos: 0.0,
            cojump_prob_neg: 0.0,
            ..small_config(7)
        };
        let out = simulate_paths(&config).unwrap();
        assert!(out.truth.events.is_empty());
        assert_eq!(out.floored_steps, 0);
    }

    #[test]
    fn pure_jump_process_moves_exactly_by_the_logged_sizes() {
        // No diffusion: between events the price is constant and events
        // move it by exactly the logged per-asset size. Replaying the
        // log must reproduce the panel bit for bit.
        let config = SimConfig {
            drift_range: (0.0, 0.0),
            volatility_range: (0.0, 0.0),
            initial_price_range: (5000.0, 6000.0),
            cojump_prob_pos: 0.25,
            cojump_prob_neg: 0.25,
            ..small_config(13)
        };
        let out = simulate_paths(&config).unwrap();
        assert_eq!(out.floored_steps, 0);
        assert!(!out.truth.events.is_empty());
        assert!(out.truth.count(JumpDirection::Positive) > 0);
        assert!(out.truth.count(JumpDirection::Negative) > 0);

        let mpd = config.minutes_per_day;
        for (k, param) in out.params.iter().enumerate() {
            let mut price = param.initial_price;
            for (t, &observed) in out.panel.series(k).iter().enumerate() {
                let hits = out
                    .truth
                    .events
                    .iter()
                    .filter(|e| e.day * mpd + e.minute == t);
                for e in hits {
                    assert_eq!(e.sizes.len(), config.n_assets);
                    match e.direction {
                        JumpDirection::Positive => {
                            assert!(e.sizes[k] >= 10.0 && e.sizes[k] < 15.0);
                            price += e.sizes[k];
                        }
                        JumpDirection::Negative => {
                            assert!(e.sizes[k] >= 15.0 && e.sizes[k] < 20.0);
                            price -= e.sizes[k];
                        }
                    }
                }
                assert_eq!(observed, price, "asset {k} minute {t}");
            }
        }
    }

    #[test]
    fn counts_stay_within_binomial_bounds() {
        let config = SimConfig {
            n_days: 10,
            minutes_per_day: 240,
            cojump_prob_pos: 0.02,
            cojump_prob_neg: 0.01,
            ..small_config(11)
        };
        let out = simulate_paths(&config).unwrap();
        let total = 2400f64;
        for (p, direction) in [
            (0.02, JumpDirection::Positive),
            (0.01, JumpDirection::Negative),
        ] {
            let mean = p * total;
            let sd = (total * p * (1.0 - p)).sqrt();
            let count = out.truth.count(direction) as f64;
            assert!(
                (count - mean).abs() <= 3.0 * sd,
                "{direction:?}: {count} vs {mean} +- {sd}"
            );
        }
    }

    #[test]
    fn floor_clamps_and_counts() {
        let config = SimConfig {
            jump_size_neg: (1e6, 2e6),
            cojump_prob_neg: 0.2,
            cojump_prob_pos: 0.0,
            ..small_config(3)
        };
        let out = simulate_paths(&config).unwrap();
        assert!(out.floored_steps > 0);
        for k in 0..2 {
            assert!(out.panel.series(k).iter().all(|&p| p >= 1.0));
        }
    }

    #[test]
    fn arithmetic_mode_differs_from_geometric() {
        let geo = simulate_paths(&small_config(5)).unwrap();
        let arith = simulate_paths(&SimConfig {
            diffusion: DiffusionMode::Arithmetic,
            ..small_config(5)
        })
        .unwrap();
        assert_ne!(geo.panel.series(0), arith.panel.series(0));
    }

    #[test]
    fn validation_rejects_nonsense() {
        let mut c = small_config(0);
        c.volatility_range = (0.3, 0.1);
        assert!(matches!(c.validate(), Err(SimError::BadRange { .. })));
        c = small_config(0);
        c.cojump_prob_pos = 1.5;
        assert!(matches!(c.validate(), Err(SimError::BadProbability { .. })));
        c = small_config(0);
        c.n_assets = 0;
        assert!(matches!(c.validate(), Err(SimError::EmptyShape)));
    }

    fn manual_peaks(days: &[usize], len: usize) -> PeakSet {
        PeakSet {
            peaks: days
                .iter()
                .map(|&index| Peak {
                    index,
                    value: 1.0,
                    delta_xi: 0.0,
                })
                .collect(),
            series_len: len,
            short_segments: 0,
        }
    }

    fn manual_truth(days: &[usize], n_days: usize) -> CojumpLog {
        CojumpLog {
            events: days
                .iter()
                .map(|&day| CojumpEvent {
                    day,
                    minute: 0,
                    direction: JumpDirection::Positive,
                    sizes: vec![1.0],
                })
                .collect(),
            n_days,
        }
    }

    #[test]
    fn confusion_counts_match_brute_force_day_marking() {
        // Jumps on days 5 and 50, one peak on day 3, horizon 9: the
        // interval [3, 12] covers day 5 (hit) plus nine quiet days.
        let truth = manual_truth(&[5, 50], 250);
        let peaks = manual_peaks(&[3], 250);
        let c = evaluate_warning(&peaks, &truth, 9).unwrap();
        assert_eq!(c.true_positive, 1);
        assert_eq!(c.false_negative, 1);
        assert_eq!(c.false_positive, 9);
        assert_eq!(c.true_negative, 239);
        assert_abs_diff_eq!(c.sensitivity().unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.specificity().unwrap(), 239.0 / 248.0, epsilon = 1e-15);
    }

    #[test]
    fn axis_mismatch_is_rejected() {
        let truth = manual_truth(&[5], 100);
        let peaks = manual_peaks(&[3], 99);
        assert!(matches!(
            evaluate_warning(&peaks, &truth, 9),
            Err(SimError::AxisMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_rates_are_none_not_nan() {
        let no_positives =
            evaluate_warning(&manual_peaks(&[], 50), &manual_truth(&[], 50), 9).unwrap();
        assert_eq!(no_positives.sensitivity(), None);
        assert_eq!(no_positives.objective(), None);
        assert_eq!(no_positives.specificity(), Some(1.0));

        let all_positive =
            evaluate_warning(&manual_peaks(&[], 3), &manual_truth(&[0, 1, 2], 3), 0).unwrap();
        assert_eq!(all_positive.specificity(), None);
        assert_eq!(all_positive.sensitivity(), Some(0.0));

        // The vacuous variant scores the empty class as perfect.
        assert_eq!(no_positives.objective_vacuous(), Some(0.0));
        assert_eq!(all_positive.objective_vacuous(), Some(1.0));
    }

    #[test]
    fn saturated_frequencies_still_aggregate_finitely() {
        // At 0.5 per minute per direction every simulated day contains a
        // co-jump, so strict specificity is a gap in every run; the grid
        // aggregate must still come out finite.
        let settings = CalibrationSettings {
            base: SimConfig {
                n_assets: 2,
                n_days: 8,
                minutes_per_day: 40,
                ..SimConfig::default()
            },
            ..CalibrationSettings::default()
        };
        let outcome = calibrate_risk_level(&[0.5], 2, &settings).unwrap();
        for cell in &outcome.cells {
            assert_eq!(cell.mutual_information.specificity(), None);
            assert_eq!(cell.mutual_information.objective(), None);
        }
        assert!(outcome.mutual_information.mean_objective[0].is_finite());
        assert!(outcome.edge_overlap.mean_objective[0].is_finite());
    }

    #[test]
    fn perfect_information_beats_no_warning() {
        let config = SimConfig {
            n_days: 60,
            cojump_prob_pos: 0.0008,
            cojump_prob_neg: 0.0008,
            ..small_config(21)
        };
        let out = simulate_paths(&config).unwrap();
        let jump_days = out.truth.jump_days();
        assert!(!jump_days.is_empty(), "seed must plant at least one jump");
        assert!(jump_days.len() < 30, "too many jump days for the bound");

        let perfect = evaluate_warning(&manual_peaks(&jump_days, 60), &out.truth, 9).unwrap();
        assert_eq!(perfect.sensitivity(), Some(1.0));
        let empty = evaluate_warning(&manual_peaks(&[], 60), &out.truth, 9).unwrap();
        assert!(perfect.objective().unwrap() < empty.objective().unwrap());
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for fi in 0..50 {
            for ri in 0..50 {
                assert!(seen.insert(derived_seed(99, fi, ri)));
            }
        }
        assert_eq!(derived_seed(99, 3, 7), derived_seed(99, 3, 7));
        assert_ne!(derived_seed(98, 3, 7), derived_seed(99, 3, 7));
    }

    fn tiny_settings(seed: u64) -> CalibrationSettings {
        CalibrationSettings {
            base: SimConfig {
                n_assets: 3,
                n_days: 25,
                minutes_per_day: 40,
                ..SimConfig::default()
            },
            master_seed: seed,
            ..CalibrationSettings::default()
        }
    }

    #[test]
    fn calibration_grid_shape_and_determinism() {
        let freqs = [0.02, 0.05];
        let outcome = calibrate_risk_level(&freqs, 2, &tiny_settings(5)).unwrap();
        assert_eq!(outcome.cells.len(), 4);
        assert_eq!(outcome.mutual_information.mean_objective.len(), 2);
        assert!(freqs.contains(&outcome.mutual_information.optimal_frequency));
        assert!(freqs.contains(&outcome.edge_overlap.optimal_frequency));
        assert_eq!(outcome.mutual_information.run_optima.len(), 2);
        // Cells are laid out frequency-major.
        assert_eq!(outcome.cells[0].frequency, 0.02);
        assert_eq!(outcome.cells[0].run, 0);
        assert_eq!(outcome.cells[3].frequency, 0.05);
        assert_eq!(outcome.cells[3].run, 1);

        let again = calibrate_risk_level(&freqs, 2, &tiny_settings(5)).unwrap();
        for (a, b) in outcome.cells.iter().zip(&again.cells) {
            assert_eq!(a.mutual_information, b.mutual_information);
            assert_eq!(a.edge_overlap, b.edge_overlap);
        }
    }

    #[test]
    fn calibration_rejects_bad_grids() {
        let s = tiny_settings(1);
        assert!(matches!(
            calibrate_risk_level(&[], 1, &s),
            Err(SimError::EmptyGrid)
        ));
        assert!(matches!(
            calibrate_risk_level(&[0.05, 0.01], 1, &s),
            Err(SimError::BadGrid)
        ));
        assert!(matches!(
            calibrate_risk_level(&[0.0], 1, &s),
            Err(SimError::BadGrid)
        ));
        assert!(matches!(
            calibrate_risk_level(&[0.01], 0, &s),
            Err(SimError::ZeroRuns)
        ));
    }

    #[test]
    fn bns_scoring_mode_runs() {
        let settings = CalibrationSettings {
            scoring: ScoringMode::BnsDetected {
                alpha: 0.01,
                sampling_interval: 5,
            },
            ..tiny_settings(9)
        };
        let outcome = calibrate_risk_level(&[0.03], 1, &settings).unwrap();
        assert_eq!(outcome.cells.len(), 1);
    }
}
