//! Daily indicator series over a price panel, peak detection, and risk
//! intervals.
//!
//! Each trading day is condensed into two numbers: the average interlayer
//! mutual information and the average edge overlap of that day's
//! multiplex recurrence network. Sharp upward spikes in either series
//! mark elevated systemic stress; a detected peak opens a risk interval
//! covering the peak day and a fixed horizon after it.

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::market_data::{self, DayWindow, MarketDataError, PricePanel};
use crate::mrn::{self, MiNormalization, MrnError, OverlapNormalization};
use crate::recurrence::{EmbeddingConfig, ThresholdPolicy};

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("panel has no days")]
    EmptyPanel,
    #[error("indicators need at least 2 instruments, got {0}")]
    TooFewInstruments(usize),
    #[error("peak detection needs at least 3 observations, got {0}")]
    SeriesTooShort(usize),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
}

/// The two multiplex statistics tracked per day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorKind {
    MutualInformation,
    EdgeOverlap,
}

impl IndicatorKind {
    /// Column suffix used in report CSVs.
    pub fn short_label(self) -> &'static str {
        match self {
            IndicatorKind::MutualInformation => "I",
            IndicatorKind::EdgeOverlap => "omega",
        }
    }
}

/// What each instrument's daily window contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// Raw minute prices.
    Prices,
    /// One-minute log returns (one fewer observation per day).
    LogReturns,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct IndicatorConfig {
    pub embedding: EmbeddingConfig,
    pub threshold: ThresholdPolicy,
    pub input: InputMode,
    pub mi_normalization: MiNormalization,
    pub overlap_normalization: OverlapNormalization,
    /// A day whose degenerate-layer share exceeds this becomes a gap.
    pub max_degenerate_fraction: f64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingConfig::default(),
            threshold: ThresholdPolicy::default(),
            input: InputMode::LogReturns,
            mi_normalization: MiNormalization::default(),
            overlap_normalization: OverlapNormalization::default(),
            max_degenerate_fraction: 0.5,
        }
    }
}

/// One indicator over the panel's trading days; `None` marks a gap day.
#[derive(Debug, Clone)]
pub struct IndicatorSeries {
    pub kind: IndicatorKind,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Option<f64>>,
}

impl IndicatorSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Both daily indicator series plus the days that failed outright.
#[derive(Debug, Clone)]
pub struct IndicatorRun {
    pub mutual_information: IndicatorSeries,
    pub edge_overlap: IndicatorSeries,
    /// Days with no usable multiplex network and why.
    pub gap_days: Vec<(NaiveDate, String)>,
}

impl IndicatorRun {
    pub fn series(&self, kind: IndicatorKind) -> &IndicatorSeries {
        match kind {
            IndicatorKind::MutualInformation => &self.mutual_information,
            IndicatorKind::EdgeOverlap => &self.edge_overlap,
        }
    }
}

/// Computes both daily indicators over the panel.
///
/// Day failures (window too short, every layer pair empty, too many
/// degenerate layers) become gaps rather than aborting the run: a single
/// bad day must not cost the surrounding series.
pub fn indicator_series(
    panel: &PricePanel,
    config: &IndicatorConfig,
) -> Result<IndicatorRun, IndicatorError> {
    if panel.n_days() == 0 {
        return Err(IndicatorError::EmptyPanel);
    }
    if panel.n_instruments() < 2 {
        return Err(IndicatorError::TooFewInstruments(panel.n_instruments()));
    }
    let returns = match config.input {
        InputMode::LogReturns => Some(market_data::log_returns(panel, 1)?),
        InputMode::Prices => None,
    };
    let window_for = |d: usize| -> DayWindow {
        match &returns {
            Some(rp) => rp.day_window(d),
            None => panel.day(d),
        }
    };

    let per_day: Vec<(Option<f64>, Option<f64>, Option<String>)> = (0..panel.n_days())
        .into_par_iter()
        .map(|d| day_values(&window_for(d), config))
        .collect();

    let dates = panel.dates().to_vec();
    let mut gap_days = Vec::new();
    let mut mi_values = Vec::with_capacity(per_day.len());
    let mut ov_values = Vec::with_capacity(per_day.len());
    for (d, (mi, ov, reason)) in per_day.into_iter().enumerate() {
        if let Some(reason) = reason {
            gap_days.push((dates[d], reason));
        }
        mi_values.push(mi);
        ov_values.push(ov);
    }
    Ok(IndicatorRun {
        mutual_information: IndicatorSeries {
            kind: IndicatorKind::MutualInformation,
            dates: dates.clone(),
            values: mi_values,
        },
        edge_overlap: IndicatorSeries {
            kind: IndicatorKind::EdgeOverlap,
            dates,
            values: ov_values,
        },
        gap_days,
    })
}

fn day_values(
    window: &DayWindow,
    config: &IndicatorConfig,
) -> (Option<f64>, Option<f64>, Option<String>) {
    let mrn = match mrn::build_mrn(window, &config.embedding, &config.threshold) {
        Ok(m) => m,
        Err(e) => return (None, None, Some(e.to_string())),
    };
    let degenerate_share = mrn.degenerate_layers() as f64 / mrn.n_layers() as f64;
    if degenerate_share > config.max_degenerate_fraction {
        return (
            None,
            None,
            Some(format!(
                "{:.0}% of layers are degenerate",
                degenerate_share * 100.0
            )),
        );
    }
    let mi = mrn::average_mutual_information(&mrn, config.mi_normalization).ok();
    let ov = match mrn::average_edge_overlap(&mrn, config.overlap_normalization) {
        Ok(o) => Some(o.value),
        Err(MrnError::EmptyLayers) => None,
        Err(_) => None,
    };
    (mi, ov, None)
}

/// Quantile of |adjacent difference| that a jump must clear to count as
/// a peak.
pub const PEAK_JUMP_QUANTILE: f64 = 0.95;
/// Segments shorter than this use their maximum |difference| as the
/// threshold, which suppresses peaks: too little data for a stable
/// quantile.
pub const SHORT_SEGMENT_LEN: usize = 20;

/// A detected indicator peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Position on the series' day axis.
    pub index: usize,
    pub value: f64,
    /// The jump threshold of the segment the peak sits in.
    pub delta_xi: f64,
}

/// All peaks of one indicator series.
#[derive(Debug, Clone)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub series_len: usize,
    /// Gap-free segments too short for the quantile rule.
    pub short_segments: usize,
}

impl PeakSet {
    pub fn days(&self) -> Vec<usize> {
        self.peaks.iter().map(|p| p.index).collect()
    }
}

/// Detects sharp local maxima of an indicator series.
///
/// The series is split into maximal gap-free segments. Within each
/// segment the jump threshold is the nearest-rank
/// [`PEAK_JUMP_QUANTILE`] of |adjacent differences|, and an interior
/// point is a peak when it exceeds both neighbours by strictly more
/// than that threshold. Segment endpoints are never peaks, so a gap or
/// series boundary cannot manufacture one.
pub fn detect_peaks(series: &IndicatorSeries) -> Result<PeakSet, IndicatorError> {
    let t = series.values.len();
    if t < 3 {
        return Err(IndicatorError::SeriesTooShort(t));
    }
    let mut peaks = Vec::new();
    let mut short_segments = 0usize;

    let mut start = 0usize;
    while start < t {
        if series.values[start].is_none() {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < t && series.values[end].is_some() {
            end += 1;
        }
        let segment: Vec<f64> = series.values[start..end]
            .iter()
            .map(|v| v.expect("segment bounds scanned over Some"))
            .collect();
        if segment.len() >= 3 {
            let mut diffs: Vec<f64> = segment.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            let delta_xi = if segment.len() < SHORT_SEGMENT_LEN {
                short_segments += 1;
                diffs.iter().cloned().fold(0.0, f64::max)
            } else {
                diffs.sort_by(|a, b| a.partial_cmp(b).expect("finite diffs"));
                let k = diffs.len();
                let rank = ((PEAK_JUMP_QUANTILE * k as f64).ceil() as usize).clamp(1, k);
                diffs[rank - 1]
            };
            for p in 1..segment.len() - 1 {
                let left = segment[p] - segment[p - 1];
                let right = segment[p] - segment[p + 1];
                if left * right > 0.0 && left > delta_xi && right > delta_xi {
                    peaks.push(Peak {
                        index: start + p,
                        value: segment[p],
                        delta_xi,
                    });
                }
            }
        }
        start = end;
    }
    Ok(PeakSet {
        peaks,
        series_len: t,
        short_segments,
    })
}

/// Union of per-peak risk windows, as disjoint inclusive index ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    pub intervals: Vec<(usize, usize)>,
    pub series_len: usize,
}

impl IntervalSet {
    pub fn contains(&self, day: usize) -> bool {
        self.intervals
            .iter()
            .any(|&(lo, hi)| (lo..=hi).contains(&day))
    }

    /// Day-indexed coverage mask.
    pub fn covered(&self) -> Vec<bool> {
        let mut mask = vec![false; self.series_len];
        for &(lo, hi) in &self.intervals {
            for cell in &mut mask[lo..=hi.min(self.series_len - 1)] {
                *cell = true;
            }
        }
        mask
    }

    pub fn covered_days(&self) -> usize {
        self.intervals.iter().map(|&(lo, hi)| hi - lo + 1).sum()
    }
}

/// Expands each peak into the inclusive interval
/// `[peak, min(peak + horizon, T-1)]` and merges overlapping intervals.
/// Merely adjacent intervals stay separate.
pub fn risk_intervals(peaks: &PeakSet, horizon: usize) -> IntervalSet {
    let t = peaks.series_len;
    let mut intervals: Vec<(usize, usize)> = Vec::new();
    let mut days = peaks.days();
    days.sort_unstable();
    for p in days {
        let lo = p;
        let hi = (p + horizon).min(t.saturating_sub(1));
        match intervals.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => intervals.push((lo, hi)),
        }
    }
    IntervalSet {
        intervals,
        series_len: t,
    }
}
