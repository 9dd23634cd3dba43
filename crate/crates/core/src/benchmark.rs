//! Classical early-warning statistics for comparison with the network
//! indicators: variance, lag-1 autocorrelation and low-frequency power
//! of Gaussian-detrended closes, scored for pre-crisis trends with
//! Kendall's tau and significance-tested against a surrogate pool drawn
//! from quiet history.

use thiserror::Error;

/// |tau| at or above this counts as a strong trend.
pub const TAU_STRONG_THRESHOLD: f64 = 0.8;
/// Share of evaluated grid combinations that must agree for a pass.
pub const STRONG_MASS_REQUIREMENT: f64 = 0.5;
/// One-sided p-value below which a trend is called significant.
pub const SIGNIFICANCE_LEVEL: f64 = 0.1;
/// Fraction of the positive spectrum averaged into low-frequency power.
pub const LOW_FREQ_FRACTION: f64 = 0.1;
/// The smoothing kernel is truncated this many bandwidths out.
const KERNEL_RADIUS_BANDWIDTHS: f64 = 4.0;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("needs {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("crisis index {crisis} is outside the series (len {len})")]
    CrisisOutOfRange { crisis: usize, len: usize },
    #[error("kernel bandwidth {0} must be positive and finite")]
    BadBandwidth(f64),
    #[error("{field} = {got} is below the minimum {min}")]
    WindowTooSmall {
        field: &'static str,
        got: usize,
        min: usize,
    },
    #[error(
        "segment of {len} days ending {offset} before the peak does not fit \
         the {available} rolling positions"
    )]
    SegmentDoesNotFit {
        len: usize,
        offset: usize,
        available: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// The three rolling statistics tracked by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsdIndicator {
    Variance,
    Acf1,
    LowFreqPower,
}

impl CsdIndicator {
    pub const ALL: [CsdIndicator; 3] = [
        CsdIndicator::Variance,
        CsdIndicator::Acf1,
        CsdIndicator::LowFreqPower,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CsdIndicator::Variance => "variance",
            CsdIndicator::Acf1 => "acf1",
            CsdIndicator::LowFreqPower => "low_freq_power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BenchmarkParams {
    /// Days of detrended history ending at the pre-crisis peak.
    pub detrend_window: usize,
    pub kernel_bandwidth: f64,
    pub rolling_window: usize,
    /// Days in the Kendall trend segment.
    pub segment_len: usize,
    /// Days between the segment end and the peak.
    pub segment_end_offset: usize,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            detrend_window: 500,
            kernel_bandwidth: 25.0,
            rolling_window: 250,
            segment_len: 250,
            segment_end_offset: 0,
        }
    }
}

impl BenchmarkParams {
    /// The trend segment and its offset must fit in the
    /// `detrend_window - rolling_window` days left after rolling.
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if !(self.kernel_bandwidth > 0.0 && self.kernel_bandwidth.is_finite()) {
            return Err(BenchmarkError::BadBandwidth(self.kernel_bandwidth));
        }
        if self.rolling_window < 2 {
            return Err(BenchmarkError::WindowTooSmall {
                field: "rolling_window",
                got: self.rolling_window,
                min: 2,
            });
        }
        if self.segment_len < 2 {
            return Err(BenchmarkError::WindowTooSmall {
                field: "segment_len",
                got: self.segment_len,
                min: 2,
            });
        }
        if self.detrend_window < self.rolling_window {
            return Err(BenchmarkError::WindowTooSmall {
                field: "detrend_window",
                got: self.detrend_window,
                min: self.rolling_window,
            });
        }
        let available = self.detrend_window - self.rolling_window;
        if self.segment_len + self.segment_end_offset > available {
            return Err(BenchmarkError::SegmentDoesNotFit {
                len: self.segment_len,
                offset: self.segment_end_offset,
                available,
            });
        }
        Ok(())
    }
}

/// Gaussian kernel smooth with the kernel truncated at
/// `ceil(4 * bandwidth)` and renormalised per position. Written as
/// `x[t] + weighted mean of (x[s] - x[t])` so a constant series has
/// residuals of exactly zero.
pub fn gaussian_smooth(series: &[f64], bandwidth: f64) -> Result<Vec<f64>, BenchmarkError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(BenchmarkError::BadBandwidth(bandwidth));
    }
    let n = series.len();
    let radius = (KERNEL_RADIUS_BANDWIDTHS * bandwidth).ceil() as usize;
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let kernel: Vec<f64> = (0..=radius)
        .map(|d| (-((d * d) as f64) * inv).exp())
        .collect();
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(n.saturating_sub(1));
            let mut wsum = 0.0;
            let mut dev = 0.0;
            for s in lo..=hi {
                let w = kernel[s.abs_diff(t)];
                wsum += w;
                dev += w * (series[s] - series[t]);
            }
            series[t] + dev / wsum
        })
        .collect())
}

/// A detrended pre-peak window.
#[derive(Debug, Clone)]
pub struct Detrended {
    /// Index of the pre-crisis price peak in the full series.
    pub peak: usize,
    /// First index of the detrended window; the window ends at `peak`.
    pub window_start: usize,
    pub trend: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Anchors a detrend window at the highest close in the `window` days
/// strictly before `crisis` (ties go to the earliest), then removes a
/// Gaussian-smoothed trend from the `window` days ending at that peak.
pub fn detrend_gaussian(
    closes: &[f64],
    crisis: usize,
    window: usize,
    bandwidth: f64,
) -> Result<Detrended, BenchmarkError> {
    if crisis > closes.len() {
        return Err(BenchmarkError::CrisisOutOfRange {
            crisis,
            len: closes.len(),
        });
    }
    if window < 2 {
        return Err(BenchmarkError::WindowTooSmall {
            field: "detrend_window",
            got: window,
            min: 2,
        });
    }
    if crisis < window {
        return Err(BenchmarkError::InsufficientHistory {
            needed: window,
            got: crisis,
        });
    }
    let search = &closes[crisis - window..crisis];
    let mut best = 0usize;
    for (i, &p) in search.iter().enumerate() {
        if p > search[best] {
            best = i;
        }
    }
    let peak = crisis - window + best;
    if peak + 1 < window {
        return Err(BenchmarkError::InsufficientHistory {
            needed: window,
            got: peak + 1,
        });
    }
    let window_start = peak + 1 - window;
    let segment = &closes[window_start..=peak];
    let trend = gaussian_smooth(segment, bandwidth)?;
    let residuals = segment.iter().zip(&trend).map(|(p, t)| p - t).collect();
    Ok(Detrended {
        peak,
        window_start,
        trend,
        residuals,
    })
}

/// Rolling statistics over a residual series; position `j` summarises
/// `residuals[j..j + window]`, so it belongs to the day at the window's
/// right edge.
#[derive(Debug, Clone)]
pub struct RollingIndicators {
    pub window: usize,
    pub variance: Vec<f64>,
    pub acf1: Vec<f64>,
    pub low_freq_power: Vec<f64>,
}

impl RollingIndicators {
    pub fn len(&self) -> usize {
        self.variance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variance.is_empty()
    }

    pub fn get(&self, kind: CsdIndicator) -> &[f64] {
        match kind {
            CsdIndicator::Variance => &self.variance,
            CsdIndicator::Acf1 => &self.acf1,
            CsdIndicator::LowFreqPower => &self.low_freq_power,
        }
    }
}

/// Mean periodogram ordinate over the lowest tenth of the positive
/// spectrum (at least one bin, never the DC bin). The window is not
/// demeaned; detrending already centred it.
fn low_frequency_power(window: &[f64]) -> f64 {
    let n = window.len();
    let half = n / 2;
    let bins = ((LOW_FREQ_FRACTION * half as f64).ceil() as usize).max(1);
    let mut total = 0.0;
    for j in 1..=bins {
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &x) in window.iter().enumerate() {
            let phi = std::f64::consts::TAU * j as f64 * t as f64 / n as f64;
            re += x * phi.cos();
            im -= x * phi.sin();
        }
        total += (re * re + im * im) / n as f64;
    }
    total / bins as f64
}

pub fn rolling_indicators(
    residuals: &[f64],
    window: usize,
) -> Result<RollingIndicators, BenchmarkError> {
    if window < 2 {
        return Err(BenchmarkError::WindowTooSmall {
            field: "rolling_window",
            got: window,
            min: 2,
        });
    }
    if residuals.len() <= window {
        return Err(BenchmarkError::InsufficientHistory {
            needed: window + 1,
            got: residuals.len(),
        });
    }
    let positions = residuals.len() - window + 1;
    let mut variance = Vec::with_capacity(positions);
    let mut acf1 = Vec::with_capacity(positions);
    let mut low_freq = Vec::with_capacity(positions);
    for s in 0..positions {
        let w = &residuals[s..s + window];
        let mean = w.iter().sum::<f64>() / window as f64;
        let mut ss = 0.0;
        for &x in w {
            let d = x - mean;
            ss += d * d;
        }
        let mut cross = 0.0;
        for t in 0..window - 1 {
            cross += (w[t] - mean) * (w[t + 1] - mean);
        }
        variance.push(ss / (window - 1) as f64);
        acf1.push(if ss == 0.0 { 0.0 } else { cross / ss });
        low_freq.push(low_frequency_power(w));
    }
    Ok(RollingIndicators {
        window,
        variance,
        acf1,
        low_freq_power: low_freq,
    })
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut pairs = 0u64;
    let mut run = 1u64;
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            pairs += run * (run - 1) / 2;
            run = 1;
        }
    }
    pairs + run * (run - 1) / 2
}

fn sort_counting_inversions(v: &mut [f64], tmp: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = 0;
    {
        let (l, r) = v.split_at_mut(mid);
        inv += sort_counting_inversions(l, &mut tmp[..mid]);
        inv += sort_counting_inversions(r, &mut tmp[mid..]);
    }
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            tmp[k] = v[i];
            i += 1;
        } else {
            inv += (mid - i) as u64;
            tmp[k] = v[j];
            j += 1;
        }
        k += 1;
    }
    tmp[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    tmp[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&tmp[..n]);
    inv
}

/// Kendall's tau-b in `O(n log n)`: ties handled by the tau-b
/// denominator, discordant pairs counted as merge-sort inversions of
/// the y values after sorting by (x, y). `None` when either variable is
/// completely tied (the coefficient is undefined there).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>, BenchmarkError> {
    if x.len() != y.len() {
        return Err(BenchmarkError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Ok(None);
    }
    debug_assert!(
        x.iter().chain(y).all(|v| v.is_finite()),
        "tau inputs must be finite"
    );
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in 1..n {
        let (a, b) = (idx[w - 1], idx[w]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        } else {
            tied_x += run_x * (run_x - 1) / 2;
            run_x = 1;
            tied_xy += run_xy * (run_xy - 1) / 2;
            run_xy = 1;
        }
    }
    tied_x += run_x * (run_x - 1) / 2;
    tied_xy += run_xy * (run_xy - 1) / 2;

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut tmp = vec![0.0; n];
    let discordant = sort_counting_inversions(&mut ys, &mut tmp);
    // ys is now sorted, ready for the y-tie count.
    let tied_y = tied_pairs(&ys);

    let total = (n as u64) * (n as u64 - 1) / 2;
    let denom = (((total - tied_x) as f64) * ((total - tied_y) as f64)).sqrt();
    if denom == 0.0 {
        return Ok(None);
    }
    let num = total as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * discordant as i64;
    Ok(Some(num as f64 / denom))
}

/// Kendall trend of a series against time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauTrend {
    pub tau: f64,
    /// True when the series was completely tied (or too short) and the
    /// coefficient is reported as zero by convention.
    pub degenerate: bool,
}

pub fn kendall_tau_trend(values: &[f64]) -> TauTrend {
    let time: Vec<f64> = (1..=values.len()).map(|t| t as f64).collect();
    match kendall_tau_b(&time, values).expect("equal lengths by construction") {
        Some(tau) => TauTrend {
            tau,
            degenerate: false,
        },
        None => TauTrend {
            tau: 0.0,
            degenerate: true,
        },
    }
}

/// Pre-crisis trend assessment of the three rolling statistics.
#[derive(Debug, Clone)]
pub struct CsdAssessment {
    pub peak: usize,
    pub variance: TauTrend,
    pub acf1: TauTrend,
    pub low_freq_power: TauTrend,
}

impl CsdAssessment {
    pub fn tau(&self, kind: CsdIndicator) -> TauTrend {
        match kind {
            CsdIndicator::Variance => self.variance,
            CsdIndicator::Acf1 => self.acf1,
            CsdIndicator::LowFreqPower => self.low_freq_power,
        }
    }
}

/// Full benchmark run on daily closes: detrend before the pre-crisis
/// peak, roll the statistics, and score the trend of the `segment_len`
/// days ending `segment_end_offset` before the peak.
pub fn csd_trends(
    closes: &[f64],
    crisis: usize,
    params: &BenchmarkParams,
) -> Result<CsdAssessment, BenchmarkError> {
    params.validate()?;
    let det = detrend_gaussian(
        closes,
        crisis,
        params.detrend_window,
        params.kernel_bandwidth,
    )?;
    let roll = rolling_indicators(&det.residuals, params.rolling_window)?;
    // validate() already guaranteed the segment fits.
    let start = roll.len() - params.segment_end_offset - params.segment_len;
    let end = start + params.segment_len;
    Ok(CsdAssessment {
        peak: det.peak,
        variance: kendall_tau_trend(&roll.variance[start..end]),
        acf1: kendall_tau_trend(&roll.acf1[start..end]),
        low_freq_power: kendall_tau_trend(&roll.low_freq_power[start..end]),
    })
}

/// Parameter grid swept by [`sensitivity_analysis`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub detrend_window: usize,
    pub bandwidths: Vec<f64>,
    pub rolling_windows: Vec<usize>,
    pub segment_lens: Vec<usize>,
    pub segment_end_offsets: Vec<usize>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            detrend_window: 500,
            bandwidths: vec![10.0, 25.0, 50.0],
            rolling_windows: vec![100, 150, 200, 250],
            segment_lens: vec![125, 150, 175, 200, 225, 250],
            segment_end_offsets: vec![0, 10, 20, 30, 40, 50],
        }
    }
}

/// tau values of one statistic across the evaluated grid.
#[derive(Debug, Clone, Default)]
pub struct TauHistogram {
    pub taus: Vec<f64>,
}

impl TauHistogram {
    pub fn strong_positive_share(&self) -> f64 {
        self.share(|t| t >= TAU_STRONG_THRESHOLD)
    }

    pub fn strong_negative_share(&self) -> f64 {
        self.share(|t| t <= -TAU_STRONG_THRESHOLD)
    }

    fn share(&self, pred: impl Fn(f64) -> bool) -> f64 {
        if self.taus.is_empty() {
            return 0.0;
        }
        self.taus.iter().filter(|&&t| pred(t)).count() as f64 / self.taus.len() as f64
    }

    /// True when at least half the grid shows a strong trend of one
    /// consistent sign.
    pub fn passes(&self) -> bool {
        self.strong_positive_share()
            .max(self.strong_negative_share())
            >= STRONG_MASS_REQUIREMENT
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityReport {
    /// Grid combinations actually evaluated.
    pub evaluated: usize,
    /// Combinations whose segment exceeded the day budget left by
    /// their rolling window.
    pub skipped: usize,
    pub variance: TauHistogram,
    pub acf1: TauHistogram,
    pub low_freq_power: TauHistogram,
}

impl SensitivityReport {
    pub fn histogram(&self, kind: CsdIndicator) -> &TauHistogram {
        match kind {
            CsdIndicator::Variance => &self.variance,
            CsdIndicator::Acf1 => &self.acf1,
            CsdIndicator::LowFreqPower => &self.low_freq_power,
        }
    }
}

/// Full-factorial robustness sweep. Detrending is cached per bandwidth
/// and rolling statistics per (bandwidth, rolling window); segment
/// choices that do not fit are skipped and counted, not errored.
pub fn sensitivity_analysis(
    closes: &[f64],
    crisis: usize,
    grid: &ParamGrid,
) -> Result<SensitivityReport, BenchmarkError> {
    let mut report = SensitivityReport {
        evaluated: 0,
        skipped: 0,
        variance: TauHistogram::default(),
        acf1: TauHistogram::default(),
        low_freq_power: TauHistogram::default(),
    };
    for &bandwidth in &grid.bandwidths {
        let det = detrend_gaussian(closes, crisis, grid.detrend_window, bandwidth)?;
        for &rolling in &grid.rolling_windows {
            let roll = rolling_indicators(&det.residuals, rolling)?;
            // rolling_indicators demands residuals.len() > rolling.
            let budget = grid.detrend_window - rolling;
            for &len in &grid.segment_lens {
                if len < 2 {
                    return Err(BenchmarkError::WindowTooSmall {
                        field: "segment_len",
                        got: len,
                        min: 2,
                    });
                }
                for &offset in &grid.segment_end_offsets {
                    if len + offset > budget {
                        report.skipped += 1;
                        continue;
                    }
                    let start = roll.len() - offset - len;
                    let end = start + len;
                    report.evaluated += 1;
                    report
                        .variance
                        .taus
                        .push(kendall_tau_trend(&roll.variance[start..end]).tau);
                    report
                        .acf1
                        .taus
                        .push(kendall_tau_trend(&roll.acf1[start..end]).tau);
                    report
                        .low_freq_power
                        .taus
                        .push(kendall_tau_trend(&roll.low_freq_power[start..end]).tau);
                }
            }
        }
    }
    Ok(report)
}

/// Kendall trend tau of every stride-1 segment of `segment_len`.
pub fn tau_pool(series: &[f64], segment_len: usize) -> Result<Vec<f64>, BenchmarkError> {
    if segment_len < 2 {
        return Err(BenchmarkError::WindowTooSmall {
            field: "segment_len",
            got: segment_len,
            min: 2,
        });
    }
    if series.len() < segment_len {
        return Err(BenchmarkError::InsufficientHistory {
            needed: segment_len,
            got: series.len(),
        });
    }
    Ok((0..=series.len() - segment_len)
        .map(|s| kendall_tau_trend(&series[s..s + segment_len]).tau)
        .collect())
}

/// Fraction of a non-empty pool at least as extreme as `observed`, on
/// the side `observed` points to.
pub fn pool_p_value(pool: &[f64], observed: f64) -> f64 {
    let hits = if observed >= 0.0 {
        pool.iter().filter(|&&t| t >= observed).count()
    } else {
        pool.iter().filter(|&&t| t <= observed).count()
    };
    hits as f64 / pool.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct SignificanceResult {
    pub observed: f64,
    pub p_value: f64,
    pub pool_size: usize,
    pub significant: bool,
}

/// One-sided surrogate test: the quiet `history` is detrended as a
/// whole (no peak anchoring), its rolling statistic is cut into every
/// stride-1 segment of `segment_len`, and the p-value is the fraction
/// of segment taus at least as extreme as the observed one, in the
/// observed direction.
pub fn significance_test(
    history: &[f64],
    kind: CsdIndicator,
    observed_tau: f64,
    params: &BenchmarkParams,
) -> Result<SignificanceResult, BenchmarkError> {
    params.validate()?;
    let needed = params.rolling_window + params.segment_len - 1;
    if history.len() < needed {
        return Err(BenchmarkError::InsufficientHistory {
            needed,
            got: history.len(),
        });
    }
    let trend = gaussian_smooth(history, params.kernel_bandwidth)?;
    let residuals: Vec<f64> = history.iter().zip(&trend).map(|(p, t)| p - t).collect();
    let roll = rolling_indicators(&residuals, params.rolling_window)?;
    let pool = tau_pool(roll.get(kind), params.segment_len)?;
    let p_value = pool_p_value(&pool, observed_tau);
    Ok(SignificanceResult {
        observed: observed_tau,
        p_value,
        pool_size: pool.len(),
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}
