//! Delay embedding and recurrence matrices for scalar windows.
//!
//! A window of N samples embeds into N' = N - (m-1)*tau points in
//! m-dimensional phase space; two points recur when their Euclidean
//! distance falls strictly below a threshold epsilon. The matrix keeps
//! the full symmetric bit pattern plus per-node degrees, which is all
//! the multiplex layer statistics need.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecurrenceError {
    #[error("window of {got} samples is too short: embedding (m={dim}, tau={delay}) needs at least {needed}")]
    WindowTooShort {
        got: usize,
        needed: usize,
        dim: usize,
        delay: usize,
    },
    #[error("embedding dimension and delay must be at least 1 (got m={dim}, tau={delay})")]
    BadEmbedding { dim: usize, delay: usize },
    #[error("threshold value {0} is outside its valid range")]
    InvalidThreshold(f64),
    #[error("trajectory needs at least 2 points to select a threshold, got {0}")]
    TooFewPoints(usize),
}

/// How a window is lifted into phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Use `dim` and `delay` as given.
    Fixed,
    /// Estimate the delay from the first local minimum of lagged mutual
    /// information and the dimension from false nearest neighbours;
    /// `dim`/`delay` fields are ignored.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub delay: usize,
    pub mode: EmbeddingMode,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            delay: 1,
            mode: EmbeddingMode::Fixed,
        }
    }
}

/// Maximum embedding dimension the auto estimator will try.
pub const MAX_AUTO_DIM: usize = 5;
/// A dimension is accepted once its false-nearest-neighbour fraction
/// drops below this.
pub const FNN_THRESHOLD: f64 = 0.01;
/// Distance-ratio tolerance marking a neighbour as false.
pub const FNN_RATIO: f64 = 15.0;
/// Histogram bins used by the lagged mutual information estimator.
pub const MI_BINS: usize = 16;

/// Delay-embedded window. Point `i` is
/// `(u_i, u_{i+tau}, ..., u_{i+(m-1)tau})`, stored row-major.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    data: Vec<f64>,
    dim: usize,
    delay: usize,
    /// The raw window, kept for threshold policies defined on it.
    source: Vec<f64>,
}

impl PhaseTrajectory {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Squared Euclidean distance between points `i` and `j`.
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Embeds `window` according to `config`.
///
/// Fixed mode accepts any window that yields at least one phase point;
/// pipeline callers enforce their own stricter minimum. Auto mode needs
/// at least 20 samples to estimate anything.
pub fn embed(window: &[f64], config: &EmbeddingConfig) -> Result<PhaseTrajectory, RecurrenceError> {
    let (dim, delay) = match config.mode {
        EmbeddingMode::Fixed => (config.dim, config.delay),
        EmbeddingMode::Auto => estimate_embedding(window)?,
    };
    embed_fixed(window, dim, delay)
}

fn embed_fixed(
    window: &[f64],
    dim: usize,
    delay: usize,
) -> Result<PhaseTrajectory, RecurrenceError> {
    if dim == 0 || delay == 0 {
        return Err(RecurrenceError::BadEmbedding { dim, delay });
    }
    let span = (dim - 1) * delay;
    if window.len() <= span {
        return Err(RecurrenceError::WindowTooShort {
            got: window.len(),
            needed: span + 1,
            dim,
            delay,
        });
    }
    let n_points = window.len() - span;
    let mut data = Vec::with_capacity(n_points * dim);
    for i in 0..n_points {
        for k in 0..dim {
            data.push(window[i + k * delay]);
        }
    }
    Ok(PhaseTrajectory {
        data,
        dim,
        delay,
        source: window.to_vec(),
    })
}

/// Estimates `(dim, delay)` for a window: the delay is the first local
/// minimum of lagged mutual information, the dimension the smallest one
/// whose false-nearest-neighbour fraction is below [`FNN_THRESHOLD`]
/// (capped at [`MAX_AUTO_DIM`]).
pub fn estimate_embedding(window: &[f64]) -> Result<(usize, usize), RecurrenceError> {
    if window.len() < 20 {
        return Err(RecurrenceError::WindowTooShort {
            got: window.len(),
            needed: 20,
            dim: 0,
            delay: 0,
        });
    }
    let delay = estimate_delay(window);
    let dim = estimate_dim(window, delay);
    Ok((dim, delay))
}

fn estimate_delay(window: &[f64]) -> usize {
    let max_lag = (window.len().saturating_sub(10) / 8).max(1);
    let mut prev = lagged_mutual_information(window, 1);
    for lag in 2..=max_lag {
        let mi = lagged_mutual_information(window, lag);
        if mi > prev {
            return lag - 1;
        }
        prev = mi;
    }
    max_lag
}

fn estimate_dim(window: &[f64], delay: usize) -> usize {
    for dim in 1..MAX_AUTO_DIM {
        // The (dim+1)-dimensional extension must leave enough points to
        // judge; otherwise keep the current dimension.
        if window.len().saturating_sub(dim * delay) < 10 {
            return dim;
        }
        if false_neighbour_fraction(window, dim, delay) < FNN_THRESHOLD {
            return dim;
        }
    }
    MAX_AUTO_DIM
}

/// Mutual information (nats) between the window and its `lag`-shifted
/// copy, estimated on a [`MI_BINS`]x[`MI_BINS`] histogram spanning the
/// window's range.
pub fn lagged_mutual_information(window: &[f64], lag: usize) -> f64 {
    let n = window.len();
    if lag >= n {
        return 0.0;
    }
    let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Not-greater rather than <= so a NaN bound also bails out.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(hi > lo) {
        return 0.0;
    }
    let scale = MI_BINS as f64 / (hi - lo);
    let bin = |x: f64| (((x - lo) * scale) as usize).min(MI_BINS - 1);

    let pairs = n - lag;
    let mut joint = [[0u32; MI_BINS]; MI_BINS];
    for t in 0..pairs {
        joint[bin(window[t])][bin(window[t + lag])] += 1;
    }
    let mut px = [0u32; MI_BINS];
    let mut py = [0u32; MI_BINS];
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            px[i] += c;
            py[j] += c;
        }
    }
    let total = pairs as f64;
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / total;
                mi += pxy * (pxy * total * total / (px[i] as f64 * py[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Fraction of nearest neighbours at dimension `dim` that separate by
/// more than [`FNN_RATIO`] times their distance when the embedding grows
/// by one dimension.
pub fn false_neighbour_fraction(window: &[f64], dim: usize, delay: usize) -> f64 {
    let span = dim * delay; // span of the (dim+1)-dim embedding
    if window.len() <= span {
        return 0.0;
    }
    let n = window.len() - span;
    if n < 2 {
        return 0.0;
    }
    let traj = embed_fixed(window, dim, delay).expect("length checked above");
    let mut false_count = 0usize;
    for i in 0..n {
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = traj.dist2(i, j);
            if d2 < best {
                best = d2;
                best_j = j;
            }
        }
        let ext = (window[i + span] - window[best_j + span]).abs();
        let d = best.sqrt();
        let is_false = if d == 0.0 {
            ext > 0.0
        } else {
            ext / d > FNN_RATIO
        };
        if is_false {
            false_count += 1;
        }
    }
    false_count as f64 / n as f64
}

/// How the recurrence threshold epsilon is chosen per window.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum ThresholdPolicy {
    /// Epsilon is the empirical quantile of pairwise phase-space
    /// distances hitting the given recurrence rate (nearest-rank).
    TargetRecurrenceRate(f64),
    /// Epsilon is the given multiple of the raw window's standard
    /// deviation (population).
    StdFraction(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::TargetRecurrenceRate(0.05)
    }
}

/// A selected threshold. `degenerate` marks a window with no usable
/// scale (all phase points identical, or zero standard deviation):
/// epsilon is 0 and the caller decides what a recurrence plot of an
/// exactly self-similar window means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon {
    pub value: f64,
    pub degenerate: bool,
}

/// Selects epsilon for a trajectory under the given policy.
pub fn select_epsilon(
    traj: &PhaseTrajectory,
    policy: &ThresholdPolicy,
) -> Result<Epsilon, RecurrenceError> {
    let n = traj.len();
    if n < 2 {
        return Err(RecurrenceError::TooFewPoints(n));
    }
    match *policy {
        ThresholdPolicy::TargetRecurrenceRate(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(RecurrenceError::InvalidThreshold(q));
            }
            let mut d2: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    d2.push(traj.dist2(i, j));
                }
            }
            d2.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
            let k = d2.len();
            if d2[k - 1] == 0.0 {
                return Ok(Epsilon {
                    value: 0.0,
                    degenerate: true,
                });
            }
            let rank = ((q * k as f64).ceil() as usize).clamp(1, k);
            Ok(Epsilon {
                value: d2[rank - 1].sqrt(),
                degenerate: false,
            })
        }
        ThresholdPolicy::StdFraction(f) => {
            if !(f.is_finite() && f > 0.0) {
                return Err(RecurrenceError::InvalidThreshold(f));
            }
            let src = traj.source();
            let mean = src.iter().sum::<f64>() / src.len() as f64;
            let var = src.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / src.len() as f64;
            let std = var.sqrt();
            Ok(Epsilon {
                value: f * std,
                degenerate: std == 0.0,
            })
        }
    }
}

/// Symmetric recurrence matrix with unit diagonal, stored as row bitsets.
#[derive(Debug, Clone)]
pub struct RecurrenceMatrix {
    n: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    degrees: Vec<u32>,
    epsilon: f64,
    degenerate: bool,
}

impl RecurrenceMatrix {
    fn blank(n: usize, epsilon: f64, degenerate: bool) -> Self {
        let words_per_row = n.div_ceil(64);
        Self {
            n,
            words_per_row,
            bits: vec![0u64; n * words_per_row],
            degrees: vec![0; n],
            epsilon,
            degenerate,
        }
    }

    fn set_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / 64] |= 1u64 << (j % 64);
    }

    fn set_pair(&mut self, i: usize, j: usize) {
        debug_assert_ne!(i, j);
        self.set_bit(i, j);
        self.set_bit(j, i);
        self.degrees[i] += 1;
        self.degrees[j] += 1;
    }

    fn set_diagonal(&mut self) {
        for i in 0..self.n {
            self.set_bit(i, i);
        }
    }

    /// Matrix with no recurrences beyond the mandatory diagonal.
    pub fn identity(n: usize, epsilon: f64) -> Self {
        let mut m = Self::blank(n, epsilon, false);
        m.set_diagonal();
        m
    }

    /// Fully connected matrix; used for windows whose phase points are
    /// all identical (every distance is 0, the zero-threshold limit of a
    /// recurrence plot of a constant signal).
    pub fn all_ones(n: usize, epsilon: f64, degenerate: bool) -> Self {
        let mut m = Self::blank(n, epsilon, degenerate);
        m.set_diagonal();
        for i in 0..n {
            for j in (i + 1)..n {
                m.set_pair(i, j);
            }
        }
        m
    }

    /// Builds a matrix from explicit undirected edges; for tests and
    /// synthetic layers. Self-pairs and duplicates are ignored.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut m = Self::blank(n, f64::NAN, false);
        m.set_diagonal();
        for &(i, j) in pairs {
            if i != j && !m.get(i, j) {
                m.set_pair(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    /// Degrees exclude the diagonal: self-recurrence is not an edge.
    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Number of undirected edges (i < j pairs).
    pub fn edge_count(&self) -> usize {
        self.degrees.iter().map(|&d| d as usize).sum::<usize>() / 2
    }

    /// Fraction of off-diagonal pairs that recur.
    pub fn recurrence_rate(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }
}

/// Thresholds a trajectory into a recurrence matrix: points `i` and `j`
/// recur iff their Euclidean distance is strictly below `epsilon`. The
/// diagonal is always set; degrees never count it.
pub fn recurrence_matrix(traj: &PhaseTrajectory, epsilon: f64) -> RecurrenceMatrix {
    debug_assert!(epsilon >= 0.0, "negative epsilon has no recurrence meaning");
    let n = traj.len();
    let mut m = RecurrenceMatrix::blank(n, epsilon, false);
    m.set_diagonal();
    if epsilon <= 0.0 {
        return m;
    }
    let e2 = if epsilon.is_infinite() {
        f64::INFINITY
    } else {
        epsilon * epsilon
    };
    for i in 0..n {
        for j in (i + 1)..n {
            if traj.dist2(i, j) < e2 {
                m.set_pair(i, j);
            }
        }
    }
    m
}
