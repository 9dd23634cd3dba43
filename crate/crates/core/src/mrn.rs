//! Multiplex recurrence networks and their day-level statistics.
//!
//! One trading day gives one network: each instrument's window becomes a
//! recurrence-matrix layer over a shared node set (the day's time points),
//! all layers using the same embedding. Interlayer similarity is measured
//! two ways: mutual information between degree sequences, and average
//! edge overlap. Collapsing interlayer MI into a weighted complete graph
//! over instruments gives the projection network whose maximum spanning
//! tree exposes the day's dominant dependence backbone.

use std::collections::HashMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::DayWindow;
use crate::recurrence::{
    self, EmbeddingConfig, EmbeddingMode, RecurrenceError, RecurrenceMatrix, ThresholdPolicy,
};

#[derive(Debug, Error)]
pub enum MrnError {
    #[error("a multiplex network needs at least 2 layers, got {0}")]
    TooFewLayers(usize),
    #[error("layer node counts differ: {0} vs {1}")]
    LayerSizeMismatch(usize, usize),
    #[error("window series lengths differ")]
    RaggedWindow,
    #[error("no layer pair has any edge; average overlap is undefined")]
    EmptyLayers,
    #[error(transparent)]
    Recurrence(#[from] RecurrenceError),
}

/// Minimum number of phase points a production window must embed into.
pub const MIN_PHASE_POINTS: usize = 10;

/// One day's multiplex recurrence network.
#[derive(Debug, Clone)]
pub struct Mrn {
    pub date: NaiveDate,
    /// Instrument names, aligned with `layers`.
    pub labels: Vec<String>,
    pub layers: Vec<RecurrenceMatrix>,
    /// Embedding shared by every layer.
    pub dim: usize,
    pub delay: usize,
}

impl Mrn {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.layers.first().map_or(0, RecurrenceMatrix::n)
    }

    /// Layers flagged degenerate (no usable distance scale in the window).
    pub fn degenerate_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.is_degenerate()).count()
    }
}

/// Builds the multiplex network for one day window.
///
/// All layers share one embedding. In auto mode the per-instrument
/// estimates are combined by lower median so a single eccentric series
/// cannot reshape every layer. A window whose phase points are all
/// identical has no distance scale; its layer is the zero-threshold
/// limit, the fully connected matrix, and is flagged degenerate.
pub fn build_mrn(
    window: &DayWindow,
    embedding: &EmbeddingConfig,
    threshold: &ThresholdPolicy,
) -> Result<Mrn, MrnError> {
    let m = window.series.len();
    if m < 2 {
        return Err(MrnError::TooFewLayers(m));
    }
    let len = window.series[0].len();
    if window.series.iter().any(|s| s.len() != len) {
        return Err(MrnError::RaggedWindow);
    }

    let (dim, delay) = match embedding.mode {
        EmbeddingMode::Fixed => (embedding.dim, embedding.delay),
        EmbeddingMode::Auto => {
            let mut dims = Vec::with_capacity(m);
            let mut delays = Vec::with_capacity(m);
            for series in &window.series {
                let (d, t) = recurrence::estimate_embedding(series)?;
                dims.push(d);
                delays.push(t);
            }
            (lower_median(&mut dims), lower_median(&mut delays))
        }
    };
    let span = (dim.max(1) - 1) * delay;
    if len < span + MIN_PHASE_POINTS {
        return Err(RecurrenceError::WindowTooShort {
            got: len,
            needed: span + MIN_PHASE_POINTS,
            dim,
            delay,
        }
        .into());
    }

    let fixed = EmbeddingConfig {
        dim,
        delay,
        mode: EmbeddingMode::Fixed,
    };
    let mut layers = Vec::with_capacity(m);
    for series in &window.series {
        let traj = recurrence::embed(series, &fixed)?;
        let eps = recurrence::select_epsilon(&traj, threshold)?;
        let layer = if eps.degenerate {
            RecurrenceMatrix::all_ones(traj.len(), eps.value, true)
        } else {
            recurrence::recurrence_matrix(&traj, eps.value)
        };
        layers.push(layer);
    }
    Ok(Mrn {
        date: window.date,
        labels: window.instruments.clone(),
        layers,
        dim,
        delay,
    })
}

fn lower_median(xs: &mut [usize]) -> usize {
    xs.sort_unstable();
    xs[(xs.len() - 1) / 2]
}

/// Plug-in entropy (nats) of a degree sequence's empirical distribution.
pub fn degree_entropy(degrees: &[u32]) -> f64 {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for &k in degrees {
        *counts.entry(k).or_insert(0) += 1;
    }
    let n = degrees.len() as f64;
    let mut h = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        h -= p * p.ln();
    }
    h
}

/// Mutual information (nats) between two aligned degree sequences,
/// estimated from the exact joint histogram of integer degrees. The
/// `0 * ln 0 = 0` convention applies: empty cells contribute nothing.
pub fn degree_mutual_information(ka: &[u32], kb: &[u32]) -> Result<f64, MrnError> {
    if ka.len() != kb.len() {
        return Err(MrnError::LayerSizeMismatch(ka.len(), kb.len()));
    }
    let n = ka.len() as f64;
    let mut joint: HashMap<(u32, u32), u32> = HashMap::new();
    let mut ma: HashMap<u32, u32> = HashMap::new();
    let mut mb: HashMap<u32, u32> = HashMap::new();
    for (&a, &b) in ka.iter().zip(kb) {
        *joint.entry((a, b)).or_insert(0) += 1;
        *ma.entry(a).or_insert(0) += 1;
        *mb.entry(b).or_insert(0) += 1;
    }
    let mut mi = 0.0;
    for (&(a, b), &c) in &joint {
        let pab = c as f64 / n;
        let pa = ma[&a] as f64 / n;
        let pb = mb[&b] as f64 / n;
        mi += pab * (pab / (pa * pb)).ln();
    }
    Ok(mi)
}

/// Mutual information between the degree sequences of two layers.
pub fn interlayer_mutual_information(
    a: &RecurrenceMatrix,
    b: &RecurrenceMatrix,
) -> Result<f64, MrnError> {
    degree_mutual_information(a.degrees(), b.degrees())
}

/// Normalisation of the multiplex average mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiNormalization {
    /// Divide the sum over unordered layer pairs by M(M-1)/2, making the
    /// statistic a true pair average.
    #[default]
    Pairs,
    /// Divide by M, reproducing the printed definition verbatim.
    AsPrinted,
}

/// Average interlayer mutual information over all unordered layer pairs.
pub fn average_mutual_information(mrn: &Mrn, norm: MiNormalization) -> Result<f64, MrnError> {
    let m = mrn.n_layers();
    if m < 2 {
        return Err(MrnError::TooFewLayers(m));
    }
    let mut sum = 0.0;
    for alpha in 0..m {
        for beta in (alpha + 1)..m {
            sum += interlayer_mutual_information(&mrn.layers[alpha], &mrn.layers[beta])?;
        }
    }
    let denom = match norm {
        MiNormalization::Pairs => (m * (m - 1) / 2) as f64,
        MiNormalization::AsPrinted => m as f64,
    };
    Ok(sum / denom)
}

/// Normalisation of the average edge overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapNormalization {
    /// Per-pair constant 2: identical layers score 1, edge-disjoint
    /// layers score 1/2.
    #[default]
    PairwiseTwo,
    /// Per-pair constant M (the layer count), reproducing the printed
    /// definition verbatim.
    LayerCount,
}

/// Average edge overlap across layer pairs, plus how many pairs had no
/// edges at all and were left out of the average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeOverlap {
    pub value: f64,
    pub skipped_pairs: usize,
}

/// Raw overlap ratio of one layer pair:
/// `sum_{i<j}(a_ij + b_ij) / #\{i<j : a_ij + b_ij > 0\}`, in `[1, 2]`.
/// `None` when neither layer has an edge.
pub fn edge_overlap_ratio(
    a: &RecurrenceMatrix,
    b: &RecurrenceMatrix,
) -> Result<Option<f64>, MrnError> {
    let n = a.n();
    if n != b.n() {
        return Err(MrnError::LayerSizeMismatch(n, b.n()));
    }
    let ea = a.edge_count();
    let eb = b.edge_count();
    if ea + eb == 0 {
        return Ok(None);
    }
    let mut both = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if a.get(i, j) && b.get(i, j) {
                both += 1;
            }
        }
    }
    let union = ea + eb - both;
    Ok(Some((ea + eb) as f64 / union as f64))
}

/// Average edge overlap of the multiplex network.
///
/// Pairs with an empty union carry no overlap information and are
/// excluded from the average (and counted in `skipped_pairs`); if every
/// pair is empty the statistic is undefined.
pub fn average_edge_overlap(
    mrn: &Mrn,
    norm: OverlapNormalization,
) -> Result<EdgeOverlap, MrnError> {
    let m = mrn.n_layers();
    if m < 2 {
        return Err(MrnError::TooFewLayers(m));
    }
    let c = match norm {
        OverlapNormalization::PairwiseTwo => 2.0,
        OverlapNormalization::LayerCount => m as f64,
    };
    let mut sum = 0.0;
    let mut included = 0usize;
    let mut skipped = 0usize;
    for alpha in 0..m {
        for beta in (alpha + 1)..m {
            match edge_overlap_ratio(&mrn.layers[alpha], &mrn.layers[beta])? {
                Some(raw) => {
                    sum += raw / c;
                    included += 1;
                }
                None => skipped += 1,
            }
        }
    }
    if included == 0 {
        return Err(MrnError::EmptyLayers);
    }
    Ok(EdgeOverlap {
        value: sum / included as f64,
        skipped_pairs: skipped,
    })
}

/// Complete weighted graph over instruments (the multiplex projection).
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    labels: Vec<String>,
    weights: Vec<f64>, // full n*n, symmetric, zero diagonal
}

impl WeightedGraph {
    /// Builds a complete graph from explicit labels and a weight
    /// function on label indices.
    pub fn complete(labels: Vec<String>, mut weight: impl FnMut(usize, usize) -> f64) -> Self {
        let n = labels.len();
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w = weight(i, j);
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        Self { labels, weights }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n() + j]
    }

    /// Unordered edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.weight(i, j))))
    }
}

/// Projects a multiplex network onto its instruments: node per layer,
/// edge weight = interlayer mutual information.
pub fn projection_network(mrn: &Mrn) -> Result<WeightedGraph, MrnError> {
    let m = mrn.n_layers();
    if m < 2 {
        return Err(MrnError::TooFewLayers(m));
    }
    let mut weights = vec![vec![0.0; m]; m];
    for (alpha, row) in weights.iter_mut().enumerate() {
        for (beta, cell) in row.iter_mut().enumerate().skip(alpha + 1) {
            *cell = interlayer_mutual_information(&mrn.layers[alpha], &mrn.layers[beta])?;
        }
    }
    Ok(WeightedGraph::complete(mrn.labels.clone(), |i, j| {
        weights[i.min(j)][i.max(j)]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Maximum spanning tree of a projection network.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    pub labels: Vec<String>,
    pub edges: Vec<TreeEdge>,
    pub degrees: Vec<usize>,
    pub total_weight: f64,
    /// Largest node degree divided by M-1; 1 means a pure star.
    pub hub_dominance: f64,
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Kruskal maximum spanning tree. Equal weights break ties toward the
/// lexicographically smallest `(a, b)` index pair, so the tree is a
/// deterministic function of the graph.
pub fn maximum_spanning_tree(graph: &WeightedGraph) -> Result<SpanningTree, MrnError> {
    let n = graph.n();
    if n < 2 {
        return Err(MrnError::TooFewLayers(n));
    }
    let mut edges: Vec<(usize, usize, f64)> = graph.edges().collect();
    edges.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .expect("projection weights are finite")
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });
    let mut dsu = Dsu::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    let mut degrees = vec![0usize; n];
    let mut total = 0.0;
    for (a, b, w) in edges {
        if dsu.union(a, b) {
            tree.push(TreeEdge { a, b, weight: w });
            degrees[a] += 1;
            degrees[b] += 1;
            total += w;
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    debug_assert_eq!(tree.len(), n - 1, "complete graph is always connected");
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    Ok(SpanningTree {
        labels: graph.labels().to_vec(),
        edges: tree,
        degrees,
        total_weight: total,
        hub_dominance: max_degree as f64 / (n - 1) as f64,
    })
}
