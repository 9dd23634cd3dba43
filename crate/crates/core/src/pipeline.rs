//! End-to-end report run: load a panel, compute the daily indicator
//! series and peaks, run the jump test on the weighted portfolio at each
//! significance level, score the overlap between risk intervals and jump
//! days, and export maximum spanning trees for peak days alongside a
//! seeded sample of quiet days.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::indicators::{
    detect_peaks, indicator_series, risk_intervals, IndicatorConfig, IndicatorKind, IndicatorRun,
    InputMode, IntervalSet, PeakSet,
};
use crate::jump::{bns_by_day, JumpTestResult};
use crate::market_data::{
    build_portfolio_series, load_price_panel, log_returns, CleaningReport, DayWindow, LoadOptions,
    PricePanel, ReturnPanel, WeightVector, DEFAULT_WINDOW_LEN,
};
use crate::mrn::{build_mrn, maximum_spanning_tree, projection_network, SpanningTree};
use crate::numfmt::sig12;

/// Failures carry the stage that produced them and map onto distinct
/// process exit codes: 2 for configuration, 3 for data, 4 for compute.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config ({stage}): {message}")]
    ConfigInvalid {
        stage: &'static str,
        message: String,
    },
    #[error("data error ({stage}): {message}")]
    DataError {
        stage: &'static str,
        message: String,
    },
    #[error("compute error ({stage}): {message}")]
    ComputeError {
        stage: &'static str,
        message: String,
    },
}

impl PipelineError {
    pub fn config(stage: &'static str, message: impl ToString) -> Self {
        PipelineError::ConfigInvalid {
            stage,
            message: message.to_string(),
        }
    }

    pub fn data(stage: &'static str, message: impl ToString) -> Self {
        PipelineError::DataError {
            stage,
            message: message.to_string(),
        }
    }

    pub fn compute(stage: &'static str, message: impl ToString) -> Self {
        PipelineError::ComputeError {
            stage,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid { .. } => 2,
            PipelineError::DataError { .. } => 3,
            PipelineError::ComputeError { .. } => 4,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::ConfigInvalid { stage, .. }
            | PipelineError::DataError { stage, .. }
            | PipelineError::ComputeError { stage, .. } => stage,
        }
    }
}

/// Everything one report run needs, loadable from a TOML file whose keys
/// mirror the field names. Every field has a default, so a minimal file
/// only names the panel.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Minute-price panel CSV.
    pub panel: PathBuf,
    /// Portfolio weights CSV (`instrument,weight`); equal weights when
    /// absent.
    pub weights: Option<PathBuf>,
    /// Directory all artifacts are written into; created if missing.
    pub out_dir: PathBuf,
    /// Rows per trading day in the panel.
    pub window_len: usize,
    /// Days missing more than this fraction of cells are dropped.
    pub max_missing: f64,
    pub indicator: IndicatorConfig,
    /// Minutes between sampled prices for the jump test.
    pub sampling_interval: usize,
    /// Jump-test significance levels, strictly ascending.
    pub alphas: Vec<f64>,
    /// Risk-interval length after each peak, in days.
    pub horizon: usize,
    /// Seed for the quiet-day spanning-tree sample.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            panel: PathBuf::new(),
            weights: None,
            out_dir: PathBuf::from("report"),
            window_len: DEFAULT_WINDOW_LEN,
            max_missing: 0.05,
            indicator: IndicatorConfig::default(),
            sampling_interval: 5,
            alphas: vec![0.001, 0.0025],
            horizon: 9,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML config file. Relative `panel`/`weights` paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::config("load-config", format!("{}: {e}", path.display()))
        })?;
        let mut config: PipelineConfig = toml::from_str(&text).map_err(|e| {
            PipelineError::config("load-config", format!("{}: {e}", path.display()))
        })?;
        if let Some(dir) = path.parent() {
            config.panel = resolve(dir, &config.panel);
            config.weights = config.weights.take().map(|w| resolve(dir, &w));
            config.out_dir = resolve(dir, &config.out_dir);
        }
        config.validate()?;
        Ok(config)
    }

    /// Checks shape constraints and that every referenced file exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let stage = "validate-config";
        if self.panel.as_os_str().is_empty() {
            return Err(PipelineError::config(stage, "panel path is empty"));
        }
        if !self.panel.is_file() {
            return Err(PipelineError::config(
                stage,
                format!("panel file {} does not exist", self.panel.display()),
            ));
        }
        if let Some(weights) = &self.weights {
            if !weights.is_file() {
                return Err(PipelineError::config(
                    stage,
                    format!("weights file {} does not exist", weights.display()),
                ));
            }
        }
        if self.window_len == 0 {
            return Err(PipelineError::config(stage, "window_len must be positive"));
        }
        if self.sampling_interval == 0 || !self.window_len.is_multiple_of(self.sampling_interval) {
            return Err(PipelineError::config(
                stage,
                format!(
                    "sampling_interval {} must divide window_len {}",
                    self.sampling_interval, self.window_len
                ),
            ));
        }
        if !(self.max_missing >= 0.0 && self.max_missing < 1.0) {
            return Err(PipelineError::config(
                stage,
                format!("max_missing {} must lie in [0, 1)", self.max_missing),
            ));
        }
        if self.alphas.is_empty() {
            return Err(PipelineError::config(stage, "alphas must not be empty"));
        }
        if !self.alphas.iter().all(|&a| a > 0.0 && a < 0.5) {
            return Err(PipelineError::config(
                stage,
                "every alpha must lie in (0, 0.5)",
            ));
        }
        if !self.alphas.windows(2).all(|w| w[0] < w[1]) {
            return Err(PipelineError::config(
                stage,
                "alphas must be strictly ascending",
            ));
        }
        Ok(())
    }
}

fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}

/// Jump/risk-interval agreement for one (alpha, indicator) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapSummary {
    pub alpha: f64,
    pub kind: IndicatorKind,
    /// Days the jump test flags.
    pub jump_days: usize,
    /// Flagged days falling inside a risk interval.
    pub covered: usize,
    /// Flagged days that are themselves peak days.
    pub exact: usize,
}

/// One exported spanning tree.
#[derive(Debug, Clone)]
pub struct MstExport {
    pub date: NaiveDate,
    /// True for a peak day, false for a sampled quiet day.
    pub peak: bool,
    pub edges_csv: PathBuf,
    pub nodes_csv: PathBuf,
}

/// Paths of every artifact a run writes, plus the overlap counts.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub config_echo: PathBuf,
    pub cleaning_csv: PathBuf,
    pub gaps_csv: PathBuf,
    pub portfolio_csv: PathBuf,
    pub indicator_csv: PathBuf,
    pub peaks_csv: PathBuf,
    /// One jump CSV per alpha, ascending.
    pub jump_csvs: Vec<(f64, PathBuf)>,
    pub overlap_csv: PathBuf,
    pub mst_dir: PathBuf,
    pub mst_exports: Vec<MstExport>,
    /// Alpha-major, indicator-minor; consistent with the CSVs.
    pub overlaps: Vec<OverlapSummary>,
}

/// Runs the whole pipeline and writes every intermediate artifact under
/// `config.out_dir`. Reruns with identical config and inputs produce
/// byte-identical files.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
    config.validate()?;
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| {
        PipelineError::compute("create-out-dir", format!("{}: {e}", out_dir.display()))
    })?;

    let config_echo = out_dir.join("run_config.toml");
    let echo = toml::to_string_pretty(config)
        .map_err(|e| PipelineError::compute("write-config-echo", e))?;
    write_file("write-config-echo", &config_echo, &echo)?;

    let options = LoadOptions {
        window_len: config.window_len,
        max_missing: config.max_missing,
        ..LoadOptions::default()
    };
    let (panel, cleaning) = load_price_panel(&config.panel, &options)
        .map_err(|e| PipelineError::data("load-panel", e))?;

    let cleaning_csv = out_dir.join("cleaning_report.csv");
    write_file(
        "write-cleaning",
        &cleaning_csv,
        &render_cleaning_csv(&cleaning),
    )?;

    let weights = match &config.weights {
        Some(path) => {
            WeightVector::load_csv(path).map_err(|e| PipelineError::data("load-weights", e))?
        }
        None => WeightVector::equal(panel.instruments())
            .map_err(|e| PipelineError::data("load-weights", e))?,
    };
    let portfolio = build_portfolio_series(&panel, &weights)
        .map_err(|e| PipelineError::data("portfolio", e))?;
    let portfolio_csv = out_dir.join("portfolio.csv");
    portfolio
        .to_csv(&portfolio_csv)
        .map_err(|e| PipelineError::compute("write-portfolio", e))?;

    let run = indicator_series(&panel, &config.indicator)
        .map_err(|e| PipelineError::compute("indicators", e))?;
    let gaps_csv = out_dir.join("gaps.csv");
    write_file("write-gaps", &gaps_csv, &render_gaps_csv(&run))?;

    let peaks_mi =
        detect_peaks(&run.mutual_information).map_err(|e| PipelineError::compute("peaks", e))?;
    let peaks_ov =
        detect_peaks(&run.edge_overlap).map_err(|e| PipelineError::compute("peaks", e))?;
    let intervals_mi = risk_intervals(&peaks_mi, config.horizon);
    let intervals_ov = risk_intervals(&peaks_ov, config.horizon);

    let indicator_csv = out_dir.join("indicators.csv");
    write_file(
        "write-indicators",
        &indicator_csv,
        &render_indicator_csv(&run, &peaks_mi, &peaks_ov, &intervals_mi, &intervals_ov),
    )?;
    let peaks_csv = out_dir.join("peaks.csv");
    write_file(
        "write-peaks",
        &peaks_csv,
        &render_peaks_csv(
            &[
                (IndicatorKind::MutualInformation, &peaks_mi),
                (IndicatorKind::EdgeOverlap, &peaks_ov),
            ],
            panel.dates(),
        ),
    )?;

    let returns = log_returns(&portfolio, config.sampling_interval)
        .map_err(|e| PipelineError::data("returns", e))?;
    let mut jump_csvs = Vec::with_capacity(config.alphas.len());
    let mut overlaps = Vec::with_capacity(config.alphas.len() * 2);
    let mut overlap_rows =
        String::from("alpha,indicator,jump_days,jumps_in_risk_intervals,exact_coincidences\n");
    for &alpha in &config.alphas {
        let results =
            bns_by_day(&returns, 0, alpha).map_err(|e| PipelineError::compute("jump-test", e))?;
        let path = out_dir.join(format!("jumps_alpha_{}.csv", sig12(alpha)));
        write_file("write-jumps", &path, &render_jump_csv(&results))?;
        jump_csvs.push((alpha, path));
        for (kind, peaks, intervals) in [
            (IndicatorKind::MutualInformation, &peaks_mi, &intervals_mi),
            (IndicatorKind::EdgeOverlap, &peaks_ov, &intervals_ov),
        ] {
            let summary = overlap_summary(alpha, kind, &results, peaks, intervals);
            let _ = writeln!(
                overlap_rows,
                "{},{},{},{},{}",
                sig12(alpha),
                kind.short_label(),
                summary.jump_days,
                summary.covered,
                summary.exact,
            );
            overlaps.push(summary);
        }
    }
    let overlap_csv = out_dir.join("overlap_report.csv");
    write_file("write-overlap", &overlap_csv, &overlap_rows)?;

    let mst_dir = out_dir.join("msts");
    fs::create_dir_all(&mst_dir)
        .map_err(|e| PipelineError::compute("mst", format!("{}: {e}", mst_dir.display())))?;
    let mst_exports = export_trees(&panel, config, &run, &peaks_mi, &peaks_ov, &mst_dir)?;

    Ok(ReportBundle {
        out_dir,
        config_echo,
        cleaning_csv,
        gaps_csv,
        portfolio_csv,
        indicator_csv,
        peaks_csv,
        jump_csvs,
        overlap_csv,
        mst_dir,
        mst_exports,
        overlaps,
    })
}

fn write_file(stage: &'static str, path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents)
        .map_err(|e| PipelineError::compute(stage, format!("{}: {e}", path.display())))
}

fn render_cleaning_csv(report: &CleaningReport) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "rejected_rows,{}", report.rejected_rows);
    let _ = writeln!(out, "off_grid_rows,{}", report.off_grid_rows);
    let _ = writeln!(out, "filled_cells,{}", report.filled_cells);
    let _ = writeln!(out, "dropped_days,{}", report.dropped_days.len());
    for (date, missing) in &report.dropped_days {
        let _ = writeln!(out, "dropped_day_{date},{missing}");
    }
    out
}

fn render_gaps_csv(run: &IndicatorRun) -> String {
    let mut out = String::from("date,reason\n");
    for (date, reason) in &run.gap_days {
        // Reasons are prose; quote them so commas cannot split the row.
        let _ = writeln!(out, "{date},\"{}\"", reason.replace('"', "\"\""));
    }
    out
}

/// The daily indicator table: values, gap flag, peak flags, and
/// risk-interval membership per indicator.
pub fn render_indicator_csv(
    run: &IndicatorRun,
    peaks_mi: &PeakSet,
    peaks_ov: &PeakSet,
    intervals_mi: &IntervalSet,
    intervals_ov: &IntervalSet,
) -> String {
    let mut out = String::from(
        "date,indicator_I,indicator_omega,is_gap,is_peak_I,is_peak_omega,\
         in_risk_interval_I,in_risk_interval_omega\n",
    );
    let peak_mi: BTreeSet<usize> = peaks_mi.days().into_iter().collect();
    let peak_ov: BTreeSet<usize> = peaks_ov.days().into_iter().collect();
    let cover_mi = intervals_mi.covered();
    let cover_ov = intervals_ov.covered();
    for (d, date) in run.mutual_information.dates.iter().enumerate() {
        let vi = run.mutual_information.values[d];
        let vo = run.edge_overlap.values[d];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            date,
            vi.map(sig12).unwrap_or_default(),
            vo.map(sig12).unwrap_or_default(),
            u8::from(vi.is_none() || vo.is_none()),
            u8::from(peak_mi.contains(&d)),
            u8::from(peak_ov.contains(&d)),
            u8::from(cover_mi[d]),
            u8::from(cover_ov[d]),
        );
    }
    out
}

fn render_peaks_csv(sets: &[(IndicatorKind, &PeakSet)], dates: &[NaiveDate]) -> String {
    let mut out = String::from("indicator,day_index,date,value,delta_xi\n");
    for (kind, set) in sets {
        for peak in &set.peaks {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                kind.short_label(),
                peak.index,
                dates[peak.index],
                sig12(peak.value),
                sig12(peak.delta_xi),
            );
        }
    }
    out
}

/// One jump-test row per day.
pub fn render_jump_csv(results: &[JumpTestResult]) -> String {
    let mut out = String::from("date,M,RV,BV,TP,Z,threshold,is_jump,degenerate\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.date,
            r.bns.m_intraday,
            sig12(r.bns.rv),
            sig12(r.bns.bv),
            sig12(r.bns.tp),
            sig12(r.bns.z),
            sig12(r.bns.z_threshold),
            u8::from(r.bns.is_jump),
            u8::from(r.bns.degenerate),
        );
    }
    out
}

fn overlap_summary(
    alpha: f64,
    kind: IndicatorKind,
    jumps: &[JumpTestResult],
    peaks: &PeakSet,
    intervals: &IntervalSet,
) -> OverlapSummary {
    let peak_days: BTreeSet<usize> = peaks.days().into_iter().collect();
    let mut summary = OverlapSummary {
        alpha,
        kind,
        jump_days: 0,
        covered: 0,
        exact: 0,
    };
    for (d, r) in jumps.iter().enumerate() {
        if !r.bns.is_jump {
            continue;
        }
        summary.jump_days += 1;
        if intervals.contains(d) {
            summary.covered += 1;
        }
        if peak_days.contains(&d) {
            summary.exact += 1;
        }
    }
    summary
}

/// Builds the maximum spanning tree of one day's multiplex projection,
/// feeding the layers the same representation the indicators saw.
pub fn mst_for_day(
    panel: &PricePanel,
    returns: Option<&ReturnPanel>,
    config: &IndicatorConfig,
    day: usize,
) -> Result<SpanningTree, PipelineError> {
    let window: DayWindow = match returns {
        Some(rp) => rp.day_window(day),
        None => panel.day(day),
    };
    let mrn = build_mrn(&window, &config.embedding, &config.threshold)
        .map_err(|e| PipelineError::compute("mst", e))?;
    let graph = projection_network(&mrn).map_err(|e| PipelineError::compute("mst", e))?;
    maximum_spanning_tree(&graph).map_err(|e| PipelineError::compute("mst", e))
}

/// CSV edge list of a spanning tree, one row per edge.
pub fn render_mst_edges(tree: &SpanningTree) -> String {
    let mut out = String::from("alpha,beta,weight\n");
    for edge in &tree.edges {
        let _ = writeln!(
            out,
            "{},{},{}",
            tree.labels[edge.a],
            tree.labels[edge.b],
            sig12(edge.weight),
        );
    }
    out
}

/// CSV node table of a spanning tree; the flag marks maximum-degree
/// nodes.
pub fn render_mst_nodes(tree: &SpanningTree) -> String {
    let mut out = String::from("instrument,degree,hub_dominance_flag\n");
    let max_degree = tree.degrees.iter().copied().max().unwrap_or(0);
    for (i, label) in tree.labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            label,
            tree.degrees[i],
            u8::from(max_degree > 0 && tree.degrees[i] == max_degree),
        );
    }
    out
}

fn export_trees(
    panel: &PricePanel,
    config: &PipelineConfig,
    run: &IndicatorRun,
    peaks_mi: &PeakSet,
    peaks_ov: &PeakSet,
    mst_dir: &Path,
) -> Result<Vec<MstExport>, PipelineError> {
    let peak_union: BTreeSet<usize> = peaks_mi.days().into_iter().chain(peaks_ov.days()).collect();
    // Quiet candidates must have built an MRN during the indicator pass.
    let candidates: Vec<usize> = (0..panel.n_days())
        .filter(|d| !peak_union.contains(d) && run.mutual_information.values[*d].is_some())
        .collect();
    let take = peak_union.len().min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut quiet: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    quiet.sort_unstable();

    let returns = match config.indicator.input {
        InputMode::LogReturns => {
            Some(log_returns(panel, 1).map_err(|e| PipelineError::data("returns", e))?)
        }
        InputMode::Prices => None,
    };

    let peak_days: Vec<usize> = peak_union.iter().copied().collect();
    let mut exports = Vec::with_capacity(peak_days.len() + quiet.len());
    for (days, peak, tag) in [(&peak_days, true, "peak"), (&quiet, false, "quiet")] {
        for &d in days.iter() {
            let tree = mst_for_day(panel, returns.as_ref(), &config.indicator, d)?;
            let date = panel.dates()[d];
            let edges_csv = mst_dir.join(format!("{date}_{tag}_edges.csv"));
            let nodes_csv = mst_dir.join(format!("{date}_{tag}_nodes.csv"));
            write_file("mst", &edges_csv, &render_mst_edges(&tree))?;
            write_file("mst", &nodes_csv, &render_mst_nodes(&tree))?;
            exports.push(MstExport {
                date,
                peak,
                edges_csv,
                nodes_csv,
            });
        }
    }
    Ok(exports)
}
