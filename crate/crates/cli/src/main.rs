//! Command-line driver: simulation, calibration, indicator series, jump
//! tests, the critical-slowing-down benchmark, spanning-tree exports,
//! and the full report pipeline. Every subcommand is deterministic given
//! its inputs, configuration, and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use mrn_ews::benchmark::{
    detrend_gaussian, gaussian_smooth, kendall_tau_trend, pool_p_value, rolling_indicators,
    tau_pool, CsdIndicator, ParamGrid, TauHistogram, SIGNIFICANCE_LEVEL,
};
use mrn_ews::indicators::{
    detect_peaks, indicator_series, risk_intervals, IndicatorConfig, IndicatorKind,
};
use mrn_ews::jump::bns_by_day;
use mrn_ews::market_data::{
    build_portfolio_series, load_price_panel, log_returns, LoadOptions, WeightVector,
    DEFAULT_WINDOW_LEN,
};
use mrn_ews::numfmt::sig12;
use mrn_ews::pipeline::{
    mst_for_day, render_indicator_csv, render_jump_csv, render_mst_edges, render_mst_nodes,
    run_pipeline, PipelineConfig, PipelineError,
};
use mrn_ews::recurrence::{EmbeddingConfig, EmbeddingMode, ThresholdPolicy};
use mrn_ews::sim::{
    calibrate_risk_level, simulate_paths, CalibrationSettings, JumpDirection, SimConfig,
};

#[derive(Parser)]
#[command(
    name = "mrn-ews",
    version,
    about = "Early-warning indicators from multiplex recurrence networks",
    long_about = None
)]
struct Cli {
    /// TOML configuration file; its schema depends on the subcommand
    /// (simulation, calibration, or report settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for subcommands that draw random numbers; the rest
    /// ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on rayon worker threads; 0 or absent keeps the default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate correlated minute prices with planted co-jumps.
    Simulate {
        /// Panel CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Planted co-jump log CSV to write.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Sweep co-jump frequencies and score indicator warnings per run.
    Calibrate {
        /// Grid as start:end:step or a comma-separated list.
        #[arg(long)]
        grid: Option<String>,
        /// Monte Carlo runs per frequency.
        #[arg(long)]
        runs: Option<usize>,
        /// desk = 4 frequencies x 5 runs x 50 days; full = 50 x 50 x 250
        /// (slow; hours at full scale).
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        /// Indicator whose confusion rows go into the CSV.
        #[arg(long, value_enum, default_value_t = IndicatorChoice::MutualInformation)]
        indicator: IndicatorChoice,
        /// Calibration CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Daily indicator series with peaks and risk intervals.
    Indicators {
        #[arg(long)]
        panel: PathBuf,
        /// Optional weights CSV; checked against the panel instruments.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Embedding as m,tau or the word auto.
        #[arg(long)]
        embedding: Option<String>,
        /// Target recurrence rate for the epsilon threshold.
        #[arg(long)]
        rr: Option<f64>,
        /// Risk-interval length after each peak, in days.
        #[arg(long, default_value_t = 9)]
        horizon: usize,
        /// Rows per trading day in the panel.
        #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
        window_len: usize,
        /// Indicator CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bipower-variation jump test on the weighted portfolio.
    Jumptest {
        #[arg(long)]
        panel: PathBuf,
        /// Weights CSV; equal weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Minutes between sampled prices.
        #[arg(long, default_value_t = 5)]
        interval: usize,
        /// One-sided significance level.
        #[arg(long, default_value_t = 0.001)]
        alpha: f64,
        /// Rows per trading day in the panel.
        #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
        window_len: usize,
        /// Jump-test CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical-slowing-down trend screens around crisis dates.
    Benchmark {
        #[arg(long)]
        panel: PathBuf,
        /// Weights CSV; equal weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// CSV of crisis dates (YYYY-MM-DD, one per line).
        #[arg(long)]
        crises: PathBuf,
        /// Parameter grid TOML; defaults when absent.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Days of quiet history feeding the significance pool.
        #[arg(long, default_value_t = 1000)]
        history: usize,
        /// Rows per trading day; daily closes use 1.
        #[arg(long, default_value_t = 1)]
        window_len: usize,
        /// Benchmark report CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum spanning trees of chosen days' multiplex projections.
    Mst {
        #[arg(long)]
        panel: PathBuf,
        /// Day to export, YYYY-MM-DD; repeatable.
        #[arg(long = "date", required = true)]
        dates: Vec<String>,
        /// Embedding as m,tau or the word auto.
        #[arg(long)]
        embedding: Option<String>,
        /// Target recurrence rate for the epsilon threshold.
        #[arg(long)]
        rr: Option<f64>,
        /// Rows per trading day in the panel.
        #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
        window_len: usize,
        /// Directory for the edge/node CSV pairs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: every artifact into the configured directory.
    Report {
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IndicatorChoice {
    MutualInformation,
    EdgeOverlap,
}

impl IndicatorChoice {
    fn kind(self) -> IndicatorKind {
        match self {
            IndicatorChoice::MutualInformation => IndicatorKind::MutualInformation,
            IndicatorChoice::EdgeOverlap => IndicatorKind::EdgeOverlap,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
            {
                eprintln!("error: thread pool: {e}");
                return ExitCode::from(2);
            }
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    let config = cli.config;
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { out, truth } => cmd_simulate(config, seed, &out, &truth),
        Command::Calibrate {
            grid,
            runs,
            profile,
            indicator,
            out,
        } => cmd_calibrate(config, seed, grid, runs, profile, indicator, &out),
        Command::Indicators {
            panel,
            weights,
            embedding,
            rr,
            horizon,
            window_len,
            out,
        } => cmd_indicators(&panel, weights, embedding, rr, horizon, window_len, &out),
        Command::Jumptest {
            panel,
            weights,
            interval,
            alpha,
            window_len,
            out,
        } => cmd_jumptest(&panel, weights, interval, alpha, window_len, &out),
        Command::Benchmark {
            panel,
            weights,
            crises,
            grid,
            history,
            window_len,
            out,
        } => cmd_benchmark(&panel, weights, &crises, grid, history, window_len, &out),
        Command::Mst {
            panel,
            dates,
            embedding,
            rr,
            window_len,
            out,
        } => cmd_mst(&panel, &dates, embedding, rr, window_len, &out),
        Command::Report { out } => cmd_report(config, seed, out),
    }
}

fn require_file(stage: &'static str, path: &Path) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::config(
            stage,
            format!("file {} does not exist", path.display()),
        ))
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(
    stage: &'static str,
    path: &Path,
) -> Result<T, PipelineError> {
    require_file(stage, path)?;
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::config(stage, format!("{}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| PipelineError::config(stage, format!("{}: {e}", path.display())))
}

fn write_text(stage: &'static str, path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text)
        .map_err(|e| PipelineError::compute(stage, format!("{}: {e}", path.display())))
}

fn load_panel(
    stage: &'static str,
    path: &Path,
    window_len: usize,
) -> Result<mrn_ews::PricePanel, PipelineError> {
    require_file(stage, path)?;
    let options = LoadOptions {
        window_len,
        ..LoadOptions::default()
    };
    let (panel, cleaning) =
        load_price_panel(path, &options).map_err(|e| PipelineError::data(stage, e))?;
    if !cleaning.dropped_days.is_empty() {
        eprintln!(
            "note: dropped {} days exceeding the missing-data budget",
            cleaning.dropped_days.len()
        );
    }
    Ok(panel)
}

fn load_weights_or_equal(
    weights: Option<&Path>,
    panel: &mrn_ews::PricePanel,
) -> Result<WeightVector, PipelineError> {
    match weights {
        Some(path) => {
            require_file("load-weights", path)?;
            WeightVector::load_csv(path).map_err(|e| PipelineError::data("load-weights", e))
        }
        None => WeightVector::equal(panel.instruments())
            .map_err(|e| PipelineError::data("load-weights", e)),
    }
}

fn parse_embedding(text: &str) -> Result<EmbeddingConfig, PipelineError> {
    let stage = "parse-embedding";
    if text.eq_ignore_ascii_case("auto") {
        return Ok(EmbeddingConfig {
            mode: EmbeddingMode::Auto,
            ..EmbeddingConfig::default()
        });
    }
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(PipelineError::config(
            stage,
            format!("expected m,tau or auto, got {text}"),
        ));
    }
    let dim: usize = parts[0]
        .trim()
        .parse()
        .map_err(|e| PipelineError::config(stage, format!("bad dimension {}: {e}", parts[0])))?;
    let delay: usize = parts[1]
        .trim()
        .parse()
        .map_err(|e| PipelineError::config(stage, format!("bad delay {}: {e}", parts[1])))?;
    if dim == 0 || delay == 0 {
        return Err(PipelineError::config(stage, "m and tau must be positive"));
    }
    Ok(EmbeddingConfig {
        dim,
        delay,
        mode: EmbeddingMode::Fixed,
    })
}

fn indicator_config(
    embedding: Option<String>,
    rr: Option<f64>,
) -> Result<IndicatorConfig, PipelineError> {
    let mut config = IndicatorConfig::default();
    if let Some(text) = embedding {
        config.embedding = parse_embedding(&text)?;
    }
    if let Some(rate) = rr {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(PipelineError::config(
                "parse-rr",
                format!("recurrence rate {rate} must lie in (0, 1)"),
            ));
        }
        config.threshold = ThresholdPolicy::TargetRecurrenceRate(rate);
    }
    Ok(config)
}

fn opt_sig12(value: Option<f64>) -> String {
    value.map(sig12).unwrap_or_default()
}

fn cmd_simulate(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
    truth: &Path,
) -> Result<(), PipelineError> {
    let mut sim: SimConfig = match &config {
        Some(path) => parse_toml("load-config", path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = seed {
        sim.seed = seed;
    }
    let output = simulate_paths(&sim).map_err(|e| PipelineError::compute("simulate", e))?;
    output
        .panel
        .to_csv(out)
        .map_err(|e| PipelineError::compute("write-panel", e))?;

    let mut text = String::from("day,date,minute,direction,asset,size\n");
    let labels = output.panel.instruments();
    for event in &output.truth.events {
        let date = output.panel.dates()[event.day];
        let direction = match event.direction {
            JumpDirection::Positive => "positive",
            JumpDirection::Negative => "negative",
        };
        for (k, size) in event.sizes.iter().enumerate() {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                event.day,
                date,
                event.minute,
                direction,
                labels[k],
                sig12(*size),
            );
        }
    }
    write_text("write-truth", truth, &text)?;
    println!(
        "panel: {} ({} days x {} assets)",
        out.display(),
        output.panel.n_days(),
        output.panel.n_instruments(),
    );
    println!(
        "truth: {} ({} co-jump events, {} floored steps)",
        truth.display(),
        output.truth.events.len(),
        output.floored_steps,
    );
    Ok(())
}

fn desk_grid() -> Vec<f64> {
    vec![0.001, 0.005, 0.01, 0.05]
}

fn parse_grid(text: &str) -> Result<Vec<f64>, PipelineError> {
    let stage = "parse-grid";
    let bad = |msg: String| PipelineError::config(stage, msg);
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected start:end:step, got {text}")));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("{text}: {e}")))?;
        let (start, end, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0 && start > 0.0 && end >= start) {
            return Err(bad(format!("bad range {text}")));
        }
        let mut values = Vec::new();
        for k in 0.. {
            let x = start + step * k as f64;
            if x > end + step * 1e-9 {
                break;
            }
            values.push(x);
        }
        values
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("{text}: {e}")))?
    };
    if values.is_empty() {
        return Err(bad(format!("grid {text} is empty")));
    }
    Ok(values)
}

fn cmd_calibrate(
    config: Option<PathBuf>,
    seed: Option<u64>,
    grid: Option<String>,
    runs: Option<usize>,
    profile: Option<Profile>,
    indicator: IndicatorChoice,
    out: &Path,
) -> Result<(), PipelineError> {
    let had_config = config.is_some();
    let mut settings: CalibrationSettings = match &config {
        Some(path) => parse_toml("load-config", path)?,
        None => CalibrationSettings::default(),
    };
    let mut frequencies = desk_grid();
    let mut run_count = 5;
    match profile {
        Some(Profile::Desk) => {
            settings.base.n_days = 50;
        }
        Some(Profile::Full) => {
            frequencies = parse_grid("0.001:0.05:0.001")?;
            run_count = 50;
            settings.base.n_days = 250;
        }
        // Without an explicit profile the desk scale applies, but a
        // config file keeps its own run length.
        None => {
            if !had_config {
                settings.base.n_days = 50;
            }
        }
    }
    if let Some(text) = grid {
        frequencies = parse_grid(&text)?;
    }
    if let Some(runs) = runs {
        run_count = runs;
    }
    if let Some(seed) = seed {
        settings.master_seed = seed;
    }

    let outcome = calibrate_risk_level(&frequencies, run_count, &settings)
        .map_err(|e| PipelineError::compute("calibrate", e))?;

    let kind = indicator.kind();
    let mut text = String::from("frequency,run,sensitivity,specificity,objective\n");
    for cell in &outcome.cells {
        let summary = cell.summary(kind);
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            sig12(cell.frequency),
            cell.run,
            opt_sig12(summary.sensitivity()),
            opt_sig12(summary.specificity()),
            opt_sig12(summary.objective()),
        );
    }
    write_text("write-calibration", out, &text)?;
    println!(
        "optimal frequency (I): {}",
        sig12(outcome.mutual_information.optimal_frequency)
    );
    println!(
        "optimal frequency (omega): {}",
        sig12(outcome.edge_overlap.optimal_frequency)
    );
    println!("{} cells -> {}", outcome.cells.len(), out.display());
    Ok(())
}

fn cmd_indicators(
    panel_path: &Path,
    weights: Option<PathBuf>,
    embedding: Option<String>,
    rr: Option<f64>,
    horizon: usize,
    window_len: usize,
    out: &Path,
) -> Result<(), PipelineError> {
    let panel = load_panel("load-panel", panel_path, window_len)?;
    if let Some(weights_path) = weights {
        // Fail fast on a mismatched panel/weights pairing.
        let weights = load_weights_or_equal(Some(&weights_path), &panel)?;
        build_portfolio_series(&panel, &weights)
            .map_err(|e| PipelineError::data("portfolio", e))?;
    }
    let config = indicator_config(embedding, rr)?;
    let run =
        indicator_series(&panel, &config).map_err(|e| PipelineError::compute("indicators", e))?;
    let peaks_mi =
        detect_peaks(&run.mutual_information).map_err(|e| PipelineError::compute("peaks", e))?;
    let peaks_ov =
        detect_peaks(&run.edge_overlap).map_err(|e| PipelineError::compute("peaks", e))?;
    let intervals_mi = risk_intervals(&peaks_mi, horizon);
    let intervals_ov = risk_intervals(&peaks_ov, horizon);
    write_text(
        "write-indicators",
        out,
        &render_indicator_csv(&run, &peaks_mi, &peaks_ov, &intervals_mi, &intervals_ov),
    )?;
    println!(
        "{} days, {} I peaks, {} omega peaks -> {}",
        panel.n_days(),
        peaks_mi.peaks.len(),
        peaks_ov.peaks.len(),
        out.display(),
    );
    Ok(())
}

fn cmd_jumptest(
    panel_path: &Path,
    weights: Option<PathBuf>,
    interval: usize,
    alpha: f64,
    window_len: usize,
    out: &Path,
) -> Result<(), PipelineError> {
    let panel = load_panel("load-panel", panel_path, window_len)?;
    let weights = load_weights_or_equal(weights.as_deref(), &panel)?;
    let portfolio = build_portfolio_series(&panel, &weights)
        .map_err(|e| PipelineError::data("portfolio", e))?;
    let returns =
        log_returns(&portfolio, interval).map_err(|e| PipelineError::data("returns", e))?;
    let results =
        bns_by_day(&returns, 0, alpha).map_err(|e| PipelineError::compute("jump-test", e))?;
    write_text("write-jumps", out, &render_jump_csv(&results))?;
    let jump_days = results.iter().filter(|r| r.bns.is_jump).count();
    println!(
        "{} of {} days flagged at alpha {} -> {}",
        jump_days,
        results.len(),
        sig12(alpha),
        out.display(),
    );
    Ok(())
}

fn parse_crises(path: &Path) -> Result<Vec<NaiveDate>, PipelineError> {
    require_file("load-crises", path)?;
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::data("load-crises", format!("{}: {e}", path.display())))?;
    let mut dates = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match NaiveDate::parse_from_str(cell, "%Y-%m-%d") {
            Ok(date) => dates.push(date),
            // A non-date first line is a header.
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(PipelineError::data(
                    "load-crises",
                    format!("line {}: {cell}: {e}", i + 1),
                ));
            }
        }
    }
    if dates.is_empty() {
        return Err(PipelineError::data("load-crises", "no crisis dates found"));
    }
    Ok(dates)
}

struct BenchmarkRow {
    combo: String,
    kind_index: usize,
    tau: f64,
    p_value: Option<f64>,
}

fn cmd_benchmark(
    panel_path: &Path,
    weights: Option<PathBuf>,
    crises_path: &Path,
    grid_path: Option<PathBuf>,
    history: usize,
    window_len: usize,
    out: &Path,
) -> Result<(), PipelineError> {
    let panel = load_panel("load-panel", panel_path, window_len)?;
    let weights = load_weights_or_equal(weights.as_deref(), &panel)?;
    let portfolio = build_portfolio_series(&panel, &weights)
        .map_err(|e| PipelineError::data("portfolio", e))?;
    let closes = portfolio.daily_closes(0);
    let date_index: BTreeMap<NaiveDate, usize> = portfolio
        .dates()
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i))
        .collect();
    let crises = parse_crises(crises_path)?;
    let grid: ParamGrid = match &grid_path {
        Some(path) => parse_toml("load-grid", path)?,
        None => ParamGrid::default(),
    };

    let mut text = String::from(
        "crisis_date,indicator,param_combo,tau,passes_sensitivity,p_value,significant\n",
    );
    let mut total_rows = 0usize;
    for crisis_date in &crises {
        let Some(&crisis_idx) = date_index.get(crisis_date) else {
            return Err(PipelineError::data(
                "crises",
                format!("{crisis_date} is not a trading day in the panel"),
            ));
        };
        let hist = &closes[crisis_idx.saturating_sub(history)..crisis_idx];
        let mut rows: Vec<BenchmarkRow> = Vec::new();
        let mut taus: [Vec<f64>; 3] = Default::default();

        for &bandwidth in &grid.bandwidths {
            let det = match detrend_gaussian(&closes, crisis_idx, grid.detrend_window, bandwidth) {
                Ok(det) => det,
                Err(e) => {
                    eprintln!("note: crisis {crisis_date} bandwidth {bandwidth}: {e}");
                    continue;
                }
            };
            let hist_residuals: Option<Vec<f64>> = gaussian_smooth(hist, bandwidth)
                .ok()
                .map(|trend| hist.iter().zip(&trend).map(|(p, t)| p - t).collect());
            for &rolling in &grid.rolling_windows {
                let roll = match rolling_indicators(&det.residuals, rolling) {
                    Ok(roll) => roll,
                    Err(e) => {
                        eprintln!("note: crisis {crisis_date} rolling {rolling}: {e}");
                        continue;
                    }
                };
                let budget = grid.detrend_window - rolling;
                let hist_roll = hist_residuals
                    .as_ref()
                    .and_then(|res| rolling_indicators(res, rolling).ok());
                let mut pools: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
                for &len in &grid.segment_lens {
                    for &offset in &grid.segment_end_offsets {
                        if len + offset > budget {
                            continue;
                        }
                        let start = roll.len() - offset - len;
                        for (ki, kind) in CsdIndicator::ALL.iter().enumerate() {
                            let tau = kendall_tau_trend(&roll.get(*kind)[start..start + len]).tau;
                            taus[ki].push(tau);
                            let p_value = hist_roll.as_ref().and_then(|hr| {
                                let pool = pools.entry((len, ki)).or_insert_with(|| {
                                    tau_pool(hr.get(*kind), len).unwrap_or_default()
                                });
                                (!pool.is_empty()).then(|| pool_p_value(pool, tau))
                            });
                            rows.push(BenchmarkRow {
                                combo: format!(
                                    "bw={};rw={};lkw={};lkend={}",
                                    sig12(bandwidth),
                                    rolling,
                                    len,
                                    offset
                                ),
                                kind_index: ki,
                                tau,
                                p_value,
                            });
                        }
                    }
                }
            }
        }

        let passes: Vec<bool> = taus
            .iter()
            .map(|t| TauHistogram { taus: t.clone() }.passes())
            .collect();
        for row in &rows {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{}",
                crisis_date,
                CsdIndicator::ALL[row.kind_index].label(),
                row.combo,
                sig12(row.tau),
                u8::from(passes[row.kind_index]),
                opt_sig12(row.p_value),
                row.p_value
                    .map(|p| u8::from(p < SIGNIFICANCE_LEVEL).to_string())
                    .unwrap_or_default(),
            );
        }
        total_rows += rows.len();
    }
    write_text("write-benchmark", out, &text)?;
    println!(
        "{} rows for {} crises -> {}",
        total_rows,
        crises.len(),
        out.display(),
    );
    Ok(())
}

fn cmd_mst(
    panel_path: &Path,
    dates: &[String],
    embedding: Option<String>,
    rr: Option<f64>,
    window_len: usize,
    out_dir: &Path,
) -> Result<(), PipelineError> {
    let panel = load_panel("load-panel", panel_path, window_len)?;
    let config = indicator_config(embedding, rr)?;
    let returns = match config.input {
        mrn_ews::indicators::InputMode::LogReturns => {
            Some(log_returns(&panel, 1).map_err(|e| PipelineError::data("returns", e))?)
        }
        mrn_ews::indicators::InputMode::Prices => None,
    };
    fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::compute("mst", format!("{}: {e}", out_dir.display())))?;
    for text in dates {
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d")
            .map_err(|e| PipelineError::config("parse-date", format!("{text}: {e}")))?;
        let Some(day) = panel.dates().iter().position(|d| *d == date) else {
            return Err(PipelineError::data(
                "mst",
                format!("{date} is not a trading day in the panel"),
            ));
        };
        let tree = mst_for_day(&panel, returns.as_ref(), &config, day)?;
        let edges = out_dir.join(format!("{date}_edges.csv"));
        let nodes = out_dir.join(format!("{date}_nodes.csv"));
        write_text("mst", &edges, &render_mst_edges(&tree))?;
        write_text("mst", &nodes, &render_mst_nodes(&tree))?;
        println!(
            "{date}: total weight {}, hub dominance {}",
            sig12(tree.total_weight),
            sig12(tree.hub_dominance),
        );
    }
    Ok(())
}

fn cmd_report(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), PipelineError> {
    let path = config.ok_or_else(|| {
        PipelineError::config("report", "pass --config <file> with the run settings")
    })?;
    let mut config = PipelineConfig::load(&path)?;
    if let Some(out) = out {
        config.out_dir = out;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let bundle = run_pipeline(&config)?;
    println!("indicators: {}", bundle.indicator_csv.display());
    println!("peaks: {}", bundle.peaks_csv.display());
    for (alpha, path) in &bundle.jump_csvs {
        println!("jumps (alpha {}): {}", sig12(*alpha), path.display());
    }
    println!("overlap: {}", bundle.overlap_csv.display());
    println!(
        "msts: {} ({} trees)",
        bundle.mst_dir.display(),
        bundle.mst_exports.len(),
    );
    for summary in &bundle.overlaps {
        println!(
            "alpha {} [{}]: {} jump days, {} in risk intervals, {} exact",
            sig12(summary.alpha),
            summary.kind.short_label(),
            summary.jump_days,
            summary.covered,
            summary.exact,
        );
    }
    Ok(())
}
