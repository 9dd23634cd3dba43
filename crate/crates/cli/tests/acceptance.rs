//! End-to-end acceptance checks: each test validates one externally
//! stated guarantee of the engine against an independent in-test oracle
//! or a hard numeric bound, and prints a single PASS/FAIL line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mrn_ews::benchmark::kendall_tau_b;
use mrn_ews::indicators::{detect_peaks, IndicatorKind, IndicatorSeries};
use mrn_ews::jump::bns_test;
use mrn_ews::mrn::{
    average_edge_overlap, degree_mutual_information, interlayer_mutual_information,
    maximum_spanning_tree, Mrn, OverlapNormalization, WeightedGraph,
};
use mrn_ews::recurrence::{
    embed, recurrence_matrix, select_epsilon, EmbeddingConfig, EmbeddingMode, RecurrenceMatrix,
    ThresholdPolicy,
};
use mrn_ews::sim::{
    calibrate_risk_level, simulate_paths, CalibrationSettings, JumpDirection, SimConfig,
};

fn check(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 6).unwrap()
}

fn fixed_embedding() -> EmbeddingConfig {
    EmbeddingConfig {
        dim: 3,
        delay: 1,
        mode: EmbeddingMode::Fixed,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> RecurrenceMatrix {
    let window: Vec<f64> = (0..len)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let traj = embed(&window, &fixed_embedding()).unwrap();
    let eps = select_epsilon(&traj, &ThresholdPolicy::TargetRecurrenceRate(rate)).unwrap();
    recurrence_matrix(&traj, eps.value)
}

#[test]
fn recurrence_rate_targeting() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_dev = 0.0f64;
    for _ in 0..100 {
        let matrix = random_matrix(&mut rng, 240, 0.05);
        max_dev = max_dev.max((matrix.recurrence_rate() - 0.05).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "recurrence-rate targeting",
        max_dev <= 0.005 && elapsed < 10.0,
        &format!("max |rate - 0.05| = {max_dev:.2e} over 100 windows in {elapsed:.2}s"),
    );
}

#[test]
fn interlayer_mi_identities() {
    // Identical layers: the interlayer statistic must collapse to the
    // marginal degree entropy, recomputed here from a raw histogram.
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut max_err = 0.0f64;
    for _ in 0..20 {
        let matrix = random_matrix(&mut rng, 240, 0.05);
        let mi = interlayer_mutual_information(&matrix, &matrix).unwrap();
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for &k in matrix.degrees() {
            *counts.entry(k).or_insert(0) += 1;
        }
        let n = matrix.degrees().len() as f64;
        let entropy: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum();
        max_err = max_err.max((mi - entropy).abs());
    }

    // Independently shuffled degree sequences share no structure, so
    // the statistic must stay near zero apart from plug-in bias.
    let base: Vec<u32> = (0..1000).map(|i| 1 + (i % 8) as u32).collect();
    let mut sum = 0.0;
    for _ in 0..100 {
        let mut ka = base.clone();
        let mut kb = base.clone();
        ka.shuffle(&mut rng);
        kb.shuffle(&mut rng);
        sum += degree_mutual_information(&ka, &kb).unwrap();
    }
    let mean = sum / 100.0;
    check(
        "interlayer mutual-information identities",
        max_err <= 1e-12 && mean < 0.05,
        &format!("identical-layer error {max_err:.2e}, shuffled mean {mean:.4}"),
    );
}

#[test]
fn edge_overlap_identities() {
    let layer = RecurrenceMatrix::from_pairs(4, &[(0, 1), (1, 2), (2, 3)]);
    let disjoint = RecurrenceMatrix::from_pairs(4, &[(0, 2), (1, 3)]);
    let mrn = |layers: Vec<RecurrenceMatrix>| Mrn {
        date: day0(),
        labels: (0..layers.len()).map(|i| format!("L{i}")).collect(),
        layers,
        dim: 3,
        delay: 1,
    };
    let same = average_edge_overlap(
        &mrn(vec![layer.clone(), layer.clone()]),
        OverlapNormalization::PairwiseTwo,
    )
    .unwrap();
    let split = average_edge_overlap(
        &mrn(vec![layer, disjoint]),
        OverlapNormalization::PairwiseTwo,
    )
    .unwrap();
    check(
        "edge-overlap identities",
        same.value == 1.0 && split.value == 0.5,
        &format!(
            "identical -> {}, edge-disjoint -> {}",
            same.value, split.value
        ),
    );
}

#[test]
fn jump_test_size_and_power() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let sigma = 0.001;
    let day = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..47)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut rejections = 0usize;
    for _ in 0..10_000 {
        let returns = day(&mut rng);
        if bns_test(&returns, 0.001).unwrap().is_jump {
            rejections += 1;
        }
    }
    let size = rejections as f64 / 10_000.0;

    // Ten daily standard deviations landing in a single sampled return.
    let jump = 10.0 * sigma * 47.0f64.sqrt();
    let mut detected = 0usize;
    for _ in 0..1_000 {
        let mut returns = day(&mut rng);
        returns[23] += jump;
        if bns_test(&returns, 0.001).unwrap().is_jump {
            detected += 1;
        }
    }
    let power = detected as f64 / 1_000.0;
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "jump-test size and power",
        size <= 0.004 && power >= 0.95 && elapsed < 60.0,
        &format!(
            "null rejection rate {size:.4}, 10-sigma detection rate {power:.3}, {elapsed:.2}s"
        ),
    );
}

/// Quadratic pair-counting tau-b, mirroring only the published
/// definition: concordant minus discordant over the tie-corrected pair
/// counts.
fn oracle_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_x, mut tied_y) = (0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (x[i] - x[j]).signum();
            let dy = (y[i] - y[j]).signum();
            if x[i] == x[j] {
                tied_x += 1;
            }
            if y[i] == y[j] {
                tied_y += 1;
            }
            if x[i] != x[j] && y[i] != y[j] {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let total = (n as u64) * (n as u64 - 1) / 2;
    let denom = (((total - tied_x) as f64) * ((total - tied_y) as f64)).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / denom)
}

#[test]
fn kendall_tau_matches_pair_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0usize;
    for trial in 0..1_000 {
        let n = rng.random_range(2..=50);
        // A coarse lattice forces plenty of exact ties.
        let levels = rng.random_range(2..=8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let fast = kendall_tau_b(&x, &y).unwrap();
        let oracle = oracle_tau_b(&x, &y);
        let same = match (fast, oracle) {
            (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
            (None, None) => true,
            _ => false,
        };
        assert!(same, "trial {trial}: fast {fast:?} vs oracle {oracle:?}");
        checked += 1;
    }
    check(
        "Kendall tau oracle equivalence",
        checked == 1_000,
        &format!("{checked} random tied segments, bitwise equal"),
    );
}

fn series_of(values: Vec<f64>) -> IndicatorSeries {
    IndicatorSeries {
        kind: IndicatorKind::MutualInformation,
        dates: (0..values.len() as u64)
            .map(|i| day0() + Days::new(i))
            .collect(),
        values: values.into_iter().map(Some).collect(),
    }
}

fn peak_indexes(series: &IndicatorSeries) -> BTreeSet<usize> {
    detect_peaks(series)
        .unwrap()
        .peaks
        .iter()
        .map(|p| p.index)
        .collect()
}

#[test]
fn peak_detector_recall_and_affine_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let len = 100usize;
    let mut recalled = true;
    let mut endpoint_free = true;
    let mut invariant = true;
    for _ in 0..100 {
        let mut values: Vec<f64> = (0..len).map(|_| 0.1 * rng.random::<f64>()).collect();
        let n_spikes = rng.random_range(1..=2);
        let mut planted: Vec<usize> = Vec::new();
        while planted.len() < n_spikes {
            let c = rng.random_range(3..len - 3);
            if planted.iter().all(|&p| p.abs_diff(c) >= 3) {
                planted.push(c);
            }
        }
        for &p in &planted {
            values[p] = 10.0 + rng.random::<f64>();
        }
        let base = series_of(values.clone());
        let found = peak_indexes(&base);
        recalled &= planted.iter().all(|p| found.contains(p));
        endpoint_free &= !found.contains(&0) && !found.contains(&(len - 1));
        for _ in 0..20 {
            let a = 0.5 + 4.5 * rng.random::<f64>();
            let b = -50.0 + 100.0 * rng.random::<f64>();
            let mapped = series_of(values.iter().map(|v| a * v + b).collect());
            invariant &= peak_indexes(&mapped) == found;
        }
    }
    check(
        "peak detector recall and affine invariance",
        recalled && endpoint_free && invariant,
        &format!("recall {recalled}, endpoint-free {endpoint_free}, invariant {invariant}"),
    );
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
        ra != rb
    }
}

#[test]
fn maximum_spanning_tree_dominates_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_margin = f64::INFINITY;
    for _ in 0..50 {
        let m = rng.random_range(4..=16);
        let labels: Vec<String> = (0..m).map(|i| format!("n{i:02}")).collect();
        let graph = WeightedGraph::complete(labels, |_, _| rng.random::<f64>());
        let tree = maximum_spanning_tree(&graph).unwrap();
        assert_eq!(tree.edges.len(), m - 1, "edge count for m = {m}");
        let mut uf = UnionFind::new(m);
        let mut joins = 0;
        for e in &tree.edges {
            joins += usize::from(uf.union(e.a, e.b));
        }
        assert_eq!(joins, m - 1, "tree must be connected");

        let all_edges: Vec<(usize, usize, f64)> = graph.edges().collect();
        for _ in 0..1_000 {
            let mut order: Vec<usize> = (0..all_edges.len()).collect();
            order.shuffle(&mut rng);
            let mut uf = UnionFind::new(m);
            let mut weight = 0.0;
            let mut picked = 0;
            for &k in &order {
                let (a, b, w) = all_edges[k];
                if uf.union(a, b) {
                    weight += w;
                    picked += 1;
                    if picked == m - 1 {
                        break;
                    }
                }
            }
            worst_margin = worst_margin.min(tree.total_weight - weight);
        }
    }
    check(
        "maximum spanning tree dominates sampled trees",
        worst_margin >= -1e-9,
        &format!("worst margin over 50 graphs x 1000 samples = {worst_margin:.3e}"),
    );
}

#[test]
fn simulation_scale_and_cojump_counts() {
    let config = SimConfig::default();
    let output = simulate_paths(&config).unwrap();
    let replay = simulate_paths(&config).unwrap();
    let returns_per_asset = output.panel.series(0).len();
    let mut scale_ok = returns_per_asset == 60_000 && output.panel.n_days() == 250;
    for k in 0..output.panel.n_instruments() {
        scale_ok &= output.panel.series(k) == replay.panel.series(k);
    }

    let trials = 60_000.0;
    let mut counts_ok = true;
    let mut detail = String::new();
    for seed in [1u64, 2, 3] {
        let run = simulate_paths(&SimConfig {
            seed,
            ..SimConfig::default()
        })
        .unwrap();
        for (direction, p) in [
            (JumpDirection::Positive, config.cojump_prob_pos),
            (JumpDirection::Negative, config.cojump_prob_neg),
        ] {
            let count = run
                .truth
                .events
                .iter()
                .filter(|e| e.direction == direction)
                .count();
            let mean = p * trials;
            let sd = (trials * p * (1.0 - p)).sqrt();
            counts_ok &= (count as f64 - mean).abs() <= 3.0 * sd;
            detail.push_str(&format!("{count} "));
        }
    }
    check(
        "simulation scale and planted co-jump counts",
        scale_ok && counts_ok,
        &format!(
            "{returns_per_asset} returns per asset, replay identical, event counts {detail}within 3 sigma of 60"
        ),
    );
}

#[test]
fn desk_calibration_completes_with_finite_objectives() {
    let start = Instant::now();
    let grid = [0.001, 0.005, 0.01, 0.05];
    let runs = 5;
    let mut settings = CalibrationSettings::default();
    settings.base.n_days = 50;
    let outcome = calibrate_risk_level(&grid, runs, &settings).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let mut shape_ok = outcome.frequencies == grid && outcome.cells.len() == grid.len() * runs;
    for (i, cell) in outcome.cells.iter().enumerate() {
        shape_ok &= cell.frequency == grid[i / runs] && cell.run == i % runs;
    }
    let mut finite_ok = true;
    for summary in [&outcome.mutual_information, &outcome.edge_overlap] {
        finite_ok &= summary.mean_objective.len() == grid.len()
            && summary.mean_objective.iter().all(|v| v.is_finite())
            && grid.contains(&summary.optimal_frequency)
            && summary.run_optima.len() == runs;
    }
    check(
        "desk-scale calibration harness",
        shape_ok && finite_ok && elapsed < 900.0,
        &format!(
            "20 cells in {elapsed:.1}s, optima I = {}, omega = {}",
            outcome.mutual_information.optimal_frequency, outcome.edge_overlap.optimal_frequency
        ),
    );
}

fn walk(dir: &Path, base: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            walk(&path, base, into);
        } else {
            into.insert(
                path.strip_prefix(base).unwrap().to_path_buf(),
                fs::read(&path).unwrap(),
            );
        }
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn report_overlap_rejoin_and_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = SimConfig {
        n_assets: 4,
        n_days: 45,
        cojump_prob_pos: 0.004,
        cojump_prob_neg: 0.004,
        seed: 17,
        ..SimConfig::default()
    };
    let output = simulate_paths(&sim).unwrap();
    output.panel.to_csv(&tmp.path().join("panel.csv")).unwrap();
    let config_path = tmp.path().join("report.toml");
    fs::write(
        &config_path,
        "panel = \"panel.csv\"\nout_dir = \"report\"\nwindow_len = 240\nsampling_interval = 5\nalphas = [0.001, 0.0025]\nhorizon = 9\nseed = 23\n",
    )
    .unwrap();

    let run = || {
        let status = Command::new(env!("CARGO_BIN_EXE_mrn-ews"))
            .args(["report", "--config"])
            .arg(&config_path)
            .status()
            .unwrap();
        assert!(status.success(), "report run failed");
        let mut snapshot = BTreeMap::new();
        let dir = tmp.path().join("report");
        walk(&dir, &dir, &mut snapshot);
        snapshot
    };
    let first = run();
    let second = run();
    let identical = first == second;

    for name in [
        "cleaning_report.csv",
        "portfolio.csv",
        "gaps.csv",
        "indicators.csv",
        "peaks.csv",
        "jumps_alpha_0.001.csv",
        "jumps_alpha_0.0025.csv",
        "overlap_report.csv",
        "run_config.toml",
    ] {
        assert!(
            first.contains_key(Path::new(name)),
            "missing artifact {name}"
        );
    }

    // Brute-force re-join of the written CSVs, no engine code involved.
    let report_dir = tmp.path().join("report");
    let mut flags: BTreeMap<String, (bool, bool, bool, bool)> = BTreeMap::new();
    for row in csv_rows(&report_dir.join("indicators.csv")) {
        flags.insert(
            row[0].clone(),
            (row[4] == "1", row[5] == "1", row[6] == "1", row[7] == "1"),
        );
    }
    let mut recomputed: BTreeMap<(String, String), (usize, usize, usize)> = BTreeMap::new();
    for alpha in ["0.001", "0.0025"] {
        for row in csv_rows(&report_dir.join(format!("jumps_alpha_{alpha}.csv"))) {
            if row[7] != "1" {
                continue;
            }
            let (peak_i, peak_o, in_i, in_o) = flags[&row[0]];
            for (kind, peak, covered) in [("I", peak_i, in_i), ("omega", peak_o, in_o)] {
                let cell = recomputed
                    .entry((alpha.to_string(), kind.to_string()))
                    .or_default();
                cell.0 += 1;
                cell.1 += usize::from(covered);
                cell.2 += usize::from(peak);
            }
        }
    }
    let mut rejoined = true;
    let overlap_rows = csv_rows(&report_dir.join("overlap_report.csv"));
    assert_eq!(
        overlap_rows.len(),
        4,
        "one overlap row per alpha and indicator"
    );
    for row in &overlap_rows {
        let key = (row[0].clone(), row[1].clone());
        let got = recomputed.get(&key).copied().unwrap_or_default();
        rejoined &= got
            == (
                row[2].parse().unwrap(),
                row[3].parse().unwrap(),
                row[4].parse().unwrap(),
            );
    }
    check(
        "report overlap re-join and rerun determinism",
        identical && rejoined,
        &format!(
            "{} artifacts byte-identical across reruns, {} overlap rows re-joined exactly",
            first.len(),
            overlap_rows.len()
        ),
    );
}
