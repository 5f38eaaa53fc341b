//! Benchmark drivers: the block-structured synthetic suite and the
//! single-dimension window matching suite.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::conformal::{ConformalConfig, StrangenessKind};
use crate::datagen::{gen_synthetic, gen_unibench, BaseLaw, ChangeKind, SyntheticKind, SyntheticPlan, UniBenchPlan};
use crate::detectors::{
    earliest_detection, error_count, evaluate_quorum_samples, quorum_verdict, rejection_ratio, BlockScan,
    MartingaleScan, MethodKind, QuorumConfig, ScanMethod, ScanPlan, Verdict,
};
use crate::error::{arg, Result};
use crate::measures::MeasureId;
use crate::mmd::KernelConfig;
use crate::ncd::NcdConfig;
use crate::rng::derive_seed;
use crate::series::Window;

/// Settings shared by every cell of the synthetic suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBenchConfig {
    pub runs: usize,
    pub blocks: usize,
    pub block_len: usize,
    pub alpha: f64,
    pub quorum: QuorumConfig,
    pub ncd: NcdConfig,
    pub kernel: KernelConfig,
    pub strangeness: StrangenessKind,
    pub seed: u64,
}

impl Default for SyntheticBenchConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            blocks: crate::datagen::DEFAULT_BLOCKS,
            block_len: crate::datagen::DEFAULT_BLOCK_LEN,
            alpha: 0.05,
            quorum: QuorumConfig::block_default(),
            ncd: NcdConfig::default(),
            kernel: KernelConfig::default(),
            strangeness: StrangenessKind::NearestNeighbor,
            seed: 0,
        }
    }
}

impl SyntheticBenchConfig {
    /// The configured method, seeded for one run.
    pub fn method(&self, kind: MethodKind, seed: u64) -> ScanMethod {
        match kind {
            MethodKind::Poset => ScanMethod::Poset(self.quorum.clone()),
            MethodKind::Mst => ScanMethod::Mst(self.quorum.clone()),
            MethodKind::Ncd => ScanMethod::Ncd {
                config: NcdConfig { seed, ..self.ncd.clone() },
                alpha: self.alpha,
            },
            MethodKind::MmdU2 => ScanMethod::MmdU2 {
                config: KernelConfig { seed, ..self.kernel.clone() },
                alpha: self.alpha,
            },
            MethodKind::MmdL2 => ScanMethod::MmdL2 {
                config: KernelConfig { seed, ..self.kernel.clone() },
                alpha: self.alpha,
            },
            MethodKind::Martingale => {
                ScanMethod::Martingale(ConformalConfig::new(self.block_len, self.strangeness))
            }
        }
    }
}

/// Outcome of one method on one generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRun {
    pub run: usize,
    /// Verdict on the second block against the first; `None` for the
    /// point-wise martingale.
    pub block2_same: Option<bool>,
    /// First rejecting position at or after the change onset.
    pub earliest: Option<usize>,
    pub ratio: f64,
}

/// Summary of one (method, kind, dimension) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCell {
    pub method: MethodKind,
    pub kind: SyntheticKind,
    pub d: usize,
    pub runs: Vec<SyntheticRun>,
    pub median_ratio: f64,
    /// Runs with a rejection after the onset.
    pub rejections: usize,
    /// Runs judging the second block equal to the first.
    pub block2_same: usize,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Run `method` on one seeded series of `kind`.
pub fn synthetic_run(
    method: MethodKind,
    kind: SyntheticKind,
    d: usize,
    run: usize,
    cfg: &SyntheticBenchConfig,
    tables: &CalibrationSet,
) -> Result<SyntheticRun> {
    let seed = derive_seed(cfg.seed, &[run as u64]);
    let plan = SyntheticPlan::with_layout(kind, cfg.blocks, cfg.block_len, d, seed);
    let (series, _) = gen_synthetic(&plan)?;
    let n = cfg.block_len;
    let onset = 2 * n;
    let reference = Window::new(0, n);
    let scan_method = cfg.method(method, derive_seed(seed, &[1]));
    let (block2_same, earliest) = match scan_method {
        ScanMethod::Martingale(conformal) => {
            let scan = MartingaleScan::new(&series, reference, conformal)?;
            (None, earliest_detection(scan, onset)?)
        }
        other => {
            let mut scan_plan = ScanPlan::new(reference, n, other);
            scan_plan.first_start = Some(n);
            let mut scan = BlockScan::new(&series, &scan_plan, tables)?;
            let second = match scan.next() {
                Some(rec) => rec?.verdict == Verdict::Same,
                None => return arg("series too short for a second block"),
            };
            (Some(second), earliest_detection(scan, onset)?)
        }
    };
    Ok(SyntheticRun {
        run,
        block2_same,
        earliest,
        ratio: rejection_ratio(earliest, series.len(), n)?,
    })
}

/// Whether a block method calls block 2 equal to block 1 on the series of
/// run `run`, with the same seeds `synthetic_run` uses.
pub fn block2_same(
    method: MethodKind,
    kind: SyntheticKind,
    d: usize,
    run: usize,
    cfg: &SyntheticBenchConfig,
    tables: &CalibrationSet,
) -> Result<bool> {
    if method == MethodKind::Martingale {
        return arg("the martingale has no block verdicts");
    }
    let seed = derive_seed(cfg.seed, &[run as u64]);
    let plan = SyntheticPlan::with_layout(kind, cfg.blocks, cfg.block_len, d, seed);
    let (series, _) = gen_synthetic(&plan)?;
    let n = cfg.block_len;
    let mut scan_plan = ScanPlan::new(Window::new(0, n), n, cfg.method(method, derive_seed(seed, &[1])));
    scan_plan.first_start = Some(n);
    match BlockScan::new(&series, &scan_plan, tables)?.next() {
        Some(rec) => Ok(rec?.verdict == Verdict::Same),
        None => arg("series too short for a second block"),
    }
}

/// Every run of one cell.
pub fn synthetic_cell(
    method: MethodKind,
    kind: SyntheticKind,
    d: usize,
    cfg: &SyntheticBenchConfig,
    tables: &CalibrationSet,
) -> Result<SyntheticCell> {
    let runs = (0..cfg.runs)
        .map(|r| synthetic_run(method, kind, d, r, cfg, tables))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_cell(method, kind, d, runs))
}

/// Aggregate runs computed elsewhere, for instance in parallel.
pub fn summarize_cell(method: MethodKind, kind: SyntheticKind, d: usize, runs: Vec<SyntheticRun>) -> SyntheticCell {
    let ratios: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
    SyntheticCell {
        method,
        kind,
        d,
        median_ratio: median(&ratios).unwrap_or(0.0),
        rejections: runs.iter().filter(|r| r.earliest.is_some()).count(),
        block2_same: runs.iter().filter(|r| r.block2_same == Some(true)).count(),
        runs,
    }
}

/// Wilcoxon, t-test, KS, phi and Xi.
pub fn standard_measures() -> Vec<MeasureId> {
    use MeasureId::*;
    vec![WilcoxBaseline, TTestBaseline, KolmogorovSmirnov, Phi, Xi]
}

/// The nine CDF measures added to the standard set.
pub fn extension_measures() -> Vec<MeasureId> {
    use MeasureId::*;
    vec![Klj, JinL, JensenShannon, ChiSquare, Hellinger, Variational, CramerVonMises, Minkowsky, Euclid]
}

pub fn combined_measures() -> Vec<MeasureId> {
    let mut all = standard_measures();
    all.extend(extension_measures());
    all
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniBenchConfig {
    pub series: usize,
    pub base: BaseLaw,
    pub change: ChangeKind,
    pub alpha: f64,
    pub step: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
}

impl UniBenchConfig {
    /// Disagreement levels 0.1 to 1.0, a 100 point step, alpha 0.05.
    pub fn new(series: usize, base: BaseLaw, change: ChangeKind, seed: u64) -> Self {
        Self {
            series,
            base,
            change,
            alpha: 0.05,
            step: 100,
            levels: (1..=10).map(|k| k as f64 / 10.0).collect(),
            seed,
        }
    }
}

/// Counts for one measure set at one disagreement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniBenchRow {
    pub set: String,
    pub disagreement: f64,
    /// Series where the window aligned with the embedded copy was judged equal.
    pub matches: usize,
    /// Windows judged equal anywhere.
    pub found: usize,
    pub golden: usize,
    pub error_count: usize,
}

const SET_NAMES: [&str; 3] = ["standard", "extension", "combined"];

fn measure_set(name: &str) -> Vec<MeasureId> {
    match name {
        "standard" => standard_measures(),
        "extension" => extension_measures(),
        _ => combined_measures(),
    }
}

/// Equal verdicts of one series, indexed by set then level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UniCounts {
    pub matches: Vec<Vec<usize>>,
    pub found: Vec<Vec<usize>>,
}

/// Scan series `index` once and score every measure set and disagreement
/// level on the shared per-measure decisions.
pub fn unibench_series(cfg: &UniBenchConfig, index: usize, tables: &CalibrationSet) -> Result<UniCounts> {
    if cfg.step == 0 || cfg.levels.is_empty() {
        return arg("unidimensional bench needs a positive step and at least one level");
    }
    let quorums: Vec<Vec<QuorumConfig>> = SET_NAMES
        .iter()
        .map(|name| {
            cfg.levels
                .iter()
                .map(|&l| QuorumConfig::new(measure_set(name), l, cfg.alpha))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let all = QuorumConfig::new(combined_measures(), 1.0, cfg.alpha)?;
    let mut counts = UniCounts {
        matches: vec![vec![0; cfg.levels.len()]; SET_NAMES.len()],
        found: vec![vec![0; cfg.levels.len()]; SET_NAMES.len()],
    };
    let plan = UniBenchPlan::random(cfg.base, cfg.change, derive_seed(cfg.seed, &[index as u64]));
    let (series, _) = gen_unibench(&plan)?;
    let values: Vec<f64> = series.points().iter().map(|p| p.values[0]).collect();
    let t = plan.window_len;
    let embed_start = (plan.embed_position - 1) * t;
    let mut start = t;
    while start + t <= values.len() {
        let result = evaluate_quorum_samples(&values[..t], &values[start..start + t], &all, tables)?;
        for (s, per_level) in quorums.iter().enumerate() {
            for (l, q) in per_level.iter().enumerate() {
                if quorum_verdict(&result.outcomes, q)? == Verdict::Same {
                    counts.found[s][l] += 1;
                    if start == embed_start {
                        counts.matches[s][l] += 1;
                    }
                }
            }
        }
        start += cfg.step;
    }
    Ok(counts)
}

/// Sum per-series counts into one row per set and level.
pub fn unibench_rows<I: IntoIterator<Item = UniCounts>>(cfg: &UniBenchConfig, counts: I) -> Vec<UniBenchRow> {
    let mut total = UniCounts {
        matches: vec![vec![0; cfg.levels.len()]; SET_NAMES.len()],
        found: vec![vec![0; cfg.levels.len()]; SET_NAMES.len()],
    };
    for c in counts {
        for s in 0..SET_NAMES.len() {
            for l in 0..cfg.levels.len() {
                total.matches[s][l] += c.matches[s][l];
                total.found[s][l] += c.found[s][l];
            }
        }
    }
    let mut rows = Vec::new();
    for (s, name) in SET_NAMES.iter().enumerate() {
        for (l, &level) in cfg.levels.iter().enumerate() {
            let (matches, found) = (total.matches[s][l], total.found[s][l]);
            rows.push(UniBenchRow {
                set: name.to_string(),
                disagreement: level,
                matches,
                found,
                golden: cfg.series,
                error_count: error_count(found, matches, cfg.series),
            });
        }
    }
    rows
}

/// Run the whole suite sequentially.
pub fn unibench(cfg: &UniBenchConfig, tables: &CalibrationSet) -> Result<Vec<UniBenchRow>> {
    let counts = (0..cfg.series)
        .map(|i| unibench_series(cfg, i, tables))
        .collect::<Result<Vec<_>>>()?;
    Ok(unibench_rows(cfg, counts))
}

/// Smallest error over the levels of one set.
pub fn best_error(rows: &[UniBenchRow], set: &str) -> Option<usize> {
    rows.iter().filter(|r| r.set == set).map(|r| r.error_count).min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{CalibrationTable, Generator, SimConfig};
    use crate::measures::MeasureSpec;

    fn tables(ids: &[MeasureId]) -> CalibrationSet {
        let mut set = CalibrationSet::new();
        let cfg = SimConfig::new(vec![50, 100, 200], 300, Generator::Normal, 1);
        for &id in ids.iter().filter(|m| !m.is_baseline()) {
            set.insert(CalibrationTable::simulate(&MeasureSpec::new(id), &cfg).unwrap());
        }
        set
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn measure_sets() {
        assert_eq!(standard_measures().len(), 5);
        assert_eq!(extension_measures().len(), 9);
        assert!(extension_measures().iter().all(|m| m.is_calibratable()));
        assert_eq!(combined_measures().len(), 14);
    }

    #[test]
    fn synthetic_cell_on_a_small_layout() {
        let cfg = SyntheticBenchConfig {
            runs: 3,
            blocks: 6,
            block_len: 60,
            quorum: QuorumConfig::new(vec![MeasureId::KolmogorovSmirnov, MeasureId::Hellinger], 0.5, 0.05).unwrap(),
            ..SyntheticBenchConfig::default()
        };
        let set = tables(&[MeasureId::KolmogorovSmirnov, MeasureId::Hellinger]);
        let cell = synthetic_cell(MethodKind::Mst, SyntheticKind::Average, 2, &cfg, &set).unwrap();
        assert_eq!(cell.runs.len(), 3);
        assert!(cell.runs.iter().all(|r| r.block2_same.is_some()));
        assert!(cell.runs.iter().all(|r| (0.0..=1.0).contains(&r.ratio)));
        // the last blocks sit 50 standard deviations away
        assert_eq!(cell.rejections, 3);
        assert_eq!(cell, synthetic_cell(MethodKind::Mst, SyntheticKind::Average, 2, &cfg, &set).unwrap());
        let mart = synthetic_cell(MethodKind::Martingale, SyntheticKind::Average, 2, &cfg, &set).unwrap();
        assert!(mart.runs.iter().all(|r| r.block2_same.is_none()));
    }

    #[test]
    fn unibench_counts() {
        let set = tables(&combined_measures());
        let mut cfg = UniBenchConfig::new(4, BaseLaw::Normal, ChangeKind::Average, 5);
        cfg.levels = vec![0.2, 1.0];
        let rows = unibench(&cfg, &set).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!(r.matches <= r.found && r.matches <= r.golden);
            assert_eq!(r.error_count, error_count(r.found, r.matches, 4));
        }
        assert!(best_error(&rows, "combined").is_some());
        assert_eq!(rows, unibench(&cfg, &set).unwrap());
    }
}
