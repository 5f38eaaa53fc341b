//! Simulated null distributions for the normalized CDF measures.
//!
//! A calibration run draws `M` pairs of `N`-sample windows from one process,
//! evaluates a measure on each pair and keeps the empirical CDF of the `M`
//! normalized values. Runs for several window sizes form a cloud; the
//! pointwise mean of the cloud is the representative null CDF used for
//! p-value lookup, and the pointwise standard deviation is its band.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::measures::{pooled_eval, Ecdf1D, MeasureId, MeasureOutcome, MeasureSpec};
use crate::rng;

/// File format version of persisted tables.
pub const TABLE_VERSION: u32 = 1;
/// Number of quantile knots in a representative table.
pub const GRID_KNOTS: usize = 512;

/// Window sizes 100, 200, ..., 2000.
pub fn default_window_sizes() -> Vec<usize> {
    (1..=20).map(|k| 100 * k).collect()
}

/// Pairs per window size for shipped tables.
pub const DEFAULT_PAIRS: usize = 10_000;
/// Pairs per window size for quick tables.
pub const QUICK_PAIRS: usize = 2_000;

/// Process that feeds the simulated windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    #[serde(rename = "normal01")]
    Normal,
    #[serde(rename = "uniform01")]
    Uniform,
}

impl Generator {
    pub fn id(self) -> &'static str {
        match self {
            Generator::Normal => "normal01",
            Generator::Uniform => "uniform01",
        }
    }

    pub fn fill<R: Rng>(self, rng: &mut R, out: &mut [f64]) {
        match self {
            Generator::Normal => out.iter_mut().for_each(|v| *v = StandardNormal.sample(rng)),
            Generator::Uniform => out.iter_mut().for_each(|v| *v = rng.gen::<f64>()),
        }
    }
}

/// Simulation settings shared by every measure of one calibration batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub window_sizes: Vec<usize>,
    /// Pairs per run.
    pub pairs: usize,
    /// Runs per window size.
    pub repetitions: usize,
    pub generator: Generator,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(window_sizes: Vec<usize>, pairs: usize, generator: Generator, seed: u64) -> Self {
        Self {
            window_sizes,
            pairs,
            repetitions: 1,
            generator,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.pairs < 100 {
            return arg(format!("at least 100 pairs per run are required, got {}", self.pairs));
        }
        if self.window_sizes.is_empty() || self.repetitions == 0 {
            return arg("calibration needs at least one window size and repetition");
        }
        if let Some(n) = self.window_sizes.iter().find(|&&n| n < 10) {
            return arg(format!("window size {n} is below the minimum of 10"));
        }
        Ok(())
    }
}

/// One member of a cloud: the ECDF of `pairs` normalized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudRun {
    pub n: usize,
    pub repetition: usize,
    pub cdf: Ecdf1D,
    /// Mean of the unnormalized values.
    pub mean_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCloud {
    pub measure: MeasureId,
    pub runs: Vec<CloudRun>,
    pub pairs: usize,
    pub seed: u64,
    pub generator: Generator,
    pub window_sizes: Vec<usize>,
}

/// Simulate clouds for several measures from the same draws.
pub fn simulate_null_clouds(specs: &[MeasureSpec], cfg: &SimConfig) -> Result<Vec<NullCloud>> {
    cfg.validate()?;
    if specs.is_empty() {
        return arg("no measures to calibrate");
    }
    if let Some(s) = specs.iter().find(|s| !s.calibratable) {
        return arg(format!("measure `{}` has no null distribution", s.id));
    }
    let mut runs: Vec<Vec<CloudRun>> = vec![Vec::new(); specs.len()];
    let mut values = vec![vec![0.0; cfg.pairs]; specs.len()];
    let mut raw_sums = vec![0.0; specs.len()];
    for &n in &cfg.window_sizes {
        let mut r = vec![0.0; n];
        let mut w = vec![0.0; n];
        for rep in 0..cfg.repetitions {
            let mut rng = rng::stream(cfg.seed, &[n as u64, rep as u64]);
            raw_sums.iter_mut().for_each(|s| *s = 0.0);
            for pair in 0..cfg.pairs {
                cfg.generator.fill(&mut rng, &mut r);
                cfg.generator.fill(&mut rng, &mut w);
                r.sort_by(f64::total_cmp);
                w.sort_by(f64::total_cmp);
                let (x, y) = pooled_eval(&Ecdf1D::from_sorted(&r), &Ecdf1D::from_sorted(&w));
                for (k, spec) in specs.iter().enumerate() {
                    let (raw, normalized) = spec.evaluate_pooled(&x, &y, 2 * n)?;
                    values[k][pair] = normalized;
                    raw_sums[k] += raw;
                }
            }
            for k in 0..specs.len() {
                runs[k].push(CloudRun {
                    n,
                    repetition: rep,
                    cdf: Ecdf1D::from_samples(&values[k])?,
                    mean_raw: raw_sums[k] / cfg.pairs as f64,
                });
            }
        }
    }
    Ok(specs
        .iter()
        .zip(runs)
        .map(|(spec, runs)| NullCloud {
            measure: spec.id,
            runs,
            pairs: cfg.pairs,
            seed: cfg.seed,
            generator: cfg.generator,
            window_sizes: cfg.window_sizes.clone(),
        })
        .collect())
}

pub fn simulate_null_cloud(spec: &MeasureSpec, cfg: &SimConfig) -> Result<NullCloud> {
    Ok(simulate_null_clouds(std::slice::from_ref(spec), cfg)?.remove(0))
}

/// One knot of a representative table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub cum: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(rename = "Ns")]
    pub window_sizes: Vec<usize>,
    #[serde(rename = "M")]
    pub pairs: usize,
    pub seed: u64,
    pub generator: Generator,
}

/// Representative null CDF of one normalized measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub version: u32,
    pub measure: MeasureId,
    pub grid: Vec<GridPoint>,
    pub provenance: Provenance,
}

/// Pointwise mean and population standard deviation of the cloud over
/// quantile knots of the pooled simulated values.
pub fn representative_band(cloud: &NullCloud) -> Result<CalibrationTable> {
    if cloud.runs.len() < 2 {
        return arg("a representative band needs at least two runs");
    }
    let mut pooled: Vec<f64> = cloud.runs.iter().flat_map(|r| r.cdf.samples()).collect();
    pooled.sort_by(f64::total_cmp);
    let len = pooled.len();
    let mut knots: Vec<f64> = (1..=GRID_KNOTS)
        .map(|k| {
            let idx = (k * len).div_ceil(GRID_KNOTS) - 1;
            pooled[idx]
        })
        .collect();
    knots.dedup();
    let runs = cloud.runs.len() as f64;
    let grid = knots
        .into_iter()
        .map(|x| {
            let vals: Vec<f64> = cloud.runs.iter().map(|r| r.cdf.eval(x)).collect();
            let mean = vals.iter().sum::<f64>() / runs;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / runs;
            GridPoint {
                x,
                cum: mean.min(1.0),
                sigma: var.sqrt(),
            }
        })
        .collect();
    Ok(CalibrationTable {
        version: TABLE_VERSION,
        measure: cloud.measure,
        grid,
        provenance: Provenance {
            window_sizes: cloud.window_sizes.clone(),
            pairs: cloud.pairs,
            seed: cloud.seed,
            generator: cloud.generator,
        },
    })
}

/// Fraction of cloud members lying within `cum +- 2 sigma` at every knot.
pub fn band_coverage(cloud: &NullCloud, table: &CalibrationTable) -> f64 {
    const SLACK: f64 = 1e-12;
    if cloud.runs.is_empty() {
        return 0.0;
    }
    let inside = cloud
        .runs
        .iter()
        .filter(|run| {
            table
                .grid
                .iter()
                .all(|g| (run.cdf.eval(g.x) - g.cum).abs() <= 2.0 * g.sigma + SLACK)
        })
        .count();
    inside as f64 / cloud.runs.len() as f64
}

impl CalibrationTable {
    /// Simulate and summarize in one step.
    pub fn simulate(spec: &MeasureSpec, cfg: &SimConfig) -> Result<Self> {
        representative_band(&simulate_null_cloud(spec, cfg)?)
    }

    /// Representative CDF at `value`, interpolated linearly between knots
    /// and clamped to `[0, 1]`.
    pub fn p_value(&self, value: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || value < g[0].x {
            return 0.0;
        }
        if value >= g[g.len() - 1].x {
            return 1.0;
        }
        let k = g.partition_point(|p| p.x <= value);
        let (a, b) = (g[k - 1], g[k]);
        let t = (value - a.x) / (b.x - a.x);
        (a.cum + t * (b.cum - a.cum)).clamp(0.0, 1.0)
    }

    /// Attach the calibrated p-value and decision to an outcome.
    pub fn apply(&self, outcome: MeasureOutcome, alpha: f64) -> Result<MeasureOutcome> {
        if outcome.id != self.measure {
            return arg(format!(
                "table for `{}` applied to `{}`",
                self.measure, outcome.id
            ));
        }
        let p = self.p_value(outcome.normalized);
        Ok(outcome.with_p_value(p, alpha))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("table `{}`: {m}", self.measure)));
        if self.version != TABLE_VERSION {
            return bad(&format!("unsupported version {}", self.version));
        }
        if self.grid.is_empty() {
            return bad("empty grid");
        }
        if self.grid.windows(2).any(|w| w[0].x >= w[1].x || w[0].cum > w[1].cum) {
            return bad("grid must be strictly increasing with non-decreasing cumulative values");
        }
        if self.grid.iter().any(|g| g.sigma < 0.0 || !(0.0..=1.0).contains(&g.cum)) {
            return bad("cumulative values must lie in [0, 1] with non-negative sigma");
        }
        if self.grid.last().unwrap().cum != 1.0 {
            return bad("cumulative values must end at 1");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Conventional file name inside a table directory.
    pub fn file_name(measure: MeasureId) -> String {
        format!("{measure}.calib.json")
    }
}

/// Tables keyed by measure.
#[derive(Debug, Clone, Default)]
pub struct CalibrationSet {
    tables: BTreeMap<MeasureId, CalibrationTable>,
    paths: BTreeMap<MeasureId, PathBuf>,
}

impl CalibrationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: CalibrationTable) {
        self.tables.insert(table.measure, table);
    }

    pub fn get(&self, id: MeasureId) -> Option<&CalibrationTable> {
        self.tables.get(&id)
    }

    pub fn require(&self, id: MeasureId) -> Result<&CalibrationTable> {
        self.get(id)
            .ok_or_else(|| Error::MissingCalibration(id.to_string()))
    }

    pub fn measures(&self) -> impl Iterator<Item = MeasureId> + '_ {
        self.tables.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Path a table was loaded from, if any.
    pub fn source(&self, id: MeasureId) -> Option<&Path> {
        self.paths.get(&id).map(PathBuf::as_path)
    }

    /// Load `<id>.calib.json` for each requested measure.
    pub fn load_dir(dir: &Path, measures: &[MeasureId]) -> Result<Self> {
        let mut set = Self::new();
        for &id in measures {
            if id.is_baseline() {
                continue;
            }
            let path = dir.join(CalibrationTable::file_name(id));
            if !path.exists() {
                return Err(Error::MissingCalibration(id.to_string()));
            }
            let table = CalibrationTable::load(&path)?;
            if table.measure != id {
                return Err(Error::Validation(format!(
                    "{} holds a table for `{}`",
                    path.display(),
                    table.measure
                )));
            }
            set.paths.insert(id, path);
            set.insert(table);
        }
        Ok(set)
    }
}

/// Distance between the representative curves of two tables for one
/// measure: the largest gap between their interpolated CDFs over both grids.
pub fn table_distance(a: &CalibrationTable, b: &CalibrationTable) -> f64 {
    a.grid
        .iter()
        .chain(&b.grid)
        .map(|g| (a.p_value(g.x) - b.p_value(g.x)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub measure: MeasureId,
    pub distance: f64,
    pub normal: CalibrationTable,
    pub uniform: CalibrationTable,
}

/// Compare normal-driven and uniform-driven representative curves for
/// every measure in `specs`, using `base` for everything except the
/// generator.
pub fn input_independence(specs: &[MeasureSpec], base: &SimConfig) -> Result<Vec<IndependenceReport>> {
    let with = |generator| SimConfig {
        generator,
        ..base.clone()
    };
    let normal = simulate_null_clouds(specs, &with(Generator::Normal))?;
    let uniform = simulate_null_clouds(specs, &with(Generator::Uniform))?;
    normal
        .iter()
        .zip(&uniform)
        .map(|(n, u)| {
            let (tn, tu) = (representative_band(n)?, representative_band(u)?);
            Ok(IndependenceReport {
                measure: n.measure,
                distance: table_distance(&tn, &tu),
                normal: tn,
                uniform: tu,
            })
        })
        .collect()
}

pub fn input_independence_check(spec: &MeasureSpec, base: &SimConfig) -> Result<IndependenceReport> {
    Ok(input_independence(std::slice::from_ref(spec), base)?.remove(0))
}
