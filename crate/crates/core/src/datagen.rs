//! Synthetic series for the benchmarks and the classified-data pathway.
//!
//! Every generator draws dimension `j` from its own stream, so the first
//! `d` columns of a wide series equal a narrow series built from the same
//! seed. Normal parameters are (mean, standard deviation).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::rng;
use crate::series::Series;

pub const DEFAULT_BLOCKS: usize = 21;
pub const DEFAULT_BLOCK_LEN: usize = 250;
/// Half width of the uniform law in the mixture experiment.
pub const MIXTURE_HALF_WIDTH: f64 = 2.4;

const MIX_KEY: u64 = 0x4d49_58;
const UNI_KEY: u64 = 0x554e_49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Average,
    Variance,
    Mixture,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::Average => "average",
            SyntheticKind::Variance => "variance",
            SyntheticKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "average" | "mean" => Ok(SyntheticKind::Average),
            "variance" => Ok(SyntheticKind::Variance),
            "mixture" => Ok(SyntheticKind::Mixture),
            _ => Err(Error::Argument(format!("unknown synthetic kind `{s}`"))),
        }
    }
}

/// Block layout of a synthetic series. `schedule[k]` is the mean, the
/// standard deviation or the uniform fraction of block `k`, by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlan {
    pub kind: SyntheticKind,
    pub blocks: usize,
    pub block_len: usize,
    pub d: usize,
    pub schedule: Vec<f64>,
    pub seed: u64,
}

/// `count` values from `lo` to `hi` evenly spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

impl SyntheticPlan {
    /// Default layout: 21 blocks of 250 points.
    pub fn new(kind: SyntheticKind, d: usize, seed: u64) -> Self {
        Self::with_layout(kind, DEFAULT_BLOCKS, DEFAULT_BLOCK_LEN, d, seed)
    }

    pub fn with_layout(kind: SyntheticKind, blocks: usize, block_len: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            blocks,
            block_len,
            d,
            schedule: Self::default_schedule(kind, blocks),
            seed,
        }
    }

    /// Two baseline blocks followed by the change ramp.
    pub fn default_schedule(kind: SyntheticKind, blocks: usize) -> Vec<f64> {
        let ramp = blocks.saturating_sub(2);
        let (base, tail) = match kind {
            SyntheticKind::Average => (0.0, log_spaced(0.05, 50.0, ramp)),
            SyntheticKind::Variance => (1.0, log_spaced(10f64.powf(0.01), 10.0, ramp)),
            SyntheticKind::Mixture => (0.0, (1..=ramp).map(|i| i as f64 / ramp as f64).collect()),
        };
        let mut out = vec![base; blocks.min(2)];
        out.extend(tail);
        out
    }

    pub fn len(&self) -> usize {
        self.blocks * self.block_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 3 {
            return arg(format!("at least 3 blocks are required, got {}", self.blocks));
        }
        if self.block_len < 2 || self.d == 0 {
            return arg("block length must be at least 2 and dimension at least 1");
        }
        if self.schedule.len() != self.blocks {
            return arg(format!(
                "schedule has {} entries for {} blocks",
                self.schedule.len(),
                self.blocks
            ));
        }
        if self.schedule[0] != self.schedule[1] {
            return arg("the first two blocks must share parameters");
        }
        if self.schedule.iter().any(|v| !v.is_finite()) {
            return arg("schedule values must be finite");
        }
        match self.kind {
            SyntheticKind::Variance if self.schedule.iter().any(|&s| s <= 0.0) => {
                arg("standard deviations must be positive")
            }
            SyntheticKind::Mixture if self.schedule.iter().any(|&f| !(0.0..=1.0).contains(&f)) => {
                arg("uniform fractions must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }
}

/// One labelled stretch of a generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start: usize,
    pub len: usize,
    pub params: BTreeMap<String, f64>,
}

/// Ground truth written next to a generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub kind: String,
    pub seed: u64,
    pub dim: usize,
    pub len: usize,
    pub segments: Vec<Segment>,
    /// Conventions needed to read the parameters.
    pub notes: Vec<String>,
}

impl Annotations {
    /// Segment boundaries, excluding 0 and the series end.
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    /// True when the segments tile `[0, len)` in order.
    pub fn is_partition(&self) -> bool {
        let mut at = 0;
        for s in &self.segments {
            if s.start != at || s.len == 0 {
                return false;
            }
            at += s.len;
        }
        at == self.len
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn columns_to_series(cols: Vec<Vec<f64>>) -> Result<Series> {
    let n = cols.first().map_or(0, Vec::len);
    let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Series::from_rows(rows)
}

fn normal<R: Rng>(g: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(g);
    mean + sd * z
}

/// Generate the series described by `plan`.
pub fn gen_synthetic(plan: &SyntheticPlan) -> Result<(Series, Annotations)> {
    plan.validate()?;
    let n = plan.block_len;
    // which points of each block come from the uniform law; shared by all
    // dimensions so a point is drawn from one law as a whole vector
    let uniform_mask: Vec<Vec<bool>> = match plan.kind {
        SyntheticKind::Mixture => plan
            .schedule
            .iter()
            .enumerate()
            .map(|(k, &frac)| {
                let count = ((frac * n as f64).round() as usize).min(n);
                let mut mask = vec![false; n];
                let mut g = rng::stream(plan.seed, &[MIX_KEY, k as u64]);
                for i in index::sample(&mut g, n, count) {
                    mask[i] = true;
                }
                mask
            })
            .collect(),
        _ => Vec::new(),
    };
    let mut cols = Vec::with_capacity(plan.d);
    for j in 0..plan.d {
        let mut g = rng::stream(plan.seed, &[j as u64]);
        let mut col = Vec::with_capacity(plan.len());
        for (k, &p) in plan.schedule.iter().enumerate() {
            for i in 0..n {
                col.push(match plan.kind {
                    SyntheticKind::Average => normal(&mut g, p, 1.0),
                    SyntheticKind::Variance => normal(&mut g, 0.0, p),
                    SyntheticKind::Mixture if uniform_mask[k][i] => {
                        g.gen_range(-MIXTURE_HALF_WIDTH..MIXTURE_HALF_WIDTH)
                    }
                    SyntheticKind::Mixture => normal(&mut g, 0.0, 1.0),
                });
            }
        }
        cols.push(col);
    }
    let segments = plan
        .schedule
        .iter()
        .enumerate()
        .map(|(k, &p)| Segment {
            label: format!("block{}", k + 1),
            start: k * n,
            len: n,
            params: match plan.kind {
                SyntheticKind::Average => params(&[("mean", p), ("sd", 1.0)]),
                SyntheticKind::Variance => params(&[("mean", 0.0), ("sd", p)]),
                SyntheticKind::Mixture => params(&[("uniform_fraction", p)]),
            },
        })
        .collect();
    let mut notes = vec!["normal laws are parameterized by (mean, standard deviation)".to_string()];
    match plan.kind {
        SyntheticKind::Variance => notes.push("the variance ramp lists standard deviations".into()),
        SyntheticKind::Mixture => notes.push(format!(
            "uniform points follow U(-{MIXTURE_HALF_WIDTH}, {MIXTURE_HALF_WIDTH}) at seeded random positions"
        )),
        SyntheticKind::Average => {}
    }
    let annotations = Annotations {
        kind: plan.kind.as_str().into(),
        seed: plan.seed,
        dim: plan.d,
        len: plan.len(),
        segments,
        notes,
    };
    Ok((columns_to_series(cols)?, annotations))
}

fn require_kind(plan: &SyntheticPlan, kind: SyntheticKind) -> Result<()> {
    if plan.kind != kind {
        return arg(format!("plan kind is {}, expected {kind}", plan.kind));
    }
    Ok(())
}

pub fn gen_average_series(plan: &SyntheticPlan) -> Result<Series> {
    require_kind(plan, SyntheticKind::Average)?;
    Ok(gen_synthetic(plan)?.0)
}

pub fn gen_variance_series(plan: &SyntheticPlan) -> Result<Series> {
    require_kind(plan, SyntheticKind::Variance)?;
    Ok(gen_synthetic(plan)?.0)
}

pub fn gen_mixture_series(plan: &SyntheticPlan) -> Result<Series> {
    require_kind(plan, SyntheticKind::Mixture)?;
    Ok(gen_synthetic(plan)?.0)
}

/// Rows grouped into classes and laid out as a series.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedSeries {
    pub series: Series,
    /// Start index of every class after the first.
    pub boundaries: Vec<usize>,
    /// Class keys with their sizes, in series order.
    pub classes: Vec<(String, usize)>,
}

/// Group `rows` by the values in `key_columns`, shuffle each group, and
/// concatenate groups from largest to smallest. The remaining columns form
/// the vectors. Equal sizes keep first-appearance order.
pub fn classified_to_series(rows: &[Vec<f64>], key_columns: &[usize], seed: u64) -> Result<ClassifiedSeries> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return arg("rows differ in length");
    }
    if key_columns.is_empty() || key_columns.iter().any(|&c| c >= width) {
        return arg(format!("key columns {key_columns:?} are invalid for rows of width {width}"));
    }
    if key_columns.len() >= width {
        return arg("no value columns remain after removing the key");
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for r in rows {
        let key = key_columns
            .iter()
            .map(|&c| r[c].to_string())
            .collect::<Vec<_>>()
            .join("|");
        let values = (0..width).filter(|c| !key_columns.contains(c)).map(|c| r[c]).collect();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(values);
    }
    if order.len() < 2 {
        return arg("at least two classes are required");
    }
    // stable sort keeps first appearance among equal sizes
    order.sort_by_key(|k| std::cmp::Reverse(groups[k].len()));
    let mut out = Vec::with_capacity(rows.len());
    let mut boundaries = Vec::new();
    let mut classes = Vec::new();
    for (i, key) in order.into_iter().enumerate() {
        let mut group = groups.remove(&key).unwrap_or_default();
        group.shuffle(&mut rng::stream(seed, &[i as u64]));
        if i > 0 {
            boundaries.push(out.len());
        }
        classes.push((key, group.len()));
        out.extend(group);
    }
    Ok(ClassifiedSeries {
        series: Series::from_rows(out)?,
        boundaries,
        classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLaw {
    Normal,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Average,
    Variance,
    Both,
}

impl FromStr for ChangeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "average" | "mean" => Ok(ChangeKind::Average),
            "variance" => Ok(ChangeKind::Variance),
            "both" => Ok(ChangeKind::Both),
            _ => Err(Error::Argument(format!("unknown change kind `{s}`"))),
        }
    }
}

impl FromStr for BaseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(BaseLaw::Normal),
            "uniform" => Ok(BaseLaw::Uniform),
            _ => Err(Error::Argument(format!("unknown base law `{s}`"))),
        }
    }
}

/// One series of the single-dimension benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniBenchPlan {
    /// Number of windows, 2 to 20.
    pub windows: usize,
    /// Window length, a multiple of 100 up to 1000.
    pub window_len: usize,
    /// 1-based index of the window drawn like the reference, 2 to `windows`.
    pub embed_position: usize,
    pub base: BaseLaw,
    pub change: ChangeKind,
    pub seed: u64,
}

impl UniBenchPlan {
    /// Draw the layout at random, as the benchmark does for every series.
    pub fn random(base: BaseLaw, change: ChangeKind, seed: u64) -> Self {
        let mut g = rng::stream(seed, &[UNI_KEY]);
        let windows = g.gen_range(2..=20);
        Self {
            windows,
            window_len: 100 * g.gen_range(1..=10),
            embed_position: g.gen_range(2..=windows),
            base,
            change,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=20).contains(&self.windows) {
            return arg(format!("window count {} outside [2, 20]", self.windows));
        }
        if self.window_len % 100 != 0 || !(100..=1000).contains(&self.window_len) {
            return arg(format!("window length {} is not one of 100, 200, ..., 1000", self.window_len));
        }
        if !(2..=self.windows).contains(&self.embed_position) {
            return arg(format!(
                "embed position {} outside [2, {}]",
                self.embed_position, self.windows
            ));
        }
        Ok(())
    }
}

fn draw<R: Rng>(g: &mut R, law: BaseLaw, mean: f64, spread: f64) -> f64 {
    match law {
        BaseLaw::Normal => normal(g, mean, spread),
        BaseLaw::Uniform if spread > 0.0 => g.gen_range(mean - spread..mean + spread),
        BaseLaw::Uniform => mean,
    }
}

/// Generate a benchmark series. The reference law has mean `m0 ~ N(0, 10)`
/// and spread `v0 = |N(0, 10)|`; other windows move away from it by
/// `m0 / i` or `v0 / i` with a random sign, or draw fresh parameters when
/// both change.
pub fn gen_unibench(plan: &UniBenchPlan) -> Result<(Series, Annotations)> {
    plan.validate()?;
    let mut g = rng::stream(plan.seed, &[UNI_KEY, 1]);
    let m0 = normal(&mut g, 0.0, 10.0);
    let v0 = normal(&mut g, 0.0, 10.0).abs();
    let mut values = Vec::with_capacity(plan.windows * plan.window_len);
    let mut segments = Vec::with_capacity(plan.windows);
    for i in 1..=plan.windows {
        let same = i == 1 || i == plan.embed_position;
        let (m, v) = if same {
            (m0, v0)
        } else {
            let r = if g.gen::<bool>() { 1.0 } else { -1.0 };
            match plan.change {
                ChangeKind::Average => (m0 + r * m0 / i as f64, v0),
                ChangeKind::Variance => (m0, v0 + r * v0 / i as f64),
                ChangeKind::Both => (normal(&mut g, 0.0, 10.0), normal(&mut g, 0.0, 10.0).abs()),
            }
        };
        let mut w = rng::stream(plan.seed, &[UNI_KEY, 2, i as u64]);
        values.extend((0..plan.window_len).map(|_| draw(&mut w, plan.base, m, v)));
        let label = match i {
            1 => "R".to_string(),
            _ if i == plan.embed_position => "E".to_string(),
            _ => format!("W{i}"),
        };
        segments.push(Segment {
            label,
            start: (i - 1) * plan.window_len,
            len: plan.window_len,
            params: params(&[("mean", m), ("spread", v)]),
        });
    }
    let law = match plan.base {
        BaseLaw::Normal => "normal laws use spread as the standard deviation",
        BaseLaw::Uniform => "uniform laws cover [mean - spread, mean + spread]",
    };
    let annotations = Annotations {
        kind: "unibench".into(),
        seed: plan.seed,
        dim: 1,
        len: values.len(),
        segments,
        notes: vec![law.into()],
    };
    Ok((Series::from_rows(values.into_iter().map(|v| vec![v]).collect())?, annotations))
}
