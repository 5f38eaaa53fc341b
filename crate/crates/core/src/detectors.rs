//! Scan harness: a fixed reference window compared against a moving one,
//! the measure quorum, and the benchmark metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::conformal::{ConformalConfig, ConformalDetector, ConformalRecord};
use crate::error::{arg, Error, Result};
use crate::measures::{baseline_stat, measure_eval, BaselineKind, Ecdf1D, MeasureId, MeasureOutcome, MeasureSpec};
use crate::mmd::{mmd_l2, mmd_u2, KernelConfig};
use crate::ncd::{ncd_window_test, NcdConfig};
use crate::ordering::{ordered_ecdfs, OrderMethod};
use crate::rng::derive_seed;
use crate::series::{Series, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Same,
    Different,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Same => "same",
            Verdict::Different => "different",
        })
    }
}

/// The ten measures used by the block methods by default.
pub fn default_block_measures() -> Vec<MeasureId> {
    use MeasureId::*;
    vec![Phi, Xi, KolmogorovSmirnov, Klj, JensenShannon, ChiSquare, Hellinger, CramerVonMises, Euclid, Camberra]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuorumConfig {
    pub measures: Vec<MeasureId>,
    pub disagreement: f64,
    pub alpha: f64,
}

impl QuorumConfig {
    pub fn new(measures: Vec<MeasureId>, disagreement: f64, alpha: f64) -> Result<Self> {
        if measures.is_empty() {
            return arg("quorum needs at least one measure");
        }
        if !(disagreement > 0.0 && disagreement <= 1.0) {
            return arg(format!("disagreement {disagreement} outside (0, 1]"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return arg(format!("alpha {alpha} outside (0, 1)"));
        }
        if let Some(m) = measures.iter().find(|m| !m.is_calibratable() && !m.is_baseline()) {
            return arg(format!("measure `{m}` cannot vote: it has no null distribution"));
        }
        Ok(Self {
            measures,
            disagreement,
            alpha,
        })
    }

    /// Ten block measures, 20% disagreement, alpha 0.05.
    pub fn block_default() -> Self {
        Self::new(default_block_measures(), 0.2, 0.05).expect("valid defaults")
    }

    /// Rejections needed for a `different` verdict.
    pub fn required(&self) -> usize {
        let k = (self.disagreement * self.measures.len() as f64 - 1e-9).ceil() as usize;
        k.clamp(1, self.measures.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuorumResult {
    pub outcomes: Vec<MeasureOutcome>,
    pub rejections: usize,
    pub verdict: Verdict,
    /// The k-th largest change score, k being the required rejections.
    pub p_value: f64,
}

pub fn quorum_verdict(outcomes: &[MeasureOutcome], cfg: &QuorumConfig) -> Result<Verdict> {
    let mut rejections = 0;
    for id in &cfg.measures {
        let o = outcomes
            .iter()
            .find(|o| o.id == *id)
            .ok_or_else(|| Error::Argument(format!("no outcome for measure `{id}`")))?;
        match o.reject {
            Some(true) => rejections += 1,
            Some(false) => {}
            None => return arg(format!("outcome for `{id}` has no decision")),
        }
    }
    Ok(if rejections >= cfg.required() {
        Verdict::Different
    } else {
        Verdict::Same
    })
}

/// Evaluate every quorum measure on two ECDFs. Rank baselines run on the
/// expanded samples of each ECDF.
pub fn evaluate_quorum(fr: &Ecdf1D, fw: &Ecdf1D, cfg: &QuorumConfig, tables: &CalibrationSet) -> Result<QuorumResult> {
    let n_total = fr.n() + fw.n();
    let mut outcomes = Vec::with_capacity(cfg.measures.len());
    let mut samples: Option<(Vec<f64>, Vec<f64>)> = None;
    for &id in &cfg.measures {
        let outcome = if id.is_baseline() {
            let (r, w) = samples.get_or_insert_with(|| (fr.samples(), fw.samples()));
            let kind = if id == MeasureId::WilcoxBaseline {
                BaselineKind::Wilcox
            } else {
                BaselineKind::Ttest
            };
            let o = baseline_stat(kind, r, w)?;
            let p = o.p_value.unwrap_or(1.0);
            o.with_p_value(p, cfg.alpha)
        } else {
            let raw = measure_eval(&MeasureSpec::new(id), fr, fw, n_total)?;
            tables.require(id)?.apply(raw, cfg.alpha)?
        };
        outcomes.push(outcome);
    }
    let rejections = outcomes.iter().filter(|o| o.reject == Some(true)).count();
    let k = cfg.required();
    let mut scores: Vec<f64> = outcomes.iter().filter_map(|o| o.change_score()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    Ok(QuorumResult {
        rejections,
        verdict: quorum_verdict(&outcomes, cfg)?,
        p_value: scores[k - 1],
        outcomes,
    })
}

/// Quorum over two raw one-dimensional samples.
pub fn evaluate_quorum_samples(r: &[f64], w: &[f64], cfg: &QuorumConfig, tables: &CalibrationSet) -> Result<QuorumResult> {
    evaluate_quorum(&Ecdf1D::from_samples(r)?, &Ecdf1D::from_samples(w)?, cfg, tables)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Poset,
    Mst,
    Ncd,
    MmdU2,
    MmdL2,
    Martingale,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::Poset,
        MethodKind::Mst,
        MethodKind::Ncd,
        MethodKind::MmdU2,
        MethodKind::MmdL2,
        MethodKind::Martingale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Poset => "poset",
            MethodKind::Mst => "mst",
            MethodKind::Ncd => "ncd",
            MethodKind::MmdU2 => "mmd_u2",
            MethodKind::MmdL2 => "mmd_l2",
            MethodKind::Martingale => "martingale",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        MethodKind::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::Argument(format!("unknown method `{s}`")))
    }
}

/// A method together with its configuration.
#[derive(Debug, Clone)]
pub enum ScanMethod {
    Poset(QuorumConfig),
    Mst(QuorumConfig),
    Ncd { config: NcdConfig, alpha: f64 },
    MmdU2 { config: KernelConfig, alpha: f64 },
    MmdL2 { config: KernelConfig, alpha: f64 },
    Martingale(ConformalConfig),
}

impl ScanMethod {
    pub fn kind(&self) -> MethodKind {
        match self {
            ScanMethod::Poset(_) => MethodKind::Poset,
            ScanMethod::Mst(_) => MethodKind::Mst,
            ScanMethod::Ncd { .. } => MethodKind::Ncd,
            ScanMethod::MmdU2 { .. } => MethodKind::MmdU2,
            ScanMethod::MmdL2 { .. } => MethodKind::MmdL2,
            ScanMethod::Martingale(_) => MethodKind::Martingale,
        }
    }

    /// Measures needing calibration tables.
    pub fn calibrated_measures(&self) -> Vec<MeasureId> {
        let from = |q: &QuorumConfig| q.measures.iter().copied().filter(|m| !m.is_baseline()).collect();
        match self {
            ScanMethod::Poset(q) | ScanMethod::Mst(q) => from(q),
            ScanMethod::Martingale(c) => c.check.as_ref().map(|p| from(&p.quorum)).unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanPlan {
    pub reference: Window,
    pub step: usize,
    /// Start of the first moving window; defaults to one step past the
    /// reference start.
    pub first_start: Option<usize>,
    pub method: ScanMethod,
}

impl ScanPlan {
    pub fn new(reference: Window, step: usize, method: ScanMethod) -> Self {
        Self {
            reference,
            step,
            first_start: None,
            method,
        }
    }
}

/// One comparison of the moving window against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    /// Epoch of the first point of the moving window.
    pub window_start: u64,
    /// Index of that point in the series.
    pub position: usize,
    pub method: MethodKind,
    pub raw: f64,
    pub normalized: f64,
    /// Change score; large values mean different.
    pub p_value: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measures: Vec<MeasureOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub martingale: Option<ConformalRecord>,
}

fn even_prefix<'a>(r: &[&'a [f64]], w: &[&'a [f64]]) -> (Vec<&'a [f64]>, Vec<&'a [f64]>) {
    let m = r.len().min(w.len());
    let m = m - m % 2;
    if m != r.len() || m != w.len() {
        log::warn!("kernel test truncated windows of {} and {} points to {m}", r.len(), w.len());
    }
    (r[..m].to_vec(), w[..m].to_vec())
}

struct Comparison {
    raw: f64,
    normalized: f64,
    p_value: f64,
    verdict: Verdict,
    measures: Vec<MeasureOutcome>,
}

fn verdict_of(flag: bool) -> Verdict {
    if flag {
        Verdict::Different
    } else {
        Verdict::Same
    }
}

fn compare(r: &[&[f64]], w: &[&[f64]], method: &ScanMethod, tables: &CalibrationSet, key: u64) -> Result<Comparison> {
    let quorum = |order: OrderMethod, q: &QuorumConfig| -> Result<Comparison> {
        let (fr, fw, _) = ordered_ecdfs(r, w, order)?;
        let res = evaluate_quorum(&fr, &fw, q, tables)?;
        Ok(Comparison {
            raw: res.rejections as f64,
            normalized: res.rejections as f64 / q.measures.len() as f64,
            p_value: res.p_value,
            verdict: res.verdict,
            measures: res.outcomes,
        })
    };
    match method {
        ScanMethod::Poset(q) => quorum(OrderMethod::Poset, q),
        ScanMethod::Mst(q) => quorum(OrderMethod::Mst, q),
        ScanMethod::Ncd { config, alpha } => {
            let cfg = NcdConfig {
                seed: derive_seed(config.seed, &[key]),
                ..config.clone()
            };
            let m = r.len().min(w.len());
            let res = ncd_window_test(&r[..m], &w[..m], &cfg, *alpha)?;
            Ok(Comparison {
                raw: res.ncd,
                normalized: res.ncd,
                p_value: res.p_value,
                verdict: verdict_of(res.reject),
                measures: Vec::new(),
            })
        }
        ScanMethod::MmdU2 { config, alpha } | ScanMethod::MmdL2 { config, alpha } => {
            let cfg = KernelConfig {
                seed: derive_seed(config.seed, &[key]),
                ..config.clone()
            };
            let (a, b) = even_prefix(r, w);
            let res = if matches!(method, ScanMethod::MmdU2 { .. }) {
                mmd_u2(&a, &b, &cfg, *alpha)?
            } else {
                mmd_l2(&a, &b, &cfg, *alpha)?
            };
            let normalized = match res.variance_estimate {
                Some(v) if v > 0.0 => (a.len() as f64).sqrt() * res.value / v.sqrt(),
                _ => res.value,
            };
            Ok(Comparison {
                raw: res.value,
                normalized,
                p_value: 1.0 - res.p_value,
                verdict: verdict_of(res.reject),
                measures: Vec::new(),
            })
        }
        ScanMethod::Martingale(_) => arg("the martingale method scans point by point; use martingale_scan"),
    }
}

/// Lazy block scan; stop iterating to stop computing.
pub struct BlockScan<'a> {
    series: &'a Series,
    plan: &'a ScanPlan,
    tables: &'a CalibrationSet,
    reference: Vec<&'a [f64]>,
    next: usize,
}

impl<'a> BlockScan<'a> {
    pub fn new(series: &'a Series, plan: &'a ScanPlan, tables: &'a CalibrationSet) -> Result<Self> {
        if plan.step == 0 {
            return arg("scan step must be positive");
        }
        if plan.reference.len < 2 {
            return arg("reference window needs at least two points");
        }
        if let ScanMethod::Martingale(_) = plan.method {
            return arg("the martingale method scans point by point; use martingale_scan");
        }
        for id in plan.method.calibrated_measures() {
            tables.require(id)?;
        }
        let reference = series.window_view(plan.reference)?;
        Ok(Self {
            series,
            plan,
            tables,
            reference,
            next: plan.first_start.unwrap_or(plan.reference.start + plan.step),
        })
    }

    /// Number of positions the scan visits.
    pub fn positions(&self) -> usize {
        let len = self.plan.reference.len;
        if self.next + len > self.series.len() {
            0
        } else {
            (self.series.len() - len - self.next) / self.plan.step + 1
        }
    }
}

impl Iterator for BlockScan<'_> {
    type Item = Result<ScanRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let len = self.plan.reference.len;
        let start = self.next;
        if start + len > self.series.len() {
            return None;
        }
        self.next += self.plan.step;
        let run = || -> Result<ScanRecord> {
            let w = self.series.window_view(Window::new(start, len))?;
            let c = compare(&self.reference, &w, &self.plan.method, self.tables, start as u64)?;
            Ok(ScanRecord {
                window_start: self.series.points()[start].epoch,
                position: start,
                method: self.plan.method.kind(),
                raw: c.raw,
                normalized: c.normalized,
                p_value: c.p_value,
                verdict: c.verdict,
                measures: c.measures,
                martingale: None,
            })
        };
        Some(run())
    }
}

pub fn block_scan(series: &Series, plan: &ScanPlan, tables: &CalibrationSet) -> Result<Vec<ScanRecord>> {
    BlockScan::new(series, plan, tables)?.collect()
}

/// Lazy point-by-point conformal scan after the reference window.
pub struct MartingaleScan<'a> {
    series: &'a Series,
    detector: ConformalDetector,
    next: usize,
}

impl<'a> MartingaleScan<'a> {
    pub fn new(series: &'a Series, reference: Window, cfg: ConformalConfig) -> Result<Self> {
        let rows = series.window_view(reference)?;
        let detector = ConformalDetector::new(&rows, cfg)?;
        Ok(Self {
            series,
            detector,
            next: reference.end(),
        })
    }
}

impl Iterator for MartingaleScan<'_> {
    type Item = Result<ScanRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let point = self.series.points().get(self.next)?;
        let position = self.next;
        self.next += 1;
        Some(self.detector.push(&point.values).map(|rec| ScanRecord {
            window_start: point.epoch,
            position,
            method: MethodKind::Martingale,
            raw: rec.p,
            normalized: rec.m,
            p_value: (1.0 - 1.0 / rec.m).max(0.0),
            verdict: verdict_of(rec.lambda_reject),
            measures: Vec::new(),
            martingale: Some(rec),
        }))
    }
}

pub fn martingale_scan(series: &Series, reference: Window, cfg: ConformalConfig) -> Result<Vec<ScanRecord>> {
    MartingaleScan::new(series, reference, cfg)?.collect()
}

/// Run any plan, dispatching the martingale to its point-wise scan.
pub fn scan(series: &Series, plan: &ScanPlan, tables: &CalibrationSet) -> Result<Vec<ScanRecord>> {
    match &plan.method {
        ScanMethod::Martingale(cfg) => martingale_scan(series, plan.reference, cfg.clone()),
        _ => block_scan(series, plan, tables),
    }
}

/// Position of the first `different` record at or after `min_position`,
/// consuming the scan only as far as needed.
pub fn earliest_detection<I>(records: I, min_position: usize) -> Result<Option<usize>>
where
    I: IntoIterator<Item = Result<ScanRecord>>,
{
    for rec in records {
        let rec = rec?;
        if rec.position >= min_position && rec.verdict == Verdict::Different {
            return Ok(Some(rec.position));
        }
    }
    Ok(None)
}

/// `1 - (earliest - 2N) / (len - 2N)`, or 0 when nothing was detected.
pub fn rejection_ratio(earliest: Option<usize>, series_len: usize, n: usize) -> Result<f64> {
    if series_len <= 2 * n {
        return arg(format!("series of {series_len} points is too short for windows of {n}"));
    }
    match earliest {
        None => Ok(0.0),
        Some(e) if e < 2 * n || e > series_len => {
            arg(format!("earliest detection {e} outside [{}, {series_len}]", 2 * n))
        }
        Some(e) => Ok(1.0 - (e - 2 * n) as f64 / (series_len - 2 * n) as f64),
    }
}

/// False positives plus false negatives.
pub fn error_count(found: usize, matches: usize, golden: usize) -> usize {
    found.saturating_sub(golden) + golden.saturating_sub(matches)
}
