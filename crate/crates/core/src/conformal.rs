//! Conformal change detection: strangeness, the deterministic transducer,
//! and the power Martingale with its p-value distribution check.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::detectors::{evaluate_quorum_samples, QuorumConfig, Verdict};
use crate::error::{arg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrangenessKind {
    #[serde(rename = "nn")]
    NearestNeighbor,
    #[serde(rename = "avg")]
    AverageDistance,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Strangeness of every point against all the others.
pub fn strangeness_scores(points: &[&[f64]], kind: StrangenessKind) -> Result<Vec<f64>> {
    let n = points.len();
    if n < 2 {
        return arg("strangeness needs at least two points");
    }
    let mut out = Vec::with_capacity(n);
    let mut others = Vec::with_capacity(n - 1);
    for (k, p) in points.iter().enumerate() {
        others.clear();
        others.extend(
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, q)| dist(p, q)),
        );
        // summing in sorted order keeps the score independent of input order
        others.sort_by(f64::total_cmp);
        out.push(match kind {
            StrangenessKind::NearestNeighbor => others[0],
            StrangenessKind::AverageDistance => others.iter().sum::<f64>() / (n - 1) as f64,
        });
    }
    Ok(out)
}

/// Fraction of a window at least as strange as its newest member, counting
/// the newest member itself.
pub fn conformal_p(others: &[f64], alpha_new: f64) -> f64 {
    let ge = others.iter().filter(|&&a| a >= alpha_new).count();
    (ge + 1) as f64 / (others.len() + 1) as f64
}

/// Leave-one-out p-values of every point of a window.
pub fn window_p_values(points: &[&[f64]], kind: StrangenessKind) -> Result<Vec<f64>> {
    let alphas = strangeness_scores(points, kind)?;
    let n = alphas.len() as f64;
    Ok(alphas
        .iter()
        .map(|&a| alphas.iter().filter(|&&b| b >= a).count() as f64 / n)
        .collect())
}

/// Sliding window of the last `N - 1` points with cached distances.
#[derive(Debug, Clone)]
pub struct Transducer {
    kind: StrangenessKind,
    window: usize,
    cap: usize,
    len: usize,
    head: usize,
    points: Vec<Vec<f64>>,
    dist: Vec<f64>,
    sum: Vec<f64>,
    nn: Vec<f64>,
    since_refresh: usize,
}

impl Transducer {
    /// `window` is N, the number of points a p-value is ranked among.
    pub fn new(kind: StrangenessKind, window: usize) -> Result<Self> {
        if window < 3 {
            return arg("transducer window must hold at least 3 points");
        }
        let cap = window - 1;
        Ok(Self {
            kind,
            window,
            cap,
            len: 0,
            head: 0,
            points: vec![Vec::new(); cap],
            dist: vec![0.0; cap * cap],
            sum: vec![0.0; cap],
            nn: vec![f64::INFINITY; cap],
            since_refresh: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn is_full(&self) -> bool {
        self.len == self.cap
    }

    fn slot(&self, k: usize) -> usize {
        (self.head + k) % self.cap
    }

    /// Buffered points, oldest first.
    pub fn buffer(&self) -> Vec<&[f64]> {
        (0..self.len).map(|k| self.points[self.slot(k)].as_slice()).collect()
    }

    fn insert(&mut self, slot: usize, point: &[f64], d_new: &[f64]) {
        let cap = self.cap;
        let mut total = 0.0;
        let mut nearest = f64::INFINITY;
        // before the buffer is full, live slots precede the incoming one
        let full = self.len == cap;
        for i in (0..cap).filter(|&i| i != slot && (full || i < slot)) {
            let d = d_new[i];
            self.dist[slot * cap + i] = d;
            self.dist[i * cap + slot] = d;
            self.sum[i] += d;
            self.nn[i] = self.nn[i].min(d);
            total += d;
            nearest = nearest.min(d);
        }
        self.points[slot] = point.to_vec();
        self.sum[slot] = total;
        self.nn[slot] = nearest;
    }

    fn distances_to(&self, point: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.cap];
        for k in 0..self.len {
            let s = self.slot(k);
            d[s] = dist(&self.points[s], point);
        }
        d
    }

    /// Add a point while warming up.
    pub fn fill(&mut self, point: &[f64]) -> Result<()> {
        if self.is_full() {
            return Err(Error::State("transducer buffer is already full".into()));
        }
        if self.len > 0 && point.len() != self.points[self.head].len() {
            return arg("point dimension differs from the buffer");
        }
        let slot = self.len;
        let d_new = self.distances_to(point);
        self.insert(slot, point, &d_new);
        self.len += 1;
        Ok(())
    }

    /// p-value of `point` against the buffer; the buffer then slides.
    pub fn step(&mut self, point: &[f64]) -> Result<f64> {
        if !self.is_full() {
            return Err(Error::State(format!(
                "transducer holds {} of {} reference points",
                self.len, self.cap
            )));
        }
        if point.len() != self.points[self.head].len() {
            return arg("point dimension differs from the buffer");
        }
        let cap = self.cap;
        let d_new = self.distances_to(point);
        let others = (self.window - 1) as f64;
        let (alpha_new, alphas): (f64, Vec<f64>) = match self.kind {
            StrangenessKind::NearestNeighbor => (
                d_new.iter().copied().fold(f64::INFINITY, f64::min),
                (0..cap).map(|i| self.nn[i].min(d_new[i])).collect(),
            ),
            StrangenessKind::AverageDistance => (
                d_new.iter().sum::<f64>() / others,
                (0..cap).map(|i| (self.sum[i] + d_new[i]) / others).collect(),
            ),
        };
        let p = conformal_p(&alphas, alpha_new);

        // drop the oldest point
        let old = self.head;
        let mut stale = Vec::new();
        for i in (0..cap).filter(|&i| i != old) {
            let d = self.dist[i * cap + old];
            self.sum[i] -= d;
            if self.nn[i] == d {
                stale.push(i);
            }
        }
        for &i in &stale {
            self.nn[i] = (0..cap)
                .filter(|&j| j != i && j != old)
                .map(|j| self.dist[i * cap + j])
                .fold(f64::INFINITY, f64::min);
        }
        self.insert(old, point, &d_new);
        self.head = (self.head + 1) % cap;

        self.since_refresh += 1;
        if self.since_refresh >= cap {
            self.refresh_sums();
        }
        Ok(p)
    }

    fn refresh_sums(&mut self) {
        let cap = self.cap;
        for i in 0..cap {
            self.sum[i] = (0..cap)
                .filter(|&j| j != i)
                .map(|j| self.dist[i * cap + j])
                .sum();
        }
        self.since_refresh = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub t: f64,
    pub reset_floor: f64,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.95,
            lambda: 20.0,
            t: 3.0,
            reset_floor: 1e-6,
        }
    }
}

impl MartingaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return arg("epsilon must lie in (0, 1)");
        }
        if !(self.lambda > 0.0 && self.t > 0.0 && self.reset_floor > 0.0) {
            return arg("lambda, t and the reset floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleVerdict {
    pub m: f64,
    pub delta: f64,
    pub lambda_reject: bool,
    pub delta_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleState {
    pub m: f64,
    pub config: MartingaleConfig,
    pub history: VecDeque<f64>,
    pub history_len: usize,
    pub steps: usize,
    /// Step counts at which the value was reset to 1.
    pub resets: Vec<usize>,
}

impl MartingaleState {
    pub fn new(config: MartingaleConfig, history_len: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            m: 1.0,
            config,
            history: VecDeque::with_capacity(history_len),
            history_len,
            steps: 0,
            resets: Vec::new(),
        })
    }

    pub fn step(&mut self, p: f64) -> Result<MartingaleVerdict> {
        if !(p > 0.0 && p <= 1.0) {
            return arg(format!("p-value {p} outside (0, 1]"));
        }
        let eps = self.config.epsilon;
        let next = eps * p.powf(eps - 1.0) * self.m;
        let delta = next - self.m;
        self.m = next;
        self.steps += 1;
        if self.history_len > 0 {
            if self.history.len() == self.history_len {
                self.history.pop_front();
            }
            self.history.push_back(p);
        }
        Ok(MartingaleVerdict {
            m: next,
            delta,
            lambda_reject: next >= self.config.lambda,
            delta_reject: delta.abs() >= self.config.t,
        })
    }

    /// Restart from 1 when the p-value check sees no change and the value
    /// has drifted below the floor or above `lambda`. Returns whether a
    /// reset happened.
    pub fn maybe_reset(&mut self, change: bool) -> bool {
        if !change && (self.m < self.config.reset_floor || self.m > self.config.lambda) {
            self.m = 1.0;
            self.resets.push(self.steps);
            true
        } else {
            false
        }
    }
}

/// Minimum length of each p-value sequence given to the check.
pub const MIN_CHECK_LEN: usize = 30;

/// Compare the distribution of recent p-values with a no-change reference
/// using the measure quorum.
pub fn pi_distribution_check(
    reference_p: &[f64],
    window_p: &[f64],
    quorum: &QuorumConfig,
    tables: &CalibrationSet,
) -> Result<Verdict> {
    if reference_p.len() < MIN_CHECK_LEN || window_p.len() < MIN_CHECK_LEN {
        return arg(format!(
            "p-value check needs at least {MIN_CHECK_LEN} values on each side"
        ));
    }
    Ok(evaluate_quorum_samples(reference_p, window_p, quorum, tables)?.verdict)
}

/// Periodic p-value check and reset.
#[derive(Debug, Clone)]
pub struct PCheck {
    pub every: usize,
    pub quorum: QuorumConfig,
    pub tables: CalibrationSet,
}

#[derive(Debug, Clone)]
pub struct ConformalConfig {
    pub window: usize,
    pub kind: StrangenessKind,
    pub martingale: MartingaleConfig,
    pub check: Option<PCheck>,
}

impl ConformalConfig {
    pub fn new(window: usize, kind: StrangenessKind) -> Self {
        Self {
            window,
            kind,
            martingale: MartingaleConfig::default(),
            check: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalRecord {
    pub p: f64,
    pub m: f64,
    pub delta: f64,
    pub lambda_reject: bool,
    pub delta_reject: bool,
    pub reset: bool,
}

/// Transducer plus Martingale over a stream.
#[derive(Debug, Clone)]
pub struct ConformalDetector {
    transducer: Transducer,
    state: MartingaleState,
    reference_p: Vec<f64>,
    check: Option<PCheck>,
}

impl ConformalDetector {
    /// `reference` must hold at least `window` points. Its leave-one-out
    /// p-values serve as the no-change sequence, and its last `window - 1`
    /// points seed the transducer.
    pub fn new(reference: &[&[f64]], cfg: ConformalConfig) -> Result<Self> {
        if reference.len() < cfg.window {
            return arg(format!(
                "reference of {} points is shorter than the window {}",
                reference.len(),
                cfg.window
            ));
        }
        let mut transducer = Transducer::new(cfg.kind, cfg.window)?;
        for p in &reference[reference.len() - (cfg.window - 1)..] {
            transducer.fill(p)?;
        }
        let reference_p = window_p_values(&reference[..cfg.window], cfg.kind)?;
        if let Some(check) = &cfg.check {
            if check.every == 0 {
                return arg("check interval must be positive");
            }
        }
        Ok(Self {
            transducer,
            state: MartingaleState::new(cfg.martingale, cfg.window)?,
            reference_p,
            check: cfg.check,
        })
    }

    pub fn state(&self) -> &MartingaleState {
        &self.state
    }

    pub fn push(&mut self, point: &[f64]) -> Result<ConformalRecord> {
        let p = self.transducer.step(point)?;
        let v = self.state.step(p)?;
        let mut reset = false;
        if let Some(check) = &self.check {
            if self.state.steps % check.every == 0 && self.state.history.len() >= MIN_CHECK_LEN {
                let recent: Vec<f64> = self.state.history.iter().copied().collect();
                let verdict = pi_distribution_check(&self.reference_p, &recent, &check.quorum, &check.tables)?;
                reset = self.state.maybe_reset(verdict == Verdict::Different);
            }
        }
        Ok(ConformalRecord {
            p,
            m: v.m,
            delta: v.delta,
            lambda_reject: v.lambda_reject,
            delta_reject: v.delta_reject,
            reset,
        })
    }
}
