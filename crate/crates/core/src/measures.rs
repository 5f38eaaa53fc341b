//! Distance measures between one-dimensional empirical CDFs.
//!
//! Every measure is an instance of one template: compare the two CDFs
//! pointwise over the pooled support with a component function, aggregate
//! the components with a vector norm, rescale the norm, and finally multiply
//! by a window-size normalizer. `MeasureSpec` holds those four pieces.
//!
//! The "zero norm" used here is the plain signed sum of the components,
//! which lets the information-theoretic measures share the template.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{arg, Error, Result};

/// Empirical CDF over a strictly increasing support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf1D {
    support: Vec<f64>,
    cum: Vec<f64>,
    n: usize,
}

impl Ecdf1D {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return arg("cannot build an ECDF from zero samples");
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return arg("ECDF samples must be finite");
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self::from_sorted(&sorted))
    }

    /// `sorted` must be finite and ascending.
    pub(crate) fn from_sorted(sorted: &[f64]) -> Self {
        let n = sorted.len();
        let mut support = Vec::with_capacity(n);
        let mut cum = Vec::with_capacity(n);
        for (i, &v) in sorted.iter().enumerate() {
            if i + 1 < n && sorted[i + 1] == v {
                continue;
            }
            support.push(v);
            cum.push((i + 1) as f64 / n as f64);
        }
        Self { support, cum, n }
    }

    /// Assemble an ECDF from explicit parts, checking the invariants.
    pub fn from_parts(support: Vec<f64>, cum: Vec<f64>, n: usize) -> Result<Self> {
        if support.is_empty() || support.len() != cum.len() {
            return arg("support and cumulative values must be non-empty and equally long");
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return arg("ECDF support must be strictly increasing");
        }
        if cum.windows(2).any(|w| w[0] > w[1]) || cum.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return arg("ECDF values must be non-decreasing within [0, 1]");
        }
        if *cum.last().unwrap() != 1.0 {
            return arg("ECDF must end at 1");
        }
        Ok(Self { support, cum, n })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// Number of underlying samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Value at the largest support point `<= x`, or 0 below the support.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// Expand back into the sorted sample multiset.
    pub fn samples(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        let mut prev = 0usize;
        for (s, c) in self.support.iter().zip(&self.cum) {
            let upto = (c * self.n as f64).round() as usize;
            out.extend(std::iter::repeat(*s).take(upto - prev));
            prev = upto;
        }
        out
    }
}

/// Evaluate both CDFs over the merged support. Returns `(x, y)` with
/// `x[k] = F_R(s_k)` and `y[k] = F_W(s_k)`.
pub fn pooled_eval(fr: &Ecdf1D, fw: &Ecdf1D) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = (&fr.support, &fw.support);
    let cap = a.len() + b.len();
    let mut x = Vec::with_capacity(cap);
    let mut y = Vec::with_capacity(cap);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut cx, mut cy) = (0.0, 0.0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        if a.get(i) == Some(&next) {
            cx = fr.cum[i];
            i += 1;
        }
        if b.get(j) == Some(&next) {
            cy = fw.cum[j];
            j += 1;
        }
        x.push(cx);
        y.push(cy);
    }
    (x, y)
}

/// Identifier of a measure, with its stable lowercase name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureId {
    Bhattacharyya,
    Camberra,
    #[serde(rename = "chi2")]
    ChiSquare,
    #[serde(rename = "cvm")]
    CramerVonMises,
    Euclid,
    Hellinger,
    #[serde(rename = "jink")]
    JinK,
    #[serde(rename = "jinl")]
    JinL,
    #[serde(rename = "js")]
    JensenShannon,
    #[serde(rename = "ks")]
    KolmogorovSmirnov,
    Kli,
    Klj,
    #[serde(rename = "k_r")]
    Kr,
    #[serde(rename = "k_s")]
    Ks,
    #[serde(rename = "k_s2")]
    Ks2,
    Minkowsky,
    Phi,
    Variational,
    Xi,
    #[serde(rename = "wilcox")]
    WilcoxBaseline,
    #[serde(rename = "ttest")]
    TTestBaseline,
}

impl MeasureId {
    pub const ALL: [MeasureId; 21] = [
        MeasureId::Bhattacharyya,
        MeasureId::Camberra,
        MeasureId::ChiSquare,
        MeasureId::CramerVonMises,
        MeasureId::Euclid,
        MeasureId::Hellinger,
        MeasureId::JinK,
        MeasureId::JinL,
        MeasureId::JensenShannon,
        MeasureId::KolmogorovSmirnov,
        MeasureId::Kli,
        MeasureId::Klj,
        MeasureId::Kr,
        MeasureId::Ks,
        MeasureId::Ks2,
        MeasureId::Minkowsky,
        MeasureId::Phi,
        MeasureId::Variational,
        MeasureId::Xi,
        MeasureId::WilcoxBaseline,
        MeasureId::TTestBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureId::Bhattacharyya => "bhattacharyya",
            MeasureId::Camberra => "camberra",
            MeasureId::ChiSquare => "chi2",
            MeasureId::CramerVonMises => "cvm",
            MeasureId::Euclid => "euclid",
            MeasureId::Hellinger => "hellinger",
            MeasureId::JinK => "jink",
            MeasureId::JinL => "jinl",
            MeasureId::JensenShannon => "js",
            MeasureId::KolmogorovSmirnov => "ks",
            MeasureId::Kli => "kli",
            MeasureId::Klj => "klj",
            MeasureId::Kr => "k_r",
            MeasureId::Ks => "k_s",
            MeasureId::Ks2 => "k_s2",
            MeasureId::Minkowsky => "minkowsky",
            MeasureId::Phi => "phi",
            MeasureId::Variational => "variational",
            MeasureId::Xi => "xi",
            MeasureId::WilcoxBaseline => "wilcox",
            MeasureId::TTestBaseline => "ttest",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, MeasureId::WilcoxBaseline | MeasureId::TTestBaseline)
    }

    /// Whether a simulated null distribution exists for the normalized value.
    pub fn is_calibratable(self) -> bool {
        !matches!(
            self,
            MeasureId::Kli
                | MeasureId::Bhattacharyya
                | MeasureId::Kr
                | MeasureId::Ks
                | MeasureId::Ks2
                | MeasureId::JinK
                | MeasureId::WilcoxBaseline
                | MeasureId::TTestBaseline
        )
    }

    /// All measures with a simulated null distribution.
    pub fn calibratable() -> Vec<MeasureId> {
        Self::ALL.into_iter().filter(|m| m.is_calibratable()).collect()
    }
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        MeasureId::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::Argument(format!("unknown measure `{s}`")))
    }
}

/// Parse a comma-separated list of measure ids.
pub fn parse_measure_list(s: &str) -> Result<Vec<MeasureId>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Aggregation norm. `Sum` is the signed component sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Norm {
    Sum,
    P(f64),
    Max,
}

/// Window-size normalizer `phi(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalizer {
    One,
    Sqrt,
    InvSqrt,
    Log2,
    SqrtOverLog2,
    /// No normalizer exists; the normalized value equals the raw one.
    Unavailable,
}

impl Normalizer {
    pub fn factor(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Normalizer::One | Normalizer::Unavailable => 1.0,
            Normalizer::Sqrt => n.sqrt(),
            Normalizer::InvSqrt => 1.0 / n.sqrt(),
            Normalizer::Log2 => n.log2(),
            Normalizer::SqrtOverLog2 => n.sqrt() / n.log2(),
        }
    }
}

/// Rescaling applied to the aggregated norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scale {
    Identity,
    Half,
    Square,
    /// `log2(v) / (r - 1)`
    LogOver(f64),
    /// `(v - 1) / den`
    ShiftOver(f64),
}

impl Scale {
    fn apply(self, v: f64) -> Option<f64> {
        match self {
            Scale::Identity => Some(v),
            Scale::Half => Some(0.5 * v),
            Scale::Square => Some(v * v),
            Scale::LogOver(den) => (v > 0.0).then(|| v.log2() / den),
            Scale::ShiftOver(den) => Some((v - 1.0) / den),
        }
    }
}

/// Pointwise component function. `None` marks an undefined term, which
/// contributes nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Comparator {
    Diff,
    AbsDiff,
    SqrtProduct,
    /// `|x - y| / (x + y)`
    Relative,
    /// `(x - y)^2 / x`
    ChiSquare,
    /// `(sqrt x - sqrt y)^2`
    SqrtDiffSquared,
    /// `x log2(2x / (x + y))`
    JinHalf,
    /// `x log2(2x/(x+y)) + y log2(2y/(x+y))`
    JinSym,
    /// `x log2(x / y)`
    KlTerm,
    /// `y log2(y / x)`
    KlTermReversed,
    /// `(x - y) log2(x / y)`
    KlSym,
    /// `x^a y^(1-a)`
    Chernoff(f64),
    /// `|x - y| / sqrt(min(m, 1 - m))` with `m = (x + y) / 2`
    PhiTerm,
    /// `|x - y| / sqrt(m (1 - m))`
    XiTerm,
}

fn xlog2_ratio(x: f64, num: f64, den: f64) -> Option<f64> {
    // x * log2(num / den), with 0 * log(0/0) = 0
    if x == 0.0 {
        return Some(0.0);
    }
    if num <= 0.0 || den <= 0.0 {
        return None;
    }
    Some(x * (num.log2() - den.log2()))
}

impl Comparator {
    fn term(self, x: f64, y: f64) -> Option<f64> {
        match self {
            Comparator::Diff => Some(x - y),
            Comparator::AbsDiff => Some((x - y).abs()),
            Comparator::SqrtProduct => Some((x * y).sqrt()),
            Comparator::Relative => {
                let s = x + y;
                (s != 0.0).then(|| (x - y).abs() / s)
            }
            Comparator::ChiSquare => (x != 0.0).then(|| (x - y) * (x - y) / x),
            Comparator::SqrtDiffSquared => {
                let d = x.sqrt() - y.sqrt();
                Some(d * d)
            }
            Comparator::JinHalf => xlog2_ratio(x, 2.0 * x, x + y),
            Comparator::JinSym => {
                let s = x + y;
                Some(xlog2_ratio(x, 2.0 * x, s)? + xlog2_ratio(y, 2.0 * y, s)?)
            }
            Comparator::KlTerm => {
                if x == 0.0 || y == 0.0 {
                    None
                } else {
                    Some(x * (x.log2() - y.log2()))
                }
            }
            Comparator::KlTermReversed => Comparator::KlTerm.term(y, x),
            Comparator::KlSym => {
                if x == 0.0 || y == 0.0 {
                    None
                } else {
                    Some((x - y) * (x.log2() - y.log2()))
                }
            }
            Comparator::Chernoff(a) => {
                let e = 1.0 - a;
                if (y == 0.0 && e < 0.0) || (x == 0.0 && a < 0.0) {
                    None
                } else {
                    Some(x.powf(a) * y.powf(e))
                }
            }
            Comparator::PhiTerm => {
                let m = 0.5 * (x + y);
                let den = m.min(1.0 - m);
                (den > 0.0).then(|| (x - y).abs() / den.sqrt())
            }
            Comparator::XiTerm => {
                let m = 0.5 * (x + y);
                let den = m * (1.0 - m);
                (den > 0.0).then(|| (x - y).abs() / den.sqrt())
            }
        }
    }
}

/// The four components of a measure plus its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub id: MeasureId,
    pub norm: Norm,
    pub phi: Normalizer,
    pub gamma: Scale,
    pub psi: Comparator,
    /// `r` for Minkowsky and K_r, `s` for K_s and K_s^2.
    pub param: Option<f64>,
    pub symmetric: bool,
    pub calibratable: bool,
}

/// Default Minkowsky order.
pub const MINKOWSKY_ORDER: f64 = 3.0;
/// Default order of the generalized Kullback-Leibler family.
pub const GENERALIZED_ORDER: f64 = 2.0;

impl MeasureSpec {
    /// Spec with the default parameter for parametrized measures.
    pub fn new(id: MeasureId) -> Self {
        let param = match id {
            MeasureId::Minkowsky => Some(MINKOWSKY_ORDER),
            MeasureId::Kr | MeasureId::Ks | MeasureId::Ks2 => Some(GENERALIZED_ORDER),
            _ => None,
        };
        Self::build(id, param).expect("default parameters are valid")
    }

    /// Spec with an explicit `r`/`s` parameter.
    pub fn with_param(id: MeasureId, param: f64) -> Result<Self> {
        match id {
            MeasureId::Minkowsky | MeasureId::Kr | MeasureId::Ks | MeasureId::Ks2 => {
                Self::build(id, Some(param))
            }
            _ => arg(format!("measure `{id}` takes no parameter")),
        }
    }

    fn build(id: MeasureId, param: Option<f64>) -> Result<Self> {
        use Comparator as C;
        use Normalizer as F;
        use Scale as G;
        let kli = (Norm::Sum, F::InvSqrt, G::Identity, C::KlTerm);
        let (norm, phi, gamma, psi) = match id {
            MeasureId::Bhattacharyya => (Norm::Sum, F::Unavailable, G::Identity, C::SqrtProduct),
            MeasureId::Camberra => (Norm::Sum, F::InvSqrt, G::Identity, C::Relative),
            MeasureId::ChiSquare => (Norm::Sum, F::One, G::Identity, C::ChiSquare),
            MeasureId::CramerVonMises => (Norm::P(2.0), F::One, G::Square, C::Diff),
            MeasureId::Euclid => (Norm::P(2.0), F::One, G::Identity, C::Diff),
            MeasureId::Hellinger => (Norm::Sum, F::One, G::Half, C::SqrtDiffSquared),
            MeasureId::JinK => (Norm::Sum, F::InvSqrt, G::Identity, C::JinHalf),
            MeasureId::JinL => (Norm::Sum, F::One, G::Identity, C::JinSym),
            MeasureId::JensenShannon => (Norm::Sum, F::One, G::Half, C::JinSym),
            MeasureId::KolmogorovSmirnov => (Norm::Max, F::Sqrt, G::Identity, C::Diff),
            MeasureId::Kli => kli,
            MeasureId::Klj => (Norm::Sum, F::One, G::Identity, C::KlSym),
            MeasureId::Kr | MeasureId::Ks | MeasureId::Ks2 => {
                let a = param.unwrap_or(GENERALIZED_ORDER);
                if !(a.is_finite() && a >= 0.0) || (a == 0.0 && id != MeasureId::Ks2) {
                    return arg(format!("order for `{id}` must be positive, got {a}"));
                }
                if a == 1.0 {
                    let (n, _, g, c) = kli;
                    (n, F::Unavailable, g, c)
                } else if a == 0.0 {
                    (Norm::Sum, F::Unavailable, G::Identity, C::KlTermReversed)
                } else {
                    let gamma = match id {
                        MeasureId::Kr => G::LogOver(a - 1.0),
                        MeasureId::Ks => G::ShiftOver(a - 1.0),
                        _ => G::ShiftOver(a * (a - 1.0)),
                    };
                    (Norm::Sum, F::Unavailable, gamma, C::Chernoff(a))
                }
            }
            MeasureId::Minkowsky => {
                let r = param.unwrap_or(MINKOWSKY_ORDER);
                if !(r.is_finite() && r >= 1.0) {
                    return arg(format!("Minkowsky order must be >= 1, got {r}"));
                }
                (Norm::P(r), F::Log2, G::Identity, C::Diff)
            }
            MeasureId::Phi => (Norm::Max, F::SqrtOverLog2, G::Identity, C::PhiTerm),
            MeasureId::Variational => (Norm::P(1.0), F::InvSqrt, G::Identity, C::AbsDiff),
            MeasureId::Xi => (Norm::Max, F::SqrtOverLog2, G::Identity, C::XiTerm),
            MeasureId::WilcoxBaseline | MeasureId::TTestBaseline => {
                return arg(format!("`{id}` is a rank baseline, not a CDF measure"))
            }
        };
        let symmetric = !matches!(
            id,
            MeasureId::Kli
                | MeasureId::JinK
                | MeasureId::ChiSquare
                | MeasureId::Kr
                | MeasureId::Ks
                | MeasureId::Ks2
        );
        Ok(Self {
            id,
            norm,
            phi,
            gamma,
            psi,
            param,
            symmetric,
            calibratable: id.is_calibratable(),
        })
    }

    /// `(raw, normalized)` from already pooled CDF vectors.
    pub fn evaluate_pooled(&self, x: &[f64], y: &[f64], n_total: usize) -> Result<(f64, f64)> {
        debug_assert_eq!(x.len(), y.len());
        let undefined = |message: &str| Error::Evaluation {
            measure: self.id.to_string(),
            message: message.to_string(),
        };
        let terms = x.iter().zip(y).filter_map(|(&a, &b)| self.psi.term(a, b));
        let mut used = 0usize;
        let agg = match self.norm {
            Norm::Sum => terms.inspect(|_| used += 1).sum::<f64>(),
            Norm::Max => terms
                .inspect(|_| used += 1)
                .fold(0.0_f64, |m, t| m.max(t.abs())),
            Norm::P(p) if p == 1.0 => terms.inspect(|_| used += 1).map(f64::abs).sum(),
            Norm::P(p) if p == 2.0 => terms
                .inspect(|_| used += 1)
                .map(|t| t * t)
                .sum::<f64>()
                .sqrt(),
            Norm::P(p) => terms
                .inspect(|_| used += 1)
                .map(|t| t.abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p),
        };
        if used == 0 {
            return Err(undefined("every term is undefined on these inputs"));
        }
        let raw = self
            .gamma
            .apply(agg)
            .ok_or_else(|| undefined("scaling undefined for the aggregated value"))?;
        if !raw.is_finite() {
            return Err(undefined("value is not finite"));
        }
        Ok((raw, self.phi.factor(n_total) * raw))
    }
}

/// Result of evaluating one measure on a pair of windows.
///
/// For CDF measures `p_value` is the calibrated null CDF at the normalized
/// value, so large values indicate a difference and the measure rejects when
/// `p_value > 1 - alpha`. For the rank baselines it is the classical
/// two-sided tail probability and the baseline rejects when `p_value < alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOutcome {
    pub id: MeasureId,
    pub raw: f64,
    pub normalized: f64,
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
}

impl MeasureOutcome {
    pub fn new(id: MeasureId, raw: f64, normalized: f64) -> Self {
        Self {
            id,
            raw,
            normalized,
            p_value: None,
            reject: None,
        }
    }

    /// Attach a significance value and the decision at `alpha`.
    pub fn with_p_value(mut self, p: f64, alpha: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        self.p_value = Some(p);
        self.reject = Some(if self.id.is_baseline() {
            p < alpha
        } else {
            p > 1.0 - alpha
        });
        self
    }

    /// Significance on the "large means different" scale used by scan
    /// records, whatever the measure kind.
    pub fn change_score(&self) -> Option<f64> {
        self.p_value
            .map(|p| if self.id.is_baseline() { 1.0 - p } else { p })
    }
}

/// Evaluate a CDF measure. `n_total` is `|R| + |W|`.
pub fn measure_eval(
    spec: &MeasureSpec,
    fr: &Ecdf1D,
    fw: &Ecdf1D,
    n_total: usize,
) -> Result<MeasureOutcome> {
    if n_total < 2 {
        return arg("total sample count must be at least 2");
    }
    let (x, y) = pooled_eval(fr, fw);
    let (raw, normalized) = spec.evaluate_pooled(&x, &y, n_total)?;
    Ok(MeasureOutcome::new(spec.id, raw, normalized))
}

/// Rank baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Wilcox,
    Ttest,
}

impl BaselineKind {
    pub fn id(self) -> MeasureId {
        match self {
            BaselineKind::Wilcox => MeasureId::WilcoxBaseline,
            BaselineKind::Ttest => MeasureId::TTestBaseline,
        }
    }
}

fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Wilcoxon rank-sum or Welch t statistic with a normal-approximation
/// two-sided p-value. `raw` is the rank sum of `r` (Wilcoxon) or the t
/// statistic; `normalized` is the corresponding z score.
pub fn baseline_stat(kind: BaselineKind, r: &[f64], w: &[f64]) -> Result<MeasureOutcome> {
    if r.len() < 2 || w.len() < 2 {
        return arg("baselines need at least two samples per window");
    }
    let id = kind.id();
    let (raw, z) = match kind {
        BaselineKind::Wilcox => {
            let (n1, n2) = (r.len() as f64, w.len() as f64);
            let n = n1 + n2;
            let mut pooled: Vec<(f64, bool)> = r
                .iter()
                .map(|&v| (v, true))
                .chain(w.iter().map(|&v| (v, false)))
                .collect();
            pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut rank_sum = 0.0;
            let mut tie_term = 0.0;
            let mut i = 0;
            while i < pooled.len() {
                let mut j = i;
                while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
                    j += 1;
                }
                let mid = (i + j) as f64 / 2.0 + 1.0;
                let t = (j - i + 1) as f64;
                tie_term += t * t * t - t;
                rank_sum += mid * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
                i = j + 1;
            }
            let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
            let mean = n1 * n2 / 2.0;
            let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
            let z = if var > 0.0 { (u - mean) / var.sqrt() } else { 0.0 };
            (rank_sum, z)
        }
        BaselineKind::Ttest => {
            let stats = |s: &[f64]| {
                let n = s.len() as f64;
                let m = s.iter().sum::<f64>() / n;
                let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
                (n, m, v)
            };
            let (n1, m1, v1) = stats(r);
            let (n2, m2, v2) = stats(w);
            let se2 = v1 / n1 + v2 / n2;
            if se2 <= 0.0 {
                return Err(Error::Evaluation {
                    measure: id.to_string(),
                    message: "both windows have zero variance".into(),
                });
            }
            let t = (m1 - m2) / se2.sqrt();
            (t, t)
        }
    };
    Ok(MeasureOutcome {
        id,
        raw,
        normalized: z,
        p_value: Some(two_sided_normal_p(z)),
        reject: None,
    })
}

/// Evaluate any measure id on two raw 1-D sample sets. Baselines get their
/// own p-value; CDF measures are returned uncalibrated.
pub fn evaluate_samples(id: MeasureId, r: &[f64], w: &[f64]) -> Result<MeasureOutcome> {
    match id {
        MeasureId::WilcoxBaseline => baseline_stat(BaselineKind::Wilcox, r, w),
        MeasureId::TTestBaseline => baseline_stat(BaselineKind::Ttest, r, w),
        _ => measure_eval(
            &MeasureSpec::new(id),
            &Ecdf1D::from_samples(r)?,
            &Ecdf1D::from_samples(w)?,
            r.len() + w.len(),
        ),
    }
}
