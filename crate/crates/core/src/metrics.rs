//! Unfairness metrics over a ledger: worst-case individual and group
//! divergence, the IAA/EUR/DP baselines, fairwashing deltas and relative
//! improvements.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::divergence::{divergence, individual_divergence, DistSummary, DivergenceKind};
use crate::error::{Error, Result};
use crate::model::{Accumulator, Dataset, Ledger, PolarityMode};

/// A metric that may be undefined (a zero denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            MetricValue::Undefined => None,
        }
    }

    pub fn is_undefined(self) -> bool {
        matches!(self, MetricValue::Undefined)
    }
}

impl From<f64> for MetricValue {
    fn from(v: f64) -> Self {
        MetricValue::Defined(v)
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Defined(v) => s.serialize_f64(*v),
            MetricValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// Which individuals an individual-unfairness maximum ranges over.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    All,
    Subset(&'a [usize]),
}

pub fn individual_unfairness(
    ledger: &Ledger,
    kind: DivergenceKind,
    scope: Scope<'_>,
    mode: PolarityMode,
) -> Result<f64> {
    let eval = |i: usize| individual_divergence(ledger, i, kind, mode);
    let max = match scope {
        Scope::All => (0..ledger.len()).map(eval).reduce(f64::max),
        Scope::Subset(ids) => ids.iter().map(|&i| eval(i)).reduce(f64::max),
    };
    max.ok_or(Error::EmptyScope)
}

/// Group-level attention and relevance summaries for one component:
/// member values averaged per query.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub attn: DistSummary,
    pub rel: DistSummary,
}

/// Summary of the per-query member averages; member variances add
/// (independent draws) and scale by `1/|g|²`.
fn average<'a>(members: &[usize], horizon: usize, pick: impl Fn(usize) -> &'a Accumulator) -> DistSummary {
    let size = members.len() as f64;
    let mut sum = 0.0;
    let mut var: f64 = 0.0;
    let mut seq = vec![0.0; horizon];
    for &i in members {
        let acc = pick(i);
        sum += acc.sum;
        var += acc.var;
        for (s, v) in seq.iter_mut().zip(&acc.seq) {
            *s += v;
        }
    }
    seq.iter_mut().for_each(|s| *s /= size);
    DistSummary::new(sum / size, var.max(0.0).sqrt() / size, seq)
}

/// `summaries[g][p]` for every group and polarity component.
pub fn group_summaries(ledger: &Ledger, dataset: &Dataset, mode: PolarityMode) -> Vec<Vec<GroupSummary>> {
    let track = ledger.track(mode);
    let horizon = ledger.queries();
    (0..dataset.group_count())
        .map(|g| {
            let members = dataset.members(g);
            (0..track.components())
                .map(|p| {
                    GroupSummary {
                        attn: average(members, horizon, |i| track.attn(i, p)),
                        rel: average(members, horizon, |i| track.rel(i, p)),
                    }
                })
                .collect()
        })
        .collect()
}

pub fn group_unfairness(
    ledger: &Ledger,
    dataset: &Dataset,
    kind: DivergenceKind,
    mode: PolarityMode,
) -> f64 {
    group_summaries(ledger, dataset, mode)
        .iter()
        .map(|per| {
            per.iter()
                .map(|s| divergence(kind, &s.attn, &s.rel).expect("equal horizons"))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Inequity of amortized attention: `Σ_i |A_i − R_i|`, component-summed.
pub fn iaa(ledger: &Ledger, mode: PolarityMode) -> f64 {
    let track = ledger.track(mode);
    (0..ledger.len())
        .flat_map(|i| (0..track.components()).map(move |p| (i, p)))
        .map(|(i, p)| (track.attn(i, p).sum - track.rel(i, p).sum).abs())
        .sum()
}

/// Per-group, per-component average cumulative exposure and relevance.
fn group_averages(ledger: &Ledger, dataset: &Dataset, mode: PolarityMode) -> Vec<Vec<(f64, f64)>> {
    let track = ledger.track(mode);
    (0..dataset.group_count())
        .map(|g| {
            let members = dataset.members(g);
            let size = members.len() as f64;
            (0..track.components())
                .map(|p| {
                    let exposure: f64 = members.iter().map(|&i| track.attn(i, p).sum).sum();
                    let relevance: f64 = members.iter().map(|&i| track.rel(i, p).sum).sum();
                    (exposure / size, relevance / size)
                })
                .collect()
        })
        .collect()
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Exposed-utility-ratio difference: the largest pairwise gap between group
/// exposure/relevance ratios. Undefined when a group's relevance is zero.
pub fn eur(ledger: &Ledger, dataset: &Dataset, mode: PolarityMode) -> MetricValue {
    let avgs = group_averages(ledger, dataset, mode);
    let mut total = 0.0;
    for p in 0..ledger.components() {
        let mut ratios = Vec::with_capacity(avgs.len());
        for g in &avgs {
            let (exposure, relevance) = g[p];
            if relevance == 0.0 {
                return MetricValue::Undefined;
            }
            ratios.push(exposure / relevance);
        }
        total += spread(ratios.into_iter());
    }
    MetricValue::Defined(total)
}

/// Demographic parity: the largest pairwise gap in group average exposure.
pub fn dp(ledger: &Ledger, dataset: &Dataset, mode: PolarityMode) -> f64 {
    let avgs = group_averages(ledger, dataset, mode);
    (0..ledger.components())
        .map(|p| spread(avgs.iter().map(|g| g[p].0)))
        .sum()
}

/// `(aware − agnostic) / agnostic`; positive means the agnostic measurement
/// understates unfairness. Undefined (infinite fairwashing) when only the
/// agnostic value is zero.
pub fn fairwashing_delta(aware: f64, agnostic: f64) -> MetricValue {
    if agnostic == 0.0 {
        if aware == 0.0 {
            MetricValue::Defined(0.0)
        } else {
            MetricValue::Undefined
        }
    } else {
        MetricValue::Defined((aware - agnostic) / agnostic)
    }
}

/// `(pre − post) / pre` as a fraction. Undefined when `pre` is not positive,
/// except that two zero values are reported as no change.
pub fn relative_improvement(pre: f64, post: f64) -> MetricValue {
    if pre > 0.0 {
        MetricValue::Defined((pre - post) / pre)
    } else if pre == 0.0 && post == 0.0 {
        MetricValue::Defined(0.0)
    } else {
        MetricValue::Undefined
    }
}

fn lift(
    a: &BTreeMap<String, MetricValue>,
    b: &BTreeMap<String, MetricValue>,
    f: fn(f64, f64) -> MetricValue,
) -> BTreeMap<String, MetricValue> {
    a.iter()
        .map(|(k, va)| {
            let v = match (va.value(), b.get(k).and_then(|v| v.value())) {
                (Some(x), Some(y)) => f(x, y),
                _ => MetricValue::Undefined,
            };
            (k.clone(), v)
        })
        .collect()
}

/// Every metric in one polarity mode, keyed `individual_<kind>`,
/// `group_<kind>`, `iaa`, `eur`, `dp`.
pub fn metric_panel(ledger: &Ledger, dataset: &Dataset, mode: PolarityMode) -> BTreeMap<String, MetricValue> {
    let mut panel = BTreeMap::new();
    for kind in DivergenceKind::ALL {
        let indiv = individual_unfairness(ledger, kind, Scope::All, mode).unwrap_or(0.0);
        panel.insert(format!("individual_{kind}"), indiv.into());
        panel.insert(
            format!("group_{kind}"),
            group_unfairness(ledger, dataset, kind, mode).into(),
        );
    }
    panel.insert("iaa".into(), iaa(ledger, mode).into());
    panel.insert("eur".into(), eur(ledger, dataset, mode));
    panel.insert("dp".into(), dp(ledger, dataset, mode).into());
    panel
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub aware: BTreeMap<String, MetricValue>,
    pub agnostic: BTreeMap<String, MetricValue>,
    /// Relative change aware vs agnostic, per metric.
    pub fairwashing: BTreeMap<String, MetricValue>,
    pub mean_ndcg: f64,
    pub min_ndcg: f64,
    pub fallbacks: usize,
    /// Relative improvement against a baseline run, per mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improvement: Option<BTreeMap<String, BTreeMap<String, MetricValue>>>,
}

impl MetricsReport {
    pub fn build(ledger: &Ledger, dataset: &Dataset, ndcg: &[f64], fallbacks: usize) -> Self {
        let aware = metric_panel(ledger, dataset, PolarityMode::Aware);
        let agnostic = metric_panel(ledger, dataset, PolarityMode::Agnostic);
        let fairwashing = lift(&aware, &agnostic, fairwashing_delta);
        let (mean_ndcg, min_ndcg) = if ndcg.is_empty() {
            (1.0, 1.0)
        } else {
            (
                ndcg.iter().sum::<f64>() / ndcg.len() as f64,
                ndcg.iter().copied().fold(f64::INFINITY, f64::min),
            )
        };
        MetricsReport {
            aware,
            agnostic,
            fairwashing,
            mean_ndcg,
            min_ndcg,
            fallbacks,
            improvement: None,
        }
    }

    /// Attaches relative improvements of `self` over `baseline`.
    pub fn with_baseline(mut self, baseline: &MetricsReport) -> Self {
        let mut imp = BTreeMap::new();
        imp.insert(
            "aware".to_string(),
            lift(&baseline.aware, &self.aware, relative_improvement),
        );
        imp.insert(
            "agnostic".to_string(),
            lift(&baseline.agnostic, &self.agnostic, relative_improvement),
        );
        self.improvement = Some(imp);
        self
    }
}
