//! Divergences between a cumulative attention distribution and a cumulative
//! relevance distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{increments, Accumulator, AttentionModel, Ledger, PolarityMode, QueryEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DivergenceKind {
    /// `|μ_A − μ_R|`
    #[serde(rename = "l1")]
    L1,
    /// `(μ_A − μ_R)² + (σ_A − σ_R)²`
    #[serde(rename = "l2var")]
    L2Var,
    /// Wasserstein-1 between the empirical measures of per-query values.
    #[serde(rename = "w1")]
    W1,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 3] = [DivergenceKind::L1, DivergenceKind::L2Var, DivergenceKind::W1];

    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceKind::L1 => "l1",
            DivergenceKind::L2Var => "l2var",
            DivergenceKind::W1 => "w1",
        }
    }
}

impl std::fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(DivergenceKind::L1),
            "l2var" | "l2_var" | "l2-var" => Ok(DivergenceKind::L2Var),
            "w1" => Ok(DivergenceKind::W1),
            other => Err(Error::Validation(format!("unknown divergence `{other}`"))),
        }
    }
}

/// Mean, spread and sorted per-query values of one distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSummary {
    pub mean: f64,
    pub std: f64,
    /// Ascending.
    pub seq: Vec<f64>,
}

impl DistSummary {
    pub fn new(mean: f64, std: f64, mut seq: Vec<f64>) -> Self {
        seq.sort_by(f64::total_cmp);
        DistSummary { mean, std, seq }
    }

    pub fn from_accumulator(acc: &Accumulator) -> Self {
        DistSummary::new(acc.mean(), acc.std(), acc.seq.clone())
    }
}

pub fn d_l1(attn: &DistSummary, rel: &DistSummary) -> f64 {
    (attn.mean - rel.mean).abs()
}

pub fn d_l2var(attn: &DistSummary, rel: &DistSummary) -> f64 {
    let dm = attn.mean - rel.mean;
    let ds = attn.std - rel.std;
    dm * dm + ds * ds
}

/// Mean absolute difference of aligned order statistics. Both inputs must
/// be sorted ascending and have equal length.
pub fn d_w1(attn_seq: &[f64], rel_seq: &[f64]) -> Result<f64> {
    if attn_seq.len() != rel_seq.len() {
        return Err(Error::LengthMismatch {
            expected: attn_seq.len(),
            got: rel_seq.len(),
        });
    }
    if attn_seq.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = attn_seq
        .iter()
        .zip(rel_seq)
        .map(|(a, r)| (a - r).abs())
        .sum();
    Ok(total / attn_seq.len() as f64)
}

pub fn divergence(kind: DivergenceKind, attn: &DistSummary, rel: &DistSummary) -> Result<f64> {
    match kind {
        DivergenceKind::L1 => Ok(d_l1(attn, rel)),
        DivergenceKind::L2Var => Ok(d_l2var(attn, rel)),
        DivergenceKind::W1 => d_w1(&attn.seq, &rel.seq),
    }
}

/// Unweighted sum of per-component divergences.
pub fn d_multi(components: &[f64]) -> f64 {
    components.iter().sum()
}

/// Weighted sum of per-component divergences.
pub fn d_multi_weighted(components: &[f64], weights: &[f64]) -> Result<f64> {
    if components.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: components.len(),
            got: weights.len(),
        });
    }
    Ok(components.iter().zip(weights).map(|(d, w)| d * w).sum())
}

/// Component-summed divergence of individual `i` in the given mode.
pub fn individual_divergence(
    ledger: &Ledger,
    i: usize,
    kind: DivergenceKind,
    mode: PolarityMode,
) -> f64 {
    let track = ledger.track(mode);
    let per: Vec<f64> = (0..track.components())
        .map(|p| {
            let a = DistSummary::from_accumulator(track.attn(i, p));
            let r = DistSummary::from_accumulator(track.rel(i, p));
            divergence(kind, &a, &r).expect("ledger sequences share one horizon")
        })
        .collect();
    d_multi(&per)
}

/// Divergence individual `i` would hold after receiving this query's
/// attention at 1-based `position` (and its relevance). The ledger is not
/// touched.
pub fn prospective_divergence(
    ledger: &Ledger,
    i: usize,
    query: &QueryEvent,
    position: usize,
    attention: &AttentionModel,
    kind: DivergenceKind,
    mode: PolarityMode,
) -> f64 {
    let prospect = Prospect::new(ledger, i, query, kind, mode);
    prospect.at(attention.weight(position))
}

/// Precomputed relevance side of a prospective placement, reusable across
/// every candidate position of one individual.
pub(crate) struct Prospect<'a> {
    ledger: &'a Ledger,
    i: usize,
    kind: DivergenceKind,
    mode: PolarityMode,
    etas: Vec<f64>,
    rel: Vec<DistSummary>,
    attn_sorted: Vec<Vec<f64>>,
}

impl<'a> Prospect<'a> {
    pub(crate) fn new(
        ledger: &'a Ledger,
        i: usize,
        query: &QueryEvent,
        kind: DivergenceKind,
        mode: PolarityMode,
    ) -> Self {
        let track = ledger.track(mode);
        let etas: Vec<f64> = match mode {
            PolarityMode::Aware => query.polarity.clone(),
            PolarityMode::Agnostic => vec![1.0; query.polarity.len()],
        };
        let r = query.relevance[i];
        let mut rel = Vec::with_capacity(etas.len());
        let mut attn_sorted = Vec::new();
        for (p, &eta) in etas.iter().enumerate() {
            let acc = track.rel(i, p);
            let (dv, dvar) = increments(r, eta);
            let mut seq = Vec::new();
            if kind == DivergenceKind::W1 {
                seq = acc.seq.clone();
                seq.push(dv);
                let mut a = track.attn(i, p).seq.clone();
                a.sort_by(f64::total_cmp);
                attn_sorted.push(a);
            }
            let var: f64 = acc.var + dvar;
            rel.push(DistSummary::new(acc.sum + dv, var.max(0.0).sqrt(), seq));
        }
        Prospect {
            ledger,
            i,
            kind,
            mode,
            etas,
            rel,
            attn_sorted,
        }
    }

    /// Divergence after accruing attention `weight`.
    pub(crate) fn at(&self, weight: f64) -> f64 {
        let track = self.ledger.track(self.mode);
        let mut total = 0.0;
        for (p, &eta) in self.etas.iter().enumerate() {
            let acc = track.attn(self.i, p);
            let (dv, dvar) = increments(weight, eta);
            let mean = acc.sum + dv;
            let d = match self.kind {
                DivergenceKind::L1 => (mean - self.rel[p].mean).abs(),
                DivergenceKind::L2Var => {
                    let var: f64 = acc.var + dvar;
                    let a = DistSummary {
                        mean,
                        std: var.max(0.0).sqrt(),
                        seq: Vec::new(),
                    };
                    d_l2var(&a, &self.rel[p])
                }
                DivergenceKind::W1 => {
                    let sorted = &self.attn_sorted[p];
                    let at = sorted.partition_point(|x| x.total_cmp(&dv).is_lt());
                    let mut seq = Vec::with_capacity(sorted.len() + 1);
                    seq.extend_from_slice(&sorted[..at]);
                    seq.push(dv);
                    seq.extend_from_slice(&sorted[at..]);
                    d_w1(&seq, &self.rel[p].seq).expect("equal horizons")
                }
            };
            total += d;
        }
        total
    }
}
