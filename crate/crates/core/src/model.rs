//! Domain model: datasets, query events, the attention model, rankings and
//! the cumulative ledger every metric and solver reads.
//!
//! Individuals are held in ascending identifier order, so a dataset index
//! doubles as the identifier rank. Per-query vectors (relevance, rankings)
//! are indexed by that position.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ r_i = 1` for a validated query.
pub const RELEVANCE_SUM_TOL: f64 = 1e-9;

/// Default attention depth: log-discounted attention up to position 10,
/// zero below.
pub const DEFAULT_ATTENTION_CUTOFF: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityMode {
    /// Attention and relevance are scaled by the query polarity.
    Aware,
    /// Every query counts with polarity 1.
    Agnostic,
}

impl PolarityMode {
    pub const ALL: [PolarityMode; 2] = [PolarityMode::Aware, PolarityMode::Agnostic];

    pub fn as_str(self) -> &'static str {
        match self {
            PolarityMode::Aware => "aware",
            PolarityMode::Agnostic => "agnostic",
        }
    }
}

impl std::str::FromStr for PolarityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aware" => Ok(PolarityMode::Aware),
            "agnostic" => Ok(PolarityMode::Agnostic),
            other => Err(Error::Validation(format!("unknown polarity mode `{other}`"))),
        }
    }
}

/// A set of individuals, each belonging to exactly one non-empty group.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    group_of: Vec<usize>,
    group_names: Vec<String>,
    members: Vec<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from `(individual, group)` pairs. Individuals are
    /// reordered by ascending identifier; groups likewise.
    pub fn new<I, S, G>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, G)>,
        S: Into<String>,
        G: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (id, group) in pairs {
            let id = id.into();
            if map.insert(id.clone(), group.into()).is_some() {
                return Err(Error::Validation(format!("duplicate individual `{id}`")));
            }
        }
        if map.is_empty() {
            return Err(Error::Validation("dataset has no individuals".into()));
        }
        let group_names: Vec<String> = map
            .values()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let group_index: HashMap<&str, usize> = group_names
            .iter()
            .enumerate()
            .map(|(k, g)| (g.as_str(), k))
            .collect();
        let mut ids = Vec::with_capacity(map.len());
        let mut group_of = Vec::with_capacity(map.len());
        let mut members = vec![Vec::new(); group_names.len()];
        for (i, (id, group)) in map.iter().enumerate() {
            let g = group_index[group.as_str()];
            ids.push(id.clone());
            group_of.push(g);
            members[g].push(i);
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Dataset {
            ids,
            index,
            group_of,
            group_names,
            members,
        })
    }

    /// All individuals in a single group named `all`.
    pub fn single_group<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Dataset::new(ids.into_iter().map(|id| (id.into(), "all".to_string())))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn group_count(&self) -> usize {
        self.group_names.len()
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    /// `(individual, group)` pairs in dataset order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.ids
            .iter()
            .zip(&self.group_of)
            .map(|(id, &g)| (id.as_str(), self.group_names[g].as_str()))
    }
}

/// One timestep's query. `relevance[i]` is the normalized relevance of the
/// dataset's `i`-th individual.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEvent {
    pub query_id: String,
    pub t: u64,
    pub polarity: Vec<f64>,
    pub relevance: Vec<f64>,
}

impl QueryEvent {
    pub fn new(
        query_id: impl Into<String>,
        t: u64,
        polarity: Vec<f64>,
        relevance: Vec<f64>,
    ) -> Result<Self> {
        let q = QueryEvent {
            query_id: query_id.into(),
            t,
            polarity,
            relevance,
        };
        q.validate()?;
        Ok(q)
    }

    /// Builds a query from an identifier-keyed relevance map that must cover
    /// the dataset exactly.
    pub fn from_map(
        dataset: &Dataset,
        query_id: impl Into<String>,
        t: u64,
        polarity: Vec<f64>,
        relevance: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        if relevance.len() != dataset.len() {
            return Err(Error::Coverage(format!(
                "query covers {} individuals, dataset has {}",
                relevance.len(),
                dataset.len()
            )));
        }
        let mut dense = vec![0.0; dataset.len()];
        for (id, &r) in relevance {
            let i = dataset
                .index_of(id)
                .ok_or_else(|| Error::Coverage(format!("unknown individual `{id}`")))?;
            dense[i] = r;
        }
        QueryEvent::new(query_id, t, polarity, dense)
    }

    pub fn components(&self) -> usize {
        self.polarity.len()
    }

    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.polarity.is_empty() {
            return Err(Error::Validation(format!(
                "query `{}` has an empty polarity vector",
                self.query_id
            )));
        }
        if self.polarity.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "query `{}` has a non-finite polarity",
                self.query_id
            )));
        }
        if self.relevance.is_empty() {
            return Err(Error::Validation(format!(
                "query `{}` ranks no individuals",
                self.query_id
            )));
        }
        if let Some(r) = self.relevance.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Validation(format!(
                "query `{}` has invalid relevance {r}",
                self.query_id
            )));
        }
        let sum: f64 = self.relevance.iter().sum();
        if (sum - 1.0).abs() > RELEVANCE_SUM_TOL {
            return Err(Error::Validation(format!(
                "query `{}` relevance sums to {sum}, expected 1",
                self.query_id
            )));
        }
        Ok(())
    }
}

/// Normalizes non-negative scores into a probability vector.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    for (i, &v) in raw.iter().enumerate() {
        if v < 0.0 || v.is_nan() {
            return Err(Error::NegativeScore {
                id: i.to_string(),
                value: v,
            });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    Ok(raw.iter().map(|v| v / total).collect())
}

/// Identifier-keyed variant of [`normalize_scores`].
pub fn normalize_relevance(raw: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    if let Some((id, &value)) = raw.iter().find(|(_, v)| **v < 0.0 || v.is_nan()) {
        return Err(Error::NegativeScore {
            id: id.clone(),
            value,
        });
    }
    let values: Vec<f64> = raw.values().copied().collect();
    let normalized = normalize_scores(&values)?;
    Ok(raw.keys().cloned().zip(normalized).collect())
}

/// Position discount `1 / log2(j + 1)` for a 1-based position `j`.
#[inline]
pub fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

/// Log-decay attention over positions `1..=n`, normalized over the first
/// `min(cutoff, n)` positions and exactly zero beyond.
pub fn attention_weights(n: usize, cutoff: usize) -> Vec<f64> {
    let depth = cutoff.min(n);
    let z: f64 = (1..=depth).map(discount).sum();
    (1..=n)
        .map(|j| if j <= depth { discount(j) / z } else { 0.0 })
        .collect()
}

/// Position-to-attention weights for one ranking length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionModel {
    cutoff: usize,
    weights: Vec<f64>,
}

impl AttentionModel {
    pub fn new(n: usize, cutoff: usize) -> Result<Self> {
        if n == 0 || cutoff == 0 {
            return Err(Error::Validation(
                "attention model needs n >= 1 and cutoff >= 1".into(),
            ));
        }
        Ok(AttentionModel {
            cutoff,
            weights: attention_weights(n, cutoff),
        })
    }

    /// Uses explicit weights, e.g. the `[1, 0]` model of a hand-built
    /// scenario. Weights must be non-negative, non-increasing and sum to 1.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("attention weights must be non-negative".into()));
        }
        if weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Validation("attention weights must be non-increasing".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("attention weights sum to {sum}")));
        }
        let cutoff = weights.iter().rposition(|w| *w > 0.0).map_or(0, |p| p + 1);
        Ok(AttentionModel { cutoff, weights })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Attention at a 1-based position; zero past the end.
    #[inline]
    pub fn weight(&self, position: usize) -> f64 {
        debug_assert!(position >= 1);
        self.weights.get(position - 1).copied().unwrap_or(0.0)
    }
}

/// A full ordering of the dataset for one query: `order[j]` is the
/// individual at 1-based position `j + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    order: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!(
                    "ranking is not a permutation of 0..{}",
                    order.len()
                )));
            }
        }
        Ok(Ranking { order })
    }

    pub fn identity(n: usize) -> Self {
        Ranking {
            order: (0..n).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based position of every individual.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (j, &i) in self.order.iter().enumerate() {
            pos[i] = j + 1;
        }
        pos
    }

    pub fn into_order(self) -> Vec<usize> {
        self.order
    }
}

/// Individuals sorted by relevance descending; ties go to the smaller
/// identifier (smaller dataset index).
pub fn ideal_ranking(query: &QueryEvent) -> Ranking {
    let mut order: Vec<usize> = (0..query.relevance.len()).collect();
    order.sort_by(|&a, &b| {
        query.relevance[b]
            .total_cmp(&query.relevance[a])
            .then(a.cmp(&b))
    });
    Ranking { order }
}

/// `Σ_{j ≤ min(k, len)} relevance[ordering[j]] / log2(j + 1)`.
pub fn dcg_at_k(ordering: &[usize], relevance: &[f64], k: usize) -> f64 {
    ordering
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &i)| relevance[i] * discount(j + 1))
        .sum()
}

/// DCG relative to the ideal ordering; an all-zero ideal counts as 1.
pub fn ndcg_at_k(ordering: &[usize], ideal: &[usize], relevance: &[f64], k: usize) -> f64 {
    let best = dcg_at_k(ideal, relevance, k);
    if best <= 0.0 {
        return 1.0;
    }
    dcg_at_k(ordering, relevance, k) / best
}

/// Running moments and per-query values for one side (attention or
/// relevance) of one individual and polarity component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    /// `Σ η·p`, the expected cumulative value.
    pub sum: f64,
    /// `Σ η²·p·(1 − p)`, the variance of the sum of independent Bernoullis.
    pub var: f64,
    /// `η·p` for each processed query, in arrival order.
    pub seq: Vec<f64>,
}

impl Accumulator {
    #[inline]
    pub fn accrue(&mut self, prob: f64, eta: f64) {
        let (value, var) = increments(prob, eta);
        self.sum += value;
        self.var += var;
        self.seq.push(value);
    }

    pub fn mean(&self) -> f64 {
        self.sum
    }

    pub fn std(&self) -> f64 {
        self.var.max(0.0).sqrt()
    }

    /// Sample standard deviation of the per-query value sequence; the
    /// alternative reading of the spread term, kept for comparison.
    pub fn sequence_std(&self) -> f64 {
        let n = self.seq.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.seq.iter().sum::<f64>() / n as f64;
        let ss: f64 = self.seq.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Value and variance increments of one Bernoulli(`prob`) draw scaled by `eta`.
#[inline]
pub(crate) fn increments(prob: f64, eta: f64) -> (f64, f64) {
    (eta * prob, eta * eta * prob * (1.0 - prob))
}

/// Per-individual, per-component accumulators for one polarity mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    components: usize,
    attn: Vec<Accumulator>,
    rel: Vec<Accumulator>,
}

impl Track {
    fn new(n: usize, components: usize) -> Self {
        Track {
            components,
            attn: vec![Accumulator::default(); n * components],
            rel: vec![Accumulator::default(); n * components],
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.attn.len() / self.components
    }

    pub fn is_empty(&self) -> bool {
        self.attn.is_empty()
    }

    pub fn attn(&self, i: usize, p: usize) -> &Accumulator {
        &self.attn[i * self.components + p]
    }

    pub fn rel(&self, i: usize, p: usize) -> &Accumulator {
        &self.rel[i * self.components + p]
    }
}

/// Cumulative attention/relevance state, in both polarity modes.
///
/// The agnostic track carries the same number of components as the aware
/// one, each accrued with `η = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    n: usize,
    components: usize,
    queries: usize,
    aware: Track,
    agnostic: Track,
}

impl Ledger {
    pub fn new(n: usize, components: usize) -> Self {
        assert!(components >= 1, "ledger needs at least one polarity component");
        Ledger {
            n,
            components,
            queries: 0,
            aware: Track::new(n, components),
            agnostic: Track::new(n, components),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of processed queries.
    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn track(&self, mode: PolarityMode) -> &Track {
        match mode {
            PolarityMode::Aware => &self.aware,
            PolarityMode::Agnostic => &self.agnostic,
        }
    }

    /// Accrues one query's attention (from `ranking`) and relevance.
    pub fn update(
        &mut self,
        query: &QueryEvent,
        ranking: &Ranking,
        attention: &AttentionModel,
    ) -> Result<()> {
        if query.polarity.len() != self.components {
            return Err(Error::LengthMismatch {
                expected: self.components,
                got: query.polarity.len(),
            });
        }
        if query.relevance.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: query.relevance.len(),
            });
        }
        if ranking.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: ranking.len(),
            });
        }
        let p_count = self.components;
        for (j, &i) in ranking.order().iter().enumerate() {
            let w = attention.weight(j + 1);
            let r = query.relevance[i];
            for (p, &eta) in query.polarity.iter().enumerate() {
                let k = i * p_count + p;
                self.aware.attn[k].accrue(w, eta);
                self.aware.rel[k].accrue(r, eta);
                self.agnostic.attn[k].accrue(w, 1.0);
                self.agnostic.rel[k].accrue(r, 1.0);
            }
        }
        self.queries += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        let m = |v: &[(&str, f64)]| {
            v.iter()
                .map(|(k, x)| (k.to_string(), *x))
                .collect::<BTreeMap<_, _>>()
        };
        let out = normalize_relevance(&m(&[("a", 2.0), ("b", 2.0)])).unwrap();
        assert_eq!(out["a"], 0.5);
        assert_eq!(out["b"], 0.5);
        let out = normalize_relevance(&m(&[("a", 1.0), ("b", 3.0)])).unwrap();
        assert_eq!(out["a"], 0.25);
        assert_eq!(out["b"], 0.75);
        assert_eq!(
            normalize_relevance(&m(&[("a", 0.0), ("b", 0.0)])),
            Err(Error::AllZero)
        );
        assert!(matches!(
            normalize_relevance(&m(&[("a", -1.0), ("b", 2.0)])),
            Err(Error::NegativeScore { .. })
        ));
    }

    #[test]
    fn attention_three_positions() {
        // Z = 1 + 1/log2(3) + 1/2
        let w = attention_weights(3, 3);
        assert!(close(w[0], 0.46928, 5e-6));
        assert!(close(w[1], 0.29608, 5e-6));
        assert!(close(w[2], 0.23464, 5e-6));
        assert_eq!(attention_weights(1, 10), vec![1.0]);
        let w = attention_weights(12, 10);
        assert_eq!(w[10], 0.0);
        assert_eq!(w[11], 0.0);
        assert!(close(w.iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn attention_model_from_weights() {
        let m = AttentionModel::from_weights(vec![1.0, 0.0]).unwrap();
        assert_eq!(m.cutoff(), 1);
        assert_eq!(m.weight(2), 0.0);
        assert_eq!(m.weight(7), 0.0);
        assert!(AttentionModel::from_weights(vec![0.2, 0.8]).is_err());
    }

    #[test]
    fn dcg_examples() {
        let rel = [1.0, 0.0];
        assert_eq!(dcg_at_k(&[0, 1], &rel, 2), 1.0);
        assert!(close(dcg_at_k(&[1, 0], &rel, 2), 0.63093, 5e-6));
        assert_eq!(dcg_at_k(&[1, 0], &[0.0, 0.0], 2), 0.0);
        assert_eq!(ndcg_at_k(&[0, 1], &[0, 1], &rel, 2), 1.0);
        assert!(close(ndcg_at_k(&[1, 0], &[0, 1], &rel, 2), 0.63093, 5e-6));
        assert_eq!(ndcg_at_k(&[1, 0], &[0, 1], &[0.0, 0.0], 2), 1.0);
    }

    #[test]
    fn ideal_ranking_examples() {
        let q = |rel: Vec<f64>| QueryEvent::new("q", 1, vec![1.0], rel).unwrap();
        assert_eq!(ideal_ranking(&q(vec![0.7, 0.3])).order(), &[0, 1]);
        assert_eq!(ideal_ranking(&q(vec![0.5, 0.5])).order(), &[0, 1]);
        assert_eq!(ideal_ranking(&q(vec![0.2, 0.3, 0.5])).order(), &[2, 1, 0]);
    }

    #[test]
    fn dataset_orders_by_identifier() {
        let d = Dataset::new([("b", "g2"), ("a", "g1"), ("c", "g2")]).unwrap();
        assert_eq!(d.ids(), &["a", "b", "c"]);
        assert_eq!(d.group_names(), &["g1", "g2"]);
        assert_eq!(d.members(1), &[1, 2]);
        assert!(Dataset::new([("a", "x"), ("a", "y")]).is_err());
    }

    #[test]
    fn query_validation() {
        assert!(QueryEvent::new("q", 1, vec![1.0], vec![0.5, 0.4]).is_err());
        assert!(QueryEvent::new("q", 1, vec![], vec![0.5, 0.5]).is_err());
        assert!(QueryEvent::new("q", 1, vec![-1.0], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn ledger_update_examples() {
        let attention = AttentionModel::new(3, 3).unwrap();
        let w0 = attention.weight(1);
        let ranking = Ranking::identity(3);

        let q = QueryEvent::new("q", 1, vec![1.0], vec![0.2, 0.3, 0.5]).unwrap();
        let mut ledger = Ledger::new(3, 1);
        ledger.update(&q, &ranking, &attention).unwrap();
        assert!(close(ledger.track(PolarityMode::Aware).attn(0, 0).sum, 0.46928, 5e-6));

        let q = QueryEvent::new("q", 1, vec![-1.0], vec![0.2, 0.3, 0.5]).unwrap();
        let mut ledger = Ledger::new(3, 1);
        ledger.update(&q, &ranking, &attention).unwrap();
        let acc = ledger.track(PolarityMode::Aware).attn(0, 0);
        assert_eq!(acc.sum, -w0);
        assert!(close(acc.var, 0.24906, 5e-6));
        assert_eq!(acc.seq, vec![-w0]);

        let q = QueryEvent::new("q", 1, vec![0.0], vec![0.2, 0.3, 0.5]).unwrap();
        let mut ledger = Ledger::new(3, 1);
        ledger.update(&q, &ranking, &attention).unwrap();
        let aware = ledger.track(PolarityMode::Aware);
        let agnostic = ledger.track(PolarityMode::Agnostic);
        for i in 0..3 {
            assert_eq!(aware.attn(i, 0).sum, 0.0);
            assert_eq!(aware.rel(i, 0).var, 0.0);
        }
        assert_eq!(agnostic.attn(0, 0).sum, w0);
        assert_eq!(agnostic.rel(2, 0).sum, 0.5);

        let q = QueryEvent::new("q", 1, vec![1.0, 1.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(
            ledger.update(&q, &ranking, &attention),
            Err(Error::LengthMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn sequence_std_is_sample_std() {
        let acc = Accumulator {
            sum: 0.0,
            var: 0.0,
            seq: vec![1.0, 3.0],
        };
        assert!(close(acc.sequence_std(), 2f64.sqrt(), 1e-15));
    }
}
