//! Online re-ranking against the running ledger, and an offline mode that
//! revisits past queries against the end-of-stream objective.

use serde::{Deserialize, Serialize};

use crate::assign::{
    bottleneck_with_quality, constrained_min_sum, lexicographic_refine, CostMatrix, DcgGains, MatchResult,
};
use crate::divergence::{individual_divergence, DivergenceKind, Prospect};
use crate::error::{Error, Result};
use crate::metrics::{individual_unfairness, MetricsReport, Scope};
use crate::model::{
    dcg_at_k, discount, ideal_ranking, ndcg_at_k, AttentionModel, Dataset, Ledger, PolarityMode, QueryEvent,
    Ranking,
};

/// Joint assignment spaces up to this many combinations are searched
/// exhaustively by [`rerank_offline`].
pub const JOINT_ENUMERATION_LIMIT: usize = 200_000;

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    /// Minimize the largest prospective divergence among candidates.
    #[serde(rename = "minmax")]
    MinMax,
    /// Min-max, then greedily push down the next-largest values.
    #[serde(rename = "minmax-lex")]
    MinMaxLex,
    /// Minimize the summed prospective `L1` divergence (IAA re-ranker).
    #[serde(rename = "minsum")]
    MinSum,
    /// Pass the system ranking through unchanged.
    #[serde(rename = "none")]
    None,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Objective::MinMax, Objective::MinMaxLex, Objective::MinSum, Objective::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::MinMax => "minmax",
            Objective::MinMaxLex => "minmax-lex",
            Objective::MinSum => "minsum",
            Objective::None => "none",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub kind: DivergenceKind,
    pub objective: Objective,
    /// Fraction of the system ranking's DCG every output must keep.
    pub theta: f64,
    /// Prefilter depth: only the top `k_rerank` are re-arranged.
    pub k_rerank: usize,
    pub k_attention: usize,
    pub k_eval: usize,
    pub polarity_mode: PolarityMode,
    pub seed: u64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            kind: DivergenceKind::L1,
            objective: Objective::MinMaxLex,
            theta: 0.8,
            k_rerank: 50,
            k_attention: 10,
            k_eval: 10,
            polarity_mode: PolarityMode::Aware,
            seed: 0,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Validation(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.k_rerank == 0 || self.k_attention == 0 || self.k_eval == 0 {
            return Err(Error::Validation("depths must be at least 1".into()));
        }
        if self.k_attention > self.k_rerank {
            return Err(Error::Validation(format!(
                "attention cutoff {} exceeds prefilter depth {}",
                self.k_attention, self.k_rerank
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: RerankConfig,
    pub orderings: Vec<Ranking>,
    pub ndcg: Vec<f64>,
    /// Queries where the solver found no feasible assignment and the system
    /// ranking was used instead.
    pub fallback: Vec<bool>,
    pub ledger: Ledger,
    /// Solver objective per query; `None` for pass-through and fallbacks.
    pub trace: Vec<Option<f64>>,
}

impl RunResult {
    pub fn fallbacks(&self) -> usize {
        self.fallback.iter().filter(|f| **f).count()
    }
}

/// One query's assignment subproblem over the prefiltered candidates.
#[derive(Debug, Clone)]
pub struct StepProblem {
    pub ideal: Ranking,
    /// DCG@`k_eval` of the system ranking.
    pub rho: f64,
    /// Top-`k_rerank` individuals of the system ranking; row order.
    pub candidates: Vec<usize>,
    /// Prospective divergence of candidate `r` at position `c + 1`.
    pub d: CostMatrix,
    pub gains: DcgGains,
    /// Candidate DCG required: `θρ` minus the frozen tail's contribution.
    pub theta_rho: f64,
}

/// Builds the subproblem for `query` given the ledger before it.
pub fn build_step(
    ledger: &Ledger,
    query: &QueryEvent,
    attention: &AttentionModel,
    config: &RerankConfig,
) -> StepProblem {
    let n = query.len();
    let ideal = ideal_ranking(query);
    let k_eval = config.k_eval.min(n);
    let k_re = config.k_rerank.min(n);
    let rho = dcg_at_k(ideal.order(), &query.relevance, k_eval);
    let candidates = ideal.order()[..k_re].to_vec();
    let tail_gain: f64 = (k_re..k_eval)
        .map(|j| query.relevance[ideal.order()[j]] * discount(j + 1))
        .sum();
    let gains = DcgGains::new(candidates.iter().map(|&i| query.relevance[i]).collect(), k_eval);
    let kind = match config.objective {
        Objective::MinSum => DivergenceKind::L1,
        _ => config.kind,
    };
    let weights: Vec<f64> = (1..=k_re).map(|j| attention.weight(j)).collect();
    let mut d = CostMatrix::new(k_re, 0.0);
    for (r, &i) in candidates.iter().enumerate() {
        let prospect = Prospect::new(ledger, i, query, kind, config.polarity_mode);
        for (c, &w) in weights.iter().enumerate() {
            d.set(r, c, prospect.at(w));
        }
    }
    StepProblem {
        ideal,
        rho,
        candidates,
        d,
        gains,
        theta_rho: config.theta * rho - tail_gain,
    }
}

/// Solves a step per `objective`. `Objective::None` returns the identity
/// assignment (the system ranking).
pub fn solve_step(problem: &StepProblem, objective: Objective) -> Result<MatchResult> {
    let StepProblem { d, gains, theta_rho, .. } = problem;
    match objective {
        Objective::MinMax => bottleneck_with_quality(d, gains, *theta_rho),
        Objective::MinMaxLex => {
            let base = bottleneck_with_quality(d, gains, *theta_rho)?;
            Ok(lexicographic_refine(d, gains, *theta_rho, &base))
        }
        Objective::MinSum => constrained_min_sum(d, gains, *theta_rho),
        Objective::None => {
            let identity: Vec<usize> = (0..d.size()).collect();
            Ok(MatchResult {
                objective: d.bottleneck(&identity),
                assignment: identity,
                proven_optimal: true,
            })
        }
    }
}

impl StepProblem {
    /// Full ordering placing candidate `r` at position `assignment[r] + 1`.
    pub fn ordering(&self, assignment: &[usize]) -> Ranking {
        let mut order = self.ideal.order().to_vec();
        for (r, &c) in assignment.iter().enumerate() {
            order[c] = self.candidates[r];
        }
        Ranking::new(order).expect("assignment is a bijection")
    }
}

struct Step {
    ranking: Ranking,
    objective: Option<f64>,
    fallback: bool,
}

fn run_step(ledger: &Ledger, query: &QueryEvent, attention: &AttentionModel, config: &RerankConfig) -> Result<Step> {
    if config.objective == Objective::None {
        return Ok(Step {
            ranking: ideal_ranking(query),
            objective: None,
            fallback: false,
        });
    }
    let problem = build_step(ledger, query, attention, config);
    match solve_step(&problem, config.objective) {
        Ok(m) => Ok(Step {
            ranking: problem.ordering(&m.assignment),
            objective: Some(m.objective),
            fallback: false,
        }),
        Err(Error::Infeasible) => {
            log::warn!("query `{}`: no feasible assignment, keeping system ranking", query.query_id);
            Ok(Step {
                ranking: problem.ideal,
                objective: None,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

fn check_stream(dataset: &Dataset, stream: &[QueryEvent]) -> Result<usize> {
    let components = stream.first().map_or(1, |q| q.components());
    let mut prev: Option<u64> = None;
    for q in stream {
        q.validate()?;
        if q.len() != dataset.len() {
            return Err(Error::LengthMismatch {
                expected: dataset.len(),
                got: q.len(),
            });
        }
        if q.components() != components {
            return Err(Error::LengthMismatch {
                expected: components,
                got: q.components(),
            });
        }
        if let Some(p) = prev {
            if q.t <= p {
                return Err(Error::StreamOrder { prev: p, next: q.t });
            }
        }
        prev = Some(q.t);
    }
    Ok(components)
}

fn attention_for(dataset: &Dataset, config: &RerankConfig) -> Result<AttentionModel> {
    config.validate()?;
    AttentionModel::new(dataset.len(), config.k_attention.min(dataset.len()))
}

/// Processes the stream in order, re-ranking each query against the ledger
/// built from its predecessors.
pub fn rerank_online(dataset: &Dataset, stream: &[QueryEvent], config: &RerankConfig) -> Result<RunResult> {
    let attention = attention_for(dataset, config)?;
    let components = check_stream(dataset, stream)?;
    let k_eval = config.k_eval.min(dataset.len());
    let mut ledger = Ledger::new(dataset.len(), components);
    let mut result = RunResult {
        config: config.clone(),
        orderings: Vec::with_capacity(stream.len()),
        ndcg: Vec::with_capacity(stream.len()),
        fallback: Vec::with_capacity(stream.len()),
        ledger: Ledger::new(0, components),
        trace: Vec::with_capacity(stream.len()),
    };
    for query in stream {
        let step = run_step(&ledger, query, &attention, config)?;
        ledger.update(query, &step.ranking, &attention)?;
        let ideal = ideal_ranking(query);
        result
            .ndcg
            .push(ndcg_at_k(step.ranking.order(), ideal.order(), &query.relevance, k_eval));
        result.orderings.push(step.ranking);
        result.fallback.push(step.fallback);
        result.trace.push(step.objective);
    }
    result.ledger = ledger;
    Ok(result)
}

/// Ledger from processing `stream` with the given orderings, skipping the
/// query at `skip`.
fn replay(
    n: usize,
    components: usize,
    stream: &[QueryEvent],
    orderings: &[Ranking],
    attention: &AttentionModel,
    skip: Option<usize>,
) -> Result<Ledger> {
    let mut ledger = Ledger::new(n, components);
    for (t, (q, r)) in stream.iter().zip(orderings).enumerate() {
        if Some(t) != skip {
            ledger.update(q, r, attention)?;
        }
    }
    Ok(ledger)
}

/// End-of-stream objective the offline mode minimizes: the largest
/// divergence over all individuals for the min-max objectives, the summed
/// `L1` divergence for min-sum.
pub fn horizon_objective(ledger: &Ledger, config: &RerankConfig) -> f64 {
    match config.objective {
        Objective::MinMax | Objective::MinMaxLex => {
            individual_unfairness(ledger, config.kind, Scope::All, config.polarity_mode).unwrap_or(0.0)
        }
        Objective::MinSum => (0..ledger.len())
            .map(|i| individual_divergence(ledger, i, DivergenceKind::L1, config.polarity_mode))
            .sum(),
        Objective::None => 0.0,
    }
}

/// Starts from the online solution and improves the end-of-stream
/// objective. Small joint spaces (at most [`JOINT_ENUMERATION_LIMIT`]
/// quality-feasible combinations) are searched exhaustively; otherwise
/// queries are revisited in order, each re-solved against the ledger of
/// all other queries, until a sweep brings no improvement or `max_sweeps`
/// is reached.
pub fn rerank_offline(
    dataset: &Dataset,
    stream: &[QueryEvent],
    config: &RerankConfig,
    max_sweeps: usize,
) -> Result<RunResult> {
    let online = rerank_online(dataset, stream, config)?;
    if max_sweeps == 0 || stream.len() <= 1 || config.objective == Objective::None {
        return Ok(online);
    }
    let attention = attention_for(dataset, config)?;
    let n = dataset.len();
    let components = online.ledger.components();
    let mut orderings = online.orderings.clone();
    let mut current = horizon_objective(&online.ledger, config);

    if let Some(best) = joint_search(stream, config, &attention, n, components, current)? {
        orderings = best;
    } else {
        for sweep in 0..max_sweeps {
            let mut improved = false;
            for t in 0..stream.len() {
                let others = replay(n, components, stream, &orderings, &attention, Some(t))?;
                let step = run_step(&others, &stream[t], &attention, config)?;
                if step.fallback || step.ranking == orderings[t] {
                    continue;
                }
                let mut trial = orderings.clone();
                trial[t] = step.ranking;
                let value = horizon_objective(&replay(n, components, stream, &trial, &attention, None)?, config);
                if value < current - IMPROVEMENT_EPS {
                    current = value;
                    orderings = trial;
                    improved = true;
                }
            }
            log::debug!("offline sweep {sweep}: objective {current}");
            if !improved {
                break;
            }
        }
    }
    finish_offline(dataset, stream, config, &attention, online, orderings)
}

/// Quality-feasible candidate orderings of every query, when the joint
/// space is small enough to enumerate.
fn joint_search(
    stream: &[QueryEvent],
    config: &RerankConfig,
    attention: &AttentionModel,
    n: usize,
    components: usize,
    current: f64,
) -> Result<Option<Vec<Ranking>>> {
    use itertools::Itertools;

    let mut space: usize = 1;
    for q in stream {
        let k = config.k_rerank.min(q.len());
        space = (1..=k).try_fold(space, |acc, f| acc.checked_mul(f)).unwrap_or(usize::MAX);
        if space > JOINT_ENUMERATION_LIMIT {
            return Ok(None);
        }
    }
    let empty = Ledger::new(n, components);
    let mut options: Vec<Vec<Ranking>> = Vec::with_capacity(stream.len());
    for q in stream {
        let problem = build_step(&empty, q, attention, config);
        let k = problem.candidates.len();
        let threshold = problem.theta_rho - crate::FEASIBILITY_TOL;
        let feasible: Vec<Ranking> = (0..k)
            .permutations(k)
            .filter(|a| problem.gains.dcg(a) >= threshold)
            .map(|a| problem.ordering(&a))
            .collect();
        if feasible.is_empty() {
            return Ok(None);
        }
        options.push(feasible);
    }
    let mut best: Option<(f64, Vec<Ranking>)> = None;
    let mut pick = vec![0usize; stream.len()];
    loop {
        let chosen: Vec<Ranking> = pick.iter().zip(&options).map(|(&k, o)| o[k].clone()).collect();
        let value = horizon_objective(&replay(n, components, stream, &chosen, attention, None)?, config);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, chosen));
        }
        // mixed-radix increment
        let mut t = 0;
        while t < pick.len() {
            pick[t] += 1;
            if pick[t] < options[t].len() {
                break;
            }
            pick[t] = 0;
            t += 1;
        }
        if t == pick.len() {
            break;
        }
    }
    Ok(best.filter(|(v, _)| *v < current - IMPROVEMENT_EPS).map(|(_, o)| o).or(Some(Vec::new())))
}

fn finish_offline(
    dataset: &Dataset,
    stream: &[QueryEvent],
    config: &RerankConfig,
    attention: &AttentionModel,
    online: RunResult,
    orderings: Vec<Ranking>,
) -> Result<RunResult> {
    if orderings.is_empty() || orderings == online.orderings {
        return Ok(online);
    }
    let n = dataset.len();
    let k_eval = config.k_eval.min(n);
    let components = online.ledger.components();
    let mut ledger = Ledger::new(n, components);
    let mut result = RunResult {
        config: config.clone(),
        orderings: Vec::with_capacity(stream.len()),
        ndcg: Vec::with_capacity(stream.len()),
        fallback: Vec::with_capacity(stream.len()),
        ledger: Ledger::new(0, components),
        trace: Vec::with_capacity(stream.len()),
    };
    for (t, (query, ranking)) in stream.iter().zip(orderings).enumerate() {
        let unchanged = ranking == online.orderings[t];
        let trace = if unchanged {
            online.trace[t]
        } else {
            let problem = build_step(&ledger, query, attention, config);
            let positions = ranking.positions();
            let assignment: Vec<usize> = problem.candidates.iter().map(|&i| positions[i] - 1).collect();
            Some(match config.objective {
                Objective::MinSum => problem.d.total(&assignment),
                _ => problem.d.bottleneck(&assignment),
            })
        };
        ledger.update(query, &ranking, attention)?;
        let ideal = ideal_ranking(query);
        result
            .ndcg
            .push(ndcg_at_k(ranking.order(), ideal.order(), &query.relevance, k_eval));
        result.fallback.push(unchanged && online.fallback[t]);
        result.trace.push(trace);
        result.orderings.push(ranking);
    }
    result.ledger = ledger;
    Ok(result)
}

/// Metrics of a finished run, optionally relative to a baseline run.
pub fn evaluate_run(result: &RunResult, dataset: &Dataset, baseline: Option<&RunResult>) -> MetricsReport {
    let report = MetricsReport::build(&result.ledger, dataset, &result.ndcg, result.fallbacks());
    match baseline {
        Some(b) => report.with_baseline(&MetricsReport::build(&b.ledger, dataset, &b.ndcg, b.fallbacks())),
        None => report,
    }
}
