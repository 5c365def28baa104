//! Exact solvers for the per-query assignment of candidates (rows) to
//! positions (columns).
//!
//! The quality side constraint is `Σ_r rel[r] · disc[col(r)] ≥ θρ`, with
//! `disc[c] = 1 / log2(c + 2)` inside the evaluation depth and 0 below it.
//! Every solver accepts a matching whose DCG is within
//! [`FEASIBILITY_TOL`] of the threshold.

use std::cmp::Ordering;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::discount;
use crate::FEASIBILITY_TOL;

/// Largest instance [`brute_force`] will enumerate.
pub const BRUTE_FORCE_MAX: usize = 8;

/// Up to this size [`constrained_min_sum`] gets the large node budget.
pub const MIN_SUM_EXACT_LIMIT: usize = 20;

/// Branch-and-bound nodes for instances up to [`MIN_SUM_EXACT_LIMIT`]; a
/// few seconds of search. Near-tied candidates can still exhaust it, in
/// which case the result is flagged as not proven optimal.
const MIN_SUM_NODE_BUDGET_SMALL: u64 = 2_000_000;

/// Branch-and-bound nodes for larger instances.
const MIN_SUM_NODE_BUDGET: u64 = 20_000;


/// Square matrix of edge weights; `+∞` marks a forbidden edge.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    size: usize,
    cells: Vec<f64>,
}

impl CostMatrix {
    pub fn new(size: usize, fill: f64) -> Self {
        CostMatrix {
            size,
            cells: vec![fill; size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut cells = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                cells.push(f(r, c));
            }
        }
        CostMatrix { size, cells }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != size) {
            return Err(Error::LengthMismatch {
                expected: size,
                got: bad.len(),
            });
        }
        Ok(CostMatrix {
            size,
            cells: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.size + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.cells[r * self.size + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.cells[r * self.size..(r + 1) * self.size]
    }

    /// Sub-matrix on the given rows and columns (in that order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CostMatrix {
        assert_eq!(rows.len(), cols.len());
        CostMatrix::from_fn(rows.len(), |r, c| self.get(rows[r], cols[c]))
    }

    /// `Σ_r m[r][assignment[r]]`.
    pub fn total(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(r, &c)| self.get(r, c)).sum()
    }

    /// `max_r m[r][assignment[r]]`.
    pub fn bottleneck(&self, assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(r, &c)| self.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Edge weights along `assignment`, sorted descending.
    pub fn sorted_profile(&self, assignment: &[usize]) -> Vec<f64> {
        let mut v: Vec<f64> = assignment.iter().enumerate().map(|(r, &c)| self.get(r, c)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// DCG gains `relevance[r] · discounts[c]` of placing row `r` at column `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcgGains {
    relevance: Vec<f64>,
    discounts: Vec<f64>,
}

impl DcgGains {
    /// Columns are positions `1..=relevance.len()`; positions deeper than
    /// `depth` contribute nothing.
    pub fn new(relevance: Vec<f64>, depth: usize) -> Self {
        let discounts = (0..relevance.len())
            .map(|c| if c < depth { discount(c + 1) } else { 0.0 })
            .collect();
        DcgGains {
            relevance,
            discounts,
        }
    }

    pub fn from_parts(relevance: Vec<f64>, discounts: Vec<f64>) -> Self {
        assert_eq!(relevance.len(), discounts.len());
        DcgGains {
            relevance,
            discounts,
        }
    }

    pub fn size(&self) -> usize {
        self.relevance.len()
    }

    #[inline]
    pub fn gain(&self, r: usize, c: usize) -> f64 {
        self.relevance[r] * self.discounts[c]
    }

    pub fn dcg(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(r, &c)| self.gain(r, c)).sum()
    }

    /// Largest attainable DCG (sorted relevance against sorted discounts).
    pub fn max_dcg(&self) -> f64 {
        let mut rel = self.relevance.clone();
        let mut disc = self.discounts.clone();
        rel.sort_by(|a, b| b.total_cmp(a));
        disc.sort_by(|a, b| b.total_cmp(a));
        rel.iter().zip(&disc).map(|(r, d)| r * d).sum()
    }

    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> DcgGains {
        DcgGains {
            relevance: rows.iter().map(|&r| self.relevance[r]).collect(),
            discounts: cols.iter().map(|&c| self.discounts[c]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `assignment[row] = column`.
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// False only when a node-limited search stopped early.
    pub proven_optimal: bool,
}

impl MatchResult {
    fn exact(assignment: Vec<usize>, objective: f64) -> Self {
        MatchResult {
            assignment,
            objective,
            proven_optimal: true,
        }
    }
}

/// Minimum-total-cost perfect matching by shortest augmenting paths with
/// potentials, `O(K³)`. Infinite entries are never used.
pub fn hungarian_min_cost(costs: &CostMatrix) -> Result<MatchResult> {
    hungarian_with_reduced(costs).map(|(m, _)| m)
}

/// Hungarian solve that also returns the final reduced costs
/// `c[r][c] − u[r] − v[c]`: non-negative on finite edges, zero on the
/// matching, so any perfect matching costs the optimum plus the sum of its
/// reduced costs.
fn hungarian_with_reduced(costs: &CostMatrix) -> Result<(MatchResult, CostMatrix)> {
    let n = costs.size();
    if costs.cells.iter().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
        return Err(Error::Domain("cost matrix contains NaN or -inf".into()));
    }
    // 1-based: column 0 is the virtual root of each search tree.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = usize::MAX;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let c = costs.get(i0 - 1, j - 1);
                if c.is_finite() {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX {
                return Err(Error::Infeasible);
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    let objective = costs.total(&assignment);
    let reduced = CostMatrix::from_fn(n, |r, c| (costs.get(r, c) - u[r + 1] - v[c + 1]).max(0.0));
    Ok((MatchResult::exact(assignment, objective), reduced))
}

/// Perfect matching over allowed edges maximizing DCG; the objective is the
/// DCG.
pub fn max_dcg_matching(
    allowed: impl Fn(usize, usize) -> bool,
    gains: &DcgGains,
) -> Result<MatchResult> {
    let k = gains.size();
    let costs = CostMatrix::from_fn(k, |r, c| {
        if allowed(r, c) {
            -gains.gain(r, c)
        } else {
            f64::INFINITY
        }
    });
    let m = hungarian_min_cost(&costs)?;
    let dcg = gains.dcg(&m.assignment);
    Ok(MatchResult::exact(m.assignment, dcg))
}

/// Minimizes `max_r d[r][col(r)]` subject to `DCG ≥ θρ`; among bottleneck
/// optima returns the one with the largest DCG.
///
/// Binary search over the distinct entries of `d`: a threshold `z` is
/// feasible iff the max-DCG matching on edges `d ≤ z` meets the quality
/// bound.
pub fn bottleneck_with_quality(d: &CostMatrix, gains: &DcgGains, theta_rho: f64) -> Result<MatchResult> {
    let k = d.size();
    assert_eq!(gains.size(), k);
    if k == 0 {
        return Ok(MatchResult::exact(Vec::new(), 0.0));
    }
    let mut values: Vec<f64> = d.cells.iter().copied().filter(|x| x.is_finite()).collect();
    if values.is_empty() {
        return Err(Error::Infeasible);
    }
    values.sort_by(f64::total_cmp);
    values.dedup();

    // Every row and column needs one edge, so z is at least the largest
    // row/column minimum.
    let row_min = (0..k).map(|r| d.row(r).iter().copied().fold(f64::INFINITY, f64::min));
    let col_min = (0..k).map(|c| (0..k).map(|r| d.get(r, c)).fold(f64::INFINITY, f64::min));
    let floor = row_min.chain(col_min).fold(f64::NEG_INFINITY, f64::max);
    if !floor.is_finite() {
        return Err(Error::Infeasible);
    }

    let threshold = theta_rho - FEASIBILITY_TOL;
    let attempt = |z: f64| -> Option<MatchResult> {
        max_dcg_matching(|r, c| d.get(r, c) <= z, gains)
            .ok()
            .filter(|m| m.objective >= threshold)
    };

    let mut lo = values.partition_point(|&v| v < floor);
    let mut hi = values.len() - 1;
    let mut best = attempt(values[hi]).ok_or(Error::Infeasible)?;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match attempt(values[mid]) {
            Some(m) => {
                best = m;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    if values[hi] != d.bottleneck(&best.assignment) || hi != lo {
        // `best` may come from a larger threshold if the last probe failed.
        if let Some(m) = attempt(values[lo]) {
            best = m;
        }
    }
    let objective = d.bottleneck(&best.assignment);
    Ok(MatchResult::exact(best.assignment, objective))
}

/// Tied edges tried per refinement step.
const LEX_CANDIDATES: usize = 8;

/// Greedy lexicographic improvement of a bottleneck-optimal matching.
///
/// Each step fixes one edge carrying the current maximum of the unfixed
/// part: among such edges (up to [`LEX_CANDIDATES`], interchangeable rows
/// and columns counted once) it keeps the one whose remainder has the
/// smallest bottleneck, then the largest DCG. The remainder is re-solved
/// with the quality bound reduced by the fixed gain. The result's sorted
/// divergence profile is never lexicographically worse than `base`'s and
/// its bottleneck is unchanged; any failure returns `base`.
pub fn lexicographic_refine(
    d: &CostMatrix,
    gains: &DcgGains,
    theta_rho: f64,
    base: &MatchResult,
) -> MatchResult {
    let k = d.size();
    if k <= 1 {
        return base.clone();
    }
    let mut current = base.assignment.clone();
    let mut row_fixed = vec![false; k];
    let mut col_fixed = vec![false; k];
    let mut fixed_gain = 0.0;
    loop {
        let rows: Vec<usize> = (0..k).filter(|&r| !row_fixed[r]).collect();
        if rows.len() <= 1 {
            break;
        }
        let z = rows
            .iter()
            .map(|&r| d.get(r, current[r]))
            .fold(f64::NEG_INFINITY, f64::max);
        let cols: Vec<usize> = (0..k).filter(|&c| !col_fixed[c]).collect();
        let row_key = |r: usize| -> Vec<u64> {
            std::iter::once(gains.relevance[r].to_bits())
                .chain(cols.iter().map(|&c| d.get(r, c).to_bits()))
                .collect()
        };
        let col_key = |c: usize| -> Vec<u64> {
            std::iter::once(gains.discounts[c].to_bits())
                .chain(rows.iter().map(|&r| d.get(r, c).to_bits()))
                .collect()
        };

        // the current matching's own edges come first so ties keep them
        let mut edges: Vec<(usize, usize)> = rows
            .iter()
            .filter(|&&r| d.get(r, current[r]) == z)
            .map(|&r| (r, current[r]))
            .collect();
        for &r in &rows {
            for &c in &cols {
                if d.get(r, c) == z && c != current[r] {
                    edges.push((r, c));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        edges.retain(|&(r, c)| seen.insert((row_key(r), col_key(c))));
        edges.truncate(LEX_CANDIDATES);

        let mut best: Option<(f64, f64, usize, usize, Vec<usize>)> = None;
        for (r, c) in edges {
            let sub_rows: Vec<usize> = rows.iter().copied().filter(|&x| x != r).collect();
            let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let need = theta_rho - fixed_gain - gains.gain(r, c);
            let Ok(m) = bottleneck_with_quality(
                &d.restrict(&sub_rows, &sub_cols),
                &gains.restrict(&sub_rows, &sub_cols),
                need,
            ) else {
                continue;
            };
            let sub_dcg = gains.restrict(&sub_rows, &sub_cols).dcg(&m.assignment) + gains.gain(r, c);
            let better = match &best {
                None => true,
                Some((bz, bd, ..)) => m.objective < *bz || (m.objective == *bz && sub_dcg > *bd),
            };
            if better {
                let mapped = m.assignment.iter().map(|&sc| sub_cols[sc]).collect();
                best = Some((m.objective, sub_dcg, r, c, mapped));
            }
        }
        let Some((_, _, r, c, mapped)) = best else {
            break;
        };
        row_fixed[r] = true;
        col_fixed[c] = true;
        current[r] = c;
        fixed_gain += gains.gain(r, c);
        let sub_rows: Vec<usize> = rows.into_iter().filter(|&x| x != r).collect();
        for (sr, col) in sub_rows.into_iter().zip(mapped) {
            current[sr] = col;
        }
    }
    let feasible = gains.dcg(&current) >= theta_rho - FEASIBILITY_TOL;
    if !feasible
        || d.bottleneck(&current) > base.objective
        || lex_cmp(&d.sorted_profile(&current), &d.sorted_profile(&base.assignment)).is_gt()
    {
        return base.clone();
    }
    let objective = d.bottleneck(&current);
    MatchResult::exact(current, objective)
}

/// Minimum-total-cost perfect matching subject to `DCG ≥ θρ`.
///
/// Edges whose DCG reduced cost alone exceeds the quality slack are dropped
/// first (no feasible matching can use them). Lagrangian bisection on the
/// quality multiplier then gives a feasible incumbent and a lower bound;
/// when they do not meet, a depth-first branch and bound with per-node
/// Lagrangian bounds closes the gap. Interchangeable columns (e.g. slots
/// past both cutoffs) are branched on once. The search is node-limited;
/// `proven_optimal` reports whether it finished.
pub fn constrained_min_sum(costs: &CostMatrix, gains: &DcgGains, theta_rho: f64) -> Result<MatchResult> {
    let k = costs.size();
    assert_eq!(gains.size(), k);
    if costs.cells.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("constrained_min_sum needs finite costs".into()));
    }
    if k == 0 {
        return Ok(MatchResult::exact(Vec::new(), 0.0));
    }
    let threshold = theta_rho - FEASIBILITY_TOL;
    let free = hungarian_min_cost(costs)?;
    if gains.dcg(&free.assignment) >= threshold {
        return Ok(free);
    }
    let (top, dcg_reduced) = hungarian_with_reduced(&CostMatrix::from_fn(k, |r, c| -gains.gain(r, c)))?;
    let max_dcg = gains.dcg(&top.assignment);
    if max_dcg < threshold {
        return Err(Error::Infeasible);
    }
    // DCG of any matching = max_dcg − Σ its reduced costs
    let slack = max_dcg - threshold + 1e-12 * max_dcg.abs().max(1.0);
    let column_class = interchangeable_columns(costs, gains);
    let costs = &CostMatrix::from_fn(k, |r, c| {
        if dcg_reduced.get(r, c) <= slack {
            costs.get(r, c)
        } else {
            f64::INFINITY
        }
    });

    let lagrangian = |lambda: f64| -> (Vec<usize>, f64) {
        let shifted = CostMatrix::from_fn(k, |r, c| costs.get(r, c) - lambda * gains.gain(r, c));
        // the max-DCG matching uses only zero-reduced-cost edges
        let m = hungarian_min_cost(&shifted).expect("max-DCG matching survives the edge filter");
        (m.assignment, m.objective + lambda * threshold)
    };

    let mut incumbent = top.assignment;
    let mut upper = costs.total(&incumbent);
    let mut lower = free.objective;
    let mut best_lambda = 0.0;
    let mut consider = |assignment: &[usize], bound: f64, lambda: f64, upper: &mut f64, incumbent: &mut Vec<usize>, lower: &mut f64| -> bool {
        if bound > *lower {
            *lower = bound;
            best_lambda = lambda;
        }
        let feasible = gains.dcg(assignment) >= threshold;
        if feasible {
            let c = costs.total(assignment);
            if c < *upper {
                *upper = c;
                *incumbent = assignment.to_vec();
            }
        }
        feasible
    };

    let mut hi = 1.0;
    loop {
        let (a, bound) = lagrangian(hi);
        if consider(&a, bound, hi, &mut upper, &mut incumbent, &mut lower) || hi > 1e15 {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (a, bound) = lagrangian(mid);
        if consider(&a, bound, mid, &mut upper, &mut incumbent, &mut lower) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let gap_tol = 1e-12 * upper.abs().max(1.0);
    if upper - lower <= gap_tol {
        return Ok(MatchResult::exact(incumbent, upper));
    }

    let mut search = MinSumSearch {
        costs,
        gains,
        dcg_reduced: &dcg_reduced,
        column_class,
        slack,
        threshold,
        lambda: best_lambda,
        best_cost: upper,
        best: incumbent,
        nodes: 0,
        budget: if k <= MIN_SUM_EXACT_LIMIT {
            MIN_SUM_NODE_BUDGET_SMALL
        } else {
            MIN_SUM_NODE_BUDGET
        },
        exhausted: false,
        gap_tol,
    };
    let mut partial = vec![usize::MAX; k];
    let mut used = vec![false; k];
    search.descend(0, &mut partial, &mut used, 0.0, 0.0, 0.0);
    Ok(MatchResult {
        objective: search.best_cost,
        assignment: search.best,
        proven_optimal: !search.exhausted,
    })
}

/// Columns with the same discount and bitwise-identical costs can be
/// swapped in any matching without changing cost or DCG; maps each column
/// to the lowest index of its class.
fn interchangeable_columns(costs: &CostMatrix, gains: &DcgGains) -> Vec<usize> {
    let k = costs.size();
    let key = |c: usize| -> Vec<u64> {
        std::iter::once(gains.discounts[c].to_bits())
            .chain((0..k).map(|r| costs.get(r, c).to_bits()))
            .collect()
    };
    let mut first: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    (0..k).map(|c| *first.entry(key(c)).or_insert(c)).collect()
}

struct MinSumSearch<'a> {
    costs: &'a CostMatrix,
    gains: &'a DcgGains,
    dcg_reduced: &'a CostMatrix,
    /// Lowest index of each column's interchangeable class.
    column_class: Vec<usize>,
    /// Largest total DCG reduced cost a feasible matching can carry.
    slack: f64,
    threshold: f64,
    lambda: f64,
    best_cost: f64,
    best: Vec<usize>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
    gap_tol: f64,
}

impl MinSumSearch<'_> {
    /// Lagrangian lower bound (root multiplier) of the best completion below
    /// a node; a relaxed completion that meets the quality bound updates the
    /// incumbent. `false` when the node can be pruned.
    fn node_bound(&mut self, rows: &[usize], cols: &[usize], rest: &DcgGains, partial: &[usize], cost: f64, gain: f64) -> bool {
        let need = self.threshold - gain;
        let lambda = self.lambda;
        let shifted = CostMatrix::from_fn(rows.len(), |r, c| {
            self.costs.get(rows[r], cols[c]) - lambda * rest.gain(r, c)
        });
        let Ok(m) = hungarian_min_cost(&shifted) else {
            return false;
        };
        if rest.dcg(&m.assignment) >= need {
            let total = cost
                + m.assignment
                    .iter()
                    .enumerate()
                    .map(|(r, &c)| self.costs.get(rows[r], cols[c]))
                    .sum::<f64>();
            if total < self.best_cost {
                self.best_cost = total;
                self.best = partial.to_vec();
                for (r, &c) in m.assignment.iter().enumerate() {
                    self.best[rows[r]] = cols[c];
                }
            }
        }
        cost + m.objective + lambda * need < self.best_cost - self.gap_tol
    }

    fn descend(&mut self, row: usize, partial: &mut [usize], used: &mut [bool], cost: f64, gain: f64, spent: f64) {
        let k = self.costs.size();
        if row == k {
            if gain >= self.threshold && cost < self.best_cost {
                self.best_cost = cost;
                self.best = partial.to_vec();
            }
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let rows: Vec<usize> = (row..k).collect();
        let cols: Vec<usize> = (0..k).filter(|&c| !used[c]).collect();

        let rest = self.gains.restrict(&rows, &cols);
        if gain + rest.max_dcg() < self.threshold - 1e-12 {
            return;
        }
        if !self.node_bound(&rows, &cols, &rest, partial, cost, gain) {
            return;
        }
        let lambda = self.lambda;

        let mut order = cols.clone();
        order.sort_by(|&a, &b| {
            let ka = self.costs.get(row, a) - lambda * self.gains.gain(row, a);
            let kb = self.costs.get(row, b) - lambda * self.gains.gain(row, b);
            ka.total_cmp(&kb).then(a.cmp(&b))
        });
        for c in order {
            // only the first free column of an interchangeable class is tried
            let class = self.column_class[c];
            if (class..c).any(|x| !used[x] && self.column_class[x] == class) {
                continue;
            }
            let spent_c = spent + self.dcg_reduced.get(row, c);
            if !self.costs.get(row, c).is_finite() || spent_c > self.slack {
                continue;
            }
            used[c] = true;
            partial[row] = c;
            self.descend(
                row + 1,
                partial,
                used,
                cost + self.costs.get(row, c),
                gain + self.gains.gain(row, c),
                spent_c,
            );
            used[c] = false;
            if self.exhausted {
                return;
            }
        }
        partial[row] = usize::MAX;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruteObjective {
    /// Minimize the largest edge weight.
    MinMax,
    /// Minimize the total edge weight.
    MinSum,
    /// Minimize the descending-sorted edge weights lexicographically.
    LexMax,
}

/// Exhaustive reference solver over all `K!` matchings (`K ≤ 8`). Ties on
/// the objective go to the larger DCG, then to the first permutation in
/// lexicographic order.
pub fn brute_force(
    objective: BruteObjective,
    weights: &CostMatrix,
    gains: &DcgGains,
    theta_rho: f64,
) -> Result<MatchResult> {
    let k = weights.size();
    if k > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge {
            size: k,
            max: BRUTE_FORCE_MAX,
        });
    }
    let threshold = theta_rho - FEASIBILITY_TOL;
    let mut best: Option<(Vec<f64>, f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let dcg = gains.dcg(&perm);
        if dcg < threshold {
            continue;
        }
        let key = match objective {
            BruteObjective::MinMax => vec![weights.bottleneck(&perm)],
            BruteObjective::MinSum => vec![weights.total(&perm)],
            BruteObjective::LexMax => weights.sorted_profile(&perm),
        };
        let better = match &best {
            None => true,
            Some((bk, bd, _)) => match lex_cmp(&key, bk) {
                Ordering::Less => true,
                Ordering::Equal => dcg > *bd,
                Ordering::Greater => false,
            },
        };
        if better {
            best = Some((key, dcg, perm));
        }
    }
    let (key, _, assignment) = best.ok_or(Error::Infeasible)?;
    Ok(MatchResult::exact(assignment, key.first().copied().unwrap_or(0.0)))
}

/// Lexicographic comparison of equal-length float vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: f64 = f64::INFINITY;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn hungarian_examples() {
        let r = hungarian_min_cost(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert_eq!(r.objective, 2.0);
        let r = hungarian_min_cost(&m(&[&[0.0, 1.0], &[0.0, 2.0]])).unwrap();
        assert_eq!(r.assignment, vec![1, 0]);
        assert_eq!(r.objective, 1.0);
        assert_eq!(
            hungarian_min_cost(&m(&[&[INF, INF], &[INF, INF]])),
            Err(Error::Infeasible)
        );
        // Hall violation: both rows only reach column 0
        assert_eq!(
            hungarian_min_cost(&m(&[&[1.0, INF], &[2.0, INF]])),
            Err(Error::Infeasible)
        );
        assert_eq!(hungarian_min_cost(&CostMatrix::new(0, 0.0)).unwrap().assignment, Vec::<usize>::new());
    }

    #[test]
    fn max_dcg_examples() {
        let g = DcgGains::new(vec![0.7, 0.3], 2);
        let r = max_dcg_matching(|_, _| true, &g).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert!((r.objective - 0.88928).abs() < 5e-6);
        let r = max_dcg_matching(|row, col| !(row == 0 && col == 0), &g).unwrap();
        assert_eq!(r.assignment, vec![1, 0]);
        assert!((r.objective - 0.74165).abs() < 5e-6);
        let r = max_dcg_matching(|_, _| true, &DcgGains::new(vec![1.0], 1)).unwrap();
        assert_eq!(r.assignment, vec![0]);
    }

    #[test]
    fn bottleneck_examples() {
        let g = DcgGains::new(vec![0.6, 0.4], 2);
        let d = m(&[&[0.5, 0.1], &[0.2, 0.6]]);
        let r = bottleneck_with_quality(&d, &g, 0.0).unwrap();
        assert_eq!(r.objective, 0.2);
        assert_eq!(r.assignment, vec![1, 0]);

        // the quality bound pins the ideal ordering
        let ideal = g.max_dcg();
        let r = bottleneck_with_quality(&d, &g, ideal).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert_eq!(r.objective, 0.6);

        // constant d: every matching ties, max DCG wins
        let r = bottleneck_with_quality(&CostMatrix::new(2, 0.3), &g, 0.0).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert_eq!(r.objective, 0.3);

        assert_eq!(
            bottleneck_with_quality(&d, &g, ideal + 1e-3),
            Err(Error::Infeasible)
        );
    }

    #[test]
    fn refine_examples() {
        let g = DcgGains::new(vec![0.5, 0.5], 2);
        let d = m(&[&[0.5, 0.5], &[0.1, 0.4]]);
        let base = bottleneck_with_quality(&d, &g, 0.0).unwrap();
        assert_eq!(base.objective, 0.5);
        let refined = lexicographic_refine(&d, &g, 0.0, &base);
        assert_eq!(refined.assignment, vec![1, 0]);
        assert_eq!(d.sorted_profile(&refined.assignment), vec![0.5, 0.1]);

        let d = m(&[&[0.1, 0.9], &[0.9, 0.2]]);
        let base = bottleneck_with_quality(&d, &g, 0.0).unwrap();
        assert_eq!(lexicographic_refine(&d, &g, 0.0, &base), base);

        let one = CostMatrix::new(1, 0.7);
        let g1 = DcgGains::new(vec![1.0], 1);
        let base = bottleneck_with_quality(&one, &g1, 0.0).unwrap();
        assert_eq!(lexicographic_refine(&one, &g1, 0.0, &base).assignment, vec![0]);
    }

    #[test]
    fn min_sum_examples() {
        let g = DcgGains::new(vec![0.9, 0.1], 2);
        let c = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        // θρ = 0 is the plain assignment problem
        let r = constrained_min_sum(&c, &g, 0.0).unwrap();
        assert_eq!(r, hungarian_min_cost(&c).unwrap());
        // the cheap matching puts the relevant row second and fails quality
        let ideal = g.max_dcg();
        let r = constrained_min_sum(&c, &g, 0.95 * ideal).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert_eq!(r.objective, 2.0);
        assert_eq!(constrained_min_sum(&c, &g, ideal + 0.01), Err(Error::Infeasible));
    }

    #[test]
    fn min_sum_full_quality_with_flat_tail() {
        // 20 rows, 10 scored slots and 10 interchangeable zero-gain slots;
        // at θ = 1 the top rows must sit in ideal order, the rest is free
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 20;
        let mut rel: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.5).collect();
        rel.sort_by(|a, b| b.total_cmp(a));
        let tail: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let costs = CostMatrix::from_fn(k, |r, c| if c < 10 { rng.random() } else { tail[r] });
        let gains = DcgGains::new(rel, 10);
        let r = constrained_min_sum(&costs, &gains, gains.max_dcg()).unwrap();
        let expected: f64 = (0..10).map(|r| costs.get(r, r)).sum::<f64>() + tail[10..].iter().sum::<f64>();
        assert!(r.proven_optimal);
        assert!((r.objective - expected).abs() < 1e-12);
        assert!((0..10).all(|row| r.assignment[row] == row));
    }

    #[test]
    fn brute_force_limits() {
        let d = CostMatrix::new(9, 0.0);
        let g = DcgGains::new(vec![1.0 / 9.0; 9], 9);
        assert_eq!(
            brute_force(BruteObjective::MinMax, &d, &g, 0.0),
            Err(Error::TooLarge { size: 9, max: 8 })
        );
        let d = m(&[&[0.5, 0.1], &[0.2, 0.6]]);
        let g = DcgGains::new(vec![0.6, 0.4], 2);
        assert_eq!(brute_force(BruteObjective::MinMax, &d, &g, 0.0).unwrap().objective, 0.2);
        assert_eq!(brute_force(BruteObjective::MinSum, &d, &g, 0.0).unwrap().objective, 0.30000000000000004);
    }

    fn random_instance(rng: &mut ChaCha8Rng, k: usize, coarse: bool) -> (CostMatrix, DcgGains, f64) {
        let d = CostMatrix::from_fn(k, |_, _| {
            if coarse {
                rng.random_range(0..4) as f64 * 0.25
            } else {
                rng.random::<f64>()
            }
        });
        let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let total: f64 = raw.iter().sum();
        let depth = rng.random_range(1..=k);
        let g = DcgGains::new(raw.iter().map(|x| x / total).collect(), depth);
        let theta_rho = rng.random::<f64>() * g.max_dcg();
        (d, g, theta_rho)
    }

    #[test]
    fn solvers_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..300 {
            let k = rng.random_range(1..=6);
            let (d, g, theta_rho) = random_instance(&mut rng, k, case % 2 == 0);
            let oracle = brute_force(BruteObjective::MinMax, &d, &g, theta_rho);
            let ours = bottleneck_with_quality(&d, &g, theta_rho);
            match (oracle, ours) {
                (Ok(o), Ok(s)) => {
                    assert!((o.objective - s.objective).abs() <= 1e-9, "case {case}");
                    assert!(g.dcg(&s.assignment) >= theta_rho - FEASIBILITY_TOL);
                    let refined = lexicographic_refine(&d, &g, theta_rho, &s);
                    assert_eq!(refined.objective, s.objective);
                    assert!(lex_cmp(&d.sorted_profile(&refined.assignment), &d.sorted_profile(&s.assignment)).is_le());
                    assert!(g.dcg(&refined.assignment) >= theta_rho - FEASIBILITY_TOL);
                    let lex = brute_force(BruteObjective::LexMax, &d, &g, theta_rho).unwrap();
                    assert!(lex_cmp(&d.sorted_profile(&lex.assignment), &d.sorted_profile(&refined.assignment)).is_le());
                }
                (Err(a), Err(b)) => assert_eq!(a, b),
                (a, b) => panic!("feasibility disagrees on case {case}: {a:?} vs {b:?}"),
            }
            let oracle = brute_force(BruteObjective::MinSum, &d, &g, theta_rho);
            let ours = constrained_min_sum(&d, &g, theta_rho);
            match (oracle, ours) {
                (Ok(o), Ok(s)) => {
                    assert!((o.objective - s.objective).abs() <= 1e-9, "case {case}: {} vs {}", o.objective, s.objective);
                    assert!(s.proven_optimal);
                }
                (Err(a), Err(b)) => assert_eq!(a, b),
                (a, b) => panic!("feasibility disagrees on case {case}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn bottleneck_monotone_in_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.random_range(2..=7);
            let (d, g, _) = random_instance(&mut rng, k, false);
            let ideal = g.max_dcg();
            let mut prev = f64::INFINITY;
            for step in (0..=4).rev() {
                // thresholds decreasing from ideal to 0
                let theta_rho = ideal * step as f64 / 4.0;
                let z = bottleneck_with_quality(&d, &g, theta_rho).unwrap().objective;
                assert!(z <= prev);
                prev = z;
            }
        }
    }

    proptest! {
        // Permuting rows and columns permutes the solution with the same cost.
        #[test]
        fn hungarian_permutation_equivariant(seed in 0u64..10_000, k in 1usize..7) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = CostMatrix::from_fn(k, |_, _| rng.random::<f64>());
            let mut rp: Vec<usize> = (0..k).collect();
            let mut cp: Vec<usize> = (0..k).collect();
            rp.shuffle(&mut rng);
            cp.shuffle(&mut rng);
            let permuted = c.restrict(&rp, &cp);
            let a = hungarian_min_cost(&c).unwrap();
            let b = hungarian_min_cost(&permuted).unwrap();
            prop_assert!((a.objective - b.objective).abs() < 1e-12);
            let brute = brute_force(BruteObjective::MinSum, &c, &DcgGains::new(vec![0.0; k], 0), 0.0).unwrap();
            prop_assert!((a.objective - brute.objective).abs() < 1e-12);
        }
    }
}
