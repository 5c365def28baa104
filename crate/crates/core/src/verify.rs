//! Self-check suites: group-vs-individual unfairness, tail bounds against
//! Monte Carlo, solvers against brute force, and sort-based `W1` against a
//! transport oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assign::{
    bottleneck_with_quality, brute_force, constrained_min_sum, hungarian_min_cost, BruteObjective, CostMatrix,
    DcgGains,
};
use crate::bounds::{binomial_se, chernoff_bound, hoeffding_bound, monte_carlo_tail, BernoulliStream, TailMode};
use crate::divergence::{d_w1, DivergenceKind};
use crate::error::{Error, Result};
use crate::metrics::{group_unfairness, individual_unfairness, Scope};
use crate::model::{AttentionModel, Ledger, PolarityMode, Ranking};
use crate::synth::{gen_random_instance, PolarityLaw, RandomInstance};
use crate::FEASIBILITY_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    GroupBound,
    Bounds,
    Solver,
    W1,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::GroupBound, Suite::Bounds, Suite::Solver, Suite::W1];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::GroupBound => "group-bound",
            Suite::Bounds => "bounds",
            Suite::Solver => "solver",
            Suite::W1 => "w1",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub instance: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        SuiteReport {
            suite,
            checks: 0,
            violations: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, check: &str, instance: usize, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(Violation {
                check: check.to_string(),
                instance,
                detail: detail(),
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, check: &str) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

pub fn run_suite(suite: Suite, instances: usize, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::GroupBound => group_bound(instances, seed),
        Suite::Bounds => bounds(instances as u64, seed),
        Suite::Solver => solver(instances, seed),
        Suite::W1 => w1(instances, seed),
    }
}

/// Group unfairness never exceeds individual unfairness, on random
/// instances (`n ≤ 20`, `G ≤ 5`, `T ≤ 10`, signed polarities, random
/// rankings), for every divergence and both modes. Checks are named
/// `<kind>/<mode>`. The bound is exact for `L1`; for `W1` and `L2Var` it is
/// only observed, and structured rankings can break it.
pub fn group_bound(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::GroupBound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances {
        let n = rng.random_range(2..=20);
        let spec = RandomInstance {
            n,
            groups: rng.random_range(1..=5usize.min(n)),
            queries: rng.random_range(1..=10),
            components: 1,
            law: PolarityLaw::Signed,
            seed: rng.random(),
        };
        let (dataset, stream) = gen_random_instance(&spec)?;
        let attention = AttentionModel::new(n, rng.random_range(1..=n))?;
        let mut ledger = Ledger::new(n, 1);
        for q in &stream {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            ledger.update(q, &Ranking::new(order)?, &attention)?;
        }
        for kind in DivergenceKind::ALL {
            for mode in PolarityMode::ALL {
                let ind = individual_unfairness(&ledger, kind, Scope::All, mode)?;
                let grp = group_unfairness(&ledger, &dataset, kind, mode);
                report.check(grp <= ind + 1e-9, &format!("{kind}/{}", mode.as_str()), k, || {
                    format!("{spec:?}: group {grp} > individual {ind}")
                });
            }
        }
    }
    Ok(report)
}

/// Monte Carlo tails against both bounds over `T ∈ {5, 20, 50}`,
/// `p ∈ {0.1, 0.5}` and a δ grid, allowing 3 binomial standard errors.
pub fn bounds(trials: u64, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Bounds);
    let mut k = 0;
    for t in [5usize, 20, 50] {
        for p in [0.1, 0.5] {
            let unit = BernoulliStream::unit(vec![p; t])?;
            let ones = vec![1.0; t];
            let expected = unit.expected(&ones);
            for delta in [0.1, 0.3, 0.5, 1.0, 2.0] {
                let tail = monte_carlo_tail(&unit, &ones, delta, TailMode::Relative, trials, seed ^ k as u64)?;
                let bound = chernoff_bound(expected, delta)?;
                let slack = 3.0 * binomial_se(tail, trials);
                report.check(tail <= bound + slack, "chernoff", k, || {
                    format!("T={t} p={p} δ={delta}: tail {tail} > bound {bound} + {slack}")
                });
                k += 1;
            }
            let signed = BernoulliStream::new(vec![p; t], vec![(-1.0, 1.0); t])?;
            let etas: Vec<f64> = (0..t).map(|s| if s % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let scale = (t as f64).sqrt();
            for delta in [0.25, 0.5, 1.0, 1.5, 2.0] {
                let delta = delta * scale;
                let tail = monte_carlo_tail(&signed, &etas, delta, TailMode::Absolute, trials, seed ^ k as u64)?;
                let bound = hoeffding_bound(signed.ranges(), delta)?;
                let slack = 3.0 * binomial_se(tail, trials);
                report.check(tail <= bound + slack, "hoeffding", k, || {
                    format!("T={t} p={p} δ={delta}: tail {tail} > bound {bound} + {slack}")
                });
                k += 1;
            }
        }
    }
    Ok(report)
}

/// Random per-step subproblem: `K ∈ 2..=7`, uniform divergences (coarse
/// on every other draw, to force ties), flat-Dirichlet relevance, random
/// evaluation depth and `θρ` uniform on `[0, ideal DCG]`.
pub fn random_subproblem(rng: &mut ChaCha8Rng) -> (CostMatrix, DcgGains, f64) {
    let k = rng.random_range(2..=7);
    let coarse = rng.random_bool(0.5);
    let d = CostMatrix::from_fn(k, |_, _| {
        if coarse {
            f64::from(rng.random_range(0..5u8)) * 0.25
        } else {
            rng.random::<f64>()
        }
    });
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().max(1e-9)).collect();
    let total: f64 = raw.iter().sum();
    let depth = rng.random_range(1..=k);
    let gains = DcgGains::new(raw.iter().map(|x| x / total).collect(), depth);
    let theta_rho = rng.random::<f64>() * gains.max_dcg();
    (d, gains, theta_rho)
}

/// Dedicated solvers against the `K!` oracle (objective within `1e-9`,
/// identical feasibility verdicts). Each instance also gets a `θρ` just
/// above the ideal DCG, which must be infeasible.
pub fn solver(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Solver);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances {
        let (d, gains, theta_rho) = random_subproblem(&mut rng);
        for theta_rho in [theta_rho, gains.max_dcg() + 1e-6] {
            for (name, objective) in [("minmax", BruteObjective::MinMax), ("minsum", BruteObjective::MinSum)] {
                let oracle = brute_force(objective, &d, &gains, theta_rho);
                let ours = match objective {
                    BruteObjective::MinMax => bottleneck_with_quality(&d, &gains, theta_rho),
                    _ => constrained_min_sum(&d, &gains, theta_rho),
                };
                let ok = match (&oracle, &ours) {
                    (Ok(o), Ok(s)) => {
                        (o.objective - s.objective).abs() <= 1e-9
                            && gains.dcg(&s.assignment) >= theta_rho - FEASIBILITY_TOL
                    }
                    (Err(Error::Infeasible), Err(Error::Infeasible)) => true,
                    _ => false,
                };
                report.check(ok, name, k, || format!("oracle {oracle:?}, solver {ours:?}"));
            }
        }
    }
    Ok(report)
}

/// Sort-based `W1` against a min-cost matching between the two empirical
/// measures (`T ≤ 8`).
pub fn w1(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::W1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances {
        let t = rng.random_range(1..=8);
        let signed = rng.random_bool(0.5);
        let mut draw = || {
            let x: f64 = rng.random();
            if signed {
                2.0 * x - 1.0
            } else {
                x
            }
        };
        let a: Vec<f64> = (0..t).map(|_| draw()).collect();
        let r: Vec<f64> = (0..t).map(|_| draw()).collect();
        let mut a_sorted = a.clone();
        let mut r_sorted = r.clone();
        a_sorted.sort_by(f64::total_cmp);
        r_sorted.sort_by(f64::total_cmp);
        let fast = d_w1(&a_sorted, &r_sorted)?;
        let oracle = transport_w1(&a, &r)?;
        report.check((fast - oracle).abs() <= 1e-9, "w1", k, || {
            format!("a={a:?} r={r:?}: sorted {fast} vs transport {oracle}")
        });
    }
    Ok(report)
}

/// `W1` between two equal-size uniform empirical measures as an assignment
/// problem on `|a_i − r_j|`.
pub fn transport_w1(a: &[f64], r: &[f64]) -> Result<f64> {
    if a.len() != r.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: r.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let costs = CostMatrix::from_fn(a.len(), |i, j| (a[i] - r[j]).abs());
    Ok(hungarian_min_cost(&costs)?.objective / a.len() as f64)
}
