//! Acceptance checks, one line per criterion. Runs as a plain binary
//! (`harness = false`) so the lines are always printed; exits non-zero if
//! any criterion fails.

use std::time::{Duration, Instant};

use fairrank::assign::bottleneck_with_quality;
use fairrank::divergence::DivergenceKind;
use fairrank::io::{read_stream, report_json, save_stream, write_stream, RunFile};
use fairrank::metrics::{fairwashing_delta, individual_unfairness, Scope};
use fairrank::model::{dcg_at_k, ideal_ranking, AttentionModel, Dataset, Ledger, PolarityMode, QueryEvent, Ranking};
use fairrank::rerank::{
    build_step, evaluate_run, horizon_objective, rerank_offline, rerank_online, solve_step, Objective, RerankConfig,
};
use fairrank::sweep::{run_sweep, SweepSpec};
use fairrank::synth::{gen_random_instance, generate, PolarityLaw, RandomInstance, SynthSpec};
use fairrank::verify;
use fairrank::MetricValue;
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.pass &= took < limit;
    o.detail = format!("{} [{:.1}s, limit {}s]", o.detail, took.as_secs_f64(), limit.as_secs());
    o
}

/// Solver objectives match the K! oracle within 1e-9, same feasibility.
fn c1_solver_exactness() -> Outcome {
    timed(Duration::from_secs(60), || {
        let r = verify::solver(200, SEED).unwrap();
        outcome(
            r.passed(),
            format!(
                "{} checks, minmax mismatches {}, minsum mismatches {}",
                r.checks,
                r.count("minmax"),
                r.count("minsum")
            ),
        )
    })
}

/// Group ≤ individual unfairness + 1e-9 on 500 signed instances.
fn c2_group_bounded_by_individual() -> Outcome {
    let r = verify::group_bound(500, SEED).unwrap();
    let per_kind: Vec<String> = DivergenceKind::ALL
        .iter()
        .map(|k| {
            let v: usize = PolarityMode::ALL
                .iter()
                .map(|m| r.count(&format!("{k}/{}", m.as_str())))
                .sum();
            format!("{k}: {v} violations")
        })
        .collect();
    outcome(r.passed(), format!("{} checks; {}", r.checks, per_kind.join(", ")))
}

/// Monte Carlo tails (1e5 trials) ≤ bound + 3 SE.
fn c3_concentration_bounds() -> Outcome {
    timed(Duration::from_secs(120), || {
        let r = verify::bounds(100_000, SEED).unwrap();
        outcome(
            r.passed(),
            format!(
                "{} grid points, chernoff violations {}, hoeffding violations {}",
                r.checks,
                r.count("chernoff"),
                r.count("hoeffding")
            ),
        )
    })
}

/// Two individuals, a positive and a negative query with equal relevance,
/// all attention on the top slot; `a` tops the positive query and `b` the
/// negative one.
fn c4_fairwashing() -> Outcome {
    let attention = AttentionModel::from_weights(vec![1.0, 0.0]).unwrap();
    let mut ledger = Ledger::new(2, 1);
    let pos = QueryEvent::new("pos", 1, vec![1.0], vec![0.5, 0.5]).unwrap();
    let neg = QueryEvent::new("neg", 2, vec![-1.0], vec![0.5, 0.5]).unwrap();
    ledger.update(&pos, &Ranking::new(vec![0, 1]).unwrap(), &attention).unwrap();
    ledger.update(&neg, &Ranking::new(vec![1, 0]).unwrap(), &attention).unwrap();
    let agnostic = individual_unfairness(&ledger, DivergenceKind::L1, Scope::All, PolarityMode::Agnostic).unwrap();
    let aware = individual_unfairness(&ledger, DivergenceKind::L1, Scope::All, PolarityMode::Aware).unwrap();
    let delta = fairwashing_delta(aware, agnostic);
    outcome(
        agnostic == 0.0 && aware == 1.0 && delta == MetricValue::Undefined,
        format!("agnostic {agnostic}, aware {aware}, fairwashing {delta:?}"),
    )
}

fn synth_binary_runs() -> (Dataset, Vec<QueryEvent>, RerankConfig, fairrank::RunResult, fairrank::RunResult) {
    let (ds, stream) = generate(&SynthSpec::binary(200, 16, SEED)).unwrap();
    let config = RerankConfig {
        kind: DivergenceKind::L1,
        objective: Objective::MinMaxLex,
        theta: 0.8,
        k_rerank: 50,
        k_attention: 10,
        k_eval: 10,
        polarity_mode: PolarityMode::Agnostic,
        seed: SEED,
    };
    let base = rerank_online(&ds, &stream, &RerankConfig { objective: Objective::None, ..config.clone() }).unwrap();
    let run = rerank_online(&ds, &stream, &config).unwrap();
    (ds, stream, config, base, run)
}

/// Online min-max L1 re-ranking on synth-binary cuts agnostic individual L1 by ≥ 50%.
fn c5_synth_binary(runs: &(Dataset, Vec<QueryEvent>, RerankConfig, fairrank::RunResult, fairrank::RunResult), took: Duration) -> Outcome {
    let (_, _, _, base, run) = runs;
    let pre = individual_unfairness(&base.ledger, DivergenceKind::L1, Scope::All, PolarityMode::Agnostic).unwrap();
    let post = individual_unfairness(&run.ledger, DivergenceKind::L1, Scope::All, PolarityMode::Agnostic).unwrap();
    let reduction = (pre - post) / pre;
    outcome(
        reduction >= 0.5 && took < Duration::from_secs(120),
        format!(
            "pass-through {pre:.6}, re-ranked {post:.6}, reduction {:.2}% (floor 50%) [{:.1}s, limit 120s]",
            100.0 * reduction,
            took.as_secs_f64()
        ),
    )
}

/// nDCG@10 ≥ θ − 1e-9 on every non-fallback query of criterion 5 and a sweep.
fn c6_quality(runs: &(Dataset, Vec<QueryEvent>, RerankConfig, fairrank::RunResult, fairrank::RunResult)) -> Outcome {
    let (_, _, config, _, run) = runs;
    let mut checked = 0;
    let mut bad = 0;
    for (x, fb) in run.ndcg.iter().zip(&run.fallback) {
        if !fb {
            checked += 1;
            bad += usize::from(*x < config.theta - 1e-9);
        }
    }
    let (ds, stream) = generate(&SynthSpec::continuous(60, 8, SEED)).unwrap();
    let spec = SweepSpec {
        thetas: vec![0.5, 0.7, 0.8, 0.9, 1.0],
        objectives: vec![Objective::MinMax, Objective::MinMaxLex, Objective::MinSum, Objective::None],
        repeats: 2,
        seed: SEED,
        base: RerankConfig {
            k_rerank: 20,
            ..RerankConfig::default()
        },
        ..SweepSpec::default()
    };
    let rows = run_sweep(&ds, &stream, &spec).unwrap();
    let sweep_bad = rows.iter().filter(|r| !r.quality_ok).count();
    let fallbacks: usize = rows.iter().map(|r| r.fallbacks).sum::<usize>() + run.fallbacks();
    outcome(
        bad == 0 && sweep_bad == 0,
        format!(
            "{checked} queries in the synth-binary run ({bad} below θ), {} sweep runs ({sweep_bad} with a query below θ), {fallbacks} fallbacks",
            rows.len()
        ),
    )
}

/// Sort-based W1 equals the transport oracle within 1e-9.
fn c7_w1() -> Outcome {
    let r = verify::w1(200, SEED).unwrap();
    outcome(r.passed(), format!("{} pairs, {} mismatches", r.checks, r.violations.len()))
}

/// Brute-force end-of-stream optimum over every quality-feasible joint
/// assignment of the prefiltered candidates.
fn joint_oracle(ds: &Dataset, stream: &[QueryEvent], config: &RerankConfig) -> f64 {
    let n = ds.len();
    let attention = AttentionModel::new(n, config.k_attention).unwrap();
    let k_eval = config.k_eval.min(n);
    let per_query: Vec<Vec<Ranking>> = stream
        .iter()
        .map(|q| {
            let ideal = ideal_ranking(q);
            let rho = dcg_at_k(ideal.order(), &q.relevance, k_eval);
            let k = config.k_rerank.min(n);
            ideal.order()[..k]
                .iter()
                .copied()
                .permutations(k)
                .map(|head| {
                    let mut order = head;
                    order.extend_from_slice(&ideal.order()[k..]);
                    order
                })
                .filter(|o| dcg_at_k(o, &q.relevance, k_eval) >= config.theta * rho - 1e-9)
                .map(|o| Ranking::new(o).unwrap())
                .collect()
        })
        .collect();
    per_query
        .iter()
        .multi_cartesian_product()
        .map(|choice| {
            let mut ledger = Ledger::new(n, 1);
            for (q, r) in stream.iter().zip(choice) {
                ledger.update(q, r, &attention).unwrap();
            }
            individual_unfairness(&ledger, config.kind, Scope::All, config.polarity_mode).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Offline ≤ online, and offline equals the joint oracle, on 50 tiny
/// instances.
fn c8_offline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worse = 0;
    let mut mismatch = 0;
    let mut strictly_better = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let k_re = rng.random_range(2..=4usize.min(n));
        let (ds, stream) = gen_random_instance(&RandomInstance {
            n,
            groups: 1,
            queries: rng.random_range(1..=3),
            components: 1,
            law: PolarityLaw::Signed,
            seed: rng.random(),
        })
        .unwrap();
        let k_att = rng.random_range(1..=k_re);
        let config = RerankConfig {
            kind: DivergenceKind::ALL[rng.random_range(0..3)],
            objective: Objective::MinMax,
            theta: [0.5, 0.7, 0.9][rng.random_range(0..3)],
            k_rerank: k_re,
            k_attention: k_att,
            k_eval: k_att,
            polarity_mode: PolarityMode::Aware,
            seed: SEED,
        };
        let online = rerank_online(&ds, &stream, &config).unwrap();
        let offline = rerank_offline(&ds, &stream, &config, 10).unwrap();
        let on = horizon_objective(&online.ledger, &config);
        let off = horizon_objective(&offline.ledger, &config);
        let oracle = joint_oracle(&ds, &stream, &config);
        worse += usize::from(off > on + 1e-12);
        mismatch += usize::from((off - oracle).abs() > 1e-9);
        strictly_better += usize::from(off < on - 1e-12);
    }
    outcome(
        worse == 0 && mismatch == 0,
        format!("50 instances: offline worse {worse}, oracle mismatches {mismatch}, offline strictly better {strictly_better}"),
    )
}

/// Per-step min-max objective non-increasing as θ decreases, on real ledger
/// states.
fn c9_theta_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let thetas = [1.0, 0.9, 0.8, 0.7, 0.6];
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=12);
        let (_, stream) = gen_random_instance(&RandomInstance {
            n,
            groups: 1,
            queries: rng.random_range(2..=6),
            components: 1,
            law: PolarityLaw::Continuous,
            seed: rng.random(),
        })
        .unwrap();
        let k_re = rng.random_range(2..=n.min(7));
        let k_att = rng.random_range(1..=k_re);
        let attention = AttentionModel::new(n, k_att).unwrap();
        let mut ledger = Ledger::new(n, 1);
        let (last, history) = stream.split_last().unwrap();
        for q in history {
            let mut order: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            ledger.update(q, &Ranking::new(order).unwrap(), &attention).unwrap();
        }
        let kind = DivergenceKind::ALL[rng.random_range(0..3)];
        let mut prev = f64::INFINITY;
        for theta in thetas {
            let config = RerankConfig {
                kind,
                objective: Objective::MinMax,
                theta,
                k_rerank: k_re,
                k_attention: k_att,
                k_eval: k_att,
                ..RerankConfig::default()
            };
            let z = solve_step(&build_step(&ledger, last, &attention, &config), Objective::MinMax)
                .unwrap()
                .objective;
            violations += usize::from(z > prev);
            prev = z;
        }
    }
    // also on free-standing random subproblems
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    for _ in 0..100 {
        let (d, gains, _) = verify::random_subproblem(&mut rng);
        let ideal = gains.max_dcg();
        let mut prev = f64::INFINITY;
        for theta in thetas {
            let z = bottleneck_with_quality(&d, &gains, theta * ideal).unwrap().objective;
            violations += usize::from(z > prev);
            prev = z;
        }
    }
    outcome(violations == 0, format!("200 subproblems × 5 θ values, {violations} increases"))
}

/// Same seed ⇒ bitwise-identical reports; streams round-trip byte-for-byte.
fn c10_determinism() -> Outcome {
    let report = || {
        let (ds, stream) = generate(&SynthSpec::continuous(40, 8, SEED)).unwrap();
        let config = RerankConfig {
            kind: DivergenceKind::W1,
            k_rerank: 15,
            ..RerankConfig::default()
        };
        let base = rerank_online(&ds, &stream, &RerankConfig { objective: Objective::None, ..config.clone() }).unwrap();
        let run = rerank_offline(&ds, &stream, &config, 2).unwrap();
        let metrics = evaluate_run(&run, &ds, Some(&base));
        let doc = report_json(&metrics, &RunFile::new(&run, ds.ids(), &stream, true)).unwrap();
        serde_json::to_string(&doc).unwrap()
    };
    let same_report = report() == report();

    let dir = tempfile::tempdir().unwrap();
    let mut round_trips = 0;
    let mut total = 0;
    for spec in [SynthSpec::binary(200, 16, SEED), SynthSpec::continuous(50, 10, SEED)] {
        let (ds, stream) = generate(&spec).unwrap();
        let path = dir.path().join("stream.jsonl");
        save_stream(&path, &ds, &stream).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let loaded = read_stream(bytes.as_slice(), false).unwrap();
        let mut again = Vec::new();
        write_stream(&mut again, &ds, &loaded.queries).unwrap();
        total += 1;
        round_trips += usize::from(again == bytes && loaded.queries == stream);
    }
    outcome(
        same_report && round_trips == total,
        format!("reports identical: {same_report}; byte-identical round trips {round_trips}/{total}"),
    )
}

fn report(k: usize, name: &str, o: &Outcome, took: Duration) -> bool {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {k:>2} {verdict}: {name}: {} ({:.1}s)", o.detail, took.as_secs_f64());
    o.pass
}

fn main() {
    let mut passed = 0;
    let mut failed = 0;
    let mut record = |k: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        if report(k, name, &o, start.elapsed()) {
            passed += 1;
        } else {
            failed += 1;
        }
    };
    record(1, "solver exactness", &mut c1_solver_exactness);
    record(2, "group bounded by individual", &mut c2_group_bounded_by_individual);
    record(3, "concentration bounds", &mut c3_concentration_bounds);
    record(4, "fairwashing construction", &mut c4_fairwashing);
    let start = Instant::now();
    let runs = synth_binary_runs();
    let took = start.elapsed();
    record(5, "synth-binary improvement", &mut || c5_synth_binary(&runs, took));
    record(6, "quality constraint", &mut || c6_quality(&runs));
    record(7, "W1 correctness", &mut c7_w1);
    record(8, "offline vs online", &mut c8_offline);
    record(9, "per-step theta monotonicity", &mut c9_theta_monotone);
    record(10, "determinism and round-trip", &mut c10_determinism);

    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
