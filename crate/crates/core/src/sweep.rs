//! Grid sweeps over θ, divergence kinds, objectives and polarity modes,
//! with bootstrap resamples of the query stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::metrics::{group_unfairness, iaa, individual_unfairness, Scope};
use crate::model::{Dataset, PolarityMode, QueryEvent};
use crate::rerank::{rerank_online, Objective, RerankConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub thetas: Vec<f64>,
    pub kinds: Vec<DivergenceKind>,
    pub objectives: Vec<Objective>,
    pub polarity_modes: Vec<PolarityMode>,
    /// Bootstrap resamples per grid point; 0 runs the stream as given.
    pub repeats: usize,
    pub seed: u64,
    /// Template for depths; its kind/objective/theta/mode are overridden.
    pub base: RerankConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            thetas: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            kinds: DivergenceKind::ALL.to_vec(),
            objectives: vec![Objective::MinMaxLex, Objective::MinSum, Objective::None],
            polarity_modes: PolarityMode::ALL.to_vec(),
            repeats: 0,
            seed: 0,
            base: RerankConfig::default(),
        }
    }
}

/// One grid point. Unfairness columns are measured in `polarity_mode`, the
/// same mode the run optimized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub kind: DivergenceKind,
    pub objective: Objective,
    pub repeat: usize,
    pub polarity_mode: PolarityMode,
    pub individual_unfairness: f64,
    pub group_unfairness: f64,
    pub iaa: f64,
    pub mean_ndcg: f64,
    pub min_ndcg: f64,
    pub fallbacks: usize,
    /// Every non-fallback query kept nDCG ≥ θ − 1e-9.
    pub quality_ok: bool,
}

/// Resample of `stream` with replacement, renumbered `t = 1..T`.
pub fn bootstrap(stream: &[QueryEvent], seed: u64, repeat: usize) -> Vec<QueryEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64 + 1);
    (0..stream.len())
        .map(|k| {
            let mut q = stream[rng.random_range(0..stream.len())].clone();
            q.t = k as u64 + 1;
            q
        })
        .collect()
}

pub fn run_sweep(dataset: &Dataset, stream: &[QueryEvent], spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.thetas.is_empty() || spec.kinds.is_empty() || spec.objectives.is_empty() || spec.polarity_modes.is_empty() {
        return Err(Error::Validation("sweep grid has an empty axis".into()));
    }
    let streams: Vec<Vec<QueryEvent>> = if spec.repeats == 0 {
        vec![stream.to_vec()]
    } else {
        (0..spec.repeats).map(|r| bootstrap(stream, spec.seed, r)).collect()
    };
    let mut points = Vec::new();
    for &theta in &spec.thetas {
        for &kind in &spec.kinds {
            for &objective in &spec.objectives {
                for repeat in 0..streams.len() {
                    for &mode in &spec.polarity_modes {
                        points.push((theta, kind, objective, repeat, mode));
                    }
                }
            }
        }
    }
    points
        .into_par_iter()
        .map(|(theta, kind, objective, repeat, mode)| {
            let config = RerankConfig {
                kind,
                objective,
                theta,
                polarity_mode: mode,
                seed: spec.seed,
                ..spec.base.clone()
            };
            let run = rerank_online(dataset, &streams[repeat], &config)?;
            let quality_ok = run
                .ndcg
                .iter()
                .zip(&run.fallback)
                .all(|(&x, &fb)| fb || x >= theta - crate::FEASIBILITY_TOL);
            let (mean_ndcg, min_ndcg) = if run.ndcg.is_empty() {
                (1.0, 1.0)
            } else {
                (
                    run.ndcg.iter().sum::<f64>() / run.ndcg.len() as f64,
                    run.ndcg.iter().copied().fold(f64::INFINITY, f64::min),
                )
            };
            Ok(SweepRow {
                theta,
                kind,
                objective,
                repeat,
                polarity_mode: mode,
                individual_unfairness: individual_unfairness(&run.ledger, kind, Scope::All, mode)?,
                group_unfairness: group_unfairness(&run.ledger, dataset, kind, mode),
                iaa: iaa(&run.ledger, mode),
                mean_ndcg,
                min_ndcg,
                fallbacks: run.fallbacks(),
                quality_ok,
            })
        })
        .collect()
}

pub fn write_sweep_csv(w: impl std::io::Write, rows: &[SweepRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
