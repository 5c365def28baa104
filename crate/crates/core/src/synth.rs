//! Synthetic datasets and random property-test instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_scores, Dataset, QueryEvent};

pub const FEMALE: &str = "female";
pub const MALE: &str = "male";

/// Raw score floor applied to continuous draws before normalization.
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Binary,
    Continuous,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Variant::Binary),
            "continuous" | "cont" => Ok(Variant::Continuous),
            other => Err(Error::Spec(format!("unknown variant `{other}`"))),
        }
    }
}

/// Query polarity sequence of the synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolarityPattern {
    /// `+1, −1, +1, …`
    Alternating,
    AllPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub queries: usize,
    pub seed: u64,
    pub variant: Variant,
    pub polarity: PolarityPattern,
    /// Score std of the male group (continuous variant).
    pub std_male: f64,
    /// Score std of the female group (continuous variant).
    pub std_female: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 200,
            queries: 16,
            seed: 0,
            variant: Variant::Binary,
            polarity: PolarityPattern::Alternating,
            std_male: 0.2,
            std_female: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn binary(n: usize, queries: usize, seed: u64) -> Self {
        SynthSpec {
            n,
            queries,
            seed,
            ..SynthSpec::default()
        }
    }

    pub fn continuous(n: usize, queries: usize, seed: u64) -> Self {
        SynthSpec {
            variant: Variant::Continuous,
            ..SynthSpec::binary(n, queries, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n % 2 != 0 {
            return Err(Error::Spec(format!("n must be positive and even, got {}", self.n)));
        }
        if self.queries == 0 || self.queries % 2 != 0 {
            return Err(Error::Spec(format!(
                "query count must be positive and even, got {}",
                self.queries
            )));
        }
        if !(self.std_male >= 0.0 && self.std_female >= 0.0) {
            return Err(Error::Spec("score standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    fn polarity(&self, t: usize) -> f64 {
        match self.polarity {
            PolarityPattern::Alternating if t % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }

    /// `n/2` females `f000…` and `n/2` males `m000…`.
    fn dataset(&self) -> Result<Dataset> {
        let half = self.n / 2;
        let width = (half.saturating_sub(1)).to_string().len().max(3);
        let pairs = (0..half)
            .map(|k| (format!("f{k:0width$}"), FEMALE.to_string()))
            .chain((0..half).map(|k| (format!("m{k:0width$}"), MALE.to_string())));
        Dataset::new(pairs)
    }
}

fn query_id(t: usize, total: usize) -> String {
    let width = total.to_string().len().max(3);
    format!("q{t:0width$}")
}

/// Dispatches on `spec.variant`.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Vec<QueryEvent>)> {
    match spec.variant {
        Variant::Binary => gen_synth_binary(spec),
        Variant::Continuous => gen_synth_cont(spec),
    }
}

/// Males score 1.01 on positive queries and 0.99 on negative ones; females
/// the reverse.
pub fn gen_synth_binary(spec: &SynthSpec) -> Result<(Dataset, Vec<QueryEvent>)> {
    if spec.variant != Variant::Binary {
        return Err(Error::Spec("gen_synth_binary needs the binary variant".into()));
    }
    spec.validate()?;
    let dataset = spec.dataset()?;
    let male = dataset
        .group_names()
        .iter()
        .position(|g| g == MALE)
        .expect("both groups present");
    let mut stream = Vec::with_capacity(spec.queries);
    for t in 0..spec.queries {
        let eta = spec.polarity(t);
        let raw: Vec<f64> = (0..dataset.len())
            .map(|i| {
                let favoured = (dataset.group_of(i) == male) == (eta > 0.0);
                if favoured {
                    1.01
                } else {
                    0.99
                }
            })
            .collect();
        let rel = normalize_scores(&raw)?;
        stream.push(QueryEvent::new(query_id(t + 1, spec.queries), t as u64 + 1, vec![eta], rel)?);
    }
    Ok((dataset, stream))
}

/// Males draw from `Normal(1, std_male)`, females from
/// `Normal(1, std_female)`; draws are floored at [`SCORE_FLOOR`] and
/// normalized per query.
pub fn gen_synth_cont(spec: &SynthSpec) -> Result<(Dataset, Vec<QueryEvent>)> {
    if spec.variant != Variant::Continuous {
        return Err(Error::Spec("gen_synth_cont needs the continuous variant".into()));
    }
    spec.validate()?;
    let (dataset, raw) = synth_cont_raw(spec)?;
    let mut stream = Vec::with_capacity(spec.queries);
    for (t, scores) in raw.into_iter().enumerate() {
        let rel = normalize_scores(&scores)?;
        stream.push(QueryEvent::new(
            query_id(t + 1, spec.queries),
            t as u64 + 1,
            vec![spec.polarity(t)],
            rel,
        )?);
    }
    Ok((dataset, stream))
}

/// Floored raw scores of the continuous variant, one row per query.
pub fn synth_cont_raw(spec: &SynthSpec) -> Result<(Dataset, Vec<Vec<f64>>)> {
    spec.validate()?;
    let dataset = spec.dataset()?;
    let male = dataset
        .group_names()
        .iter()
        .position(|g| g == MALE)
        .expect("both groups present");
    let male_law = Normal::new(1.0, spec.std_male).map_err(|e| Error::Spec(e.to_string()))?;
    let female_law = Normal::new(1.0, spec.std_female).map_err(|e| Error::Spec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw = (0..spec.queries)
        .map(|_| {
            (0..dataset.len())
                .map(|i| {
                    let x = if dataset.group_of(i) == male {
                        male_law.sample(&mut rng)
                    } else {
                        female_law.sample(&mut rng)
                    };
                    x.max(SCORE_FLOOR)
                })
                .collect()
        })
        .collect();
    Ok((dataset, raw))
}

/// How random instances draw polarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityLaw {
    /// Every component is `+1`.
    Unit,
    /// Each component is `±1` with equal probability.
    Signed,
    /// Each component is uniform on `[−1, 1]`.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInstance {
    pub n: usize,
    pub groups: usize,
    pub queries: usize,
    pub components: usize,
    pub law: PolarityLaw,
    pub seed: u64,
}

/// Random group partition with every group non-empty, flat-Dirichlet
/// relevance per query and polarities drawn from `law`.
pub fn gen_random_instance(spec: &RandomInstance) -> Result<(Dataset, Vec<QueryEvent>)> {
    let RandomInstance {
        n,
        groups,
        queries,
        components,
        law,
        seed,
    } = *spec;
    if groups == 0 || n < groups {
        return Err(Error::Spec(format!("need n ≥ G ≥ 1, got n={n}, G={groups}")));
    }
    if queries == 0 || components == 0 {
        return Err(Error::Spec("need at least one query and one polarity component".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);
    let mut group_of = vec![0; n];
    for (k, &i) in slots.iter().enumerate() {
        group_of[i] = if k < groups { k } else { rng.random_range(0..groups) };
    }
    let id_width = (n - 1).to_string().len();
    let g_width = (groups - 1).to_string().len();
    let dataset = Dataset::new(
        (0..n).map(|i| (format!("i{i:0id_width$}"), format!("g{:0g_width$}", group_of[i]))),
    )?;

    let mut stream = Vec::with_capacity(queries);
    for t in 0..queries {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                x.max(f64::MIN_POSITIVE)
            })
            .collect();
        let relevance = normalize_scores(&raw)?;
        let polarity = (0..components)
            .map(|_| match law {
                PolarityLaw::Unit => 1.0,
                PolarityLaw::Signed => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
                PolarityLaw::Continuous => rng.random_range(-1.0..=1.0),
            })
            .collect();
        stream.push(QueryEvent::new(query_id(t + 1, queries), t as u64 + 1, polarity, relevance)?);
    }
    Ok((dataset, stream))
}
