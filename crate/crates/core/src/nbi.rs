//! Basin identification pipeline: discover candidate states, simulate
//! trajectories from each, train one siamese classifier to tell candidates
//! apart by their endpoints, and merge candidates the classifier cannot
//! separate.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSets;
use crate::nn::{train_with_validation, Architecture, MlpParams, NnError, PairSet, TrainConfig, TrainReport};
use crate::process::{
    derive_seed, rng_from_seed, simulate_batch, simulate_endpoint, MarkovKernel, ProcessError, SimRng, StateVector,
    Storage,
};
use crate::risk::{estimate_pair_risk, PairClassifier, RiskError, RiskMatrix};

#[derive(Debug, thiserror::Error)]
pub enum NbiError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need K >= 2 candidates for cross pairs, got {0}")]
    NeedTwoCandidates(usize),
    #[error("{n} trajectories per candidate leave {train} train, {validation} validation and {eval} eval trajectories; need at least 2 of each")]
    TooFewTrajectories {
        n: usize,
        train: usize,
        validation: usize,
        eval: usize,
    },
    #[error("discovery chain {chain} diverged at step {step}")]
    DiscoveryDiverged { chain: usize, step: usize },
    #[error("candidate {candidate}: {source}")]
    Simulation {
        candidate: usize,
        #[source]
        source: ProcessError,
    },
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

fn one() -> f64 {
    1.0
}

/// Distribution of discovery starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitDistribution {
    /// `N(mean, std^2 I)`; the mean defaults to the origin.
    Gaussian {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default = "one")]
        std: f64,
    },
    UniformBox { half_width: f64 },
    /// Uniform on the sphere of `radius` centred at the origin.
    UniformSphere {
        #[serde(default = "one")]
        radius: f64,
    },
}

impl Default for InitDistribution {
    fn default() -> Self {
        InitDistribution::Gaussian { mean: None, std: 1.0 }
    }
}

impl InitDistribution {
    pub fn validate(&self, dim: usize) -> Result<(), NbiError> {
        let ok = match self {
            InitDistribution::Gaussian { mean, std } => mean.as_ref().is_none_or(|m| m.len() == dim) && *std >= 0.0,
            InitDistribution::UniformBox { half_width } => *half_width > 0.0,
            InitDistribution::UniformSphere { radius } => *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(NbiError::InvalidConfig(format!("bad init distribution for dimension {dim}: {self:?}")))
        }
    }

    pub fn sample(&self, dim: usize, rng: &mut SimRng) -> Vec<f64> {
        match self {
            InitDistribution::Gaussian { mean, std } => (0..dim)
                .map(|i| mean.as_ref().map_or(0.0, |m| m[i]) + std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            InitDistribution::UniformBox { half_width } => {
                (0..dim).map(|_| rng.random_range(-half_width..=*half_width)).collect()
            }
            InitDistribution::UniformSphere { radius } => loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break v.into_iter().map(|x| radius * x / n).collect();
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub num_chains: usize,
    pub horizon: usize,
    pub init: InitDistribution,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            num_chains: 16,
            horizon: 1000,
            init: InitDistribution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbiConfig {
    /// Trajectory horizon `t*` used for refinement and indication.
    pub horizon: usize,
    /// Trajectories simulated from each candidate.
    pub trajectories_per_candidate: usize,
    /// Candidates whose estimated risk exceeds this are merged.
    pub merge_threshold: f64,
    pub discovery: DiscoveryConfig,
    pub train: TrainConfig,
    pub architecture: Architecture,
    /// Share of each candidate's trajectories held out for risk estimation.
    pub eval_fraction: f64,
    /// Minimum pairs per risk cell (half cross, half same).
    pub min_eval_pairs: usize,
    pub train_pairs: usize,
    pub validation_pairs: usize,
    /// Trajectories simulated from a query point when indicating.
    pub indicator_trajectories: usize,
    /// After merging, re-estimate risk between merged groups on their pooled
    /// endpoints and merge again until nothing changes.
    pub reestimate: bool,
}

impl Default for NbiConfig {
    fn default() -> Self {
        Self {
            horizon: 1000,
            trajectories_per_candidate: 100,
            merge_threshold: 0.3,
            discovery: DiscoveryConfig::default(),
            train: TrainConfig::default(),
            architecture: Architecture::default(),
            eval_fraction: 0.3,
            min_eval_pairs: 200,
            train_pairs: 4000,
            validation_pairs: 1000,
            indicator_trajectories: 1,
            reestimate: false,
        }
    }
}

impl NbiConfig {
    pub fn validate(&self) -> Result<(), NbiError> {
        let bad = |m: &str| Err(NbiError::InvalidConfig(m.into()));
        if !(self.merge_threshold > 0.0 && self.merge_threshold < 0.5) {
            return bad("merge_threshold must lie in (0, 0.5)");
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return bad("eval_fraction must lie in (0, 1)");
        }
        if self.discovery.num_chains == 0 {
            return bad("discovery.num_chains must be at least 1");
        }
        if self.trajectories_per_candidate == 0 || self.indicator_trajectories == 0 {
            return bad("trajectory counts must be positive");
        }
        if self.train_pairs < 2 || self.validation_pairs < 2 {
            return bad("need at least 2 training and 2 validation pairs");
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub trajectory: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub states: Vec<StateVector>,
    pub provenance: Vec<Provenance>,
}

impl CandidateSet {
    pub fn new(states: Vec<StateVector>, provenance: Vec<Provenance>) -> Result<Self, NbiError> {
        if states.is_empty() || states.len() != provenance.len() {
            return Err(NbiError::InvalidConfig("candidate set must be non-empty with one provenance each".into()));
        }
        let d = states[0].dim();
        if states.iter().any(|s| s.dim() != d) {
            return Err(NbiError::InvalidConfig("candidates differ in dimension".into()));
        }
        Ok(Self { states, provenance })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Runs `num_chains` chains from independent draws of the init
/// distribution and returns their endpoints as candidates. Chain `c` uses
/// seed `derive_seed(seed, c)`; its initial state is the first draw from
/// that seed's stream.
pub fn discover_candidates<K: MarkovKernel + ?Sized>(kernel: &K, cfg: &DiscoveryConfig, seed: u64) -> Result<CandidateSet, NbiError> {
    if cfg.num_chains == 0 {
        return Err(NbiError::InvalidConfig("num_chains must be at least 1".into()));
    }
    let dim = kernel.dimension();
    cfg.init.validate(dim)?;
    let results: Vec<Result<StateVector, NbiError>> = (0..cfg.num_chains)
        .into_par_iter()
        .map(|c| {
            let chain_seed = derive_seed(seed, c as u64);
            let mut rng = rng_from_seed(chain_seed);
            let init = cfg.init.sample(dim, &mut rng);
            let end = simulate_endpoint(kernel, &init, cfg.horizon, &mut rng)
                .map_err(|step| NbiError::DiscoveryDiverged { chain: c, step })?;
            Ok(StateVector::new(end)?)
        })
        .collect();
    let states = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let provenance = (0..cfg.num_chains)
        .map(|c| Provenance {
            seed: derive_seed(seed, c as u64),
            trajectory: c,
        })
        .collect();
    CandidateSet::new(states, provenance)
}

/// Endpoints of `n` trajectories of length `horizon` from each candidate;
/// candidate `i` uses batch seed `seeds[i]`.
pub fn simulate_endpoints<K: MarkovKernel + ?Sized>(
    kernel: &K,
    candidates: &[StateVector],
    n: usize,
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<Array2<f64>>, NbiError> {
    candidates
        .iter()
        .zip(seeds)
        .enumerate()
        .map(|(i, (x, &seed))| {
            let batch = simulate_batch(kernel, x, horizon, n, seed, Storage::Endpoints)
                .map_err(|source| NbiError::Simulation { candidate: i, source })?;
            let d = x.dim();
            let mut out = Array2::zeros((n, d));
            for (k, e) in batch.endpoints().enumerate() {
                out.row_mut(k).assign(&ndarray::ArrayView1::from(e));
            }
            Ok(out)
        })
        .collect()
}

/// Trajectory indices assigned to each role for one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrajectorySplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub eval: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub eval_fraction: f64,
    pub validation_fraction: f64,
    pub train_pairs: usize,
    pub validation_pairs: usize,
}

impl From<&NbiConfig> for SplitSpec {
    fn from(cfg: &NbiConfig) -> Self {
        Self {
            eval_fraction: cfg.eval_fraction,
            validation_fraction: cfg.train.validation_fraction,
            train_pairs: cfg.train_pairs,
            validation_pairs: cfg.validation_pairs,
        }
    }
}

/// Train and validation pairs plus the held-out endpoints used for risk
/// estimation.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pub train: PairSet,
    pub validation: PairSet,
    /// Eval endpoints per candidate.
    pub eval: Vec<Array2<f64>>,
    pub splits: Vec<TrajectorySplit>,
    /// `(candidate, trajectory)` of every row of `train.points`.
    pub train_rows: Vec<(usize, usize)>,
    /// `(candidate, trajectory)` of every row of `validation.points`.
    pub validation_rows: Vec<(usize, usize)>,
}

fn split_counts(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let eval = ((n as f64 * spec.eval_fraction).ceil() as usize).min(n);
    let rest = n - eval;
    let validation = ((rest as f64 * spec.validation_fraction).ceil() as usize).min(rest);
    (rest - validation, validation, eval)
}

/// Balanced pairs over the given trajectories, alternating "same" and
/// "different" so every prefix is balanced to within one.
fn sample_pairs(
    endpoints: &[Array2<f64>],
    members: &[Vec<usize>],
    count: usize,
    rng: &mut SimRng,
) -> (PairSet, Vec<(usize, usize)>) {
    let k = endpoints.len();
    let d = endpoints[0].ncols();
    let mut rows = Vec::new();
    let mut offsets = Vec::with_capacity(k);
    for (c, m) in members.iter().enumerate() {
        offsets.push(rows.len());
        rows.extend(m.iter().map(|&t| (c, t)));
    }
    let mut points = Array2::zeros((rows.len(), d));
    for (r, &(c, t)) in rows.iter().enumerate() {
        points.row_mut(r).assign(&endpoints[c].row(t));
    }
    let mut pairs = Vec::with_capacity(count);
    for p in 0..count {
        if p % 2 == 0 {
            let c = rng.random_range(0..k);
            let m = members[c].len();
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            pairs.push((offsets[c] + a, offsets[c] + b, true));
        } else {
            let ci = rng.random_range(0..k);
            let mut cj = rng.random_range(0..k - 1);
            if cj >= ci {
                cj += 1;
            }
            let a = rng.random_range(0..members[ci].len());
            let b = rng.random_range(0..members[cj].len());
            pairs.push((offsets[ci] + a, offsets[cj] + b, false));
        }
    }
    (PairSet { points, pairs }, rows)
}

/// Splits every candidate's trajectories into train / validation / eval
/// (no trajectory in two roles) and draws balanced train and validation
/// pairs: "same" pairs join two trajectories of one candidate, "different"
/// pairs join trajectories of two candidates.
pub fn build_pair_dataset(endpoints: &[Array2<f64>], spec: &SplitSpec, seed: u64) -> Result<PairDataset, NbiError> {
    let k = endpoints.len();
    if k < 2 {
        return Err(NbiError::NeedTwoCandidates(k));
    }
    let n = endpoints[0].nrows();
    if endpoints.iter().any(|e| e.nrows() != n) {
        return Err(NbiError::InvalidConfig("candidates have different trajectory counts".into()));
    }
    let (n_train, n_val, n_eval) = split_counts(n, spec);
    if n_train < 2 || n_val < 2 || n_eval < 2 {
        return Err(NbiError::TooFewTrajectories {
            n,
            train: n_train,
            validation: n_val,
            eval: n_eval,
        });
    }
    let splits: Vec<TrajectorySplit> = (0..k)
        .map(|c| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(derive_seed(seed, c as u64)));
            let mut eval = order[..n_eval].to_vec();
            let mut validation = order[n_eval..n_eval + n_val].to_vec();
            let mut train = order[n_eval + n_val..].to_vec();
            eval.sort_unstable();
            validation.sort_unstable();
            train.sort_unstable();
            TrajectorySplit { train, validation, eval }
        })
        .collect();
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let train_members: Vec<Vec<usize>> = splits.iter().map(|s| s.train.clone()).collect();
    let val_members: Vec<Vec<usize>> = splits.iter().map(|s| s.validation.clone()).collect();
    let (train, train_rows) = sample_pairs(endpoints, &train_members, spec.train_pairs, &mut rng);
    let (validation, validation_rows) = sample_pairs(endpoints, &val_members, spec.validation_pairs, &mut rng);
    let eval = endpoints
        .iter()
        .zip(&splits)
        .map(|(e, s)| e.select(Axis(0), &s.eval))
        .collect();
    Ok(PairDataset {
        train,
        validation,
        eval,
        splits,
        train_rows,
        validation_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergedPair {
    pub i: usize,
    pub j: usize,
    pub risk: f64,
}

/// Merges every cell with risk above `threshold` and closes the merges
/// transitively. Labels are contiguous, in order of smallest member.
pub fn merge_by_risk(risk: &RiskMatrix, threshold: f64) -> (Vec<usize>, Vec<MergedPair>) {
    let mut dsu = DisjointSets::new(risk.size());
    let mut merged = Vec::new();
    for (i, j, r) in risk.cells() {
        if r > threshold {
            dsu.union(i, j);
            merged.push(MergedPair { i, j, risk: r });
        }
    }
    (dsu.labels(), merged)
}

/// Output of refinement.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionResult {
    pub labels: Vec<usize>,
    pub num_basins: usize,
    pub risk_matrix: RiskMatrix,
    pub merged_pairs: Vec<MergedPair>,
    /// Group-level merges from the re-estimation passes, named by each
    /// group's smallest candidate index.
    pub reestimated_merges: Vec<MergedPair>,
    pub train_report: Option<TrainReport>,
    /// Batch seed of each candidate's trajectories.
    pub candidate_seeds: Vec<u64>,
    #[serde(skip)]
    pub classifier: MlpParams,
    /// All endpoints per candidate (reference set for indication).
    #[serde(skip)]
    pub endpoints: Vec<Array2<f64>>,
    #[serde(skip)]
    pub splits: Vec<TrajectorySplit>,
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Seeds used by refinement, all derived from one master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineSeeds {
    pub candidates: Vec<u64>,
    pub split: u64,
    pub init: u64,
    pub train: u64,
}

impl RefineSeeds {
    pub fn derive(seed: u64, num_candidates: usize, train_seed: u64) -> Self {
        let sim = derive_seed(seed, 1);
        Self {
            candidates: (0..num_candidates).map(|i| derive_seed(sim, i as u64)).collect(),
            split: derive_seed(seed, 2),
            init: derive_seed(seed, 3),
            train: derive_seed(derive_seed(seed, 4), train_seed),
        }
    }
}

/// Refinement with every seed derived from `seed`.
pub fn refine<K: MarkovKernel + ?Sized>(
    candidates: &CandidateSet,
    kernel: &K,
    cfg: &NbiConfig,
    seed: u64,
) -> Result<PartitionResult, NbiError> {
    let seeds = RefineSeeds::derive(seed, candidates.len(), cfg.train.seed);
    refine_with_seeds(candidates, kernel, cfg, &seeds)
}

/// Simulates `n` trajectories of horizon `t*` from each candidate, trains
/// the pair classifier, estimates the risk matrix on held-out endpoints and
/// merges indistinguishable candidates.
pub fn refine_with_seeds<K: MarkovKernel + ?Sized>(
    candidates: &CandidateSet,
    kernel: &K,
    cfg: &NbiConfig,
    seeds: &RefineSeeds,
) -> Result<PartitionResult, NbiError> {
    cfg.validate()?;
    let k = candidates.len();
    let dim = kernel.dimension();
    if seeds.candidates.len() != k {
        return Err(NbiError::InvalidConfig("one batch seed per candidate required".into()));
    }
    let classifier = MlpParams::init(dim, &cfg.architecture, seeds.init)?;
    if k == 1 {
        return Ok(PartitionResult {
            labels: vec![0],
            num_basins: 1,
            risk_matrix: RiskMatrix::from_fn(1, |_, _| 0.0),
            merged_pairs: Vec::new(),
            reestimated_merges: Vec::new(),
            train_report: None,
            candidate_seeds: seeds.candidates.clone(),
            classifier,
            endpoints: Vec::new(),
            splits: Vec::new(),
        });
    }
    let endpoints = simulate_endpoints(
        kernel,
        &candidates.states,
        cfg.trajectories_per_candidate,
        cfg.horizon,
        &seeds.candidates,
    )?;
    let data = build_pair_dataset(&endpoints, &SplitSpec::from(cfg), seeds.split)?;
    let mut classifier = classifier;
    classifier.fit_standardization(data.train.points.view())?;
    let train_cfg = TrainConfig {
        seed: seeds.train,
        ..cfg.train.clone()
    };
    let report = train_with_validation(&mut classifier, &data.train, &data.validation, &train_cfg)?;
    let risk = estimate_pair_risk(&classifier, &data.eval, cfg.min_eval_pairs)?;
    let (mut labels, merged_pairs) = merge_by_risk(&risk, cfg.merge_threshold);
    let mut reestimated_merges = Vec::new();
    if cfg.reestimate {
        loop {
            let groups = labels.iter().copied().max().map_or(0, |m| m + 1);
            if groups < 2 {
                break;
            }
            let mut rep = vec![usize::MAX; groups];
            let pooled: Vec<Array2<f64>> = (0..groups)
                .map(|g| {
                    let views: Vec<ArrayView2<f64>> = (0..k)
                        .filter(|&c| labels[c] == g)
                        .map(|c| {
                            rep[g] = rep[g].min(c);
                            data.eval[c].view()
                        })
                        .collect();
                    ndarray::concatenate(Axis(0), &views).expect("same width")
                })
                .collect();
            let group_risk = estimate_pair_risk(&classifier, &pooled, cfg.min_eval_pairs)?;
            let (group_labels, group_merges) = merge_by_risk(&group_risk, cfg.merge_threshold);
            if group_merges.is_empty() {
                break;
            }
            reestimated_merges.extend(group_merges.iter().map(|m| MergedPair {
                i: rep[m.i],
                j: rep[m.j],
                risk: m.risk,
            }));
            labels = relabel(&labels.iter().map(|&l| group_labels[l]).collect::<Vec<_>>());
        }
    }
    let num_basins = labels.iter().copied().max().map_or(0, |m| m + 1);
    Ok(PartitionResult {
        labels,
        num_basins,
        risk_matrix: risk,
        merged_pairs,
        reestimated_merges,
        train_report: Some(report),
        candidate_seeds: seeds.candidates.clone(),
        classifier,
        endpoints,
        splits: data.splits,
    })
}

/// Assigns states to basins by comparing the endpoints of fresh
/// trajectories against each candidate's stored endpoints.
pub struct Indicator<'a> {
    classifier: &'a MlpParams,
    references: Vec<Array2<f64>>,
    labels: &'a [usize],
}

impl<'a> Indicator<'a> {
    pub fn new(classifier: &'a MlpParams, reference_endpoints: &[Array2<f64>], labels: &'a [usize]) -> Result<Self, NbiError> {
        if reference_endpoints.len() != labels.len() && labels.len() != 1 {
            return Err(NbiError::InvalidConfig("one reference set per candidate required".into()));
        }
        let references = reference_endpoints
            .iter()
            .map(|e| classifier.embed(e.view()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            classifier,
            references,
            labels,
        })
    }

    /// Mean same-source probability of `endpoints` against each candidate.
    pub fn scores(&self, endpoints: ArrayView2<f64>) -> Result<Vec<f64>, NbiError> {
        let e = self.classifier.embed(endpoints)?;
        self.references
            .iter()
            .map(|r| Ok(self.classifier.cross_probabilities(&e, r)?.mean().unwrap_or(0.0)))
            .collect()
    }

    /// Basin label of the highest-scoring candidate; ties go to the lowest
    /// candidate index.
    pub fn assign(&self, endpoints: ArrayView2<f64>) -> Result<usize, NbiError> {
        if self.labels.len() == 1 {
            return Ok(self.labels[0]);
        }
        let scores = self.scores(endpoints)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(self.labels[best])
    }

    /// Simulates `trajectories` runs of length `horizon` from `x` (run `r`
    /// seeded with `derive_seed(seed, r)`) and assigns their endpoints.
    pub fn indicate<K: MarkovKernel + ?Sized>(
        &self,
        kernel: &K,
        x: &StateVector,
        horizon: usize,
        trajectories: usize,
        seed: u64,
    ) -> Result<usize, NbiError> {
        if self.labels.len() == 1 {
            return Ok(self.labels[0]);
        }
        let batch = simulate_batch(kernel, x, horizon, trajectories, seed, Storage::Endpoints)?;
        let mut ends = Array2::zeros((trajectories, x.dim()));
        for (r, e) in batch.endpoints().enumerate() {
            ends.row_mut(r).assign(&ndarray::ArrayView1::from(e));
        }
        self.assign(ends.view())
    }
}

/// Basin of `x` under a refined partition.
pub fn indicate<K: MarkovKernel + ?Sized>(
    partition: &PartitionResult,
    kernel: &K,
    x: &StateVector,
    cfg: &NbiConfig,
    seed: u64,
) -> Result<usize, NbiError> {
    if partition.labels.len() == 1 {
        return Ok(0);
    }
    Indicator::new(&partition.classifier, &partition.endpoints, &partition.labels)?.indicate(
        kernel,
        x,
        cfg.horizon,
        cfg.indicator_trajectories,
        seed,
    )
}
