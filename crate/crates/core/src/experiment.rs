//! Experiment manifests: repeated discovery + refinement on a synthetic
//! landscape, scored against its analytic basin labels.
//!
//! Layout of a run directory `<output_dir>/<name>/`:
//!
//! ```text
//! results.json               per-repeat scores and aggregates
//! repeat-NN/partition.json   partition, candidates, configs
//! repeat-NN/classifier.ckpt  trained pair classifier
//! repeat-NN/endpoints.csv    candidate,trajectory,x0..x{D-1}
//! ```

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{ari, nmi};
use crate::nbi::{
    discover_candidates, refine, CandidateSet, Indicator, MergedPair, NbiConfig, NbiError, PartitionResult,
    Provenance,
};
use crate::nn::{MlpParams, NnError, TrainReport};
use crate::process::{derive_seed, simulate_batch, MarkovKernel, StateVector, Storage};
use crate::risk::RiskMatrix;
use crate::samplers::{Kernel, KernelSpec, SamplerError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Points { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Kernel(#[from] SamplerError),
    #[error(transparent)]
    Nbi(#[from] NbiError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ExperimentError {
    /// True for problems with the inputs rather than the pipeline.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ExperimentError::Manifest(_) | ExperimentError::Parse { .. } | ExperimentError::Points { .. } | ExperimentError::Kernel(_)
        ) || matches!(self, ExperimentError::Nbi(NbiError::InvalidConfig(_)))
    }
}

/// A user-supplied file that cannot be read is a validation error.
fn read_input(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|e| ExperimentError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// How candidates are labelled for scoring. Each rule belongs to one
/// landscape family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruth {
    /// Ring whose radius is closest to `|P x|`.
    NearestRing,
    /// Mixture component with the closest mean.
    NearestMean,
    /// Helix tube with the closest curve point.
    NearestTube,
    /// Sign of the overlap with the hidden signal.
    OverlapSign,
}

impl GroundTruth {
    pub fn for_kernel(kernel: &KernelSpec) -> GroundTruth {
        use crate::energy::EnergyConfig;
        fn of_energy(e: &EnergyConfig) -> GroundTruth {
            match e {
                EnergyConfig::DoubleRing(_) => GroundTruth::NearestRing,
                EnergyConfig::GaussianMixture2d(_) | EnergyConfig::IsotropicGmm(_) => GroundTruth::NearestMean,
                EnergyConfig::Helix3d(_) => GroundTruth::NearestTube,
                EnergyConfig::AugmentedEmbedding(a) => of_energy(&a.low),
            }
        }
        match kernel {
            KernelSpec::Mala { energy, .. } => of_energy(energy),
            KernelSpec::PhaseRetrieval { .. } => GroundTruth::OverlapSign,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountAtLeast {
    pub threshold: f64,
    pub min_repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactBasins {
    pub count: usize,
    pub min_repeats: usize,
}

/// Pass criteria checked after a run. Failed repeats count against every
/// criterion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectation {
    pub min_mean_ari: Option<f64>,
    /// At least `min_repeats` repeats with ARI >= `threshold`.
    pub ari_at_least: Option<CountAtLeast>,
    pub exact_basins: Option<ExactBasins>,
    /// Inclusive range for the mean number of predicted basins.
    pub mean_basins: Option<[f64; 2]>,
}

fn one_repeat() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub nbi: NbiConfig,
    pub ground_truth: GroundTruth,
    #[serde(default = "one_repeat")]
    pub num_repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub expectation: Expectation,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = read_input(path)?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| ExperimentError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // Relative output directories are taken from the manifest's folder.
        if let (Some(out), Some(parent)) = (&m.output_dir, path.parent()) {
            if out.is_relative() {
                m.output_dir = Some(parent.join(out));
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(ExperimentError::Manifest(format!("bad name {:?}", self.name)));
        }
        if self.num_repeats == 0 {
            return Err(ExperimentError::Manifest("num_repeats must be at least 1".into()));
        }
        let expected = GroundTruth::for_kernel(&self.kernel);
        if self.ground_truth != expected {
            return Err(ExperimentError::Manifest(format!(
                "ground truth {:?} does not fit this landscape (expected {expected:?})",
                self.ground_truth
            )));
        }
        self.nbi.validate()?;
        let kernel = self.kernel.build()?;
        self.nbi.discovery.init.validate(kernel.dimension())?;
        Ok(())
    }
}

/// Seed of repeat `r` and its discovery / refinement streams.
pub fn repeat_seeds(master: u64, repeat: usize) -> (u64, u64, u64) {
    let rs = derive_seed(master, repeat as u64);
    (rs, derive_seed(rs, 1), derive_seed(rs, 2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    /// Error message when the pipeline failed; scores are absent then.
    pub error: Option<String>,
    pub num_candidates: usize,
    /// Distinct true basins among the candidates.
    pub true_basins_found: usize,
    pub num_basins: Option<usize>,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stats {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub num_repeats: usize,
    pub failures: usize,
    pub ari: Option<Stats>,
    pub nmi: Option<Stats>,
    pub num_basins: Option<Stats>,
    pub repeats: Vec<RepeatRecord>,
    /// Criteria from the manifest's expectation that were not met.
    pub unmet: Vec<String>,
}

impl RunSummary {
    pub fn from_repeats(manifest: &Manifest, repeats: Vec<RepeatRecord>) -> Self {
        let collect = |f: fn(&RepeatRecord) -> Option<f64>| repeats.iter().filter_map(f).collect::<Vec<_>>();
        let aris = collect(|r| r.ari);
        let nmis = collect(|r| r.nmi);
        let basins = collect(|r| r.num_basins.map(|b| b as f64));
        let mut s = RunSummary {
            name: manifest.name.clone(),
            seed: manifest.seed,
            num_repeats: repeats.len(),
            failures: repeats.iter().filter(|r| r.error.is_some()).count(),
            ari: Stats::of(&aris),
            nmi: Stats::of(&nmis),
            num_basins: Stats::of(&basins),
            repeats,
            unmet: Vec::new(),
        };
        s.unmet = check_expectation(&manifest.expectation, &s);
        s
    }

    pub fn passed(&self) -> bool {
        self.unmet.is_empty()
    }

    /// One line per repeat plus the aggregate, for terminals.
    pub fn table(&self) -> String {
        let mut out = format!("{:<8} {:>6} {:>10} {:>8} {:>8} {:>8}\n", "repeat", "cands", "true-found", "basins", "ARI", "NMI");
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for r in &self.repeats {
            out += &format!(
                "{:<8} {:>6} {:>10} {:>8} {:>8} {:>8}",
                r.repeat,
                r.num_candidates,
                r.true_basins_found,
                r.num_basins.map_or("-".into(), |b| b.to_string()),
                opt(r.ari),
                opt(r.nmi)
            );
            if let Some(e) = &r.error {
                out += &format!("  FAILED: {e}");
            }
            out.push('\n');
        }
        let agg = |s: &Option<Stats>| s.map_or("-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std));
        out += &format!(
            "{}: ARI {}  NMI {}  basins {}  failures {}/{}\n",
            self.name,
            agg(&self.ari),
            agg(&self.nmi),
            agg(&self.num_basins),
            self.failures,
            self.num_repeats
        );
        out
    }
}

fn check_expectation(e: &Expectation, s: &RunSummary) -> Vec<String> {
    let mut unmet = Vec::new();
    let n = s.num_repeats as f64;
    // Failed repeats contribute zero to means.
    let mean_of = |f: fn(&RepeatRecord) -> Option<f64>| s.repeats.iter().map(|r| f(r).unwrap_or(0.0)).sum::<f64>() / n;
    if let Some(min) = e.min_mean_ari {
        let m = mean_of(|r| r.ari);
        if m < min {
            unmet.push(format!("mean ARI {m:.4} < {min}"));
        }
    }
    if let Some(c) = e.ari_at_least {
        let k = s.repeats.iter().filter(|r| r.ari.is_some_and(|a| a >= c.threshold)).count();
        if k < c.min_repeats {
            unmet.push(format!("{k} repeats with ARI >= {} (need {})", c.threshold, c.min_repeats));
        }
    }
    if let Some(c) = e.exact_basins {
        let k = s.repeats.iter().filter(|r| r.num_basins == Some(c.count)).count();
        if k < c.min_repeats {
            unmet.push(format!("{k} repeats with exactly {} basins (need {})", c.count, c.min_repeats));
        }
    }
    if let Some([lo, hi]) = e.mean_basins {
        let m = mean_of(|r| r.num_basins.map(|b| b as f64));
        if !(lo..=hi).contains(&m) {
            unmet.push(format!("mean basins {m:.3} outside [{lo}, {hi}]"));
        }
    }
    unmet
}

/// Everything needed to reuse a repeat's partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionFile {
    pub name: String,
    pub repeat: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub nbi: NbiConfig,
    pub candidates: Vec<Vec<f64>>,
    pub provenance: Vec<Provenance>,
    pub labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub num_basins: usize,
    pub ari: f64,
    pub nmi: f64,
    pub risk_matrix: Vec<Vec<Option<f64>>>,
    pub merged_pairs: Vec<MergedPairRecord>,
    pub reestimated_merges: Vec<MergedPairRecord>,
    pub candidate_seeds: Vec<u64>,
    pub train_report: Option<TrainReportRecord>,
    pub checkpoint: String,
    pub endpoints: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedPairRecord {
    pub i: usize,
    pub j: usize,
    pub risk: f64,
}

impl From<&MergedPair> for MergedPairRecord {
    fn from(m: &MergedPair) -> Self {
        Self { i: m.i, j: m.j, risk: m.risk }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReportRecord {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

impl From<&TrainReport> for TrainReportRecord {
    fn from(r: &TrainReport) -> Self {
        Self {
            train_loss: r.train_loss.clone(),
            validation_loss: r.validation_loss.clone(),
            best_epoch: r.best_epoch,
            best_validation_loss: r.best_validation_loss,
        }
    }
}

pub const PARTITION_FILE: &str = "partition.json";
pub const CHECKPOINT_FILE: &str = "classifier.ckpt";
pub const ENDPOINTS_FILE: &str = "endpoints.csv";
pub const RESULTS_FILE: &str = "results.json";

/// One repeat's full output.
pub struct RepeatOutcome {
    pub record: RepeatRecord,
    pub candidates: Option<CandidateSet>,
    pub partition: Option<PartitionResult>,
    pub true_labels: Vec<usize>,
}

fn risk_rows(r: &RiskMatrix) -> Vec<Vec<Option<f64>>> {
    r.rows()
}

/// Discovery, refinement and scoring for repeat `repeat`.
pub fn run_repeat(manifest: &Manifest, kernel: &Kernel, repeat: usize) -> RepeatOutcome {
    let (rs, discovery_seed, refine_seed) = repeat_seeds(manifest.seed, repeat);
    let mut record = RepeatRecord {
        repeat,
        seed: rs,
        error: None,
        num_candidates: 0,
        true_basins_found: 0,
        num_basins: None,
        ari: None,
        nmi: None,
    };
    let candidates = match discover_candidates(kernel, &manifest.nbi.discovery, discovery_seed) {
        Ok(c) => c,
        Err(e) => {
            record.error = Some(e.to_string());
            return RepeatOutcome {
                record,
                candidates: None,
                partition: None,
                true_labels: Vec::new(),
            };
        }
    };
    let true_labels: Vec<usize> = candidates.states.iter().map(|s| kernel.analytic_basin(s.as_slice())).collect();
    record.num_candidates = candidates.len();
    let mut found = true_labels.clone();
    found.sort_unstable();
    found.dedup();
    record.true_basins_found = found.len();
    let partition = match refine(&candidates, kernel, &manifest.nbi, refine_seed) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return RepeatOutcome {
                record,
                candidates: Some(candidates),
                partition: None,
                true_labels,
            };
        }
    };
    record.num_basins = Some(partition.num_basins);
    // Labels are non-empty and equal in length, so the metrics cannot fail.
    record.ari = ari(&partition.labels, &true_labels).ok();
    record.nmi = nmi(&partition.labels, &true_labels).ok();
    RepeatOutcome {
        record,
        candidates: Some(candidates),
        partition: Some(partition),
        true_labels,
    }
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        writeln!(w)
    })
}

/// Writes per-candidate endpoints as `candidate,trajectory,x0,...`.
pub fn write_endpoints_csv<W: Write>(w: &mut W, endpoints: &[Array2<f64>]) -> io::Result<()> {
    let d = endpoints.first().map_or(0, |e| e.ncols());
    write!(w, "candidate,trajectory")?;
    for j in 0..d {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for (c, e) in endpoints.iter().enumerate() {
        for (t, row) in e.rows().into_iter().enumerate() {
            write!(w, "{c},{t}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Reads a file written by [`write_endpoints_csv`].
pub fn read_endpoints_csv(path: &Path) -> Result<Vec<Array2<f64>>, ExperimentError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let bad = |line: usize, message: String| ExperimentError::Points {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate().skip(1) {
        let line = line.map_err(io_err(path))?;
        let mut fields = line.split(',');
        let c: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad(i + 1, "bad candidate index".into()))?;
        fields.next();
        let row = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(i + 1, e.to_string()))?;
        if c != groups.len() && c + 1 != groups.len() {
            return Err(bad(i + 1, "candidates out of order".into()));
        }
        if c == groups.len() {
            groups.push(Vec::new());
        }
        groups[c].push(row);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(c, rows)| {
            let d = rows[0].len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| bad(0, format!("candidate {c}: {e}")))
        })
        .collect()
}

fn write_repeat(dir: &Path, manifest: &Manifest, outcome: &RepeatOutcome) -> Result<(), ExperimentError> {
    let (Some(candidates), Some(p)) = (&outcome.candidates, &outcome.partition) else {
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_atomic(&dir.join(CHECKPOINT_FILE), |w| {
        p.classifier.write_checkpoint(&mut *w).map_err(io::Error::other)
    })?;
    write_atomic(&dir.join(ENDPOINTS_FILE), |w| write_endpoints_csv(w, &p.endpoints))?;
    let file = PartitionFile {
        name: manifest.name.clone(),
        repeat: outcome.record.repeat,
        seed: outcome.record.seed,
        kernel: manifest.kernel.clone(),
        nbi: manifest.nbi.clone(),
        candidates: candidates.states.iter().map(|s| s.as_slice().to_vec()).collect(),
        provenance: candidates.provenance.clone(),
        labels: p.labels.clone(),
        true_labels: outcome.true_labels.clone(),
        num_basins: p.num_basins,
        ari: outcome.record.ari.unwrap_or(f64::NAN),
        nmi: outcome.record.nmi.unwrap_or(f64::NAN),
        risk_matrix: risk_rows(&p.risk_matrix),
        merged_pairs: p.merged_pairs.iter().map(Into::into).collect(),
        reestimated_merges: p.reestimated_merges.iter().map(Into::into).collect(),
        candidate_seeds: p.candidate_seeds.clone(),
        train_report: p.train_report.as_ref().map(Into::into),
        checkpoint: CHECKPOINT_FILE.into(),
        endpoints: ENDPOINTS_FILE.into(),
    };
    write_json(&dir.join(PARTITION_FILE), &file)
}

/// Directory of the run's artifacts: `<output_dir>/<name>`.
pub fn run_dir(manifest: &Manifest) -> Option<PathBuf> {
    manifest.output_dir.as_ref().map(|d| d.join(&manifest.name))
}

/// Runs every repeat (in parallel) and, when the manifest has an output
/// directory, writes the artifacts. Pipeline failures are recorded per
/// repeat; only I/O and manifest problems abort the run.
pub fn run_manifest(manifest: &Manifest) -> Result<RunSummary, ExperimentError> {
    manifest.validate()?;
    let kernel = manifest.kernel.build()?;
    let dir = run_dir(manifest);
    let records = (0..manifest.num_repeats)
        .into_par_iter()
        .map(|r| {
            let outcome = run_repeat(manifest, &kernel, r);
            if let Some(dir) = &dir {
                write_repeat(&dir.join(format!("repeat-{r:02}")), manifest, &outcome)?;
            }
            Ok(outcome.record)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let summary = RunSummary::from_repeats(manifest, records);
    if let Some(dir) = &dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join(RESULTS_FILE), &summary)?;
    }
    Ok(summary)
}

/// A repeat's artifacts loaded back from disk.
pub struct LoadedPartition {
    pub file: PartitionFile,
    pub kernel: Kernel,
    pub classifier: MlpParams,
    pub endpoints: Vec<Array2<f64>>,
}

impl LoadedPartition {
    /// Loads from a repeat directory or from its checkpoint path.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let dir = if path.is_dir() {
            path.to_path_buf()
        } else {
            path.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        let ppath = dir.join(PARTITION_FILE);
        let text = fs::read_to_string(&ppath).map_err(io_err(&ppath))?;
        let file: PartitionFile = serde_json::from_str(&text).map_err(|e| ExperimentError::Parse {
            path: ppath.clone(),
            message: e.to_string(),
        })?;
        let ckpt = if path.is_dir() { dir.join(&file.checkpoint) } else { path.to_path_buf() };
        let reader = fs::File::open(&ckpt).map_err(io_err(&ckpt))?;
        let classifier = MlpParams::read_checkpoint(io::BufReader::new(reader))?;
        let endpoints = read_endpoints_csv(&dir.join(&file.endpoints))?;
        if endpoints.len() != file.labels.len() {
            return Err(ExperimentError::Parse {
                path: dir.join(&file.endpoints),
                message: format!("{} candidates in endpoints, {} labels", endpoints.len(), file.labels.len()),
            });
        }
        let kernel = file.kernel.build()?;
        Ok(Self {
            file,
            kernel,
            classifier,
            endpoints,
        })
    }

    pub fn dimension(&self) -> usize {
        self.kernel.dimension()
    }

    /// Basin of each point. Point `p` is simulated with batch seed
    /// `derive_seed(seed, p)`.
    pub fn indicate(&self, points: &[StateVector], seed: u64) -> Result<Vec<usize>, ExperimentError> {
        let indicator = Indicator::new(&self.classifier, &self.endpoints, &self.file.labels)?;
        points
            .iter()
            .enumerate()
            .map(|(p, x)| {
                Ok(indicator.indicate(
                    &self.kernel,
                    x,
                    self.file.nbi.horizon,
                    self.file.nbi.indicator_trajectories,
                    derive_seed(seed, p as u64),
                )?)
            })
            .collect()
    }
}

/// Parses a points CSV: one state per line, comma-separated, an optional
/// non-numeric header line, blank lines ignored. Errors carry the 1-based
/// line number.
pub fn read_points_csv(path: &Path, dim: usize) -> Result<Vec<StateVector>, ExperimentError> {
    let text = read_input(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let bad = |message: String| ExperimentError::Points {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(bad(e.to_string())),
        };
        if row.len() != dim {
            return Err(bad(format!("expected {dim} coordinates, got {}", row.len())));
        }
        points.push(StateVector::new(row).map_err(|e| bad(e.to_string()))?);
    }
    Ok(points)
}

/// Options for [`dump_plot`].
#[derive(Debug, Clone, Copy)]
pub struct PlotOptions {
    pub trajectories_per_candidate: usize,
    /// Keep every `stride`-th step (the last step is always kept).
    pub stride: usize,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            trajectories_per_candidate: 2,
            stride: 10,
        }
    }
}

/// Re-simulates the first trajectories of every candidate (same seeds as the
/// run) and writes
/// `trajectory_id,candidate,step,coord_0,...,predicted_label,true_label`.
/// Coordinates are projected onto the landscape's structured subspace for
/// embedded landscapes (the overlap for phase retrieval) and raw otherwise.
/// `predicted_label` is the candidate's basin; `true_label` is the analytic
/// basin of the state at that step.
pub fn dump_plot<W: Write>(loaded: &LoadedPartition, opts: PlotOptions, w: &mut W) -> Result<(), ExperimentError> {
    let file = &loaded.file;
    let kernel = &loaded.kernel;
    let coords = file
        .candidates
        .first()
        .map_or(0, |c| kernel.project(c).len());
    let werr = |source| ExperimentError::Io {
        path: PathBuf::from("<output>"),
        source,
    };
    write!(w, "trajectory_id,candidate,step").map_err(werr)?;
    for j in 0..coords {
        write!(w, ",coord_{j}").map_err(werr)?;
    }
    writeln!(w, ",predicted_label,true_label").map_err(werr)?;
    let stride = opts.stride.max(1);
    let horizon = file.nbi.horizon;
    let mut traj_id = 0;
    for (c, state) in file.candidates.iter().enumerate() {
        let x = StateVector::new(state.clone()).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
        let n = opts.trajectories_per_candidate.min(file.nbi.trajectories_per_candidate);
        if n == 0 {
            continue;
        }
        let batch = simulate_batch(kernel, &x, horizon, n, file.candidate_seeds[c], Storage::Full)
            .map_err(|e| NbiError::Simulation { candidate: c, source: e })?;
        for i in 0..n {
            for t in (0..=horizon).filter(|t| t % stride == 0 || *t == horizon) {
                let s = batch.state(i, t).expect("stored");
                write!(w, "{traj_id},{c},{t}").map_err(werr)?;
                for v in kernel.project(s) {
                    write!(w, ",{v}").map_err(werr)?;
                }
                writeln!(w, ",{},{}", file.labels[c], kernel.analytic_basin(s)).map_err(werr)?;
            }
            traj_id += 1;
        }
    }
    Ok(())
}
