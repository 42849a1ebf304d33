//! Concrete Markov kernels: MALA over an energy landscape and online
//! spherical SGD for phase retrieval.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::{Energy, EnergyConfig, EnergyError, EnergySpec};
use crate::process::{rng_from_seed, MarkovKernel, ProcessError, SimRng, StateVector, StepDiverged};

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("state must lie on the unit sphere (norm {0})")]
    OffSphere(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simulation diverged")]
    Diverged,
}

impl From<SamplerError> for ProcessError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::DimensionMismatch { expected, got } => ProcessError::DimensionMismatch { expected, got },
            SamplerError::Diverged => ProcessError::Diverged {
                trajectory: None,
                step: 1,
            },
            other => ProcessError::Format(other.to_string()),
        }
    }
}

/// Metropolis-adjusted Langevin kernel targeting `exp(-U / temperature)`.
///
/// Random stream per step: `dim` standard normals for the proposal, then
/// exactly one uniform for the accept/reject decision.
#[derive(Debug, Clone, PartialEq)]
pub struct MalaConfig<E = EnergySpec> {
    pub energy: E,
    pub step_size: f64,
    pub temperature: f64,
}

/// Result of one MALA transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MalaOutcome {
    pub accepted: bool,
    /// `min(1, exp(log alpha))`.
    pub acceptance_probability: f64,
}

impl<E: Energy> MalaConfig<E> {
    pub fn new(energy: E, step_size: f64, temperature: f64) -> Result<Self, SamplerError> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(SamplerError::InvalidConfig(format!("step_size must be positive, got {step_size}")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(SamplerError::InvalidConfig(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            energy,
            step_size,
            temperature,
        })
    }

    /// `log q(to | from)` up to the shared normalizing constant, with
    /// `grad_from` the (tempered) gradient at `from`.
    fn log_proposal(&self, to: &[f64], from: &[f64], grad_from: &[f64]) -> f64 {
        let eta = self.step_size;
        let mut s = 0.0;
        for i in 0..to.len() {
            let r = to[i] - from[i] + eta * (grad_from[i] / self.temperature);
            s += r * r;
        }
        -s / (4.0 * eta)
    }

    /// One transition from `x` given `u_x = U(x)` and `g_x = grad U(x)`.
    /// Writes the proposal into `prop` and its energy gradient into
    /// `g_prop`; returns the outcome and `U(prop)`. The caller keeps `x` on
    /// rejection and adopts `prop` on acceptance.
    fn transition(
        &self,
        x: &[f64],
        u_x: f64,
        g_x: &[f64],
        rng: &mut SimRng,
        prop: &mut [f64],
        g_prop: &mut [f64],
    ) -> Result<(MalaOutcome, f64), StepDiverged> {
        let eta = self.step_size;
        let noise = (2.0 * eta).sqrt();
        for i in 0..x.len() {
            let xi: f64 = rng.sample(StandardNormal);
            prop[i] = x[i] - eta * (g_x[i] / self.temperature) + noise * xi;
        }
        if prop.iter().any(|v| !v.is_finite()) {
            return Err(StepDiverged);
        }
        let u_prop = self.energy.value_and_gradient(prop, g_prop);
        let log_alpha = if u_prop.is_nan() || g_prop.iter().any(|g| !g.is_finite()) {
            f64::NEG_INFINITY
        } else {
            -(u_prop / self.temperature) + u_x / self.temperature + self.log_proposal(x, prop, g_prop)
                - self.log_proposal(prop, x, g_x)
        };
        let acceptance_probability = if log_alpha.is_nan() {
            0.0
        } else {
            log_alpha.min(0.0).exp()
        };
        let u: f64 = rng.random();
        Ok((
            MalaOutcome {
                accepted: u < acceptance_probability,
                acceptance_probability,
            },
            u_prop,
        ))
    }

    /// One MALA step from `x`, also reporting whether the proposal was
    /// accepted.
    pub fn step_with_outcome(&self, x: &StateVector, rng: &mut SimRng) -> Result<(StateVector, MalaOutcome), SamplerError> {
        let d = self.energy.dim();
        if x.dim() != d {
            return Err(SamplerError::DimensionMismatch { expected: d, got: x.dim() });
        }
        let mut g_x = vec![0.0; d];
        let u_x = self.energy.value_and_gradient(x.as_slice(), &mut g_x);
        let mut prop = vec![0.0; d];
        let mut g_prop = vec![0.0; d];
        let (outcome, _) = self
            .transition(x.as_slice(), u_x, &g_x, rng, &mut prop, &mut g_prop)
            .map_err(|_| SamplerError::Diverged)?;
        let next = if outcome.accepted {
            StateVector::new(prop).map_err(|_| SamplerError::Diverged)?
        } else {
            x.clone()
        };
        Ok((next, outcome))
    }
}

pub fn mala_step<E: Energy>(cfg: &MalaConfig<E>, x: &StateVector, rng: &mut SimRng) -> Result<StateVector, SamplerError> {
    cfg.step_with_outcome(x, rng).map(|(next, _)| next)
}

impl<E: Energy> MarkovKernel for MalaConfig<E> {
    fn dimension(&self) -> usize {
        self.energy.dim()
    }

    fn step(&self, state: &[f64], rng: &mut SimRng, next: &mut [f64]) -> Result<(), StepDiverged> {
        let d = state.len();
        let mut g_x = vec![0.0; d];
        let u_x = self.energy.value_and_gradient(state, &mut g_x);
        let mut g_prop = vec![0.0; d];
        let (outcome, _) = self.transition(state, u_x, &g_x, rng, next, &mut g_prop)?;
        if !outcome.accepted {
            next.copy_from_slice(state);
        }
        Ok(())
    }

    // Caches U and grad U at the current state so each step costs one
    // energy evaluation.
    fn advance(
        &self,
        state: &mut [f64],
        steps: usize,
        rng: &mut SimRng,
        observe: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<(), usize> {
        let d = state.len();
        let mut g_x = vec![0.0; d];
        let mut u_x = self.energy.value_and_gradient(state, &mut g_x);
        let mut prop = vec![0.0; d];
        let mut g_prop = vec![0.0; d];
        for t in 1..=steps {
            let (outcome, u_prop) = self
                .transition(state, u_x, &g_x, rng, &mut prop, &mut g_prop)
                .map_err(|_| t)?;
            if outcome.accepted {
                state.copy_from_slice(&prop);
                std::mem::swap(&mut g_x, &mut g_prop);
                u_x = u_prop;
            }
            observe(t, state);
        }
        Ok(())
    }
}

/// Online spherical SGD on `L(x; a, y) = ((a^T x)^2 - y)^2` with a fresh
/// measurement `a ~ N(0, I)`, `y = (a^T x*)^2 + eps` at every step.
///
/// Random stream per step: `dim` standard normals for `a`, then one standard
/// normal for `eps` (drawn even when `noise_sigma == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRetrievalConfig {
    pub dim: usize,
    pub truth: Vec<f64>,
    pub learning_rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

fn unit_gaussian(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform draw from the unit sphere in `R^dim`.
pub fn uniform_on_sphere(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    unit_gaussian(dim, rng)
}

impl PhaseRetrievalConfig {
    pub fn new(truth: Vec<f64>, learning_rate: f64, noise_sigma: f64, seed: u64) -> Result<Self, SamplerError> {
        let n = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
        if truth.is_empty() || (n - 1.0).abs() > 1e-12 {
            return Err(SamplerError::OffSphere(n));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(SamplerError::InvalidConfig(format!(
                "learning_rate must be positive, got {learning_rate}"
            )));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(SamplerError::InvalidConfig(format!(
                "noise_sigma must be non-negative, got {noise_sigma}"
            )));
        }
        Ok(Self {
            dim: truth.len(),
            truth,
            learning_rate,
            noise_sigma,
            seed,
        })
    }

    /// Draws the hidden signal uniformly from the sphere using `seed`.
    pub fn from_seed(dim: usize, learning_rate: f64, noise_sigma: f64, seed: u64) -> Result<Self, SamplerError> {
        if dim == 0 {
            return Err(SamplerError::InvalidConfig("dim must be positive".into()));
        }
        let truth = unit_gaussian(dim, &mut rng_from_seed(seed));
        Self::new(truth, learning_rate, noise_sigma, seed)
    }

    /// `x^T x*`.
    pub fn overlap(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.truth).map(|(a, b)| a * b).sum()
    }

    fn update(&self, x: &[f64], rng: &mut SimRng, next: &mut [f64]) -> Result<(), StepDiverged> {
        let a: &mut [f64] = next;
        let mut ax = 0.0;
        let mut astar = 0.0;
        for i in 0..self.dim {
            let v: f64 = rng.sample(StandardNormal);
            a[i] = v;
            ax += v * x[i];
            astar += v * self.truth[i];
        }
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * self.noise_sigma;
        let y = astar * astar + eps;
        // Euclidean gradient c * a; its tangent part is c * (a - (x^T a) x).
        let c = 4.0 * (ax * ax - y) * ax;
        let eta = self.learning_rate;
        let mut n2 = 0.0;
        for i in 0..self.dim {
            let v = x[i] - eta * c * (a[i] - ax * x[i]);
            a[i] = v;
            n2 += v * v;
        }
        let n = n2.sqrt();
        if !(n >= 1e-12) || !n.is_finite() {
            return Err(StepDiverged);
        }
        next.iter_mut().for_each(|v| *v /= n);
        Ok(())
    }
}

pub fn phase_retrieval_step(cfg: &PhaseRetrievalConfig, x: &StateVector, rng: &mut SimRng) -> Result<StateVector, SamplerError> {
    if x.dim() != cfg.dim {
        return Err(SamplerError::DimensionMismatch {
            expected: cfg.dim,
            got: x.dim(),
        });
    }
    let n = x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(SamplerError::OffSphere(n));
    }
    let mut next = vec![0.0; cfg.dim];
    cfg.update(x.as_slice(), rng, &mut next).map_err(|_| SamplerError::Diverged)?;
    StateVector::new(next).map_err(|_| SamplerError::Diverged)
}

impl MarkovKernel for PhaseRetrievalConfig {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn step(&self, state: &[f64], rng: &mut SimRng, next: &mut [f64]) -> Result<(), StepDiverged> {
        self.update(state, rng, next)
    }
}

fn default_temperature() -> f64 {
    1.0
}

/// Serializable kernel description, keyed by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    Mala {
        energy: EnergyConfig,
        step_size: f64,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    PhaseRetrieval {
        dim: usize,
        learning_rate: f64,
        #[serde(default)]
        noise_sigma: f64,
        /// Seed for the hidden signal.
        #[serde(default)]
        truth_seed: u64,
    },
}

impl KernelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            KernelSpec::Mala { .. } => "mala",
            KernelSpec::PhaseRetrieval { .. } => "phase-retrieval",
        }
    }

    pub fn build(&self) -> Result<Kernel, SamplerError> {
        match self {
            KernelSpec::Mala {
                energy,
                step_size,
                temperature,
            } => Ok(Kernel::Mala(MalaConfig::new(energy.build()?, *step_size, *temperature)?)),
            KernelSpec::PhaseRetrieval {
                dim,
                learning_rate,
                noise_sigma,
                truth_seed,
            } => Ok(Kernel::PhaseRetrieval(PhaseRetrievalConfig::from_seed(
                *dim,
                *learning_rate,
                *noise_sigma,
                *truth_seed,
            )?)),
        }
    }
}

/// A built kernel together with its ground-truth basin structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Mala(MalaConfig<EnergySpec>),
    PhaseRetrieval(PhaseRetrievalConfig),
}

impl Kernel {
    /// Ground-truth basin of a state: the energy's analytic basin for MALA,
    /// `0` if `x^T x* >= 0` else `1` for phase retrieval.
    pub fn analytic_basin(&self, x: &[f64]) -> usize {
        match self {
            Kernel::Mala(m) => m.energy.analytic_basin(x),
            Kernel::PhaseRetrieval(p) => usize::from(p.overlap(x) < 0.0),
        }
    }

    pub fn num_basins(&self) -> usize {
        match self {
            Kernel::Mala(m) => m.energy.num_basins(),
            Kernel::PhaseRetrieval(_) => 2,
        }
    }

    /// Low-dimensional coordinates for plotting: the structured subspace
    /// for MALA, the overlap `x^T x*` for phase retrieval.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Mala(m) => m.energy.project(x),
            Kernel::PhaseRetrieval(p) => vec![p.overlap(x)],
        }
    }

    /// States must stay on the unit sphere for phase retrieval.
    pub fn requires_unit_norm(&self) -> bool {
        matches!(self, Kernel::PhaseRetrieval(_))
    }
}

impl MarkovKernel for Kernel {
    fn dimension(&self) -> usize {
        match self {
            Kernel::Mala(m) => m.dimension(),
            Kernel::PhaseRetrieval(p) => p.dimension(),
        }
    }

    fn step(&self, state: &[f64], rng: &mut SimRng, next: &mut [f64]) -> Result<(), StepDiverged> {
        match self {
            Kernel::Mala(m) => m.step(state, rng, next),
            Kernel::PhaseRetrieval(p) => p.step(state, rng, next),
        }
    }

    fn advance(
        &self,
        state: &mut [f64],
        steps: usize,
        rng: &mut SimRng,
        observe: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<(), usize> {
        match self {
            Kernel::Mala(m) => m.advance(state, steps, rng, observe),
            Kernel::PhaseRetrieval(p) => p.advance(state, steps, rng, observe),
        }
    }
}
