//! Black-box Markov kernels, seeded trajectory simulation and trajectory
//! storage.
//!
//! Time is discrete: a horizon counts kernel applications. Every trajectory
//! owns its random stream, seeded from a sub-seed derived from the batch seed
//! and the trajectory index with [`derive_seed`], so batch results do not
//! depend on how trajectories are scheduled across workers.

use std::io::{self, Read, Write};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Random stream used by every kernel.
pub type SimRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum ProcessError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state vectors must have at least one coordinate")]
    EmptyState,
    #[error("state contains a non-finite coordinate at index {index}")]
    NonFinite { index: usize },
    #[error("simulation diverged at step {step}{}", trajectory.map(|t| format!(" of trajectory {t}")).unwrap_or_default())]
    Diverged {
        trajectory: Option<usize>,
        step: usize,
    },
    #[error("batch count must be at least 1")]
    EmptyBatch,
    #[error("malformed trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Raised by a single kernel application that produced a non-finite state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("kernel produced a non-finite state")]
pub struct StepDiverged;

/// A finite point of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, ProcessError> {
        if coords.is_empty() {
            return Err(ProcessError::EmptyState);
        }
        if let Some(index) = coords.iter().position(|v| !v.is_finite()) {
            return Err(ProcessError::NonFinite { index });
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = ProcessError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<StateVector> for Vec<f64> {
    fn from(value: StateVector) -> Self {
        value.0
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A time-homogeneous transition kernel that can only be sampled.
///
/// `step` must depend on nothing but the current state and the random
/// stream. Implementations are shared between workers, each with its own
/// stream.
pub trait MarkovKernel: Send + Sync {
    fn dimension(&self) -> usize;

    /// One application of the kernel: writes the successor of `state` into
    /// `next`.
    fn step(&self, state: &[f64], rng: &mut SimRng, next: &mut [f64]) -> Result<(), StepDiverged>;

    /// Applies the kernel `steps` times in place, calling `observe(t, x_t)`
    /// after every step. On divergence returns the step index that failed.
    ///
    /// Overrides must consume the random stream exactly as repeated calls to
    /// [`MarkovKernel::step`] would.
    fn advance(
        &self,
        state: &mut [f64],
        steps: usize,
        rng: &mut SimRng,
        observe: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<(), usize> {
        let mut next = vec![0.0; state.len()];
        for t in 1..=steps {
            self.step(state, rng, &mut next).map_err(|_| t)?;
            state.copy_from_slice(&next);
            observe(t, state);
        }
        Ok(())
    }
}

impl<K: MarkovKernel + ?Sized> MarkovKernel for &K {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn step(&self, state: &[f64], rng: &mut SimRng, next: &mut [f64]) -> Result<(), StepDiverged> {
        (**self).step(state, rng, next)
    }

    fn advance(
        &self,
        state: &mut [f64],
        steps: usize,
        rng: &mut SimRng,
        observe: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<(), usize> {
        (**self).advance(state, steps, rng, observe)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for stream `index` of `master`:
/// `mix64(master ^ mix64(index ^ 0x6A09E667F3BCC909))`, where `mix64` is the
/// SplitMix64 finalizer. Streams are seeded with `ChaCha8Rng::seed_from_u64`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index ^ 0x6A09_E667_F3BC_C909))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Simulates one trajectory using an existing random stream. Element 0 is
/// `init`; the returned vector has `horizon + 1` states.
pub fn simulate_with_rng<K: MarkovKernel + ?Sized>(
    kernel: &K,
    init: &StateVector,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Vec<StateVector>, ProcessError> {
    if init.dim() != kernel.dimension() {
        return Err(ProcessError::DimensionMismatch {
            expected: kernel.dimension(),
            got: init.dim(),
        });
    }
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(init.clone());
    let mut state = init.as_slice().to_vec();
    kernel
        .advance(&mut state, horizon, rng, &mut |_, x| {
            out.push(StateVector(x.to_vec()))
        })
        .map_err(|step| ProcessError::Diverged {
            trajectory: None,
            step,
        })?;
    Ok(out)
}

pub fn simulate_trajectory<K: MarkovKernel + ?Sized>(
    kernel: &K,
    init: &StateVector,
    horizon: usize,
    seed: u64,
) -> Result<Vec<StateVector>, ProcessError> {
    simulate_with_rng(kernel, init, horizon, &mut rng_from_seed(seed))
}

/// Runs `horizon` steps from `init` and returns only the final state.
pub fn simulate_endpoint<K: MarkovKernel + ?Sized>(
    kernel: &K,
    init: &[f64],
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>, usize> {
    let mut state = init.to_vec();
    kernel.advance(&mut state, horizon, rng, &mut |_, _| {})?;
    Ok(state)
}

/// Which states of each trajectory a batch keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    /// Every state `t = 0..=horizon`.
    Full,
    /// Only `t = 0` and `t = horizon`.
    #[default]
    Endpoints,
}

impl Storage {
    fn code(self) -> u32 {
        match self {
            Storage::Full => 0,
            Storage::Endpoints => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Storage::Full),
            1 => Some(Storage::Endpoints),
            _ => None,
        }
    }
}

/// `count` independent trajectories of length `horizon` from one initial
/// state. States are stored row-major as `count x stored_steps x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    init: StateVector,
    horizon: usize,
    count: usize,
    seed: u64,
    storage: Storage,
    states: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn init(&self) -> &StateVector {
        &self.init
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn dim(&self) -> usize {
        self.init.dim()
    }

    /// Number of states kept per trajectory.
    pub fn stored_steps(&self) -> usize {
        match self.storage {
            Storage::Full => self.horizon + 1,
            Storage::Endpoints => 2,
        }
    }

    /// Sub-seed used by trajectory `index`.
    pub fn trajectory_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }

    /// State of trajectory `i` at time `t`, if stored.
    pub fn state(&self, i: usize, t: usize) -> Option<&[f64]> {
        if i >= self.count || t > self.horizon {
            return None;
        }
        let slot = match self.storage {
            Storage::Full => t,
            Storage::Endpoints if t == 0 => 0,
            Storage::Endpoints if t == self.horizon => 1,
            Storage::Endpoints => return None,
        };
        let d = self.dim();
        let off = (i * self.stored_steps() + slot) * d;
        Some(&self.states[off..off + d])
    }

    pub fn endpoint(&self, i: usize) -> &[f64] {
        self.state(i, self.horizon).expect("trajectory index out of range")
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.count).map(move |i| self.endpoint(i))
    }

    /// Flat `count x stored_steps x dim` payload.
    pub fn raw_states(&self) -> &[f64] {
        &self.states
    }

    /// Writes the binary layout:
    ///
    /// ```text
    /// magic    8 bytes  "TRAJBAT\0"
    /// version  u32      1
    /// storage  u32      0 = full, 1 = endpoints
    /// dim      u64
    /// count    u64
    /// horizon  u64
    /// seed     u64
    /// payload  count * stored_steps * dim f64, row-major
    /// ```
    ///
    /// All integers and floats are little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), ProcessError> {
        w.write_all(TRAJ_MAGIC)?;
        w.write_all(&TRAJ_VERSION.to_le_bytes())?;
        w.write_all(&self.storage.code().to_le_bytes())?;
        for v in [self.dim() as u64, self.count as u64, self.horizon as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, ProcessError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TRAJ_MAGIC {
            return Err(ProcessError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != TRAJ_VERSION {
            return Err(ProcessError::Format(format!("unsupported version {version}")));
        }
        let storage = Storage::from_code(read_u32(&mut r)?)
            .ok_or_else(|| ProcessError::Format("unknown storage code".into()))?;
        let dim = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let horizon = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        if dim == 0 || count == 0 {
            return Err(ProcessError::Format("dim and count must be positive".into()));
        }
        let stored = match storage {
            Storage::Full => horizon + 1,
            Storage::Endpoints => 2,
        };
        let len = count
            .checked_mul(stored)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| ProcessError::Format("payload size overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(ProcessError::Format(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                len * 8
            )));
        }
        let states: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let init = StateVector::new(states[..dim].to_vec())?;
        Ok(Self {
            init,
            horizon,
            count,
            seed,
            storage,
            states,
        })
    }

    /// One stored state per row: `trajectory_id,step,x0,...,x{D-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ProcessError> {
        let d = self.dim();
        write!(w, "trajectory_id,step")?;
        for j in 0..d {
            write!(w, ",x{j}")?;
        }
        writeln!(w)?;
        let steps: Vec<usize> = match self.storage {
            Storage::Full => (0..=self.horizon).collect(),
            Storage::Endpoints => vec![0, self.horizon],
        };
        for i in 0..self.count {
            for &t in &steps {
                write!(w, "{i},{t}")?;
                for v in self.state(i, t).unwrap() {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

const TRAJ_MAGIC: &[u8; 8] = b"TRAJBAT\0";
const TRAJ_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Simulates `count` trajectories from `init`. Trajectory `i` uses the
/// stream seeded by `derive_seed(seed, i)`; trajectories run in parallel and
/// the result is independent of scheduling.
pub fn simulate_batch<K: MarkovKernel + ?Sized>(
    kernel: &K,
    init: &StateVector,
    horizon: usize,
    count: usize,
    seed: u64,
    storage: Storage,
) -> Result<TrajectoryBatch, ProcessError> {
    if count == 0 {
        return Err(ProcessError::EmptyBatch);
    }
    if init.dim() != kernel.dimension() {
        return Err(ProcessError::DimensionMismatch {
            expected: kernel.dimension(),
            got: init.dim(),
        });
    }
    let d = init.dim();
    let stored = match storage {
        Storage::Full => horizon + 1,
        Storage::Endpoints => 2,
    };
    let rows: Vec<Result<Vec<f64>, ProcessError>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let mut row = Vec::with_capacity(stored * d);
            row.extend_from_slice(init.as_slice());
            let mut state = init.as_slice().to_vec();
            let result = match storage {
                Storage::Full => kernel.advance(&mut state, horizon, &mut rng, &mut |_, x| {
                    row.extend_from_slice(x)
                }),
                Storage::Endpoints => {
                    let r = kernel.advance(&mut state, horizon, &mut rng, &mut |_, _| {});
                    row.extend_from_slice(&state);
                    r
                }
            };
            result.map(|_| row).map_err(|step| ProcessError::Diverged {
                trajectory: Some(i),
                step,
            })
        })
        .collect();
    let mut states = Vec::with_capacity(count * stored * d);
    for row in rows {
        states.extend(row?);
    }
    Ok(TrajectoryBatch {
        init: init.clone(),
        horizon,
        count,
        seed,
        storage,
        states,
    })
}
