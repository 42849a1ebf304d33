//! Synthetic energy landscapes and their embedding into high-dimensional
//! ambient spaces.
//!
//! Every landscape provides an analytic value and gradient. MALA targets the
//! density `exp(-U)`, so the wells of `U` are the basins the pipeline is meant
//! to recover; [`EnergySpec::analytic_basin`] gives the ground-truth basin of
//! a point for evaluation.
//!
//! Normalization: Gaussian mixtures include the Gaussian normalizing
//! constants (`-log sum_j w_j N(x; mu_j, sigma_j^2 I)`). The double ring and
//! the helix are unnormalized (`-log` of a sum of unit-height bumps).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::process::{rng_from_seed, StateVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("embedding basis is not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("could not place {components} components with separation {separation} after {attempts} draws")]
    PlacementFailed {
        components: usize,
        separation: f64,
        attempts: usize,
    },
}

/// Value and gradient of a potential on `R^dim`.
pub trait Energy: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad U(x)` into `grad` and returns `U(x)`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// `-log sum_j exp(a_j)`; writes the softmax weights into `resp`.
fn neg_log_sum_exp(terms: &[f64], resp: &mut [f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        resp.iter_mut().for_each(|r| *r = 0.0);
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for (r, &a) in resp.iter_mut().zip(terms) {
        *r = (a - max).exp();
        total += *r;
    }
    for r in resp.iter_mut() {
        *r /= total;
    }
    -(max + total.ln())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Two concentric Gaussian rings of radii `r1 < r2` and radial width
/// `sigma`: `U(x) = -log[exp(-(|x|-r1)^2/2s^2) + exp(-(|x|-r2)^2/2s^2)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleRing {
    pub dim: usize,
    pub r1: f64,
    pub r2: f64,
    pub sigma: f64,
}

impl DoubleRing {
    pub fn new(dim: usize, r1: f64, r2: f64, sigma: f64) -> Result<Self, EnergyError> {
        if dim == 0 || !(r1 >= 0.0 && r2 > r1 && sigma > 0.0) {
            return Err(EnergyError::InvalidParameter(
                "double ring needs dim > 0, 0 <= r1 < r2, sigma > 0".into(),
            ));
        }
        Ok(Self { dim, r1, r2, sigma })
    }

    fn radial(&self, rho: f64) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        let terms = [
            -(rho - self.r1).powi(2) / (2.0 * s2),
            -(rho - self.r2).powi(2) / (2.0 * s2),
        ];
        let mut resp = [0.0; 2];
        let u = neg_log_sum_exp(&terms, &mut resp);
        let du = resp[0] * (rho - self.r1) / s2 + resp[1] * (rho - self.r2) / s2;
        (u, du)
    }

    /// 0 for the inner ring, 1 for the outer ring.
    pub fn nearest_ring(&self, x: &[f64]) -> usize {
        let rho = norm(x);
        usize::from((rho - self.r2).abs() < (rho - self.r1).abs())
    }
}

impl Energy for DoubleRing {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.radial(norm(x)).0
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let rho = norm(x);
        let (u, du) = self.radial(rho);
        if rho > 0.0 {
            let scale = du / rho;
            for (g, v) in grad.iter_mut().zip(x) {
                *g = scale * v;
            }
        } else {
            // The radial profile has a cone point at the origin.
            grad.iter_mut().for_each(|g| *g = 0.0);
        }
        u
    }
}

/// Mixture of isotropic Gaussians with normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    pub sigmas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(means: Vec<Vec<f64>>, sigmas: Vec<f64>, weights: Vec<f64>) -> Result<Self, EnergyError> {
        let k = means.len();
        if k == 0 || sigmas.len() != k || weights.len() != k {
            return Err(EnergyError::InvalidParameter(
                "mixture needs matching, non-empty means/sigmas/weights".into(),
            ));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim || m.iter().any(|v| !v.is_finite())) {
            return Err(EnergyError::InvalidParameter("means must share a positive dimension".into()));
        }
        if sigmas.iter().any(|s| !(*s > 0.0)) || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(EnergyError::InvalidParameter("sigmas and weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            dim,
            means,
            sigmas,
            weights,
        })
    }

    pub fn equal_weights(means: Vec<Vec<f64>>, sigma: f64) -> Result<Self, EnergyError> {
        let k = means.len();
        Self::new(means, vec![sigma; k], vec![1.0; k])
    }

    pub fn num_components(&self) -> usize {
        self.means.len()
    }

    pub fn nearest_mean(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (j, m) in self.means.iter().enumerate() {
            let d = sq_dist(x, m);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    }

    fn terms(&self, x: &[f64], out: &mut [f64]) {
        let half_d = self.dim as f64 / 2.0;
        for (j, a) in out.iter_mut().enumerate() {
            let s2 = self.sigmas[j] * self.sigmas[j];
            *a = self.weights[j].ln()
                - sq_dist(x, &self.means[j]) / (2.0 * s2)
                - half_d * (2.0 * std::f64::consts::PI * s2).ln();
        }
    }
}

impl Energy for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let k = self.num_components();
        let mut terms = vec![0.0; k];
        let mut resp = vec![0.0; k];
        self.terms(x, &mut terms);
        neg_log_sum_exp(&terms, &mut resp)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.num_components();
        let mut terms = vec![0.0; k];
        let mut resp = vec![0.0; k];
        self.terms(x, &mut terms);
        let u = neg_log_sum_exp(&terms, &mut resp);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for j in 0..k {
            let c = resp[j] / (self.sigmas[j] * self.sigmas[j]);
            if c == 0.0 {
                continue;
            }
            for ((g, xi), mi) in grad.iter_mut().zip(x).zip(&self.means[j]) {
                *g += c * (xi - mi);
            }
        }
        u
    }
}

/// Parameters of the interleaved double helix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HelixParams {
    /// Helix radius.
    pub a: f64,
    /// Rise per radian.
    pub b: f64,
    pub sigma_tube: f64,
    pub end_sigma: f64,
    pub end_weight: f64,
    /// Number of points discretizing `s in [0, 4 pi]`.
    pub samples: usize,
}

impl Default for HelixParams {
    fn default() -> Self {
        Self {
            a: 1.5,
            b: 0.5,
            sigma_tube: 0.15,
            end_sigma: 0.3,
            end_weight: 1.0,
            samples: 400,
        }
    }
}

/// Two helical Gaussian tubes around `c_+(s) = (a cos s, a sin s, b s)` and
/// `c_-(s) = (-a cos s, -a sin s, b s)`, `s in [0, 4 pi]`, plus an isotropic
/// Gaussian bump at each of the four curve ends.
///
/// A tube contributes `exp(-d^2 / 2 sigma_tube^2)` where `d` is the distance
/// to the nearest of `samples` evenly spaced curve points; an end bump
/// contributes `end_weight * exp(-|x - e|^2 / 2 end_sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "HelixParams", into = "HelixParams")]
pub struct Helix {
    params: HelixParams,
    // Struct-of-arrays curve samples for both tubes.
    curve_x: [Vec<f64>; 2],
    curve_y: [Vec<f64>; 2],
    curve_z: Vec<f64>,
    ends: [[f64; 3]; 4],
}

impl From<HelixParams> for Helix {
    fn from(params: HelixParams) -> Self {
        let n = params.samples.max(2);
        let s_max = 4.0 * std::f64::consts::PI;
        let s: Vec<f64> = (0..n).map(|k| s_max * k as f64 / (n - 1) as f64).collect();
        let px: Vec<f64> = s.iter().map(|s| params.a * s.cos()).collect();
        let py: Vec<f64> = s.iter().map(|s| params.a * s.sin()).collect();
        let curve_z: Vec<f64> = s.iter().map(|s| params.b * s).collect();
        let mx = px.iter().map(|v| -v).collect();
        let my = py.iter().map(|v| -v).collect();
        let top = params.b * s_max;
        let ends = [
            [params.a, 0.0, 0.0],
            [params.a * s_max.cos(), params.a * s_max.sin(), top],
            [-params.a, 0.0, 0.0],
            [-params.a * s_max.cos(), -params.a * s_max.sin(), top],
        ];
        Self {
            params,
            curve_x: [px, mx],
            curve_y: [py, my],
            curve_z,
            ends,
        }
    }
}

impl From<Helix> for HelixParams {
    fn from(h: Helix) -> Self {
        h.params
    }
}

impl Helix {
    pub fn new(params: HelixParams) -> Result<Self, EnergyError> {
        if !(params.a > 0.0
            && params.b > 0.0
            && params.sigma_tube > 0.0
            && params.end_sigma > 0.0
            && params.end_weight > 0.0
            && params.samples >= 2)
        {
            return Err(EnergyError::InvalidParameter(
                "helix parameters must be positive with at least 2 samples".into(),
            ));
        }
        Ok(Self::from(params))
    }

    pub fn params(&self) -> &HelixParams {
        &self.params
    }

    /// Squared distance and index of the nearest sample on tube `t`.
    fn nearest_on_tube(&self, t: usize, x: &[f64]) -> (f64, usize) {
        let (cx, cy, cz) = (&self.curve_x[t], &self.curve_y[t], &self.curve_z);
        let mut best = (f64::INFINITY, 0);
        for k in 0..cz.len() {
            let dx = x[0] - cx[k];
            let dy = x[1] - cy[k];
            let dz = x[2] - cz[k];
            let d = dx * dx + dy * dy + dz * dz;
            if d < best.0 {
                best = (d, k);
            }
        }
        best
    }

    /// 0 for the `c_+` tube, 1 for the `c_-` tube.
    pub fn nearest_tube(&self, x: &[f64]) -> usize {
        usize::from(self.nearest_on_tube(1, x).0 < self.nearest_on_tube(0, x).0)
    }

    pub fn end_points(&self) -> &[[f64; 3]; 4] {
        &self.ends
    }

    /// Point `c_tube(s)` on the continuous curve.
    pub fn curve_point(&self, tube: usize, s: f64) -> [f64; 3] {
        let sign = if tube == 0 { 1.0 } else { -1.0 };
        [sign * self.params.a * s.cos(), sign * self.params.a * s.sin(), self.params.b * s]
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let st2 = self.params.sigma_tube * self.params.sigma_tube;
        let se2 = self.params.end_sigma * self.params.end_sigma;
        let lw = self.params.end_weight.ln();
        let mut terms = [0.0; 6];
        let mut anchors = [[0.0; 3]; 6];
        for t in 0..2 {
            let (d2, k) = self.nearest_on_tube(t, x);
            terms[t] = -d2 / (2.0 * st2);
            anchors[t] = [self.curve_x[t][k], self.curve_y[t][k], self.curve_z[k]];
        }
        for (e, end) in self.ends.iter().enumerate() {
            terms[2 + e] = lw - sq_dist(x, end) / (2.0 * se2);
            anchors[2 + e] = *end;
        }
        let mut resp = [0.0; 6];
        let u = neg_log_sum_exp(&terms, &mut resp);
        if let Some(grad) = grad {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for j in 0..6 {
                let c = resp[j] / if j < 2 { st2 } else { se2 };
                for i in 0..3 {
                    grad[i] += c * (x[i] - anchors[j][i]);
                }
            }
        }
        u
    }
}

impl Energy for Helix {
    fn dim(&self) -> usize {
        3
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

/// A `k`-dimensional linear subspace of `R^D` with an isotropic Gaussian in
/// its orthogonal complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    /// `D x k` row-major; columns are orthonormal.
    pub basis: Vec<f64>,
    pub orthogonal_sigma: f64,
    pub seed: u64,
}

impl EmbeddingSpec {
    /// Random subspace: QR (modified Gram-Schmidt, two passes) of a seeded
    /// Gaussian `D x k` matrix.
    pub fn random(ambient_dim: usize, intrinsic_dim: usize, orthogonal_sigma: f64, seed: u64) -> Result<Self, EnergyError> {
        if intrinsic_dim == 0 || ambient_dim < intrinsic_dim {
            return Err(EnergyError::InvalidParameter(format!(
                "need 0 < k <= D, got k={intrinsic_dim}, D={ambient_dim}"
            )));
        }
        if !(orthogonal_sigma > 0.0) {
            return Err(EnergyError::InvalidParameter("orthogonal_sigma must be positive".into()));
        }
        let (d, k) = (ambient_dim, intrinsic_dim);
        let mut rng = rng_from_seed(seed);
        let mut cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        for j in 0..k {
            for _pass in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let proj: f64 = done[i].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                    for (v, q) in rest[0].iter_mut().zip(&done[i]) {
                        *v -= proj * q;
                    }
                }
            }
            let n = norm(&cols[j]);
            if n < 1e-12 {
                return Err(EnergyError::InvalidParameter("degenerate random basis".into()));
            }
            cols[j].iter_mut().for_each(|v| *v /= n);
        }
        let mut basis = vec![0.0; d * k];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                basis[i * k + j] = *v;
            }
        }
        Self::new(basis, d, k, orthogonal_sigma, seed)
    }

    pub fn new(basis: Vec<f64>, ambient_dim: usize, intrinsic_dim: usize, orthogonal_sigma: f64, seed: u64) -> Result<Self, EnergyError> {
        if basis.len() != ambient_dim * intrinsic_dim || intrinsic_dim == 0 || ambient_dim < intrinsic_dim {
            return Err(EnergyError::InvalidParameter("basis shape does not match D x k".into()));
        }
        let emb = Self {
            ambient_dim,
            intrinsic_dim,
            basis,
            orthogonal_sigma,
            seed,
        };
        let dev = emb.orthonormality_error();
        if dev > 1e-10 {
            return Err(EnergyError::NotOrthonormal(dev));
        }
        Ok(emb)
    }

    /// `max |B^T B - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let (d, k) = (self.ambient_dim, self.intrinsic_dim);
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = (0..d).map(|i| self.basis[i * k + a] * self.basis[i * k + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `B^T z`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let k = self.intrinsic_dim;
        let mut u = vec![0.0; k];
        for (i, zi) in z.iter().enumerate() {
            let row = &self.basis[i * k..(i + 1) * k];
            for (uj, bj) in u.iter_mut().zip(row) {
                *uj += bj * zi;
            }
        }
        u
    }

    /// `B u`.
    pub fn lift(&self, u: &[f64]) -> Vec<f64> {
        let k = self.intrinsic_dim;
        (0..self.ambient_dim)
            .map(|i| self.basis[i * k..(i + 1) * k].iter().zip(u).map(|(b, v)| b * v).sum())
            .collect()
    }
}

/// `U(z) = U_low(B^T z) + |z - B B^T z|^2 / (2 sigma_perp^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmented {
    pub low: Box<EnergySpec>,
    pub embedding: EmbeddingSpec,
}

impl Augmented {
    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let emb = &self.embedding;
        let u = emb.project(z);
        let back = emb.lift(&u);
        let s2 = emb.orthogonal_sigma * emb.orthogonal_sigma;
        let resid2: f64 = z.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum();
        match grad {
            None => self.low.value(&u) + resid2 / (2.0 * s2),
            Some(grad) => {
                let mut g_low = vec![0.0; u.len()];
                let low = self.low.value_and_gradient(&u, &mut g_low);
                let lifted = emb.lift(&g_low);
                for i in 0..z.len() {
                    grad[i] = lifted[i] + (z[i] - back[i]) / s2;
                }
                low + resid2 / (2.0 * s2)
            }
        }
    }
}

impl Energy for Augmented {
    fn dim(&self) -> usize {
        self.embedding.ambient_dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

/// A fully resolved landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnergySpec {
    DoubleRing(DoubleRing),
    #[serde(rename = "gaussian-mixture-2d")]
    GaussianMixture2d(GaussianMixture),
    #[serde(rename = "helix-3d")]
    Helix3d(Helix),
    IsotropicGmm(GaussianMixture),
    AugmentedEmbedding(Augmented),
}

impl EnergySpec {
    fn inner(&self) -> &dyn Energy {
        match self {
            EnergySpec::DoubleRing(e) => e,
            EnergySpec::GaussianMixture2d(e) | EnergySpec::IsotropicGmm(e) => e,
            EnergySpec::Helix3d(e) => e,
            EnergySpec::AugmentedEmbedding(e) => e,
        }
    }

    /// Dimension of the structured part (the landscape before embedding).
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            EnergySpec::AugmentedEmbedding(a) => a.low.intrinsic_dim(),
            other => other.dim(),
        }
    }

    /// Ground-truth basin of `x`: nearest ring radius, nearest mixture mean
    /// or nearest helix tube. Embedded landscapes label the projection
    /// `B^T x`.
    pub fn analytic_basin(&self, x: &[f64]) -> usize {
        match self {
            EnergySpec::DoubleRing(e) => e.nearest_ring(x),
            EnergySpec::GaussianMixture2d(e) | EnergySpec::IsotropicGmm(e) => e.nearest_mean(x),
            EnergySpec::Helix3d(e) => e.nearest_tube(x),
            EnergySpec::AugmentedEmbedding(a) => a.low.analytic_basin(&a.embedding.project(x)),
        }
    }

    pub fn num_basins(&self) -> usize {
        match self {
            EnergySpec::DoubleRing(_) | EnergySpec::Helix3d(_) => 2,
            EnergySpec::GaussianMixture2d(e) | EnergySpec::IsotropicGmm(e) => e.num_components(),
            EnergySpec::AugmentedEmbedding(a) => a.low.num_basins(),
        }
    }

    /// Coordinates in the structured subspace (`B^T x` when embedded).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            EnergySpec::AugmentedEmbedding(a) => a.embedding.project(x),
            _ => x.to_vec(),
        }
    }
}

impl Energy for EnergySpec {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner().value(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.inner().value_and_gradient(x, grad)
    }
}

fn check_dim(spec: &EnergySpec, x: &StateVector) -> Result<(), EnergyError> {
    if x.dim() != spec.dim() {
        return Err(EnergyError::DimensionMismatch {
            expected: spec.dim(),
            got: x.dim(),
        });
    }
    Ok(())
}

pub fn energy_value(spec: &EnergySpec, x: &StateVector) -> Result<f64, EnergyError> {
    check_dim(spec, x)?;
    Ok(spec.value(x.as_slice()))
}

pub fn energy_gradient(spec: &EnergySpec, x: &StateVector) -> Result<Vec<f64>, EnergyError> {
    check_dim(spec, x)?;
    let mut g = vec![0.0; spec.dim()];
    spec.value_and_gradient(x.as_slice(), &mut g);
    Ok(g)
}

pub fn augment_energy(low: EnergySpec, emb: EmbeddingSpec) -> Result<EnergySpec, EnergyError> {
    if low.dim() != emb.intrinsic_dim {
        return Err(EnergyError::DimensionMismatch {
            expected: emb.intrinsic_dim,
            got: low.dim(),
        });
    }
    Ok(EnergySpec::AugmentedEmbedding(Augmented {
        low: Box::new(low),
        embedding: emb,
    }))
}

/// Ground truth returned with a generated mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTruth {
    pub means: Vec<Vec<f64>>,
    pub min_pairwise_distance: f64,
    /// Number of full re-draws needed to meet the separation floor.
    pub redraws: usize,
}

fn min_pairwise(means: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            best = best.min(sq_dist(&means[i], &means[j]).sqrt());
        }
    }
    best
}

const MAX_PLACEMENT_DRAWS: usize = 10_000;

/// Equal-weight mixture with means uniform on the sphere of `radius`,
/// re-drawn until all pairwise distances are at least `4 * component_sigma`.
pub fn make_isotropic_gmm(
    num_components: usize,
    dim: usize,
    radius: f64,
    component_sigma: f64,
    seed: u64,
) -> Result<(EnergySpec, MixtureTruth), EnergyError> {
    if num_components == 0 || dim == 0 || !(radius > 0.0) || !(component_sigma > 0.0) {
        return Err(EnergyError::InvalidParameter(
            "need num_components >= 1, dim >= 1, radius > 0, component_sigma > 0".into(),
        ));
    }
    let floor = 4.0 * component_sigma;
    let mut rng = rng_from_seed(seed);
    for redraws in 0..MAX_PLACEMENT_DRAWS {
        let means: Vec<Vec<f64>> = (0..num_components)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    break v.iter().map(|x| radius * x / n).collect();
                }
            })
            .collect();
        let min_d = min_pairwise(&means);
        if min_d >= floor {
            let gmm = GaussianMixture::equal_weights(means.clone(), component_sigma)?;
            return Ok((
                EnergySpec::IsotropicGmm(gmm),
                MixtureTruth {
                    means,
                    min_pairwise_distance: min_d,
                    redraws,
                },
            ));
        }
    }
    Err(EnergyError::PlacementFailed {
        components: num_components,
        separation: floor,
        attempts: MAX_PLACEMENT_DRAWS,
    })
}

/// Equal-weight planar mixture with means uniform in `[-h, h]^2`, re-drawn
/// until every pair is at least `min_separation` apart.
pub fn make_planar_gmm(
    num_components: usize,
    half_width: f64,
    component_sigma: f64,
    min_separation: f64,
    seed: u64,
) -> Result<(EnergySpec, MixtureTruth), EnergyError> {
    if num_components == 0 || !(half_width > 0.0) || !(component_sigma > 0.0) || !(min_separation >= 0.0) {
        return Err(EnergyError::InvalidParameter("invalid planar mixture parameters".into()));
    }
    let mut rng = rng_from_seed(seed);
    for redraws in 0..MAX_PLACEMENT_DRAWS {
        let means: Vec<Vec<f64>> = (0..num_components)
            .map(|_| {
                (0..2)
                    .map(|_| rng.random_range(-half_width..=half_width))
                    .collect()
            })
            .collect();
        let min_d = min_pairwise(&means);
        if min_d >= min_separation {
            let gmm = GaussianMixture::equal_weights(means.clone(), component_sigma)?;
            return Ok((
                EnergySpec::GaussianMixture2d(gmm),
                MixtureTruth {
                    means,
                    min_pairwise_distance: min_d,
                    redraws,
                },
            ));
        }
    }
    Err(EnergyError::PlacementFailed {
        components: num_components,
        separation: min_separation,
        attempts: MAX_PLACEMENT_DRAWS,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleRingConfig {
    pub dim: usize,
    pub r1: f64,
    pub r2: f64,
    pub sigma: f64,
}

impl Default for DoubleRingConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            r1: 1.0,
            r2: 3.0,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarMixtureConfig {
    pub num_components: usize,
    pub half_width: f64,
    pub component_sigma: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for PlanarMixtureConfig {
    fn default() -> Self {
        Self {
            num_components: 3,
            half_width: 5.0,
            component_sigma: 0.5,
            min_separation: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsotropicMixtureConfig {
    pub num_components: usize,
    pub dim: usize,
    pub radius: f64,
    pub component_sigma: f64,
    pub seed: u64,
}

impl Default for IsotropicMixtureConfig {
    fn default() -> Self {
        Self {
            num_components: 7,
            dim: 100,
            radius: 10.0,
            component_sigma: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub low: Box<EnergyConfig>,
    pub ambient_dim: usize,
    #[serde(default = "default_orthogonal_sigma")]
    pub orthogonal_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_orthogonal_sigma() -> f64 {
    1.0
}

/// Manifest-level description of a landscape; [`EnergyConfig::build`]
/// resolves every random choice from the embedded seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnergyConfig {
    DoubleRing(DoubleRingConfig),
    #[serde(rename = "gaussian-mixture-2d")]
    GaussianMixture2d(PlanarMixtureConfig),
    #[serde(rename = "helix-3d")]
    Helix3d(HelixParams),
    IsotropicGmm(IsotropicMixtureConfig),
    AugmentedEmbedding(EmbeddingConfig),
}

impl EnergyConfig {
    pub fn build(&self) -> Result<EnergySpec, EnergyError> {
        match self {
            EnergyConfig::DoubleRing(c) => Ok(EnergySpec::DoubleRing(DoubleRing::new(c.dim, c.r1, c.r2, c.sigma)?)),
            EnergyConfig::GaussianMixture2d(c) => {
                make_planar_gmm(c.num_components, c.half_width, c.component_sigma, c.min_separation, c.seed)
                    .map(|(spec, _)| spec)
            }
            EnergyConfig::Helix3d(p) => Ok(EnergySpec::Helix3d(Helix::new(p.clone())?)),
            EnergyConfig::IsotropicGmm(c) => {
                make_isotropic_gmm(c.num_components, c.dim, c.radius, c.component_sigma, c.seed).map(|(spec, _)| spec)
            }
            EnergyConfig::AugmentedEmbedding(c) => {
                let low = c.low.build()?;
                let emb = EmbeddingSpec::random(c.ambient_dim, low.dim(), c.orthogonal_sigma, c.seed)?;
                augment_energy(low, emb)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    fn central_difference(e: &dyn Energy, x: &[f64], h: f64) -> Vec<f64> {
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let up = e.value(&xp);
                xp[i] = x[i] - h;
                let dn = e.value(&xp);
                xp[i] = x[i];
                (up - dn) / (2.0 * h)
            })
            .collect()
    }

    fn assert_fd_gradient(e: &dyn Energy, points: &[Vec<f64>]) {
        for x in points {
            let mut g = vec![0.0; x.len()];
            e.value_and_gradient(x, &mut g);
            let fd = central_difference(e, x, 1e-5);
            let diff = norm(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>());
            let rel = diff / (1.0 + norm(&g));
            assert!(rel < 1e-5, "gradient mismatch {rel:e} at {x:?}");
        }
    }

    fn random_points(dim: usize, n: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    fn ring() -> EnergySpec {
        EnergySpec::DoubleRing(DoubleRing::new(2, 1.0, 3.0, 0.1).unwrap())
    }

    #[test]
    fn single_gaussian_at_mode() {
        for d in [1, 2, 5] {
            let g = GaussianMixture::equal_weights(vec![vec![0.0; d]], 1.0).unwrap();
            let spec = EnergySpec::IsotropicGmm(g);
            let u = energy_value(&spec, &StateVector::zeros(d)).unwrap();
            let expected = d as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln();
            assert!((u - expected).abs() < 1e-12);
            let grad = energy_gradient(&spec, &StateVector::zeros(d)).unwrap();
            assert!(grad.iter().all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn double_ring_on_inner_ring_is_near_zero() {
        // Oracle: -log(1 + exp(-(1 - 3)^2 / (2 * 0.01))) = -log1p(exp(-200)).
        let expected = -(-200.0f64).exp().ln_1p();
        let u = energy_value(&ring(), &sv(&[0.6, 0.8])).unwrap();
        assert!((u - expected).abs() < 1e-15);
        assert!(u.abs() < 1e-80);
    }

    #[test]
    fn double_ring_is_radially_symmetric() {
        let spec = ring();
        let mut rng = rng_from_seed(4);
        for x in random_points(2, 50, 2.0, 1) {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (c, s) = (theta.cos(), theta.sin());
            let qx = [c * x[0] - s * x[1], s * x[0] + c * x[1]];
            assert!((spec.value(&x) - spec.value(&qx)).abs() < 1e-9);
            let g = energy_gradient(&spec, &sv(&x)).unwrap();
            let cross = g[0] * x[1] - g[1] * x[0];
            assert!(cross.abs() < 1e-9 * (1.0 + norm(&g) * norm(&x)), "gradient not radial");
        }
    }

    #[test]
    fn finite_difference_gradients_for_every_kind() {
        let planar = make_planar_gmm(3, 5.0, 0.5, 5.0, 3).unwrap().0;
        let iso = make_isotropic_gmm(5, 10, 3.0, 0.7, 2).unwrap().0;
        let helix = EnergySpec::Helix3d(Helix::new(HelixParams::default()).unwrap());
        let ring_aug = augment_energy(ring(), EmbeddingSpec::random(12, 2, 1.0, 5).unwrap()).unwrap();
        let helix_aug = augment_energy(helix.clone(), EmbeddingSpec::random(9, 3, 0.8, 6).unwrap()).unwrap();
        let cases: Vec<(EnergySpec, f64)> = vec![
            (ring(), 2.0),
            (planar, 4.0),
            (iso, 2.0),
            (helix, 2.0),
            (ring_aug, 1.5),
            (helix_aug, 1.5),
        ];
        for (i, (spec, scale)) in cases.iter().enumerate() {
            let mut pts = random_points(spec.dim(), 100, *scale, 10 + i as u64);
            if let EnergySpec::Helix3d(_) = spec {
                for p in pts.iter_mut() {
                    p[2] = p[2].abs() * 2.0;
                }
            }
            assert_fd_gradient(spec, &pts);
        }
    }

    #[test]
    fn augmented_energy_on_and_off_subspace() {
        let emb = EmbeddingSpec::random(20, 2, 0.7, 9).unwrap();
        let aug = augment_energy(ring(), emb.clone()).unwrap();
        let low = ring();
        for u in random_points(2, 20, 2.0, 3) {
            let z = emb.lift(&u);
            assert!((aug.value(&z) - low.value(&u)).abs() < 1e-9);
        }
        for z in random_points(20, 20, 1.0, 4) {
            let back = emb.lift(&emb.project(&z));
            let perp: Vec<f64> = z.iter().zip(&back).map(|(a, b)| a - b).collect();
            let expected = low.value(&[0.0, 0.0]) + perp.iter().map(|v| v * v).sum::<f64>() / (2.0 * 0.49);
            assert!((aug.value(&perp) - expected).abs() < 1e-8);
        }
        assert!(matches!(
            augment_energy(ring(), EmbeddingSpec::random(20, 3, 1.0, 0).unwrap()),
            Err(EnergyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_bases_are_orthonormal() {
        for (d, k, seed) in [(100, 2, 0), (100, 3, 1), (7, 7, 2), (3, 1, 3)] {
            let emb = EmbeddingSpec::random(d, k, 1.0, seed).unwrap();
            assert!(emb.orthonormality_error() < 1e-10);
        }
        assert!(EmbeddingSpec::random(2, 3, 1.0, 0).is_err());
        assert!(matches!(
            EmbeddingSpec::new(vec![1.0, 1.0], 2, 1, 1.0, 0),
            Err(EnergyError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn isotropic_gmm_construction() {
        let (spec, truth) = make_isotropic_gmm(12, 100, 10.0, 1.0, 7).unwrap();
        for m in &truth.means {
            assert!((norm(m) - 10.0).abs() < 1e-10);
        }
        assert!(truth.min_pairwise_distance >= 4.0);
        // Independent uniform directions in 100 dimensions are nearly
        // orthogonal, so distances sit near sqrt(2) * 10.
        let mut ds = Vec::new();
        for i in 0..12 {
            for j in i + 1..12 {
                ds.push(sq_dist(&truth.means[i], &truth.means[j]).sqrt());
            }
        }
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        assert!((mean - 200f64.sqrt()).abs() < 0.5, "mean pairwise distance {mean}");
        assert_eq!(spec.num_basins(), 12);
        for (j, m) in truth.means.iter().enumerate() {
            assert_eq!(spec.analytic_basin(m), j);
        }
    }

    #[test]
    fn single_component_gmm_labels_everything_zero() {
        let (spec, _) = make_isotropic_gmm(1, 4, 10.0, 1.0, 0).unwrap();
        for x in random_points(4, 30, 5.0, 8) {
            assert_eq!(spec.analytic_basin(&x), 0);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(make_isotropic_gmm(0, 2, 1.0, 1.0, 0).is_err());
        assert!(make_isotropic_gmm(2, 2, -1.0, 1.0, 0).is_err());
        assert!(DoubleRing::new(2, 3.0, 1.0, 0.1).is_err());
        assert!(matches!(
            make_isotropic_gmm(50, 1, 1.0, 1.0, 0),
            Err(EnergyError::PlacementFailed { .. })
        ));
        assert!(matches!(
            energy_value(&ring(), &sv(&[1.0, 2.0, 3.0])),
            Err(EnergyError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn helix_labels_and_ends() {
        let h = Helix::new(HelixParams::default()).unwrap();
        for s in [0.3, 2.0, 7.5, 12.0] {
            assert_eq!(h.nearest_tube(&h.curve_point(0, s)), 0);
            assert_eq!(h.nearest_tube(&h.curve_point(1, s)), 1);
        }
        let ends = h.end_points();
        assert_eq!(h.nearest_tube(&ends[0]), 0);
        assert_eq!(h.nearest_tube(&ends[1]), 0);
        assert_eq!(h.nearest_tube(&ends[2]), 1);
        assert_eq!(h.nearest_tube(&ends[3]), 1);
        // Curve points are low-energy compared with the gap between tubes.
        let on = h.value(&h.curve_point(0, 5.0));
        let mid = {
            let p = h.curve_point(0, 5.0);
            [p[0] * 0.0, p[1] * 0.0, p[2]]
        };
        assert!(h.value(&mid) > on + 10.0);
    }

    #[test]
    fn config_round_trip_and_build() {
        let json = r#"{"kind":"augmented-embedding","low":{"kind":"gaussian-mixture-2d","seed":3},"ambient_dim":100,"seed":11}"#;
        let cfg: EnergyConfig = serde_json::from_str(json).unwrap();
        let spec = cfg.build().unwrap();
        assert_eq!(spec.dim(), 100);
        assert_eq!(spec.intrinsic_dim(), 2);
        assert_eq!(spec.num_basins(), 3);
        assert_eq!(spec, cfg.build().unwrap());
        let back: EnergyConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let low_cfg: EnergyConfig = serde_json::from_str(r#"{"kind":"gaussian-mixture-2d","seed":3}"#).unwrap();
        let low = low_cfg.build().unwrap();
        if let (EnergySpec::AugmentedEmbedding(a), EnergySpec::GaussianMixture2d(g)) = (&spec, &low) {
            assert_eq!(*a.low, EnergySpec::GaussianMixture2d(g.clone()));
        } else {
            panic!("unexpected kinds");
        }

        let spec_json = serde_json::to_string(&spec).unwrap();
        let spec_back: EnergySpec = serde_json::from_str(&spec_json).unwrap();
        assert_eq!(spec_back, spec);
    }
}
