//! Exact computations on small finite Markov chains: exit probabilities,
//! quasi-stationary distributions, Bayes risk of two-sample discrimination
//! and a checker for the same-well / cross-well risk bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::process::SimRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("malformed chain: {0}")]
    Malformed(String),
    #[error("state {state} is not in well {well}")]
    NotInWell { state: usize, well: usize },
    #[error("well {0} does not exist")]
    UnknownWell(usize),
    #[error("well {0} has no unique quasi-stationary distribution (restricted block is not primitive)")]
    NoUniqueQsd(usize),
    #[error("distributions have different supports: {0} vs {1}")]
    SupportMismatch(usize, usize),
    #[error("not a probability vector: {0}")]
    NotADistribution(String),
    #[error("need t_star < horizon, got t_star={t_star}, horizon={horizon}")]
    InvalidHorizon { t_star: usize, horizon: usize },
}

/// Row-stochastic transition matrix with a partition into wells and a core
/// subset of each well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    pub transition: Vec<Vec<f64>>,
    pub wells: Vec<Vec<usize>>,
    pub cores: Vec<Vec<usize>>,
}

const ROW_TOL: f64 = 1e-12;

impl FiniteChain {
    pub fn new(transition: Vec<Vec<f64>>, wells: Vec<Vec<usize>>, cores: Vec<Vec<usize>>) -> Result<Self, OracleError> {
        let chain = Self {
            transition,
            wells,
            cores,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn num_states(&self) -> usize {
        self.transition.len()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let s = self.num_states();
        if s == 0 {
            return Err(OracleError::Malformed("empty transition matrix".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != s {
                return Err(OracleError::Malformed(format!("row {i} has {} entries, expected {s}", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(OracleError::Malformed(format!("row {i} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOL {
                return Err(OracleError::Malformed(format!("row {i} sums to {total}")));
            }
        }
        let mut owner = vec![usize::MAX; s];
        for (w, well) in self.wells.iter().enumerate() {
            if well.is_empty() {
                return Err(OracleError::Malformed(format!("well {w} is empty")));
            }
            for &x in well {
                if x >= s {
                    return Err(OracleError::Malformed(format!("well {w} names state {x} >= {s}")));
                }
                if owner[x] != usize::MAX {
                    return Err(OracleError::Malformed(format!("state {x} is in more than one well")));
                }
                owner[x] = w;
            }
        }
        if let Some(x) = owner.iter().position(|&w| w == usize::MAX) {
            return Err(OracleError::Malformed(format!("state {x} is in no well")));
        }
        if self.cores.len() != self.wells.len() {
            return Err(OracleError::Malformed("need exactly one core per well".into()));
        }
        for (w, core) in self.cores.iter().enumerate() {
            if core.is_empty() {
                return Err(OracleError::Malformed(format!("core {w} is empty")));
            }
            if let Some(&x) = core.iter().find(|&&x| x >= s || owner[x] != w) {
                return Err(OracleError::Malformed(format!("core {w} contains state {x} outside its well")));
            }
        }
        Ok(())
    }

    /// Index of the well containing `state`.
    pub fn well_of(&self, state: usize) -> Option<usize> {
        self.wells.iter().position(|w| w.contains(&state))
    }

    fn well(&self, w: usize) -> Result<&[usize], OracleError> {
        self.wells.get(w).map(Vec::as_slice).ok_or(OracleError::UnknownWell(w))
    }

    /// Restriction of the transition matrix to `well` (substochastic).
    fn block(&self, well: &[usize]) -> Vec<Vec<f64>> {
        well.iter()
            .map(|&i| well.iter().map(|&j| self.transition[i][j]).collect())
            .collect()
    }

    /// Law of `X_t` started from `x`: row `x` of `P^t`.
    pub fn marginal(&self, x: usize, t: usize) -> Vec<f64> {
        let mut mu = vec![0.0; self.num_states()];
        mu[x] = 1.0;
        for _ in 0..t {
            mu = vec_mat(&mu, &self.transition);
        }
        mu
    }
}

fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; m.first().map_or(0, Vec::len)];
    for (vi, row) in v.iter().zip(m) {
        if *vi == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(row) {
            *o += vi * p;
        }
    }
    out
}

/// `P(tau <= horizon | X_0 = x)` where `tau` is the first step at which the
/// chain is outside `well`.
pub fn exit_probability(chain: &FiniteChain, x: usize, well: usize, horizon: usize) -> Result<f64, OracleError> {
    let members = chain.well(well)?;
    let pos = members
        .iter()
        .position(|&s| s == x)
        .ok_or(OracleError::NotInWell { state: x, well })?;
    // Probability of leaving the well in one step from each member.
    let leave: Vec<f64> = members
        .iter()
        // Summing the outside entries directly avoids 1 - (1 - tiny).
        .map(|&i| {
            (0..chain.num_states())
                .filter(|j| !members.contains(j))
                .map(|j| chain.transition[i][j])
                .sum()
        })
        .collect();
    let q = chain.block(members);
    // e_k(y) = P(exit within k steps | X_0 = y).
    let mut e = vec![0.0; members.len()];
    for _ in 0..horizon {
        e = (0..members.len())
            .map(|i| leave[i] + q[i].iter().zip(&e).map(|(p, v)| p * v).sum::<f64>())
            .collect();
    }
    Ok(e[pos])
}

/// Total variation distance `1/2 sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn check_distribution(p: &[f64]) -> Result<(), OracleError> {
    if p.is_empty() {
        return Err(OracleError::NotADistribution("empty".into()));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(OracleError::NotADistribution("negative or non-finite entry".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(OracleError::NotADistribution(format!("sums to {total}")));
    }
    Ok(())
}

/// Minimal error of any test deciding which of `p0`, `p1` produced a sample
/// under equal priors: `(1 - TV(p0, p1)) / 2`.
///
/// Evaluated as `sum_i min(p0_i, p1_i) / (|p0| + |p1|)`, which equals
/// `(1 - TV) / 2` for probability vectors and is exactly `1/2` for equal
/// inputs and exactly `0` for disjoint supports.
pub fn bayes_risk(p0: &[f64], p1: &[f64]) -> Result<f64, OracleError> {
    if p0.len() != p1.len() {
        return Err(OracleError::SupportMismatch(p0.len(), p1.len()));
    }
    check_distribution(p0)?;
    check_distribution(p1)?;
    let overlap: f64 = p0.iter().zip(p1).map(|(a, b)| a.min(*b)).sum();
    let mass: f64 = p0.iter().sum::<f64>() + p1.iter().sum::<f64>();
    Ok(overlap / mass)
}

fn is_primitive(block: &[Vec<f64>]) -> bool {
    let n = block.len();
    let pattern: Vec<Vec<bool>> = block.iter().map(|r| r.iter().map(|p| *p > 0.0).collect()).collect();
    // Wielandt: a primitive n x n pattern has a positive power of order at
    // most (n - 1)^2 + 1.
    let bound = (n - 1) * (n - 1) + 1;
    let mut power = pattern.clone();
    for _ in 1..bound {
        if power.iter().all(|r| r.iter().all(|&b| b)) {
            return true;
        }
        power = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| power[i][k] && pattern[k][j])).collect())
            .collect();
    }
    power.iter().all(|r| r.iter().all(|&b| b))
}

/// Quasi-stationary distribution of a well: the normalized leading left
/// eigenvector of its restricted block, by power iteration.
pub fn quasi_stationary(chain: &FiniteChain, well: usize) -> Result<Vec<f64>, OracleError> {
    let members = chain.well(well)?;
    let q = chain.block(members);
    if !is_primitive(&q) {
        return Err(OracleError::NoUniqueQsd(well));
    }
    let n = members.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let mut next = vec_mat(&pi, &q);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual < 1e-12 {
            break;
        }
    }
    Ok(pi)
}

/// `epsilon = max_{x in core} TV(law of X_t | X_0 = x, no exit by t; pi_w)`
/// together with the quasi-stationary reference `pi_w` (indexed like the
/// well's member list).
pub fn conditional_mixing_gap(chain: &FiniteChain, well: usize, core: &[usize], t: usize) -> Result<(f64, Vec<f64>), OracleError> {
    let members = chain.well(well)?;
    let pi = quasi_stationary(chain, well)?;
    let q = chain.block(members);
    let mut eps: f64 = 0.0;
    for &x in core {
        let pos = members
            .iter()
            .position(|&s| s == x)
            .ok_or(OracleError::NotInWell { state: x, well })?;
        let mut mu = vec![0.0; members.len()];
        mu[pos] = 1.0;
        for _ in 0..t {
            mu = vec_mat(&mu, &q);
        }
        let survive: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|v| *v /= survive);
        eps = eps.max(total_variation(&mu, &pi));
    }
    Ok((eps, pi))
}

/// Risk check for one pair of core states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub x0: usize,
    pub x1: usize,
    pub same_well: bool,
    pub risk: f64,
    /// Lower bound `(1 - delta)(1/2 - eps)` for same-well pairs, upper bound
    /// `delta` for cross-well pairs.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub t_star: usize,
    pub horizon: usize,
    /// Largest probability of leaving the own well within `horizon` steps
    /// from any core state.
    pub delta: f64,
    /// Largest conditional mixing gap at `t_star` over all wells.
    pub epsilon: f64,
    /// Hypotheses that fail (e.g. `epsilon >= 1/2`); bounds are still
    /// checked but carry no guarantee then.
    pub assumption_violations: Vec<String>,
    pub pairs: Vec<PairCheck>,
    pub violations: usize,
}

impl IdentifiabilityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Slack for floating-point evaluation of the bounds.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Checks that the Bayes risk of discriminating `X_{t*}` from two core
/// states is at least `(1 - delta)(1/2 - eps)` when they share a well and at
/// most `delta` when they do not.
pub fn verify_identifiability(chain: &FiniteChain, t_star: usize, horizon: usize) -> Result<IdentifiabilityReport, OracleError> {
    chain.validate()?;
    if t_star >= horizon {
        return Err(OracleError::InvalidHorizon { t_star, horizon });
    }
    let mut delta: f64 = 0.0;
    let mut epsilon: f64 = 0.0;
    let mut assumption_violations = Vec::new();
    for (w, core) in chain.cores.iter().enumerate() {
        for &x in core {
            delta = delta.max(exit_probability(chain, x, w, horizon)?);
        }
        match conditional_mixing_gap(chain, w, core, t_star) {
            Ok((e, _)) => epsilon = epsilon.max(e),
            Err(OracleError::NoUniqueQsd(_)) => {
                assumption_violations.push(format!("well {w} has no unique quasi-stationary distribution"));
                epsilon = f64::INFINITY;
            }
            Err(e) => return Err(e),
        }
    }
    if epsilon >= 0.5 {
        assumption_violations.push(format!("epsilon = {epsilon} >= 1/2"));
    }
    if delta >= 0.5 {
        assumption_violations.push(format!("delta = {delta} >= 1/2"));
    }

    let core_states: Vec<(usize, usize)> = chain
        .cores
        .iter()
        .enumerate()
        .flat_map(|(w, c)| c.iter().map(move |&x| (x, w)))
        .collect();
    let laws: Vec<Vec<f64>> = core_states.iter().map(|&(x, _)| chain.marginal(x, t_star)).collect();
    let mut pairs = Vec::new();
    for a in 0..core_states.len() {
        for b in a + 1..core_states.len() {
            let (x0, w0) = core_states[a];
            let (x1, w1) = core_states[b];
            let risk = bayes_risk(&laws[a], &laws[b])?;
            let same_well = w0 == w1;
            let (bound, holds) = if same_well {
                let bound = (1.0 - delta) * (0.5 - epsilon);
                (bound, risk >= bound - BOUND_TOLERANCE)
            } else {
                (delta, risk <= delta + BOUND_TOLERANCE)
            };
            pairs.push(PairCheck {
                x0,
                x1,
                same_well,
                risk,
                bound,
                holds,
            });
        }
    }
    let violations = pairs.iter().filter(|p| !p.holds).count();
    Ok(IdentifiabilityReport {
        t_star,
        horizon,
        delta,
        epsilon,
        assumption_violations,
        pairs,
        violations,
    })
}

/// Chain file format: a chain plus optional horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFixture {
    #[serde(flatten)]
    pub chain: FiniteChain,
    #[serde(default)]
    pub t_star: Option<usize>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl ChainFixture {
    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let fixture: ChainFixture = serde_json::from_str(text).map_err(|e| OracleError::Malformed(e.to_string()))?;
        fixture.chain.validate()?;
        Ok(fixture)
    }
}

/// Six states in two wells `{0,1,2}` and `{3,4,5}`; every state sends
/// probability `leak` to its mirror in the other well. Cores are `{0,1}` and
/// `{3,4}`.
pub fn nearly_reducible_chain(leak: f64) -> FiniteChain {
    let within = [[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]];
    let mut p = vec![vec![0.0; 6]; 6];
    for block in 0..2 {
        for i in 0..3 {
            for j in 0..3 {
                p[3 * block + i][3 * block + j] = (1.0 - leak) * within[i][j];
            }
            p[3 * block + i][3 * (1 - block) + i] = leak;
        }
    }
    FiniteChain {
        transition: p,
        wells: vec![vec![0, 1, 2], vec![3, 4, 5]],
        cores: vec![vec![0, 1], vec![3, 4]],
    }
}

/// Random metastable chain on `num_states` states split into `num_wells`
/// contiguous wells. Each row keeps `1 - leak` of its mass inside its own
/// well (with strictly positive random weights, so wells are primitive)
/// and spreads `leak` over states of other wells. Cores are random
/// non-empty subsets.
pub fn random_metastable_chain(num_states: usize, num_wells: usize, leak: f64, rng: &mut SimRng) -> FiniteChain {
    assert!(num_wells >= 1 && num_states >= num_wells);
    assert!((0.0..1.0).contains(&leak));
    let mut wells: Vec<Vec<usize>> = vec![Vec::new(); num_wells];
    for s in 0..num_states {
        // First give every well one state, then assign at random.
        let w = if s < num_wells { s } else { rng.random_range(0..num_wells) };
        wells[w].push(s);
    }
    let mut transition = vec![vec![0.0; num_states]; num_states];
    for well in &wells {
        let others: Vec<usize> = (0..num_states).filter(|s| !well.contains(s)).collect();
        for &i in well {
            let inner: Vec<f64> = well.iter().map(|_| rng.random_range(0.05..1.0)).collect();
            let inner_total: f64 = inner.iter().sum();
            let outside = if others.is_empty() || num_wells == 1 { 0.0 } else { leak };
            for (&j, v) in well.iter().zip(&inner) {
                transition[i][j] = (1.0 - outside) * v / inner_total;
            }
            if outside > 0.0 {
                let outer: Vec<f64> = others.iter().map(|_| rng.random::<f64>()).collect();
                let outer_total: f64 = outer.iter().sum();
                for (&j, v) in others.iter().zip(&outer) {
                    transition[i][j] = outside * v / outer_total;
                }
            }
        }
    }
    // Renormalize against rounding.
    for row in transition.iter_mut() {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    let cores = wells
        .iter()
        .map(|well| {
            let mut core: Vec<usize> = well.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
            if core.is_empty() {
                core.push(well[rng.random_range(0..well.len())]);
            }
            core
        })
        .collect();
    FiniteChain {
        transition,
        wells,
        cores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::rng_from_seed;
    use proptest::prelude::*;

    fn two_state(p: f64, q: f64) -> FiniteChain {
        FiniteChain::new(
            vec![vec![1.0 - p, p], vec![q, 1.0 - q]],
            vec![vec![0], vec![1]],
            vec![vec![0], vec![1]],
        )
        .unwrap()
    }

    #[test]
    fn exit_probability_oracles() {
        let c = two_state(0.3, 0.1);
        assert_eq!(exit_probability(&c, 0, 0, 0).unwrap(), 0.0);
        assert_eq!(exit_probability(&c, 0, 0, 1).unwrap(), 0.3);
        // 1 - 0.7^3 by hand.
        assert!((exit_probability(&c, 0, 0, 3).unwrap() - (1.0 - 0.343)).abs() < 1e-15);

        let whole = FiniteChain::new(
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![vec![0, 1]],
            vec![vec![0]],
        )
        .unwrap();
        for t in [0, 1, 10, 100] {
            assert_eq!(exit_probability(&whole, 1, 0, t).unwrap(), 0.0);
        }
        assert_eq!(
            exit_probability(&c, 1, 0, 1),
            Err(OracleError::NotInWell { state: 1, well: 0 })
        );
    }

    #[test]
    fn tiny_leaks_are_not_lost_to_cancellation() {
        let c = nearly_reducible_chain(1e-17);
        let e = exit_probability(&c, 0, 0, 1).unwrap();
        assert_eq!(e, 1e-17);
    }

    #[test]
    fn exit_probability_matches_absorbing_chain_power() {
        // Independent route: make the complement absorbing and read the
        // absorbed mass after T steps.
        let mut rng = rng_from_seed(3);
        let c = random_metastable_chain(7, 2, 0.2, &mut rng);
        let well = &c.wells[0];
        let s = c.num_states();
        let mut absorbing = c.transition.clone();
        for i in 0..s {
            if !well.contains(&i) {
                absorbing[i] = (0..s).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
            }
        }
        for t in [1, 2, 5, 20] {
            let mut mu = vec![0.0; s];
            mu[well[0]] = 1.0;
            for _ in 0..t {
                mu = vec_mat(&mu, &absorbing);
            }
            let outside: f64 = (0..s).filter(|j| !well.contains(j)).map(|j| mu[j]).sum();
            let dp = exit_probability(&c, well[0], 0, t).unwrap();
            assert!((dp - outside).abs() < 1e-14, "t={t}: {dp} vs {outside}");
        }
    }

    #[test]
    fn bayes_risk_oracles() {
        assert_eq!(bayes_risk(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap(), 0.5);
        assert_eq!(bayes_risk(&[0.1, 0.9, 0.0, 0.0], &[0.0, 0.0, 0.7, 0.3]).unwrap(), 0.0);
        let r = bayes_risk(&[0.7, 0.3], &[0.4, 0.6]).unwrap();
        assert!((r - 0.35).abs() < 1e-15);
        assert!((total_variation(&[0.7, 0.3], &[0.4, 0.6]) - 0.3).abs() < 1e-15);
        assert_eq!(bayes_risk(&[1.0], &[0.5, 0.5]), Err(OracleError::SupportMismatch(1, 2)));
        assert!(matches!(bayes_risk(&[0.5, 0.4], &[0.5, 0.5]), Err(OracleError::NotADistribution(_))));
    }

    #[test]
    fn mixing_gap_oracles() {
        let point = two_state(0.2, 0.2);
        for t in [0, 1, 5] {
            assert_eq!(conditional_mixing_gap(&point, 0, &[0], t).unwrap().0, 0.0);
        }
        // Well {0,1} with internal block [[a, a], [a, a]], a = 0.4.
        let c = FiniteChain::new(
            vec![
                vec![0.4, 0.4, 0.2],
                vec![0.4, 0.4, 0.2],
                vec![0.0, 0.0, 1.0],
            ],
            vec![vec![0, 1], vec![2]],
            vec![vec![0, 1], vec![2]],
        )
        .unwrap();
        let (eps0, pi) = conditional_mixing_gap(&c, 0, &[0, 1], 0).unwrap();
        assert_eq!(pi, vec![0.5, 0.5]);
        assert_eq!(eps0, 0.5);
        for t in 1..5 {
            assert_eq!(conditional_mixing_gap(&c, 0, &[0, 1], t).unwrap().0, 0.0);
        }
    }

    #[test]
    fn mixing_gap_is_non_increasing_for_reversible_blocks() {
        // Symmetric within-well blocks are reversible.
        for leak in [0.0, 1e-3, 0.05] {
            let c = nearly_reducible_chain(leak);
            let mut prev = f64::INFINITY;
            for t in 1..=50 {
                let (eps, _) = conditional_mixing_gap(&c, 0, &c.cores[0], t).unwrap();
                assert!(eps <= prev + 1e-15, "leak {leak}, t {t}: {eps} > {prev}");
                prev = eps;
            }
        }
    }

    #[test]
    fn non_primitive_wells_are_rejected() {
        let periodic = FiniteChain::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0, 1]],
            vec![vec![0]],
        )
        .unwrap();
        assert_eq!(quasi_stationary(&periodic, 0), Err(OracleError::NoUniqueQsd(0)));
        let report = verify_identifiability(&periodic, 1, 2).unwrap();
        assert!(!report.assumption_violations.is_empty());
    }

    #[test]
    fn qsd_is_a_left_eigenvector() {
        let mut rng = rng_from_seed(8);
        let c = random_metastable_chain(9, 3, 0.1, &mut rng);
        for w in 0..3 {
            let pi = quasi_stationary(&c, w).unwrap();
            let q = c.block(&c.wells[w]);
            let pq = vec_mat(&pi, &q);
            let lambda: f64 = pq.iter().sum();
            for (a, b) in pq.iter().zip(&pi) {
                assert!((a - lambda * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn malformed_chains() {
        assert!(FiniteChain::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]], vec![vec![0, 1]], vec![vec![0]]).is_err());
        assert!(FiniteChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0]], vec![vec![0]]).is_err());
        assert!(FiniteChain::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0], vec![1]],
            vec![vec![1], vec![1]]
        )
        .is_err());
        assert!(FiniteChain::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0, 1], vec![1]],
            vec![vec![0], vec![1]]
        )
        .is_err());
    }

    #[test]
    fn reducible_blocks_and_identity() {
        let closed = nearly_reducible_chain(0.0);
        let r = verify_identifiability(&closed, 10, 40).unwrap();
        assert_eq!(r.delta, 0.0);
        assert!(r.holds());
        for p in r.pairs.iter().filter(|p| !p.same_well) {
            assert_eq!(p.risk, 0.0);
        }
        for p in r.pairs.iter().filter(|p| p.same_well) {
            assert!(p.risk >= 0.5 - r.epsilon);
        }

        let n = 4;
        let eye: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let wells: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let id = FiniteChain::new(eye, wells.clone(), wells).unwrap();
        let r = verify_identifiability(&id, 3, 7).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.epsilon, 0.0);
        assert!(r.pairs.iter().all(|p| p.risk == 0.0 && !p.same_well));
        assert!(r.holds());
    }

    #[test]
    fn fixture_json() {
        let text = r#"{"transition":[[0.9,0.1],[0.1,0.9]],"wells":[[0],[1]],"cores":[[0],[1]],"t_star":2}"#;
        let f = ChainFixture::from_json(text).unwrap();
        assert_eq!(f.t_star, Some(2));
        assert_eq!(f.horizon, None);
        assert!(ChainFixture::from_json(r#"{"transition":[[0.9]],"wells":[[0]],"cores":[[0]]}"#).is_err());
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, len).prop_map(|mut v| {
            v[0] += 1e-3;
            let total: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= total);
            v
        })
    }

    proptest! {
        #[test]
        fn bayes_risk_is_a_symmetric_half_bounded_value(
            (p, q) in (1usize..10).prop_flat_map(|n| (distribution(n), distribution(n)))
        ) {
            let r = bayes_risk(&p, &q).unwrap();
            prop_assert!((0.0..=0.5).contains(&r));
            prop_assert_eq!(r, bayes_risk(&q, &p).unwrap());
            prop_assert!((r - 0.5 * (1.0 - total_variation(&p, &q))).abs() < 1e-12);
        }

        #[test]
        fn bounds_hold_whenever_the_hypotheses_do(
            seed in any::<u64>(),
            states in 2usize..=12,
            wells in 1usize..=4,
            leak in 1e-5f64..1e-2,
            t_star in 5usize..40,
            extra in 1usize..40,
        ) {
            let mut rng = rng_from_seed(seed);
            let chain = random_metastable_chain(states, wells.min(states), leak, &mut rng);
            let report = verify_identifiability(&chain, t_star, t_star + extra).unwrap();
            prop_assume!(report.assumption_violations.is_empty());
            prop_assert!(report.holds(), "{:?}", report);
        }
    }
}
